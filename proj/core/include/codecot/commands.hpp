#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "codecot/dataset.hpp"
#include "codecot/evaluator.hpp"
#include "codecot/execution.hpp"
#include "codecot/llm_client.hpp"
#include "codecot/refine_loop.hpp"

namespace codecot {

enum class ClientMode { live, record, replay };

std::string_view to_string(ClientMode mode);
ClientMode parse_client_mode(std::string_view name);

// Everything that determines a run. Written to <output_dir>/manifest.json
// before the first model call.
struct RunManifest {
  std::string run_id;  // derived from every other field except output_dir and jobs
  std::filesystem::path dataset_path;
  DatasetFormat format = DatasetFormat::humaneval;
  std::string dataset_sha256;
  ModelConfig model;
  LoopConfig loop;
  ExecutorSpec executor;
  ClientMode client_mode = ClientMode::live;
  std::filesystem::path cassette_path;
  std::filesystem::path template_dir;  // empty selects the built-in set
  std::string template_version;
  std::string template_sha256;
  std::filesystem::path output_dir;
  std::size_t jobs = 1;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// Hooks for the parts of a run that touch the outside world.
struct RunServices {
  // Builds the upstream client for live and record modes. Defaults to
  // HttpChatClient::from_environment().
  std::function<std::unique_ptr<ChatClient>()> live_client;
  // Execution backend. Defaults to a SubprocessBackend.
  std::shared_ptr<ExecutionBackend> backend;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTracesFile = "traces.jsonl";
inline constexpr const char* kErrorsFile = "errors.jsonl";

struct RunSummary {
  std::string run_id;
  std::size_t completed = 0;  // traces written by this invocation
  std::size_t skipped = 0;    // already present from an earlier invocation
  std::size_t errored = 0;
  std::filesystem::path traces_path;

  bool partial() const { return errored > 0; }
};

// Runs every task not already in <output_dir>/traces.jsonl. Traces are
// appended in dataset order as soon as each prefix of tasks completes, so an
// interrupted run can be resumed by invoking it again. A task that fails is
// logged to errors.jsonl and retried on the next invocation.
RunSummary cmd_run(RunManifest manifest, const RunServices& services = {});

// Fills dataset hash, template hash/version and run_id, and validates the
// configuration. Called by cmd_run.
void finalize_manifest(RunManifest& manifest);

// Reads a trace file. A trailing line cut short by a crash is ignored.
std::vector<RefinementTrace> load_traces(const std::filesystem::path& path);

struct EvalRequest {
  std::filesystem::path traces_path;
  std::filesystem::path dataset_path;
  DatasetFormat format = DatasetFormat::humaneval;
  ExecutorSpec executor;
  bool test_validity = true;
  // Non-empty: re-run the manifest's configuration at each max_steps value.
  std::vector<std::size_t> sweep_steps;
  // Defaults to manifest.json beside the traces file.
  std::filesystem::path manifest_path;
  std::filesystem::path report_path;  // empty: no JSON report written
  std::size_t jobs = 1;
};

EvalReport cmd_eval(const EvalRequest& request, const RunServices& services = {});

// Some tasks of a run errored; their records are in errors.jsonl.
class PartialRunError : public Error {
 public:
  using Error::Error;
};

struct AblationRow {
  LoopMode mode = LoopMode::codecot;
  double pass_at_1 = 0.0;
  ErrorDistribution errors;
  std::size_t client_calls = 0;
  std::size_t executions = 0;  // self-examination runs, excluding scoring
};

// One run and one scoring pass per mode, each in <output_dir>/<mode>/.
// Throws PartialRunError if any task of any mode errored.
std::vector<AblationRow> cmd_ablate(const RunManifest& base, const std::vector<LoopMode>& modes,
                                    const RunServices& services = {});

std::string render_ablation_table(const std::vector<AblationRow>& rows);
nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);

}  // namespace codecot
