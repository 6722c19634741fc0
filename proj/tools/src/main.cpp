#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "codecot/commands.hpp"
#include "codecot/evaluator.hpp"

namespace {

using namespace codecot;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitEnvironment = 2;
constexpr int kExitPartial = 3;

const std::vector<std::string> kModes{"coder", "coder_cot", "coder_selfexam", "codecot"};

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

struct ExecutorFlags {
  double time_limit_s = 10.0;
  std::string runtime = "python3 -m codecot_shim";

  void add(CLI::App* app) {
    app->add_option("--time-limit", time_limit_s, "Seconds allowed per execution")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--runtime", runtime, "Command that runs the test runner (reads the payload on stdin)")
        ->capture_default_str();
  }

  ExecutorSpec spec() const {
    ExecutorSpec e;
    e.runtime_command = split_words(runtime);
    e.time_limit = std::chrono::milliseconds(static_cast<long long>(time_limit_s * 1000));
    return e;
  }
};

struct RunFlags {
  std::string dataset;
  std::string format = "humaneval";
  std::string model = ModelConfig{}.model_name;
  std::string endpoint = ModelConfig{}.endpoint_url;
  double temperature = 0.0;
  std::size_t max_tokens = ModelConfig{}.max_tokens;
  double requests_per_second = ModelConfig{}.requests_per_second;
  std::size_t max_retries = ModelConfig{}.max_retries;
  std::size_t max_steps = 5;
  std::size_t num_tests = 5;
  std::string mode = "codecot";
  bool refine_tests = false;
  std::string client = "live";
  std::string cassette;
  std::size_t jobs = 1;
  std::string out;
  std::string templates;
  ExecutorFlags executor;

  void add(CLI::App* app, bool with_mode) {
    app->add_option("--dataset", dataset, "Task file (JSON lines)")->required();
    app->add_option("--format", format, "Dataset schema")
        ->capture_default_str()
        ->check(CLI::IsMember({"humaneval", "mbpp"}));
    app->add_option("--model", model, "Model name sent to the endpoint")->capture_default_str();
    app->add_option("--endpoint", endpoint, "Chat-completions URL")->capture_default_str();
    app->add_option("--temperature", temperature)->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--max-tokens", max_tokens)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--requests-per-second", requests_per_second, "Client rate limit")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--max-retries", max_retries, "Retries for transient HTTP failures")->capture_default_str();
    app->add_option("--max-steps", max_steps, "Repair iterations after the first generation")->capture_default_str();
    app->add_option("--num-tests", num_tests, "Test cases requested per task")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    if (with_mode) {
      app->add_option("--mode", mode)->capture_default_str()->check(CLI::IsMember(kModes));
    }
    app->add_flag("--refine-tests", refine_tests, "Let repairs correct the generated tests too");
    app->add_option("--client", client, "Model client")
        ->capture_default_str()
        ->check(CLI::IsMember({"live", "record", "replay"}));
    app->add_option("--cassette", cassette, "Recorded exchanges for record/replay");
    app->add_option("--jobs", jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--templates", templates, "Prompt template directory (default: built-in v1)");
    executor.add(app);
  }

  RunManifest manifest() const {
    RunManifest m;
    m.dataset_path = dataset;
    m.format = parse_dataset_format(format);
    m.model.model_name = model;
    m.model.endpoint_url = endpoint;
    m.model.temperature = temperature;
    m.model.max_tokens = max_tokens;
    m.model.requests_per_second = requests_per_second;
    m.model.max_retries = max_retries;
    m.loop.max_steps = max_steps;
    m.loop.num_tests = num_tests;
    m.loop.mode = parse_loop_mode(mode);
    m.loop.refine_tests = refine_tests;
    m.executor = executor.spec();
    m.client_mode = parse_client_mode(client);
    m.cassette_path = cassette;
    m.template_dir = templates;
    m.output_dir = out;
    m.jobs = jobs;
    return m;
  }
};

struct EvalFlags {
  std::string traces;
  std::string dataset;
  std::string format = "humaneval";
  std::vector<std::size_t> sweep;
  bool no_validity = false;
  std::string manifest;
  std::string report;
  std::size_t jobs = 1;
  bool json = false;
  ExecutorFlags executor;

  void add(CLI::App* app) {
    app->add_option("--traces", traces, "traces.jsonl written by `run`")->required();
    app->add_option("--dataset", dataset, "Task file the traces were produced from")->required();
    app->add_option("--format", format)->capture_default_str()->check(CLI::IsMember({"humaneval", "mbpp"}));
    app->add_option("--steps-sweep", sweep, "Re-run the recorded configuration at these max-steps values, e.g. 1,2,3")
        ->delimiter(',');
    app->add_flag("--no-validity", no_validity, "Skip running generated tests against canonical solutions");
    app->add_option("--manifest", manifest, "Run manifest (default: manifest.json beside the traces)");
    app->add_option("--report", report, "Also write the report as JSON to this path");
    app->add_option("--jobs", jobs)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_flag("--json", json, "Print JSON instead of tables");
    executor.add(app);
  }
};

int do_run(const RunFlags& f) {
  RunManifest m = f.manifest();
  RunServices services;
  if (uses_self_examination(m.loop.mode)) {
    services.backend = std::make_shared<SubprocessBackend>();
    preflight(m.executor, *services.backend);
  }
  RunSummary s = cmd_run(m, services);
  std::printf("run %s: %zu completed, %zu skipped, %zu errored\ntraces: %s\n", s.run_id.c_str(), s.completed,
              s.skipped, s.errored, s.traces_path.string().c_str());
  if (s.partial()) {
    std::fprintf(stderr, "some tasks failed; see %s\n", (m.output_dir / kErrorsFile).string().c_str());
    return kExitPartial;
  }
  return kExitOk;
}

int do_eval(const EvalFlags& f) {
  EvalRequest req;
  req.traces_path = f.traces;
  req.dataset_path = f.dataset;
  req.format = parse_dataset_format(f.format);
  req.executor = f.executor.spec();
  req.test_validity = !f.no_validity;
  req.sweep_steps = f.sweep;
  req.manifest_path = f.manifest;
  req.report_path = f.report;
  req.jobs = f.jobs;
  RunServices services;
  services.backend = std::make_shared<SubprocessBackend>();
  preflight(req.executor, *services.backend);
  EvalReport report = cmd_eval(req, services);
  std::cout << (f.json ? report.to_json().dump(2) + "\n" : report.render_text());
  return kExitOk;
}

int do_ablate(const RunFlags& f, const std::vector<std::string>& modes, bool json) {
  RunManifest base = f.manifest();
  std::vector<LoopMode> parsed;
  for (const auto& m : modes) parsed.push_back(parse_loop_mode(m));
  RunServices services;
  services.backend = std::make_shared<SubprocessBackend>();
  preflight(base.executor, *services.backend);
  auto rows = cmd_ablate(base, parsed, services);
  std::cout << (json ? ablation_to_json(rows).dump(2) + "\n" : render_ablation_table(rows));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate, self-test and repair code with a chat model; score the results."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "codecot 0.1.0");

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run the pipeline over a dataset and write traces");
  run_flags.add(run, true);

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Score traces against the dataset's hidden tests");
  eval_flags.add(eval);

  RunFlags ablate_flags;
  std::vector<std::string> modes = kModes;
  bool ablate_json = false;
  auto* ablate = app.add_subcommand("ablate", "Run and score several modes side by side");
  ablate_flags.add(ablate, false);
  ablate->add_option("--modes", modes, "Modes to compare")
      ->delimiter(',')
      ->capture_default_str()
      ->check(CLI::IsMember(kModes));
  ablate->add_flag("--json", ablate_json, "Print JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed()) return do_run(run_flags);
    if (eval->parsed()) return do_eval(eval_flags);
    if (ablate->parsed()) return do_ablate(ablate_flags, modes, ablate_json);
  } catch (const EnvironmentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitEnvironment;
  } catch (const PartialRunError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPartial;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
