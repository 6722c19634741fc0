#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "codecot/dataset.hpp"
#include "codecot/error.hpp"
#include "codecot/response_parser.hpp"

namespace codecot {

// Two-bucket failure taxonomy: assertion failures vs. everything else.
// The "syntax_error" bucket holds every non-assert failure, including
// timeouts, import errors and runtime exceptions.
enum class OutcomeClass { pass, assert_error, syntax_error };

std::string_view to_string(OutcomeClass klass);
OutcomeClass parse_outcome_class(std::string_view name);

struct ExecutionOutcome {
  OutcomeClass klass = OutcomeClass::pass;
  std::string diagnostic;  // empty iff klass == pass
  std::optional<std::size_t> failed_test_index;  // only for assert_error
  std::chrono::milliseconds wall_time{0};

  bool passed() const { return klass == OutcomeClass::pass; }
};

struct ExecutorSpec {
  std::vector<std::string> runtime_command{"python3", "-m", "codecot_shim"};
  std::chrono::milliseconds time_limit{10'000};
  std::size_t output_cap = 64 * 1024;

  void validate() const;
};

// Document delivered to the runner shim on stdin.
struct ShimPayload {
  std::string candidate_source;
  std::vector<std::string> test_statements;
  std::string entry_point;

  nlohmann::json to_json() const;
};

// Raw result of one execution, before classification.
struct BackendResult {
  bool timed_out = false;
  int exit_code = 0;
  std::string stdout_text;
  std::string stderr_text;
  std::chrono::milliseconds wall_time{0};
};

// The runtime command cannot be executed at all. This is an environment
// fault and never a property of the candidate.
class BackendUnavailable : public EnvironmentError {
 public:
  using EnvironmentError::EnvironmentError;
};

class ExecutionBackend {
 public:
  virtual ~ExecutionBackend() = default;
  virtual BackendResult execute(const ExecutorSpec& spec, const ShimPayload& payload) = 0;
};

// Runs `spec.runtime_command` in a fresh process group inside a fresh
// temporary directory, writes the payload JSON to its stdin and collects
// stdout/stderr. The process group is killed at the time limit. At most
// `max_parallel` executions run at once.
class SubprocessBackend final : public ExecutionBackend {
 public:
  explicit SubprocessBackend(std::ptrdiff_t max_parallel = default_parallelism());

  BackendResult execute(const ExecutorSpec& spec, const ShimPayload& payload) override;

  static std::ptrdiff_t default_parallelism();

 private:
  std::counting_semaphore<> slots_;
};

// Keeps the last `cap` bytes of `text`.
std::string tail_cap(std::string text, std::size_t cap);

// Maps a backend result onto the outcome taxonomy.
//  * timeout                         -> syntax_error, "timeout"
//  * {"status":"pass"} and exit 0    -> pass
//  * {"status":"assert", ...}        -> assert_error with test_index
//  * {"status":"error", ...}         -> syntax_error
//  * anything else                   -> syntax_error with the raw output
ExecutionOutcome classify_result(const BackendResult& result, std::size_t output_cap);

ExecutionOutcome run_candidate(const ExecutorSpec& spec, const GenerationArtifact& artifact,
                               std::string_view entry_point, ExecutionBackend& backend);

// Runs `code` against the task's hidden reference test.
ExecutionOutcome run_reference(const ExecutorSpec& spec, const Task& task, const std::string& code,
                               ExecutionBackend& backend);

// Runs a known-good candidate through the runner. Throws BackendUnavailable
// unless it passes, which catches a runtime that starts but cannot speak the
// protocol (a missing runner module, say).
void preflight(const ExecutorSpec& spec, ExecutionBackend& backend);

// Runs arbitrary tests against `code`; used for generated-test validity.
ExecutionOutcome run_tests(const ExecutorSpec& spec, const std::string& code, const std::vector<std::string>& tests,
                           std::string_view entry_point, ExecutionBackend& backend);

}  // namespace codecot
