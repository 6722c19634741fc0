#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codecot/dataset.hpp"
#include "codecot/execution.hpp"
#include "codecot/refine_loop.hpp"
#include "codecot/trace.hpp"

namespace codecot {

// Unbiased pass@k: the probability that at least one of k samples drawn
// without replacement from n (c of them correct) is correct,
//   1 - C(n-c, k) / C(n, k) = 1 - prod_{i=n-c+1}^{n} (1 - k/i).
// Requires 0 <= c <= n and 1 <= k <= n.
double pass_at_k(std::uint64_t n, std::uint64_t c, std::uint64_t k);

struct TaskResult {
  std::string task_id;
  std::size_t n_samples = 0;
  std::size_t n_correct = 0;
  // Reference-run class of the first sample.
  OutcomeClass final_outcome_class = OutcomeClass::pass;
  std::string diagnostic;
};

// Failing tasks split into the two buckets.
struct ErrorDistribution {
  std::size_t assert_errors = 0;
  std::size_t syntax_errors = 0;

  std::size_t failing() const { return assert_errors + syntax_errors; }
  // Both 0 when nothing failed. Otherwise they sum to exactly 100.
  double assert_percent() const;
  double syntax_percent() const;

  nlohmann::json to_json() const;
};

struct TestValidity {
  // (task_id, generated tests all pass on the canonical solution)
  std::vector<std::pair<std::string, bool>> per_task;
  std::size_t valid = 0;
  double rate = 0.0;

  nlohmann::json to_json() const;
};

struct SweepRow {
  std::size_t steps = 0;
  double pass_at_1 = 0.0;
  ErrorDistribution errors;
};

struct EvalReport {
  std::string dataset_name;
  std::string dataset_hash;
  std::string model_name;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::size_t, double> pass_at_k;
  ErrorDistribution errors;
  std::vector<TaskResult> tasks;
  std::optional<TestValidity> validity;
  std::vector<SweepRow> sweep;

  nlohmann::json to_json() const;
  // Aligned plain-text tables. Percentages carry one decimal.
  std::string render_text() const;
};

struct ScoreOptions {
  // pass@k values beyond 1 are reported only when every task has >= k samples.
  std::vector<std::size_t> ks{1, 10, 100};
  std::size_t jobs = 1;
};

// Runs every trace's final code against its task's hidden reference test.
// Traces sharing a task_id are samples of the same task. A trace without
// final code counts as a SyntaxError-bucket failure.
EvalReport score_run(const std::vector<RefinementTrace>& traces, const Dataset& dataset, const ExecutorSpec& spec,
                     ExecutionBackend& backend, const ScoreOptions& options = {});

// Runs each task's final generated tests against its canonical solution.
// A task without generated tests counts as invalid.
TestValidity validate_tests(const std::vector<RefinementTrace>& traces, const Dataset& dataset,
                            const ExecutorSpec& spec, ExecutionBackend& backend, std::size_t jobs = 1);

// One full run and score per max_steps value.
std::vector<SweepRow> sweep_steps(const Dataset& dataset, const LoopConfig& base, const std::vector<std::size_t>& steps,
                                  const PipelineContext& ctx, std::size_t jobs = 1);

std::string render_sweep_table(const std::vector<SweepRow>& rows);
nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);

// "98.0%"
std::string format_percent(double percent);

}  // namespace codecot
