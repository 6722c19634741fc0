#include "codecot/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace codecot {
namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  std::size_t n = std::max<std::size_t>(1, std::min(jobs, count));
  if (n == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::string format_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", rate);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

double pass_at_k(std::uint64_t n, std::uint64_t c, std::uint64_t k) {
  if (c > n || k < 1 || k > n) {
    throw PreconditionError("pass_at_k: need 0 <= c <= n and 1 <= k <= n (n=" + std::to_string(n) +
                            ", c=" + std::to_string(c) + ", k=" + std::to_string(k) + ")");
  }
  if (n - c < k) return 1.0;
  if (k == 1) return static_cast<double>(c) / static_cast<double>(n);
  double none_correct = 1.0;
  for (std::uint64_t i = n - c + 1; i <= n; ++i) {
    none_correct *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  }
  return 1.0 - none_correct;
}

double ErrorDistribution::assert_percent() const {
  if (failing() == 0) return 0.0;
  return 100.0 * static_cast<double>(assert_errors) / static_cast<double>(failing());
}

double ErrorDistribution::syntax_percent() const {
  if (failing() == 0) return 0.0;
  return 100.0 - assert_percent();
}

nlohmann::json ErrorDistribution::to_json() const {
  return nlohmann::json{
      {"failing_tasks", failing()},
      {"AssertError", {{"count", assert_errors}, {"percent", assert_percent()}}},
      {"SyntaxError", {{"count", syntax_errors}, {"percent", syntax_percent()}}},
  };
}

nlohmann::json TestValidity::to_json() const {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& [id, ok] : per_task) tasks.push_back({{"task_id", id}, {"valid", ok}});
  return nlohmann::json{{"valid", valid}, {"total", per_task.size()}, {"rate", rate}, {"tasks", std::move(tasks)}};
}

std::string format_percent(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", percent);
  return buf;
}

EvalReport score_run(const std::vector<RefinementTrace>& traces, const Dataset& dataset, const ExecutorSpec& spec,
                     ExecutionBackend& backend, const ScoreOptions& options) {
  if (traces.empty()) throw PreconditionError("score_run: empty run");
  for (const auto& t : traces) {
    if (!dataset.find(t.task_id)) throw Error("unknown task_id '" + t.task_id + "' for dataset " + dataset.name);
  }

  std::vector<ExecutionOutcome> outcomes(traces.size());
  parallel_for(traces.size(), options.jobs, [&](std::size_t i) {
    const RefinementTrace& t = traces[i];
    if (t.final_code.empty()) {
      outcomes[i].klass = OutcomeClass::syntax_error;
      outcomes[i].diagnostic = "no code";
      return;
    }
    outcomes[i] = run_reference(spec, *dataset.find(t.task_id), t.final_code, backend);
  });

  EvalReport report;
  report.dataset_name = dataset.name;
  // Group samples by task, in dataset order.
  std::map<std::string, std::size_t, std::less<>> slot;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    auto [it, inserted] = slot.try_emplace(traces[i].task_id, report.tasks.size());
    if (inserted) {
      TaskResult r;
      r.task_id = traces[i].task_id;
      r.final_outcome_class = outcomes[i].klass;
      r.diagnostic = outcomes[i].diagnostic;
      report.tasks.push_back(std::move(r));
    }
    TaskResult& r = report.tasks[it->second];
    ++r.n_samples;
    r.n_correct += outcomes[i].passed();
  }
  std::vector<std::size_t> order;
  for (const auto& task : dataset.tasks) {
    if (auto it = slot.find(task.task_id); it != slot.end()) order.push_back(it->second);
  }
  std::vector<TaskResult> ordered;
  for (std::size_t i : order) ordered.push_back(std::move(report.tasks[i]));
  report.tasks = std::move(ordered);

  std::size_t min_samples = report.tasks.front().n_samples;
  for (const auto& r : report.tasks) min_samples = std::min(min_samples, r.n_samples);
  std::vector<std::size_t> ks = options.ks;
  if (std::find(ks.begin(), ks.end(), 1) == ks.end()) ks.push_back(1);
  for (std::size_t k : ks) {
    if (k < 1 || k > min_samples) continue;
    double sum = 0.0;
    for (const auto& r : report.tasks) sum += pass_at_k(r.n_samples, r.n_correct, k);
    report.pass_at_k[k] = sum / static_cast<double>(report.tasks.size());
  }

  for (const auto& r : report.tasks) {
    if (r.final_outcome_class == OutcomeClass::assert_error) ++report.errors.assert_errors;
    if (r.final_outcome_class == OutcomeClass::syntax_error) ++report.errors.syntax_errors;
  }
  return report;
}

TestValidity validate_tests(const std::vector<RefinementTrace>& traces, const Dataset& dataset,
                            const ExecutorSpec& spec, ExecutionBackend& backend, std::size_t jobs) {
  // First sample per task.
  std::vector<const RefinementTrace*> firsts;
  std::map<std::string, bool, std::less<>> seen;
  for (const auto& t : traces) {
    if (!dataset.find(t.task_id)) throw Error("unknown task_id '" + t.task_id + "' for dataset " + dataset.name);
    if (seen.emplace(t.task_id, true).second) firsts.push_back(&t);
  }

  std::vector<char> valid(firsts.size(), 0);
  parallel_for(firsts.size(), jobs, [&](std::size_t i) {
    const RefinementTrace& t = *firsts[i];
    if (t.final_tests.empty()) return;
    const Task& task = *dataset.find(t.task_id);
    valid[i] = run_tests(spec, canonical_program(task), t.final_tests, task.entry_point, backend).passed();
  });

  TestValidity out;
  for (std::size_t i = 0; i < firsts.size(); ++i) {
    out.per_task.emplace_back(firsts[i]->task_id, valid[i] != 0);
    out.valid += valid[i] != 0;
  }
  out.rate = firsts.empty() ? 0.0 : static_cast<double>(out.valid) / static_cast<double>(firsts.size());
  return out;
}

std::vector<SweepRow> sweep_steps(const Dataset& dataset, const LoopConfig& base, const std::vector<std::size_t>& steps,
                                  const PipelineContext& ctx, std::size_t jobs) {
  if (steps.empty()) throw PreconditionError("sweep_steps: no step values");
  if (!std::is_sorted(steps.begin(), steps.end())) throw PreconditionError("sweep_steps: step values must ascend");
  std::vector<SweepRow> rows;
  for (std::size_t s : steps) {
    LoopConfig cfg = base;
    cfg.max_steps = s;
    auto traces = run_dataset(dataset, cfg, ctx, jobs);
    ScoreOptions opts;
    opts.jobs = jobs;
    EvalReport report = score_run(traces, dataset, ctx.executor, ctx.backend, opts);
    rows.push_back(SweepRow{s, report.pass_at_k.at(1), report.errors});
  }
  return rows;
}

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"steps", r.steps}, {"pass@1", r.pass_at_1}, {"errors", r.errors.to_json()}});
  }
  return out;
}

std::string render_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << pad("steps", 7) << pad("pass@1", 9) << pad("AssertError", 13) << "SyntaxError\n";
  for (const auto& r : rows) {
    bool any = r.errors.failing() > 0;
    os << pad(std::to_string(r.steps), 7) << pad(format_rate(r.pass_at_1), 9)
       << pad(any ? format_percent(r.errors.assert_percent()) : "-", 13)
       << (any ? format_percent(r.errors.syntax_percent()) : "-") << '\n';
  }
  return os.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json pk = nlohmann::json::object();
  for (const auto& [k, v] : pass_at_k) pk[std::to_string(k)] = v;
  nlohmann::json per_task = nlohmann::json::array();
  for (const auto& r : tasks) {
    per_task.push_back({{"task_id", r.task_id},
                        {"n_samples", r.n_samples},
                        {"n_correct", r.n_correct},
                        {"final_outcome_class", to_string(r.final_outcome_class)},
                        {"diagnostic", r.diagnostic}});
  }
  nlohmann::json j{
      {"dataset", dataset_name},
      {"dataset_sha256", dataset_hash},
      {"model", model_name},
      {"config", config},
      {"pass_at_k", std::move(pk)},
      {"error_distribution", errors.to_json()},
      {"tasks", std::move(per_task)},
  };
  j["test_validity"] = validity ? validity->to_json() : nlohmann::json(nullptr);
  j["sweep"] = sweep.empty() ? nlohmann::json(nullptr) : sweep_to_json(sweep);
  return j;
}

std::string EvalReport::render_text() const {
  std::ostringstream os;
  os << "dataset  " << dataset_name << '\n';
  if (!model_name.empty()) os << "model    " << model_name << '\n';
  os << "tasks    " << tasks.size() << "\n\n";

  os << pad("metric", 10) << "value\n";
  for (const auto& [k, v] : pass_at_k) os << pad("pass@" + std::to_string(k), 10) << format_rate(v) << '\n';
  if (validity) {
    os << pad("validity", 10) << format_rate(validity->rate) << " (" << validity->valid << '/'
       << validity->per_task.size() << ")\n";
  }

  os << "\nerror type distribution (" << errors.failing() << " failing)\n";
  bool any = errors.failing() > 0;
  os << pad("AssertError", 13) << pad("SyntaxError", 13) << '\n';
  os << pad(any ? format_percent(errors.assert_percent()) : "-", 13)
     << pad(any ? format_percent(errors.syntax_percent()) : "-", 13) << '\n';

  if (!sweep.empty()) os << "\nrefine steps\n" << render_sweep_table(sweep);
  return os.str();
}

}  // namespace codecot
