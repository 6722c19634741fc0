#include "codecot/refine_loop.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

namespace codecot {
namespace {

RefinementStep ask(const Task& task, const Conversation& conv, const PipelineContext& ctx,
                   const GenerationArtifact* prior, bool refine_tests) {
  RefinementStep step;
  step.fingerprint = request_fingerprint(ctx.model, conv);
  std::string response = ctx.client.complete(ctx.model, conv);
  try {
    if (prior && !prior->tests.empty()) {
      step.artifact = parse_repair(response, task.entry_point, *prior, refine_tests);
    } else {
      step.artifact = parse_generation(response, task.entry_point);
    }
  } catch (const ParseError& e) {
    step.parse_error = e.what();
  } catch (const PreconditionError&) {
    step.parse_error = ParseError(ParseError::Kind::no_code_block, "your response contained no code block").what();
  }
  return step;
}

}  // namespace

std::string_view to_string(LoopMode mode) {
  switch (mode) {
    case LoopMode::coder:
      return "coder";
    case LoopMode::coder_cot:
      return "coder_cot";
    case LoopMode::coder_selfexam:
      return "coder_selfexam";
    case LoopMode::codecot:
      return "codecot";
  }
  return "codecot";
}

LoopMode parse_loop_mode(std::string_view name) {
  if (name == "coder") return LoopMode::coder;
  if (name == "coder_cot") return LoopMode::coder_cot;
  if (name == "coder_selfexam") return LoopMode::coder_selfexam;
  if (name == "codecot") return LoopMode::codecot;
  throw UsageError("unknown mode '" + std::string(name) + "' (expected coder, coder_cot, coder_selfexam or codecot)");
}

bool uses_cot(LoopMode mode) { return mode == LoopMode::coder_cot || mode == LoopMode::codecot; }

bool uses_self_examination(LoopMode mode) {
  return mode == LoopMode::coder_selfexam || mode == LoopMode::codecot;
}

void LoopConfig::validate() const {
  if (num_tests < 1) throw UsageError("num_tests must be at least 1");
  if (refine_tests && !uses_self_examination(mode)) {
    throw UsageError("refine_tests requires a self-examination mode");
  }
}

nlohmann::json LoopConfig::to_json() const {
  return nlohmann::json{
      {"max_steps", max_steps},
      {"mode", to_string(mode)},
      {"refine_tests", refine_tests},
      {"num_tests", num_tests},
  };
}

LoopConfig LoopConfig::from_json(const nlohmann::json& j) {
  LoopConfig c;
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.mode = parse_loop_mode(j.at("mode").get<std::string>());
  c.refine_tests = j.at("refine_tests").get<bool>();
  c.num_tests = j.at("num_tests").get<std::size_t>();
  return c;
}

RefinementTrace run_task(const Task& task, const LoopConfig& cfg, const PipelineContext& ctx) {
  cfg.validate();
  RefinementTrace trace;
  trace.task_id = task.task_id;

  const PromptMode prompt_mode = uses_cot(cfg.mode) ? PromptMode::cot : PromptMode::plain;
  trace.steps.push_back(
      ask(task, ctx.prompts.build_generation_prompt(task, prompt_mode, cfg.num_tests), ctx, nullptr, false));

  auto finish = [&trace](Termination why) {
    trace.terminated_by = why;
    if (const GenerationArtifact* a = trace.last_artifact()) {
      trace.final_code = a->code;
      trace.final_tests = a->tests;
    }
    return trace;
  };

  if (!uses_self_examination(cfg.mode)) {
    return finish(trace.steps.back().artifact ? Termination::step_budget_exhausted : Termination::parse_failure);
  }

  std::size_t repairs = 0;
  while (true) {
    RefinementStep& current = trace.steps.back();
    if (current.artifact) {
      if (current.artifact->tests.empty()) return finish(Termination::step_budget_exhausted);
      current.outcome = run_candidate(ctx.executor, *current.artifact, task.entry_point, ctx.backend);
      if (current.outcome->passed()) return finish(Termination::all_tests_passed);
    }
    if (repairs >= cfg.max_steps) {
      return finish(current.artifact ? Termination::step_budget_exhausted : Termination::parse_failure);
    }
    Conversation conv = ctx.prompts.build_repair_prompt(task, trace, cfg.refine_tests, cfg.num_tests);
    RefinementStep next = ask(task, conv, ctx, trace.last_artifact(), cfg.refine_tests);
    trace.steps.push_back(std::move(next));
    ++repairs;
  }
}

void run_tasks(const std::vector<const Task*>& tasks, const LoopConfig& cfg, const PipelineContext& ctx,
               std::size_t jobs, const std::function<void(TaskRun&&)>& on_done) {
  cfg.validate();
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::map<std::size_t, TaskRun> pending;
  std::size_t emitted = 0;

  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      TaskRun run;
      run.index = i;
      run.task_id = tasks[i]->task_id;
      try {
        run.result = run_task(*tasks[i], cfg, ctx);
      } catch (const std::exception& e) {
        run.result = std::string(e.what());
        run.error = std::current_exception();
      }
      std::lock_guard lock(mutex);
      pending.emplace(i, std::move(run));
      while (!pending.empty() && pending.begin()->first == emitted) {
        on_done(std::move(pending.begin()->second));
        pending.erase(pending.begin());
        ++emitted;
      }
    }
  };

  std::size_t n = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
}

std::vector<RefinementTrace> run_dataset(const Dataset& dataset, const LoopConfig& cfg, const PipelineContext& ctx,
                                         std::size_t jobs) {
  std::vector<const Task*> tasks;
  for (const auto& t : dataset.tasks) tasks.push_back(&t);
  std::vector<RefinementTrace> traces;
  std::exception_ptr first_error;
  run_tasks(tasks, cfg, ctx, jobs, [&](TaskRun&& run) {
    if (run.ok()) {
      traces.push_back(std::get<RefinementTrace>(std::move(run.result)));
    } else if (!first_error) {
      first_error = run.error;
    }
  });
  if (first_error) std::rethrow_exception(first_error);
  return traces;
}

}  // namespace codecot
