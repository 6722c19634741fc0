#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "codecot/dataset.hpp"
#include "codecot/execution.hpp"
#include "codecot/llm_client.hpp"
#include "codecot/prompting.hpp"
#include "codecot/trace.hpp"

namespace codecot {

// coder:          plain prompt, single generation
// coder_cot:      CoT prompt, single generation
// coder_selfexam: plain prompt, then test-and-repair
// codecot:        CoT prompt, then test-and-repair
enum class LoopMode { coder, coder_cot, coder_selfexam, codecot };

std::string_view to_string(LoopMode mode);
LoopMode parse_loop_mode(std::string_view name);
bool uses_cot(LoopMode mode);
bool uses_self_examination(LoopMode mode);

struct LoopConfig {
  // Repair iterations after the initial generation.
  std::size_t max_steps = 5;
  LoopMode mode = LoopMode::codecot;
  bool refine_tests = false;
  std::size_t num_tests = 5;

  void validate() const;
  nlohmann::json to_json() const;
  static LoopConfig from_json(const nlohmann::json& j);
};

// Everything a loop needs besides the task. All members are shared across
// workers and must be thread-safe.
struct PipelineContext {
  const PromptBuilder& prompts;
  ChatClient& client;
  const ModelConfig& model;
  ExecutionBackend& backend;
  const ExecutorSpec& executor;
};

// Generates, tests against the generated tests and repairs until the tests
// pass or the budget runs out. Client and backend errors propagate.
//
// Step 0 is the generation prompt. In coder/coder_cot modes the loop stops
// there without executing anything. Otherwise each step whose artifact has
// tests is executed, and while it fails and fewer than max_steps repairs have
// been made, a repair prompt is sent. A response that cannot be parsed uses
// up its step and its parse error becomes the next feedback. A generation
// without any tests ends the loop at step 0.
RefinementTrace run_task(const Task& task, const LoopConfig& cfg, const PipelineContext& ctx);

// Outcome of one task in a dataset run: a trace, or the error that stopped it.
struct TaskRun {
  std::size_t index = 0;
  std::string task_id;
  std::variant<RefinementTrace, std::string> result;
  std::exception_ptr error;

  bool ok() const { return result.index() == 0; }
};

// Runs `tasks` on `jobs` worker threads. `on_done` is invoked from a single
// thread at a time, in task order, as soon as every earlier task has
// finished; errors in one task never stop the others.
void run_tasks(const std::vector<const Task*>& tasks, const LoopConfig& cfg, const PipelineContext& ctx,
               std::size_t jobs, const std::function<void(TaskRun&&)>& on_done);

std::vector<RefinementTrace> run_dataset(const Dataset& dataset, const LoopConfig& cfg, const PipelineContext& ctx,
                                         std::size_t jobs = 1);

}  // namespace codecot
