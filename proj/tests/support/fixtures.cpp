#include "fixtures.hpp"

#include <stdlib.h>

#include <fstream>
#include <sstream>

namespace codecot::testing {

std::string fixture_code(const std::string& entry_point, bool fixed, std::size_t call) {
  if (fixed) return "def " + entry_point + "(x):\n    return x + 1  # fixed\n";
  return "def " + entry_point + "(x):\n    return x  # broken attempt " + std::to_string(call) + "\n";
}

std::string fixture_generation_response(const FixtureTask& task, bool fixed, std::size_t call, bool cot) {
  std::string out;
  if (cot) out += "Step 1: the function adds one to its argument.\n\n";
  out += "```python\n" + fixture_code(task.entry_point, fixed, call) + "```\n";
  if (task.num_tests > 0) {
    out += "\nTests:\n```python\n";
    for (std::size_t i = 0; i < task.num_tests; ++i) {
      out += "assert " + task.entry_point + "(" + std::to_string(i) + ") == " + std::to_string(i + 1) + "\n";
    }
    out += "```\n";
  }
  return out;
}

std::string fixture_repair_response(const FixtureTask& task, bool fixed, std::size_t call) {
  return "Here is the corrected version.\n```python\n" + fixture_code(task.entry_point, fixed, call) + "```\n";
}

Dataset fixture_dataset(const std::vector<FixtureTask>& tasks, const std::string& name) {
  Dataset ds;
  ds.name = name;
  for (const auto& t : tasks) {
    Task task;
    task.task_id = "Fixture/" + t.entry_point;
    task.prompt = "def " + t.entry_point + "(x):\n    \"\"\"Return x plus one.\"\"\"\n";
    task.entry_point = t.entry_point;
    task.canonical_solution = "    return x + 1  # fixed\n";
    task.reference_test = "def check(candidate):\n    assert candidate(1) == 2\n";
    ds.tasks.push_back(std::move(task));
  }
  return ds;
}

void write_fixture_dataset(const std::filesystem::path& path, const std::vector<FixtureTask>& tasks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  write_dataset(out, fixture_dataset(tasks));
}

std::string FixtureClient::complete(const ModelConfig&, const Conversation& conversation) {
  conversation.validate();
  const std::string& user = conversation.turns.back().content;
  const FixtureTask* task = nullptr;
  for (const auto& t : tasks_) {
    if (contains_identifier(user, t.entry_point)) {
      task = &t;
      break;
    }
  }
  if (!task) return "I cannot solve this.";

  std::lock_guard lock(mutex_);
  State& st = state_[task->entry_point];
  const bool generation = user.starts_with("Solve the task below");
  if (generation) {
    st.index = 0;
    st.cot = user.find("Think step by step") != std::string::npos;
  }
  const std::size_t call = st.index++;
  ++st.total;
  const std::size_t fixed_at = st.cot ? task->fixed_at : task->plain_fixed_at.value_or(task->fixed_at + 1);
  const bool fixed = call >= fixed_at;
  return generation ? fixture_generation_response(*task, fixed, call, st.cot)
                    : fixture_repair_response(*task, fixed, call);
}

std::size_t FixtureClient::total_calls() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [_, st] : state_) n += st.total;
  return n;
}

std::size_t FixtureClient::calls_for(const std::string& entry_point) const {
  std::lock_guard lock(mutex_);
  auto it = state_.find(entry_point);
  return it == state_.end() ? 0 : it->second.total;
}

BackendResult FixtureBackend::status_line(const std::string& json_line) {
  BackendResult r;
  r.stdout_text = json_line + "\n";
  return r;
}

BackendResult FixtureBackend::execute(const ExecutorSpec&, const ShimPayload& payload) {
  std::lock_guard lock(mutex_);
  ++total_;
  ++counts_[payload.entry_point];
  if (auto it = overrides_.find(payload.entry_point); it != overrides_.end()) return it->second;
  if (payload.candidate_source.find("# fixed") != std::string::npos) return status_line(R"({"status":"pass"})");
  return status_line(R"({"status":"assert","test_index":0,"message":"AssertionError"})");
}

void FixtureBackend::override_result(const std::string& entry_point, BackendResult result) {
  std::lock_guard lock(mutex_);
  overrides_[entry_point] = std::move(result);
}

std::size_t FixtureBackend::executions() const {
  std::lock_guard lock(mutex_);
  return total_;
}

std::size_t FixtureBackend::executions_for(const std::string& entry_point) const {
  std::lock_guard lock(mutex_);
  auto it = counts_.find(entry_point);
  return it == counts_.end() ? 0 : it->second;
}

ScratchDir::ScratchDir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "codecot-test-XXXXXX").string();
  if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

}  // namespace codecot::testing
