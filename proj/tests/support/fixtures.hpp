#pragma once

// Deterministic stand-ins for the model and the sandbox.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "codecot/dataset.hpp"
#include "codecot/execution.hpp"
#include "codecot/llm_client.hpp"

namespace codecot::testing {

// Replies with responder(conversation, call_index) and logs every call.
class ScriptedClient : public ChatClient {
 public:
  using Responder = std::function<std::string(const Conversation&, std::size_t)>;

  explicit ScriptedClient(Responder responder) : responder_(std::move(responder)) {}

  // Replies with `responses` in order, repeating the last one.
  static ScriptedClient sequence(std::vector<std::string> responses) {
    return ScriptedClient([responses = std::move(responses)](const Conversation&, std::size_t i) {
      return responses.at(std::min(i, responses.size() - 1));
    });
  }

  std::string complete(const ModelConfig&, const Conversation& conversation) override {
    std::lock_guard lock(mutex_);
    conversation.validate();
    log_.push_back(conversation);
    return responder_(conversation, log_.size() - 1);
  }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return log_.size();
  }
  std::vector<Conversation> log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

 private:
  Responder responder_;
  mutable std::mutex mutex_;
  std::vector<Conversation> log_;
};

// A synthetic task whose model output becomes correct at a known repair step.
struct FixtureTask {
  std::string entry_point;
  // Call index (0 = initial generation) at which a CoT-prompted run first
  // returns the correct implementation.
  std::size_t fixed_at = 0;
  // Same for plain prompts. Defaults to fixed_at + 1.
  std::optional<std::size_t> plain_fixed_at;
  // Number of asserts written at generation time.
  std::size_t num_tests = 5;
};

// Implementation text for attempt `call` of a fixture task.
std::string fixture_code(const std::string& entry_point, bool fixed, std::size_t call);
std::string fixture_generation_response(const FixtureTask& task, bool fixed, std::size_t call, bool cot);
std::string fixture_repair_response(const FixtureTask& task, bool fixed, std::size_t call);

// Humaneval-format dataset of fixture tasks. The canonical solution carries
// the "# fixed" marker, so it passes under FixtureBackend.
Dataset fixture_dataset(const std::vector<FixtureTask>& tasks, const std::string& name = "fixtures");
void write_fixture_dataset(const std::filesystem::path& path, const std::vector<FixtureTask>& tasks);

// Model stand-in for fixture tasks. Identifies the task by which entry point
// the user turn mentions. A generation prompt restarts that task's call
// counter, so one client serves any number of runs and modes.
class FixtureClient : public ChatClient {
 public:
  explicit FixtureClient(std::vector<FixtureTask> tasks) : tasks_(std::move(tasks)) {}

  std::string complete(const ModelConfig& config, const Conversation& conversation) override;

  std::size_t total_calls() const;
  // Calls attributed to one entry point since construction.
  std::size_t calls_for(const std::string& entry_point) const;

 private:
  struct State {
    std::size_t index = 0;
    bool cot = false;
    std::size_t total = 0;
  };

  std::vector<FixtureTask> tasks_;
  mutable std::mutex mutex_;
  std::map<std::string, State> state_;
};

// Sandbox stand-in. A candidate containing "# fixed" passes every test;
// otherwise the first test fails with an AssertionError. Individual entry
// points can be given a canned result instead.
class FixtureBackend : public ExecutionBackend {
 public:
  BackendResult execute(const ExecutorSpec& spec, const ShimPayload& payload) override;

  void override_result(const std::string& entry_point, BackendResult result);
  std::size_t executions() const;
  std::size_t executions_for(const std::string& entry_point) const;

  static BackendResult status_line(const std::string& json_line);

 private:
  mutable std::mutex mutex_;
  std::map<std::string, BackendResult> overrides_;
  std::map<std::string, std::size_t> counts_;
  std::size_t total_ = 0;
};

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  ScratchDir();
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace codecot::testing
