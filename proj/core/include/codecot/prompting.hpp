#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "codecot/dataset.hpp"
#include "codecot/error.hpp"
#include "codecot/trace.hpp"

namespace codecot {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct Turn {
  Role role = Role::user;
  std::string content;

  bool operator==(const Turn&) const = default;
};

struct Conversation {
  std::vector<Turn> turns;

  // Throws PreconditionError unless non-empty and opened by system or user.
  void validate() const;
  // [{role, content}, ...] in wire order.
  nlohmann::json messages() const;

  bool operator==(const Conversation&) const = default;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

// Literal text interleaved with `{{name}}` placeholders. Only the names
// task_prompt, entry_point, guiding_example, prior_code, prior_tests,
// error_feedback and num_tests are accepted. Substitution is single-pass:
// bound values are never rescanned for markers.
class PromptTemplate {
 public:
  static PromptTemplate parse(std::string name, std::string_view text);

  // Throws TemplateError if a placeholder has no binding.
  std::string render(const Bindings& bindings) const;

  const std::string& name() const { return name_; }
  std::vector<std::string> placeholders() const;

 private:
  struct Segment {
    bool placeholder = false;
    std::string text;
  };

  std::string name_;
  std::vector<Segment> segments_;
};

// A complete, versioned set of prompt texts.
struct TemplateSet {
  std::string version;
  std::string system;
  std::string guiding_example;
  std::string generation_cot_text;
  std::string generation_plain_text;
  std::string repair_text;
  std::string repair_tests_text;

  // Set compiled into the library (templates/v1).
  static TemplateSet builtin();
  // Reads system.txt, guiding_example.txt, generation_cot.txt,
  // generation_plain.txt, repair.txt and repair_tests.txt from `dir`.
  static TemplateSet load(const std::filesystem::path& dir);

  // SHA-256 over every text, recorded in run manifests.
  std::string hash() const;
};

enum class PromptMode { cot, plain };

// What the repair prompt shows the model about the failed attempt.
struct RepairContext {
  std::string prior_code;
  std::vector<std::string> prior_tests;
  std::string diagnostic;
  // Text of the failing generated test, when an assertion failed.
  std::optional<std::string> failed_test;
  std::size_t num_tests = 5;
};

inline constexpr std::size_t kDefaultDiagnosticCap = 2000;

// Keeps the last `cap` characters, starting at a line boundary where one is
// available, and marks the cut. Text within the cap is returned unchanged.
std::string truncate_diagnostic(std::string_view text, std::size_t cap = kDefaultDiagnosticCap);

class PromptBuilder {
 public:
  explicit PromptBuilder(TemplateSet templates = TemplateSet::builtin(),
                         std::size_t diagnostic_cap = kDefaultDiagnosticCap);

  // System turn plus one user turn asking for the implementation and
  // `num_tests` assertions. `cot` adds step-by-step reasoning instructions and
  // the worked example.
  Conversation build_generation_prompt(const Task& task, PromptMode mode, std::size_t num_tests) const;

  // Single-shot repair request: task, last code, last error. With
  // `refine_tests` the prior tests are shown and may be corrected.
  Conversation build_repair_prompt(const Task& task, const RepairContext& context, bool refine_tests) const;

  // Builds the repair request from the tail of `trace`. Rejects a trace
  // whose last step passed. A trace with no parsed artifact yet asks for
  // tests as well.
  Conversation build_repair_prompt(const Task& task, const RefinementTrace& trace, bool refine_tests,
                                   std::size_t num_tests) const;

  const TemplateSet& templates() const { return templates_; }
  std::size_t diagnostic_cap() const { return diagnostic_cap_; }

 private:
  TemplateSet templates_;
  std::size_t diagnostic_cap_;
  PromptTemplate generation_cot_;
  PromptTemplate generation_plain_;
  PromptTemplate repair_;
  PromptTemplate repair_tests_;
};

}  // namespace codecot
