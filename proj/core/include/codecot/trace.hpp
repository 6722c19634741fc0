#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "codecot/execution.hpp"
#include "codecot/response_parser.hpp"

namespace codecot {

enum class Termination { all_tests_passed, step_budget_exhausted, parse_failure };

std::string_view to_string(Termination t);
Termination parse_termination(std::string_view name);

// One client call and what came of it. Exactly one of `artifact` and
// `parse_error` is set. `outcome` is absent when nothing was executed.
struct RefinementStep {
  std::string fingerprint;
  std::optional<GenerationArtifact> artifact;
  std::string parse_error;
  std::optional<ExecutionOutcome> outcome;
};

struct RefinementTrace {
  std::string task_id;
  std::vector<RefinementStep> steps;
  std::string final_code;
  std::vector<std::string> final_tests;
  Termination terminated_by = Termination::step_budget_exhausted;

  // Number of steps that ran the candidate.
  std::size_t executions() const;
  // The last step holding a parsed artifact, if any.
  const GenerationArtifact* last_artifact() const;
};

// Wall time is left out so that replayed runs serialise byte-identically.
nlohmann::json to_json(const ExecutionOutcome& outcome);
ExecutionOutcome outcome_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RefinementTrace& trace);
RefinementTrace trace_from_json(const nlohmann::json& j);

}  // namespace codecot
