#include "codecot/trace.hpp"

namespace codecot {

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::all_tests_passed:
      return "AllTestsPassed";
    case Termination::step_budget_exhausted:
      return "StepBudgetExhausted";
    case Termination::parse_failure:
      return "ParseFailure";
  }
  return "unknown";
}

Termination parse_termination(std::string_view name) {
  if (name == "AllTestsPassed") return Termination::all_tests_passed;
  if (name == "StepBudgetExhausted") return Termination::step_budget_exhausted;
  if (name == "ParseFailure") return Termination::parse_failure;
  throw Error("unknown termination '" + std::string(name) + "'");
}

std::size_t RefinementTrace::executions() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.outcome.has_value();
  return n;
}

const GenerationArtifact* RefinementTrace::last_artifact() const {
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    if (it->artifact) return &*it->artifact;
  }
  return nullptr;
}

nlohmann::json to_json(const ExecutionOutcome& outcome) {
  nlohmann::json j{{"class", to_string(outcome.klass)}, {"diagnostic", outcome.diagnostic}};
  j["failed_test_index"] = outcome.failed_test_index ? nlohmann::json(*outcome.failed_test_index) : nlohmann::json(nullptr);
  return j;
}

ExecutionOutcome outcome_from_json(const nlohmann::json& j) {
  ExecutionOutcome o;
  o.klass = parse_outcome_class(j.at("class").get<std::string>());
  o.diagnostic = j.at("diagnostic").get<std::string>();
  if (auto it = j.find("failed_test_index"); it != j.end() && !it->is_null()) {
    o.failed_test_index = it->get<std::size_t>();
  }
  return o;
}

nlohmann::json to_json(const RefinementTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    nlohmann::json step{{"fingerprint", s.fingerprint}};
    if (s.artifact) {
      step["artifact"] = {{"code", s.artifact->code}, {"tests", s.artifact->tests},
                          {"raw_response", s.artifact->raw_response}};
      step["parse_error"] = nullptr;
    } else {
      step["artifact"] = nullptr;
      step["parse_error"] = s.parse_error;
    }
    step["outcome"] = s.outcome ? to_json(*s.outcome) : nlohmann::json(nullptr);
    steps.push_back(std::move(step));
  }
  return nlohmann::json{
      {"task_id", trace.task_id},
      {"steps", std::move(steps)},
      {"final_code", trace.final_code},
      {"final_tests", trace.final_tests},
      {"terminated_by", to_string(trace.terminated_by)},
  };
}

RefinementTrace trace_from_json(const nlohmann::json& j) {
  RefinementTrace t;
  t.task_id = j.at("task_id").get<std::string>();
  t.final_code = j.at("final_code").get<std::string>();
  t.final_tests = j.at("final_tests").get<std::vector<std::string>>();
  t.terminated_by = parse_termination(j.at("terminated_by").get<std::string>());
  for (const auto& sj : j.at("steps")) {
    RefinementStep s;
    s.fingerprint = sj.at("fingerprint").get<std::string>();
    if (const auto& a = sj.at("artifact"); !a.is_null()) {
      s.artifact = GenerationArtifact{a.at("code").get<std::string>(), a.at("tests").get<std::vector<std::string>>(),
                                      a.at("raw_response").get<std::string>()};
    } else {
      s.parse_error = sj.at("parse_error").get<std::string>();
    }
    if (const auto& o = sj.at("outcome"); !o.is_null()) s.outcome = outcome_from_json(o);
    t.steps.push_back(std::move(s));
  }
  return t;
}

}  // namespace codecot
