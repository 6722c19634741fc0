#include "codecot/prompting.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "builtin_templates.hpp"
#include "codecot/hashing.hpp"

namespace codecot {
namespace {

constexpr std::array<std::string_view, 7> kPlaceholderNames = {
    "task_prompt", "entry_point", "guiding_example", "prior_code", "prior_tests", "error_feedback", "num_tests",
};

bool known_placeholder(std::string_view name) {
  return std::find(kPlaceholderNames.begin(), kPlaceholderNames.end(), name) != kPlaceholderNames.end();
}

std::string strip_trailing_newlines(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot read template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_trailing_newline_of_code(std::string code) {
  while (!code.empty() && code.back() == '\n') code.pop_back();
  return code;
}

std::string join_tests(const std::vector<std::string>& tests) {
  std::string out;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (i) out += '\n';
    out += tests[i];
  }
  return out;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

void Conversation::validate() const {
  if (turns.empty()) throw PreconditionError("conversation has no turns");
  if (turns.front().role == Role::assistant) {
    throw PreconditionError("conversation must open with a system or user turn");
  }
}

nlohmann::json Conversation::messages() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : turns) {
    out.push_back({{"role", to_string(t.role)}, {"content", t.content}});
  }
  return out;
}

PromptTemplate PromptTemplate::parse(std::string name, std::string_view text) {
  PromptTemplate tpl;
  tpl.name_ = std::move(name);
  std::size_t pos = 0;
  std::string literal;
  while (pos < text.size()) {
    std::size_t open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      literal.append(text.substr(pos));
      break;
    }
    std::size_t close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw TemplateError("template '" + tpl.name_ + "': unterminated placeholder at offset " + std::to_string(open));
    }
    std::string_view key = text.substr(open + 2, close - open - 2);
    if (!known_placeholder(key)) {
      throw TemplateError("template '" + tpl.name_ + "': unknown placeholder '" + std::string(key) + "'");
    }
    literal.append(text.substr(pos, open - pos));
    if (!literal.empty()) tpl.segments_.push_back({false, std::move(literal)});
    literal.clear();
    tpl.segments_.push_back({true, std::string(key)});
    pos = close + 2;
  }
  if (!literal.empty()) tpl.segments_.push_back({false, std::move(literal)});
  return tpl;
}

std::string PromptTemplate::render(const Bindings& bindings) const {
  std::string out;
  for (const auto& seg : segments_) {
    if (!seg.placeholder) {
      out += seg.text;
      continue;
    }
    auto it = bindings.find(seg.text);
    if (it == bindings.end()) {
      throw TemplateError("template '" + name_ + "': no binding for '" + seg.text + "'");
    }
    out += it->second;
  }
  return out;
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  for (const auto& seg : segments_) {
    if (seg.placeholder && std::find(names.begin(), names.end(), seg.text) == names.end()) {
      names.push_back(seg.text);
    }
  }
  return names;
}

TemplateSet TemplateSet::builtin() {
  const auto& t = detail::builtin_template_texts();
  return TemplateSet{
      t.version,
      strip_trailing_newlines(t.system),
      strip_trailing_newlines(t.guiding_example),
      strip_trailing_newlines(t.generation_cot),
      strip_trailing_newlines(t.generation_plain),
      strip_trailing_newlines(t.repair),
      strip_trailing_newlines(t.repair_tests),
  };
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  return TemplateSet{
      dir.filename().string(),
      strip_trailing_newlines(read_text(dir / "system.txt")),
      strip_trailing_newlines(read_text(dir / "guiding_example.txt")),
      strip_trailing_newlines(read_text(dir / "generation_cot.txt")),
      strip_trailing_newlines(read_text(dir / "generation_plain.txt")),
      strip_trailing_newlines(read_text(dir / "repair.txt")),
      strip_trailing_newlines(read_text(dir / "repair_tests.txt")),
  };
}

std::string TemplateSet::hash() const {
  // Length-prefixed so that moving text between files changes the hash.
  std::string material;
  for (const std::string* part : {&system, &guiding_example, &generation_cot_text, &generation_plain_text,
                                  &repair_text, &repair_tests_text}) {
    material += std::to_string(part->size());
    material += ':';
    material += *part;
  }
  return sha256_hex(material);
}

std::string truncate_diagnostic(std::string_view text, std::size_t cap) {
  if (text.size() <= cap) return std::string(text);
  static constexpr std::string_view kMarker = "...[truncated]\n";
  std::string_view tail = text.substr(text.size() - cap);
  std::size_t nl = tail.find('\n');
  if (nl != std::string_view::npos && nl + 1 < tail.size()) tail.remove_prefix(nl + 1);
  return std::string(kMarker) + std::string(tail);
}

PromptBuilder::PromptBuilder(TemplateSet templates, std::size_t diagnostic_cap)
    : templates_(std::move(templates)),
      diagnostic_cap_(diagnostic_cap),
      generation_cot_(PromptTemplate::parse("generation_cot", templates_.generation_cot_text)),
      generation_plain_(PromptTemplate::parse("generation_plain", templates_.generation_plain_text)),
      repair_(PromptTemplate::parse("repair", templates_.repair_text)),
      repair_tests_(PromptTemplate::parse("repair_tests", templates_.repair_tests_text)) {
  if (diagnostic_cap_ == 0) throw UsageError("diagnostic cap must be positive");
}

Conversation PromptBuilder::build_generation_prompt(const Task& task, PromptMode mode, std::size_t num_tests) const {
  if (num_tests < 1) throw PreconditionError("num_tests must be at least 1");
  Bindings b{
      {"task_prompt", strip_trailing_newline_of_code(task.prompt)},
      {"entry_point", task.entry_point},
      {"guiding_example", templates_.guiding_example},
      {"num_tests", std::to_string(num_tests)},
  };
  const PromptTemplate& tpl = mode == PromptMode::cot ? generation_cot_ : generation_plain_;
  return Conversation{{{Role::system, templates_.system}, {Role::user, tpl.render(b)}}};
}

Conversation PromptBuilder::build_repair_prompt(const Task& task, const RepairContext& context,
                                                bool refine_tests) const {
  std::string feedback;
  if (context.failed_test) {
    feedback = "Failed test case:\n" + *context.failed_test + "\n\n";
  }
  feedback += truncate_diagnostic(context.diagnostic, diagnostic_cap_);
  Bindings b{
      {"task_prompt", strip_trailing_newline_of_code(task.prompt)},
      {"entry_point", task.entry_point},
      {"prior_code", strip_trailing_newline_of_code(context.prior_code)},
      {"prior_tests", join_tests(context.prior_tests)},
      {"error_feedback", std::move(feedback)},
      {"num_tests", std::to_string(std::max<std::size_t>(1, context.num_tests))},
  };
  const PromptTemplate& tpl = refine_tests ? repair_tests_ : repair_;
  return Conversation{{{Role::system, templates_.system}, {Role::user, tpl.render(b)}}};
}

Conversation PromptBuilder::build_repair_prompt(const Task& task, const RefinementTrace& trace, bool refine_tests,
                                                std::size_t num_tests) const {
  if (trace.steps.empty()) throw PreconditionError("repair requested for an empty trace");
  const RefinementStep& tail = trace.steps.back();
  if (tail.outcome && tail.outcome->passed()) {
    throw PreconditionError("repair requested after a passing step");
  }

  RepairContext ctx;
  ctx.num_tests = num_tests;
  const GenerationArtifact* prior = trace.last_artifact();
  if (prior) {
    ctx.prior_code = prior->code;
    ctx.prior_tests = prior->tests;
  }
  if (!tail.artifact) {
    ctx.diagnostic = tail.parse_error;
  } else if (tail.outcome) {
    ctx.diagnostic = tail.outcome->diagnostic;
    if (tail.outcome->klass == OutcomeClass::assert_error && tail.outcome->failed_test_index &&
        *tail.outcome->failed_test_index < tail.artifact->tests.size()) {
      ctx.failed_test = tail.artifact->tests[*tail.outcome->failed_test_index];
    }
  } else {
    throw PreconditionError("repair requested for a step that was never executed");
  }
  return build_repair_prompt(task, ctx, refine_tests || prior == nullptr);
}

}  // namespace codecot
