#include "codecot/response_parser.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "codecot/dataset.hpp"

namespace codecot {
namespace {

using Lines = std::vector<std::string>;

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\f\v") == std::string_view::npos;
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string_view ltrim(std::string_view s) {
  std::size_t n = s.find_first_not_of(" \t");
  return n == std::string_view::npos ? std::string_view() : s.substr(n);
}

std::string_view rtrim(std::string_view s) {
  std::size_t n = s.find_last_not_of(" \t\r");
  return n == std::string_view::npos ? std::string_view() : s.substr(0, n + 1);
}

Lines split_lines(std::string_view text) {
  Lines lines;
  std::string normalized;
  normalized.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
    normalized.push_back(text[i]);
  }
  std::size_t pos = 0;
  while (pos <= normalized.size()) {
    std::size_t eol = normalized.find('\n', pos);
    if (eol == std::string::npos) {
      if (pos < normalized.size()) lines.push_back(normalized.substr(pos));
      break;
    }
    lines.push_back(normalized.substr(pos, eol - pos));
    pos = eol + 1;
  }
  return lines;
}

bool starts_with_word(std::string_view line, std::string_view word) {
  if (!line.starts_with(word)) return false;
  return line.size() == word.size() || !is_ident_char(line[word.size()]);
}

struct Block {
  Lines lines;
};

bool python_tag(std::string_view tag) {
  tag = rtrim(ltrim(tag));
  std::string lower(tag);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.empty() || lower == "python" || lower == "py" || lower == "python3";
}

// Returns true if at least one fence marker exists in the text.
bool collect_fenced(const Lines& lines, std::vector<Block>& out) {
  bool any_fence = false;
  bool inside = false;
  bool keep = false;
  std::size_t indent = 0;
  Block current;
  for (const auto& line : lines) {
    std::string_view trimmed = ltrim(line);
    if (trimmed.starts_with("```")) {
      any_fence = true;
      if (!inside) {
        inside = true;
        indent = line.size() - trimmed.size();
        std::string_view tag = trimmed.substr(trimmed.find_first_not_of('`'));
        if (trimmed.find_first_not_of('`') == std::string_view::npos) tag = {};
        keep = python_tag(tag);
        current = Block{};
      } else {
        inside = false;
        if (keep) out.push_back(std::move(current));
      }
      continue;
    }
    if (inside) {
      std::string_view body = line;
      std::size_t strip = 0;
      while (strip < indent && strip < body.size() && body[strip] == ' ') ++strip;
      current.lines.emplace_back(body.substr(strip));
    }
  }
  if (inside && keep) out.push_back(std::move(current));
  return any_fence;
}

bool is_bare_code_start(std::string_view line) {
  if (line.empty() || line.front() == ' ' || line.front() == '\t') return false;
  if (starts_with_word(line, "def") || line.starts_with("async def ") || starts_with_word(line, "class") ||
      line.starts_with("@") || starts_with_word(line, "assert")) {
    return true;
  }
  if (line.starts_with("import ")) {
    std::string_view rest = ltrim(line.substr(7));
    return !rest.empty() && is_ident_char(rest.front()) &&
           rest.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_., ") ==
               std::string_view::npos;
  }
  return line.starts_with("from ") && line.find(" import ") != std::string_view::npos;
}

bool is_bare_code_continuation(std::string_view line) {
  if (is_blank(line) || line.front() == ' ' || line.front() == '\t') return true;
  if (is_bare_code_start(line)) return true;
  for (std::string_view kw : {"if", "for", "while", "try", "with", "else", "elif", "except", "finally", "return",
                              "raise", "print", "pass"}) {
    if (starts_with_word(line, kw)) return true;
  }
  if (line.front() == '#' || line.front() == ')' || line.front() == ']' || line.front() == '}') return true;
  // name = ..., name(...), name[...] at column 0
  std::size_t n = 0;
  while (n < line.size() && (is_ident_char(line[n]) || line[n] == '.')) ++n;
  if (n == 0 || std::isdigit(static_cast<unsigned char>(line.front()))) return false;
  std::string_view rest = ltrim(line.substr(n));
  return !rest.empty() && (rest.front() == '=' || rest.front() == '(' || rest.front() == '[');
}

void collect_bare(const Lines& lines, std::vector<Block>& out) {
  std::size_t i = 0;
  while (i < lines.size()) {
    if (!is_bare_code_start(lines[i])) {
      ++i;
      continue;
    }
    Block block;
    while (i < lines.size() && is_bare_code_continuation(lines[i])) {
      block.lines.push_back(lines[i]);
      ++i;
    }
    out.push_back(std::move(block));
  }
}

// Tracks bracket depth, triple-quoted strings and backslash continuations so
// statement boundaries are only placed where Python would place them.
class StatementScanner {
 public:
  // True if the line may begin a new top-level statement.
  bool at_boundary() const { return depth_ <= 0 && triple_ == 0 && !continued_; }

  void feed(std::string_view line) {
    continued_ = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (triple_ != 0) {
        if (c == '\\') {
          ++i;
        } else if (c == triple_ && line.substr(i, 3) == std::string(3, triple_)) {
          triple_ = 0;
          i += 2;
        }
        continue;
      }
      if (c == '#') break;
      if (c == '"' || c == '\'') {
        if (line.substr(i, 3) == std::string(3, c)) {
          triple_ = c;
          i += 2;
          continue;
        }
        for (++i; i < line.size() && line[i] != c; ++i) {
          if (line[i] == '\\') ++i;
        }
        continue;
      }
      if (c == '(' || c == '[' || c == '{') ++depth_;
      if (c == ')' || c == ']' || c == '}') --depth_;
      if (c == '\\' && i + 1 == line.size()) continued_ = true;
    }
  }

 private:
  int depth_ = 0;
  char triple_ = 0;
  bool continued_ = false;
};

struct Statement {
  Lines lines;  // without trailing blank lines
  std::size_t trailing_blank = 0;
};

bool continues_compound(std::string_view line) {
  return starts_with_word(line, "else") || starts_with_word(line, "elif") || starts_with_word(line, "except") ||
         starts_with_word(line, "finally");
}

std::vector<Statement> split_statements(const Lines& lines) {
  std::vector<Statement> statements;
  StatementScanner scanner;
  bool decorator_pending = false;
  std::size_t leading_blank = 0;
  for (const auto& line : lines) {
    bool top_level = !line.empty() && line.front() != ' ' && line.front() != '\t' && !is_blank(line);
    bool start_new = statements.empty() ||
                     (top_level && scanner.at_boundary() && !decorator_pending && !continues_compound(line));
    if (is_blank(line) && scanner.at_boundary()) {
      if (statements.empty()) {
        ++leading_blank;
      } else {
        ++statements.back().trailing_blank;
      }
      continue;
    }
    if (start_new) {
      statements.push_back(Statement{});
    } else {
      auto& st = statements.back();
      for (; st.trailing_blank > 0; --st.trailing_blank) st.lines.emplace_back();
    }
    statements.back().lines.push_back(line);
    scanner.feed(line);
    if (top_level && scanner.at_boundary()) decorator_pending = line.front() == '@';
  }
  return statements;
}

std::string join(const Lines& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

std::string def_name(std::string_view line) {
  if (line.starts_with("async ")) line.remove_prefix(6);
  if (!starts_with_word(line, "def")) return {};
  std::string_view rest = ltrim(line.substr(3));
  std::size_t n = 0;
  while (n < rest.size() && is_ident_char(rest[n])) ++n;
  return std::string(rest.substr(0, n));
}

bool takes_no_arguments(std::string_view line) {
  std::size_t open = line.find('(');
  std::size_t close = line.find(')', open == std::string_view::npos ? 0 : open);
  if (open == std::string_view::npos || close == std::string_view::npos) return false;
  return is_blank(line.substr(open + 1, close - open - 1));
}

enum class StatementKind { code, test };

StatementKind classify(const Statement& st, std::string_view entry_point, std::string& test_text) {
  const std::string& head = st.lines.front();
  std::string text = join(st.lines);
  if (starts_with_word(head, "assert") && contains_identifier(text, entry_point)) {
    test_text = std::move(text);
    return StatementKind::test;
  }
  std::string name = def_name(head);
  if (!name.empty() && name != entry_point) {
    for (std::size_t i = 1; i < st.lines.size(); ++i) {
      std::string_view body = ltrim(st.lines[i]);
      if (starts_with_word(body, "assert") && contains_identifier(body, entry_point)) {
        test_text = std::move(text);
        if (takes_no_arguments(head)) test_text += "\n" + name + "()";
        return StatementKind::test;
      }
    }
  }
  return StatementKind::code;
}

struct SplitBlock {
  std::string code;
  std::vector<std::string> tests;
};

SplitBlock split_block(const Block& block, std::string_view entry_point) {
  SplitBlock out;
  Lines code_lines;
  for (const auto& st : split_statements(block.lines)) {
    std::string test;
    if (classify(st, entry_point, test) == StatementKind::test) {
      out.tests.push_back(std::move(test));
      continue;
    }
    code_lines.insert(code_lines.end(), st.lines.begin(), st.lines.end());
    code_lines.insert(code_lines.end(), st.trailing_blank, std::string());
  }
  while (!code_lines.empty() && is_blank(code_lines.back())) code_lines.pop_back();
  std::size_t first = 0;
  while (first < code_lines.size() && is_blank(code_lines[first])) ++first;
  if (first < code_lines.size()) {
    out.code = join(Lines(code_lines.begin() + static_cast<std::ptrdiff_t>(first), code_lines.end()));
    out.code += '\n';
  }
  return out;
}

bool has_top_level_definition(const std::vector<Block>& blocks) {
  for (const auto& b : blocks) {
    for (const auto& line : b.lines) {
      if (!def_name(line).empty() || starts_with_word(line, "class")) return true;
    }
  }
  return false;
}

}  // namespace

std::string_view to_string(ParseError::Kind kind) {
  switch (kind) {
    case ParseError::Kind::no_code_block:
      return "NoCodeBlock";
    case ParseError::Kind::entry_point_missing:
      return "EntryPointMissing";
  }
  return "unknown";
}

bool defines_entry_point(std::string_view code, std::string_view entry_point) {
  for (const auto& line : split_lines(code)) {
    if (def_name(line) == entry_point) return true;
  }
  return false;
}

GenerationArtifact parse_generation(std::string_view response, std::string_view entry_point) {
  if (response.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos) {
    throw PreconditionError("parse_generation: empty response");
  }
  Lines lines = split_lines(response);
  std::vector<Block> blocks;
  if (!collect_fenced(lines, blocks)) {
    collect_bare(lines, blocks);
    if (!has_top_level_definition(blocks)) {
      throw ParseError(ParseError::Kind::no_code_block, "your response contained no code block");
    }
  }
  if (blocks.empty()) {
    throw ParseError(ParseError::Kind::no_code_block, "your response contained no code block");
  }

  GenerationArtifact artifact;
  artifact.raw_response = std::string(response);
  std::set<std::string, std::less<>> seen;
  for (const auto& block : blocks) {
    SplitBlock split = split_block(block, entry_point);
    if (!split.code.empty() && defines_entry_point(split.code, entry_point)) {
      artifact.code = std::move(split.code);
    }
    for (auto& t : split.tests) {
      if (seen.insert(t).second) artifact.tests.push_back(std::move(t));
    }
  }
  if (artifact.code.empty()) {
    throw ParseError(ParseError::Kind::entry_point_missing,
                     "your response did not define the function `" + std::string(entry_point) + "`");
  }
  return artifact;
}

GenerationArtifact parse_repair(std::string_view response, std::string_view entry_point,
                                const GenerationArtifact& prior, bool refine_tests) {
  GenerationArtifact artifact = parse_generation(response, entry_point);
  if (!refine_tests || artifact.tests.empty()) {
    artifact.tests = prior.tests;
  }
  return artifact;
}

}  // namespace codecot
