#include "codecot/dataset.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace codecot {
namespace {

bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

std::string require_string(const nlohmann::json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) {
    throw DatasetError(std::string("missing required field '") + key + "'", line);
  }
  if (!it->is_string()) {
    throw DatasetError(std::string("field '") + key + "' must be a string", line);
  }
  return it->get<std::string>();
}

std::string stringify_id(const nlohmann::json& record, std::size_t line) {
  auto it = record.find("task_id");
  if (it == record.end() || it->is_null()) {
    throw DatasetError("missing required field 'task_id'", line);
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw DatasetError("field 'task_id' must be a string or integer", line);
}

nlohmann::json extras_without(const nlohmann::json& record, std::initializer_list<const char*> mapped) {
  nlohmann::json extra = record;
  for (const char* key : mapped) extra.erase(key);
  return extra;
}

Task map_humaneval(const nlohmann::json& record, std::size_t line) {
  Task t;
  t.task_id = stringify_id(record, line);
  t.prompt = require_string(record, "prompt", line);
  t.entry_point = require_string(record, "entry_point", line);
  t.canonical_solution = require_string(record, "canonical_solution", line);
  t.reference_test = require_string(record, "test", line);
  t.extra = extras_without(record, {"task_id", "prompt", "entry_point", "canonical_solution", "test"});
  return t;
}

Task map_mbpp(const nlohmann::json& record, std::size_t line) {
  Task t;
  t.task_id = stringify_id(record, line);
  const std::string text = require_string(record, "text", line);
  t.canonical_solution = require_string(record, "code", line);

  auto tests = record.find("test_list");
  if (tests == record.end() || !tests->is_array() || tests->empty()) {
    throw DatasetError("missing required field 'test_list'", line);
  }
  std::vector<std::string> asserts;
  for (const auto& item : *tests) {
    if (!item.is_string()) throw DatasetError("test_list entries must be strings", line);
    asserts.push_back(item.get<std::string>());
  }

  auto name = first_function_name(t.canonical_solution);
  if (!name) throw DatasetError("no function definition in 'code'", line);
  t.entry_point = *name;

  t.prompt = text + "\nYour code should pass this test:\n" + asserts.front() + "\n";

  std::string reference;
  if (auto setup = record.find("test_setup_code"); setup != record.end() && setup->is_string() &&
                                                   !setup->get<std::string>().empty()) {
    reference += setup->get<std::string>();
    reference += "\n";
  }
  for (const auto& a : asserts) {
    reference += a;
    reference += "\n";
  }
  t.reference_test = std::move(reference);
  t.extra = extras_without(record, {"task_id", "text", "code", "test_list", "test_setup_code"});
  return t;
}

void check_invariants(const Task& t, std::size_t line) {
  if (t.task_id.empty()) throw DatasetError("task_id is empty", line);
  if (t.entry_point.empty()) throw DatasetError("entry_point is empty in " + t.task_id, line);
  if (!contains_identifier(t.prompt, t.entry_point)) {
    throw DatasetError("entry_point '" + t.entry_point + "' does not occur in prompt of " + t.task_id, line);
  }
  if (t.canonical_solution.empty()) throw DatasetError("canonical_solution is empty in " + t.task_id, line);
  if (t.reference_test.empty()) throw DatasetError("reference test is empty in " + t.task_id, line);
}

bool defines_function(std::string_view source, std::string_view name) {
  std::size_t pos = 0;
  while (pos < source.size()) {
    std::size_t eol = source.find('\n', pos);
    std::string_view line = source.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    for (std::string_view prefix : {std::string_view("def "), std::string_view("async def ")}) {
      if (line.starts_with(prefix)) {
        std::string_view rest = line.substr(prefix.size());
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        if (rest.starts_with(name) && rest.size() > name.size() && !is_ident_char(rest[name.size()])) {
          return true;
        }
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return false;
}

}  // namespace

DatasetError::DatasetError(const std::string& what, std::size_t line)
    : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

std::string_view to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::humaneval:
      return "humaneval";
    case DatasetFormat::mbpp:
      return "mbpp";
  }
  return "unknown";
}

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "humaneval") return DatasetFormat::humaneval;
  if (name == "mbpp") return DatasetFormat::mbpp;
  throw UsageError("unknown dataset format '" + std::string(name) + "' (expected humaneval or mbpp)");
}

const Task* Dataset::find(std::string_view task_id) const {
  for (const auto& t : tasks) {
    if (t.task_id == task_id) return &t;
  }
  return nullptr;
}

bool contains_identifier(std::string_view text, std::string_view name) {
  if (name.empty()) return false;
  std::size_t pos = text.find(name);
  while (pos != std::string_view::npos) {
    bool left_ok = pos == 0 || !is_ident_char(text[pos - 1]);
    std::size_t end = pos + name.size();
    bool right_ok = end >= text.size() || !is_ident_char(text[end]);
    if (left_ok && right_ok) return true;
    pos = text.find(name, pos + 1);
  }
  return false;
}

std::optional<std::string> first_function_name(std::string_view source) {
  std::size_t pos = 0;
  while (pos < source.size()) {
    std::size_t eol = source.find('\n', pos);
    std::string_view line = source.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    for (std::string_view prefix : {std::string_view("def "), std::string_view("async def ")}) {
      if (line.starts_with(prefix)) {
        std::string_view rest = line.substr(prefix.size());
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        std::size_t n = 0;
        while (n < rest.size() && is_ident_char(rest[n])) ++n;
        if (n > 0) return std::string(rest.substr(0, n));
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return std::nullopt;
}

Dataset parse_dataset(std::istream& in, DatasetFormat format, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!record.is_object()) throw DatasetError("record is not a JSON object", lineno);

    Task t = format == DatasetFormat::humaneval ? map_humaneval(record, lineno) : map_mbpp(record, lineno);
    check_invariants(t, lineno);
    if (!seen.insert(t.task_id).second) {
      throw DatasetError("duplicate task_id '" + t.task_id + "'", lineno);
    }
    ds.tasks.push_back(std::move(t));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot open dataset " + path.string());
  return parse_dataset(in, format, path.stem().string());
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& t : dataset.tasks) {
    nlohmann::json record = t.extra.is_object() ? t.extra : nlohmann::json::object();
    record["task_id"] = t.task_id;
    record["prompt"] = t.prompt;
    record["entry_point"] = t.entry_point;
    record["canonical_solution"] = t.canonical_solution;
    record["test"] = t.reference_test;
    out << record.dump() << '\n';
  }
}

std::string canonical_program(const Task& task) {
  if (defines_function(task.canonical_solution, task.entry_point)) {
    return task.canonical_solution;
  }
  return task.prompt + task.canonical_solution;
}

std::string reference_test_program(const Task& task) {
  if (task.reference_test.find("def check(") != std::string::npos) {
    std::string program = task.reference_test;
    if (!program.empty() && program.back() != '\n') program += '\n';
    program += "\ncheck(" + task.entry_point + ")\n";
    return program;
  }
  return task.reference_test;
}

}  // namespace codecot
