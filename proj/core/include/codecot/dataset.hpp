#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "codecot/error.hpp"

namespace codecot {

enum class DatasetFormat { humaneval, mbpp };

std::string_view to_string(DatasetFormat format);
DatasetFormat parse_dataset_format(std::string_view name);

// One benchmark problem. `reference_test` is the hidden scoring program and
// never reaches a model prompt.
struct Task {
  std::string task_id;
  std::string prompt;
  std::string entry_point;
  std::string canonical_solution;
  std::string reference_test;
  // Fields the loader does not map, kept verbatim.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const Task&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<Task> tasks;

  const Task* find(std::string_view task_id) const;
  bool operator==(const Dataset&) const = default;
};

// Raised for malformed input. `line()` is 1-based, 0 when not line-specific.
class DatasetError : public Error {
 public:
  DatasetError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Loads a line-delimited JSON task file. Blank lines are skipped.
//
// humaneval records map task_id, prompt, entry_point, canonical_solution and
// test (-> reference_test) directly.
//
// mbpp records map task_id (stringified), code -> canonical_solution and
// test_setup_code + test_list (newline-joined) -> reference_test. The model
// prompt is synthesised from `text` plus the first reference assertion, and
// the entry point is the first top-level function defined in `code`.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
Dataset parse_dataset(std::istream& in, DatasetFormat format, std::string name);

// Writes the dataset in the humaneval schema (plus preserved extra fields).
// Reloading the output as humaneval yields an equal Dataset.
void write_dataset(std::ostream& out, const Dataset& dataset);

// The complete reference program: humaneval solutions are function bodies and
// are appended to the prompt, mbpp solutions are already complete.
std::string canonical_program(const Task& task);

// The statement handed to the runner for final scoring. humaneval-style
// `check(candidate)` programs get an explicit call on the entry point.
std::string reference_test_program(const Task& task);

// True when `name` occurs in `text` bounded by non-identifier characters.
bool contains_identifier(std::string_view text, std::string_view name);

// Name of the first top-level `def` in `source`, if any.
std::optional<std::string> first_function_name(std::string_view source);

}  // namespace codecot
