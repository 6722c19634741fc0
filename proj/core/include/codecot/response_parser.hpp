#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "codecot/error.hpp"

namespace codecot {

// Candidate program plus the assertions the model wrote for it.
struct GenerationArtifact {
  std::string code;
  std::vector<std::string> tests;
  std::string raw_response;

  bool operator==(const GenerationArtifact&) const = default;
};

class ParseError : public Error {
 public:
  enum class Kind { no_code_block, entry_point_missing };

  ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(ParseError::Kind kind);

// Extraction rules:
//  * Fenced blocks (``` with an optional language tag) are the primary
//    source. An unterminated final fence runs to the end of the response.
//  * Without any fence, the first run of top-level Python found in the text
//    is used instead.
//  * Each block is split into top-level statements. `assert` statements that
//    mention the entry point are tests. A non-entry-point `def` whose body
//    asserts on the entry point is a test function; it is kept whole and
//    followed by a call when it takes no arguments. Everything else is code.
//  * The last block whose code defines the entry point supplies `code`.
//    Tests are collected from every block in order, exact duplicates dropped.
//  * `code` has leading/trailing blank lines removed, ends in one newline and
//    keeps interior whitespace byte for byte. CRLF is read as LF.
GenerationArtifact parse_generation(std::string_view response, std::string_view entry_point);

// As parse_generation, but tests come from `prior` unless `refine_tests` is
// set and the response carries new ones.
GenerationArtifact parse_repair(std::string_view response, std::string_view entry_point,
                                const GenerationArtifact& prior, bool refine_tests);

// True when `code` has a top-level `def <name>(`.
bool defines_entry_point(std::string_view code, std::string_view entry_point);

}  // namespace codecot
