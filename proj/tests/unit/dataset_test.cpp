#include "codecot/dataset.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace codecot {
namespace {

Dataset parse(const std::string& text, DatasetFormat format = DatasetFormat::humaneval) {
  std::istringstream in(text);
  return parse_dataset(in, format, "test");
}

const char* kHumanEvalLine =
    R"({"task_id":"HumanEval/0","prompt":"def f(x):\n    \"\"\"...\"\"\"\n","entry_point":"f","canonical_solution":"    return x\n","test":"def check(candidate): assert candidate(1)==1"})";

TEST(DatasetTest, MapsHumanEvalFields) {
  Dataset ds = parse(std::string(kHumanEvalLine) + "\n");
  ASSERT_EQ(ds.tasks.size(), 1u);
  const Task& t = ds.tasks[0];
  EXPECT_EQ(t.task_id, "HumanEval/0");
  EXPECT_EQ(t.entry_point, "f");
  EXPECT_EQ(t.prompt, "def f(x):\n    \"\"\"...\"\"\"\n");
  EXPECT_EQ(t.canonical_solution, "    return x\n");
  EXPECT_EQ(t.reference_test, "def check(candidate): assert candidate(1)==1");
  EXPECT_TRUE(t.extra.empty());
}

TEST(DatasetTest, EmptyInputGivesEmptyDataset) {
  EXPECT_TRUE(parse("").tasks.empty());
  EXPECT_TRUE(parse("\n   \n").tasks.empty());
}

TEST(DatasetTest, DuplicateTaskIdIsNamed) {
  const std::string line =
      R"({"task_id":"T1","prompt":"def f(x): pass","entry_point":"f","canonical_solution":"x","test":"y"})";
  try {
    parse(line + "\n" + line + "\n");
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("T1"), std::string::npos);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(DatasetTest, MalformedJsonReportsLine) {
  try {
    parse(std::string(kHumanEvalLine) + "\n{not json\n");
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(DatasetTest, MissingFieldIsRejected) {
  EXPECT_THROW(parse(R"({"task_id":"T","prompt":"def f(): pass","entry_point":"f","test":"t"})"), DatasetError);
}

TEST(DatasetTest, InvariantViolationsAreRejected) {
  // entry point absent from prompt
  EXPECT_THROW(parse(R"({"task_id":"T","prompt":"def g(): pass","entry_point":"f","canonical_solution":"x","test":"t"})"),
               DatasetError);
  // "f" only appears inside a longer identifier
  EXPECT_THROW(parse(R"({"task_id":"T","prompt":"def ff(): pass","entry_point":"f","canonical_solution":"x","test":"t"})"),
               DatasetError);
  EXPECT_THROW(parse(R"({"task_id":"","prompt":"def f(): pass","entry_point":"f","canonical_solution":"x","test":"t"})"),
               DatasetError);
  EXPECT_THROW(parse(R"({"task_id":"T","prompt":"def f(): pass","entry_point":"f","canonical_solution":"","test":"t"})"),
               DatasetError);
  EXPECT_THROW(parse(R"({"task_id":"T","prompt":"def f(): pass","entry_point":"f","canonical_solution":"x","test":""})"),
               DatasetError);
}

TEST(DatasetTest, ExtraFieldsArePreserved) {
  Dataset ds = parse(
      R"({"task_id":"T","prompt":"def f(): pass","entry_point":"f","canonical_solution":"x","test":"t","difficulty":3})");
  EXPECT_EQ(ds.tasks[0].extra, nlohmann::json({{"difficulty", 3}}));
}

TEST(DatasetTest, MapsMbppRecords) {
  Dataset ds = parse(
      R"({"task_id":11,"text":"Write a function to remove first and last occurrence of a given character from the string.","code":"def remove_Occ(s,ch): \r\n    return s","test_list":["assert remove_Occ(\"hello\",\"l\") == \"heo\"","assert remove_Occ(\"abcda\",\"a\") == \"bcd\""],"test_setup_code":"","challenge_test_list":[]})",
      DatasetFormat::mbpp);
  ASSERT_EQ(ds.tasks.size(), 1u);
  const Task& t = ds.tasks[0];
  EXPECT_EQ(t.task_id, "11");
  EXPECT_EQ(t.entry_point, "remove_Occ");
  EXPECT_EQ(t.prompt,
            "Write a function to remove first and last occurrence of a given character from the string.\n"
            "Your code should pass this test:\nassert remove_Occ(\"hello\",\"l\") == \"heo\"\n");
  EXPECT_EQ(t.reference_test,
            "assert remove_Occ(\"hello\",\"l\") == \"heo\"\nassert remove_Occ(\"abcda\",\"a\") == \"bcd\"\n");
  EXPECT_EQ(t.extra, nlohmann::json({{"challenge_test_list", nlohmann::json::array()}}));
  EXPECT_EQ(canonical_program(t), t.canonical_solution);
  EXPECT_EQ(reference_test_program(t), t.reference_test);
}

TEST(DatasetTest, MbppSetupCodePrecedesAsserts) {
  Dataset ds = parse(
      R"({"task_id":2,"text":"t","code":"import math\ndef g(x):\n    return x","test_list":["assert g(1) == 1"],"test_setup_code":"import os"})",
      DatasetFormat::mbpp);
  EXPECT_EQ(ds.tasks[0].entry_point, "g");
  EXPECT_EQ(ds.tasks[0].reference_test, "import os\nassert g(1) == 1\n");
}

TEST(DatasetTest, CanonicalAndReferencePrograms) {
  Dataset ds = parse(std::string(kHumanEvalLine));
  const Task& t = ds.tasks[0];
  EXPECT_EQ(canonical_program(t), t.prompt + t.canonical_solution);
  EXPECT_EQ(reference_test_program(t), "def check(candidate): assert candidate(1)==1\n\ncheck(f)\n");
}

TEST(DatasetTest, FirstFunctionName) {
  EXPECT_EQ(first_function_name("import x\n\ndef  alpha_1(a):\n  pass\ndef beta(): pass"), "alpha_1");
  EXPECT_EQ(first_function_name("async def run(): pass"), "run");
  EXPECT_FALSE(first_function_name("class A:\n    def m(self): pass").has_value());
}

TEST(DatasetTest, LoadingIsDeterministicAndRoundTrips) {
  std::mt19937 rng(7);
  const std::string alphabet = "abc \"\\\n\t{}xyz/";
  auto random_text = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    return s;
  };
  for (int round = 0; round < 50; ++round) {
    Dataset ds;
    ds.name = "rt";
    std::size_t n = rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      Task t;
      t.task_id = "T/" + std::to_string(i);
      t.entry_point = "fn_" + std::to_string(round);
      t.prompt = random_text(rng() % 20) + " " + t.entry_point + " " + random_text(rng() % 20);
      t.canonical_solution = "x" + random_text(rng() % 30);
      t.reference_test = "y" + random_text(rng() % 30);
      if (rng() % 2) t.extra = {{"meta", random_text(5)}, {"n", static_cast<int>(rng() % 100)}};
      ds.tasks.push_back(t);
    }
    std::ostringstream out;
    write_dataset(out, ds);
    std::istringstream in1(out.str()), in2(out.str());
    Dataset a = parse_dataset(in1, DatasetFormat::humaneval, "rt");
    Dataset b = parse_dataset(in2, DatasetFormat::humaneval, "rt");
    EXPECT_EQ(a, ds);
    EXPECT_EQ(a, b);
  }
}

}  // namespace
}  // namespace codecot
