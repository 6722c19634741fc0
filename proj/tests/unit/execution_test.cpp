#include "codecot/execution.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <future>
#include <memory>

#include "fixtures.hpp"

namespace codecot {
namespace {

using namespace std::chrono_literals;
namespace fs = std::filesystem;

BackendResult stdout_result(std::string out, int code = 0) {
  BackendResult r;
  r.stdout_text = std::move(out);
  r.exit_code = code;
  return r;
}

ExecutorSpec sh(const std::string& script, std::chrono::milliseconds limit = 5s) {
  ExecutorSpec spec;
  spec.runtime_command = {"/bin/sh", "-c", script};
  spec.time_limit = limit;
  return spec;
}

ShimPayload simple_payload() { return ShimPayload{"def f(x):\n    return x\n", {"assert f(1) == 1"}, "f"}; }

bool have_python() { return std::system("python3 -c 'pass' >/dev/null 2>&1") == 0; }

std::string capture(const std::string& cmd) {
  std::string out;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(::popen(cmd.c_str(), "r"), ::pclose);
  std::array<char, 512> buf{};
  while (pipe && std::fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  return out;
}

TEST(ExecutionTest, ClassifiesStatusLines) {
  auto pass = classify_result(stdout_result("noise\n{\"status\":\"pass\"}\n"), 1024);
  EXPECT_EQ(pass.klass, OutcomeClass::pass);
  EXPECT_TRUE(pass.diagnostic.empty());

  auto assertion = classify_result(
      stdout_result(R"({"status":"assert","test_index":2,"message":"AssertionError: 3 != 4"})"), 1024);
  EXPECT_EQ(assertion.klass, OutcomeClass::assert_error);
  EXPECT_EQ(assertion.failed_test_index, 2u);
  EXPECT_EQ(assertion.diagnostic, "AssertionError: 3 != 4");

  auto error = classify_result(
      stdout_result(R"({"status":"error","message":"NameError: name 'g' is not defined"})"), 1024);
  EXPECT_EQ(error.klass, OutcomeClass::syntax_error);
  EXPECT_EQ(error.diagnostic, "NameError: name 'g' is not defined");
  EXPECT_FALSE(error.failed_test_index);
}

TEST(ExecutionTest, EverythingElseIsSyntaxBucket) {
  BackendResult timeout;
  timeout.timed_out = true;
  timeout.stdout_text = R"({"status":"pass"})";
  auto t = classify_result(timeout, 1024);
  EXPECT_EQ(t.klass, OutcomeClass::syntax_error);
  EXPECT_EQ(t.diagnostic, "timeout");

  BackendResult crash = stdout_result("partial");
  crash.exit_code = 1;
  crash.stderr_text = "Traceback ...\nModuleNotFoundError: No module named 'numpy'";
  auto c = classify_result(crash, 1024);
  EXPECT_EQ(c.klass, OutcomeClass::syntax_error);
  EXPECT_NE(c.diagnostic.find("ModuleNotFoundError"), std::string::npos);

  // A pass line with a nonzero exit is not trusted.
  auto bad_exit = classify_result(stdout_result(R"({"status":"pass"})", 3), 1024);
  EXPECT_EQ(bad_exit.klass, OutcomeClass::syntax_error);

  auto silent = classify_result(stdout_result("", 9), 1024);
  EXPECT_EQ(silent.klass, OutcomeClass::syntax_error);
  EXPECT_FALSE(silent.diagnostic.empty());

  BackendResult loud = stdout_result(std::string(5000, 'y'), 1);
  EXPECT_LE(classify_result(loud, 100).diagnostic.size(), 100u);
}

TEST(ExecutionTest, OutcomeNamesRoundTrip) {
  for (auto k : {OutcomeClass::pass, OutcomeClass::assert_error, OutcomeClass::syntax_error}) {
    EXPECT_EQ(parse_outcome_class(to_string(k)), k);
  }
  EXPECT_EQ(to_string(OutcomeClass::assert_error), "AssertError");
  EXPECT_EQ(to_string(OutcomeClass::syntax_error), "SyntaxError");
}

TEST(ExecutionTest, TailCap) {
  EXPECT_EQ(tail_cap("abcdef", 3), "def");
  EXPECT_EQ(tail_cap("ab", 3), "ab");
}

TEST(ExecutionTest, PayloadShape) {
  auto j = simple_payload().to_json();
  EXPECT_EQ(j["candidate_source"], "def f(x):\n    return x\n");
  EXPECT_EQ(j["test_statements"], nlohmann::json::array({"assert f(1) == 1"}));
  EXPECT_EQ(j["entry_point"], "f");
}

TEST(ExecutionTest, EmptyTestsRejected) {
  testing::FixtureBackend backend;
  ExecutorSpec spec;
  GenerationArtifact artifact{"def f(x):\n    return x\n", {}, ""};
  EXPECT_THROW(run_candidate(spec, artifact, "f", backend), PreconditionError);
  EXPECT_EQ(backend.executions(), 0u);
}

class CapturingBackend : public ExecutionBackend {
 public:
  BackendResult execute(const ExecutorSpec&, const ShimPayload& payload) override {
    seen = payload;
    return testing::FixtureBackend::status_line(R"({"status":"pass"})");
  }
  ShimPayload seen;
};

TEST(ExecutionTest, ReferenceRunUsesHiddenTest) {
  Task t;
  t.task_id = "T/0";
  t.entry_point = "f";
  t.prompt = "def f(x):\n";
  t.canonical_solution = "    return x\n";
  t.reference_test = "def check(candidate):\n    assert candidate(1) == 1\n";
  CapturingBackend backend;
  auto outcome = run_reference(ExecutorSpec{}, t, "def f(x):\n    return x\n", backend);
  EXPECT_TRUE(outcome.passed());
  ASSERT_EQ(backend.seen.test_statements.size(), 1u);
  EXPECT_EQ(backend.seen.test_statements[0], reference_test_program(t));
  EXPECT_NE(backend.seen.test_statements[0].find("check(f)"), std::string::npos);
}

TEST(ExecutionTest, SpecValidation) {
  ExecutorSpec spec;
  spec.runtime_command.clear();
  EXPECT_THROW(spec.validate(), UsageError);
  spec = ExecutorSpec{};
  spec.time_limit = 0ms;
  EXPECT_THROW(spec.validate(), UsageError);
}

TEST(SubprocessBackendTest, DeliversPayloadOnStdin) {
  SubprocessBackend backend(2);
  auto result = backend.execute(sh("cat"), simple_payload());
  EXPECT_FALSE(result.timed_out);
  EXPECT_EQ(result.exit_code, 0);
  EXPECT_EQ(nlohmann::json::parse(result.stdout_text), simple_payload().to_json());
}

TEST(SubprocessBackendTest, PassAndAssertViaScript) {
  SubprocessBackend backend(2);
  auto pass = run_candidate(sh("cat >/dev/null; echo '{\"status\":\"pass\"}'"),
                            GenerationArtifact{"x", {"assert f(1)"}, ""}, "f", backend);
  EXPECT_TRUE(pass.passed());
  auto fail = run_candidate(
      sh("cat >/dev/null; echo '{\"status\":\"assert\",\"test_index\":0,\"message\":\"AssertionError\"}'"),
      GenerationArtifact{"x", {"assert f(1)"}, ""}, "f", backend);
  EXPECT_EQ(fail.klass, OutcomeClass::assert_error);
  EXPECT_EQ(fail.failed_test_index, 0u);
}

TEST(SubprocessBackendTest, TimeoutKillsProcessGroup) {
  SubprocessBackend backend(2);
  auto spec = sh("sleep 30 & sleep 30; wait", 300ms);
  auto start = std::chrono::steady_clock::now();
  auto result = backend.execute(spec, simple_payload());
  auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_TRUE(result.timed_out);
  EXPECT_LT(elapsed, 300ms + 2s);
  auto outcome = classify_result(result, spec.output_cap);
  EXPECT_EQ(outcome.klass, OutcomeClass::syntax_error);
  EXPECT_EQ(outcome.diagnostic, "timeout");
}

TEST(SubprocessBackendTest, OutputIsCapped) {
  SubprocessBackend backend(1);
  auto spec = sh("head -c 300000 /dev/zero | tr '\\0' 'a'; head -c 300000 /dev/zero | tr '\\0' 'b' >&2");
  spec.output_cap = 4096;
  auto result = backend.execute(spec, simple_payload());
  EXPECT_FALSE(result.timed_out);
  EXPECT_LE(result.stdout_text.size(), 4096u);
  EXPECT_LE(result.stderr_text.size(), 4096u);
  EXPECT_FALSE(result.stdout_text.empty());
}

TEST(SubprocessBackendTest, RunsInThrowawayDirectory) {
  SubprocessBackend backend(1);
  const auto before = fs::current_path();
  auto result = backend.execute(sh("cat >/dev/null; pwd; touch scribble"), simple_payload());
  std::string dir = result.stdout_text.substr(0, result.stdout_text.find('\n'));
  EXPECT_NE(fs::path(dir), before);
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_EQ(fs::current_path(), before);
  EXPECT_FALSE(fs::exists(before / "scribble"));
}

TEST(SubprocessBackendTest, MissingRuntimeIsEnvironmentFault) {
  SubprocessBackend backend(1);
  ExecutorSpec spec;
  spec.runtime_command = {"/nonexistent/python3"};
  EXPECT_THROW(backend.execute(spec, simple_payload()), BackendUnavailable);
  spec.runtime_command = {"codecot-no-such-runtime-xyz"};
  EXPECT_THROW(backend.execute(spec, simple_payload()), BackendUnavailable);
}

TEST(SubprocessBackendTest, ParallelExecutions) {
  SubprocessBackend backend(4);
  std::vector<std::future<BackendResult>> runs;
  for (int i = 0; i < 8; ++i) {
    runs.push_back(std::async(std::launch::async, [&backend, i] {
      return backend.execute(sh("cat >/dev/null; echo " + std::to_string(i)), simple_payload());
    }));
  }
  for (int i = 0; i < 8; ++i) EXPECT_EQ(runs[i].get().stdout_text, std::to_string(i) + "\n");
}

ExecutorSpec mini_shim() {
  ExecutorSpec spec;
  spec.runtime_command = {"python3", std::string(CODECOT_FIXTURE_DIR) + "/mini_shim.py"};
  return spec;
}

TEST(SubprocessBackendTest, MalformedDefinitionLandsInSyntaxBucket) {
  if (!have_python()) GTEST_SKIP() << "python3 not available";
  // Oracle: the interpreter itself rejects the source as a SyntaxError.
  std::string oracle = capture(
      "python3 -c \"compile('def f(:', 'c', 'exec')\" 2>&1 | tail -n 1");
  ASSERT_TRUE(oracle.starts_with("SyntaxError")) << oracle;

  SubprocessBackend backend(1);
  auto outcome = run_candidate(mini_shim(), GenerationArtifact{"def f(:\n    pass\n", {"assert f(1) == 1"}, ""},
                               "f", backend);
  EXPECT_EQ(outcome.klass, OutcomeClass::syntax_error);
  EXPECT_NE(outcome.diagnostic.find("SyntaxError"), std::string::npos);
}

TEST(SubprocessBackendTest, MiniShimEndToEnd) {
  if (!have_python()) GTEST_SKIP() << "python3 not available";
  SubprocessBackend backend(2);
  const std::string code = "def inc(x):\n    print('noise')\n    return x + 1\n";
  EXPECT_TRUE(run_candidate(mini_shim(), GenerationArtifact{code, {"assert inc(1) == 2", "assert inc(0) == 1"}, ""},
                            "inc", backend)
                  .passed());
  auto failing =
      run_candidate(mini_shim(), GenerationArtifact{code, {"assert inc(1) == 2", "assert inc(0) == 5"}, ""}, "inc",
                    backend);
  EXPECT_EQ(failing.klass, OutcomeClass::assert_error);
  EXPECT_EQ(failing.failed_test_index, 1u);
  auto import = run_candidate(mini_shim(),
                              GenerationArtifact{"import nonexistent_mod_xyz\n" + code, {"assert inc(1) == 2"}, ""},
                              "inc", backend);
  EXPECT_EQ(import.klass, OutcomeClass::syntax_error);
  EXPECT_NE(import.diagnostic.find("ModuleNotFoundError"), std::string::npos);
  auto loop = run_candidate(
      [] {
        auto s = mini_shim();
        s.time_limit = 500ms;
        return s;
      }(),
      GenerationArtifact{"def inc(x):\n    while True:\n        pass\n", {"assert inc(1) == 2"}, ""}, "inc", backend);
  EXPECT_EQ(loop.klass, OutcomeClass::syntax_error);
  EXPECT_EQ(loop.diagnostic, "timeout");
}

TEST(PreflightTest, AcceptsWorkingRunnerOnly) {
  SubprocessBackend backend(1);
  EXPECT_NO_THROW(preflight(sh("cat >/dev/null; echo '{\"status\":\"pass\"}'"), backend));
  EXPECT_THROW(preflight(sh("cat >/dev/null; echo 'No module named codecot_shim' >&2; exit 1"), backend),
               BackendUnavailable);
  if (!have_python()) GTEST_SKIP() << "python3 not available";
  EXPECT_NO_THROW(preflight(mini_shim(), backend));
  ExecutorSpec missing;
  missing.runtime_command = {"python3", "-m", "codecot_no_such_module_xyz"};
  EXPECT_THROW(preflight(missing, backend), BackendUnavailable);
}

}  // namespace
}  // namespace codecot
