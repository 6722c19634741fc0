#include "codecot/execution.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <thread>

namespace codecot {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read;
  Fd write;
};

Pipe make_pipe() {
  std::array<int, 2> fds{};
  if (::pipe2(fds.data(), O_CLOEXEC) != 0) {
    throw EnvironmentError(std::string("pipe: ") + std::strerror(errno));
  }
  return Pipe{Fd(fds[0]), Fd(fds[1])};
}

void set_nonblocking(int fd) {
  int flags = ::fcntl(fd, F_GETFL);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

bool is_executable(const fs::path& p) {
  return ::access(p.c_str(), X_OK) == 0 && !fs::is_directory(p);
}

bool resolve_executable(const std::string& name) {
  if (name.empty()) return false;
  if (name.find('/') != std::string::npos) return is_executable(name);
  const char* path = std::getenv("PATH");
  std::string_view dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
  while (true) {
    std::size_t sep = dirs.find(':');
    std::string_view dir = dirs.substr(0, sep);
    if (!dir.empty() && is_executable(fs::path(dir) / name)) return true;
    if (sep == std::string_view::npos) return false;
    dirs.remove_prefix(sep + 1);
  }
}

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "codecot-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) {
      throw EnvironmentError(std::string("mkdtemp: ") + std::strerror(errno));
    }
    path_ = pattern;
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

void append_capped(std::string& buf, const char* data, std::size_t n, std::size_t cap) {
  buf.append(data, n);
  if (buf.size() > 2 * cap + 4096) buf.erase(0, buf.size() - cap);
}

// Reads whatever is available; returns false at EOF or hard error.
bool drain(int fd, std::string& buf, std::size_t cap) {
  std::array<char, 8192> chunk{};
  while (true) {
    ssize_t n = ::read(fd, chunk.data(), chunk.size());
    if (n > 0) {
      append_capped(buf, chunk.data(), static_cast<std::size_t>(n), cap);
      continue;
    }
    if (n == 0) return false;
    if (errno == EINTR) continue;
    return errno == EAGAIN || errno == EWOULDBLOCK;
  }
}

[[noreturn]] void exec_child(const std::vector<std::string>& argv, const fs::path& cwd, int in_fd, int out_fd,
                             int err_fd, int report_fd) {
  ::setpgid(0, 0);
  ::signal(SIGPIPE, SIG_DFL);
  if (::dup2(in_fd, STDIN_FILENO) < 0 || ::dup2(out_fd, STDOUT_FILENO) < 0 || ::dup2(err_fd, STDERR_FILENO) < 0 ||
      ::chdir(cwd.c_str()) != 0) {
    int err = errno;
    (void)!::write(report_fd, &err, sizeof err);
    ::_exit(127);
  }
  std::vector<char*> args;
  args.reserve(argv.size() + 1);
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  ::execvp(args[0], args.data());
  int err = errno;
  (void)!::write(report_fd, &err, sizeof err);
  ::_exit(127);
}

std::once_flag sigpipe_once;

}  // namespace

std::string_view to_string(OutcomeClass klass) {
  switch (klass) {
    case OutcomeClass::pass:
      return "Pass";
    case OutcomeClass::assert_error:
      return "AssertError";
    case OutcomeClass::syntax_error:
      return "SyntaxError";
  }
  return "unknown";
}

OutcomeClass parse_outcome_class(std::string_view name) {
  if (name == "Pass") return OutcomeClass::pass;
  if (name == "AssertError") return OutcomeClass::assert_error;
  if (name == "SyntaxError") return OutcomeClass::syntax_error;
  throw Error("unknown outcome class '" + std::string(name) + "'");
}

void ExecutorSpec::validate() const {
  if (runtime_command.empty() || runtime_command.front().empty()) throw UsageError("runtime command must not be empty");
  if (time_limit.count() <= 0) throw UsageError("time limit must be positive");
  if (output_cap == 0) throw UsageError("output cap must be positive");
}

nlohmann::json ShimPayload::to_json() const {
  return nlohmann::json{
      {"candidate_source", candidate_source},
      {"entry_point", entry_point},
      {"test_statements", test_statements},
  };
}

std::ptrdiff_t SubprocessBackend::default_parallelism() {
  auto n = static_cast<std::ptrdiff_t>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

SubprocessBackend::SubprocessBackend(std::ptrdiff_t max_parallel) : slots_(std::max<std::ptrdiff_t>(1, max_parallel)) {
  // A candidate that exits early closes its stdin; the write must fail with
  // EPIPE instead of killing the harness.
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

BackendResult SubprocessBackend::execute(const ExecutorSpec& spec, const ShimPayload& payload) {
  spec.validate();
  if (spec.runtime_command.empty() || !resolve_executable(spec.runtime_command.front())) {
    throw BackendUnavailable("runtime command not executable: " +
                             (spec.runtime_command.empty() ? std::string("<empty>") : spec.runtime_command.front()));
  }

  SlotGuard slot(slots_);
  TempDir workdir;
  const std::string input = payload.to_json().dump();

  Pipe in = make_pipe();
  Pipe out = make_pipe();
  Pipe err = make_pipe();
  Pipe report = make_pipe();

  const auto start = Clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw EnvironmentError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    exec_child(spec.runtime_command, workdir.path(), in.read.get(), out.write.get(), err.write.get(),
               report.write.get());
  }
  ::setpgid(pid, pid);
  in.read.reset();
  out.write.reset();
  err.write.reset();
  report.write.reset();

  int exec_errno = 0;
  ssize_t got;
  do {
    got = ::read(report.read.get(), &exec_errno, sizeof exec_errno);
  } while (got < 0 && errno == EINTR);
  if (got == static_cast<ssize_t>(sizeof exec_errno)) {
    ::waitpid(pid, nullptr, 0);
    throw BackendUnavailable("cannot execute " + spec.runtime_command.front() + ": " + std::strerror(exec_errno));
  }

  set_nonblocking(in.write.get());
  set_nonblocking(out.read.get());
  set_nonblocking(err.read.get());

  BackendResult result;
  std::size_t written = 0;
  bool out_open = true;
  bool err_open = true;
  bool exited = false;
  int status = 0;
  const auto deadline = start + spec.time_limit;

  while (true) {
    if (!exited) {
      pid_t r = ::waitpid(pid, &status, WNOHANG);
      if (r == pid) exited = true;
    }
    if (exited || (!out_open && !err_open)) {
      if (out_open) drain(out.read.get(), result.stdout_text, spec.output_cap);
      if (err_open) drain(err.read.get(), result.stderr_text, spec.output_cap);
      if (exited) break;
    }
    auto now = Clock::now();
    if (now >= deadline) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      result.timed_out = true;
      break;
    }

    std::vector<pollfd> fds;
    if (in.write.valid()) fds.push_back({in.write.get(), POLLOUT, 0});
    if (out_open) fds.push_back({out.read.get(), POLLIN, 0});
    if (err_open) fds.push_back({err.read.get(), POLLIN, 0});
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    int wait_ms = static_cast<int>(std::clamp<long long>(remaining, 1, 20));
    if (!fds.empty()) {
      ::poll(fds.data(), fds.size(), wait_ms);
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(wait_ms));
    }

    for (const auto& p : fds) {
      if (p.revents == 0) continue;
      if (p.fd == in.write.get()) {
        while (written < input.size()) {
          ssize_t n = ::write(in.write.get(), input.data() + written, input.size() - written);
          if (n > 0) {
            written += static_cast<std::size_t>(n);
          } else if (n < 0 && errno == EINTR) {
            continue;
          } else {
            if (n < 0 && errno != EAGAIN) written = input.size();
            break;
          }
        }
        if (written >= input.size()) in.write.reset();
      } else if (p.fd == out.read.get()) {
        out_open = drain(out.read.get(), result.stdout_text, spec.output_cap);
      } else if (p.fd == err.read.get()) {
        err_open = drain(err.read.get(), result.stderr_text, spec.output_cap);
      }
    }
  }
  // Reap anything the candidate left behind in its process group.
  ::kill(-pid, SIGKILL);

  result.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  if (!result.timed_out) {
    if (WIFEXITED(status)) {
      result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
      result.exit_code = 128 + WTERMSIG(status);
    }
  }
  result.stdout_text = tail_cap(std::move(result.stdout_text), spec.output_cap);
  result.stderr_text = tail_cap(std::move(result.stderr_text), spec.output_cap);
  return result;
}

std::string tail_cap(std::string text, std::size_t cap) {
  if (text.size() > cap) text.erase(0, text.size() - cap);
  return text;
}

ExecutionOutcome classify_result(const BackendResult& result, std::size_t output_cap) {
  ExecutionOutcome outcome;
  outcome.wall_time = result.wall_time;
  outcome.klass = OutcomeClass::syntax_error;
  if (result.timed_out) {
    outcome.diagnostic = "timeout";
    return outcome;
  }

  // The protocol line is the last non-empty stdout line.
  std::string_view out = result.stdout_text;
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r' || out.back() == ' ')) out.remove_suffix(1);
  std::size_t nl = out.rfind('\n');
  std::string_view last = nl == std::string_view::npos ? out : out.substr(nl + 1);

  nlohmann::json doc = nlohmann::json::parse(last, nullptr, false);
  if (doc.is_object() && doc.contains("status") && doc["status"].is_string() && result.exit_code == 0) {
    const std::string status = doc["status"].get<std::string>();
    std::string message;
    if (auto it = doc.find("message"); it != doc.end() && it->is_string()) message = it->get<std::string>();
    message = tail_cap(std::move(message), output_cap);
    if (status == "pass") {
      outcome.klass = OutcomeClass::pass;
      return outcome;
    }
    if (status == "assert") {
      outcome.klass = OutcomeClass::assert_error;
      outcome.diagnostic = message.empty() ? "AssertionError" : message;
      if (auto it = doc.find("test_index"); it != doc.end() && it->is_number_unsigned()) {
        outcome.failed_test_index = it->get<std::size_t>();
      } else {
        outcome.failed_test_index = 0;
      }
      return outcome;
    }
    if (status == "error") {
      outcome.diagnostic = message.empty() ? "error" : message;
      return outcome;
    }
  }

  std::string raw = result.stdout_text;
  if (!result.stderr_text.empty()) {
    if (!raw.empty() && raw.back() != '\n') raw += '\n';
    raw += result.stderr_text;
  }
  raw = tail_cap(std::move(raw), output_cap);
  outcome.diagnostic = raw.empty() ? "runner exited with code " + std::to_string(result.exit_code) : raw;
  return outcome;
}

ExecutionOutcome run_tests(const ExecutorSpec& spec, const std::string& code, const std::vector<std::string>& tests,
                           std::string_view entry_point, ExecutionBackend& backend) {
  if (tests.empty()) throw PreconditionError("run_tests: no test statements");
  ShimPayload payload{code, tests, std::string(entry_point)};
  return classify_result(backend.execute(spec, payload), spec.output_cap);
}

ExecutionOutcome run_candidate(const ExecutorSpec& spec, const GenerationArtifact& artifact,
                               std::string_view entry_point, ExecutionBackend& backend) {
  if (artifact.tests.empty()) throw PreconditionError("run_candidate: artifact has no tests");
  return run_tests(spec, artifact.code, artifact.tests, entry_point, backend);
}

ExecutionOutcome run_reference(const ExecutorSpec& spec, const Task& task, const std::string& code,
                               ExecutionBackend& backend) {
  if (code.empty()) throw PreconditionError("run_reference: empty code");
  return run_tests(spec, code, {reference_test_program(task)}, task.entry_point, backend);
}

void preflight(const ExecutorSpec& spec, ExecutionBackend& backend) {
  ExecutionOutcome o = run_tests(spec, "def codecot_probe(x):\n    return x + 1\n", {"assert codecot_probe(1) == 2"},
                                 "codecot_probe", backend);
  if (!o.passed()) {
    std::string cmd;
    for (const auto& part : spec.runtime_command) cmd += (cmd.empty() ? "" : " ") + part;
    throw BackendUnavailable("runner self-check failed for '" + cmd + "': " + tail_cap(o.diagnostic, 500));
  }
}

}  // namespace codecot
