#include "codecot/commands.hpp"

#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "codecot/hashing.hpp"

namespace codecot {
namespace {

namespace fs = std::filesystem;

TemplateSet template_set_for(const RunManifest& m) {
  return m.template_dir.empty() ? TemplateSet::builtin() : TemplateSet::load(m.template_dir);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EnvironmentError("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw EnvironmentError("write to " + path.string() + " failed");
}

// Drops a final line that lacks its newline (a write cut short by a crash).
void drop_partial_tail(const fs::path& path) {
  if (!fs::exists(path)) return;
  std::string content = read_file(path);
  if (content.empty() || content.back() == '\n') return;
  std::size_t keep = content.rfind('\n');
  fs::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
}

std::unique_ptr<ChatClient> make_client(const RunManifest& m, const RunServices& services) {
  auto live = [&]() -> std::unique_ptr<ChatClient> {
    if (services.live_client) return services.live_client();
    return HttpChatClient::from_environment();
  };
  switch (m.client_mode) {
    case ClientMode::live:
      return live();
    case ClientMode::record:
      return std::make_unique<RecordingClient>(live(), Cassette::open(m.cassette_path));
    case ClientMode::replay:
      return std::make_unique<ReplayClient>(Cassette::open(m.cassette_path));
  }
  throw UsageError("unknown client mode");
}

std::shared_ptr<ExecutionBackend> backend_for(const RunServices& services) {
  if (services.backend) return services.backend;
  return std::make_shared<SubprocessBackend>();
}

nlohmann::json executor_json(const ExecutorSpec& e) {
  return nlohmann::json{
      {"runtime_command", e.runtime_command},
      {"time_limit_ms", e.time_limit.count()},
      {"output_cap", e.output_cap},
  };
}

ExecutorSpec executor_from_json(const nlohmann::json& j) {
  ExecutorSpec e;
  e.runtime_command = j.at("runtime_command").get<std::vector<std::string>>();
  e.time_limit = std::chrono::milliseconds(j.at("time_limit_ms").get<long long>());
  e.output_cap = j.at("output_cap").get<std::size_t>();
  return e;
}

std::string compute_run_id(const RunManifest& m) {
  nlohmann::json j = m.to_json();
  j.erase("run_id");
  j.erase("jobs");
  j.erase("output_dir");
  return sha256_hex(j.dump()).substr(0, 16);
}

}  // namespace

std::string_view to_string(ClientMode mode) {
  switch (mode) {
    case ClientMode::live:
      return "live";
    case ClientMode::record:
      return "record";
    case ClientMode::replay:
      return "replay";
  }
  return "live";
}

ClientMode parse_client_mode(std::string_view name) {
  if (name == "live") return ClientMode::live;
  if (name == "record") return ClientMode::record;
  if (name == "replay") return ClientMode::replay;
  throw UsageError("unknown client mode '" + std::string(name) + "' (expected live, record or replay)");
}

nlohmann::json RunManifest::to_json() const {
  return nlohmann::json{
      {"run_id", run_id},
      {"dataset", {{"path", dataset_path.string()}, {"format", to_string(format)}, {"sha256", dataset_sha256}}},
      {"model", model.to_json()},
      {"loop", loop.to_json()},
      {"executor", executor_json(executor)},
      {"client", {{"mode", to_string(client_mode)}, {"cassette", cassette_path.string()}}},
      {"templates", {{"dir", template_dir.string()}, {"version", template_version}, {"sha256", template_sha256}}},
      {"output_dir", output_dir.string()},
      {"jobs", jobs},
  };
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  const auto& ds = j.at("dataset");
  m.dataset_path = ds.at("path").get<std::string>();
  m.format = parse_dataset_format(ds.at("format").get<std::string>());
  m.dataset_sha256 = ds.at("sha256").get<std::string>();
  m.model = ModelConfig::from_json(j.at("model"));
  m.loop = LoopConfig::from_json(j.at("loop"));
  m.executor = executor_from_json(j.at("executor"));
  m.client_mode = parse_client_mode(j.at("client").at("mode").get<std::string>());
  m.cassette_path = j.at("client").at("cassette").get<std::string>();
  m.template_dir = j.at("templates").at("dir").get<std::string>();
  m.template_version = j.at("templates").at("version").get<std::string>();
  m.template_sha256 = j.at("templates").at("sha256").get<std::string>();
  m.output_dir = j.at("output_dir").get<std::string>();
  m.jobs = j.at("jobs").get<std::size_t>();
  return m;
}

void finalize_manifest(RunManifest& m) {
  m.model.validate();
  m.loop.validate();
  m.executor.validate();
  if (m.output_dir.empty()) throw UsageError("an output directory is required");
  if (m.jobs == 0) throw UsageError("jobs must be at least 1");
  if (m.client_mode != ClientMode::live && m.cassette_path.empty()) {
    throw UsageError(std::string(to_string(m.client_mode)) + " mode requires a cassette path");
  }
  if (m.client_mode == ClientMode::replay && !fs::is_regular_file(m.cassette_path)) {
    throw EnvironmentError("cassette not found: " + m.cassette_path.string());
  }
  if (!fs::is_regular_file(m.dataset_path)) throw EnvironmentError("dataset not found: " + m.dataset_path.string());
  m.dataset_sha256 = sha256_file_hex(m.dataset_path);
  TemplateSet templates = template_set_for(m);
  m.template_version = templates.version;
  m.template_sha256 = templates.hash();
  m.run_id = compute_run_id(m);
}

RunSummary cmd_run(RunManifest manifest, const RunServices& services) {
  finalize_manifest(manifest);
  Dataset dataset = load_dataset(manifest.dataset_path, manifest.format);
  PromptBuilder prompts(template_set_for(manifest));

  std::error_code ec;
  fs::create_directories(manifest.output_dir, ec);
  if (ec) throw EnvironmentError("cannot create " + manifest.output_dir.string() + ": " + ec.message());

  const fs::path manifest_path = manifest.output_dir / kManifestFile;
  if (fs::exists(manifest_path)) {
    nlohmann::json existing = nlohmann::json::parse(read_file(manifest_path), nullptr, false);
    std::string existing_id =
        existing.is_object() && existing.contains("run_id") ? existing["run_id"].get<std::string>() : "";
    if (existing_id != manifest.run_id) {
      throw UsageError("output directory " + manifest.output_dir.string() + " holds a different run (" +
                       existing_id + ")");
    }
  } else {
    write_file(manifest_path, manifest.to_json().dump(2) + "\n");
  }

  RunSummary summary;
  summary.run_id = manifest.run_id;
  summary.traces_path = manifest.output_dir / kTracesFile;
  drop_partial_tail(summary.traces_path);

  std::set<std::string, std::less<>> done;
  for (const auto& t : load_traces(summary.traces_path)) done.insert(t.task_id);

  std::vector<const Task*> pending;
  for (const auto& t : dataset.tasks) {
    if (done.count(t.task_id)) {
      ++summary.skipped;
    } else {
      pending.push_back(&t);
    }
  }
  if (pending.empty()) return summary;

  std::unique_ptr<ChatClient> client = make_client(manifest, services);
  std::shared_ptr<ExecutionBackend> backend = backend_for(services);
  PipelineContext ctx{prompts, *client, manifest.model, *backend, manifest.executor};

  std::ofstream traces(summary.traces_path, std::ios::binary | std::ios::app);
  if (!traces) throw EnvironmentError("cannot open " + summary.traces_path.string());
  std::ofstream errors;

  run_tasks(pending, manifest.loop, ctx, manifest.jobs, [&](TaskRun&& run) {
    if (run.ok()) {
      nlohmann::json record = to_json(std::get<RefinementTrace>(run.result));
      record["config"] = manifest.loop.to_json();
      record["model_name"] = manifest.model.model_name;
      traces << record.dump() << '\n';
      traces.flush();
      ++summary.completed;
      return;
    }
    if (!errors.is_open()) errors.open(manifest.output_dir / kErrorsFile, std::ios::binary | std::ios::app);
    nlohmann::json record{{"run_id", manifest.run_id}, {"task_id", run.task_id},
                          {"error", std::get<std::string>(run.result)}};
    errors << record.dump() << '\n';
    errors.flush();
    ++summary.errored;
  });
  if (!traces) throw EnvironmentError("write to " + summary.traces_path.string() + " failed");
  return summary;
}

std::vector<RefinementTrace> load_traces(const fs::path& path) {
  std::vector<RefinementTrace> traces;
  if (!fs::exists(path)) return traces;
  std::string content = read_file(path);
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    bool complete = eol != std::string::npos;
    std::string_view line(content.data() + pos, (complete ? eol : content.size()) - pos);
    pos = complete ? eol + 1 : content.size();
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (!complete) break;
      throw Error("traces " + path.string() + " line " + std::to_string(lineno) + " is not JSON");
    }
    try {
      traces.push_back(trace_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw Error("traces " + path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return traces;
}

EvalReport cmd_eval(const EvalRequest& request, const RunServices& services) {
  Dataset dataset = load_dataset(request.dataset_path, request.format);
  if (!fs::exists(request.traces_path)) throw EnvironmentError("traces not found: " + request.traces_path.string());
  std::vector<RefinementTrace> traces = load_traces(request.traces_path);

  fs::path manifest_path =
      request.manifest_path.empty() ? request.traces_path.parent_path() / kManifestFile : request.manifest_path;
  std::optional<RunManifest> manifest;
  if (fs::exists(manifest_path)) manifest = RunManifest::from_json(nlohmann::json::parse(read_file(manifest_path)));

  std::shared_ptr<ExecutionBackend> backend = backend_for(services);
  ScoreOptions opts;
  opts.jobs = request.jobs;
  EvalReport report = score_run(traces, dataset, request.executor, *backend, opts);
  report.dataset_hash = sha256_file_hex(request.dataset_path);
  if (manifest) {
    report.model_name = manifest->model.model_name;
    report.config = manifest->loop.to_json();
    report.config["run_id"] = manifest->run_id;
  }
  if (request.test_validity) {
    report.validity = validate_tests(traces, dataset, request.executor, *backend, request.jobs);
  }

  if (!request.sweep_steps.empty()) {
    if (!manifest) throw UsageError("a step sweep needs the run manifest (" + manifest_path.string() + ")");
    if (manifest->client_mode == ClientMode::replay && !fs::is_regular_file(manifest->cassette_path)) {
      throw EnvironmentError("cassette not found: " + manifest->cassette_path.string());
    }
    PromptBuilder prompts(template_set_for(*manifest));
    std::unique_ptr<ChatClient> client = make_client(*manifest, services);
    PipelineContext ctx{prompts, *client, manifest->model, *backend, request.executor};
    report.sweep = sweep_steps(dataset, manifest->loop, request.sweep_steps, ctx, request.jobs);
  }

  if (!request.report_path.empty()) write_file(request.report_path, report.to_json().dump(2) + "\n");
  return report;
}

std::vector<AblationRow> cmd_ablate(const RunManifest& base, const std::vector<LoopMode>& modes,
                                    const RunServices& services) {
  if (modes.empty()) throw PreconditionError("cmd_ablate: no modes given");
  RunServices shared = services;
  if (!shared.backend) shared.backend = std::make_shared<SubprocessBackend>();

  std::vector<AblationRow> rows;
  for (LoopMode mode : modes) {
    RunManifest m = base;
    m.loop.mode = mode;
    m.loop.refine_tests = base.loop.refine_tests && uses_self_examination(mode);
    m.output_dir = base.output_dir / std::string(to_string(mode));
    RunSummary summary = cmd_run(m, shared);
    if (summary.partial()) {
      throw PartialRunError("ablation run for mode " + std::string(to_string(mode)) + " left " +
                  std::to_string(summary.errored) + " task(s) errored; see " +
                  (m.output_dir / kErrorsFile).string());
    }
    std::vector<RefinementTrace> traces = load_traces(summary.traces_path);
    Dataset dataset = load_dataset(m.dataset_path, m.format);
    ScoreOptions opts;
    opts.jobs = m.jobs;
    EvalReport report = score_run(traces, dataset, m.executor, *shared.backend, opts);

    AblationRow row;
    row.mode = mode;
    row.pass_at_1 = report.pass_at_k.at(1);
    row.errors = report.errors;
    for (const auto& t : traces) {
      row.client_calls += t.steps.size();
      row.executions += t.executions();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::ostringstream os;
  os << pad("mode", 16) << pad("pass@1", 9) << pad("calls", 8) << pad("executions", 12) << pad("AssertError", 13)
     << "SyntaxError\n";
  for (const auto& r : rows) {
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.3f", r.pass_at_1);
    bool any = r.errors.failing() > 0;
    os << pad(std::string(to_string(r.mode)), 16) << pad(rate, 9) << pad(std::to_string(r.client_calls), 8)
       << pad(std::to_string(r.executions), 12) << pad(any ? format_percent(r.errors.assert_percent()) : "-", 13)
       << (any ? format_percent(r.errors.syntax_percent()) : "-") << '\n';
  }
  return os.str();
}

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"mode", to_string(r.mode)},
                   {"pass@1", r.pass_at_1},
                   {"client_calls", r.client_calls},
                   {"executions", r.executions},
                   {"errors", r.errors.to_json()}});
  }
  return out;
}

}  // namespace codecot
