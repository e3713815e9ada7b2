#include "vd/external.hpp"

#include "vd/csv.hpp"
#include "vd/error.hpp"
#include "vd/util.hpp"
#include "vd/yaml_value.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace vd {

namespace {

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

std::string excerpt(const std::string& s, std::size_t limit = 512) {
  return s.size() <= limit ? s : s.substr(s.size() - limit);
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                          const ExternalOptions& options) {
  // A plugin that exits without draining stdin must not take the service down.
  static std::once_flag sigpipe_once;
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) || ::pipe2(out_pipe, O_CLOEXEC) || ::pipe2(err_pipe, O_CLOEXEC)) {
    throw Error(ErrorCode::Internal, std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<std::string> env_strings;
  for (const auto& name : options.env_allowlist) {
    if (const char* v = std::getenv(name.c_str())) env_strings.push_back(name + "=" + v);
  }
  std::vector<char*> envp;
  for (auto& e : env_strings) envp.push_back(e.data());
  envp.push_back(nullptr);
  std::vector<std::string> args = argv;
  std::vector<char*> cargv;
  for (auto& a : args) cargv.push_back(a.data());
  cargv.push_back(nullptr);

  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::Internal, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::execve(cargv[0], cargv.data(), envp.data());
    const char msg[] = "exec failed\n";
    ssize_t ignored = ::write(STDERR_FILENO, msg, sizeof(msg) - 1);
    (void)ignored;
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  int to_child = in_pipe[1], from_out = out_pipe[0], from_err = err_pipe[0];
  ::fcntl(to_child, F_SETFL, O_NONBLOCK);

  ProcessResult result;
  std::size_t written = 0;
  if (input.empty()) close_fd(to_child);
  const auto deadline = std::chrono::steady_clock::now() + options.timeout;
  char buf[65536];

  while (from_out >= 0 || from_err >= 0) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      result.timed_out = true;
      ::kill(pid, SIGKILL);
      break;
    }
    pollfd fds[3];
    int n = 0;
    int out_at = -1, err_at = -1, in_at = -1;
    if (from_out >= 0) { fds[n] = {from_out, POLLIN, 0}; out_at = n++; }
    if (from_err >= 0) { fds[n] = {from_err, POLLIN, 0}; err_at = n++; }
    if (to_child >= 0) { fds[n] = {to_child, POLLOUT, 0}; in_at = n++; }
    int rc = ::poll(fds, static_cast<nfds_t>(n), static_cast<int>(std::min<long long>(remaining.count(), 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (in_at >= 0 && (fds[in_at].revents & (POLLOUT | POLLERR | POLLHUP))) {
      ssize_t w = ::write(to_child, input.data() + written, input.size() - written);
      if (w > 0) written += static_cast<std::size_t>(w);
      if (w < 0 && errno != EAGAIN) close_fd(to_child);  // child stopped reading
      if (written == input.size()) close_fd(to_child);
    }
    auto drain = [&](int& fd, int at, std::string& sink) {
      if (at < 0 || !(fds[at].revents & (POLLIN | POLLHUP | POLLERR))) return;
      ssize_t r = ::read(fd, buf, sizeof(buf));
      if (r > 0) {
        sink.append(buf, static_cast<std::size_t>(r));
      } else if (r == 0 || errno != EAGAIN) {
        close_fd(fd);
      }
    };
    drain(from_out, out_at, result.out);
    drain(from_err, err_at, result.err);
  }
  close_fd(to_child);
  close_fd(from_out);
  close_fd(from_err);

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) {
    result.exit_status = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_status = 128 + WTERMSIG(status);
  }
  return result;
}

// ---- ExternalTransform -------------------------------------------------------

ExternalTransform::ExternalTransform(TransformDescriptor d, ExternalOptions options)
    : d_(std::move(d)),
      options_(std::move(options)),
      slots_(std::make_shared<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_processes)))) {
  d_.granularity = Granularity::DatasetLevel;
}

void ExternalTransform::check_call(const TransformCall& call) const {
  Transform::check_call(call);
  if (d_.seeded && !call.seed) {
    throw Error(ErrorCode::ParamError, "parameter 'seed' is required for " + d_.transform_id,
                {{"key", "seed"}, {"reason", "required"}});
  }
}

PlanResult ExternalTransform::plan(std::span<const PlanInput> inputs, const TransformCall&,
                                   const PlanContext&) const {
  const std::size_t groups = inputs.empty() ? 0 : inputs[0].objects->size();
  for (const auto& in : inputs) {
    if (in.objects->size() != groups) {
      throw Error(ErrorCode::ArityMismatch, d_.transform_id + " needs inputs with equal object counts",
                  {{"expected", groups}, {"got", in.objects->size()}, {"what", "objects"}});
    }
  }
  PlanResult r;
  r.slots.resize(d_.output_arity);
  for (std::size_t g = 0; g < groups; ++g) {
    const ObjectEntry& first = (*inputs[0].objects)[g];
    for (auto& slot : r.slots) {
      ObjectEntry e;
      e.object_id = first.object_id;
      e.labels = first.labels;
      e.source = SourceLink{{}, 0, first.object_id, std::nullopt, std::nullopt};
      slot.push_back(std::move(e));
    }
  }
  return r;
}

std::vector<std::string> ExternalTransform::encode_args(const nlohmann::json& params,
                                                        std::optional<std::uint64_t> seed) {
  auto text = [](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    if (v.is_number_float()) return format_double(v.get<double>());
    return v.dump();
  };
  std::vector<std::string> out;
  for (auto it = params.begin(); it != params.end(); ++it) {
    std::string value;
    if (it.value().is_array()) {
      for (std::size_t i = 0; i < it.value().size(); ++i) {
        if (i) value += ",";
        value += text(it.value()[i]);
      }
    } else {
      value = text(it.value());
    }
    out.push_back(it.key() + "=" + value);
  }
  if (seed) out.push_back("seed=" + std::to_string(*seed));
  return out;
}

namespace {

// A lone `---` line inside a block would read as a separator; quote it.
std::string guard_separators(std::string block) {
  std::string out;
  std::size_t start = 0;
  while (start < block.size()) {
    std::size_t end = block.find('\n', start);
    std::string_view line(block.data() + start, (end == std::string::npos ? block.size() : end) - start);
    if (line == "---") {
      out += "\"---\"";
    } else {
      out.append(line);
    }
    if (end == std::string::npos) break;
    out.push_back('\n');
    start = end + 1;
  }
  return out;
}

}  // namespace

std::vector<std::vector<Table>> ExternalTransform::compute_all(std::span<const InputObjects> inputs,
                                                               const TransformCall& call,
                                                               const PlanResult& plan) const {
  std::vector<std::vector<Table>> out(d_.output_arity);
  const std::size_t groups = plan.slots.empty() ? 0 : plan.slots[0].size();
  std::vector<std::string> argv{d_.exec};
  for (auto& a : encode_args(call.params, call.seed)) argv.push_back(std::move(a));

  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<std::string> blocks;
    std::vector<const Schema*> hints;
    for (const auto& in : inputs) {
      blocks.push_back(guard_separators(csv::serialize(*in.objects[g].payload)));
      hints.push_back(&in.objects[g].payload->schema);
    }
    ProcessResult res;
    {
      slots_->acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{*slots_};
      res = run_process(argv, csv::join_blocks(blocks), options_);
    }
    const std::string& object_id = inputs[0].objects[g].object_id;
    if (res.timed_out) {
      throw Error(ErrorCode::Timeout, d_.transform_id + " exceeded its time limit",
                  {{"limit_ms", options_.timeout.count()}, {"object_id", object_id}});
    }
    if (res.exit_status != 0) {
      throw Error(ErrorCode::PluginCrashed,
                  d_.transform_id + " exited with status " + std::to_string(res.exit_status),
                  {{"status", res.exit_status}, {"stderr", excerpt(res.err)}, {"object_id", object_id}});
    }
    auto produced = csv::split_blocks(res.out);
    if (produced.size() != d_.output_arity) {
      throw Error(ErrorCode::ProtocolViolation,
                  d_.transform_id + " printed " + std::to_string(produced.size()) + " blocks, expected " +
                      std::to_string(d_.output_arity),
                  {{"reason", "block count"}, {"object_id", object_id}});
    }
    for (std::size_t s = 0; s < produced.size(); ++s) {
      const Schema* hint = hints[std::min(s, hints.size() - 1)];
      try {
        out[s].push_back(csv::parse_table(produced[s], hint));
      } catch (const Error& e) {
        throw Error(ErrorCode::ProtocolViolation, d_.transform_id + " printed malformed CSV: " + e.what(),
                    {{"reason", e.what()}, {"object_id", object_id}, {"slot", s}});
      }
    }
  }
  return out;
}

// ---- registration file -------------------------------------------------------

std::shared_ptr<ExternalTransform> load_external_transform(const std::filesystem::path& file,
                                                           const ExternalOptions& options) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open plugin file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto doc = yaml::parse(ss.str());
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::BadRequest, "plugin file " + file.string() + ": " + why, {{"file", file.string()}});
  };
  if (!doc.is_object()) throw fail("must be a mapping");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const std::set<std::string> kAllowed{"id", "exec", "input_arity", "output_arity", "params", "seeded",
                                                "summary"};
    if (!kAllowed.count(it.key())) throw fail("unknown field '" + it.key() + "'");
  }
  if (!doc.contains("id") || !doc["id"].is_string()) throw fail("missing 'id'");
  if (!doc.contains("exec") || !doc["exec"].is_string()) throw fail("missing 'exec'");

  TransformDescriptor d;
  d.transform_id = doc["id"].get<std::string>();
  std::filesystem::path exec = doc["exec"].get<std::string>();
  if (exec.is_relative()) exec = std::filesystem::absolute(file.parent_path() / exec);
  d.exec = exec.string();
  std::size_t in_arity = doc.value("input_arity", 1);
  d.min_inputs = d.max_inputs = in_arity;
  d.output_arity = doc.value("output_arity", 1);
  if (in_arity < 1 || d.output_arity < 1) throw fail("arities must be >= 1");
  d.seeded = doc.value("seeded", false);
  d.deterministic = true;
  d.summary = doc.value("summary", std::string("external transform ") + d.exec);

  if (doc.contains("params") && !doc["params"].is_null()) {
    const auto& params = doc["params"];
    auto add = [&](const std::string& key, const nlohmann::json& spec) {
      ParamSpec p;
      p.key = key;
      std::string type = "any";
      if (spec.is_string()) {
        type = spec.get<std::string>();
      } else if (spec.is_object()) {
        type = spec.value("type", std::string("any"));
        p.required = spec.value("required", false);
      }
      auto t = parse_param_type(type);
      if (!t) throw fail("unknown param type '" + type + "'");
      p.type = *t;
      d.params.push_back(std::move(p));
    };
    if (params.is_object()) {
      for (auto it = params.begin(); it != params.end(); ++it) add(it.key(), it.value());
    } else if (params.is_array()) {
      for (const auto& p : params) {
        if (!p.is_object() || !p.contains("key")) throw fail("params entries need a 'key'");
        add(p["key"].get<std::string>(), p);
      }
    } else {
      throw fail("'params' must be a mapping or a list");
    }
  }
  return std::make_shared<ExternalTransform>(std::move(d), options);
}

}  // namespace vd
