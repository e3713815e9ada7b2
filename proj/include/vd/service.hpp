#pragma once

#include "vd/error.hpp"
#include "vd/workspace.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace vd {

enum class Role { Reader, Writer };

struct ServiceConfig {
  std::string addr = "127.0.0.1:8470";
  std::optional<std::filesystem::path> data_dir;
  std::uint64_t cache_budget = Cache::kDefaultBudget;
  bool auth_enabled = false;
  std::optional<std::filesystem::path> token_file;

  /// Reads `vd.yaml` (when given) and then applies VD_ADDR, VD_DATA_DIR and
  /// VD_CACHE_BUDGET from the environment.
  static ServiceConfig load(const std::optional<std::filesystem::path>& file);
  void apply_env();

  std::string host() const;
  int port() const;
};

struct Principal {
  std::string name;
  Role role = Role::Writer;
};

/// Token file lines: `<token> <reader|writer> [name]`; blank lines and `#` comments ignored.
std::map<std::string, Principal> load_tokens(const std::filesystem::path& file);

/// HTTP status for an error code.
int http_status(ErrorCode code);
nlohmann::json error_body(const Error& e);

struct ServiceOptions {
  /// Empty means auth is disabled and every caller is an anonymous writer.
  std::map<std::string, Principal> tokens;
  /// JSON-lines audit trail; null keeps only the in-memory count.
  std::optional<std::filesystem::path> audit_log;
};

/// REST front end over a Workspace, served under `/v1`.
class Service {
 public:
  Service(Workspace& workspace, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();
  void wait_until_ready() const;

  std::uint64_t audit_lines() const;
  std::string metrics_text() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vd
