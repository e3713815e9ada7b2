#pragma once

#include "vd/service.hpp"
#include "vd/workspace.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <thread>

namespace vdtest {

/// A Service listening on 127.0.0.1 with a free port, served from a background thread.
class ServiceThread {
 public:
  explicit ServiceThread(vd::Workspace& ws, vd::ServiceOptions options = {});
  ~ServiceThread();

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  vd::Service& service() { return service_; }

 private:
  vd::Service service_;
  int port_ = 0;
  std::thread thread_;
};

/// The twelve-step session: register three farms, create merge, select and
/// partition, materialize, list and fetch objects, lineage, a refused and a
/// cascading delete. Returns every step's result plus the final catalog,
/// with dataset ids replaced by their order of appearance.
nlohmann::json http_session(const std::string& base_url, const std::filesystem::path& farms);
nlohmann::json library_session(vd::Workspace& ws, const std::filesystem::path& farms);

}  // namespace vdtest
