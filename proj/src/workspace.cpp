#include "vd/workspace.hpp"

#include "vd/error.hpp"

namespace vd {

Workspace::Workspace(WorkspaceOptions options) : options_(std::move(options)) {
  storage_ = std::make_unique<Storage>();
  registry_ = std::make_unique<TransformRegistry>(options_.external);
  if (options_.data_dir) {
    std::filesystem::create_directories(*options_.data_dir);
    registry_->load_plugins(*options_.data_dir / "transforms.d");
  }
  catalog_ = std::make_unique<Catalog>(*storage_, *registry_, options_.data_dir);
  cache_ = std::make_unique<Cache>(options_.data_dir, options_.cache_budget);
  engine_ = std::make_unique<Engine>(*catalog_, *storage_, *registry_, *cache_);
}

std::string Workspace::register_explicit(const std::string& uri, const std::string& format,
                                         const std::optional<std::filesystem::path>& labels_file,
                                         const nlohmann::json& metadata, const std::string& creator) {
  return catalog_->register_explicit(uri, format, labels_file, metadata, creator);
}

std::string Workspace::create_virtual(const ssvd::VirtualDatasetSpec& spec, const std::string& creator,
                                      const std::optional<std::string>& requested_id) {
  StatsResolver resolver = [this](const std::string& id) { return engine_->resolved_index(id); };
  constexpr int kAttempts = 8;
  for (int attempt = 1;; ++attempt) {
    auto validated = ssvd::validate_spec(spec, *registry_, *catalog_);
    try {
      return catalog_->create_virtual(validated, creator, resolver, requested_id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ValidationStale || attempt == kAttempts) throw;
    }
  }
}

std::string Workspace::create_virtual_text(std::string_view yaml_text, const std::string& creator) {
  return create_virtual(ssvd::parse_spec(yaml_text), creator);
}

std::vector<std::string> Workspace::remove(const std::string& id, RemoveMode mode) {
  return catalog_->remove(id, mode);
}

}  // namespace vd
