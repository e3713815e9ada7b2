#pragma once

#include "vd/transforms.hpp"

#include <filesystem>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

namespace vd {

struct ProcessResult {
  int exit_status = 0;  // exit code, or 128 + signal number
  std::string out;
  std::string err;
  bool timed_out = false;
};

/// Runs `argv` with `input` on stdin and an environment restricted to the
/// allowlisted variables. Reads stdout/stderr concurrently with the write so
/// large payloads cannot deadlock.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                          const ExternalOptions& options);

/// User-defined transform backed by an executable. Per object group the
/// process receives the group's tables on stdin as CSV blocks separated by
/// `---` lines, params as `key=value` argv entries (plus `seed=N`), and must
/// print exactly one CSV block per output slot.
class ExternalTransform final : public Transform {
 public:
  ExternalTransform(TransformDescriptor d, ExternalOptions options);

  const TransformDescriptor& descriptor() const override { return d_; }
  void check_call(const TransformCall& call) const override;
  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext& ctx) const override;
  std::vector<std::vector<Table>> compute_all(std::span<const InputObjects> inputs, const TransformCall& call,
                                              const PlanResult& plan) const override;

  /// Encodes params and seed as command-line arguments, sorted by key.
  static std::vector<std::string> encode_args(const nlohmann::json& params, std::optional<std::uint64_t> seed);

 private:
  TransformDescriptor d_;
  ExternalOptions options_;
  std::shared_ptr<std::counting_semaphore<>> slots_;
};

/// Parses a `transforms.d/<id>.yaml` registration. Relative `exec` paths are
/// resolved against the file's directory.
std::shared_ptr<ExternalTransform> load_external_transform(const std::filesystem::path& file,
                                                           const ExternalOptions& options);

}  // namespace vd
