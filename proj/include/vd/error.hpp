#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <string_view>

namespace vd {

// Every failure surfaced by the library carries exactly one of these codes.
// The service layer maps each code onto an HTTP status (see service.cpp).
enum class ErrorCode {
  // core-model / csv
  DuplicateColumn,
  RaggedRow,
  ParseError,
  // ssvd
  SyntaxError,
  MissingField,
  UnknownField,
  BadVersion,
  UnknownDataset,
  UnknownTransform,
  ParamError,
  ArityMismatch,
  // catalog
  UnreadableSource,
  EmptyDataset,
  ValidationStale,
  CycleDetected,
  HasDependents,
  NotFound,
  StatsUnavailable,
  // storage
  SourceChanged,
  // transforms
  NoCommonColumns,
  MissingKey,
  UnpairedObject,
  UnknownColumn,
  UnknownLabelKey,
  NonNumericColumn,
  PluginCrashed,
  ProtocolViolation,
  Timeout,
  DuplicateTransform,
  // engine
  TransformFailed,
  BrokenLineage,
  CacheCorrupt,
  // service
  Unauthorized,
  Forbidden,
  BadRequest,
  Internal,
};

/// UPPER_SNAKE machine string for a code, e.g. HAS_DEPENDENTS.
std::string_view code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(std::move(message)), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

}  // namespace vd
