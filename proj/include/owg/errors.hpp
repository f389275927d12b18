#pragma once
#include <stdexcept>
#include <string>

namespace owg {

// Every failure the engine can signal. Stage wrappers in the executor
// re-tag these with the stage that raised them.
enum class Err {
  MissingFile,
  FormatError,
  DimensionMismatch,
  NonContiguousIds,
  InvalidDepth,
  EmptyProjection,
  UnknownSegment,
  PaletteExhausted,
  GraspOutsideCrop,
  DegenerateRectangle,
  EmptyQuery,
  UnknownTarget,
  NoGrasps,
  AuthError,
  RateLimited,
  ReplayMiss,
  MalformedRemoteResponse,
  AllSamplesUnparsable,
  MissingAnswerBlock,
  ArityViolation,
  OutOfRangeId,
  NoViableGrasp,
  EmptyTarget,
  MissingWorldCentroid,
  InvalidDepthAtGrasp,
  PlacementExhausted,
  UnknownObject,
  NoFreeSpace,
  DatasetFormatError,
  ProviderError,
  GroundingFailed,
  PlanningFailed,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& msg) { throw Error(code, msg); }

}  // namespace owg
