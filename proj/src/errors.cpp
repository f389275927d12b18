#include "owg/errors.hpp"

namespace owg {

const char* err_name(Err e) {
  switch (e) {
    case Err::MissingFile: return "MissingFile";
    case Err::FormatError: return "FormatError";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::NonContiguousIds: return "NonContiguousIds";
    case Err::InvalidDepth: return "InvalidDepth";
    case Err::EmptyProjection: return "EmptyProjection";
    case Err::UnknownSegment: return "UnknownSegment";
    case Err::PaletteExhausted: return "PaletteExhausted";
    case Err::GraspOutsideCrop: return "GraspOutsideCrop";
    case Err::DegenerateRectangle: return "DegenerateRectangle";
    case Err::EmptyQuery: return "EmptyQuery";
    case Err::UnknownTarget: return "UnknownTarget";
    case Err::NoGrasps: return "NoGrasps";
    case Err::AuthError: return "AuthError";
    case Err::RateLimited: return "RateLimited";
    case Err::ReplayMiss: return "ReplayMiss";
    case Err::MalformedRemoteResponse: return "MalformedRemoteResponse";
    case Err::AllSamplesUnparsable: return "AllSamplesUnparsable";
    case Err::MissingAnswerBlock: return "MissingAnswerBlock";
    case Err::ArityViolation: return "ArityViolation";
    case Err::OutOfRangeId: return "OutOfRangeId";
    case Err::NoViableGrasp: return "NoViableGrasp";
    case Err::EmptyTarget: return "EmptyTarget";
    case Err::MissingWorldCentroid: return "MissingWorldCentroid";
    case Err::InvalidDepthAtGrasp: return "InvalidDepthAtGrasp";
    case Err::PlacementExhausted: return "PlacementExhausted";
    case Err::UnknownObject: return "UnknownObject";
    case Err::NoFreeSpace: return "NoFreeSpace";
    case Err::DatasetFormatError: return "DatasetFormatError";
    case Err::ProviderError: return "ProviderError";
    case Err::GroundingFailed: return "GroundingFailed";
    case Err::PlanningFailed: return "PlanningFailed";
  }
  return "UnknownError";
}

}  // namespace owg
