#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pbf {

/// Every failure the library can raise. The CLI maps these onto exit codes.
enum class ErrorCode {
    // data-model
    DimensionMismatch,
    NonFiniteInput,
    ReplicateCountTooSmall,
    IndexOutOfRange,
    InvalidModel,
    UnknownSlot,
    ParseError,
    // likelihoods
    InvalidCount,
    LinkOverflow,
    NonPositiveLowerBand,
    // samplers
    NonFiniteInit,
    AllProposalsRejected,
    DegenerateWeights,
    SubsampleTooLarge,
    // crossval
    ZeroDensityFold,
    EmptyPriorSupport,
    PriorIncompatible,
    FoldCountMismatch,
    // inverse-priors
    SlopeZero,
    NonPositiveBandEdge,
    // kl-theory
    NonFiniteIntegrand,
    NonPositiveVariance,
    DegenerateCovariateSpace,
    SingularMomentMatrix,
    RankDeficientDesign,
    NonStationaryTruth,
    NoConvergence,
    UnsupportedPair,
    // experiments / cli
    InvalidConfig,
};

constexpr std::string_view errorName(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::ReplicateCountTooSmall: return "ReplicateCountTooSmall";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::InvalidModel: return "InvalidModel";
        case ErrorCode::UnknownSlot: return "UnknownSlot";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InvalidCount: return "InvalidCount";
        case ErrorCode::LinkOverflow: return "LinkOverflow";
        case ErrorCode::NonPositiveLowerBand: return "NonPositiveLowerBand";
        case ErrorCode::NonFiniteInit: return "NonFiniteInit";
        case ErrorCode::AllProposalsRejected: return "AllProposalsRejected";
        case ErrorCode::DegenerateWeights: return "DegenerateWeights";
        case ErrorCode::SubsampleTooLarge: return "SubsampleTooLarge";
        case ErrorCode::ZeroDensityFold: return "ZeroDensityFold";
        case ErrorCode::EmptyPriorSupport: return "EmptyPriorSupport";
        case ErrorCode::PriorIncompatible: return "PriorIncompatible";
        case ErrorCode::FoldCountMismatch: return "FoldCountMismatch";
        case ErrorCode::SlopeZero: return "SlopeZero";
        case ErrorCode::NonPositiveBandEdge: return "NonPositiveBandEdge";
        case ErrorCode::NonFiniteIntegrand: return "NonFiniteIntegrand";
        case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
        case ErrorCode::DegenerateCovariateSpace: return "DegenerateCovariateSpace";
        case ErrorCode::SingularMomentMatrix: return "SingularMomentMatrix";
        case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorCode::NonStationaryTruth: return "NonStationaryTruth";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::UnsupportedPair: return "UnsupportedPair";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// True for errors caused by bad input or configuration rather than by the
/// estimators themselves.
constexpr bool isValidationError(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionMismatch:
        case ErrorCode::NonFiniteInput:
        case ErrorCode::ReplicateCountTooSmall:
        case ErrorCode::IndexOutOfRange:
        case ErrorCode::InvalidModel:
        case ErrorCode::UnknownSlot:
        case ErrorCode::ParseError:
        case ErrorCode::InvalidConfig:
        case ErrorCode::UnsupportedPair:
            return true;
        default:
            return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string_view module, const std::string& what)
        : std::runtime_error(std::string(module) + ": " + std::string(errorName(code)) + ": " + what),
          code_(code),
          module_(module) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view name() const noexcept { return errorName(code_); }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorCode code_;
    std::string module_;
};

[[noreturn]] inline void fail(ErrorCode code, std::string_view module, const std::string& what) {
    throw Error(code, module, what);
}

}  // namespace pbf
