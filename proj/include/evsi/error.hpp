#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evsi {

enum class ErrorCode : std::uint8_t {
    InvalidArgument,
    InvalidRatio,
    LengthMismatch,
    LabelOutOfRange,
    EmptyCounts,
    DegenerateCounts,
    EmptySequence,
    SingleClassData,
    UnknownFeature,
    MissingFeature,
    EmptyDataset,
    TooFewSamples,
    DisjointnessViolation,
    MalformedHeader,
    NonNumericValue,
    DuplicateKey,
    InsufficientSimulations,
    InvalidConfig,
    IoError,
    SchemaViolation,
    ProbabilityOutOfRange,
    UnknownSensor,
    AlreadyDeployed,
    NotDeployed,
    Busy,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::InvalidRatio: return "invalid_ratio";
        case ErrorCode::LengthMismatch: return "length_mismatch";
        case ErrorCode::LabelOutOfRange: return "label_out_of_range";
        case ErrorCode::EmptyCounts: return "empty_counts";
        case ErrorCode::DegenerateCounts: return "degenerate_counts";
        case ErrorCode::EmptySequence: return "empty_sequence";
        case ErrorCode::SingleClassData: return "single_class_data";
        case ErrorCode::UnknownFeature: return "unknown_feature";
        case ErrorCode::MissingFeature: return "missing_feature";
        case ErrorCode::EmptyDataset: return "empty_dataset";
        case ErrorCode::TooFewSamples: return "too_few_samples";
        case ErrorCode::DisjointnessViolation: return "disjointness_violation";
        case ErrorCode::MalformedHeader: return "malformed_header";
        case ErrorCode::NonNumericValue: return "non_numeric_value";
        case ErrorCode::DuplicateKey: return "duplicate_key";
        case ErrorCode::InsufficientSimulations: return "insufficient_simulations";
        case ErrorCode::InvalidConfig: return "invalid_config";
        case ErrorCode::IoError: return "io_error";
        case ErrorCode::SchemaViolation: return "schema_violation";
        case ErrorCode::ProbabilityOutOfRange: return "probability_out_of_range";
        case ErrorCode::UnknownSensor: return "unknown_sensor";
        case ErrorCode::AlreadyDeployed: return "already_deployed";
        case ErrorCode::NotDeployed: return "not_deployed";
        case ErrorCode::Busy: return "busy";
    }
    return "unknown";
}

/// Every module reports failures through this exception; `code()` is stable
/// and is what the CLI and the HTTP layer map onto exit codes / ApiError.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

#define EVSI_REQUIRE(cond, code, msg)                 \
    do {                                              \
        if (!(cond)) throw ::evsi::Error((code), (msg)); \
    } while (0)

}  // namespace evsi
