#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snt {

enum class ErrorKind {
    ZeroVector,
    DimMismatch,
    DuplicateId,
    EmptyIndex,
    IoFailure,
    CorruptHeader,
    TruncatedPayload,
    AlreadyExists,
    SealedIndex,
    BackendUnavailable,
    BackendMalformedResponse,
    ImageLoadFailure,
    NotFound,
    ShapeMismatch,
    NonFiniteInput,
    EmptyText,
    DivergenceDetected,
    GeneratorUnavailable,
    GeneratorTimeout,
    EmptyEvalSet,
    DegenerateRanking,
    Undefined,
    UnknownStage,
    TooFewEntities,
    DanglingReference,
    ClientUnavailable,
    MalformedResponse,
    InvalidArgument,
    ParseError,
};

constexpr std::string_view kind_name(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::EmptyIndex: return "EmptyIndex";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::AlreadyExists: return "AlreadyExists";
    case ErrorKind::SealedIndex: return "SealedIndex";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::BackendMalformedResponse: return "BackendMalformedResponse";
    case ErrorKind::ImageLoadFailure: return "ImageLoadFailure";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::EmptyText: return "EmptyText";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::GeneratorUnavailable: return "GeneratorUnavailable";
    case ErrorKind::GeneratorTimeout: return "GeneratorTimeout";
    case ErrorKind::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorKind::DegenerateRanking: return "DegenerateRanking";
    case ErrorKind::Undefined: return "Undefined";
    case ErrorKind::UnknownStage: return "UnknownStage";
    case ErrorKind::TooFewEntities: return "TooFewEntities";
    case ErrorKind::DanglingReference: return "DanglingReference";
    case ErrorKind::ClientUnavailable: return "ClientUnavailable";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    }
    return "Unknown";
}

/// Exception carrying a machine-readable kind alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(kind_name(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

} // namespace snt
