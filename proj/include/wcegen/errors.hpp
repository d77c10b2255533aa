#pragma once

#include <stdexcept>
#include <string>

namespace wce {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag; `what()` carries the human diagnostic.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)), message_(message) {}
    const std::string& kind() const noexcept { return kind_; }
    /// Diagnostic without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    std::string kind_;
    std::string message_;
};

#define WCE_DEFINE_ERROR(Name)                                                \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& message) : Error(#Name, message) {}  \
    };

WCE_DEFINE_ERROR(UnknownColor)
WCE_DEFINE_ERROR(DecodeError)
WCE_DEFINE_ERROR(IoError)
WCE_DEFINE_ERROR(InfeasibleSpec)
WCE_DEFINE_ERROR(InvalidMap)
WCE_DEFINE_ERROR(MissingMask)
WCE_DEFINE_ERROR(ShapeMismatch)
WCE_DEFINE_ERROR(EmptyDataset)
WCE_DEFINE_ERROR(ShapeError)
WCE_DEFINE_ERROR(NaNLoss)
WCE_DEFINE_ERROR(BadRange)
WCE_DEFINE_ERROR(TimestepOutOfRange)
WCE_DEFINE_ERROR(ConfigError)
WCE_DEFINE_ERROR(FormatError)
WCE_DEFINE_ERROR(VersionError)
WCE_DEFINE_ERROR(MissingAE)
WCE_DEFINE_ERROR(ResolutionMismatch)
WCE_DEFINE_ERROR(NotEnoughImages)
WCE_DEFINE_ERROR(IncompleteResponses)
WCE_DEFINE_ERROR(UsageError)

#undef WCE_DEFINE_ERROR

}  // namespace wce
