#pragma once

#include <stdexcept>
#include <string>

namespace stresskit {

// Base for all library errors. `class_name()` is stable and machine-parsable;
// the CLI prints it on failure.
class Error : public std::runtime_error {
public:
    Error(std::string class_name, const std::string& msg)
        : std::runtime_error(class_name + ": " + msg), class_name_(std::move(class_name)) {}
    const std::string& class_name() const noexcept { return class_name_; }

private:
    std::string class_name_;
};

#define STRESSKIT_DEFINE_ERROR(NAME)                                  \
    class NAME : public Error {                                       \
    public:                                                           \
        explicit NAME(const std::string& msg) : Error(#NAME, msg) {}  \
    }

STRESSKIT_DEFINE_ERROR(SchemaError);
STRESSKIT_DEFINE_ERROR(EmptyStreamError);
STRESSKIT_DEFINE_ERROR(ManifestError);
STRESSKIT_DEFINE_ERROR(InsufficientDataError);
STRESSKIT_DEFINE_ERROR(ShapeError);
STRESSKIT_DEFINE_ERROR(ConfigError);
STRESSKIT_DEFINE_ERROR(ZeroVarianceError);
STRESSKIT_DEFINE_ERROR(DegenerateDataError);
STRESSKIT_DEFINE_ERROR(NonFiniteGradientError);
STRESSKIT_DEFINE_ERROR(IoError);

#undef STRESSKIT_DEFINE_ERROR

}  // namespace stresskit
