#pragma once

#include <stdexcept>
#include <string>

namespace canet {

// Error kinds surfaced across the C boundary as status codes and used as
// distinct CLI exit codes.
enum class ErrorKind {
    Shape = 14,
    Config = 10,
    Io = 11,
    Checkpoint = 12,
    EmptyForeground = 13,
    EmptySupport = 19,
    State = 15,
    Generation = 16,
    InvalidArgument = 17,
    Internal = 18,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(ErrorKind::Shape, msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::Io, msg) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& msg) : Error(ErrorKind::Checkpoint, msg) {}
};
struct EmptyForegroundError : Error {
    explicit EmptyForegroundError(const std::string& msg) : Error(ErrorKind::EmptyForeground, msg) {}
};
struct EmptySupportError : Error {
    explicit EmptySupportError(const std::string& msg) : Error(ErrorKind::EmptySupport, msg) {}
};
struct StateError : Error {
    explicit StateError(const std::string& msg) : Error(ErrorKind::State, msg) {}
};
struct GenerationError : Error {
    explicit GenerationError(const std::string& msg) : Error(ErrorKind::Generation, msg) {}
};

}  // namespace canet
