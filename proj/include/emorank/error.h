#pragma once

#include <stdexcept>
#include <string>

namespace emorank {

// Categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
    kInvalidArgument = 2,
    kIo = 3,
    kFormat = 4,
    kChecksum = 5,
    kVersion = 6,
    kShape = 7,
    kNonFinite = 8,
    kEmptyClass = 9,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) {
        fail(kind, what);
    }
}

}  // namespace emorank
