#pragma once

#include <stdexcept>
#include <string>

namespace dislo {

// exit status groups used by the command line tool
enum class ErrorKind { Usage, IO, Scientific };

class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg, ErrorKind kind = ErrorKind::Scientific)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)), kind_(kind) {}

    const std::string& code() const { return code_; }
    ErrorKind kind() const { return kind_; }

private:
    std::string code_;
    ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error("Usage", msg, ErrorKind::Usage); }
inline Error io_error(const std::string& msg) { return Error("IO", msg, ErrorKind::IO); }

} // namespace dislo
