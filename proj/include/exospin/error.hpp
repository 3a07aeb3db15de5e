// Error hierarchy shared by all modules.
#pragma once

#include <stdexcept>
#include <string>

namespace exospin {

enum class ErrorKind {
    parse,       // malformed text input (COF, TLE, CSV)
    format,      // structurally wrong file (missing header, short line)
    integrity,   // checksum failures
    validation,  // well-formed input whose values violate invariants
    domain,      // numerical domain violation (inside core, T <= 0, r = 0)
    argument,    // bad function argument (dt <= 0, empty input)
    alignment,   // series that should share a time base do not
    config,      // pipeline configuration problems
    io,          // file system failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& module, const std::string& what)
        : std::runtime_error(module + ": " + what), kind_(kind), module_(module) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

} // namespace exospin
