#pragma once

#include <stdexcept>
#include <string>

namespace zeh {

// Exit codes used by the CLI: 0 ok, 2 config, 3 adapter, 4 incomplete records.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AdapterFailure : std::runtime_error {
    explicit AdapterFailure(const std::string& msg) : std::runtime_error(msg) {}
};

struct IncompleteRecordsError : std::runtime_error {
    explicit IncompleteRecordsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace zeh
