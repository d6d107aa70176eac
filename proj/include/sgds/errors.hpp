#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgds {

// Precondition or shape violation by the caller.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Non-finite value produced during training or differentiation.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::size_t op_index)
        : std::runtime_error(what + " (op " + std::to_string(op_index) + ")"), op_index_(op_index) {}

    std::size_t op_index() const noexcept { return op_index_; }

private:
    std::size_t op_index_;
};

// Malformed binary or textual file. Offset is the byte position where parsing stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error("config key '" + key + "': " + what), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw ContractViolation(msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

}  // namespace sgds
