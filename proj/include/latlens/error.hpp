#pragma once

#include <stdexcept>
#include <string>

namespace latlens {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated a documented precondition.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract violation: " + msg) {}
};

// Bad user-supplied data (missing file, unknown id, unlabeled entry).
class InputError : public Error {
public:
    explicit InputError(const std::string& msg) : Error("input error: " + msg) {}
};

// Malformed bytes or text while decoding a file or wire payload.
class ParseError : public Error {
public:
    enum class Kind {
        Malformed,
        Truncated,
        BadMagic,
        NonFinite,
        MissingField,
        InvalidEnum,
    };

    ParseError(Kind kind, const std::string& msg)
        : Error("parse error: " + msg), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline void check_contract(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

inline void check_input(bool cond, const std::string& msg) {
    if (!cond) throw InputError(msg);
}

} // namespace latlens
