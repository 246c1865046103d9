// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace csr {

enum class ErrorCode {
    InvalidArgument,
    Io,
    BadMagic,
    UnsupportedVersion,
    Truncated,
    FormatError,
    DuplicateBlock,
    IndexOutOfRange,
    DimensionMismatch,
    NonFinite,
    DegenerateData,
    MissingBlock,
    IndexSpaceOverflow,
    SchemaMismatch,
    ConfigError,
    Internal,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return "invalid argument";
        case ErrorCode::Io: return "io error";
        case ErrorCode::BadMagic: return "bad magic";
        case ErrorCode::UnsupportedVersion: return "unsupported version";
        case ErrorCode::Truncated: return "truncated stream";
        case ErrorCode::FormatError: return "format error";
        case ErrorCode::DuplicateBlock: return "duplicate block";
        case ErrorCode::IndexOutOfRange: return "index out of range";
        case ErrorCode::DimensionMismatch: return "dimension mismatch";
        case ErrorCode::NonFinite: return "non-finite value";
        case ErrorCode::DegenerateData: return "degenerate data";
        case ErrorCode::MissingBlock: return "missing block";
        case ErrorCode::IndexSpaceOverflow: return "index space overflow";
        case ErrorCode::SchemaMismatch: return "schema mismatch";
        case ErrorCode::ConfigError: return "config error";
        case ErrorCode::Internal: return "internal error";
    }
    return "unknown error";
}

#define CSR_REQUIRE(cond, code, msg)                    \
    do {                                                \
        if (!(cond)) throw ::csr::Error((code), (msg)); \
    } while (0)

} // namespace csr
