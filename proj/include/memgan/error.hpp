#pragma once

#include <stdexcept>
#include <string>

namespace memgan {

enum class ErrorCode {
    invalid_dimension,
    dimension_mismatch,
    empty_candidate_set,
    no_real_slots,
    degenerate_histogram,
    missing_cache,
    shape_mismatch,
    bad_magic,
    truncated_file,
    invalid_config,
    io_failure,
    incompatible_checkpoint,
    insufficient_real_slots,
    invalid_argument,
};

/// Library-wide exception carrying a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace memgan
