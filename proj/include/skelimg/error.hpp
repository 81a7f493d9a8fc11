#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skelimg {

enum class ErrorCode {
    invalid_topology,
    malformed_name,
    truncated_file,
    non_numeric_field,
    joint_count_mismatch,
    empty_sequence,
    duplicate_name,
    non_finite_input,
    too_short_sequence,
    shape_mismatch,
    inconsistent_config,
    missing_cache,
    corrupt_checkpoint,
    empty_training_set,
    empty_side,
    length_mismatch,
    empty_list,
    invalid_spec,
    invalid_argument,
    io_error,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for every library failure; `code()` lets callers and
// tests distinguish the failure without matching on message text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

    ErrorCode code() const noexcept { return code_; }
    /// Message without the code prefix, for re-throwing with added context.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace skelimg
