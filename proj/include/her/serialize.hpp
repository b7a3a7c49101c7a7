#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "her/nncore.hpp"

namespace her::io {

/// Doubles are written as C99 hex-float literals so that reading them back is bit-exact.
std::string format_double(double x);
double parse_double(std::string_view token);

/// "<len> x0 x1 ..." on one line (no trailing newline).
void write_vector(std::ostream& os, const Vec& v);

/// Whitespace-token reader with descriptive errors for the versioned text formats.
class TokenReader {
public:
    TokenReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

    std::string next();
    void expect(std::string_view token);
    std::int64_t next_int();
    double next_double();
    Vec next_vector();
    /// Rest of the current line, leading whitespace stripped.
    std::string rest_of_line();

    [[noreturn]] void fail(const std::string& msg) const;

private:
    std::istream& is_;
    std::string what_;
};

/// 64-bit FNV-1a, used for config hashes.
std::uint64_t fnv1a(std::string_view data);
std::string hex64(std::uint64_t x);

}  // namespace her::io
