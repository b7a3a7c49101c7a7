#include "her/serialize.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace her::io {

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

double parse_double(std::string_view token) {
    std::string s(token);
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw std::runtime_error("not a number: '" + s + "'");
    return x;
}

void write_vector(std::ostream& os, const Vec& v) {
    os << v.size();
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << format_double(v[i]);
}

std::string TokenReader::next() {
    std::string tok;
    if (!(is_ >> tok)) fail("unexpected end of input");
    return tok;
}

void TokenReader::expect(std::string_view token) {
    const std::string tok = next();
    if (tok != token) fail("expected '" + std::string(token) + "', found '" + tok + "'");
}

std::int64_t TokenReader::next_int() {
    const std::string tok = next();
    char* end = nullptr;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0') fail("expected an integer, found '" + tok + "'");
    return v;
}

double TokenReader::next_double() {
    const std::string tok = next();
    try {
        return parse_double(tok);
    } catch (const std::exception&) {
        fail("expected a number, found '" + tok + "'");
    }
}

Vec TokenReader::next_vector() {
    const std::int64_t n = next_int();
    if (n < 0) fail("negative vector length");
    Vec v(n);
    for (std::int64_t i = 0; i < n; ++i) v[i] = next_double();
    return v;
}

std::string TokenReader::rest_of_line() {
    std::string line;
    std::getline(is_, line);
    const auto start = line.find_first_not_of(" \t");
    return start == std::string::npos ? std::string() : line.substr(start);
}

void TokenReader::fail(const std::string& msg) const { throw std::runtime_error(what_ + ": " + msg); }

std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

}  // namespace her::io
