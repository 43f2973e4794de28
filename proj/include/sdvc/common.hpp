#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sdvc {

inline constexpr const char* kVersion = "0.1.0";

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Bad user input: malformed config, conflicting annotations, out-of-range
// parameters. CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Missing or unreadable input file; message names the path.
struct IngestError : ValidationError {
    using ValidationError::ValidationError;
};

// Scoring a hypothesis against an empty reference is undefined.
struct EmptyReferenceError : ValidationError {
    using ValidationError::ValidationError;
};

// Non-finite training loss; message lists the offending batch items.
struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG used everywhere. Distributions are hand-rolled from the
// raw 64-bit stream so outputs do not depend on the standard library's
// distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling to stay unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    double normal() {
        // Box-Muller; one draw per call is fine at this scale
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Rng fork(std::uint64_t stream) {
        return Rng(gen_() ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

  private:
    std::mt19937_64 gen_;
};

inline double log_sum_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(double a, double b, double c) {
    return log_sum_exp(log_sum_exp(a, b), c);
}

// FNV-1a, used for config hashes embedded in output artifacts.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[v & 0xf];
        v >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

// Shortest representation that round-trips the double exactly, padded to at
// least three decimal places (segment CSVs require >= 3 decimals).
inline std::string format_seconds(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, end);
    if (s.find('e') != std::string::npos || s.find('E') != std::string::npos ||
        s.find("inf") != std::string::npos || s.find("nan") != std::string::npos)
        return s;
    auto dot = s.find('.');
    if (dot == std::string::npos) {
        s += ".000";
    } else {
        const auto decimals = s.size() - dot - 1;
        for (std::size_t i = decimals; i < 3; ++i) s += '0';
    }
    return s;
}

}  // namespace sdvc
