#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msgcn {

// Error hierarchy. Every failure mode in the library maps onto one of these;
// the CLI turns them into exit status 1 with the message as diagnostic.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes do not line up (matmul inner dims, residual width, ...).
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration (unknown preset, even acausal kernel, bad split plan).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input file; message carries the line number where known.
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid input with invalid content (label out of range, length mismatch).
struct DataError : Error {
    using Error::Error;
};

// Math domain violation (log of non-positive value).
struct DomainError : Error {
    using Error::Error;
};

// API misuse (backward run twice on one record).
struct StateError : Error {
    using Error::Error;
};

// Non-finite value where a finite one is required (divergent loss, bad gradient).
struct NumericError : Error {
    using Error::Error;
};

namespace detail {

// Little-endian integer fields for the binary containers.
inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError(path + ": truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError(path + ": truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

// Seeded generator with hand-rolled draws so that identical seeds give
// identical streams on every standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive bounds.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    // Box-Muller; two uniform draws per call keeps the stream stateless.
    double gaussian() {
        const double u1 = std::max(uniform(), 0x1.0p-60);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Fisher-Yates with the portable bounded draw above.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(0, i))]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace msgcn
