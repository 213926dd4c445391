#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace distforge {

// --- aligned numeric storage ---------------------------------------------------
//
// Vectorized kernels pick scalar/SIMD split points from the address residue
// of the buffers they touch, so two otherwise-identical runs only produce
// bit-identical floats when every mapped buffer starts at the same residue.
// Pinning all numeric heap storage to one alignment makes that residue a
// constant instead of an accident of the allocator.

inline constexpr std::size_t kBufferAlign = 64;

template <class T>
struct AlignedAllocator {
    using value_type = T;

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kBufferAlign)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(kBufferAlign));
    }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
    template <class U>
    bool operator!=(const AlignedAllocator<U>&) const noexcept {
        return false;
    }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

// Every failure carries a short machine-readable category ("config", "data",
// "io", "format", "numerics", "state") so callers and tests can match on the
// failure class without parsing prose.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& msg)
        : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}
    const std::string& category() const { return category_; }

private:
    std::string category_;
};

[[noreturn]] inline void fail(std::string category, const std::string& msg) {
    throw Error(std::move(category), msg);
}

// --- deterministic RNG -------------------------------------------------------
//
// All randomness in the lab flows through splitmix64 so that results are
// reproducible across platforms and standard-library versions (std::
// distributions are implementation-defined and would break byte-identical
// checkpoints).

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stateless key derivation: one 64-bit word from (seed, counter). Used to
// shuffle corpus windows and to seed per-purpose generators.
inline uint64_t mix_key(uint64_t seed, uint64_t counter) {
    return splitmix64(splitmix64(seed) ^ (counter * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL));
}

// Small sequential generator on top of splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // uniform in [0, 1) with 53 random bits
    double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) {
        if (n == 0) fail("numerics", "next_below(0)");
        // modulo bias is < 2^-53 for desk-scale n; acceptable and deterministic
        return next_u64() % n;
    }

    // standard normal via Box-Muller; caches the second variate
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// --- compensated summation ---------------------------------------------------

// Kahan accumulator: loss reductions sum thousands of small terms and must not
// drift with batch size.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double v) {
        double y = v - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

// --- small file/string helpers ----------------------------------------------

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);
std::string read_file(const std::string& path);                        // errors: io
void write_file_atomic(const std::string& path, const std::string& data);  // temp + rename
void append_file(const std::string& path, const std::string& data);

// Round-trip decimal formatting (shortest form that parses back to the same
// double) so emitted CSV numbers can be recomputed bit-exactly.
std::string format_double(double v);

}  // namespace distforge
