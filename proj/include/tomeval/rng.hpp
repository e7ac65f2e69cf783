#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tomeval {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Seed for the stream owned by (seed, record_id, run_index, purpose). Independent of
// scheduling order, so concurrent generation draws the same values as serial.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view record_id,
                                 std::uint32_t run_index, std::string_view purpose) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ fnv1a64(record_id));
    h = splitmix64(h ^ run_index);
    return splitmix64(h ^ fnv1a64(purpose));
}

// mt19937_64 output is fully specified by the standard; distributions are not, so
// draws are derived from raw engine output.
class StreamRng {
public:
    explicit StreamRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound) by rejection sampling.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % bound;
    }

    bool coin() { return (engine_() >> 63) != 0; }

private:
    std::mt19937_64 engine_;
};

} // namespace tomeval
