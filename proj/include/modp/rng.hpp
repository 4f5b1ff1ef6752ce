#pragma once

#include <cstdint>
#include <vector>

namespace modp {

// splitmix64 finalizer (Vigna). Used both as a PRNG step and as a mixer
// when deriving per-(row,question,instance) sub-streams from a master seed.
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// Deterministic, platform-stable generator. std::uniform_*_distribution is
// implementation-defined, so all draws are produced by hand from raw bits.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += kGolden;
        return mix64(state_);
    }

    // uniform in [0, 1), 53-bit resolution
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // unbiased integer in [0, n), rejection sampling
    uint64_t next_below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// Stream purposes, kept distinct so adding draws to one stage never
// perturbs another stage run from the same master seed.
enum class StreamTag : uint64_t {
    shuffle = 1,
    param_init = 2,
    instantiate = 3,
    randomized_response = 4,
    bootstrap = 5,
    row_sample = 6,
    testbed = 7,
};

inline uint64_t stream_seed(uint64_t master, StreamTag tag,
                            uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = master;
    h = mix64(h + kGolden * (static_cast<uint64_t>(tag) + 1));
    h = mix64(h + kGolden + a);
    h = mix64(h + kGolden + b);
    h = mix64(h + kGolden + c);
    return h;
}

inline Rng substream(uint64_t master, StreamTag tag,
                     uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
    return Rng(stream_seed(master, tag, a, b, c));
}

} // namespace modp
