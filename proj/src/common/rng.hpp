#pragma once

#include <cstdint>
#include <string_view>

namespace prcaps {

// Deterministic splitmix64 stream. Hand-rolled so that sequences are
// identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    double gaussian();

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives independent named streams from one master seed, so that ablation
// cells share e.g. the encoder-init stream while differing elsewhere.
class SeedSplitter {
public:
    explicit SeedSplitter(std::uint64_t master) : master_(master) {}

    std::uint64_t derive(std::string_view stream_name) const {
        // FNV-1a over the name, mixed with the master seed
        std::uint64_t h = 0xcbf29ce484222325ULL ^ master_;
        for (char c : stream_name) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ULL;
        }
        h ^= master_ * 0x9e3779b97f4a7c15ULL;
        return h;
    }

    Rng stream(std::string_view name) const { return Rng(derive(name)); }

private:
    std::uint64_t master_;
};

} // namespace prcaps
