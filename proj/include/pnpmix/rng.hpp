#ifndef PNPMIX_RNG_HPP
#define PNPMIX_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "pnpmix/tensor.hpp"

namespace pnpmix {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Counter-based N(0,1) field keyed on (seed, t, channel, pixel). Draw-order
// independent, so per-timestep noise construction can run in any order or in
// parallel and still reproduce bit-identically.
class GaussianField {
public:
    explicit GaussianField(uint64_t seed) : seed_(seed) {}

    float sample(int t, int c, int h, int w, int width) const {
        uint64_t idx = static_cast<uint64_t>(h) * static_cast<uint64_t>(width) + static_cast<uint64_t>(w);
        uint64_t k = splitmix64(seed_ ^ splitmix64(static_cast<uint64_t>(t) ^
                                                   splitmix64(static_cast<uint64_t>(c) ^ splitmix64(idx))));
        uint64_t k2 = splitmix64(k);
        // Box-Muller from two uniforms in (0,1)
        double u1 = (static_cast<double>(k >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        double u2 = (static_cast<double>(k2 >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        double r  = std::sqrt(-2.0 * std::log(u1));
        return static_cast<float>(r * std::cos(2.0 * M_PI * u2));
    }

    LatentTensor sample_tensor(int t, int channels, int height, int width) const {
        LatentTensor out(channels, height, width);
        for (int c = 0; c < channels; ++c)
            for (int h = 0; h < height; ++h)
                for (int w = 0; w < width; ++w) out.at(c, h, w) = sample(t, c, h, w, width);
        return out;
    }

private:
    uint64_t seed_;
};

// Sequential N(0,1) stream for training draws. Own Box-Muller so runs are
// reproducible independent of the standard library's distribution internals.
class NormalStream {
public:
    explicit NormalStream(uint64_t seed) : eng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        double u2 = (static_cast<double>(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        double r  = std::sqrt(-2.0 * std::log(u1));
        spare_      = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    uint64_t next_u64() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_    = 0.0;
};

}  // namespace pnpmix

#endif
