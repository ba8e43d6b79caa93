#ifndef PNPMIX_TENSOR_HPP
#define PNPMIX_TENSOR_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pnpmix {

// Dense rank-3 fp32 tensor in row-major [c][h][w] order. Immutable by
// convention once handed to another module; all free functions below are pure.
struct LatentTensor {
    int channels = 0;
    int height   = 0;
    int width    = 0;
    std::vector<float> data;

    LatentTensor() = default;
    LatentTensor(int c, int h, int w, float fill = 0.0f);

    float& at(int c, int h, int w) { return data[(static_cast<size_t>(c) * height + h) * width + w]; }
    float at(int c, int h, int w) const { return data[(static_cast<size_t>(c) * height + h) * width + w]; }

    size_t size() const { return data.size(); }
    bool same_shape(const LatentTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    std::string shape_str() const;
};

// H x W boolean grid. Broadcast over channels is implicit: the same bit gates
// every channel at that pixel.
struct BinaryMask {
    int height = 0;
    int width  = 0;
    std::vector<uint8_t> bits;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w, bool fill = false);

    bool at(int h, int w) const { return bits[static_cast<size_t>(h) * width + w] != 0; }
    void set(int h, int w, bool v) { bits[static_cast<size_t>(h) * width + w] = v ? 1 : 0; }

    size_t count() const;  // number of true pixels
    bool same_shape(const BinaryMask& o) const { return height == o.height && width == o.width; }
    std::string shape_str() const;
};

// out[c,h,w] = t[c,h,w] if m[h,w] else 0
LatentTensor hadamard(const LatentTensor& t, const BinaryMask& m);

// out = a*t1 + b*t2, single-pass elementwise
LatentTensor lincomb(float a, const LatentTensor& t1, float b, const LatentTensor& t2);

// throws numeric_error naming `what` if any entry is NaN/Inf
void ensure_finite(const LatentTensor& t, const std::string& what);

float max_abs_diff(const LatentTensor& a, const LatentTensor& b);

// "PNPL" format: magic, version u16=1, c/h/w as LE u32, then LE fp32 payload.
// Round-trip is bit-exact for all finite floats.
void save_latent(const LatentTensor& t, std::ostream& out);
void save_latent(const LatentTensor& t, const std::string& path);
LatentTensor load_latent(std::istream& in);
LatentTensor load_latent(const std::string& path);

}  // namespace pnpmix

#endif
