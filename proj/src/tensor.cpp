#include "pnpmix/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pnpmix/errors.hpp"

namespace pnpmix {

LatentTensor::LatentTensor(int c, int h, int w, float fill) {
    if (c <= 0 || h <= 0 || w <= 0) {
        throw parameter_error("LatentTensor dimensions must be positive, got " + std::to_string(c) + "x" +
                              std::to_string(h) + "x" + std::to_string(w));
    }
    channels = c;
    height   = h;
    width    = w;
    data.assign(static_cast<size_t>(c) * h * w, fill);
}

std::string LatentTensor::shape_str() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
}

BinaryMask::BinaryMask(int h, int w, bool fill) {
    if (h <= 0 || w <= 0) {
        throw parameter_error("BinaryMask dimensions must be positive, got " + std::to_string(h) + "x" +
                              std::to_string(w));
    }
    height = h;
    width  = w;
    bits.assign(static_cast<size_t>(h) * w, fill ? 1 : 0);
}

size_t BinaryMask::count() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
}

std::string BinaryMask::shape_str() const {
    std::ostringstream os;
    os << height << "x" << width;
    return os.str();
}

LatentTensor hadamard(const LatentTensor& t, const BinaryMask& m) {
    if (t.height != m.height || t.width != m.width) {
        throw dimension_error("hadamard: tensor spatial shape " + t.shape_str() + " does not match mask shape " +
                              m.shape_str());
    }
    LatentTensor out = t;
    size_t plane     = static_cast<size_t>(t.height) * t.width;
    for (int c = 0; c < t.channels; ++c) {
        float* p = out.data.data() + c * plane;
        for (size_t i = 0; i < plane; ++i) {
            if (!m.bits[i]) p[i] = 0.0f;
        }
    }
    return out;
}

LatentTensor lincomb(float a, const LatentTensor& t1, float b, const LatentTensor& t2) {
    if (!t1.same_shape(t2)) {
        throw dimension_error("lincomb: shape " + t1.shape_str() + " does not match " + t2.shape_str());
    }
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw parameter_error("lincomb: coefficients must be finite");
    }
    LatentTensor out(t1.channels, t1.height, t1.width);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = a * t1.data[i] + b * t2.data[i];
    }
    ensure_finite(out, "lincomb result");
    return out;
}

void ensure_finite(const LatentTensor& t, const std::string& what) {
    for (size_t i = 0; i < t.data.size(); ++i) {
        if (!std::isfinite(t.data[i])) {
            throw numeric_error(what + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

float max_abs_diff(const LatentTensor& a, const LatentTensor& b) {
    if (!a.same_shape(b)) {
        throw dimension_error("max_abs_diff: shape " + a.shape_str() + " does not match " + b.shape_str());
    }
    float m = 0.0f;
    for (size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

namespace {

constexpr char kMagic[4]     = {'P', 'N', 'P', 'L'};
constexpr uint16_t kVersion  = 1;

void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw format_error("PNPL: truncated header");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw format_error("PNPL: truncated header");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_latent(const LatentTensor& t, std::ostream& out) {
    out.write(kMagic, 4);
    write_u16(out, kVersion);
    write_u32(out, static_cast<uint32_t>(t.channels));
    write_u32(out, static_cast<uint32_t>(t.height));
    write_u32(out, static_cast<uint32_t>(t.width));
    for (float f : t.data) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
    }
}

void save_latent(const LatentTensor& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open for writing: " + path);
    save_latent(t, out);
    if (!out) throw format_error("write failed: " + path);
}

LatentTensor load_latent(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw format_error("PNPL: bad magic bytes");
    }
    uint16_t version = read_u16(in);
    if (version != kVersion) {
        throw format_error("PNPL: unsupported version " + std::to_string(version));
    }
    uint32_t c = read_u32(in);
    uint32_t h = read_u32(in);
    uint32_t w = read_u32(in);
    if (c == 0 || h == 0 || w == 0) throw format_error("PNPL: zero dimension");
    LatentTensor t(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    for (size_t i = 0; i < t.data.size(); ++i) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw format_error("PNPL: truncated payload at element " + std::to_string(i));
        uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<uint32_t>(b[k]) << (8 * k);
        std::memcpy(&t.data[i], &bits, 4);
        if (!std::isfinite(t.data[i])) {
            throw format_error("PNPL: non-finite value at element " + std::to_string(i));
        }
    }
    return t;
}

LatentTensor load_latent(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open: " + path);
    return load_latent(in);
}

}  // namespace pnpmix
