#include "pnpmix/masks.hpp"

#include <fstream>
#include <sstream>

#include "pnpmix/errors.hpp"

namespace pnpmix {

namespace {

void check_uniform_shape(const std::vector<BinaryMask>& objects) {
    for (size_t i = 1; i < objects.size(); ++i) {
        if (!objects[i].same_shape(objects[0])) {
            throw dimension_error("mask shapes differ: " + objects[0].shape_str() + " vs " +
                                  objects[i].shape_str());
        }
    }
}

void check_disjoint(const std::vector<BinaryMask>& objects) {
    if (objects.empty()) return;
    int H = objects[0].height, W = objects[0].width;
    for (size_t a = 0; a < objects.size(); ++a) {
        for (size_t b = a + 1; b < objects.size(); ++b) {
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    if (objects[a].at(h, w) && objects[b].at(h, w)) {
                        throw validation_error("object masks " + std::to_string(a) + " and " + std::to_string(b) +
                                               " overlap at pixel (" + std::to_string(h) + "," + std::to_string(w) +
                                               ")");
                    }
                }
            }
        }
    }
}

}  // namespace

BinaryMask derive_background(const std::vector<BinaryMask>& objects) {
    if (objects.empty()) throw parameter_error("derive_background: empty object list");
    check_uniform_shape(objects);
    check_disjoint(objects);
    BinaryMask bg(objects[0].height, objects[0].width, true);
    for (const auto& m : objects) {
        for (size_t i = 0; i < bg.bits.size(); ++i) {
            if (m.bits[i]) bg.bits[i] = 0;
        }
    }
    return bg;
}

MaskSet make_mask_set(std::vector<BinaryMask> objects) {
    BinaryMask bg = derive_background(objects);
    return MaskSet{std::move(objects), std::move(bg)};
}

MaskSet make_mask_set(std::vector<BinaryMask> objects, BinaryMask background) {
    if (objects.empty()) throw parameter_error("make_mask_set: empty object list");
    check_uniform_shape(objects);
    if (!background.same_shape(objects[0])) {
        throw dimension_error("background mask shape " + background.shape_str() + " does not match object masks " +
                              objects[0].shape_str());
    }
    check_disjoint(objects);
    // partition: every pixel covered exactly once
    for (int h = 0; h < background.height; ++h) {
        for (int w = 0; w < background.width; ++w) {
            int cover = background.at(h, w) ? 1 : 0;
            for (const auto& m : objects) cover += m.at(h, w) ? 1 : 0;
            if (cover != 1) {
                throw validation_error("masks do not partition the image at pixel (" + std::to_string(h) + "," +
                                       std::to_string(w) + "), coverage " + std::to_string(cover));
            }
        }
    }
    return MaskSet{std::move(objects), std::move(background)};
}

BinaryMask expand_to_rect(const BinaryMask& m, int margin) {
    if (margin < 0) throw parameter_error("expand_to_rect: margin must be >= 0");
    int rmin = m.height, rmax = -1, cmin = m.width, cmax = -1;
    for (int h = 0; h < m.height; ++h) {
        for (int w = 0; w < m.width; ++w) {
            if (m.at(h, w)) {
                rmin = std::min(rmin, h);
                rmax = std::max(rmax, h);
                cmin = std::min(cmin, w);
                cmax = std::max(cmax, w);
            }
        }
    }
    if (rmax < 0) throw validation_error("expand_to_rect: mask has no true pixels");
    rmin = std::max(0, rmin - margin);
    cmin = std::max(0, cmin - margin);
    rmax = std::min(m.height - 1, rmax + margin);
    cmax = std::min(m.width - 1, cmax + margin);
    BinaryMask out(m.height, m.width, false);
    for (int h = rmin; h <= rmax; ++h) {
        for (int w = cmin; w <= cmax; ++w) out.set(h, w, true);
    }
    return out;
}

BinaryMask load_mask_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw format_error("PGM: expected P5 magic, got '" + magic + "' in " + path);
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0) throw format_error("PGM: bad dimensions in " + path);
    if (maxval != 255) throw format_error("PGM: maxval must be 255, got " + std::to_string(maxval));
    in.get();  // single whitespace after maxval
    BinaryMask m(h, w);
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), w);
        if (!in) throw format_error("PGM: truncated pixel data in " + path);
        for (int x = 0; x < w; ++x) {
            if (row[x] == 0) {
                m.set(y, x, false);
            } else if (row[x] == 255) {
                m.set(y, x, true);
            } else {
                throw format_error("PGM: binary mask pixel must be 0 or 255, got " + std::to_string(row[x]) +
                                   " at (" + std::to_string(y) + "," + std::to_string(x) + ")");
            }
        }
    }
    return m;
}

void save_mask_pgm(const BinaryMask& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open for writing: " + path);
    out << "P5\n" << m.width << " " << m.height << "\n255\n";
    for (int h = 0; h < m.height; ++h) {
        for (int w = 0; w < m.width; ++w) {
            out.put(m.at(h, w) ? static_cast<char>(255) : static_cast<char>(0));
        }
    }
    if (!out) throw format_error("write failed: " + path);
}

void save_pgm_gray(const std::vector<uint8_t>& pixels, int height, int width, const std::string& path) {
    if (pixels.size() != static_cast<size_t>(height) * width) {
        throw dimension_error("save_pgm_gray: pixel count does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open for writing: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw format_error("write failed: " + path);
}

}  // namespace pnpmix
