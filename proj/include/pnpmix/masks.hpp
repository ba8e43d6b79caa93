#ifndef PNPMIX_MASKS_HPP
#define PNPMIX_MASKS_HPP

#include <string>
#include <vector>

#include "pnpmix/tensor.hpp"

namespace pnpmix {

// Validated object/background partition. Object masks are pairwise disjoint
// and the background is the exact complement of their union.
struct MaskSet {
    std::vector<BinaryMask> objects;  // M_1..M_n
    BinaryMask background;            // M_B

    int n() const { return static_cast<int>(objects.size()); }
};

// Complement of the union of disjoint object masks.
BinaryMask derive_background(const std::vector<BinaryMask>& objects);

// Builds a MaskSet, deriving the background when not supplied and validating
// the partition property when it is.
MaskSet make_mask_set(std::vector<BinaryMask> objects);
MaskSet make_mask_set(std::vector<BinaryMask> objects, BinaryMask background);

// Filled minimal bounding rectangle of the true pixels, grown by `margin` on
// each side and clipped to the image.
BinaryMask expand_to_rect(const BinaryMask& m, int margin);

// Binary P5 PGM, maxval 255; pixel 0 -> false, 255 -> true. Any other pixel
// value is a format error.
BinaryMask load_mask_pgm(const std::string& path);
void save_mask_pgm(const BinaryMask& m, const std::string& path);

// Grayscale preview PGM writer (arbitrary 0..255 values). Never read back.
void save_pgm_gray(const std::vector<uint8_t>& pixels, int height, int width, const std::string& path);

}  // namespace pnpmix

#endif
