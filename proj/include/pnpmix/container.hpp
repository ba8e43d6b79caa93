#ifndef PNPMIX_CONTAINER_HPP
#define PNPMIX_CONTAINER_HPP

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pnpmix/tensor.hpp"

namespace pnpmix {

// Multi-tensor file: magic "PNPB", LE u32 index length, JSON index, then
// concatenated PNPL blocks. The index lists entry names with byte offsets
// relative to the first block, plus a free-form "meta" object.
struct Container {
    nlohmann::json meta;
    std::vector<std::pair<std::string, LatentTensor>> entries;

    const LatentTensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_container(const Container& c, const std::string& path);
Container load_container(const std::string& path);

}  // namespace pnpmix

#endif
