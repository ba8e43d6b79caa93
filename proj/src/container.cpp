#include "pnpmix/container.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "pnpmix/errors.hpp"

namespace pnpmix {

namespace {
constexpr char kMagic[4] = {'P', 'N', 'P', 'B'};
}

const LatentTensor& Container::get(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return t;
    }
    throw format_error("container: missing entry '" + name + "'");
}

bool Container::has(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return true;
    }
    return false;
}

void save_container(const Container& c, const std::string& path) {
    std::ostringstream blocks;
    nlohmann::json index;
    index["meta"]    = c.meta;
    index["entries"] = nlohmann::json::array();
    for (const auto& [name, t] : c.entries) {
        size_t off = static_cast<size_t>(blocks.tellp());
        save_latent(t, blocks);
        size_t end = static_cast<size_t>(blocks.tellp());
        index["entries"].push_back({{"name", name}, {"offset", off}, {"size", end - off}});
    }
    std::string json_str = index.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open for writing: " + path);
    out.write(kMagic, 4);
    uint32_t len = static_cast<uint32_t>(json_str.size());
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
    out.write(json_str.data(), static_cast<std::streamsize>(json_str.size()));
    std::string block_str = blocks.str();
    out.write(block_str.data(), static_cast<std::streamsize>(block_str.size()));
    if (!out) throw format_error("write failed: " + path);
}

Container load_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw format_error("container: bad magic in " + path);
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw format_error("container: truncated index length");
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(b[i]) << (8 * i);
    std::string json_str(len, '\0');
    in.read(json_str.data(), len);
    if (!in) throw format_error("container: truncated index");

    nlohmann::json index;
    try {
        index = nlohmann::json::parse(json_str);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("container: bad index JSON: ") + e.what());
    }

    Container c;
    c.meta = index.value("meta", nlohmann::json::object());
    for (const auto& e : index.at("entries")) {
        c.entries.emplace_back(e.at("name").get<std::string>(), load_latent(in));
    }
    return c;
}

}  // namespace pnpmix
