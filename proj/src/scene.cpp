#include "pnpmix/scene.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pnpmix/errors.hpp"
#include "pnpmix/rng.hpp"

namespace fs = std::filesystem;

namespace pnpmix {

namespace {

constexpr int kCondDim = 8;

struct SceneAssets {
    LatentTensor back, inpaint;
    std::vector<LatentTensor> pers;
    std::vector<BinaryMask> masks;
};

SceneAssets build_assets(int size, int n, int channels, uint64_t seed) {
    if (size < 8) throw parameter_error("make_scene: size must be >= 8");
    if (size % 2 != 0) throw parameter_error("make_scene: size must be even");
    if (n < 1 || n > 3) throw parameter_error("make_scene: n must be in 1..3");
    if (channels < 1) throw parameter_error("make_scene: channels must be >= 1");

    GaussianField field(seed);
    SceneAssets a;

    // smooth base background with a little texture
    LatentTensor base(channels, size, size);
    for (int c = 0; c < channels; ++c) {
        for (int i = 0; i < size; ++i) {
            for (int j = 0; j < size; ++j) {
                double v = 0.5 + 0.35 * std::sin(2.0 * M_PI * (i + 3.0 * c) / size) *
                                     std::cos(2.0 * M_PI * (j + 1.0 * c) / size);
                v += 0.02 * field.sample(9000 + c, 0, i, j, size);
                base.at(c, i, j) = static_cast<float>(v);
            }
        }
    }

    // disjoint rectangle masks in vertical bands
    int r0 = size / 4, r1 = 3 * size / 4 - 1;
    int gap = std::max(1, size / 8);
    for (int i = 0; i < n; ++i) {
        int band0 = i * size / n;
        int band1 = (i + 1) * size / n - 1;
        int c0    = band0 + gap;
        int c1    = band1 - gap;
        if (c1 < c0) throw parameter_error("make_scene: size too small for " + std::to_string(n) + " masks");
        BinaryMask m(size, size, false);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) m.set(r, c, true);
        a.masks.push_back(std::move(m));
    }

    // background contains each object as a Gaussian blob centered in its mask
    a.back    = base;
    a.inpaint = base;  // inpainted counterpart: objects removed
    for (int i = 0; i < n; ++i) {
        const BinaryMask& m = a.masks[static_cast<size_t>(i)];
        double cy = 0, cx = 0, cnt = 0;
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c)
                if (m.at(r, c)) {
                    cy += r;
                    cx += c;
                    cnt += 1;
                }
        cy /= cnt;
        cx /= cnt;
        double sig = size / 8.0;
        for (int ch = 0; ch < channels; ++ch) {
            double amp = (ch == i % channels) ? 0.8 : -0.3;
            for (int r = 0; r < size; ++r) {
                for (int c = 0; c < size; ++c) {
                    double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
                    a.back.at(ch, r, c) += static_cast<float>(amp * std::exp(-d2 / (2.0 * sig * sig)));
                }
            }
        }
    }

    // concept reference images: stronger, differently textured blobs on a
    // neutral field
    for (int i = 0; i < n; ++i) {
        LatentTensor per(channels, size, size, 0.5f);
        double cy = size / 2.0, cx = size / 2.0;
        double sig = size / 10.0;
        for (int ch = 0; ch < channels; ++ch) {
            double amp = (ch == i % channels) ? 1.1 : -0.5;
            for (int r = 0; r < size; ++r) {
                for (int c = 0; c < size; ++c) {
                    double d2  = (r - cy) * (r - cy) + (c - cx) * (c - cx);
                    double tex = 0.15 * std::sin(2.0 * M_PI * (r * (i + 2)) / size) *
                                 std::sin(2.0 * M_PI * (c * (i + 1)) / size);
                    per.at(ch, r, c) += static_cast<float>(amp * std::exp(-d2 / (2.0 * sig * sig)) + tex +
                                                           0.02 * field.sample(9100 + 10 * i + ch, 1, r, c, size));
                }
            }
        }
        a.pers.push_back(std::move(per));
    }
    return a;
}

LoadedScene assemble(SceneAssets a, int n, uint64_t seed) {
    LoadedScene s;
    s.bundle.back    = std::move(a.back);
    s.bundle.inpaint = std::move(a.inpaint);
    s.bundle.pers    = std::move(a.pers);
    s.bundle.maskset = make_mask_set(std::move(a.masks));
    s.bundle.seed    = seed;
    s.cond_dim       = kCondDim;
    s.cond_id_back   = 0;
    s.cond_id_out    = 0;
    s.bundle.cond_back = ConditioningVector::one_hot(0, kCondDim);
    s.bundle.cond_out  = ConditioningVector::one_hot(0, kCondDim);
    for (int i = 0; i < n; ++i) {
        s.cond_id_per.push_back(i + 1);
        s.bundle.cond_per.push_back(ConditioningVector::one_hot(i + 1, kCondDim));
    }
    s.cfg.me_margin = 2;
    return s;
}

}  // namespace

LoadedScene synth_scene(int size, int n, int channels, uint64_t seed) {
    return assemble(build_assets(size, n, channels, seed), n, seed);
}

std::string make_scene(const std::string& dir, int size, int n, int channels, uint64_t seed) {
    SceneAssets a = build_assets(size, n, channels, seed);
    fs::create_directories(dir);
    fs::path d(dir);

    nlohmann::json man;
    man["size"]     = size;
    man["channels"] = channels;
    man["n"]        = n;
    man["seed"]     = seed;
    man["T"]          = 25;
    man["beta_start"] = 0.02;
    man["beta_end"]   = 0.2;
    man["alpha"]         = 0.15;
    man["beta_dilution"] = 0.8;
    man["me_margin"]     = 2;
    man["stage"]         = "e";
    man["cond_dim"]      = kCondDim;
    man["cond_back"]     = 0;
    man["cond_out"]      = 0;

    save_latent(a.back, (d / "back.pnpl").string());
    save_latent(a.inpaint, (d / "inpaint.pnpl").string());
    man["back"]    = "back.pnpl";
    man["inpaint"] = "inpaint.pnpl";
    man["pers"]  = nlohmann::json::array();
    man["masks"] = nlohmann::json::array();
    man["cond_per"] = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        std::string pn = "per_" + std::to_string(i) + ".pnpl";
        std::string mn = "mask_" + std::to_string(i) + ".pgm";
        save_latent(a.pers[static_cast<size_t>(i)], (d / pn).string());
        save_mask_pgm(a.masks[static_cast<size_t>(i)], (d / mn).string());
        man["pers"].push_back(pn);
        man["masks"].push_back(mn);
        man["cond_per"].push_back(i + 1);
    }

    std::string man_path = (d / "manifest.json").string();
    std::ofstream out(man_path);
    if (!out) throw format_error("cannot write manifest: " + man_path);
    out << man.dump(2) << "\n";
    return man_path;
}

LoadedScene load_scene(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw format_error("cannot open manifest: " + manifest_path);
    nlohmann::json man;
    try {
        in >> man;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("manifest: bad JSON: ") + e.what());
    }
    fs::path dir = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& rel) { return (dir / rel).string(); };

    LoadedScene s;
    try {
        s.T          = man.value("T", 25);
        s.beta_start = man.value("beta_start", 0.02);
        s.beta_end   = man.value("beta_end", 0.2);
        s.cond_dim   = man.value("cond_dim", kCondDim);
        s.cfg.alpha     = man.value("alpha", 0.15);
        s.cfg.beta      = man.value("beta_dilution", 0.8);
        s.cfg.me_margin = man.value("me_margin", 8);
        std::string stage = man.value("stage", "e");
        if (stage.size() != 1) throw parameter_error("manifest: stage must be a single letter a..e");
        s.stage = stage[0];

        s.bundle.seed    = man.value("seed", 0ull);
        s.bundle.back    = load_latent(resolve(man.at("back").get<std::string>()));
        s.bundle.inpaint = load_latent(resolve(man.at("inpaint").get<std::string>()));
        for (const auto& p : man.at("pers")) s.bundle.pers.push_back(load_latent(resolve(p.get<std::string>())));
        std::vector<BinaryMask> objects;
        for (const auto& p : man.at("masks")) objects.push_back(load_mask_pgm(resolve(p.get<std::string>())));
        if (man.contains("mask_back")) {
            s.bundle.maskset =
                make_mask_set(std::move(objects), load_mask_pgm(resolve(man.at("mask_back").get<std::string>())));
        } else {
            s.bundle.maskset = make_mask_set(std::move(objects));
        }

        s.cond_id_back     = man.value("cond_back", 0);
        s.cond_id_out      = man.value("cond_out", 0);
        s.bundle.cond_back = ConditioningVector::one_hot(s.cond_id_back, s.cond_dim);
        s.bundle.cond_out  = ConditioningVector::one_hot(s.cond_id_out, s.cond_dim);
        if (man.contains("cond_per")) {
            for (const auto& c : man.at("cond_per")) s.cond_id_per.push_back(c.get<int>());
        } else {
            for (size_t i = 0; i < s.bundle.pers.size(); ++i) s.cond_id_per.push_back(0);
        }
        if (s.cond_id_per.size() != s.bundle.pers.size()) {
            throw validation_error("manifest: cond_per count does not match pers count");
        }
        for (int id : s.cond_id_per) s.bundle.cond_per.push_back(ConditioningVector::one_hot(id, s.cond_dim));
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("manifest: ") + e.what());
    }

    s.cfg.validate();
    s.bundle.validate();
    return s;
}

}  // namespace pnpmix
