#ifndef PNPMIX_SCENE_HPP
#define PNPMIX_SCENE_HPP

#include <string>

#include "pnpmix/pipeline.hpp"

namespace pnpmix {

// A scene manifest plus the engine settings it carries.
struct LoadedScene {
    SceneBundle bundle;
    int T             = 25;
    double beta_start = 0.02;
    double beta_end   = 0.2;
    BlendConfig cfg;
    char stage   = 'e';
    int cond_dim = 8;
    int cond_id_back = 0;
    int cond_id_out  = 0;
    std::vector<int> cond_id_per;
};

// Emits a complete synthetic scene (gradient background, blob concepts,
// disjoint rectangle masks) plus manifest.json into `dir`. Returns the
// manifest path. Deterministic for a fixed seed.
std::string make_scene(const std::string& dir, int size, int n, int channels, uint64_t seed);

LoadedScene load_scene(const std::string& manifest_path);

// In-memory variant of make_scene for tests and acceptance runs.
LoadedScene synth_scene(int size, int n, int channels, uint64_t seed);

}  // namespace pnpmix

#endif
