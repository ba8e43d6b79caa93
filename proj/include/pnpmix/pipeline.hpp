#ifndef PNPMIX_PIPELINE_HPP
#define PNPMIX_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "pnpmix/blending.hpp"
#include "pnpmix/inversion.hpp"
#include "pnpmix/masks.hpp"
#include "pnpmix/predictor.hpp"
#include "pnpmix/schedule.hpp"

namespace pnpmix {

// The full input set for one composite: latents, masks, conditioning, seed.
struct SceneBundle {
    LatentTensor back;
    LatentTensor inpaint;
    std::vector<LatentTensor> pers;
    MaskSet maskset;
    ConditioningVector cond_back;
    ConditioningVector cond_out;
    std::vector<ConditioningVector> cond_per;
    uint64_t seed = 0;

    void validate() const;
};

// Running latents during the fusion loop. out and refs start as clones of
// the background latent at t = T.
struct LatentBank {
    LatentTensor out;
    std::vector<LatentTensor> refs;
    LatentTensor back;
    LatentTensor inpaint;
    std::vector<LatentTensor> pers;
    int t = 0;
};

struct PreparedScene {
    InversionRecord rec_back;
    InversionRecord rec_inpaint;
    std::vector<InversionRecord> rec_per;
    LatentBank bank;
};

// Optional per-timestep snapshots for debugging/regression.
struct PipelineTrace {
    struct Step {
        int t;
        LatentTensor eps_gui;
        LatentTensor out;
    };
    std::vector<Step> steps;
};

struct RunResult {
    LatentTensor out;
    // background trajectory after its full reconstruction path; the output
    // must match this on M_B
    LatentTensor back_recon;
};

// Stage 1: invert back, inpaint, and each concept image; clone the background
// into one output latent and n reference latents.
PreparedScene prepare(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor);

// Stage 2: the per-timestep fusion loop, t = T down to 1.
RunResult run_detailed(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor,
                       const BlendConfig& cfg, PipelineTrace* trace = nullptr);
LatentTensor run(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor,
                 const BlendConfig& cfg);

// Ablation ladder: a = mixing + key/value replacement, b = + value guidance,
// c = + legacy dilution, d = + reference-noise mixing, e = d with dilution++.
BlendConfig stage_config(char stage, const BlendConfig& base = BlendConfig{});
LatentTensor run_ablation(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor,
                          char stage, const BlendConfig& base = BlendConfig{});

}  // namespace pnpmix

#endif
