#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pnpmix/errors.hpp"
#include "pnpmix/pipeline.hpp"
#include "pnpmix/rng.hpp"
#include "pnpmix/scene.hpp"
#include "pnpmix/toy_denoiser.hpp"

using namespace pnpmix;

namespace {

NoiseSchedule test_sched() { return build_schedule(10, 0.02, 0.2); }

BlendConfig quiet_config() {
    // mixing only: no guidance, no dilution, no resynthesis
    BlendConfig cfg;
    cfg.guided_attention = false;
    cfg.value_guidance   = false;
    cfg.dilution_legacy  = false;
    cfg.dilution_pp      = false;
    cfg.ref_noise_mix    = false;
    return cfg;
}

float masked_diff(const LatentTensor& a, const LatentTensor& b, const BinaryMask& m) {
    return max_abs_diff(hadamard(a, m), hadamard(b, m));
}

}  // namespace

TEST_CASE("prepare yields n+2 records and n+1 clones") {
    LoadedScene s = synth_scene(8, 2, 2, 3);
    NoiseSchedule sched = test_sched();
    ZeroPredictor p;
    PreparedScene ps = prepare(s.bundle, sched, p);
    CHECK(ps.rec_per.size() == 2);
    CHECK(ps.bank.refs.size() == 2);
    CHECK(ps.bank.out.data == ps.rec_back.x_at(sched.T).data);
    for (const auto& r : ps.bank.refs) CHECK(r.data == ps.bank.out.data);
    // round-trip exactness of each prepared record
    LatentTensor recon = reconstruct(ps.rec_back, sched, p, s.bundle.cond_back);
    CHECK(max_abs_diff(recon, s.bundle.back) <= 1e-4f);
}

TEST_CASE("prepare rejects malformed bundles") {
    LoadedScene s = synth_scene(8, 2, 2, 3);
    s.bundle.pers[0] = LatentTensor(2, 10, 10);
    ZeroPredictor p;
    NoiseSchedule sched = test_sched();
    CHECK_THROWS_AS(prepare(s.bundle, sched, p), validation_error);
}

TEST_CASE("with no divergence mechanisms the output is the background") {
    LoadedScene s = synth_scene(8, 1, 2, 4);
    ZeroPredictor p;
    NoiseSchedule sched = test_sched();
    RunResult res = run_detailed(s.bundle, sched, p, quiet_config());
    CHECK(max_abs_diff(res.out, res.back_recon) <= 1e-4f);
    CHECK(max_abs_diff(res.out, s.bundle.back) <= 1e-4f);
}

TEST_CASE("background region matches the background reconstruction for every stage") {
    LoadedScene s = synth_scene(8, 2, 2, 5);
    ToyDenoiser toy(2, 8, 8, 77);
    {
        NormalStream ns(3);
        for (auto& p : toy.parameters()) p += 0.05 * ns.next();
    }
    NoiseSchedule sched = test_sched();
    for (char stage : {'a', 'b', 'c', 'd', 'e'}) {
        BlendConfig cfg = stage_config(stage, s.cfg);
        RunResult res   = run_detailed(s.bundle, sched, toy, cfg);
        CHECK(masked_diff(res.out, res.back_recon, s.bundle.maskset.background) <= 1e-4f);
        CHECK(masked_diff(res.out, s.bundle.back, s.bundle.maskset.background) <= 1e-4f);
    }
}

TEST_CASE("pipeline is deterministic") {
    LoadedScene s = synth_scene(8, 2, 2, 6);
    IdentityScalePredictor p(0.2f);
    NoiseSchedule sched = test_sched();
    LatentTensor a = run(s.bundle, sched, p, quiet_config());
    LatentTensor b = run(s.bundle, sched, p, quiet_config());
    CHECK(a.data == b.data);
}

TEST_CASE("folding a concept into the background leaves the rest unchanged") {
    LoadedScene s2 = synth_scene(8, 2, 2, 7);
    IdentityScalePredictor p(0.3f);
    NoiseSchedule sched = test_sched();
    LatentTensor full = run(s2.bundle, sched, p, quiet_config());

    // drop concept 1: same scene, only concept 0 kept
    SceneBundle b1 = s2.bundle;
    BinaryMask dropped = b1.maskset.objects[1];
    b1.pers.resize(1);
    b1.cond_per.resize(1);
    b1.maskset = make_mask_set({b1.maskset.objects[0]});
    LatentTensor reduced = run(b1, sched, p, quiet_config());

    for (int c = 0; c < full.channels; ++c)
        for (int h = 0; h < full.height; ++h)
            for (int w = 0; w < full.width; ++w)
                if (!dropped.at(h, w))
                    CHECK(std::abs(full.at(c, h, w) - reduced.at(c, h, w)) <= 1e-4f);
}

TEST_CASE("stage toggle mapping") {
    BlendConfig e = stage_config('e');
    CHECK(e.value_guidance);
    CHECK(e.dilution_pp);
    CHECK(!e.dilution_legacy);
    CHECK(e.ref_noise_mix);

    BlendConfig d = stage_config('d');
    CHECK(d.dilution_legacy);
    CHECK(d.ref_noise_mix);

    BlendConfig c = stage_config('c');
    CHECK(c.dilution_legacy);
    CHECK(!c.ref_noise_mix);

    BlendConfig b = stage_config('b');
    CHECK(b.value_guidance);
    CHECK(!b.dilution_legacy);

    BlendConfig a = stage_config('a');
    CHECK(a.guided_attention);  // key/value replacement stays on
    CHECK(!a.value_guidance);

    CHECK_THROWS_AS(stage_config('f'), parameter_error);
}

TEST_CASE("legacy and ++ dilution coincide when inpaint equals back") {
    LoadedScene s = synth_scene(8, 1, 2, 8);
    s.bundle.inpaint = s.bundle.back;
    ToyDenoiser toy(2, 8, 8, 50);
    {
        NormalStream ns(4);
        for (auto& p : toy.parameters()) p += 0.05 * ns.next();
    }
    NoiseSchedule sched = test_sched();
    LatentTensor c_leg = run_ablation(s.bundle, sched, toy, 'c', s.cfg);
    BlendConfig cpp    = stage_config('c', s.cfg);
    cpp.dilution_legacy = false;
    cpp.dilution_pp     = true;
    LatentTensor c_pp  = run(s.bundle, sched, toy, cpp);
    CHECK(max_abs_diff(c_leg, c_pp) <= 1e-6f);
}

TEST_CASE("pipeline trace records one snapshot per timestep") {
    LoadedScene s = synth_scene(8, 1, 2, 9);
    ZeroPredictor p;
    NoiseSchedule sched = test_sched();
    PipelineTrace trace;
    run_detailed(s.bundle, sched, p, quiet_config(), &trace);
    CHECK(trace.steps.size() == static_cast<size_t>(sched.T));
    CHECK(trace.steps.front().t == sched.T);
    CHECK(trace.steps.back().t == 1);
}

TEST_CASE("scene manifest round-trip via make_scene/load_scene") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "pnpmix_scene_test";
    fs::remove_all(dir);
    std::string man = make_scene(dir.string(), 8, 2, 2, 42);
    LoadedScene s   = load_scene(man);
    CHECK(s.bundle.pers.size() == 2);
    CHECK(s.bundle.maskset.n() == 2);
    CHECK(s.T == 25);
    CHECK(s.stage == 'e');
    LoadedScene mem = synth_scene(8, 2, 2, 42);
    CHECK(s.bundle.back.data == mem.bundle.back.data);
    CHECK(s.bundle.pers[0].data == mem.bundle.pers[0].data);
    fs::remove_all(dir);
}

TEST_CASE("make_scene parameter validation") {
    CHECK_THROWS_AS(synth_scene(8, 0, 2, 1), parameter_error);
    CHECK_THROWS_AS(synth_scene(8, 4, 2, 1), parameter_error);
    CHECK_THROWS_AS(synth_scene(7, 1, 2, 1), parameter_error);
    CHECK_THROWS_AS(synth_scene(4, 1, 2, 1), parameter_error);
}
