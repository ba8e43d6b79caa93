#include "pnpmix/pipeline.hpp"

#include <string>

#include "pnpmix/errors.hpp"
#include "pnpmix/rng.hpp"

namespace pnpmix {

void SceneBundle::validate() const {
    if (!back.same_shape(inpaint)) {
        throw validation_error("scene: back shape " + back.shape_str() + " != inpaint shape " + inpaint.shape_str());
    }
    if (pers.empty()) throw validation_error("scene: need at least one concept image");
    for (size_t i = 0; i < pers.size(); ++i) {
        if (!pers[i].same_shape(back)) {
            throw validation_error("scene: concept " + std::to_string(i) + " shape " + pers[i].shape_str() +
                                   " != background " + back.shape_str());
        }
    }
    if (maskset.n() != static_cast<int>(pers.size())) {
        throw validation_error("scene: " + std::to_string(maskset.n()) + " object masks for " +
                               std::to_string(pers.size()) + " concept images");
    }
    if (maskset.background.height != back.height || maskset.background.width != back.width) {
        throw validation_error("scene: mask shape " + maskset.background.shape_str() + " != latent spatial shape");
    }
    if (cond_per.size() != pers.size()) {
        throw validation_error("scene: conditioning count does not match concept count");
    }
}

namespace {

uint64_t role_seed(uint64_t scene_seed, uint64_t role) { return splitmix64(scene_seed ^ (0xa5c1e5ull + role)); }

[[noreturn]] void rethrow_tagged(int t, const char* phase) {
    std::string tag = "pipeline t=" + std::to_string(t) + " stage=" + phase + ": ";
    try {
        throw;
    } catch (const dimension_error& e) {
        throw dimension_error(tag + e.what());
    } catch (const parameter_error& e) {
        throw parameter_error(tag + e.what());
    } catch (const validation_error& e) {
        throw validation_error(tag + e.what());
    } catch (const numeric_error& e) {
        throw numeric_error(tag + e.what());
    } catch (const integration_error& e) {
        throw integration_error(tag + e.what());
    } catch (const format_error& e) {
        throw format_error(tag + e.what());
    } catch (const error& e) {
        throw error(tag + e.what());
    }
}

}  // namespace

PreparedScene prepare(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor) {
    bundle.validate();
    PreparedScene ps;
    try {
        ps.rec_back = invert(bundle.back, sched, predictor, bundle.cond_back, role_seed(bundle.seed, 0));
    } catch (const error& e) {
        throw error(std::string("prepare[background]: ") + e.what());
    }
    try {
        // same draw seed as the background: the inpainted image is the
        // background minus objects, and aligned draws keep the two
        // trajectories coherent where the images agree
        ps.rec_inpaint = invert(bundle.inpaint, sched, predictor, bundle.cond_back, role_seed(bundle.seed, 0));
    } catch (const error& e) {
        throw error(std::string("prepare[inpaint]: ") + e.what());
    }
    for (size_t i = 0; i < bundle.pers.size(); ++i) {
        try {
            ps.rec_per.push_back(
                invert(bundle.pers[i], sched, predictor, bundle.cond_per[i], role_seed(bundle.seed, 2 + i)));
        } catch (const error& e) {
            throw error("prepare[concept " + std::to_string(i) + "]: " + e.what());
        }
    }
    auto [out, refs] = clone_background(ps.rec_back.x_at(sched.T), static_cast<int>(bundle.pers.size()));
    ps.bank.out      = std::move(out);
    ps.bank.refs     = std::move(refs);
    ps.bank.back     = ps.rec_back.x_at(sched.T);
    ps.bank.inpaint  = ps.rec_inpaint.x_at(sched.T);
    for (const auto& rec : ps.rec_per) ps.bank.pers.push_back(rec.x_at(sched.T));
    ps.bank.t = sched.T;
    return ps;
}

RunResult run_detailed(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor,
                       const BlendConfig& cfg, PipelineTrace* trace) {
    cfg.validate();
    PreparedScene ps = prepare(bundle, sched, predictor);
    LatentBank& bank = ps.bank;
    const int n      = bundle.maskset.n();

    std::vector<BinaryMask> me;
    for (int i = 0; i < n; ++i) me.push_back(expand_to_rect(bundle.maskset.objects[static_cast<size_t>(i)], cfg.me_margin));

    for (int t = sched.T; t >= 1; --t) {
        const char* phase = "predict";
        try {
            // pre-step trajectory values feed the dilution applied after the advance
            LatentTensor back_t    = bank.back;
            LatentTensor inpaint_t = bank.inpaint;

            PredictRequest breq;
            breq.x_t  = &bank.back;
            breq.t    = t;
            breq.cond = &bundle.cond_back;
            LatentTensor eps_back = predictor.predict(breq);

            PredictRequest ireq;
            ireq.x_t  = &bank.inpaint;
            ireq.t    = t;
            ireq.cond = &bundle.cond_back;
            LatentTensor eps_inpaint = predictor.predict(ireq);

            std::vector<QKVBundle> donors(static_cast<size_t>(n));
            std::vector<LatentTensor> eps_per(static_cast<size_t>(n));
            std::vector<LatentTensor> eps_ref(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                PredictRequest preq;
                preq.x_t     = &bank.pers[static_cast<size_t>(i)];
                preq.t       = t;
                preq.cond    = &bundle.cond_per[static_cast<size_t>(i)];
                preq.capture = cfg.guided_attention ? &donors[static_cast<size_t>(i)] : nullptr;
                eps_per[static_cast<size_t>(i)] = predictor.predict(preq);

                PredictRequest rreq;
                rreq.x_t  = &bank.refs[static_cast<size_t>(i)];
                rreq.t    = t;
                rreq.cond = &bundle.cond_out;
                if (cfg.guided_attention) {
                    rreq.directive.mode  = AttentionDirective::Mode::guided;
                    rreq.directive.donor = &donors[static_cast<size_t>(i)];
                    rreq.directive.alpha = cfg.value_guidance ? cfg.alpha : 0.0f;
                }
                eps_ref[static_cast<size_t>(i)] = predictor.predict(rreq);
            }

            phase = "resynthesize";
            std::vector<LatentTensor> eps_eff = eps_ref;
            if (cfg.ref_noise_mix) {
                for (int i = 0; i < n; ++i) {
                    eps_eff[static_cast<size_t>(i)] = resynthesize_ref_noise(
                        eps_ref[static_cast<size_t>(i)], eps_back, bundle.maskset.objects[static_cast<size_t>(i)]);
                }
            }

            phase = "mix";
            LatentTensor eps_gui = mix_noise(eps_back, eps_ref, bundle.maskset);

            phase = "step";
            const LatentTensor& z_back_t = ps.rec_back.z_at(t);
            bank.out = denoise_step(bank.out, z_back_t, sched, t, eps_gui);
            for (int i = 0; i < n; ++i) {
                bank.refs[static_cast<size_t>(i)] =
                    denoise_step(bank.refs[static_cast<size_t>(i)], z_back_t, sched, t, eps_eff[static_cast<size_t>(i)]);
            }
            bank.back    = denoise_step(back_t, z_back_t, sched, t, eps_back);
            bank.inpaint = denoise_step(inpaint_t, ps.rec_inpaint.z_at(t), sched, t, eps_inpaint);
            for (int i = 0; i < n; ++i) {
                bank.pers[static_cast<size_t>(i)] = denoise_step(
                    bank.pers[static_cast<size_t>(i)], ps.rec_per[static_cast<size_t>(i)].z_at(t), sched, t,
                    eps_per[static_cast<size_t>(i)]);
            }

            phase = "dilute";
            if (cfg.dilution_pp || cfg.dilution_legacy) {
                for (int i = 0; i < n; ++i) {
                    const LatentTensor& source = cfg.dilution_pp ? inpaint_t : back_t;
                    bank.refs[static_cast<size_t>(i)] =
                        cfg.dilution_pp
                            ? background_dilution_pp(source, bank.refs[static_cast<size_t>(i)],
                                                     me[static_cast<size_t>(i)], cfg.beta, cfg.dilution_convex)
                            : background_dilution_legacy(source, bank.refs[static_cast<size_t>(i)],
                                                         me[static_cast<size_t>(i)], cfg.beta, cfg.dilution_convex);
                }
            }
            bank.t = t - 1;

            if (trace) trace->steps.push_back({t, eps_gui, bank.out});
        } catch (...) {
            rethrow_tagged(t, phase);
        }
    }

    return RunResult{bank.out, bank.back};
}

LatentTensor run(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor,
                 const BlendConfig& cfg) {
    return run_detailed(bundle, sched, predictor, cfg).out;
}

BlendConfig stage_config(char stage, const BlendConfig& base) {
    BlendConfig cfg      = base;
    cfg.guided_attention = true;
    cfg.value_guidance   = false;
    cfg.dilution_legacy  = false;
    cfg.dilution_pp      = false;
    cfg.ref_noise_mix    = false;
    switch (stage) {
        case 'e':
            cfg.dilution_pp = true;
            cfg.ref_noise_mix = true;
            cfg.value_guidance = true;
            break;
        case 'd':
            cfg.dilution_legacy = true;
            cfg.ref_noise_mix = true;
            cfg.value_guidance = true;
            break;
        case 'c':
            cfg.dilution_legacy = true;
            cfg.value_guidance = true;
            break;
        case 'b':
            cfg.value_guidance = true;
            break;
        case 'a':
            break;
        default:
            throw parameter_error(std::string("unknown ablation stage '") + stage + "', expected a..e");
    }
    return cfg;
}

LatentTensor run_ablation(const SceneBundle& bundle, const NoiseSchedule& sched, const Predictor& predictor,
                          char stage, const BlendConfig& base) {
    return run(bundle, sched, predictor, stage_config(stage, base));
}

}  // namespace pnpmix
