#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "pnpmix/blending.hpp"
#include "pnpmix/errors.hpp"
#include "pnpmix/inversion.hpp"
#include "pnpmix/masks.hpp"
#include "pnpmix/pipeline.hpp"
#include "pnpmix/scene.hpp"
#include "pnpmix/schedule.hpp"
#include "pnpmix/toy_denoiser.hpp"

namespace fs = std::filesystem;
using namespace pnpmix;

namespace {

// "zero", "idscale:<k>", "toy:<checkpoint>", "toyrand:<hidden>:<seed>"
std::unique_ptr<Predictor> make_predictor(const std::string& spec, int channels, int cond_dim) {
    if (spec == "zero") return std::make_unique<ZeroPredictor>();
    if (spec.rfind("idscale:", 0) == 0) {
        return std::make_unique<IdentityScalePredictor>(std::stof(spec.substr(8)));
    }
    if (spec.rfind("toy:", 0) == 0) {
        return std::make_unique<ToyDenoiser>(ToyDenoiser::load_checkpoint(spec.substr(4)));
    }
    if (spec.rfind("toyrand:", 0) == 0) {
        std::string rest = spec.substr(8);
        auto colon       = rest.find(':');
        if (colon == std::string::npos) throw parameter_error("toyrand spec: expected toyrand:<hidden>:<seed>");
        int hidden    = std::stoi(rest.substr(0, colon));
        uint64_t seed = std::stoull(rest.substr(colon + 1));
        return std::make_unique<ToyDenoiser>(channels, hidden, cond_dim, seed);
    }
    throw parameter_error("unknown predictor spec '" + spec + "'");
}

void write_preview(const LatentTensor& t, const std::string& prefix) {
    for (int c = 0; c < t.channels; ++c) {
        float lo = t.at(c, 0, 0), hi = lo;
        for (int h = 0; h < t.height; ++h)
            for (int w = 0; w < t.width; ++w) {
                lo = std::min(lo, t.at(c, h, w));
                hi = std::max(hi, t.at(c, h, w));
            }
        float span = (hi > lo) ? (hi - lo) : 1.0f;
        std::vector<uint8_t> px(static_cast<size_t>(t.height) * t.width);
        for (int h = 0; h < t.height; ++h)
            for (int w = 0; w < t.width; ++w)
                px[static_cast<size_t>(h) * t.width + w] =
                    static_cast<uint8_t>(std::lround(255.0f * (t.at(c, h, w) - lo) / span));
        save_pgm_gray(px, t.height, t.width, prefix + ".c" + std::to_string(c) + ".pgm");
    }
}

int cmd_invert(const std::string& in, const std::string& predictor_spec, int T, double beta_start, double beta_end,
               uint64_t seed, int cond_dim, const std::string& out) {
    if (!fs::exists(in)) throw parameter_error("file not found: " + in);
    LatentTensor x0 = load_latent(in);
    auto pred       = make_predictor(predictor_spec, x0.channels, cond_dim);
    NoiseSchedule sched = build_schedule(T, beta_start, beta_end);
    ConditioningVector cond = ConditioningVector::one_hot(0, cond_dim);
    InversionRecord rec = invert(x0, sched, *pred, cond, seed);
    save_record(rec, out);
    LatentTensor recon = reconstruct(rec, sched, *pred, cond);
    std::cout << "round-trip max-abs-error: " << max_abs_diff(recon, x0) << "\n";
    std::cout << "record written: " << out << "\n";
    return 0;
}

int cmd_blend(const std::string& manifest, const std::string& stage_flag, const std::string& predictor_spec,
              const std::string& out_flag, bool preview, const std::string& trace_dir, double alpha_flag,
              double beta_flag, int margin_flag, bool convex) {
    if (!fs::exists(manifest)) throw parameter_error("file not found: " + manifest);
    LoadedScene s = load_scene(manifest);
    char stage    = stage_flag.empty() ? s.stage : stage_flag[0];
    if (stage_flag.size() > 1) throw parameter_error("stage must be a single letter a..e");
    if (!std::isnan(alpha_flag)) s.cfg.alpha = static_cast<float>(alpha_flag);
    if (!std::isnan(beta_flag)) s.cfg.beta = static_cast<float>(beta_flag);
    if (margin_flag >= 0) s.cfg.me_margin = margin_flag;
    s.cfg.dilution_convex = convex;

    auto pred = make_predictor(predictor_spec, s.bundle.back.channels, s.cond_dim);
    NoiseSchedule sched = build_schedule(s.T, s.beta_start, s.beta_end);
    BlendConfig cfg     = stage_config(stage, s.cfg);

    PipelineTrace trace;
    RunResult res = run_detailed(s.bundle, sched, *pred, cfg, trace_dir.empty() ? nullptr : &trace);

    std::string out = out_flag.empty() ? (fs::path(manifest).parent_path() / "out.pnpl").string() : out_flag;
    save_latent(res.out, out);
    if (preview) write_preview(res.out, out);
    if (!trace_dir.empty()) {
        fs::create_directories(trace_dir);
        for (const auto& step : trace.steps) {
            save_latent(step.eps_gui, (fs::path(trace_dir) / ("eps_gui.t" + std::to_string(step.t) + ".pnpl")).string());
            save_latent(step.out, (fs::path(trace_dir) / ("out.t" + std::to_string(step.t) + ".pnpl")).string());
        }
    }

    float bg_err = max_abs_diff(hadamard(res.out, s.bundle.maskset.background),
                                hadamard(res.back_recon, s.bundle.maskset.background));
    std::cout << "output written: " << out << "\n";
    std::cout << "background-region max-abs-error: " << bg_err << " ("
              << (bg_err <= 1e-4f ? "PASS" : "FAIL") << ")\n";
    return 0;
}

int cmd_train_toy(const std::string& data_dir, const std::string& labels, int steps, double lr, int width, int T,
                  double beta_start, double beta_end, uint64_t seed, int cond_dim, const std::string& out,
                  const std::string& loss_csv) {
    if (!fs::is_directory(data_dir)) throw parameter_error("dataset directory not found: " + data_dir);
    if (!fs::exists(labels)) throw parameter_error("labels file not found: " + labels);
    std::ifstream lf(labels);
    std::vector<TrainExample> dataset;
    std::string fname;
    int cond_id;
    while (lf >> fname >> cond_id) {
        TrainExample ex;
        ex.x0   = load_latent((fs::path(data_dir) / fname).string());
        ex.cond = ConditioningVector::one_hot(cond_id, cond_dim);
        dataset.push_back(std::move(ex));
    }
    if (dataset.empty()) throw parameter_error("empty dataset: no labelled examples in " + labels);

    ToyDenoiser model(dataset[0].x0.channels, width, cond_dim, seed);
    NoiseSchedule sched = build_schedule(T, beta_start, beta_end);
    TrainReport report  = train_toy(model, dataset, sched, steps, lr, seed);
    model.save_checkpoint(out);

    if (!loss_csv.empty()) {
        std::ofstream csv(loss_csv);
        csv << "step,loss\n";
        csv.precision(10);
        for (size_t i = 0; i < report.loss.size(); ++i) csv << i << "," << report.loss[i] << "\n";
    }
    size_t head = std::max<size_t>(1, report.loss.size() / 10);
    double first = 0, last = 0;
    for (size_t i = 0; i < head; ++i) {
        first += report.loss[i];
        last += report.loss[report.loss.size() - 1 - i];
    }
    std::cout << "checkpoint written: " << out << "\n";
    std::cout << "mean loss (first " << head << " steps): " << first / head << "\n";
    std::cout << "mean loss (last " << head << " steps): " << last / head << "\n";
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"PnP-MIX: tuning-free multi-concept diffusion compositing engine"};
    app.require_subcommand(1);

    auto* inv = app.add_subcommand("invert", "DDPM-invert a latent and write the record");
    std::string inv_in, inv_pred = "zero", inv_out = "record.bin";
    int inv_T = 50, inv_cond_dim = 8;
    double inv_bs = 1e-4, inv_be = 0.02;
    uint64_t inv_seed = 0;
    inv->add_option("--in", inv_in, "input latent (.pnpl)")->required();
    inv->add_option("--predictor", inv_pred, "zero | idscale:<k> | toy:<ckpt> | toyrand:<hidden>:<seed>");
    inv->add_option("--T", inv_T, "timesteps")->check(CLI::PositiveNumber);
    inv->add_option("--beta-start", inv_bs, "schedule beta at t=1");
    inv->add_option("--beta-end", inv_be, "schedule beta at t=T");
    inv->add_option("--seed", inv_seed, "noise seed");
    inv->add_option("--cond-dim", inv_cond_dim, "conditioning dimension");
    inv->add_option("--out", inv_out, "output record path");

    auto* bl = app.add_subcommand("blend", "run the fusion pipeline on a scene manifest");
    std::string bl_man, bl_stage, bl_pred = "zero", bl_out, bl_trace;
    bool bl_preview = false, bl_convex = false;
    double bl_alpha = std::nan(""), bl_beta = std::nan("");
    int bl_margin = -1;
    bl->add_option("--manifest", bl_man, "scene manifest JSON")->required();
    bl->add_option("--stage", bl_stage, "ablation stage a..e (default: manifest)");
    bl->add_option("--predictor", bl_pred, "zero | idscale:<k> | toy:<ckpt> | toyrand:<hidden>:<seed>");
    bl->add_option("--out", bl_out, "output latent path");
    bl->add_flag("--preview", bl_preview, "write per-channel PGM previews");
    bl->add_option("--trace", bl_trace, "dump per-timestep snapshots to this directory");
    bl->add_option("--alpha", bl_alpha, "appearance guidance scale override");
    bl->add_option("--beta", bl_beta, "dilution scale override");
    bl->add_option("--me-margin", bl_margin, "expanded mask margin override");
    bl->add_flag("--dilution-convex", bl_convex, "experimental convex dilution blend");

    auto* tr = app.add_subcommand("train-toy", "train the toy denoiser");
    std::string tr_data, tr_labels, tr_out = "toy.ckpt", tr_csv;
    int tr_steps = 500, tr_width = 16, tr_T = 50, tr_cond_dim = 8;
    double tr_lr = 1e-3, tr_bs = 1e-4, tr_be = 0.02;
    uint64_t tr_seed = 0;
    tr->add_option("--data", tr_data, "dataset directory of PNPL images")->required();
    tr->add_option("--labels", tr_labels, "labels file: '<file> <cond_id>' per line")->required();
    tr->add_option("--steps", tr_steps, "SGD steps")->check(CLI::PositiveNumber);
    tr->add_option("--lr", tr_lr, "learning rate");
    tr->add_option("--width", tr_width, "model width");
    tr->add_option("--T", tr_T, "timesteps")->check(CLI::PositiveNumber);
    tr->add_option("--beta-start", tr_bs, "schedule beta at t=1");
    tr->add_option("--beta-end", tr_be, "schedule beta at t=T");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--cond-dim", tr_cond_dim, "conditioning dimension");
    tr->add_option("--out", tr_out, "checkpoint path");
    tr->add_option("--loss-csv", tr_csv, "per-step loss CSV path");

    auto* mk = app.add_subcommand("make-scene", "emit a synthetic scene with manifest");
    std::string mk_dir;
    int mk_size = 16, mk_n = 2, mk_channels = 3;
    uint64_t mk_seed = 0;
    mk->add_option("--dir", mk_dir, "output directory")->required();
    mk->add_option("--size", mk_size, "latent spatial size");
    mk->add_option("--n", mk_n, "concept count (1..3)");
    mk->add_option("--channels", mk_channels, "latent channels");
    mk->add_option("--seed", mk_seed, "asset seed");

    auto* sd = app.add_subcommand("schedule-dump", "emit the noise schedule as CSV");
    int sd_T = 50;
    double sd_bs = 1e-4, sd_be = 0.02;
    std::string sd_out;
    sd->add_option("--T", sd_T, "timesteps")->check(CLI::PositiveNumber);
    sd->add_option("--beta-start", sd_bs, "schedule beta at t=1");
    sd->add_option("--beta-end", sd_be, "schedule beta at t=T");
    sd->add_option("--out", sd_out, "CSV path (default: stdout)");

    auto* me = app.add_subcommand("mask-expand", "expand a mask to its bounding rectangle");
    std::string me_in, me_out;
    int me_margin = 8;
    me->add_option("--in", me_in, "input PGM mask")->required();
    me->add_option("--out", me_out, "output PGM mask")->required();
    me->add_option("--margin", me_margin, "margin in pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (inv->parsed()) return cmd_invert(inv_in, inv_pred, inv_T, inv_bs, inv_be, inv_seed, inv_cond_dim, inv_out);
    if (bl->parsed())
        return cmd_blend(bl_man, bl_stage, bl_pred, bl_out, bl_preview, bl_trace, bl_alpha, bl_beta, bl_margin,
                         bl_convex);
    if (tr->parsed())
        return cmd_train_toy(tr_data, tr_labels, tr_steps, tr_lr, tr_width, tr_T, tr_bs, tr_be, tr_seed, tr_cond_dim,
                             tr_out, tr_csv);
    if (mk->parsed()) {
        std::cout << "manifest written: " << make_scene(mk_dir, mk_size, mk_n, mk_channels, mk_seed) << "\n";
        return 0;
    }
    if (sd->parsed()) {
        std::string csv = schedule_csv(build_schedule(sd_T, sd_bs, sd_be));
        if (sd_out.empty()) {
            std::cout << csv;
        } else {
            std::ofstream out(sd_out);
            out << csv;
        }
        return 0;
    }
    if (me->parsed()) {
        if (!fs::exists(me_in)) throw parameter_error("file not found: " + me_in);
        save_mask_pgm(expand_to_rect(load_mask_pgm(me_in), me_margin), me_out);
        return 0;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const parameter_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dimension_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
