#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pnpmix/errors.hpp"
#include "pnpmix/inversion.hpp"
#include "pnpmix/rng.hpp"
#include "pnpmix/toy_denoiser.hpp"

using namespace pnpmix;
namespace fs = std::filesystem;

namespace {

LatentTensor random_latent(int c, int h, int w, uint64_t seed) {
    LatentTensor t(c, h, w);
    NormalStream rng(seed);
    for (auto& v : t.data) v = static_cast<float>(rng.next());
    return t;
}

// Returns the exact forward-noising eps implied by the noisy latent:
// eps = (x_t - sqrt(abar_t) x_0) / sqrt(1 - abar_t)
class ExactEpsOracle : public Predictor {
public:
    ExactEpsOracle(const LatentTensor& x0, const NoiseSchedule& sched) : x0_(x0), sched_(sched) {}
    LatentTensor predict(const PredictRequest& req) const override {
        const LatentTensor& x = *req.x_t;
        double sa = std::sqrt(sched_.alpha_bar_at(req.t));
        double sb = std::sqrt(1.0 - sched_.alpha_bar_at(req.t));
        LatentTensor out(x.channels, x.height, x.width);
        for (size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = static_cast<float>((x.data[i] - sa * x0_.data[i]) / sb);
        }
        return out;
    }

private:
    const LatentTensor& x0_;
    const NoiseSchedule& sched_;
};

ConditioningVector cond4() { return ConditioningVector::one_hot(0, 4); }

}  // namespace

TEST_CASE("denoise_step scalar hand-evaluation oracle") {
    NoiseSchedule s = build_schedule(3, 0.1, 0.3);
    LatentTensor x(1, 1, 1, 1.0f), eps(1, 1, 1, 0.0f), z(1, 1, 1, 1.0f);
    LatentTensor out = denoise_step(x, z, s, 2, eps);
    // mu = 1/sqrt(0.8), sigma_2 = sqrt(0.2*(1-0.9)/(1-0.72))
    CHECK(out.at(0, 0, 0) == doctest::Approx(1.38529).epsilon(1e-4));
}

TEST_CASE("denoise_step with zero code is the posterior mean") {
    NoiseSchedule s = build_schedule(3, 0.1, 0.3);
    LatentTensor x = random_latent(1, 2, 2, 1);
    LatentTensor eps = random_latent(1, 2, 2, 2);
    LatentTensor z(1, 2, 2, 0.0f);
    LatentTensor out = denoise_step(x, z, s, 2, eps);
    LatentTensor mu  = posterior_mean(s, 2, x, eps);
    CHECK(max_abs_diff(out, mu) == 0.0f);
}

TEST_CASE("denoise_step rejects shape mismatch") {
    NoiseSchedule s = build_schedule(3, 0.1, 0.3);
    LatentTensor x(1, 2, 2), eps(1, 3, 3), z(1, 2, 2);
    CHECK_THROWS_AS(denoise_step(x, z, s, 2, eps), dimension_error);
}

TEST_CASE("round-trip is exact for every predictor and seed") {
    NoiseSchedule s = build_schedule(20, 1e-3, 0.05);
    ZeroPredictor zero;
    IdentityScalePredictor idscale(0.3f);
    ToyDenoiser toy(2, 8, 4, 123);
    {
        NormalStream ns(5);
        for (auto& p : toy.parameters()) p += 0.1 * ns.next();
    }
    const Predictor* preds[] = {&zero, &idscale, &toy};
    ConditioningVector c = cond4();
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        LatentTensor x0 = random_latent(2, 8, 8, 100 + seed);
        for (const Predictor* p : preds) {
            InversionRecord rec = invert(x0, s, *p, c, seed);
            LatentTensor recon  = reconstruct(rec, s, *p, c);
            CHECK(max_abs_diff(recon, x0) <= 1e-4f);
        }
    }
}

TEST_CASE("denoise_step inverts the code extraction along the stored trajectory") {
    NoiseSchedule s = build_schedule(10, 1e-3, 0.05);
    LatentTensor x0 = random_latent(1, 4, 4, 7);
    IdentityScalePredictor p(0.2f);
    ConditioningVector c = cond4();
    InversionRecord rec = invert(x0, s, p, c, 9);
    for (int t = s.T; t >= 2; --t) {
        PredictRequest req;
        req.x_t  = &rec.x_at(t);
        req.t    = t;
        req.cond = &c;
        LatentTensor eps  = p.predict(req);
        LatentTensor prev = denoise_step(rec.x_at(t), rec.z_at(t), s, t, eps);
        CHECK(max_abs_diff(prev, rec.x_at(t - 1)) <= 1e-5f);
    }
}

TEST_CASE("exact-eps oracle yields the DDPM-native residual codes") {
    NoiseSchedule s = build_schedule(10, 1e-3, 0.05);
    LatentTensor x0 = random_latent(1, 4, 4, 8);
    ExactEpsOracle oracle(x0, s);
    ConditioningVector c = cond4();
    InversionRecord rec = invert(x0, s, oracle, c, 10);
    LatentTensor recon  = reconstruct(rec, s, oracle, c);
    CHECK(max_abs_diff(recon, x0) <= 1e-5f);
    // z_1 convention
    for (float v : rec.z_at(1).data) CHECK(v == 0.0f);
}

TEST_CASE("noisy-latent sample mean converges to sqrt(abar)*x_0") {
    NoiseSchedule s = build_schedule(3, 0.1, 0.3);
    LatentTensor x0(1, 2, 2);
    x0.data = {1.0f, -2.0f, 0.5f, 3.0f};
    ZeroPredictor p;
    ConditioningVector c = cond4();
    const int t = 2, trials = 10000;
    std::vector<double> sum(4, 0.0), sumsq(4, 0.0);
    for (int k = 0; k < trials; ++k) {
        InversionRecord rec = invert(x0, s, p, c, static_cast<uint64_t>(k));
        for (int i = 0; i < 4; ++i) {
            double v = rec.x_at(t).data[static_cast<size_t>(i)];
            sum[static_cast<size_t>(i)] += v;
            sumsq[static_cast<size_t>(i)] += v * v;
        }
    }
    double sa = std::sqrt(s.alpha_bar_at(t));
    for (int i = 0; i < 4; ++i) {
        double mean   = sum[static_cast<size_t>(i)] / trials;
        double var    = sumsq[static_cast<size_t>(i)] / trials - mean * mean;
        double stderr_ = std::sqrt(var / trials);
        CHECK(std::abs(mean - sa * x0.data[static_cast<size_t>(i)]) < 3.0 * stderr_);
        CHECK(var == doctest::Approx(1.0 - s.alpha_bar_at(t)).epsilon(0.1));
    }
}

TEST_CASE("perturbing z[T] moves the reconstruction") {
    NoiseSchedule s = build_schedule(10, 1e-3, 0.05);
    LatentTensor x0 = random_latent(1, 4, 4, 11);
    ZeroPredictor p;
    ConditioningVector c = cond4();
    InversionRecord rec = invert(x0, s, p, c, 12);
    for (auto& v : rec.z.back().data) v += 0.1f;
    LatentTensor recon = reconstruct(rec, s, p, c);
    CHECK(max_abs_diff(recon, x0) > 1e-3f);
}

TEST_CASE("elementwise predictors give elementwise-local codes") {
    NoiseSchedule s = build_schedule(8, 1e-3, 0.05);
    IdentityScalePredictor p(0.4f);
    ConditioningVector c = cond4();
    LatentTensor x0 = random_latent(1, 3, 3, 13);
    InversionRecord a = invert(x0, s, p, c, 14);
    LatentTensor x0b  = x0;
    x0b.at(0, 1, 1) += 0.5f;
    InversionRecord b = invert(x0b, s, p, c, 14);
    for (int t = 2; t <= s.T; ++t) {
        for (int h = 0; h < 3; ++h)
            for (int w = 0; w < 3; ++w) {
                if (h == 1 && w == 1) continue;
                CHECK(a.z_at(t).at(0, h, w) == b.z_at(t).at(0, h, w));
            }
    }
}

TEST_CASE("codes depend only on adjacent trajectory points") {
    // recompute z_t from the stored x_aux by the extraction formula; matching the
    // record proves z_t never reads other timesteps
    NoiseSchedule s = build_schedule(8, 1e-3, 0.05);
    IdentityScalePredictor p(0.25f);
    ConditioningVector c = cond4();
    LatentTensor x0 = random_latent(1, 4, 4, 15);
    InversionRecord rec = invert(x0, s, p, c, 16);
    for (int t = 2; t <= s.T; ++t) {
        PredictRequest req;
        req.x_t  = &rec.x_at(t);
        req.t    = t;
        req.cond = &c;
        LatentTensor mu = posterior_mean(s, t, rec.x_at(t), p.predict(req));
        for (size_t i = 0; i < mu.data.size(); ++i) {
            float z = static_cast<float>((rec.x_at(t - 1).data[i] - mu.data[i]) / s.sigma_at(t));
            CHECK(rec.z_at(t).data[i] == doctest::Approx(z).epsilon(1e-5));
        }
    }
}

TEST_CASE("record serialization round-trips") {
    NoiseSchedule s = build_schedule(6, 1e-3, 0.05);
    LatentTensor x0 = random_latent(2, 4, 4, 17);
    ZeroPredictor p;
    ConditioningVector c = cond4();
    InversionRecord rec = invert(x0, s, p, c, 18);
    auto path = fs::temp_directory_path() / "pnpmix_record_test.bin";
    save_record(rec, path.string());
    InversionRecord r = load_record(path.string());
    CHECK(r.T == rec.T);
    CHECK(r.seed == rec.seed);
    for (int t = 0; t <= s.T; ++t) CHECK(r.x_aux[static_cast<size_t>(t)].data == rec.x_aux[static_cast<size_t>(t)].data);
    for (int t = 1; t <= s.T; ++t) CHECK(r.z_at(t).data == rec.z_at(t).data);
    fs::remove(path);
}

TEST_CASE("inversion output is independent of the worker count") {
    NoiseSchedule s = build_schedule(12, 1e-3, 0.05);
    LatentTensor x0 = random_latent(2, 8, 8, 19);
    IdentityScalePredictor p(0.2f);
    ConditioningVector c = cond4();

    setenv("PNPMIX_THREADS", "1", 1);
    InversionRecord serial = invert(x0, s, p, c, 20);
    setenv("PNPMIX_THREADS", "4", 1);
    InversionRecord parallel = invert(x0, s, p, c, 20);
    unsetenv("PNPMIX_THREADS");

    for (int t = 1; t <= s.T; ++t) {
        CHECK(serial.x_at(t).data == parallel.x_at(t).data);
        CHECK(serial.z_at(t).data == parallel.z_at(t).data);
    }
}

TEST_CASE("invert rejects non-finite input") {
    NoiseSchedule s = build_schedule(4, 1e-3, 0.05);
    LatentTensor x0(1, 2, 2);
    x0.at(0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
    ZeroPredictor p;
    ConditioningVector c = cond4();
    CHECK_THROWS_AS(invert(x0, s, p, c, 1), numeric_error);
}
