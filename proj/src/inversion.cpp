#include "pnpmix/inversion.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "pnpmix/container.hpp"
#include "pnpmix/errors.hpp"
#include "pnpmix/rng.hpp"

namespace pnpmix {

namespace {

int worker_count(int jobs) {
    unsigned hw = std::thread::hardware_concurrency();
    int n       = hw == 0 ? 1 : static_cast<int>(hw);
    if (const char* env = std::getenv("PNPMIX_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return std::max(1, std::min(n, jobs));
}

// Runs fn(t) for t in [lo, hi] across workers. Each t writes only its own
// slot, so the result is order-independent.
template <typename Fn>
void parallel_for_t(int lo, int hi, Fn fn) {
    int jobs = hi - lo + 1;
    if (jobs <= 0) return;
    int nw = worker_count(jobs);
    if (nw == 1) {
        for (int t = lo; t <= hi; ++t) fn(t);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(static_cast<size_t>(nw));
    for (int w = 0; w < nw; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int t = lo + w; t <= hi; t += nw) fn(t);
            } catch (...) {
                errs[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

InversionRecord invert(const LatentTensor& x_0, const NoiseSchedule& sched, const Predictor& predictor,
                       const ConditioningVector& cond, uint64_t rng_seed) {
    ensure_finite(x_0, "invert: x_0");
    for (int t = 2; t <= sched.T; ++t) {
        if (sched.sigma_at(t) == 0.0) {
            throw parameter_error("invert: sigma is zero at timestep " + std::to_string(t));
        }
    }

    InversionRecord rec;
    rec.T    = sched.T;
    rec.seed = rng_seed;
    rec.x_aux.assign(static_cast<size_t>(sched.T) + 1, LatentTensor());
    rec.z.assign(static_cast<size_t>(sched.T), LatentTensor());
    rec.x_aux[0] = x_0;

    GaussianField field(rng_seed);
    parallel_for_t(2, sched.T, [&](int t) {
        float sa = static_cast<float>(std::sqrt(sched.alpha_bar_at(t)));
        float sb = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar_at(t)));
        LatentTensor x_t(x_0.channels, x_0.height, x_0.width);
        for (int c = 0; c < x_0.channels; ++c)
            for (int h = 0; h < x_0.height; ++h)
                for (int w = 0; w < x_0.width; ++w)
                    x_t.at(c, h, w) = sa * x_0.at(c, h, w) + sb * field.sample(t, c, h, w, x_0.width);
        rec.x_aux[static_cast<size_t>(t)] = std::move(x_t);
    });

    // t = 1: construct x_1 so that mu_hat_1(x_1) == x_0 and z_1 == 0. The map
    // x_1 -> sqrt(alpha_1) x_0 + (beta_1/sqrt(1-abar_1)) eps_theta(x_1) is a
    // contraction for any Lipschitz predictor because beta_1/sqrt(1-abar_1)
    // equals sqrt(beta_1).
    {
        float sa = static_cast<float>(std::sqrt(sched.alpha_bar_at(1)));
        float sb = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar_at(1)));
        float ec = static_cast<float>(sched.beta_at(1) / std::sqrt(1.0 - sched.alpha_bar_at(1)));
        LatentTensor x_1(x_0.channels, x_0.height, x_0.width);
        for (int c = 0; c < x_0.channels; ++c)
            for (int h = 0; h < x_0.height; ++h)
                for (int w = 0; w < x_0.width; ++w)
                    x_1.at(c, h, w) = sa * x_0.at(c, h, w) + sb * field.sample(1, c, h, w, x_0.width);
        for (int iter = 0; iter < 100; ++iter) {
            PredictRequest req;
            req.x_t  = &x_1;
            req.t    = 1;
            req.cond = &cond;
            LatentTensor eps = predictor.predict(req);
            LatentTensor next(x_0.channels, x_0.height, x_0.width);
            for (size_t i = 0; i < next.data.size(); ++i) next.data[i] = sa * x_0.data[i] + ec * eps.data[i];
            float delta = max_abs_diff(next, x_1);
            x_1         = std::move(next);
            if (delta <= 1e-7f) break;
        }
        rec.x_aux[1] = std::move(x_1);
        rec.z[0]     = LatentTensor(x_0.channels, x_0.height, x_0.width, 0.0f);
    }

    parallel_for_t(2, sched.T, [&](int t) {
        PredictRequest req;
        req.x_t  = &rec.x_aux[static_cast<size_t>(t)];
        req.t    = t;
        req.cond = &cond;
        LatentTensor eps = predictor.predict(req);
        LatentTensor mu  = posterior_mean(sched, t, rec.x_aux[static_cast<size_t>(t)], eps);
        float inv_sigma  = static_cast<float>(1.0 / sched.sigma_at(t));
        LatentTensor z_t(x_0.channels, x_0.height, x_0.width);
        const LatentTensor& prev = rec.x_aux[static_cast<size_t>(t) - 1];
        for (size_t i = 0; i < z_t.data.size(); ++i) z_t.data[i] = (prev.data[i] - mu.data[i]) * inv_sigma;
        for (size_t i = 0; i < z_t.data.size(); ++i) {
            if (!std::isfinite(z_t.data[i])) {
                throw numeric_error("invert: non-finite noise code at timestep " + std::to_string(t));
            }
        }
        rec.z[static_cast<size_t>(t) - 1] = std::move(z_t);
    });

    return rec;
}

LatentTensor denoise_step(const LatentTensor& x_t, const LatentTensor& z_t, const NoiseSchedule& sched, int t,
                          const LatentTensor& eps) {
    if (!x_t.same_shape(z_t) || !x_t.same_shape(eps)) {
        throw dimension_error("denoise_step: shapes differ (x_t " + x_t.shape_str() + ", z_t " + z_t.shape_str() +
                              ", eps " + eps.shape_str() + ")");
    }
    LatentTensor mu = posterior_mean(sched, t, x_t, eps);
    float sigma     = static_cast<float>(sched.sigma_at(t));
    if (sigma == 0.0f) return mu;
    LatentTensor out(x_t.channels, x_t.height, x_t.width);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = mu.data[i] + sigma * z_t.data[i];
    return out;
}

LatentTensor reconstruct(const InversionRecord& rec, const NoiseSchedule& sched, const Predictor& predictor,
                         const ConditioningVector& cond) {
    if (rec.T != sched.T || rec.x_aux.size() != static_cast<size_t>(rec.T) + 1 ||
        rec.z.size() != static_cast<size_t>(rec.T)) {
        throw parameter_error("reconstruct: record length does not match schedule T=" + std::to_string(sched.T));
    }
    LatentTensor x = rec.x_at(rec.T);
    for (int t = rec.T; t >= 1; --t) {
        PredictRequest req;
        req.x_t  = &x;
        req.t    = t;
        req.cond = &cond;
        LatentTensor eps = predictor.predict(req);
        x = denoise_step(x, rec.z_at(t), sched, t, eps);
    }
    return x;
}

void save_record(const InversionRecord& rec, const std::string& path) {
    Container c;
    c.meta["T"]    = rec.T;
    c.meta["seed"] = rec.seed;
    for (int t = 0; t <= rec.T; ++t) c.entries.emplace_back("x_aux/" + std::to_string(t), rec.x_at(t));
    for (int t = 1; t <= rec.T; ++t) c.entries.emplace_back("z/" + std::to_string(t), rec.z_at(t));
    save_container(c, path);
}

InversionRecord load_record(const std::string& path) {
    Container c = load_container(path);
    InversionRecord rec;
    rec.T    = c.meta.at("T").get<int>();
    rec.seed = c.meta.at("seed").get<uint64_t>();
    if (rec.T < 1) throw format_error("record: bad T in " + path);
    rec.x_aux.reserve(static_cast<size_t>(rec.T) + 1);
    rec.z.reserve(static_cast<size_t>(rec.T));
    for (int t = 0; t <= rec.T; ++t) rec.x_aux.push_back(c.get("x_aux/" + std::to_string(t)));
    for (int t = 1; t <= rec.T; ++t) rec.z.push_back(c.get("z/" + std::to_string(t)));
    return rec;
}

}  // namespace pnpmix
