#include "pnpmix/schedule.hpp"

#include <cmath>
#include <sstream>

#include "pnpmix/errors.hpp"

namespace pnpmix {

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T) {
        throw parameter_error("timestep " + std::to_string(t) + " out of range [1," + std::to_string(T) + "]");
    }
}

double NoiseSchedule::beta_at(int t) const {
    check_t(t);
    return beta[t - 1];
}

double NoiseSchedule::alpha_at(int t) const {
    check_t(t);
    return alpha[t - 1];
}

double NoiseSchedule::alpha_bar_at(int t) const {
    if (t == 0) return 1.0;
    check_t(t);
    return alpha_bar[t - 1];
}

double NoiseSchedule::sigma_at(int t) const {
    check_t(t);
    return sigma[t - 1];
}

NoiseSchedule build_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
    if (T < 1) throw parameter_error("build_schedule: T must be >= 1, got " + std::to_string(T));
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw parameter_error("build_schedule: need 0 < beta_start <= beta_end < 1");
    }
    if (kind != ScheduleKind::linear) throw parameter_error("build_schedule: unsupported schedule kind");

    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        double frac  = (T == 1) ? 0.0 : static_cast<double>(i) / (T - 1);
        s.beta[i]    = beta_start + (beta_end - beta_start) * frac;
        s.alpha[i]   = 1.0 - s.beta[i];
        double prev  = prod;  // alpha_bar[t-1], with alpha_bar[0] = 1
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        s.sigma[i]     = std::sqrt(s.beta[i] * (1.0 - prev) / (1.0 - prod));
    }
    return s;
}

LatentTensor posterior_mean(const NoiseSchedule& sched, int t, const LatentTensor& x_t, const LatentTensor& eps) {
    if (!x_t.same_shape(eps)) {
        throw dimension_error("posterior_mean: x_t shape " + x_t.shape_str() + " does not match eps shape " +
                              eps.shape_str());
    }
    double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    double eps_coef       = sched.beta_at(t) / std::sqrt(1.0 - sched.alpha_bar_at(t));
    float a = static_cast<float>(inv_sqrt_alpha);
    float b = static_cast<float>(-inv_sqrt_alpha * eps_coef);
    LatentTensor out(x_t.channels, x_t.height, x_t.width);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = a * x_t.data[i] + b * eps.data[i];
    }
    return out;
}

std::string schedule_csv(const NoiseSchedule& sched) {
    std::ostringstream os;
    os << "t,beta,alpha_bar,sigma\n";
    os.precision(10);
    for (int t = 1; t <= sched.T; ++t) {
        os << t << "," << sched.beta_at(t) << "," << sched.alpha_bar_at(t) << "," << sched.sigma_at(t) << "\n";
    }
    return os.str();
}

}  // namespace pnpmix
