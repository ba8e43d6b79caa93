#ifndef PNPMIX_SCHEDULE_HPP
#define PNPMIX_SCHEDULE_HPP

#include <string>
#include <vector>

#include "pnpmix/tensor.hpp"

namespace pnpmix {

enum class ScheduleKind { linear };

// Per-timestep DDPM schedule tables, 1-indexed (beta(1)..beta(T)).
// alpha_bar(0) == 1 by convention, which makes sigma(1) == 0: the final
// denoise step is deterministic.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // [T]
    std::vector<double> alpha;      // [T]
    std::vector<double> alpha_bar;  // [T]
    std::vector<double> sigma;      // [T]

    double beta_at(int t) const;       // 1 <= t <= T
    double alpha_at(int t) const;
    double alpha_bar_at(int t) const;  // accepts t = 0 (returns 1)
    double sigma_at(int t) const;

private:
    void check_t(int t) const;
};

NoiseSchedule build_schedule(int T, double beta_start, double beta_end,
                             ScheduleKind kind = ScheduleKind::linear);

// mu_hat_t = (x_t - beta_t/sqrt(1-alpha_bar_t) * eps) / sqrt(alpha_t), elementwise
LatentTensor posterior_mean(const NoiseSchedule& sched, int t, const LatentTensor& x_t, const LatentTensor& eps);

// CSV of (t, beta, alpha_bar, sigma), one row per timestep with header
std::string schedule_csv(const NoiseSchedule& sched);

}  // namespace pnpmix

#endif
