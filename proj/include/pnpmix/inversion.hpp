#ifndef PNPMIX_INVERSION_HPP
#define PNPMIX_INVERSION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "pnpmix/predictor.hpp"
#include "pnpmix/schedule.hpp"

namespace pnpmix {

// Auxiliary trajectory plus extracted noise codes. x_aux[0] is the source
// image x_0; x_aux[t] and z[t] are accessed 1-indexed via helpers.
struct InversionRecord {
    int T         = 0;
    uint64_t seed = 0;
    std::vector<LatentTensor> x_aux;  // size T+1, x_aux[0] = x_0
    std::vector<LatentTensor> z;      // size T, z[t] stored at z[t-1]

    const LatentTensor& x_at(int t) const { return x_aux.at(static_cast<size_t>(t)); }
    const LatentTensor& z_at(int t) const { return z.at(static_cast<size_t>(t) - 1); }
};

// Forward-noise x_0 with independent per-timestep draws, then extract the
// per-step noise codes z_t = (x_{t-1} - mu_hat_t(x_t)) / sigma_t.
//
// t = 1 is special: sigma_1 = 0 makes the final denoise step deterministic,
// so z_1 == 0 and x_1 is constructed (fixed-point on the predictor) such that
// mu_hat_1(x_1) == x_0 exactly. That keeps the round trip exact for any
// predictor.
InversionRecord invert(const LatentTensor& x_0, const NoiseSchedule& sched, const Predictor& predictor,
                       const ConditioningVector& cond, uint64_t rng_seed);

// x_{t-1} = mu_hat_t(x_t; eps) + sigma_t * z_t
LatentTensor denoise_step(const LatentTensor& x_t, const LatentTensor& z_t, const NoiseSchedule& sched, int t,
                          const LatentTensor& eps);

// Runs denoise_step from x_aux[T] down to t=1 with the stored codes.
LatentTensor reconstruct(const InversionRecord& rec, const NoiseSchedule& sched, const Predictor& predictor,
                         const ConditioningVector& cond);

// Container with entries x_aux/0..T and z/1..T, meta {T, seed}.
void save_record(const InversionRecord& rec, const std::string& path);
InversionRecord load_record(const std::string& path);

}  // namespace pnpmix

#endif
