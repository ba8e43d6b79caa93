#ifndef PNPMIX_TOY_DENOISER_HPP
#define PNPMIX_TOY_DENOISER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "pnpmix/predictor.hpp"
#include "pnpmix/schedule.hpp"

namespace pnpmix {

// Minimal trainable eps-predictor: two resolution levels (one 2x downsample),
// a single-head self-attention block at the bottleneck, sinusoidal timestep
// embedding with the conditioning embedding added on top. Spatial shape is
// preserved for any even H, W; weights are resolution-independent.
//
// Internals run in double so analytic gradients check cleanly against finite
// differences; inputs and outputs are fp32 LatentTensors.
class ToyDenoiser : public Predictor {
public:
    ToyDenoiser(int channels, int hidden, int cond_dim, uint64_t init_seed);

    LatentTensor predict(const PredictRequest& req) const override;

    int channels() const { return channels_; }
    int hidden() const { return hidden_; }
    int cond_dim() const { return cond_dim_; }

    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }
    void zero_parameters();

    // Mean squared error against eps_target plus analytic parameter gradient.
    double loss_and_grad(const LatentTensor& x_t, int t, const ConditioningVector& cond,
                         const LatentTensor& eps_target, std::vector<double>& grad) const;
    // Forward-only loss, for finite-difference checks.
    double loss_only(const LatentTensor& x_t, int t, const ConditioningVector& cond,
                     const LatentTensor& eps_target) const;

    void save_checkpoint(const std::string& path) const;
    static ToyDenoiser load_checkpoint(const std::string& path);

private:
    struct Cache;
    void forward(const std::vector<double>& x, int H, int W, int t, const std::vector<double>& cond,
                 const AttentionDirective* directive, QKVBundle* capture, Cache* cache,
                 std::vector<double>& out) const;
    void check_input(const LatentTensor& x, const ConditioningVector* cond) const;

    int channels_;
    int hidden_;
    int cond_dim_;
    std::vector<double> params_;

    // flat offsets into params_
    struct Layout {
        size_t wc, we, be;
        size_t c1w, c1b, e1;
        size_t c2w, c2b, e2;
        size_t wq, wk, wv, wo;
        size_t c3w, c3b;
        size_t c4w, c4b;
        size_t total;
    } lay_;
    void compute_layout();
};

struct TrainExample {
    LatentTensor x0;
    ConditioningVector cond;
};

struct TrainReport {
    std::vector<double> loss;  // one entry per SGD step
};

// Plain SGD on E||eps - eps_theta(x_t, t, c)||^2 with x_t formed by forward
// noising. Fixed seed gives a bit-reproducible run.
TrainReport train_toy(ToyDenoiser& d, const std::vector<TrainExample>& dataset, const NoiseSchedule& sched,
                      int steps, double lr, uint64_t seed);

}  // namespace pnpmix

#endif
