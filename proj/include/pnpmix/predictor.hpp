#ifndef PNPMIX_PREDICTOR_HPP
#define PNPMIX_PREDICTOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "pnpmix/attention.hpp"
#include "pnpmix/tensor.hpp"

namespace pnpmix {

struct ConditioningVector {
    int dim = 0;
    std::vector<float> values;

    static ConditioningVector one_hot(int id, int dim);
};

struct PredictRequest {
    const LatentTensor* x_t      = nullptr;
    int t                        = 0;
    const ConditioningVector* cond = nullptr;
    AttentionDirective directive;
    // When non-null, attention-capable predictors store this pass's Q/K/V here
    // so the orchestrator can feed them to a later guided pass.
    QKVBundle* capture = nullptr;
};

// The eps_theta abstraction. Implementations must be deterministic given
// identical inputs and directive, and safe to call concurrently.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual LatentTensor predict(const PredictRequest& req) const = 0;
};

class ZeroPredictor : public Predictor {
public:
    LatentTensor predict(const PredictRequest& req) const override;
};

class IdentityScalePredictor : public Predictor {
public:
    explicit IdentityScalePredictor(float k) : k_(k) {}
    LatentTensor predict(const PredictRequest& req) const override;

private:
    float k_;
};

// Serves eps via files so an external model process can cooperate: writes
// request.pnpl then request.json (the json is the ready signal), blocks until
// response.pnpl appears, loads and removes it.
class FileExchangePredictor : public Predictor {
public:
    FileExchangePredictor(std::string dir, int timeout_ms = 5000, int poll_ms = 10);
    LatentTensor predict(const PredictRequest& req) const override;

private:
    std::string dir_;
    int timeout_ms_;
    int poll_ms_;
};

}  // namespace pnpmix

#endif
