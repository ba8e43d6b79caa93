#include "pnpmix/predictor.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "pnpmix/errors.hpp"

namespace fs = std::filesystem;

namespace pnpmix {

ConditioningVector ConditioningVector::one_hot(int id, int dim) {
    if (dim <= 0 || id < 0 || id >= dim) {
        throw parameter_error("one_hot: id " + std::to_string(id) + " out of range for dim " + std::to_string(dim));
    }
    ConditioningVector c;
    c.dim = dim;
    c.values.assign(static_cast<size_t>(dim), 0.0f);
    c.values[static_cast<size_t>(id)] = 1.0f;
    return c;
}

LatentTensor ZeroPredictor::predict(const PredictRequest& req) const {
    const LatentTensor& x = *req.x_t;
    return LatentTensor(x.channels, x.height, x.width, 0.0f);
}

LatentTensor IdentityScalePredictor::predict(const PredictRequest& req) const {
    const LatentTensor& x = *req.x_t;
    LatentTensor out(x.channels, x.height, x.width);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = k_ * x.data[i];
    return out;
}

FileExchangePredictor::FileExchangePredictor(std::string dir, int timeout_ms, int poll_ms)
    : dir_(std::move(dir)), timeout_ms_(timeout_ms), poll_ms_(poll_ms) {
    if (!fs::is_directory(dir_)) throw parameter_error("file-exchange: not a directory: " + dir_);
}

LatentTensor FileExchangePredictor::predict(const PredictRequest& req) const {
    const LatentTensor& x = *req.x_t;
    fs::path dir(dir_);
    fs::path req_pnpl  = dir / "request.pnpl";
    fs::path req_json  = dir / "request.json";
    fs::path resp_path = dir / "response.pnpl";
    std::error_code ec;
    fs::remove(resp_path, ec);

    save_latent(x, req_pnpl.string());
    nlohmann::json sidecar;
    sidecar["t"] = req.t;
    if (req.cond) sidecar["cond"] = req.cond->values;
    sidecar["directive"] = {
        {"mode", req.directive.mode == AttentionDirective::Mode::guided ? "guided" : "none"},
        {"alpha", req.directive.alpha},
    };
    {
        std::ofstream out(req_json);
        out << sidecar.dump(2) << "\n";
    }

    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
    while (!fs::exists(resp_path)) {
        if (std::chrono::steady_clock::now() > deadline) {
            throw integration_error("file-exchange: no response.pnpl within " + std::to_string(timeout_ms_) + " ms");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms_));
    }
    LatentTensor resp = load_latent(resp_path.string());
    fs::remove(resp_path, ec);
    if (!resp.same_shape(x)) {
        throw format_error("file-exchange: response shape " + resp.shape_str() + " does not match request " +
                           x.shape_str());
    }
    return resp;
}

}  // namespace pnpmix
