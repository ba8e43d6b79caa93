#include "pnpmix/attention.hpp"

#include <cmath>

#include "pnpmix/errors.hpp"

namespace pnpmix {

Matrix self_attention(const QKVBundle& b) {
    int n = b.Q.rows;
    int d = b.Q.cols;
    if (d <= 0) throw parameter_error("self_attention: d_k must be positive");
    if (b.K.rows != n || b.V.rows != n || b.K.cols != d || b.V.cols != d) {
        throw parameter_error("self_attention: Q/K/V token counts or dims differ");
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix out(n, d);
    std::vector<double> logits(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double maxl = -1e300;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += static_cast<double>(b.Q.at(i, k)) * b.K.at(j, k);
            logits[j] = s * scale;
            maxl      = std::max(maxl, logits[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            logits[j] = std::exp(logits[j] - maxl);
            denom += logits[j];
        }
        for (int k = 0; k < d; ++k) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += logits[j] * b.V.at(j, k);
            out.at(i, k) = static_cast<float>(acc / denom);
        }
    }
    return out;
}

Matrix value_guidance(const Matrix& v_per, const Matrix& v_ref, float alpha) {
    if (!v_per.same_shape(v_ref)) {
        throw dimension_error("value_guidance: V_per " + std::to_string(v_per.rows) + "x" +
                              std::to_string(v_per.cols) + " does not match V_ref " + std::to_string(v_ref.rows) +
                              "x" + std::to_string(v_ref.cols));
    }
    Matrix out(v_per.rows, v_per.cols);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = v_per.data[i] + alpha * (v_per.data[i] - v_ref.data[i]);
    }
    return out;
}

Matrix guided_appearance_attention(const QKVBundle& ref, const QKVBundle& per, float alpha) {
    if (ref.Q.rows != per.Q.rows || ref.Q.cols != per.Q.cols) {
        throw parameter_error("guided_appearance_attention: ref/per token counts or dims differ");
    }
    QKVBundle merged;
    merged.Q = ref.Q;
    merged.K = per.K;
    merged.V = value_guidance(per.V, ref.V, alpha);
    return self_attention(merged);
}

}  // namespace pnpmix
