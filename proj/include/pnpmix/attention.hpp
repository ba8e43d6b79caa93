#ifndef PNPMIX_ATTENTION_HPP
#define PNPMIX_ATTENTION_HPP

#include <string>
#include <vector>

namespace pnpmix {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int r, int c, float fill = 0.0f) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// One attention layer evaluation: Q, K, V are [tokens x d_k].
struct QKVBundle {
    Matrix Q, K, V;
};

// Attention injection request carried in a PredictRequest. In guided mode the
// donor bundle (captured from the concurrent personal-concept pass at the same
// layer and timestep) replaces K, and V is extrapolated via value_guidance
// with the donor as V_per and the local pass as V_ref.
struct AttentionDirective {
    enum class Mode { none, guided };
    Mode mode               = Mode::none;
    const QKVBundle* donor  = nullptr;
    float alpha             = 0.0f;
};

// out = softmax(Q K^T / sqrt(d_k)) V, rowwise softmax
Matrix self_attention(const QKVBundle& b);

// V_gui = V_per + alpha * (V_per - V_ref), elementwise
Matrix value_guidance(const Matrix& v_per, const Matrix& v_ref, float alpha);

// Structure from the reference query, appearance from the personal concept:
// attention over (Q = ref.Q, K = per.K, V = value_guidance(per.V, ref.V, alpha)).
Matrix guided_appearance_attention(const QKVBundle& ref, const QKVBundle& per, float alpha);

}  // namespace pnpmix

#endif
