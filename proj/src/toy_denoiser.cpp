#include "pnpmix/toy_denoiser.hpp"

#include <cmath>
#include <cstring>

#include "pnpmix/container.hpp"
#include "pnpmix/errors.hpp"
#include "pnpmix/rng.hpp"

namespace pnpmix {

namespace {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// same-padding 3x3 conv, channel-major [ch][h][w]
void conv3x3_fwd(const double* W, const double* b, const double* in, int cin, int cout, int H, int Wd, double* out) {
    for (int o = 0; o < cout; ++o) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < Wd; ++x) {
                double acc = b[o];
                for (int c = 0; c < cin; ++c) {
                    const double* wp = W + ((static_cast<size_t>(o) * cin + c) * 9);
                    const double* ip = in + static_cast<size_t>(c) * H * Wd;
                    for (int dy = -1; dy <= 1; ++dy) {
                        int yy = y + dy;
                        if (yy < 0 || yy >= H) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            int xx = x + dx;
                            if (xx < 0 || xx >= Wd) continue;
                            acc += wp[(dy + 1) * 3 + (dx + 1)] * ip[yy * Wd + xx];
                        }
                    }
                }
                out[(static_cast<size_t>(o) * H + y) * Wd + x] = acc;
            }
        }
    }
}

void conv3x3_bwd(const double* W, const double* in, const double* dout, int cin, int cout, int H, int Wd,
                 double* dW, double* db, double* din) {
    for (int o = 0; o < cout; ++o) {
        const double* dop = dout + static_cast<size_t>(o) * H * Wd;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < Wd; ++x) {
                double g = dop[y * Wd + x];
                db[o] += g;
                for (int c = 0; c < cin; ++c) {
                    double* dwp      = dW + ((static_cast<size_t>(o) * cin + c) * 9);
                    const double* wp = W + ((static_cast<size_t>(o) * cin + c) * 9);
                    const double* ip = in + static_cast<size_t>(c) * H * Wd;
                    double* dip      = din ? din + static_cast<size_t>(c) * H * Wd : nullptr;
                    for (int dy = -1; dy <= 1; ++dy) {
                        int yy = y + dy;
                        if (yy < 0 || yy >= H) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            int xx = x + dx;
                            if (xx < 0 || xx >= Wd) continue;
                            dwp[(dy + 1) * 3 + (dx + 1)] += g * ip[yy * Wd + xx];
                            if (dip) dip[yy * Wd + xx] += g * wp[(dy + 1) * 3 + (dx + 1)];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

void ToyDenoiser::compute_layout() {
    size_t off = 0;
    auto take  = [&off](size_t n) {
        size_t o = off;
        off += n;
        return o;
    };
    size_t C = channels_, M = hidden_, D = cond_dim_;
    lay_.wc  = take(M * D);
    lay_.we  = take(M * M);
    lay_.be  = take(M);
    lay_.c1w = take(M * C * 9);
    lay_.c1b = take(M);
    lay_.e1  = take(M * M);
    lay_.c2w = take(M * M * 9);
    lay_.c2b = take(M);
    lay_.e2  = take(M * M);
    lay_.wq  = take(M * M);
    lay_.wk  = take(M * M);
    lay_.wv  = take(M * M);
    lay_.wo  = take(M * M);
    lay_.c3w = take(M * M * 9);
    lay_.c3b = take(M);
    lay_.c4w = take(C * M * 9);
    lay_.c4b = take(C);
    lay_.total = off;
}

ToyDenoiser::ToyDenoiser(int channels, int hidden, int cond_dim, uint64_t init_seed)
    : channels_(channels), hidden_(hidden), cond_dim_(cond_dim) {
    if (channels <= 0 || hidden <= 0 || cond_dim <= 0) {
        throw parameter_error("ToyDenoiser: channels, hidden, cond_dim must be positive");
    }
    if (hidden % 2 != 0) throw parameter_error("ToyDenoiser: hidden width must be even");
    compute_layout();
    params_.assign(lay_.total, 0.0);
    NormalStream rng(init_seed);
    // weights small-normal, biases zero, final conv zero so the fresh network
    // is the zero predictor
    auto fill = [&](size_t off, size_t n, double scale) {
        for (size_t i = 0; i < n; ++i) params_[off + i] = scale * rng.next();
    };
    size_t C = channels_, M = hidden_, D = cond_dim_;
    fill(lay_.wc, M * D, 0.05);
    fill(lay_.we, M * M, 0.05);
    fill(lay_.c1w, M * C * 9, 0.05);
    fill(lay_.e1, M * M, 0.05);
    fill(lay_.c2w, M * M * 9, 0.05);
    fill(lay_.e2, M * M, 0.05);
    // attention projections start larger so the bottleneck carries signal
    // from the first step instead of vanishing behind the residual path
    fill(lay_.wq, M * M, 0.4);
    fill(lay_.wk, M * M, 0.4);
    fill(lay_.wv, M * M, 0.4);
    fill(lay_.wo, M * M, 0.4);
    fill(lay_.c3w, M * M * 9, 0.05);
    // c4w, c4b stay zero
}

void ToyDenoiser::zero_parameters() { std::fill(params_.begin(), params_.end(), 0.0); }

void ToyDenoiser::check_input(const LatentTensor& x, const ConditioningVector* cond) const {
    if (x.channels != channels_) {
        throw parameter_error("ToyDenoiser: expected " + std::to_string(channels_) + " channels, got " +
                              std::to_string(x.channels));
    }
    if (x.height % 2 != 0 || x.width % 2 != 0 || x.height < 2 || x.width < 2) {
        throw parameter_error("ToyDenoiser: spatial dims must be even and >= 2, got " + x.shape_str());
    }
    if (cond && cond->dim != cond_dim_) {
        throw parameter_error("ToyDenoiser: conditioning dim " + std::to_string(cond->dim) + " != configured " +
                              std::to_string(cond_dim_));
    }
}

struct ToyDenoiser::Cache {
    int H = 0, W = 0, H2 = 0, W2 = 0, N = 0;
    std::vector<double> x;         // [C,H,W]
    std::vector<double> e0, emb_pre, emb;
    std::vector<double> pre1, h1;  // [M,H,W]
    std::vector<double> p;         // [M,H2,W2]
    std::vector<double> pre2, h2;  // [M,H2,W2]
    std::vector<double> Q, K, V;   // [N,M] token-major
    std::vector<double> A;         // [N,N]
    std::vector<double> O;         // [N,M]
    std::vector<double> pre3in, pre3, d;  // [M,H,W]
    std::vector<double> cond;
};

void ToyDenoiser::forward(const std::vector<double>& x, int H, int W, int t, const std::vector<double>& cond,
                          const AttentionDirective* directive, QKVBundle* capture, Cache* cache,
                          std::vector<double>& out) const {
    const int C = channels_, M = hidden_, D = cond_dim_;
    const double* P = params_.data();
    const int H2 = H / 2, W2 = W / 2, N = H2 * W2;

    // timestep + conditioning embedding
    std::vector<double> e0(M, 0.0);
    for (int k = 0; k < M / 2; ++k) {
        double freq = std::exp(-std::log(10000.0) * (2.0 * k / M));
        e0[k]          = std::sin(t * freq);
        e0[M / 2 + k]  = std::cos(t * freq);
    }
    for (int m = 0; m < M; ++m) {
        double acc = 0.0;
        for (int d0 = 0; d0 < D; ++d0) acc += P[lay_.wc + m * D + d0] * cond[d0];
        e0[m] += acc;
    }
    std::vector<double> emb_pre(M), emb(M);
    for (int m = 0; m < M; ++m) {
        double acc = P[lay_.be + m];
        for (int k = 0; k < M; ++k) acc += P[lay_.we + m * M + k] * e0[k];
        emb_pre[m] = acc;
        emb[m]     = silu(acc);
    }

    // encoder level 1
    std::vector<double> pre1(static_cast<size_t>(M) * H * W);
    conv3x3_fwd(P + lay_.c1w, P + lay_.c1b, x.data(), C, M, H, W, pre1.data());
    for (int m = 0; m < M; ++m) {
        double eb = 0.0;
        for (int k = 0; k < M; ++k) eb += P[lay_.e1 + m * M + k] * emb[k];
        double* pp = pre1.data() + static_cast<size_t>(m) * H * W;
        for (int i = 0; i < H * W; ++i) pp[i] += eb;
    }
    std::vector<double> h1(pre1.size());
    for (size_t i = 0; i < pre1.size(); ++i) h1[i] = silu(pre1[i]);

    // downsample + encoder level 2
    std::vector<double> p(static_cast<size_t>(M) * H2 * W2);
    for (int m = 0; m < M; ++m) {
        for (int y = 0; y < H2; ++y) {
            for (int xx = 0; xx < W2; ++xx) {
                const double* hp = h1.data() + static_cast<size_t>(m) * H * W;
                double s = hp[(2 * y) * W + 2 * xx] + hp[(2 * y) * W + 2 * xx + 1] + hp[(2 * y + 1) * W + 2 * xx] +
                           hp[(2 * y + 1) * W + 2 * xx + 1];
                p[(static_cast<size_t>(m) * H2 + y) * W2 + xx] = 0.25 * s;
            }
        }
    }
    std::vector<double> pre2(p.size());
    conv3x3_fwd(P + lay_.c2w, P + lay_.c2b, p.data(), M, M, H2, W2, pre2.data());
    for (int m = 0; m < M; ++m) {
        double eb = 0.0;
        for (int k = 0; k < M; ++k) eb += P[lay_.e2 + m * M + k] * emb[k];
        double* pp = pre2.data() + static_cast<size_t>(m) * H2 * W2;
        for (int i = 0; i < H2 * W2; ++i) pp[i] += eb;
    }
    std::vector<double> h2(pre2.size());
    for (size_t i = 0; i < pre2.size(); ++i) h2[i] = silu(pre2[i]);

    // bottleneck self-attention over tokens [N x M]
    auto tok = [&](const std::vector<double>& v, int pix, int f) { return v[static_cast<size_t>(f) * N + pix]; };
    std::vector<double> Q(static_cast<size_t>(N) * M), K(Q.size()), V(Q.size());
    for (int pix = 0; pix < N; ++pix) {
        for (int f = 0; f < M; ++f) {
            double q = 0.0, k = 0.0, v = 0.0;
            for (int g = 0; g < M; ++g) {
                double xg = tok(h2, pix, g);
                q += P[lay_.wq + f * M + g] * xg;
                k += P[lay_.wk + f * M + g] * xg;
                v += P[lay_.wv + f * M + g] * xg;
            }
            Q[static_cast<size_t>(pix) * M + f] = q;
            K[static_cast<size_t>(pix) * M + f] = k;
            V[static_cast<size_t>(pix) * M + f] = v;
        }
    }
    if (capture) {
        capture->Q = Matrix(N, M);
        capture->K = Matrix(N, M);
        capture->V = Matrix(N, M);
        for (size_t i = 0; i < Q.size(); ++i) {
            capture->Q.data[i] = static_cast<float>(Q[i]);
            capture->K.data[i] = static_cast<float>(K[i]);
            capture->V.data[i] = static_cast<float>(V[i]);
        }
    }
    const std::vector<double>* Kuse = &K;
    const std::vector<double>* Vuse = &V;
    std::vector<double> Kg, Vg;
    if (directive && directive->mode == AttentionDirective::Mode::guided) {
        const QKVBundle* donor = directive->donor;
        if (!donor) throw parameter_error("ToyDenoiser: guided directive without donor bundle");
        if (donor->K.rows != N || donor->K.cols != M) {
            throw parameter_error("ToyDenoiser: donor K/V token layout does not match this pass");
        }
        Kg.resize(Q.size());
        Vg.resize(Q.size());
        double alpha = directive->alpha;
        for (size_t i = 0; i < Q.size(); ++i) {
            double vper = donor->V.data[i];
            Kg[i]       = donor->K.data[i];
            Vg[i]       = vper + alpha * (vper - V[i]);
        }
        Kuse = &Kg;
        Vuse = &Vg;
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(M));
    std::vector<double> A(static_cast<size_t>(N) * N), O(static_cast<size_t>(N) * M);
    for (int i = 0; i < N; ++i) {
        double maxl = -1e300;
        for (int j = 0; j < N; ++j) {
            double s = 0.0;
            for (int f = 0; f < M; ++f) s += Q[static_cast<size_t>(i) * M + f] * (*Kuse)[static_cast<size_t>(j) * M + f];
            A[static_cast<size_t>(i) * N + j] = s * scale;
            maxl = std::max(maxl, s * scale);
        }
        double denom = 0.0;
        for (int j = 0; j < N; ++j) {
            double e = std::exp(A[static_cast<size_t>(i) * N + j] - maxl);
            A[static_cast<size_t>(i) * N + j] = e;
            denom += e;
        }
        for (int j = 0; j < N; ++j) A[static_cast<size_t>(i) * N + j] /= denom;
        for (int f = 0; f < M; ++f) {
            double acc = 0.0;
            for (int j = 0; j < N; ++j)
                acc += A[static_cast<size_t>(i) * N + j] * (*Vuse)[static_cast<size_t>(j) * M + f];
            O[static_cast<size_t>(i) * M + f] = acc;
        }
    }

    // residual with projected attention output
    std::vector<double> a = h2;
    for (int pix = 0; pix < N; ++pix) {
        for (int f = 0; f < M; ++f) {
            double y = 0.0;
            for (int g = 0; g < M; ++g) y += P[lay_.wo + f * M + g] * O[static_cast<size_t>(pix) * M + g];
            a[static_cast<size_t>(f) * N + pix] += y;
        }
    }

    // decoder: nearest upsample + skip + conv
    std::vector<double> pre3in(static_cast<size_t>(M) * H * W);
    for (int m = 0; m < M; ++m) {
        for (int y = 0; y < H; ++y) {
            for (int xx = 0; xx < W; ++xx) {
                pre3in[(static_cast<size_t>(m) * H + y) * W + xx] =
                    a[(static_cast<size_t>(m) * H2 + y / 2) * W2 + xx / 2] +
                    h1[(static_cast<size_t>(m) * H + y) * W + xx];
            }
        }
    }
    std::vector<double> pre3(pre3in.size());
    conv3x3_fwd(P + lay_.c3w, P + lay_.c3b, pre3in.data(), M, M, H, W, pre3.data());
    std::vector<double> d(pre3.size());
    for (size_t i = 0; i < pre3.size(); ++i) d[i] = silu(pre3[i]);

    out.resize(static_cast<size_t>(C) * H * W);
    conv3x3_fwd(P + lay_.c4w, P + lay_.c4b, d.data(), M, C, H, W, out.data());

    if (cache) {
        cache->H  = H;
        cache->W  = W;
        cache->H2 = H2;
        cache->W2 = W2;
        cache->N  = N;
        cache->x  = x;
        cache->e0 = std::move(e0);
        cache->emb_pre = std::move(emb_pre);
        cache->emb     = std::move(emb);
        cache->pre1    = std::move(pre1);
        cache->h1      = std::move(h1);
        cache->p       = std::move(p);
        cache->pre2    = std::move(pre2);
        cache->h2      = std::move(h2);
        cache->Q       = std::move(Q);
        cache->K       = std::move(K);
        cache->V       = std::move(V);
        cache->A       = std::move(A);
        cache->O       = std::move(O);
        cache->pre3in  = std::move(pre3in);
        cache->pre3    = std::move(pre3);
        cache->d       = std::move(d);
        cache->cond    = cond;
    }
}

LatentTensor ToyDenoiser::predict(const PredictRequest& req) const {
    const LatentTensor& x = *req.x_t;
    check_input(x, req.cond);
    std::vector<double> xd(x.data.begin(), x.data.end());
    std::vector<double> cond(static_cast<size_t>(cond_dim_), 0.0);
    if (req.cond) {
        for (int i = 0; i < cond_dim_; ++i) cond[i] = req.cond->values[i];
    }
    std::vector<double> out;
    forward(xd, x.height, x.width, req.t, cond, &req.directive, req.capture, nullptr, out);
    LatentTensor res(x.channels, x.height, x.width);
    for (size_t i = 0; i < out.size(); ++i) res.data[i] = static_cast<float>(out[i]);
    ensure_finite(res, "ToyDenoiser output");
    return res;
}

double ToyDenoiser::loss_only(const LatentTensor& x_t, int t, const ConditioningVector& cond,
                              const LatentTensor& eps_target) const {
    check_input(x_t, &cond);
    if (!x_t.same_shape(eps_target)) throw dimension_error("loss: x_t / eps_target shape mismatch");
    std::vector<double> xd(x_t.data.begin(), x_t.data.end());
    std::vector<double> cd(cond.values.begin(), cond.values.end());
    std::vector<double> out;
    forward(xd, x_t.height, x_t.width, t, cd, nullptr, nullptr, nullptr, out);
    double loss = 0.0;
    for (size_t i = 0; i < out.size(); ++i) {
        double r = out[i] - eps_target.data[i];
        loss += r * r;
    }
    return loss / static_cast<double>(out.size());
}

double ToyDenoiser::loss_and_grad(const LatentTensor& x_t, int t, const ConditioningVector& cond,
                                  const LatentTensor& eps_target, std::vector<double>& grad) const {
    check_input(x_t, &cond);
    if (!x_t.same_shape(eps_target)) throw dimension_error("loss: x_t / eps_target shape mismatch");
    const int C = channels_, M = hidden_;
    std::vector<double> xd(x_t.data.begin(), x_t.data.end());
    std::vector<double> cd(cond.values.begin(), cond.values.end());
    Cache cc;
    std::vector<double> out;
    forward(xd, x_t.height, x_t.width, t, cd, nullptr, nullptr, &cc, out);
    const int H = cc.H, W = cc.W, H2 = cc.H2, W2 = cc.W2, N = cc.N;
    const double* P = params_.data();

    grad.assign(params_.size(), 0.0);
    double* G = grad.data();

    double loss = 0.0;
    std::vector<double> dout(out.size());
    double inv_n = 1.0 / static_cast<double>(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double r = out[i] - eps_target.data[i];
        loss += r * r;
        dout[i] = 2.0 * r * inv_n;
    }
    loss *= inv_n;

    // conv4
    std::vector<double> dd(cc.d.size(), 0.0);
    conv3x3_bwd(P + lay_.c4w, cc.d.data(), dout.data(), M, C, H, W, G + lay_.c4w, G + lay_.c4b, dd.data());

    // silu at d, conv3
    std::vector<double> dpre3(dd.size());
    for (size_t i = 0; i < dd.size(); ++i) dpre3[i] = dd[i] * silu_grad(cc.pre3[i]);
    std::vector<double> dpre3in(cc.pre3in.size(), 0.0);
    conv3x3_bwd(P + lay_.c3w, cc.pre3in.data(), dpre3.data(), M, M, H, W, G + lay_.c3w, G + lay_.c3b, dpre3in.data());

    // pre3in = upsample(a) + h1
    std::vector<double> dh1 = dpre3in;
    std::vector<double> da(static_cast<size_t>(M) * N, 0.0);
    for (int m = 0; m < M; ++m) {
        for (int y = 0; y < H; ++y) {
            for (int xx = 0; xx < W; ++xx) {
                da[(static_cast<size_t>(m) * H2 + y / 2) * W2 + xx / 2] +=
                    dpre3in[(static_cast<size_t>(m) * H + y) * W + xx];
            }
        }
    }

    // residual a = h2 + Wo(O); attention backward
    std::vector<double> dh2 = da;
    // dY token-major
    std::vector<double> dY(static_cast<size_t>(N) * M);
    for (int pix = 0; pix < N; ++pix)
        for (int f = 0; f < M; ++f) dY[static_cast<size_t>(pix) * M + f] = da[static_cast<size_t>(f) * N + pix];
    std::vector<double> dO(static_cast<size_t>(N) * M, 0.0);
    for (int pix = 0; pix < N; ++pix) {
        for (int f = 0; f < M; ++f) {
            double g = dY[static_cast<size_t>(pix) * M + f];
            for (int g2 = 0; g2 < M; ++g2) {
                dO[static_cast<size_t>(pix) * M + g2] += g * P[lay_.wo + f * M + g2];
                G[lay_.wo + f * M + g2] += g * cc.O[static_cast<size_t>(pix) * M + g2];
            }
        }
    }
    // O = A V
    std::vector<double> dA(static_cast<size_t>(N) * N, 0.0);
    std::vector<double> dV(static_cast<size_t>(N) * M, 0.0);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = 0.0;
            for (int f = 0; f < M; ++f)
                acc += dO[static_cast<size_t>(i) * M + f] * cc.V[static_cast<size_t>(j) * M + f];
            dA[static_cast<size_t>(i) * N + j] = acc;
        }
    }
    for (int j = 0; j < N; ++j) {
        for (int f = 0; f < M; ++f) {
            double acc = 0.0;
            for (int i = 0; i < N; ++i)
                acc += cc.A[static_cast<size_t>(i) * N + j] * dO[static_cast<size_t>(i) * M + f];
            dV[static_cast<size_t>(j) * M + f] = acc;
        }
    }
    // softmax backward
    double scale = 1.0 / std::sqrt(static_cast<double>(M));
    std::vector<double> dS(static_cast<size_t>(N) * N);
    for (int i = 0; i < N; ++i) {
        double dot = 0.0;
        for (int k = 0; k < N; ++k)
            dot += dA[static_cast<size_t>(i) * N + k] * cc.A[static_cast<size_t>(i) * N + k];
        for (int j = 0; j < N; ++j) {
            dS[static_cast<size_t>(i) * N + j] =
                cc.A[static_cast<size_t>(i) * N + j] * (dA[static_cast<size_t>(i) * N + j] - dot);
        }
    }
    std::vector<double> dQ(static_cast<size_t>(N) * M, 0.0), dK(static_cast<size_t>(N) * M, 0.0);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            double g = dS[static_cast<size_t>(i) * N + j] * scale;
            for (int f = 0; f < M; ++f) {
                dQ[static_cast<size_t>(i) * M + f] += g * cc.K[static_cast<size_t>(j) * M + f];
                dK[static_cast<size_t>(j) * M + f] += g * cc.Q[static_cast<size_t>(i) * M + f];
            }
        }
    }
    // projections: Z[p,f] = sum_g Wz[f,g] X2[p,g], X2[p,g] = h2[g*N + p]
    auto proj_bwd = [&](const std::vector<double>& dZ, size_t woff) {
        for (int pix = 0; pix < N; ++pix) {
            for (int f = 0; f < M; ++f) {
                double g = dZ[static_cast<size_t>(pix) * M + f];
                if (g == 0.0) continue;
                for (int g2 = 0; g2 < M; ++g2) {
                    G[woff + f * M + g2] += g * cc.h2[static_cast<size_t>(g2) * N + pix];
                    dh2[static_cast<size_t>(g2) * N + pix] += g * P[woff + f * M + g2];
                }
            }
        }
    };
    proj_bwd(dQ, lay_.wq);
    proj_bwd(dK, lay_.wk);
    proj_bwd(dV, lay_.wv);

    // level-2 silu + conv2 + emb bias
    std::vector<double> dpre2(dh2.size());
    for (size_t i = 0; i < dh2.size(); ++i) dpre2[i] = dh2[i] * silu_grad(cc.pre2[i]);
    std::vector<double> g2sum(static_cast<size_t>(M), 0.0);
    for (int m = 0; m < M; ++m) {
        const double* dp = dpre2.data() + static_cast<size_t>(m) * N;
        for (int i = 0; i < N; ++i) g2sum[m] += dp[i];
    }
    std::vector<double> dp(cc.p.size(), 0.0);
    conv3x3_bwd(P + lay_.c2w, cc.p.data(), dpre2.data(), M, M, H2, W2, G + lay_.c2w, G + lay_.c2b, dp.data());

    // avgpool backward
    for (int m = 0; m < M; ++m) {
        for (int y = 0; y < H2; ++y) {
            for (int xx = 0; xx < W2; ++xx) {
                double g = 0.25 * dp[(static_cast<size_t>(m) * H2 + y) * W2 + xx];
                double* hp = dh1.data() + static_cast<size_t>(m) * H * W;
                hp[(2 * y) * W + 2 * xx] += g;
                hp[(2 * y) * W + 2 * xx + 1] += g;
                hp[(2 * y + 1) * W + 2 * xx] += g;
                hp[(2 * y + 1) * W + 2 * xx + 1] += g;
            }
        }
    }

    // level-1 silu + conv1 + emb bias
    std::vector<double> dpre1(dh1.size());
    for (size_t i = 0; i < dh1.size(); ++i) dpre1[i] = dh1[i] * silu_grad(cc.pre1[i]);
    std::vector<double> g1sum(static_cast<size_t>(M), 0.0);
    for (int m = 0; m < M; ++m) {
        const double* dp1 = dpre1.data() + static_cast<size_t>(m) * H * W;
        for (int i = 0; i < H * W; ++i) g1sum[m] += dp1[i];
    }
    conv3x3_bwd(P + lay_.c1w, cc.x.data(), dpre1.data(), C, M, H, W, G + lay_.c1w, G + lay_.c1b, nullptr);

    // embedding path
    std::vector<double> demb(static_cast<size_t>(M), 0.0);
    for (int m = 0; m < M; ++m) {
        for (int k = 0; k < M; ++k) {
            G[lay_.e1 + m * M + k] += g1sum[m] * cc.emb[k];
            G[lay_.e2 + m * M + k] += g2sum[m] * cc.emb[k];
            demb[k] += g1sum[m] * P[lay_.e1 + m * M + k] + g2sum[m] * P[lay_.e2 + m * M + k];
        }
    }
    std::vector<double> de0(static_cast<size_t>(M), 0.0);
    for (int m = 0; m < M; ++m) {
        double g = demb[m] * silu_grad(cc.emb_pre[m]);
        G[lay_.be + m] += g;
        for (int k = 0; k < M; ++k) {
            G[lay_.we + m * M + k] += g * cc.e0[k];
            de0[k] += g * P[lay_.we + m * M + k];
        }
    }
    for (int m = 0; m < M; ++m) {
        for (int d0 = 0; d0 < cond_dim_; ++d0) G[lay_.wc + m * cond_dim_ + d0] += de0[m] * cc.cond[d0];
    }

    return loss;
}

namespace {
struct NamedParam {
    const char* name;
    size_t off;
    size_t size;
};
}  // namespace

void ToyDenoiser::save_checkpoint(const std::string& path) const {
    size_t C = channels_, M = hidden_, D = cond_dim_;
    const NamedParam named[] = {
        {"cond_proj", lay_.wc, M * D},   {"emb_w", lay_.we, M * M},      {"emb_b", lay_.be, M},
        {"conv1_w", lay_.c1w, M * C * 9}, {"conv1_b", lay_.c1b, M},      {"emb_to_c1", lay_.e1, M * M},
        {"conv2_w", lay_.c2w, M * M * 9}, {"conv2_b", lay_.c2b, M},      {"emb_to_c2", lay_.e2, M * M},
        {"attn_q", lay_.wq, M * M},       {"attn_k", lay_.wk, M * M},    {"attn_v", lay_.wv, M * M},
        {"attn_out", lay_.wo, M * M},     {"conv3_w", lay_.c3w, M * M * 9}, {"conv3_b", lay_.c3b, M},
        {"conv4_w", lay_.c4w, C * M * 9}, {"conv4_b", lay_.c4b, C},
    };
    Container c;
    c.meta["model"]    = "toy-denoiser";
    c.meta["channels"] = channels_;
    c.meta["hidden"]   = hidden_;
    c.meta["cond_dim"] = cond_dim_;
    for (const auto& np : named) {
        LatentTensor t(1, 1, static_cast<int>(np.size));
        for (size_t i = 0; i < np.size; ++i) t.data[i] = static_cast<float>(params_[np.off + i]);
        c.entries.emplace_back(np.name, std::move(t));
    }
    save_container(c, path);
}

ToyDenoiser ToyDenoiser::load_checkpoint(const std::string& path) {
    Container c = load_container(path);
    if (c.meta.value("model", "") != std::string("toy-denoiser")) {
        throw format_error("checkpoint: not a toy-denoiser container: " + path);
    }
    ToyDenoiser d(c.meta.at("channels").get<int>(), c.meta.at("hidden").get<int>(),
                  c.meta.at("cond_dim").get<int>(), 0);
    d.zero_parameters();
    size_t off = 0;
    for (const auto& [name, t] : c.entries) {
        if (off + t.data.size() > d.params_.size()) throw format_error("checkpoint: parameter overflow in " + path);
        for (size_t i = 0; i < t.data.size(); ++i) d.params_[off + i] = t.data[i];
        off += t.data.size();
    }
    if (off != d.params_.size()) throw format_error("checkpoint: parameter count mismatch in " + path);
    return d;
}

TrainReport train_toy(ToyDenoiser& d, const std::vector<TrainExample>& dataset, const NoiseSchedule& sched,
                      int steps, double lr, uint64_t seed) {
    if (dataset.empty()) throw training_error("train_toy: empty dataset");
    for (size_t i = 1; i < dataset.size(); ++i) {
        if (!dataset[i].x0.same_shape(dataset[0].x0)) throw training_error("train_toy: dataset shapes differ");
    }
    NormalStream rng(seed);
    TrainReport report;
    report.loss.reserve(static_cast<size_t>(steps));
    std::vector<double> grad;
    for (int step = 0; step < steps; ++step) {
        const TrainExample& ex = dataset[rng.next_u64() % dataset.size()];
        int t = 1 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(sched.T));
        double sa = std::sqrt(sched.alpha_bar_at(t));
        double sb = std::sqrt(1.0 - sched.alpha_bar_at(t));
        LatentTensor x_t(ex.x0.channels, ex.x0.height, ex.x0.width);
        LatentTensor eps(ex.x0.channels, ex.x0.height, ex.x0.width);
        for (size_t i = 0; i < x_t.data.size(); ++i) {
            double e    = rng.next();
            eps.data[i] = static_cast<float>(e);
            x_t.data[i] = static_cast<float>(sa * ex.x0.data[i] + sb * e);
        }
        double loss = d.loss_and_grad(x_t, t, ex.cond, eps, grad);
        if (!std::isfinite(loss)) {
            throw training_error("train_toy: non-finite loss at step " + std::to_string(step));
        }
        // the descent objective is the squared norm ||eps - eps_theta||^2;
        // loss_and_grad differentiates its per-element mean, so rescale
        auto& params = d.parameters();
        double scale = lr * static_cast<double>(x_t.data.size());
        for (size_t i = 0; i < params.size(); ++i) params[i] -= scale * grad[i];
        report.loss.push_back(loss);
    }
    return report;
}

}  // namespace pnpmix
