#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numerics; everything runs in plain double loops.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "resdecomp/model.hpp"
#include "resdecomp/tasks.hpp"

namespace oracle {

using resdecomp::TokenId;
using resdecomp::TransformerWeights;
using Vec = std::vector<double>;

inline Vec rms(const Vec& x, const std::vector<float>& g, double eps) {
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(ms + eps);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * g[i];
    return y;
}

// rows x cols row-major float matrix times x
inline Vec mul(const resdecomp::Matrix& w, const Vec& x, std::size_t c0 = 0, std::size_t c1 = SIZE_MAX) {
    if (c1 == SIZE_MAX) c1 = w.cols();
    Vec y(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = c0; c < c1; ++c) y[r] += static_cast<double>(w(r, c)) * x[c - c0];
    return y;
}

struct Forward {
    Vec logits;
    Vec x0;
    std::vector<Vec> heads;  // layer-major, final position
    std::vector<Vec> mlps;
    Vec final_residual;
};

// Full forward pass. `zero_heads` / `zero_mlps` (layer-major flags) silence
// components at every position.
inline Forward forward(const TransformerWeights& w, const std::vector<TokenId>& tokens,
                       const std::vector<bool>& zero_heads = {}, const std::vector<bool>& zero_mlps = {}) {
    const auto& cfg = w.config;
    const std::size_t T = tokens.size(), d = static_cast<std::size_t>(cfg.d_model),
                      dh = static_cast<std::size_t>(cfg.d_head);
    std::vector<Vec> x(T, Vec(d));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < d; ++i)
            x[t][i] = static_cast<double>(w.token_embedding(static_cast<std::size_t>(tokens[t]), i)) +
                      static_cast<double>(w.position_embedding(t, i));
    Forward out;
    out.x0 = x[T - 1];
    for (int l = 0; l < cfg.layers; ++l) {
        const auto& lw = w.layers[static_cast<std::size_t>(l)];
        std::vector<Vec> q(T), k(T), v(T);
        for (std::size_t t = 0; t < T; ++t) {
            const Vec a = rms(x[t], lw.ln1_gamma, cfg.eps);
            q[t] = mul(lw.w_q, a);
            k[t] = mul(lw.w_k, a);
            v[t] = mul(lw.w_v, a);
        }
        std::vector<Vec> attn_out(T, Vec(d, 0.0));
        for (int h = 0; h < cfg.heads; ++h) {
            const bool off = !zero_heads.empty() && zero_heads[static_cast<std::size_t>(l * cfg.heads + h)];
            const std::size_t o = static_cast<std::size_t>(h) * dh;
            for (std::size_t t = 0; t < T; ++t) {
                Vec s(t + 1);
                double m = -1e300;
                for (std::size_t u = 0; u <= t; ++u) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) acc += q[t][o + c] * k[u][o + c];
                    s[u] = acc / std::sqrt(static_cast<double>(dh));
                    m = std::max(m, s[u]);
                }
                double z = 0.0;
                for (double& e : s) z += (e = std::exp(e - m));
                Vec hv(dh, 0.0);
                for (std::size_t u = 0; u <= t; ++u)
                    for (std::size_t c = 0; c < dh; ++c) hv[c] += s[u] / z * v[u][o + c];
                Vec write = mul(lw.w_o, hv, o, o + dh);
                if (off) std::fill(write.begin(), write.end(), 0.0);
                if (t == T - 1) out.heads.push_back(write);
                for (std::size_t i = 0; i < d; ++i) attn_out[t][i] += write[i];
            }
        }
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < d; ++i) x[t][i] += attn_out[t][i];
        const bool mlp_off = !zero_mlps.empty() && zero_mlps[static_cast<std::size_t>(l)];
        for (std::size_t t = 0; t < T; ++t) {
            Vec hid = mul(lw.w_up, rms(x[t], lw.ln2_gamma, cfg.eps));
            for (double& u : hid) u = u > 0 ? u * u : 0.0;
            Vec write = mul(lw.w_down, hid);
            if (mlp_off) std::fill(write.begin(), write.end(), 0.0);
            if (t == T - 1) out.mlps.push_back(write);
            for (std::size_t i = 0; i < d; ++i) x[t][i] += write[i];
        }
    }
    out.final_residual = x[T - 1];
    out.logits = mul(w.output_embedding, rms(x[T - 1], w.final_gamma, cfg.eps));
    return out;
}

// Reads the label of a pattern-task query by finding a demonstration with
// the same final (pattern) token.
inline int match_pattern(const std::vector<resdecomp::LabeledExample>& demos, const std::vector<TokenId>& query) {
    for (const auto& d : demos)
        if (d.input.back() == query.back()) return d.label;
    return -1;
}

inline double max_rel_error(const std::vector<double>& ref, const std::vector<float>& got) {
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        scale = std::max(scale, std::abs(ref[i]));
        err = std::max(err, std::abs(ref[i] - static_cast<double>(got[i])));
    }
    return err / std::max(scale, 1e-12);
}

// Upper tail of Student's t by composite Simpson integration of the density.
inline double t_upper_tail(double t, double dof) {
    const double c = std::exp(std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2)) / std::sqrt(dof * M_PI);
    auto pdf = [&](double x) { return c * std::pow(1 + x * x / dof, -(dof + 1) / 2); };
    // integrate from 0 to |t| then use symmetry
    const double a = std::abs(t);
    const int n = 20000;
    const double h = a / n;
    double s = pdf(0) + pdf(a);
    for (int i = 1; i < n; ++i) s += pdf(i * h) * (i % 2 ? 4 : 2);
    const double mid = s * h / 3;
    return t >= 0 ? 0.5 - mid : 0.5 + mid;
}

inline resdecomp::ModelConfig small_config(int layers, int heads, int d_head, int vocab = 12, int max_seq = 24) {
    resdecomp::ModelConfig c;
    c.layers = layers;
    c.heads = heads;
    c.d_head = d_head;
    c.d_model = heads * d_head;
    c.d_mlp = 2 * c.d_model;
    c.vocab = vocab;
    c.max_seq = max_seq;
    return c;
}

inline std::vector<TokenId> random_tokens(std::mt19937_64& gen, int vocab, int len) {
    std::uniform_int_distribution<int> dist(0, vocab - 1);
    std::vector<TokenId> t(static_cast<std::size_t>(len));
    for (auto& x : t) x = dist(gen);
    return t;
}

}  // namespace oracle
