#include "resdecomp/model.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "resdecomp/errors.hpp"
#include "resdecomp/rng.hpp"

namespace resdecomp {

void ModelConfig::validate() const {
    if (layers < 1) throw InputError("ModelConfig: layers must be >= 1");
    if (heads < 1) throw InputError("ModelConfig: heads must be >= 1");
    if (d_head < 1 || d_model < 1) throw InputError("ModelConfig: widths must be positive");
    if (heads * d_head != d_model) throw InputError("ModelConfig: heads * d_head must equal d_model");
    if (d_mlp < 1) throw InputError("ModelConfig: d_mlp must be positive");
    if (vocab < 2) throw InputError("ModelConfig: vocab must be >= 2");
    if (max_seq < 1) throw InputError("ModelConfig: max_seq must be >= 1");
    if (!(eps >= 0.0f)) throw InputError("ModelConfig: eps must be non-negative");
}

namespace {

void check_shape(const Matrix& m, int rows, int cols, const std::string& name) {
    if (m.rows() != static_cast<std::size_t>(rows) || m.cols() != static_cast<std::size_t>(cols)) {
        throw DimensionError(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                             ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

void check_length(const Vector& v, int len, const std::string& name) {
    if (v.size() != static_cast<std::size_t>(len)) {
        throw DimensionError(name + ": expected length " + std::to_string(len) + ", got " +
                             std::to_string(v.size()));
    }
}

}  // namespace

void TransformerWeights::validate() const {
    config.validate();
    const int d = config.d_model;
    check_shape(token_embedding, config.vocab, d, "token_embedding");
    check_shape(position_embedding, config.max_seq, d, "position_embedding");
    if (layers.size() != static_cast<std::size_t>(config.layers)) {
        throw DimensionError("layer count does not match config");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        check_length(layer.ln1_gamma, d, p + "ln1_gamma");
        check_shape(layer.w_q, d, d, p + "w_q");
        check_shape(layer.w_k, d, d, p + "w_k");
        check_shape(layer.w_v, d, d, p + "w_v");
        check_shape(layer.w_o, d, config.heads * config.d_head, p + "w_o");
        check_length(layer.ln2_gamma, d, p + "ln2_gamma");
        check_shape(layer.w_up, config.d_mlp, d, p + "w_up");
        check_shape(layer.w_down, d, config.d_mlp, p + "w_down");
    }
    check_length(final_gamma, d, "final_gamma");
    check_shape(output_embedding, config.vocab, d, "output_embedding");
    for_each_tensor(*this, [](const std::string& name, std::size_t, std::size_t, const std::vector<float>& data) {
        if (!all_finite(data)) {
            throw InputError(name + ": non-finite entry");
        }
    });
}

Vector ResidualWrites::sum() const {
    Vector total = x0;
    for (const auto& w : head_writes) add_inplace(total, w);
    for (const auto& w : mlp_writes) add_inplace(total, w);
    return total;
}

ComponentMask ComponentMask::none(const ModelConfig& config) {
    ComponentMask mask;
    mask.heads.assign(static_cast<std::size_t>(config.layers * config.heads), false);
    mask.mlps.assign(static_cast<std::size_t>(config.layers), false);
    return mask;
}

bool ComponentMask::head_masked(const ModelConfig& config, int layer, int head) const {
    const auto idx = static_cast<std::size_t>(layer * config.heads + head);
    return idx < heads.size() && heads[idx];
}

bool ComponentMask::mlp_masked(int layer) const {
    const auto idx = static_cast<std::size_t>(layer);
    return idx < mlps.size() && mlps[idx];
}

bool ComponentMask::empty() const {
    for (bool b : heads) if (b) return false;
    for (bool b : mlps) if (b) return false;
    return true;
}

namespace {

void check_tokens(const ModelConfig& config, std::span<const TokenId> tokens) {
    if (tokens.empty()) {
        throw InputError("forward: empty token sequence");
    }
    if (tokens.size() > static_cast<std::size_t>(config.max_seq)) {
        throw LengthError("forward: sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq " + std::to_string(config.max_seq));
    }
    for (TokenId t : tokens) {
        if (t < 0 || t >= config.vocab) {
            throw InputError("forward: token id " + std::to_string(t) + " outside vocabulary of " +
                             std::to_string(config.vocab));
        }
    }
}

// Single implementation behind every analysis-time pass. Residual updates are
// applied one write at a time, heads in index order then the MLP, so the final
// residual is exactly the float sum of the recorded writes in that order.
ForwardResult run_forward(const TransformerWeights& weights, std::span<const TokenId> tokens,
                          const ComponentMask* mask) {
    const ModelConfig& cfg = weights.config;
    check_tokens(cfg, tokens);
    const std::size_t seq = tokens.size();
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t dh = static_cast<std::size_t>(cfg.d_head);
    const std::size_t last = seq - 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ForwardResult result;
    result.writes.layers = cfg.layers;
    result.writes.heads = cfg.heads;

    std::vector<Vector> x(seq, Vector(d));
    for (std::size_t t = 0; t < seq; ++t) {
        const auto tok = weights.token_embedding.row(static_cast<std::size_t>(tokens[t]));
        const auto pos = weights.position_embedding.row(t);
        for (std::size_t i = 0; i < d; ++i) {
            x[t][i] = tok[i] + pos[i];
        }
    }
    result.writes.x0 = x[last];

    std::vector<Vector> q(seq), k(seq), v(seq);
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerWeights& lw = weights.layers[static_cast<std::size_t>(l)];
        for (std::size_t t = 0; t < seq; ++t) {
            const Vector a = rms_norm(x[t], lw.ln1_gamma, cfg.eps);
            q[t] = matvec(lw.w_q, a);
            k[t] = matvec(lw.w_k, a);
            v[t] = matvec(lw.w_v, a);
        }
        for (std::size_t t = 0; t < seq; ++t) {
            for (int h = 0; h < cfg.heads; ++h) {
                const std::size_t off = static_cast<std::size_t>(h) * dh;
                std::vector<double> scores(t + 1);
                for (std::size_t s = 0; s <= t; ++s) {
                    scores[s] = dot(std::span<const float>(q[t]).subspan(off, dh),
                                    std::span<const float>(k[s]).subspan(off, dh)) * scale;
                }
                const std::vector<double> probs = softmax_stable(std::span<const double>(scores));
                Vector head_out(dh);
                for (std::size_t c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (std::size_t s = 0; s <= t; ++s) {
                        acc += probs[s] * static_cast<double>(v[s][off + c]);
                    }
                    head_out[c] = static_cast<float>(acc);
                }
                Vector write = matvec_columns(lw.w_o, off, off + dh, head_out);
                if (mask != nullptr && mask->head_masked(cfg, l, h)) {
                    std::fill(write.begin(), write.end(), 0.0f);
                }
                if (t == last) {
                    Vector pattern(seq, 0.0f);
                    for (std::size_t s = 0; s <= t; ++s) pattern[s] = static_cast<float>(probs[s]);
                    result.attention.push_back(std::move(pattern));
                    result.writes.head_writes.push_back(write);
                }
                // q/k/v for this layer are already computed, so updating x in place is safe.
                add_inplace(x[t], write);
            }
        }
        for (std::size_t t = 0; t < seq; ++t) {
            const Vector b = rms_norm(x[t], lw.ln2_gamma, cfg.eps);
            Vector hidden = matvec(lw.w_up, b);
            for (float& u : hidden) {
                const float r = u > 0.0f ? u : 0.0f;
                u = r * r;
            }
            Vector write = matvec(lw.w_down, hidden);
            if (mask != nullptr && mask->mlp_masked(l)) {
                std::fill(write.begin(), write.end(), 0.0f);
            }
            if (t == last) {
                result.writes.mlp_writes.push_back(write);
            }
            add_inplace(x[t], write);
        }
    }

    result.final_residual = x[last];
    const Vector normed = rms_norm(x[last], weights.final_gamma, cfg.eps);
    result.logits = matvec(weights.output_embedding, normed);
    return result;
}

}  // namespace

Vector forward_standard(const TransformerWeights& weights, std::span<const TokenId> tokens) {
    return run_forward(weights, tokens, nullptr).logits;
}

ForwardResult forward_decomposed(const TransformerWeights& weights, std::span<const TokenId> tokens) {
    return run_forward(weights, tokens, nullptr);
}

ForwardResult forward_masked(const TransformerWeights& weights, std::span<const TokenId> tokens,
                             const ComponentMask& mask) {
    return run_forward(weights, tokens, &mask);
}

Vector attention_patterns(const TransformerWeights& weights, std::span<const TokenId> tokens,
                          int layer, int head) {
    const ModelConfig& cfg = weights.config;
    if (layer < 0 || layer >= cfg.layers || head < 0 || head >= cfg.heads) {
        throw IndexError("attention_patterns: layer/head (" + std::to_string(layer) + ", " +
                         std::to_string(head) + ") out of range");
    }
    ForwardResult r = run_forward(weights, tokens, nullptr);
    return std::move(r.attention[static_cast<std::size_t>(layer * cfg.heads + head)]);
}

TransformerWeights init_random(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const auto d = static_cast<std::size_t>(config.d_model);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));

    TransformerWeights w;
    w.config = config;
    w.token_embedding = Matrix(static_cast<std::size_t>(config.vocab), d);
    w.position_embedding = Matrix(static_cast<std::size_t>(config.max_seq), d);
    w.layers.resize(static_cast<std::size_t>(config.layers));
    for (auto& layer : w.layers) {
        layer.ln1_gamma.assign(d, 1.0f);
        layer.ln2_gamma.assign(d, 1.0f);
        layer.w_q = Matrix(d, d);
        layer.w_k = Matrix(d, d);
        layer.w_v = Matrix(d, d);
        layer.w_o = Matrix(d, static_cast<std::size_t>(config.heads * config.d_head));
        layer.w_up = Matrix(static_cast<std::size_t>(config.d_mlp), d);
        layer.w_down = Matrix(d, static_cast<std::size_t>(config.d_mlp));
    }
    w.final_gamma.assign(d, 1.0f);
    w.output_embedding = Matrix(static_cast<std::size_t>(config.vocab), d);

    for_each_tensor(w, [&](const std::string& name, std::size_t, std::size_t cols, std::vector<float>& data) {
        if (cols == 1 && name.find("gamma") != std::string::npos) {
            return;
        }
        for (float& f : data) {
            f = static_cast<float>(rng.normal() * scale);
        }
    });
    return w;
}

std::uint64_t weights_checksum(const TransformerWeights& weights) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for_each_tensor(weights, [&](const std::string&, std::size_t, std::size_t, const std::vector<float>& data) {
        for (float f : data) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
            for (int b = 0; b < 4; ++b) {
                h ^= (bits >> (8 * b)) & 0xffu;
                h *= 0x100000001b3ULL;
            }
        }
    });
    return h;
}

}  // namespace resdecomp
