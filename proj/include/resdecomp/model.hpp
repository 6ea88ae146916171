#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "resdecomp/numerics.hpp"

namespace resdecomp {

using TokenId = std::int32_t;

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int d_model = 64;
    int d_head = 16;
    int d_mlp = 256;
    int vocab = 32;
    int max_seq = 128;
    float eps = kDefaultNormEps;

    // Throws InputError unless layers >= 1, heads >= 1, heads * d_head == d_model,
    // vocab >= 2 and the remaining sizes are positive.
    void validate() const;

    // 1 + L*n + L
    int component_count() const { return 1 + layers * heads + layers; }

    bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
    Vector ln1_gamma;  // [d]
    Matrix w_q;        // [d x d]
    Matrix w_k;        // [d x d]
    Matrix w_v;        // [d x d]
    Matrix w_o;        // [d x n*d_head], head i owns columns [i*d_head, (i+1)*d_head)
    Vector ln2_gamma;  // [d]
    Matrix w_up;       // [d_mlp x d]
    Matrix w_down;     // [d x d_mlp]

    bool operator==(const LayerWeights&) const = default;
};

// Pre-LN RMSNorm decoder without biases. Positions are learned and added into
// the embedding state; the MLP uses squared ReLU.
struct TransformerWeights {
    ModelConfig config;
    Matrix token_embedding;     // [vocab x d]
    Matrix position_embedding;  // [max_seq x d]
    std::vector<LayerWeights> layers;
    Vector final_gamma;      // [d]
    Matrix output_embedding;  // U, [vocab x d]

    // Checks every shape against config and that all entries are finite.
    void validate() const;

    bool operator==(const TransformerWeights&) const = default;
};

// Everything written into the residual stream at the final token position.
struct ResidualWrites {
    int layers = 0;
    int heads = 0;
    Vector x0;                        // token + position embedding
    std::vector<Vector> head_writes;  // layer-major, W_{o_i} h_i
    std::vector<Vector> mlp_writes;   // one per layer

    const Vector& head(int layer, int head) const {
        return head_writes[static_cast<std::size_t>(layer * heads + head)];
    }
    std::size_t count() const { return 1 + head_writes.size() + mlp_writes.size(); }

    // x0 + sum of head writes + sum of mlp writes.
    Vector sum() const;
};

// Components forced to write zero at every position.
struct ComponentMask {
    std::vector<bool> heads;  // layer-major
    std::vector<bool> mlps;

    static ComponentMask none(const ModelConfig& config);
    bool head_masked(const ModelConfig& config, int layer, int head) const;
    bool mlp_masked(int layer) const;
    bool empty() const;
};

struct ForwardResult {
    Vector logits;          // U * LN(x_L) at the final position
    Vector final_residual;  // x_L at the final position
    ResidualWrites writes;
    // Attention probabilities of the final query, layer-major per head.
    std::vector<Vector> attention;
};

// Standard pass: logits at the final position.
Vector forward_standard(const TransformerWeights& weights, std::span<const TokenId> tokens);

// Same pass, also recording every component's write at the final position.
// The logits are bit-identical to forward_standard.
ForwardResult forward_decomposed(const TransformerWeights& weights, std::span<const TokenId> tokens);

// Pass with masked components zeroed at every position.
ForwardResult forward_masked(const TransformerWeights& weights, std::span<const TokenId> tokens,
                             const ComponentMask& mask);

// Attention of the final query over all key positions for one head.
Vector attention_patterns(const TransformerWeights& weights, std::span<const TokenId> tokens,
                          int layer, int head);

// Gaussian init scaled 1/sqrt(d), unit norm gains. Deterministic in seed.
TransformerWeights init_random(const ModelConfig& config, std::uint64_t seed);

// Order-dependent FNV-1a checksum over every parameter's bit pattern.
std::uint64_t weights_checksum(const TransformerWeights& weights);

// Visits every parameter tensor in a fixed order with its canonical name.
template <class W, class F>
void for_each_tensor(W& weights, F&& fn);

}  // namespace resdecomp

#include "resdecomp/model_tensors.inl"
