#pragma once

#include <compare>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "resdecomp/model.hpp"
#include "resdecomp/numerics.hpp"

namespace resdecomp {

// One additive writer to the residual stream. Ordering: embedding, then heads
// by (layer, head), then MLPs by layer.
struct ComponentId {
    enum class Kind { Embedding = 0, Head = 1, Mlp = 2 };

    Kind kind = Kind::Embedding;
    int layer = 0;
    int head = 0;

    static ComponentId embedding() { return {Kind::Embedding, 0, 0}; }
    static ComponentId attention_head(int layer, int head) { return {Kind::Head, layer, head}; }
    static ComponentId mlp(int layer) { return {Kind::Mlp, layer, 0}; }

    bool is_embedding() const { return kind == Kind::Embedding; }

    // "x0", "L1H3", "L0MLP"
    std::string name() const;
    static ComponentId parse(const std::string& text);

    void validate(const ModelConfig& config) const;

    auto operator<=>(const ComponentId&) const = default;
};

// All components of a model in canonical order, optionally without x0.
std::vector<ComponentId> enumerate_components(const ModelConfig& config, bool include_x0);

// Position of a component within the full write vector z (x0 first).
std::size_t write_index(const ModelConfig& config, const ComponentId& id);

const Vector& component_write(const ResidualWrites& writes, const ComponentId& id);

// Post-final-norm activations C_j = z_j * gamma_hat, for every component
// including x0.
struct ComponentActivations {
    std::vector<ComponentId> ids;
    std::vector<Vector> activations;
    Vector gamma_hat;  // gamma / RMS(sum_j z_j)
};

// gamma_hat uses the full residual sum, x0 included.
ComponentActivations fold_final_layernorm(const ResidualWrites& writes, std::span<const float> gamma,
                                          float eps);

// Rows of U for the given token ids.
Matrix select_rows(const Matrix& u, std::span<const TokenId> rows);

// U_rows * C, accumulated in double.
Vector early_decode(std::span<const float> activation, const Matrix& u_rows);

// argmax with ties toward the lowest label index.
std::size_t component_prediction(std::span<const float> contribution);

// full_g - g_j
Vector remove_component_cached(std::span<const float> full, std::span<const float> contribution);

// Label-restricted direct contributions of one decomposed forward pass.
struct ExampleContributions {
    Vector values;        // components x labels, row-major
    Vector offset;        // sum over components left out of `values` (x0 when excluded)
    Vector label_logits;  // forward logits restricted to the label words
};

// examples x components x labels array of g_j, plus a per-example offset
// holding the contribution of components not listed (the embedding state
// unless it was requested). Summing over components and adding the offset
// gives label-restricted logits.
struct ContributionCache {
    std::vector<ComponentId> components;
    std::vector<TokenId> label_words;
    std::vector<std::string> example_ids;
    std::vector<int> gold;
    std::vector<float> values;
    std::vector<float> offset;

    std::size_t num_examples() const { return example_ids.size(); }
    std::size_t num_components() const { return components.size(); }
    std::size_t num_labels() const { return label_words.size(); }

    std::span<const float> contribution(std::size_t example, std::size_t component) const;
    std::span<const float> example_offset(std::size_t example) const;

    // offset + sum over components
    Vector summed(std::size_t example) const;

    void append(const std::string& id, int gold_label, const ExampleContributions& row);

    // Throws DimensionError / InputError on inconsistent sizes or non-finite entries.
    void validate() const;
};

ExampleContributions decompose_example(const TransformerWeights& weights, std::span<const TokenId> tokens,
                                       std::span<const TokenId> label_words,
                                       std::span<const ComponentId> components);

inline constexpr std::string_view kCacheMagic = "TDC1";

std::string encode_cache(const ContributionCache& cache);
ContributionCache decode_cache(std::string_view bytes);
void save_cache(const std::filesystem::path& path, const ContributionCache& cache);
ContributionCache load_cache(const std::filesystem::path& path);

}  // namespace resdecomp
