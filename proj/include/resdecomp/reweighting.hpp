#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resdecomp/decomposition.hpp"
#include "resdecomp/tasks.hpp"

namespace resdecomp {

struct TrainConfig {
    double learning_rate = 0.05;
    double l1_lambda = 0.1;
    int max_epochs = 1000;
    int patience = 10;               // epochs over which improvement is measured
    double min_improvement = 1e-4;   // stop when loss improves less than this over `patience`
    bool stop_on_perfect_accuracy = false;
    std::uint64_t seed = 0;
};

struct TrainStats {
    int epochs = 0;
    double final_loss = 0.0;
    double final_accuracy = 0.0;
    std::vector<std::string> warnings;
};

// Learned per-component scale w, aligned with the cache's component order.
struct ComponentWeights {
    std::vector<ComponentId> components;
    Vector w;
    TrainStats stats;
};

// Per-class calibration weights v for softmax(v * p).
struct CalibrationWeights {
    Vector v;
    TrainStats stats;
};

// One K'-shot decomposed forward per training example. `prompt` holds the
// demonstrations and template; label words come from its verbalizer.
ContributionCache cache_train_contributions(const TransformerWeights& weights, const PromptSpec& prompt,
                                            std::span<const LabeledExample> examples, bool include_x0,
                                            int threads = 1, const std::string& id_prefix = "train");

// Sum over examples of -log P_rw(y|x), plus lambda * ||w||_1.
double reweighting_loss(const ContributionCache& cache, std::span<const double> w, double l1_lambda);

// Exact gradient of the cross-entropy part of the loss with respect to w.
std::vector<double> reweighting_ce_gradient(const ContributionCache& cache, std::span<const double> w);

// Full-batch gradient descent from w = 1 with an L1 subgradient (sign(0) = 0).
ComponentWeights train_component_weights(const ContributionCache& cache, const TrainConfig& config);

// argmax over offset + sum_j w_j g_j.
std::size_t reweighted_predict(const ContributionCache& cache, std::size_t example, std::span<const float> w);
std::size_t reweighted_predict(std::span<const float> contributions, std::span<const float> offset,
                               std::span<const float> w, std::size_t labels);

double reweighted_accuracy(const ContributionCache& cache, std::span<const float> w);

// Gradient descent on cross-entropy of softmax(v * p) from v = 1.
CalibrationWeights train_calibration(const std::vector<Vector>& probs, std::span<const int> gold,
                                     const TrainConfig& config);

std::size_t calibrated_predict(std::span<const float> probs, std::span<const float> v);

using Embedder = std::function<Vector(std::span<const TokenId>)>;

// Mean of the input tokens' rows of the model's token embedding.
Embedder token_mean_embedder(const TransformerWeights& weights);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Indices of the k nearest pool examples by cosine similarity, most similar
// first, ties by pool index.
std::vector<std::size_t> prompt_selection(std::span<const LabeledExample> pool,
                                          std::span<const TokenId> test_input, int k, const Embedder& embed);

nlohmann::json train_config_to_json(const TrainConfig& config);
nlohmann::json component_weights_to_json(const ComponentWeights& weights, const TrainConfig& config);
nlohmann::json calibration_weights_to_json(const CalibrationWeights& weights,
                                           std::span<const TokenId> label_words, const TrainConfig& config);

}  // namespace resdecomp
