#include "resdecomp/reweighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "resdecomp/errors.hpp"
#include "resdecomp/parallel.hpp"

namespace resdecomp {

ContributionCache cache_train_contributions(const TransformerWeights& weights, const PromptSpec& prompt,
                                            std::span<const LabeledExample> examples, bool include_x0,
                                            int threads, const std::string& id_prefix) {
    ContributionCache cache;
    cache.components = enumerate_components(weights.config, include_x0);
    cache.label_words = prompt.tmpl.verbalizer;
    if (cache.label_words.empty()) {
        throw InputError("cache_train_contributions: template has no label words");
    }
    std::vector<ExampleContributions> rows(examples.size());
    parallel_for(examples.size(), threads, [&](std::size_t i) {
        const AssembledPrompt p = assemble_prompt(prompt, examples[i].input, weights.config.max_seq);
        rows[i] = decompose_example(weights, p.tokens, cache.label_words, cache.components);
    });
    for (std::size_t i = 0; i < rows.size(); ++i) {
        cache.append(id_prefix + "-" + std::to_string(i), examples[i].label, rows[i]);
    }
    cache.validate();
    return cache;
}

namespace {

// offset + sum_j w_j g_j for one example, in double.
std::vector<double> reweighted_logits(const ContributionCache& cache, std::size_t e, std::span<const double> w) {
    const std::size_t y = cache.num_labels();
    std::vector<double> z(y);
    const auto off = cache.example_offset(e);
    for (std::size_t c = 0; c < y; ++c) z[c] = off[c];
    for (std::size_t j = 0; j < cache.num_components(); ++j) {
        const auto g = cache.contribution(e, j);
        for (std::size_t c = 0; c < y; ++c) z[c] += w[j] * g[c];
    }
    return z;
}

void check_weight_length(const ContributionCache& cache, std::size_t n) {
    if (n != cache.num_components()) {
        throw DimensionError("weight vector length " + std::to_string(n) + " does not match " +
                             std::to_string(cache.num_components()) + " cached components");
    }
}

double l1_norm(std::span<const double> w) {
    double s = 0.0;
    for (double x : w) s += std::abs(x);
    return s;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

struct EpochResult {
    double ce = 0.0;
    double accuracy = 0.0;
};

// Shared loop: `evaluate` fills the gradient of the CE part and returns the CE
// sum and training accuracy; `regularizer` adds its value and subgradient.
template <class Evaluate, class Regularizer>
TrainStats gradient_descent(std::vector<double>& params, const TrainConfig& config, Evaluate&& evaluate,
                            Regularizer&& regularizer) {
    if (!(config.learning_rate > 0.0)) throw InputError("learning rate must be positive");
    if (config.l1_lambda < 0.0) throw InputError("l1 lambda must be non-negative");
    TrainStats stats;
    std::vector<double> history;
    std::vector<double> grad(params.size());
    for (int epoch = 0;; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const EpochResult r = evaluate(params, grad);
        const double loss = r.ce + regularizer(params, grad);
        if (!std::isfinite(loss)) {
            throw TrainingDivergedError("training diverged: loss is not finite at epoch " + std::to_string(epoch));
        }
        stats.epochs = epoch;
        stats.final_loss = loss;
        stats.final_accuracy = r.accuracy;
        history.push_back(loss);
        if (epoch >= config.max_epochs) break;
        if (config.stop_on_perfect_accuracy && r.accuracy >= 1.0) break;
        const auto n = history.size();
        if (n > static_cast<std::size_t>(config.patience) &&
            history[n - 1 - static_cast<std::size_t>(config.patience)] - history[n - 1] < config.min_improvement) {
            break;
        }
        for (std::size_t j = 0; j < params.size(); ++j) params[j] -= config.learning_rate * grad[j];
    }
    return stats;
}

}  // namespace

double reweighting_loss(const ContributionCache& cache, std::span<const double> w, double l1_lambda) {
    check_weight_length(cache, w.size());
    double loss = 0.0;
    for (std::size_t e = 0; e < cache.num_examples(); ++e) {
        const std::vector<double> z = reweighted_logits(cache, e, w);
        const std::vector<double> p = softmax_stable(std::span<const double>(z));
        loss += cross_entropy(std::span<const double>(p), static_cast<std::size_t>(cache.gold[e]));
    }
    return loss + l1_lambda * l1_norm(w);
}

std::vector<double> reweighting_ce_gradient(const ContributionCache& cache, std::span<const double> w) {
    check_weight_length(cache, w.size());
    const std::size_t y = cache.num_labels();
    std::vector<double> grad(w.size(), 0.0);
    for (std::size_t e = 0; e < cache.num_examples(); ++e) {
        const std::vector<double> z = reweighted_logits(cache, e, w);
        std::vector<double> delta = softmax_stable(std::span<const double>(z));
        delta[static_cast<std::size_t>(cache.gold[e])] -= 1.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const auto g = cache.contribution(e, j);
            double s = 0.0;
            for (std::size_t c = 0; c < y; ++c) s += delta[c] * g[c];
            grad[j] += s;
        }
    }
    return grad;
}

ComponentWeights train_component_weights(const ContributionCache& cache, const TrainConfig& config) {
    cache.validate();
    if (cache.num_examples() == 0) {
        throw InputError("train_component_weights: empty cache");
    }
    std::vector<double> w(cache.num_components(), 1.0);
    const std::size_t y = cache.num_labels();
    auto evaluate = [&](const std::vector<double>& params, std::vector<double>& grad) {
        EpochResult r;
        std::size_t correct = 0;
        for (std::size_t e = 0; e < cache.num_examples(); ++e) {
            const std::vector<double> z = reweighted_logits(cache, e, params);
            std::vector<double> delta = softmax_stable(std::span<const double>(z));
            const auto gold = static_cast<std::size_t>(cache.gold[e]);
            r.ce += cross_entropy(std::span<const double>(delta), gold);
            if (argmax(std::span<const double>(z)) == gold) ++correct;
            delta[gold] -= 1.0;
            for (std::size_t j = 0; j < params.size(); ++j) {
                const auto g = cache.contribution(e, j);
                double s = 0.0;
                for (std::size_t c = 0; c < y; ++c) s += delta[c] * g[c];
                grad[j] += s;
            }
        }
        r.accuracy = static_cast<double>(correct) / static_cast<double>(cache.num_examples());
        return r;
    };
    auto l1 = [&](const std::vector<double>& params, std::vector<double>& grad) {
        for (std::size_t j = 0; j < params.size(); ++j) grad[j] += config.l1_lambda * sign(params[j]);
        return config.l1_lambda * l1_norm(params);
    };
    ComponentWeights out;
    out.components = cache.components;
    out.stats = gradient_descent(w, config, evaluate, l1);
    out.w.assign(w.begin(), w.end());
    return out;
}

std::size_t reweighted_predict(std::span<const float> contributions, std::span<const float> offset,
                               std::span<const float> w, std::size_t labels) {
    if (labels == 0 || contributions.size() != w.size() * labels || offset.size() != labels) {
        throw DimensionError("reweighted_predict: component count does not match weights");
    }
    std::vector<double> z(offset.begin(), offset.end());
    for (std::size_t j = 0; j < w.size(); ++j) {
        for (std::size_t c = 0; c < labels; ++c) z[c] += static_cast<double>(w[j]) * contributions[j * labels + c];
    }
    return argmax(std::span<const double>(z));
}

std::size_t reweighted_predict(const ContributionCache& cache, std::size_t example, std::span<const float> w) {
    check_weight_length(cache, w.size());
    const std::size_t y = cache.num_labels();
    const std::span<const float> row(cache.values.data() + example * cache.num_components() * y,
                                     cache.num_components() * y);
    return reweighted_predict(row, cache.example_offset(example), w, y);
}

double reweighted_accuracy(const ContributionCache& cache, std::span<const float> w) {
    if (cache.num_examples() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t e = 0; e < cache.num_examples(); ++e) {
        if (reweighted_predict(cache, e, w) == static_cast<std::size_t>(cache.gold[e])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(cache.num_examples());
}

CalibrationWeights train_calibration(const std::vector<Vector>& probs, std::span<const int> gold,
                                     const TrainConfig& config) {
    if (probs.empty() || probs.size() != gold.size()) {
        throw InputError("train_calibration: need one gold label per probability vector");
    }
    const std::size_t y = probs.front().size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].size() != y) throw DimensionError("train_calibration: ragged probabilities");
        if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= y) throw IndexError("train_calibration: gold out of range");
        const double total = std::accumulate(probs[i].begin(), probs[i].end(), 0.0);
        if (std::abs(total - 1.0) > 1e-3 || !all_finite(probs[i])) {
            throw InputError("train_calibration: probabilities must form a distribution");
        }
    }
    std::vector<double> v(y, 1.0);
    auto evaluate = [&](const std::vector<double>& params, std::vector<double>& grad) {
        EpochResult r;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            std::vector<double> z(y);
            for (std::size_t c = 0; c < y; ++c) z[c] = params[c] * probs[i][c];
            std::vector<double> delta = softmax_stable(std::span<const double>(z));
            const auto g = static_cast<std::size_t>(gold[i]);
            r.ce += cross_entropy(std::span<const double>(delta), g);
            if (argmax(std::span<const double>(z)) == g) ++correct;
            delta[g] -= 1.0;
            for (std::size_t c = 0; c < y; ++c) grad[c] += delta[c] * probs[i][c];
        }
        r.accuracy = static_cast<double>(correct) / static_cast<double>(probs.size());
        return r;
    };
    auto none = [](const std::vector<double>&, std::vector<double>&) { return 0.0; };
    CalibrationWeights out;
    out.stats = gradient_descent(v, config, evaluate, none);
    if (std::adjacent_find(gold.begin(), gold.end(), std::not_equal_to<>()) == gold.end()) {
        out.stats.warnings.push_back("all training labels belong to one class; calibration only boosts that class");
    }
    out.v.assign(v.begin(), v.end());
    return out;
}

std::size_t calibrated_predict(std::span<const float> probs, std::span<const float> v) {
    if (probs.size() != v.size()) throw DimensionError("calibrated_predict: length mismatch");
    std::vector<double> z(probs.size());
    for (std::size_t c = 0; c < probs.size(); ++c) z[c] = static_cast<double>(v[c]) * probs[c];
    return argmax(std::span<const double>(z));
}

Embedder token_mean_embedder(const TransformerWeights& weights) {
    return [&weights](std::span<const TokenId> tokens) {
        const auto d = static_cast<std::size_t>(weights.config.d_model);
        std::vector<double> acc(d, 0.0);
        for (TokenId t : tokens) {
            if (t < 0 || t >= weights.config.vocab) throw InputError("embedder: token outside vocabulary");
            const auto row = weights.token_embedding.row(static_cast<std::size_t>(t));
            for (std::size_t i = 0; i < d; ++i) acc[i] += row[i];
        }
        Vector out(d, 0.0f);
        if (!tokens.empty()) {
            for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(tokens.size()));
        }
        return out;
    };
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) {
        throw DegenerateStatisticError("cosine similarity of a zero-norm embedding");
    }
    return dot(a, b) / (na * nb);
}

std::vector<std::size_t> prompt_selection(std::span<const LabeledExample> pool,
                                          std::span<const TokenId> test_input, int k, const Embedder& embed) {
    if (k < 0 || static_cast<std::size_t>(k) > pool.size()) {
        throw InputError("prompt_selection: pool smaller than K'");
    }
    const Vector query = embed(test_input);
    std::vector<double> sims(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) sims[i] = cosine_similarity(query, embed(pool[i].input));
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"l1_lambda", c.l1_lambda},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"min_improvement", c.min_improvement},
            {"stop_on_perfect_accuracy", c.stop_on_perfect_accuracy},
            {"seed", c.seed}};
}

nlohmann::json component_weights_to_json(const ComponentWeights& weights, const TrainConfig& config) {
    nlohmann::json names = nlohmann::json::array();
    for (const auto& id : weights.components) names.push_back(id.name());
    return {{"components", names},
            {"weights", weights.w},
            {"train_config", train_config_to_json(config)},
            {"epochs", weights.stats.epochs},
            {"final_train_loss", weights.stats.final_loss},
            {"final_train_accuracy", weights.stats.final_accuracy}};
}

nlohmann::json calibration_weights_to_json(const CalibrationWeights& weights, std::span<const TokenId> label_words,
                                           const TrainConfig& config) {
    return {{"label_words", std::vector<TokenId>(label_words.begin(), label_words.end())},
            {"weights", weights.v},
            {"train_config", train_config_to_json(config)},
            {"epochs", weights.stats.epochs},
            {"final_train_loss", weights.stats.final_loss},
            {"final_train_accuracy", weights.stats.final_accuracy},
            {"warnings", weights.stats.warnings}};
}

}  // namespace resdecomp
