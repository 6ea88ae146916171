#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resdecomp/decomposition.hpp"
#include "resdecomp/tasks.hpp"

namespace resdecomp {

struct ComponentStats {
    ComponentId id;
    double accuracy = 0.0;
    std::vector<double> label_frequency;  // how often each label is predicted
    int preferred_label = 0;               // most frequently predicted label
    bool biased = false;
};

struct ComponentReport {
    std::vector<ComponentStats> components;
    double full_accuracy = 0.0;
    std::vector<double> full_label_frequency;
    std::size_t oracle_t1 = 0;  // index into components
    std::size_t oracle_b1 = 0;
    std::size_t n_examples = 0;
    double bias_threshold = 1.0;

    const ComponentStats& top1() const { return components.at(oracle_t1); }
    const ComponentStats& bottom1() const { return components.at(oracle_b1); }
    std::vector<double> accuracies() const;
};

struct EvaluationOptions {
    bool include_x0 = false;
    int threads = 1;
    // A component is label-biased when its most frequent prediction covers at
    // least this fraction of the test set.
    double bias_threshold = 1.0;
};

// Per-component argmax accuracy from a cache. Full accuracy uses offset plus
// the sum over all cached components. Excludes x0 unless it was cached.
ComponentReport evaluate_cache(const ContributionCache& cache, double bias_threshold = 1.0);

// Decomposed forward per test example, then evaluate_cache.
ContributionCache build_test_cache(const TransformerWeights& weights, const PromptSpec& prompt,
                                   std::span<const LabeledExample> test_set, bool include_x0, int threads);
ComponentReport evaluate_components(const TransformerWeights& weights, const PromptSpec& prompt,
                                    std::span<const LabeledExample> test_set, const EvaluationOptions& options);

// Throws DegenerateStatisticError when either input has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// Top-k by descending value, ties by ascending index.
std::vector<std::size_t> top_k_indices(std::span<const double> values, int k);
double top_k_iou(std::span<const double> a, std::span<const double> b, int k = 5);

enum class TransferMode { Best, Worst };
TransferMode transfer_mode_from_string(const std::string& text);

ComponentId transfer_select(const ComponentReport& report, TransferMode mode);

// Accuracy of a single component's predictions on a cache.
double component_accuracy(const ContributionCache& cache, const ComponentId& id);

// Forward passes with the masked components zeroed at every position.
struct PruneResult {
    double accuracy = 0.0;
    std::vector<int> predictions;
};
PruneResult prune_forward(const TransformerWeights& weights, const PromptSpec& prompt,
                          std::span<const LabeledExample> test_set, std::span<const ComponentId> mask,
                          int threads = 1);

struct AttentionAttribution {
    int layer = 0;
    int head = 0;
    std::vector<double> mean_attention;        // per label, averaged over label tokens then examples
    double correct_higher_fraction = 0.0;      // share of examples attending more to the gold label's tokens
    std::vector<std::optional<double>> attention_logit_r;  // per label: r(attention to c, head's logit for c)
};

// Each example is (assembled prompt, gold label). Throws InputError when a
// prompt records no label positions.
AttentionAttribution attention_label_attribution(const TransformerWeights& weights,
                                                 std::span<const AssembledPrompt> prompts,
                                                 std::span<const int> gold, std::span<const TokenId> label_words,
                                                 int layer, int head);

struct TTestResult {
    double t = 0.0;
    double p_value = 0.5;
    int dof = 0;
};

// H1: mean(a - b) > 0. p from the Student-t upper tail with m - 1 d.o.f.
TTestResult paired_t_test_one_tailed(std::span<const double> a, std::span<const double> b);

struct AgreementReport {
    std::string run_a;
    std::string run_b;
    std::optional<double> pearson;  // absent when a run has zero-variance accuracies
    double iou = 0.0;
    int k = 5;
};

std::vector<AgreementReport> pairwise_agreement(const std::vector<ComponentReport>& runs,
                                                const std::vector<std::string>& run_ids, int k = 5);

enum class Variation { Demos, Templates, ContrastTemplates };
Variation variation_from_string(const std::string& text);
std::string to_string(Variation v);

struct AgreementOptions {
    int k_prime = 4;
    int test_size = 512;
    int top_k = 5;
    bool include_x0 = false;
    int threads = 1;
    std::uint64_t seed = 0;
};

struct AgreementExperiment {
    Variation variation = Variation::Demos;
    std::vector<std::string> run_ids;
    std::vector<double> run_full_accuracy;
    std::vector<AgreementReport> pairs;
    std::optional<double> mean_pearson;
    double mean_iou = 0.0;
};

// demos: `runs` disjoint demonstration sets under the first template.
// templates: `runs` templates with one shared demonstration set.
// contrast_templates: `runs` pairs of (template, minimally edited template).
AgreementExperiment agreement_experiment(const TransformerWeights& weights, const Task& task, Variation variation,
                                         int runs, const AgreementOptions& options);

nlohmann::json report_to_json(const ComponentReport& report);
std::string report_to_csv(const ComponentReport& report);
nlohmann::json agreement_to_json(const AgreementExperiment& experiment);
nlohmann::json attribution_to_json(const AttentionAttribution& a);

}  // namespace resdecomp
