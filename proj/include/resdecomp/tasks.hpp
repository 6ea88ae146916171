#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resdecomp/model.hpp"
#include "resdecomp/rng.hpp"

namespace resdecomp {

// Token-id layout shared by every synthetic task:
//   0 space, 1 newline, 2..7 template markers, label words, alternate label
//   words, then task content tokens.
struct VocabLayout {
    int vocab_size = 0;
    TokenId space = 0;
    TokenId newline = 1;
    std::vector<TokenId> markers;
    std::vector<TokenId> label_words;
    std::vector<TokenId> alt_label_words;
    std::vector<TokenId> content;

    static VocabLayout make(int n_labels, int n_content);
};

struct LabeledExample {
    std::vector<TokenId> input;
    int label = 0;

    bool operator==(const LabeledExample&) const = default;
};

enum class TemplateEdit { AddSpace, DropSpace, DropNewline, SwapLabelWords };

std::string to_string(TemplateEdit edit);
TemplateEdit template_edit_from_string(const std::string& text);

// One demonstration renders as prefix + input + infix + label word + separator.
struct Template {
    std::vector<TokenId> prefix;
    std::vector<TokenId> infix;
    std::vector<TokenId> separator;
    std::vector<TokenId> verbalizer;      // label index -> label word
    std::vector<TokenId> alt_verbalizer;  // used by SwapLabelWords
    std::vector<std::string> tags;        // edits applied so far

    bool operator==(const Template&) const = default;
};

Template random_template(const VocabLayout& layout, int n_labels, Rng& rng);

// Minimal edit of one template; throws EditError if the edit does not apply.
Template perturb_template(const Template& tmpl, TemplateEdit edit);

// prefix, input placeholder (-1), infix, label word of `label`, separator.
std::vector<TokenId> render_skeleton(const Template& tmpl, int label);

enum class TaskKind { Pattern, Majority };

struct Task {
    TaskKind kind = TaskKind::Pattern;
    std::uint64_t seed = 0;
    int n_labels = 2;
    VocabLayout layout;
    // Pattern: {patterns, fillers}; Majority: one sub-vocabulary per label.
    std::vector<std::vector<TokenId>> content_groups;
    std::vector<int> pattern_labels;  // pattern kind only
    int input_len = 0;
    std::vector<LabeledExample> examples;  // test set
    std::vector<LabeledExample> pool;      // demonstration / training pool
    std::vector<Template> templates;
};

struct TaskOptions {
    int pool_size = 64;
    int input_len = 1;     // pattern task: fillers then the pattern token
    int n_fillers = 8;
    int sub_vocab = 4;     // majority task: tokens per label
    int n_templates = 3;
};

Task generate_pattern_task(std::uint64_t seed, int n_patterns, int n_labels, int n_examples,
                           const TaskOptions& options = {});
Task generate_majority_task(std::uint64_t seed, int n_labels, int seq_len, int n_examples,
                            const TaskOptions& options = {});

// Majority label of a sequence drawn from the task's sub-vocabularies, or -1
// when there is no strict plurality.
int majority_label(const Task& task, std::span<const TokenId> input);

struct DemoMode {
    enum class Kind { Balanced, AllLabel };
    Kind kind = Kind::Balanced;
    int label = 0;

    static DemoMode balanced() { return {}; }
    static DemoMode all_label(int c) { return {Kind::AllLabel, c}; }
};

// Balanced mode: k/n_labels per class, shuffled until the last two labels
// differ. All-label mode: k examples of one class.
std::vector<LabeledExample> sample_demonstrations(std::span<const LabeledExample> pool, int n_labels,
                                                  int k, DemoMode mode, std::uint64_t seed);

// `count` pairwise-disjoint balanced demonstration sets.
std::vector<std::vector<LabeledExample>> sample_disjoint_demo_sets(std::span<const LabeledExample> pool,
                                                                   int n_labels, int k, int count,
                                                                   std::uint64_t seed);

// K labeled examples drawn from the pool, as balanced as K allows.
std::vector<LabeledExample> draw_labeled_subset(std::span<const LabeledExample> pool, int n_labels,
                                                int k, std::uint64_t seed);

struct DemoSplit {
    std::vector<LabeledExample> demo;
    std::vector<LabeledExample> train;
};

// K' balanced demonstrations; the remaining K - K' examples (in pool order)
// become the training set.
DemoSplit split_examples(std::span<const LabeledExample> pool, int n_labels, int k_prime,
                         std::uint64_t seed);

struct PromptSpec {
    std::vector<LabeledExample> demonstrations;
    Template tmpl;
};

struct AssembledPrompt {
    std::vector<TokenId> tokens;
    std::vector<int> label_positions;  // index of each demonstration's label word
    std::vector<int> label_classes;    // class of each of those label words
};

// Demonstrations then the templated test input, label slot empty.
AssembledPrompt assemble_prompt(const PromptSpec& spec, std::span<const TokenId> test_input,
                                int max_seq);

// One training sequence drawn from the task family: random template, random
// label-word set, and (pattern kind) a fresh pattern-to-label assignment.
struct TrainingSequence {
    std::vector<TokenId> tokens;
    std::vector<int> target_positions;  // position whose next token is a label word
    std::vector<TokenId> targets;
};

// The demonstration count is uniform in [min_demos, max_demos], capped by what fits.
TrainingSequence sample_training_sequence(const Task& task, int max_seq, int min_demos, int max_demos, Rng& rng);

nlohmann::json task_to_json(const Task& task);
Task task_from_json(const nlohmann::json& j);
void save_task(const std::filesystem::path& path, const Task& task);
Task load_task(const std::filesystem::path& path);

nlohmann::json template_to_json(const Template& t);
Template template_from_json(const nlohmann::json& j);

}  // namespace resdecomp
