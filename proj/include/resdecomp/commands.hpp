#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resdecomp/analysis.hpp"
#include "resdecomp/dynamics.hpp"
#include "resdecomp/reweighting.hpp"

namespace resdecomp {

enum class OutputFormat { Json, Csv };
OutputFormat output_format_from_string(const std::string& text);

// Shared settings of every subcommand.
struct RunConfig {
    std::filesystem::path model;
    std::filesystem::path task;
    std::uint64_t seed = 0;
    int k = 4;
    int k_prime = 4;
    double l1_lambda = 0.1;
    double learning_rate = 0.05;
    int test_size = 512;
    bool include_x0 = false;
    int threads = 1;
    std::filesystem::path out;  // empty: stdout
    OutputFormat format = OutputFormat::Json;
};

// Applies RESDECOMP_SEED when it is set; throws InputError when it does not parse.
std::uint64_t effective_seed(std::uint64_t flag_seed);

// A rendered report. `csv` is empty for commands without a tabular form;
// those fall back to a flattened key,value listing.
struct Report {
    nlohmann::json json;
    std::string csv;

    std::string render(OutputFormat format) const;
};

// Sorted keys, two-space indent, trailing newline.
std::string canonical_json(const nlohmann::json& j);
std::string flatten_to_csv(const nlohmann::json& j);

struct GenTaskOptions {
    std::string kind = "pattern";
    int n_patterns = 2;
    int n_labels = 2;
    int n_examples = 512;
    int seq_len = 5;  // majority kind
    TaskOptions task;
};
Task cmd_gen_task(const GenTaskOptions& options, std::uint64_t seed);

// Model dimensions default to ModelConfig; vocab defaults to the task's.
TransformerWeights cmd_init_model(const ModelConfig& config, std::uint64_t seed);

struct TrainToyOptions {
    int steps = 1500;
    int checkpoint_every = 100;
    ToyTrainOptions train;
};
// Writes step_XXXXXX.tdw files plus manifest.json into `out_dir` and returns
// the manifest.
nlohmann::json cmd_train_toy(const ModelConfig& config, const Task& task, const TrainToyOptions& options,
                             std::uint64_t seed, const std::filesystem::path& out_dir);

struct EvalOptions {
    int demo_sets = 1;
    int templates = 1;
    double bias_threshold = 1.0;
};
Report cmd_eval(const RunConfig& config, const EvalOptions& options);

struct ReweightOptions {
    int runs = 1;
    int max_epochs = 1000;
};
Report cmd_reweight(const RunConfig& config, const ReweightOptions& options);
Report cmd_calibrate(const RunConfig& config, const ReweightOptions& options);

Report cmd_prompt_select(const RunConfig& config);

struct AgreementCommandOptions {
    std::string variation = "demos";
    int runs = 3;
    int top_k = 5;
};
Report cmd_agreement(const RunConfig& config, const AgreementCommandOptions& options);

struct TransferOptions {
    std::string mode = "best";
    int targets = 3;  // prompts the selected component is transferred to
};
Report cmd_transfer(const RunConfig& config, const TransferOptions& options);

struct PruneOptions {
    int top = 5;
    int bottom = 5;
};
Report cmd_prune(const RunConfig& config, const PruneOptions& options);

struct DynamicsOptions {
    std::filesystem::path checkpoint_dir;
    int prompt_seeds = 3;
    int templates = 3;
};
Report cmd_dynamics(const RunConfig& config, const DynamicsOptions& options);

// Checkpoints listed in a train-toy manifest, in step order.
std::vector<Checkpoint> load_checkpoints(const std::filesystem::path& dir);

}  // namespace resdecomp
