#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resdecomp/errors.hpp"
#include "resdecomp/model.hpp"
#include "resdecomp/tasks.hpp"

namespace resdecomp {

struct ToyTrainOptions {
    int batch_size = 32;
    double learning_rate = 3e-3;  // Adam, linear warmup then constant
    int warmup_steps = 200;
    double grad_clip = 1.0;       // global L2 norm
    int min_demos = 3;            // per streamed training sequence
    int max_demos = 7;
};

struct Checkpoint {
    int step = 0;
    TransformerWeights weights;
    double train_loss = 0.0;  // mean label-position loss of the batch at this step
};

// Thrown on a non-finite loss or gradient; carries every checkpoint written
// before the failure.
class TrainingDiverged : public TrainingDivergedError {
public:
    TrainingDiverged(const std::string& what, std::vector<Checkpoint> kept)
        : TrainingDivergedError(what), checkpoints(std::move(kept)) {}
    std::vector<Checkpoint> checkpoints;
};

// Next-token cross-entropy summed over the sequence's target positions, times
// `scale`. When `grad` is non-null the gradient of that scaled loss is added
// into it (same shapes as `weights`).
double sequence_loss(const TransformerWeights& weights, const TrainingSequence& seq, double scale,
                     TransformerWeights* grad);

// Zero-valued tensors with the shapes of `weights`.
TransformerWeights zeros_like(const TransformerWeights& weights);

// Trains from init_random(config, seed) on sequences streamed from the task
// family. Checkpoints at step 0, every `checkpoint_every` steps, and `steps`.
std::vector<Checkpoint> train_toy_lm(const ModelConfig& config, const Task& task, int steps,
                                     int checkpoint_every, std::uint64_t seed,
                                     const ToyTrainOptions& options = {});

struct MeanSd {
    double mean = 0.0;
    std::optional<double> sd;  // sample standard deviation, absent for one run
};

MeanSd mean_sd(const std::vector<double>& values);

struct DynamicsPoint {
    int step = 0;
    MeanSd full;
    MeanSd t1;
    MeanSd b1;
    MeanSd last_t1;
};

struct DynamicsCurve {
    std::vector<DynamicsPoint> points;
    std::vector<std::string> final_top1;  // per run, the component tracked by Last-T1
    int runs = 0;
};

struct SweepOptions {
    int k_prime = 4;
    int test_size = 512;
    bool include_x0 = false;
    int threads = 1;
};

// One run per (prompt seed, template). Last-T1 follows each run's top-1
// component of the final checkpoint back through the earlier ones.
DynamicsCurve sweep_dynamics(const std::vector<Checkpoint>& checkpoints, const Task& task,
                             const std::vector<std::uint64_t>& prompt_seeds,
                             const std::vector<Template>& templates, const SweepOptions& options = {});

// Long format: step,metric,mean,sd
std::string curve_to_csv(const DynamicsCurve& curve);
nlohmann::json curve_to_json(const DynamicsCurve& curve);

}  // namespace resdecomp
