// resdecomp command-line front end. Each subcommand loads its inputs, calls
// the matching cmd_* function, and writes one report (stdout when --out is
// omitted). Exit codes: 0 success, 1 runtime/validation error, 2 usage error.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "resdecomp/commands.hpp"
#include "resdecomp/container.hpp"
#include "resdecomp/errors.hpp"
#include "resdecomp/parallel.hpp"
#include "resdecomp/weights_io.hpp"

using namespace resdecomp;

namespace {

struct Flags {
    std::string model;
    std::string task;
    std::uint64_t seed = 0;
    int k = 4;
    int k_prime = 4;
    double lambda = 0.1;
    double lr = 0.05;
    int test_size = 512;
    bool include_x0 = false;
    int threads = 0;
    std::string out;
    std::string format = "json";

    RunConfig config() const {
        RunConfig c;
        c.model = model;
        c.task = task;
        c.seed = effective_seed(seed);
        c.k = k;
        c.k_prime = k_prime;
        c.l1_lambda = lambda;
        c.learning_rate = lr;
        c.test_size = test_size;
        c.include_x0 = include_x0;
        c.threads = threads <= 0 ? default_threads() : threads;
        c.out = out;
        c.format = output_format_from_string(format);
        return c;
    }
};

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--model", f.model, "TDW1 weights file");
    app->add_option("--task", f.task, "task JSON file");
    app->add_option("--seed", f.seed, "master seed (RESDECOMP_SEED overrides)");
    app->add_option("--k", f.k, "number of demonstrations K");
    app->add_option("--k-prime", f.k_prime, "demonstrations kept in the prompt (K')");
    app->add_option("--lambda", f.lambda, "L1 strength for reweighting");
    app->add_option("--lr", f.lr, "learning rate for reweighting and calibration");
    app->add_option("--test-size", f.test_size, "number of test examples");
    app->add_flag("--include-x0", f.include_x0, "treat the embedding state as a component");
    app->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    app->add_option("--out", f.out, "output path (default stdout)");
    app->add_option("--format", f.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
}

struct ModelFlags {
    int layers = 2;
    int heads = 4;
    int d_model = 64;
    int d_mlp = 256;
    int max_seq = 128;
    int vocab = 0;

    void add(CLI::App* app) {
        app->add_option("--layers", layers);
        app->add_option("--heads", heads);
        app->add_option("--d-model", d_model);
        app->add_option("--d-mlp", d_mlp);
        app->add_option("--max-seq", max_seq);
        app->add_option("--vocab", vocab, "vocabulary size (default: the task's, else 32)");
    }

    ModelConfig config(const std::string& task_path) const {
        ModelConfig c;
        c.layers = layers;
        c.heads = heads;
        c.d_model = d_model;
        if (heads < 1 || d_model % heads != 0) throw UsageError("--d-model must be a multiple of --heads");
        c.d_head = d_model / heads;
        c.d_mlp = d_mlp;
        c.max_seq = max_seq;
        c.vocab = vocab > 0 ? vocab : (task_path.empty() ? 32 : load_task(task_path).layout.vocab_size);
        c.validate();
        return c;
    }
};

void emit(const std::string& text, const RunConfig& config) {
    if (config.out.empty()) {
        std::cout << text;
    } else {
        write_file_bytes(config.out, text);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Direct-contribution analysis of toy transformer in-context learning"};
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("gen-task", "generate a synthetic task");
    add_common(gen, f);
    GenTaskOptions gen_opts;
    gen->add_option("--kind", gen_opts.kind)->check(CLI::IsMember({"pattern", "majority"}));
    gen->add_option("--n-patterns", gen_opts.n_patterns);
    gen->add_option("--n-labels", gen_opts.n_labels);
    gen->add_option("--n-examples", gen_opts.n_examples);
    gen->add_option("--seq-len", gen_opts.seq_len, "input length for the majority task");
    gen->add_option("--input-len", gen_opts.task.input_len, "input length for the pattern task");
    gen->add_option("--pool-size", gen_opts.task.pool_size);
    gen->add_option("--n-templates", gen_opts.task.n_templates);

    auto* init = app.add_subcommand("init-model", "write randomly initialised weights");
    add_common(init, f);
    ModelFlags init_model;
    init_model.add(init);

    auto* train = app.add_subcommand("train-toy", "train a toy model and write checkpoints into --out");
    add_common(train, f);
    ModelFlags train_model;
    train_model.add(train);
    TrainToyOptions train_opts;
    train->add_option("--steps", train_opts.steps);
    train->add_option("--checkpoint-every", train_opts.checkpoint_every);
    train->add_option("--batch-size", train_opts.train.batch_size);
    train->add_option("--train-lr", train_opts.train.learning_rate, "Adam learning rate");
    train->add_option("--warmup", train_opts.train.warmup_steps);

    auto* eval = app.add_subcommand("eval", "per-component accuracy over demo sets x templates");
    add_common(eval, f);
    EvalOptions eval_opts;
    eval->add_option("--demo-sets", eval_opts.demo_sets);
    eval->add_option("--templates", eval_opts.templates);
    eval->add_option("--bias-threshold", eval_opts.bias_threshold);

    ReweightOptions rw_opts;
    auto* reweight = app.add_subcommand("reweight", "component reweighting against ICL baselines");
    add_common(reweight, f);
    reweight->add_option("--runs", rw_opts.runs);
    reweight->add_option("--max-epochs", rw_opts.max_epochs);
    auto* calibrate = app.add_subcommand("calibrate", "Calib+ against ICL baselines");
    add_common(calibrate, f);
    calibrate->add_option("--runs", rw_opts.runs);
    calibrate->add_option("--max-epochs", rw_opts.max_epochs);

    auto* select = app.add_subcommand("prompt-select", "nearest-neighbour demonstration selection");
    add_common(select, f);

    auto* agree = app.add_subcommand("agreement", "component agreement across prompts");
    add_common(agree, f);
    AgreementCommandOptions agree_opts;
    agree->add_option("--variation", agree_opts.variation)
        ->check(CLI::IsMember({"demos", "templates", "contrast_templates"}));
    agree->add_option("--runs", agree_opts.runs);
    agree->add_option("--top-k", agree_opts.top_k);

    auto* transfer = app.add_subcommand("transfer", "transfer the best or worst component to other prompts");
    add_common(transfer, f);
    TransferOptions transfer_opts;
    transfer->add_option("--mode", transfer_opts.mode)->check(CLI::IsMember({"best", "worst"}));
    transfer->add_option("--targets", transfer_opts.targets);

    auto* prune = app.add_subcommand("prune", "prune the top / bottom components");
    add_common(prune, f);
    PruneOptions prune_opts;
    prune->add_option("--top", prune_opts.top);
    prune->add_option("--bottom", prune_opts.bottom);

    auto* dyn = app.add_subcommand("dynamics", "full / top / bottom / last-top curves over checkpoints");
    add_common(dyn, f);
    DynamicsOptions dyn_opts;
    std::string checkpoint_dir;
    dyn->add_option("--checkpoints", checkpoint_dir, "train-toy output directory")->required();
    dyn->add_option("--prompt-seeds", dyn_opts.prompt_seeds);
    dyn->add_option("--templates", dyn_opts.templates);

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig config = f.config();
        if (gen->parsed()) {
            if (config.out.empty()) throw UsageError("gen-task needs --out");
            save_task(config.out, cmd_gen_task(gen_opts, config.seed));
        } else if (init->parsed()) {
            if (config.out.empty()) throw UsageError("init-model needs --out");
            save_weights(config.out, cmd_init_model(init_model.config(f.task), config.seed));
        } else if (train->parsed()) {
            if (config.out.empty()) throw UsageError("train-toy needs --out (a directory)");
            if (config.task.empty()) throw UsageError("train-toy needs --task");
            cmd_train_toy(train_model.config(f.task), load_task(config.task), train_opts, config.seed, config.out);
        } else if (eval->parsed()) {
            emit(cmd_eval(config, eval_opts).render(config.format), config);
        } else if (reweight->parsed()) {
            emit(cmd_reweight(config, rw_opts).render(config.format), config);
        } else if (calibrate->parsed()) {
            emit(cmd_calibrate(config, rw_opts).render(config.format), config);
        } else if (select->parsed()) {
            emit(cmd_prompt_select(config).render(config.format), config);
        } else if (agree->parsed()) {
            emit(cmd_agreement(config, agree_opts).render(config.format), config);
        } else if (transfer->parsed()) {
            emit(cmd_transfer(config, transfer_opts).render(config.format), config);
        } else if (prune->parsed()) {
            emit(cmd_prune(config, prune_opts).render(config.format), config);
        } else if (dyn->parsed()) {
            dyn_opts.checkpoint_dir = checkpoint_dir;
            emit(cmd_dynamics(config, dyn_opts).render(config.format), config);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
