#include "resdecomp/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "resdecomp/container.hpp"
#include "resdecomp/errors.hpp"
#include "resdecomp/parallel.hpp"
#include "resdecomp/weights_io.hpp"

namespace resdecomp {

OutputFormat output_format_from_string(const std::string& text) {
    if (text == "json") return OutputFormat::Json;
    if (text == "csv") return OutputFormat::Csv;
    throw UsageError("--format must be json or csv");
}

std::uint64_t effective_seed(std::uint64_t flag_seed) {
    const char* env = std::getenv("RESDECOMP_SEED");
    if (env == nullptr || *env == '\0') return flag_seed;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw InputError(std::string("RESDECOMP_SEED is not an unsigned integer: ") + env);
    }
}

std::string canonical_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

namespace {

void flatten(const nlohmann::json& j, const std::string& prefix, std::ostringstream& out) {
    if (j.is_object()) {
        for (const auto& [key, value] : j.items()) flatten(value, prefix.empty() ? key : prefix + "." + key, out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
    } else {
        out << prefix << ',' << (j.is_string() ? j.get<std::string>() : j.dump()) << '\n';
    }
}

}  // namespace

std::string flatten_to_csv(const nlohmann::json& j) {
    std::ostringstream out;
    out << "key,value\n";
    flatten(j, "", out);
    return out.str();
}

std::string Report::render(OutputFormat format) const {
    if (format == OutputFormat::Json) return canonical_json(json);
    return csv.empty() ? flatten_to_csv(json) : csv;
}

Task cmd_gen_task(const GenTaskOptions& options, std::uint64_t seed) {
    const std::uint64_t task_seed = substream_seed(seed, "task");
    if (options.kind == "pattern") {
        return generate_pattern_task(task_seed, options.n_patterns, options.n_labels, options.n_examples, options.task);
    }
    if (options.kind == "majority") {
        return generate_majority_task(task_seed, options.n_labels, options.seq_len, options.n_examples, options.task);
    }
    throw UsageError("--kind must be pattern or majority");
}

TransformerWeights cmd_init_model(const ModelConfig& config, std::uint64_t seed) {
    return init_random(config, seed);
}

namespace {

std::string step_file_name(int step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%06d.tdw", step);
    return buf;
}

nlohmann::json toy_options_json(const ToyTrainOptions& o) {
    return {{"batch_size", o.batch_size},   {"learning_rate", o.learning_rate}, {"warmup_steps", o.warmup_steps},
            {"grad_clip", o.grad_clip},     {"min_demos", o.min_demos},         {"max_demos", o.max_demos},
            {"optimizer", "adam"}};
}

}  // namespace

nlohmann::json cmd_train_toy(const ModelConfig& config, const Task& task, const TrainToyOptions& options,
                             std::uint64_t seed, const std::filesystem::path& out_dir) {
    std::vector<Checkpoint> checkpoints;
    std::optional<std::string> failure;
    try {
        checkpoints = train_toy_lm(config, task, options.steps, options.checkpoint_every, seed, options.train);
    } catch (TrainingDiverged& e) {
        checkpoints = std::move(e.checkpoints);
        failure = e.what();
    }
    std::filesystem::create_directories(out_dir);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : checkpoints) {
        const std::string file = step_file_name(c.step);
        save_weights(out_dir / file, c.weights, CheckpointMeta{c.step, c.train_loss});
        list.push_back({{"step", c.step}, {"file", file}, {"train_loss", c.train_loss}});
    }
    nlohmann::json manifest = {{"seed", seed},
                               {"steps", options.steps},
                               {"checkpoint_every", options.checkpoint_every},
                               {"config", config_to_json(config)},
                               {"train_options", toy_options_json(options.train)},
                               {"checkpoints", list}};
    write_file_bytes(out_dir / "manifest.json", canonical_json(manifest));
    if (failure) throw TrainingDivergedError(*failure + " (earlier checkpoints were kept)");
    return manifest;
}

std::vector<Checkpoint> load_checkpoints(const std::filesystem::path& dir) {
    const std::string text = read_file_bytes(dir / "manifest.json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest.json: ") + e.what());
    }
    std::vector<Checkpoint> out;
    for (const auto& entry : manifest.at("checkpoints")) {
        DecodedWeights d = load_weights(dir / entry.at("file").get<std::string>());
        Checkpoint c;
        c.step = entry.at("step").get<int>();
        c.train_loss = entry.value("train_loss", 0.0);
        c.weights = std::move(d.weights);
        if (!out.empty() && c.step <= out.back().step) {
            throw FormatError("manifest.json: checkpoint steps must strictly increase");
        }
        out.push_back(std::move(c));
    }
    if (out.empty()) throw FormatError("manifest.json lists no checkpoints");
    return out;
}

namespace {

struct Inputs {
    TransformerWeights weights;
    Task task;
    std::vector<LabeledExample> test;
};

Inputs load_inputs(const RunConfig& config) {
    if (config.model.empty()) throw UsageError("--model is required");
    if (config.task.empty()) throw UsageError("--task is required");
    if (config.test_size < 1) throw UsageError("--test-size must be positive");
    Inputs in;
    in.weights = load_weights(config.model).weights;
    in.task = load_task(config.task);
    if (in.task.layout.vocab_size > in.weights.config.vocab) {
        throw InputError("task vocabulary does not fit the model vocabulary");
    }
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.test_size), in.task.examples.size());
    in.test.assign(in.task.examples.begin(), in.task.examples.begin() + static_cast<std::ptrdiff_t>(n));
    return in;
}

// The task's own templates first, then fresh ones from the template stream.
std::vector<Template> task_templates(const Task& task, int count, std::uint64_t seed) {
    if (count < 1) throw UsageError("template count must be positive");
    std::vector<Template> out(task.templates.begin(),
                              task.templates.begin() + std::min<std::ptrdiff_t>(count, static_cast<std::ptrdiff_t>(task.templates.size())));
    Rng rng(substream_seed(seed, "template"));
    while (out.size() < static_cast<std::size_t>(count)) {
        out.push_back(random_template(task.layout, task.n_labels, rng));
    }
    return out;
}

std::uint64_t run_seed(std::uint64_t seed, const std::string& stream, int run) {
    return substream_seed(seed, stream + "-" + std::to_string(run));
}

nlohmann::json mean_sd_json(const std::vector<double>& values) {
    const MeanSd m = mean_sd(values);
    nlohmann::json j = {{"mean", m.mean}};
    if (m.sd) j["sd"] = *m.sd;
    return j;
}

std::size_t restricted_argmax(const Vector& logits, const std::vector<TokenId>& words) {
    Vector r(words.size());
    for (std::size_t c = 0; c < words.size(); ++c) r[c] = logits[static_cast<std::size_t>(words[c])];
    return argmax(std::span<const float>(r));
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

nlohmann::json common_json(const RunConfig& c) {
    return {{"seed", c.seed},           {"k", c.k},
            {"k_prime", c.k_prime},     {"test_size", c.test_size},
            {"include_x0", c.include_x0}};
}

}  // namespace

Report cmd_eval(const RunConfig& config, const EvalOptions& options) {
    if (options.demo_sets < 1) throw UsageError("--demo-sets must be positive");
    const Inputs in = load_inputs(config);
    const auto templates = task_templates(in.task, options.templates, config.seed);
    const auto demo_sets = sample_disjoint_demo_sets(in.task.pool, in.task.n_labels, config.k, options.demo_sets,
                                                     substream_seed(config.seed, "demos"));
    const EvaluationOptions eval{config.include_x0, config.threads, options.bias_threshold};

    nlohmann::json runs = nlohmann::json::array();
    std::vector<double> full, t1, b1;
    std::ostringstream csv;
    csv << "run,component,accuracy,preferred_label,biased\n";
    for (int d = 0; d < options.demo_sets; ++d) {
        for (int t = 0; t < options.templates; ++t) {
            const PromptSpec spec{demo_sets[static_cast<std::size_t>(d)], templates[static_cast<std::size_t>(t)]};
            const ComponentReport rep = evaluate_components(in.weights, spec, in.test, eval);
            const std::string id = "d" + std::to_string(d) + "-t" + std::to_string(t);
            runs.push_back({{"id", id}, {"demo_set", d}, {"template", t}, {"report", report_to_json(rep)}});
            full.push_back(rep.full_accuracy);
            t1.push_back(rep.top1().accuracy);
            b1.push_back(rep.bottom1().accuracy);
            csv << id << ",full," << fmt(rep.full_accuracy) << ",,\n";
            for (const auto& c : rep.components) {
                csv << id << ',' << c.id.name() << ',' << fmt(c.accuracy) << ',' << c.preferred_label << ','
                    << (c.biased ? 1 : 0) << '\n';
            }
        }
    }
    Report r;
    r.json = {{"config", common_json(config)},
              {"demo_sets", options.demo_sets},
              {"templates", options.templates},
              {"runs", runs},
              {"aggregate", {{"full", mean_sd_json(full)}, {"oracle_t1", mean_sd_json(t1)}, {"oracle_b1", mean_sd_json(b1)}}}};
    r.csv = csv.str();
    return r;
}

namespace {

struct ReweightRun {
    double standard_kprime = 0.0;
    double standard_k = 0.0;
    double calib_plus = 0.0;
    double comp_rw = 0.0;
    nlohmann::json detail;
};

ReweightRun reweight_run(const Inputs& in, const RunConfig& config, const ReweightOptions& options, int run,
                         bool with_comp_rw) {
    if (config.k <= config.k_prime) throw UsageError("--k must exceed --k-prime");
    const Task& task = in.task;
    const auto subset = draw_labeled_subset(task.pool, task.n_labels, config.k, run_seed(config.seed, "pool", run));
    const DemoSplit split = split_examples(subset, task.n_labels, config.k_prime, run_seed(config.seed, "split", run));
    const Template& tmpl = task.templates.at(0);
    const PromptSpec short_prompt{split.demo, tmpl};
    const PromptSpec long_prompt{subset, tmpl};

    TrainConfig train;
    train.learning_rate = config.learning_rate;
    train.l1_lambda = config.l1_lambda;
    train.max_epochs = options.max_epochs;
    train.seed = config.seed;

    ReweightRun out;
    const ContributionCache test_cache = build_test_cache(in.weights, short_prompt, in.test, config.include_x0, config.threads);
    out.standard_kprime = evaluate_cache(test_cache).full_accuracy;
    out.standard_k = evaluate_components(in.weights, long_prompt, in.test, {config.include_x0, config.threads, 1.0}).full_accuracy;

    const ContributionCache train_cache =
        cache_train_contributions(in.weights, short_prompt, split.train, config.include_x0, config.threads);

    // Calib+ on the label-restricted probabilities of the K'-shot prompt.
    auto probs_of = [](const ContributionCache& cache) {
        std::vector<Vector> probs;
        for (std::size_t e = 0; e < cache.num_examples(); ++e) {
            probs.push_back(softmax_stable(std::span<const float>(cache.summed(e))));
        }
        return probs;
    };
    const CalibrationWeights cal = train_calibration(probs_of(train_cache), train_cache.gold, train);
    const auto test_probs = probs_of(test_cache);
    std::size_t cal_correct = 0;
    for (std::size_t e = 0; e < test_probs.size(); ++e) {
        if (calibrated_predict(test_probs[e], cal.v) == static_cast<std::size_t>(test_cache.gold[e])) ++cal_correct;
    }
    out.calib_plus = static_cast<double>(cal_correct) / static_cast<double>(test_probs.size());

    out.detail = {{"run", run},
                  {"k", config.k},
                  {"k_prime", config.k_prime},
                  {"train_size", split.train.size()},
                  {"standard_kprime", out.standard_kprime},
                  {"standard_k", out.standard_k},
                  {"calib_plus", out.calib_plus},
                  {"calibration", calibration_weights_to_json(cal, tmpl.verbalizer, train)}};
    if (with_comp_rw) {
        const ComponentWeights cw = train_component_weights(train_cache, train);
        out.comp_rw = reweighted_accuracy(test_cache, cw.w);
        out.detail["comp_rw"] = out.comp_rw;
        out.detail["component_weights"] = component_weights_to_json(cw, train);
    }
    return out;
}

Report reweight_report(const RunConfig& config, const ReweightOptions& options, bool with_comp_rw) {
    if (options.runs < 1) throw UsageError("--runs must be positive");
    const Inputs in = load_inputs(config);
    std::vector<double> kprime, kfull, calib, comp;
    nlohmann::json runs = nlohmann::json::array();
    std::ostringstream csv;
    csv << "run,standard_kprime,standard_k,calib_plus" << (with_comp_rw ? ",comp_rw" : "") << '\n';
    for (int r = 0; r < options.runs; ++r) {
        const ReweightRun run = reweight_run(in, config, options, r, with_comp_rw);
        kprime.push_back(run.standard_kprime);
        kfull.push_back(run.standard_k);
        calib.push_back(run.calib_plus);
        comp.push_back(run.comp_rw);
        runs.push_back(run.detail);
        csv << r << ',' << fmt(run.standard_kprime) << ',' << fmt(run.standard_k) << ',' << fmt(run.calib_plus);
        if (with_comp_rw) csv << ',' << fmt(run.comp_rw);
        csv << '\n';
    }
    nlohmann::json summary = {{"standard_kprime", mean_sd_json(kprime)},
                              {"standard_k", mean_sd_json(kfull)},
                              {"calib_plus", mean_sd_json(calib)}};
    Report rep;
    rep.json = {{"config", common_json(config)},
                {"lambda", config.l1_lambda},
                {"learning_rate", config.learning_rate},
                {"runs", runs}};
    if (with_comp_rw) {
        summary["comp_rw"] = mean_sd_json(comp);
        if (options.runs >= 2) {
            nlohmann::json tests;
            const std::pair<const char*, const std::vector<double>*> baselines[] = {
                {"standard_kprime", &kprime}, {"standard_k", &kfull}, {"calib_plus", &calib}};
            for (const auto& [name, values] : baselines) {
                try {
                    const TTestResult t = paired_t_test_one_tailed(comp, *values);
                    tests[std::string("comp_rw_vs_") + name] = {{"t", t.t}, {"p_value", t.p_value}, {"dof", t.dof}};
                } catch (const DegenerateStatisticError& e) {
                    tests[std::string("comp_rw_vs_") + name] = {{"error", e.what()}};
                }
            }
            rep.json["t_tests"] = tests;
        }
    }
    rep.json["summary"] = summary;
    rep.csv = csv.str();
    return rep;
}

}  // namespace

Report cmd_reweight(const RunConfig& config, const ReweightOptions& options) {
    return reweight_report(config, options, true);
}

Report cmd_calibrate(const RunConfig& config, const ReweightOptions& options) {
    return reweight_report(config, options, false);
}

Report cmd_prompt_select(const RunConfig& config) {
    const Inputs in = load_inputs(config);
    const Task& task = in.task;
    const Template& tmpl = task.templates.at(0);
    const Embedder embed = token_mean_embedder(in.weights);
    const auto random_demos = sample_demonstrations(task.pool, task.n_labels, config.k, DemoMode::balanced(),
                                                    substream_seed(config.seed, "demos"));

    std::vector<int> selected_hit(in.test.size()), random_hit(in.test.size());
    parallel_for(in.test.size(), config.threads, [&](std::size_t i) {
        const LabeledExample& ex = in.test[i];
        const auto idx = prompt_selection(task.pool, ex.input, config.k, embed);
        PromptSpec spec{{}, tmpl};
        // most similar demonstration sits next to the query
        for (auto it = idx.rbegin(); it != idx.rend(); ++it) spec.demonstrations.push_back(task.pool[*it]);
        const auto sel = assemble_prompt(spec, ex.input, in.weights.config.max_seq);
        selected_hit[i] = restricted_argmax(forward_standard(in.weights, sel.tokens), tmpl.verbalizer) ==
                          static_cast<std::size_t>(ex.label);
        const auto rnd = assemble_prompt({random_demos, tmpl}, ex.input, in.weights.config.max_seq);
        random_hit[i] = restricted_argmax(forward_standard(in.weights, rnd.tokens), tmpl.verbalizer) ==
                        static_cast<std::size_t>(ex.label);
    });
    const auto mean = [](const std::vector<int>& v) {
        return static_cast<double>(std::accumulate(v.begin(), v.end(), 0)) / static_cast<double>(v.size());
    };
    Report r;
    r.json = {{"config", common_json(config)},
              {"embedder", "token-mean"},
              {"prompt_select_accuracy", mean(selected_hit)},
              {"random_demos_accuracy", mean(random_hit)}};
    return r;
}

Report cmd_agreement(const RunConfig& config, const AgreementCommandOptions& options) {
    const Variation variation = variation_from_string(options.variation);
    if (variation != Variation::ContrastTemplates && options.runs < 2) {
        throw UsageError("agreement needs at least 2 runs for variation " + options.variation);
    }
    if (options.runs < 1) throw UsageError("--runs must be positive");
    const Inputs in = load_inputs(config);
    AgreementOptions opts;
    opts.k_prime = config.k_prime;
    opts.test_size = config.test_size;
    opts.top_k = options.top_k;
    opts.include_x0 = config.include_x0;
    opts.threads = config.threads;
    opts.seed = config.seed;
    const AgreementExperiment exp = agreement_experiment(in.weights, in.task, variation, options.runs, opts);
    Report r;
    r.json = agreement_to_json(exp);
    r.json["config"] = common_json(config);
    std::ostringstream csv;
    csv << "run_a,run_b,pearson,top_k_iou\n";
    for (const auto& p : exp.pairs) {
        csv << p.run_a << ',' << p.run_b << ',' << (p.pearson ? fmt(*p.pearson) : "") << ',' << fmt(p.iou) << '\n';
    }
    r.csv = csv.str();
    return r;
}

Report cmd_transfer(const RunConfig& config, const TransferOptions& options) {
    const TransferMode mode = transfer_mode_from_string(options.mode);
    if (options.targets < 1) throw UsageError("--targets must be positive");
    const Inputs in = load_inputs(config);
    const auto templates = task_templates(in.task, options.targets + 1, config.seed);
    const auto sets = sample_disjoint_demo_sets(in.task.pool, in.task.n_labels, config.k, options.targets + 1,
                                                substream_seed(config.seed, "demos"));
    const EvaluationOptions eval{config.include_x0, config.threads, 1.0};

    const ComponentReport source = evaluate_components(in.weights, {sets[0], templates[0]}, in.test, eval);
    const ComponentId chosen = transfer_select(source, mode);
    nlohmann::json targets = nlohmann::json::array();
    std::vector<double> transferred, full, oracle;
    std::ostringstream csv;
    csv << "target,transferred_accuracy,full_accuracy,target_oracle_accuracy\n";
    for (int t = 1; t <= options.targets; ++t) {
        const ComponentReport rep = evaluate_components(
            in.weights, {sets[static_cast<std::size_t>(t)], templates[static_cast<std::size_t>(t)]}, in.test, eval);
        double acc = 0.0;
        for (const auto& c : rep.components) {
            if (c.id == chosen) acc = c.accuracy;
        }
        const double oracle_acc = mode == TransferMode::Best ? rep.top1().accuracy : rep.bottom1().accuracy;
        transferred.push_back(acc);
        full.push_back(rep.full_accuracy);
        oracle.push_back(oracle_acc);
        targets.push_back({{"target", t}, {"transferred_accuracy", acc}, {"full_accuracy", rep.full_accuracy},
                           {"target_oracle_accuracy", oracle_acc}});
        csv << t << ',' << fmt(acc) << ',' << fmt(rep.full_accuracy) << ',' << fmt(oracle_acc) << '\n';
    }
    Report r;
    r.json = {{"config", common_json(config)},
              {"mode", options.mode},
              {"component", chosen.name()},
              {"source_accuracy", (mode == TransferMode::Best ? source.top1() : source.bottom1()).accuracy},
              {"source_full_accuracy", source.full_accuracy},
              {"targets", targets},
              {"summary",
               {{"transferred", mean_sd_json(transferred)}, {"full", mean_sd_json(full)}, {"target_oracle", mean_sd_json(oracle)}}}};
    r.csv = csv.str();
    return r;
}

Report cmd_prune(const RunConfig& config, const PruneOptions& options) {
    const Inputs in = load_inputs(config);
    const auto demos = sample_demonstrations(in.task.pool, in.task.n_labels, config.k, DemoMode::balanced(),
                                             substream_seed(config.seed, "demos"));
    const PromptSpec spec{demos, in.task.templates.at(0)};
    // x0 can never be pruned, so ranking always excludes it.
    const ComponentReport rep = evaluate_components(in.weights, spec, in.test, {false, config.threads, 1.0});
    const auto n = static_cast<int>(rep.components.size());
    if (options.top < 0 || options.bottom < 0 || options.top > n || options.bottom > n) {
        throw UsageError("--top/--bottom must lie in [0, " + std::to_string(n) + "]");
    }
    std::vector<std::size_t> order(rep.components.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rep.components[a].accuracy > rep.components[b].accuracy;
    });
    std::vector<std::size_t> ascending(order.size());
    std::iota(ascending.begin(), ascending.end(), 0);
    std::stable_sort(ascending.begin(), ascending.end(), [&](std::size_t a, std::size_t b) {
        return rep.components[a].accuracy < rep.components[b].accuracy;
    });

    auto prune = [&](const std::vector<std::size_t>& ranked, int count) {
        std::vector<ComponentId> ids;
        for (int i = 0; i < count; ++i) ids.push_back(rep.components[ranked[static_cast<std::size_t>(i)]].id);
        const PruneResult result = prune_forward(in.weights, spec, in.test, ids, config.threads);
        nlohmann::json names = nlohmann::json::array();
        for (const auto& id : ids) names.push_back(id.name());
        return std::make_pair(result.accuracy, nlohmann::json{{"components", names}, {"accuracy", result.accuracy}});
    };
    const auto [top_acc, top_json] = prune(order, options.top);
    const auto [bottom_acc, bottom_json] = prune(ascending, options.bottom);

    Report r;
    r.json = {{"config", common_json(config)},
              {"full_accuracy", rep.full_accuracy},
              {"prune_top", top_json},
              {"prune_bottom", bottom_json}};
    std::ostringstream csv;
    csv << "setting,count,accuracy\n"
        << "full,0," << fmt(rep.full_accuracy) << '\n'
        << "prune_top," << options.top << ',' << fmt(top_acc) << '\n'
        << "prune_bottom," << options.bottom << ',' << fmt(bottom_acc) << '\n';
    r.csv = csv.str();
    return r;
}

Report cmd_dynamics(const RunConfig& config, const DynamicsOptions& options) {
    if (options.checkpoint_dir.empty()) throw UsageError("--checkpoints is required");
    if (config.task.empty()) throw UsageError("--task is required");
    if (options.prompt_seeds < 1) throw UsageError("--prompt-seeds must be positive");
    const std::vector<Checkpoint> checkpoints = load_checkpoints(options.checkpoint_dir);
    const Task task = load_task(config.task);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < options.prompt_seeds; ++i) seeds.push_back(run_seed(config.seed, "demos", i));
    SweepOptions sweep;
    sweep.k_prime = config.k_prime;
    sweep.test_size = config.test_size;
    sweep.include_x0 = config.include_x0;
    sweep.threads = config.threads;
    const DynamicsCurve curve =
        sweep_dynamics(checkpoints, task, seeds, task_templates(task, options.templates, config.seed), sweep);
    Report r;
    r.json = curve_to_json(curve);
    r.json["config"] = common_json(config);
    r.csv = curve_to_csv(curve);
    return r;
}

}  // namespace resdecomp
