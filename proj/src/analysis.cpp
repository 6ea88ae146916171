#include "resdecomp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "resdecomp/errors.hpp"
#include "resdecomp/parallel.hpp"
#include "resdecomp/reweighting.hpp"
#include "resdecomp/rng.hpp"

namespace resdecomp {

std::vector<double> ComponentReport::accuracies() const {
    std::vector<double> out;
    out.reserve(components.size());
    for (const auto& c : components) out.push_back(c.accuracy);
    return out;
}

ComponentReport evaluate_cache(const ContributionCache& cache, double bias_threshold) {
    cache.validate();
    if (cache.num_examples() == 0) {
        throw InputError("evaluate_cache: empty test set");
    }
    const std::size_t n = cache.num_examples();
    const std::size_t y = cache.num_labels();
    const double inv_n = 1.0 / static_cast<double>(n);

    ComponentReport report;
    report.n_examples = n;
    report.bias_threshold = bias_threshold;
    for (std::size_t j = 0; j < cache.num_components(); ++j) {
        ComponentStats s;
        s.id = cache.components[j];
        s.label_frequency.assign(y, 0.0);
        std::size_t correct = 0;
        std::vector<std::size_t> counts(y, 0);
        for (std::size_t e = 0; e < n; ++e) {
            const std::size_t pred = component_prediction(cache.contribution(e, j));
            ++counts[pred];
            if (pred == static_cast<std::size_t>(cache.gold[e])) ++correct;
        }
        // divide rather than multiply by 1/n so that e.g. 30/90 == 1.0/3 exactly
        for (std::size_t c = 0; c < y; ++c) s.label_frequency[c] = static_cast<double>(counts[c]) / static_cast<double>(n);
        s.accuracy = static_cast<double>(correct) / static_cast<double>(n);
        s.preferred_label = static_cast<int>(argmax(std::span<const double>(s.label_frequency)));
        // counts are exact multiples of 1/n; compare with a half-example margin
        s.biased = s.label_frequency[static_cast<std::size_t>(s.preferred_label)] >= bias_threshold - 0.5 * inv_n;
        report.components.push_back(std::move(s));
    }

    report.full_label_frequency.assign(y, 0.0);
    std::size_t full_correct = 0;
    std::vector<std::size_t> full_counts(y, 0);
    for (std::size_t e = 0; e < n; ++e) {
        const Vector total = cache.summed(e);
        const std::size_t pred = argmax(std::span<const float>(total));
        ++full_counts[pred];
        if (pred == static_cast<std::size_t>(cache.gold[e])) ++full_correct;
    }
    for (std::size_t c = 0; c < y; ++c) report.full_label_frequency[c] = static_cast<double>(full_counts[c]) / static_cast<double>(n);
    report.full_accuracy = static_cast<double>(full_correct) / static_cast<double>(n);

    for (std::size_t j = 1; j < report.components.size(); ++j) {
        if (report.components[j].accuracy > report.components[report.oracle_t1].accuracy) report.oracle_t1 = j;
        if (report.components[j].accuracy < report.components[report.oracle_b1].accuracy) report.oracle_b1 = j;
    }
    return report;
}

ContributionCache build_test_cache(const TransformerWeights& weights, const PromptSpec& prompt,
                                   std::span<const LabeledExample> test_set, bool include_x0, int threads) {
    if (test_set.empty()) throw InputError("evaluation needs a nonempty test set");
    return cache_train_contributions(weights, prompt, test_set, include_x0, threads, "test");
}

ComponentReport evaluate_components(const TransformerWeights& weights, const PromptSpec& prompt,
                                    std::span<const LabeledExample> test_set, const EvaluationOptions& options) {
    const ContributionCache cache = build_test_cache(weights, prompt, test_set, options.include_x0, options.threads);
    return evaluate_cache(cache, options.bias_threshold);
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("pearson: length mismatch");
    if (a.size() < 2) throw InputError("pearson: need at least two points");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        throw DegenerateStatisticError("pearson: zero variance input");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<std::size_t> top_k_indices(std::span<const double> values, int k) {
    if (k <= 0) throw InputError("top-k: k must be positive");
    if (static_cast<std::size_t>(k) > values.size()) throw InputError("top-k: k exceeds number of components");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] > values[y]; });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

double top_k_iou(std::span<const double> a, std::span<const double> b, int k) {
    if (a.size() != b.size()) throw DimensionError("top_k_iou: length mismatch");
    const auto ta = top_k_indices(a, k);
    const auto tb = top_k_indices(b, k);
    std::vector<std::size_t> inter, uni;
    std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(inter));
    std::set_union(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(uni));
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

TransferMode transfer_mode_from_string(const std::string& text) {
    if (text == "best") return TransferMode::Best;
    if (text == "worst") return TransferMode::Worst;
    throw InputError("transfer mode must be 'best' or 'worst'");
}

ComponentId transfer_select(const ComponentReport& report, TransferMode mode) {
    if (report.components.empty()) throw InputError("transfer_select: empty report");
    return mode == TransferMode::Best ? report.top1().id : report.bottom1().id;
}

double component_accuracy(const ContributionCache& cache, const ComponentId& id) {
    const auto it = std::find(cache.components.begin(), cache.components.end(), id);
    if (it == cache.components.end()) throw InputError("component " + id.name() + " not in cache");
    const auto j = static_cast<std::size_t>(it - cache.components.begin());
    if (cache.num_examples() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t e = 0; e < cache.num_examples(); ++e) {
        if (component_prediction(cache.contribution(e, j)) == static_cast<std::size_t>(cache.gold[e])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(cache.num_examples());
}

PruneResult prune_forward(const TransformerWeights& weights, const PromptSpec& prompt,
                          std::span<const LabeledExample> test_set, std::span<const ComponentId> mask_ids,
                          int threads) {
    if (test_set.empty()) throw InputError("prune_forward: empty test set");
    const ModelConfig& cfg = weights.config;
    ComponentMask mask = ComponentMask::none(cfg);
    for (const ComponentId& id : mask_ids) {
        id.validate(cfg);
        if (id.is_embedding()) throw InputError("prune_forward: the embedding state cannot be masked");
        if (id.kind == ComponentId::Kind::Head) {
            mask.heads[static_cast<std::size_t>(id.layer * cfg.heads + id.head)] = true;
        } else {
            mask.mlps[static_cast<std::size_t>(id.layer)] = true;
        }
    }
    const auto& words = prompt.tmpl.verbalizer;
    PruneResult out;
    out.predictions.assign(test_set.size(), 0);
    parallel_for(test_set.size(), threads, [&](std::size_t i) {
        const AssembledPrompt p = assemble_prompt(prompt, test_set[i].input, cfg.max_seq);
        const ForwardResult r = forward_masked(weights, p.tokens, mask);
        Vector restricted(words.size());
        for (std::size_t c = 0; c < words.size(); ++c) restricted[c] = r.logits[static_cast<std::size_t>(words[c])];
        out.predictions[i] = static_cast<int>(argmax(std::span<const float>(restricted)));
    });
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        if (out.predictions[i] == test_set[i].label) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
    return out;
}

AttentionAttribution attention_label_attribution(const TransformerWeights& weights,
                                                 std::span<const AssembledPrompt> prompts,
                                                 std::span<const int> gold, std::span<const TokenId> label_words,
                                                 int layer, int head) {
    const ModelConfig& cfg = weights.config;
    if (layer < 0 || layer >= cfg.layers || head < 0 || head >= cfg.heads) {
        throw IndexError("attention_label_attribution: head out of range");
    }
    if (prompts.size() != gold.size() || prompts.empty()) {
        throw InputError("attention_label_attribution: need one gold label per prompt");
    }
    const std::size_t y = label_words.size();
    const Matrix u_y = select_rows(weights.output_embedding, label_words);
    const ComponentId id = ComponentId::attention_head(layer, head);

    // per label: attention mass (averaged over that label's tokens) and the head's direct logit
    std::vector<std::vector<double>> attn(y), logit(y);
    std::vector<double> attn_sum(y, 0.0);
    std::vector<int> attn_count(y, 0);
    std::size_t correct_higher = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const AssembledPrompt& p = prompts[i];
        if (p.label_positions.empty()) {
            throw InputError("attention_label_attribution: prompt records no label positions");
        }
        const ForwardResult r = forward_decomposed(weights, p.tokens);
        const Vector& pattern = r.attention[static_cast<std::size_t>(layer * cfg.heads + head)];
        const ComponentActivations acts = fold_final_layernorm(r.writes, weights.final_gamma, cfg.eps);
        const Vector g = early_decode(acts.activations[write_index(cfg, id)], u_y);

        std::vector<double> per_label(y, 0.0);
        std::vector<int> count(y, 0);
        for (std::size_t k = 0; k < p.label_positions.size(); ++k) {
            const auto c = static_cast<std::size_t>(p.label_classes[k]);
            per_label[c] += pattern[static_cast<std::size_t>(p.label_positions[k])];
            ++count[c];
        }
        bool higher = count[static_cast<std::size_t>(gold[i])] > 0;
        for (std::size_t c = 0; c < y; ++c) {
            if (count[c] == 0) continue;
            per_label[c] /= count[c];
            attn[c].push_back(per_label[c]);
            logit[c].push_back(g[c]);
            attn_sum[c] += per_label[c];
            ++attn_count[c];
        }
        for (std::size_t c = 0; c < y && higher; ++c) {
            if (c != static_cast<std::size_t>(gold[i]) && count[c] > 0 &&
                per_label[c] >= per_label[static_cast<std::size_t>(gold[i])]) {
                higher = false;
            }
        }
        if (higher) ++correct_higher;
    }

    AttentionAttribution out;
    out.layer = layer;
    out.head = head;
    out.correct_higher_fraction = static_cast<double>(correct_higher) / static_cast<double>(prompts.size());
    for (std::size_t c = 0; c < y; ++c) {
        out.mean_attention.push_back(attn_count[c] > 0 ? attn_sum[c] / attn_count[c] : 0.0);
        try {
            out.attention_logit_r.emplace_back(pearson(attn[c], logit[c]));
        } catch (const Error&) {
            out.attention_logit_r.emplace_back(std::nullopt);
        }
    }
    return out;
}

TTestResult paired_t_test_one_tailed(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("paired t-test: length mismatch");
    const std::size_t m = a.size();
    if (m < 2) throw InputError("paired t-test: need at least two pairs");
    std::vector<double> d(m);
    for (std::size_t i = 0; i < m; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(m);
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(m - 1));
    TTestResult out;
    out.dof = static_cast<int>(m - 1);
    if (sd == 0.0) {
        if (mean != 0.0) {
            throw DegenerateStatisticError("paired t-test: constant nonzero differences");
        }
        return out;
    }
    out.t = mean / (sd / std::sqrt(static_cast<double>(m)));
    const boost::math::students_t dist(static_cast<double>(out.dof));
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.t));
    return out;
}

std::vector<AgreementReport> pairwise_agreement(const std::vector<ComponentReport>& runs,
                                                const std::vector<std::string>& run_ids, int k) {
    if (runs.size() != run_ids.size()) throw InputError("pairwise_agreement: one id per run required");
    std::vector<AgreementReport> out;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            const auto a = runs[i].accuracies();
            const auto b = runs[j].accuracies();
            AgreementReport r;
            r.run_a = run_ids[i];
            r.run_b = run_ids[j];
            r.k = k;
            try {
                r.pearson = pearson(a, b);
            } catch (const DegenerateStatisticError&) {
                r.pearson.reset();
            }
            r.iou = top_k_iou(a, b, k);
            out.push_back(std::move(r));
        }
    }
    return out;
}

Variation variation_from_string(const std::string& text) {
    if (text == "demos") return Variation::Demos;
    if (text == "templates") return Variation::Templates;
    if (text == "contrast_templates" || text == "contrast") return Variation::ContrastTemplates;
    throw InputError("variation must be demos, templates, or contrast_templates");
}

std::string to_string(Variation v) {
    switch (v) {
        case Variation::Demos: return "demos";
        case Variation::Templates: return "templates";
        case Variation::ContrastTemplates: return "contrast_templates";
    }
    return "?";
}

namespace {

void summarize(AgreementExperiment& exp) {
    double r_sum = 0.0, iou_sum = 0.0;
    int r_count = 0;
    for (const auto& p : exp.pairs) {
        if (p.pearson) {
            r_sum += *p.pearson;
            ++r_count;
        }
        iou_sum += p.iou;
    }
    if (r_count > 0) exp.mean_pearson = r_sum / r_count;
    if (!exp.pairs.empty()) exp.mean_iou = iou_sum / static_cast<double>(exp.pairs.size());
}

}  // namespace

AgreementExperiment agreement_experiment(const TransformerWeights& weights, const Task& task, Variation variation,
                                         int runs, const AgreementOptions& options) {
    if (runs < 2 && variation != Variation::ContrastTemplates) {
        throw InputError("agreement experiment needs at least 2 runs");
    }
    if (runs < 1) throw InputError("agreement experiment needs at least 1 contrast pair");
    if (task.templates.empty()) throw InputError("task has no templates");
    const auto test_size = std::min<std::size_t>(static_cast<std::size_t>(options.test_size), task.examples.size());
    const std::span<const LabeledExample> test(task.examples.data(), test_size);
    EvaluationOptions eval{options.include_x0, options.threads, 1.0};

    AgreementExperiment exp;
    exp.variation = variation;
    std::vector<ComponentReport> reports;
    auto run = [&](const std::string& id, const PromptSpec& spec) {
        reports.push_back(evaluate_components(weights, spec, test, eval));
        exp.run_ids.push_back(id);
        exp.run_full_accuracy.push_back(reports.back().full_accuracy);
    };

    switch (variation) {
        case Variation::Demos: {
            const auto sets = sample_disjoint_demo_sets(task.pool, task.n_labels, options.k_prime, runs,
                                                        substream_seed(options.seed, "demos"));
            for (int r = 0; r < runs; ++r) run("demos-" + std::to_string(r), {sets[static_cast<std::size_t>(r)], task.templates[0]});
            exp.pairs = pairwise_agreement(reports, exp.run_ids, options.top_k);
            break;
        }
        case Variation::Templates: {
            std::vector<Template> templates = task.templates;
            Rng rng(substream_seed(options.seed, "template"));
            while (templates.size() < static_cast<std::size_t>(runs)) {
                templates.push_back(random_template(task.layout, task.n_labels, rng));
            }
            const auto demos = sample_demonstrations(task.pool, task.n_labels, options.k_prime, DemoMode::balanced(),
                                                     substream_seed(options.seed, "demos"));
            for (int r = 0; r < runs; ++r) run("template-" + std::to_string(r), {demos, templates[static_cast<std::size_t>(r)]});
            exp.pairs = pairwise_agreement(reports, exp.run_ids, options.top_k);
            break;
        }
        case Variation::ContrastTemplates: {
            const auto demos = sample_demonstrations(task.pool, task.n_labels, options.k_prime, DemoMode::balanced(),
                                                     substream_seed(options.seed, "demos"));
            const TemplateEdit edits[] = {TemplateEdit::AddSpace, TemplateEdit::DropNewline,
                                          TemplateEdit::SwapLabelWords};
            for (int r = 0; r < runs; ++r) {
                const Template& base = task.templates[static_cast<std::size_t>(r) % task.templates.size()];
                std::optional<Template> edited;
                std::string edit_name;
                for (int attempt = 0; attempt < 3 && !edited; ++attempt) {
                    const TemplateEdit e = edits[(r + attempt) % 3];
                    try {
                        edited = perturb_template(base, e);
                        edit_name = to_string(e);
                    } catch (const EditError&) {
                    }
                }
                const std::string id = "contrast-" + std::to_string(r);
                run(id + "-base", {demos, base});
                run(id + "-" + edit_name, {demos, *edited});
                const std::vector<ComponentReport> pair{reports[reports.size() - 2], reports.back()};
                const std::vector<std::string> ids{exp.run_ids[exp.run_ids.size() - 2], exp.run_ids.back()};
                const auto agreement = pairwise_agreement(pair, ids, options.top_k);
                exp.pairs.insert(exp.pairs.end(), agreement.begin(), agreement.end());
            }
            break;
        }
    }
    summarize(exp);
    return exp;
}

nlohmann::json report_to_json(const ComponentReport& report) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : report.components) {
        comps.push_back({{"id", c.id.name()},
                         {"accuracy", c.accuracy},
                         {"label_frequency", c.label_frequency},
                         {"preferred_label", c.preferred_label},
                         {"biased", c.biased}});
    }
    return {{"n_examples", report.n_examples},
            {"full_accuracy", report.full_accuracy},
            {"full_label_frequency", report.full_label_frequency},
            {"bias_threshold", report.bias_threshold},
            {"oracle_t1", {{"id", report.top1().id.name()}, {"accuracy", report.top1().accuracy}}},
            {"oracle_b1", {{"id", report.bottom1().id.name()}, {"accuracy", report.bottom1().accuracy}}},
            {"components", comps}};
}

std::string report_to_csv(const ComponentReport& report) {
    std::ostringstream out;
    const std::size_t y = report.full_label_frequency.size();
    out << "component,accuracy,preferred_label,biased";
    for (std::size_t c = 0; c < y; ++c) out << ",freq_" << c;
    out << "\n";
    out.precision(17);
    for (const auto& s : report.components) {
        out << s.id.name() << ',' << s.accuracy << ',' << s.preferred_label << ',' << (s.biased ? 1 : 0);
        for (double f : s.label_frequency) out << ',' << f;
        out << "\n";
    }
    return out.str();
}

nlohmann::json agreement_to_json(const AgreementExperiment& exp) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : exp.pairs) {
        pairs.push_back({{"run_a", p.run_a},
                         {"run_b", p.run_b},
                         {"pearson", p.pearson ? nlohmann::json(*p.pearson) : nlohmann::json(nullptr)},
                         {"top_k_iou", p.iou},
                         {"k", p.k}});
    }
    return {{"variation", to_string(exp.variation)},
            {"runs", exp.run_ids},
            {"run_full_accuracy", exp.run_full_accuracy},
            {"pairs", pairs},
            {"mean_pearson", exp.mean_pearson ? nlohmann::json(*exp.mean_pearson) : nlohmann::json(nullptr)},
            {"mean_top_k_iou", exp.mean_iou},
            {"iou_tie_break", "descending accuracy, then ascending component order"}};
}

nlohmann::json attribution_to_json(const AttentionAttribution& a) {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : a.attention_logit_r) rs.push_back(r ? nlohmann::json(*r) : nlohmann::json(nullptr));
    return {{"head", ComponentId::attention_head(a.layer, a.head).name()},
            {"mean_attention_per_label", a.mean_attention},
            {"correct_label_higher_fraction", a.correct_higher_fraction},
            {"attention_logit_pearson", rs}};
}

}  // namespace resdecomp
