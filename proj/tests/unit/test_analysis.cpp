#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "resdecomp/analysis.hpp"
#include "resdecomp/errors.hpp"

using namespace resdecomp;

namespace {

double two_pass_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// brute force: rank of i = number of entries that beat it
std::set<std::size_t> brute_top_k(const std::vector<double>& v, int k) {
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        int beaten = 0;
        for (std::size_t j = 0; j < v.size(); ++j)
            if (v[j] > v[i] || (v[j] == v[i] && j < i)) ++beaten;
        if (beaten < k) out.insert(i);
    }
    return out;
}

}  // namespace

TEST_CASE("pearson matches a two-pass oracle") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(3 + trial), b(3 + trial);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = n(gen);
            b[i] = 0.3 * a[i] + n(gen);
        }
        CHECK(pearson(a, b) == doctest::Approx(two_pass_pearson(a, b)).epsilon(1e-12));
        CHECK(std::abs(pearson(a, b)) <= 1.0);
    }
    const std::vector<double> x{1, 2, 3}, flat{2, 2, 2};
    CHECK(pearson(x, x) == doctest::Approx(1.0));
    CHECK_THROWS_AS(pearson(x, flat), DegenerateStatisticError);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("top-k IoU matches brute force with ties") {
    std::mt19937_64 gen(6);
    std::uniform_int_distribution<int> coarse(0, 4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 6 + static_cast<std::size_t>(trial % 15);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = coarse(gen) / 4.0;
            b[i] = coarse(gen) / 4.0;
        }
        const auto sa = brute_top_k(a, 5), sb = brute_top_k(b, 5);
        std::set<std::size_t> inter, uni = sa;
        for (auto i : sb) {
            if (sa.count(i)) inter.insert(i);
            uni.insert(i);
        }
        CHECK(top_k_iou(a, b, 5) == doctest::Approx(static_cast<double>(inter.size()) / uni.size()));
        const auto ia = top_k_indices(a, 5);
        CHECK(std::set<std::size_t>(ia.begin(), ia.end()) == sa);
        CHECK(top_k_iou(a, a, 5) == 1.0);
    }
    CHECK_THROWS_AS(top_k_iou(std::vector<double>{1, 2}, std::vector<double>{1, 2}, 3), InputError);
}

TEST_CASE("paired t-test matches numerical integration") {
    const std::vector<double> zero{0, 0, 0, 0};
    const TTestResult r = paired_t_test_one_tailed(std::vector<double>{1, 2, 3, 4}, zero);
    // mean 2.5, sd sqrt(5/3), t = 2.5 / (sd / 2)
    CHECK(r.t == doctest::Approx(2.5 / (std::sqrt(5.0 / 3.0) / 2.0)));
    CHECK(r.dof == 3);
    CHECK(r.p_value == doctest::Approx(oracle::t_upper_tail(r.t, 3)).epsilon(1e-6));
    CHECK(r.p_value == doctest::Approx(0.0152).epsilon(0.01));

    std::mt19937_64 gen(7);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> a(2 + trial % 12), b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = n(gen) + 0.2;
            b[i] = n(gen);
        }
        const TTestResult t = paired_t_test_one_tailed(a, b);
        CHECK(t.p_value == doctest::Approx(oracle::t_upper_tail(t.t, t.dof)).epsilon(1e-6));
        // swapping the arguments reflects the tail
        CHECK(paired_t_test_one_tailed(b, a).p_value == doctest::Approx(1.0 - t.p_value).epsilon(1e-9));
    }
    CHECK(paired_t_test_one_tailed(zero, zero).p_value == 0.5);
    CHECK_THROWS_AS(paired_t_test_one_tailed(std::vector<double>{1, 1}, std::vector<double>{0, 0}),
                    DegenerateStatisticError);
    CHECK_THROWS_AS(paired_t_test_one_tailed(std::vector<double>{1}, std::vector<double>{0}), InputError);
}

TEST_CASE("a component that always predicts one label is flagged as biased") {
    for (int labels = 2; labels <= 5; ++labels) {
        const auto cache = synthetic::always_label0_cache(10 * labels, labels);
        const ComponentReport rep = evaluate_cache(cache);
        const ComponentStats& s = rep.components[0];
        CHECK(s.accuracy == doctest::Approx(1.0 / labels));
        CHECK(s.biased);
        CHECK(s.preferred_label == 0);
        CHECK(rep.components[1].accuracy == 1.0);
        CHECK_FALSE(rep.components[1].biased);
        CHECK(rep.oracle_t1 == 1);
        CHECK(rep.oracle_b1 == 0);
    }
}

TEST_CASE("evaluate_cache on a hand-built cache") {
    ContributionCache c;
    c.components = {ComponentId::attention_head(0, 0), ComponentId::attention_head(0, 1), ComponentId::mlp(0)};
    c.label_words = {4, 5};
    // example 0 gold 0, example 1 gold 1
    c.append("a", 0, {{1, 0, 0, 2, 0.5f, 0}, {0, 0}, {}});
    c.append("b", 1, {{0, 1, 0, 2, 3, 0}, {1, 0}, {}});
    const ComponentReport r = evaluate_cache(c);
    CHECK(r.components[0].accuracy == 1.0);
    CHECK(r.components[1].accuracy == 0.5);
    CHECK(r.components[2].accuracy == 0.5);
    // sums: a -> (1.5, 2) wrong; b -> (4, 3) wrong
    CHECK(r.full_accuracy == 0.0);
    CHECK(r.oracle_t1 == 0);
    CHECK(r.oracle_b1 == 1);  // first of the tied minimum
    CHECK(component_accuracy(c, ComponentId::attention_head(0, 0)) == 1.0);
    CHECK_THROWS_AS(component_accuracy(c, ComponentId::mlp(3)), InputError);
    CHECK(transfer_select(r, TransferMode::Best) == ComponentId::attention_head(0, 0));
    CHECK(transfer_select(r, TransferMode::Worst) == ComponentId::attention_head(0, 1));
    CHECK_THROWS_AS(evaluate_cache(ContributionCache{}), InputError);
}

namespace {

struct Fixture {
    ModelConfig cfg = oracle::small_config(2, 2, 4, 24, 48);
    TransformerWeights w = init_random(cfg, 11);
    Task task = generate_pattern_task(3, 4, 2, 24);
    PromptSpec prompt;

    Fixture() {
        prompt.demonstrations = sample_demonstrations(task.pool, 2, 4, DemoMode::balanced(), 1);
        prompt.tmpl = task.templates[0];
    }
};

std::vector<bool> flags(std::size_t n, std::initializer_list<std::size_t> on) {
    std::vector<bool> f(n, false);
    for (auto i : on) f[i] = true;
    return f;
}

int oracle_prediction(const TransformerWeights& w, const std::vector<TokenId>& tokens, const Template& t,
                      const std::vector<bool>& zh, const std::vector<bool>& zm) {
    const auto ref = oracle::forward(w, tokens, zh, zm);
    int best = 0;
    for (std::size_t c = 1; c < t.verbalizer.size(); ++c)
        if (ref.logits[static_cast<std::size_t>(t.verbalizer[c])] > ref.logits[static_cast<std::size_t>(t.verbalizer[best])])
            best = static_cast<int>(c);
    return best;
}

}  // namespace

TEST_CASE("prune_forward matches an oracle forward with zeroed components") {
    Fixture f;
    const std::vector<ComponentId> mask{ComponentId::attention_head(0, 1), ComponentId::mlp(1)};
    const PruneResult r = prune_forward(f.w, f.prompt, f.task.examples, mask);
    REQUIRE(r.predictions.size() == f.task.examples.size());
    int correct = 0;
    for (std::size_t i = 0; i < f.task.examples.size(); ++i) {
        const auto p = assemble_prompt(f.prompt, f.task.examples[i].input, f.cfg.max_seq);
        const int want = oracle_prediction(f.w, p.tokens, f.prompt.tmpl, flags(4, {1}), flags(2, {1}));
        CHECK(r.predictions[i] == want);
        correct += want == f.task.examples[i].label;
    }
    CHECK(r.accuracy == doctest::Approx(correct / static_cast<double>(f.task.examples.size())));
    const std::vector<ComponentId> x0{ComponentId::embedding()};
    CHECK_THROWS_AS(prune_forward(f.w, f.prompt, f.task.examples, x0), InputError);
}

TEST_CASE("pruning the final-layer MLP agrees with removing it from the cache") {
    // the final norm only rescales logits, so argmax after removal is exact
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Fixture f;
        f.w = init_random(f.cfg, seed);
        const ContributionCache cache = build_test_cache(f.w, f.prompt, f.task.examples, false, 1);
        const ComponentId last = ComponentId::mlp(f.cfg.layers - 1);
        const std::vector<ComponentId> mask{last};
        const PruneResult r = prune_forward(f.w, f.prompt, f.task.examples, mask);
        const auto j = static_cast<std::size_t>(
            std::find(cache.components.begin(), cache.components.end(), last) - cache.components.begin());
        for (std::size_t e = 0; e < cache.num_examples(); ++e) {
            const Vector full = cache.summed(e);
            const Vector removed = remove_component_cached(full, cache.contribution(e, j));
            CHECK(static_cast<int>(argmax(std::span<const float>(removed))) == r.predictions[e]);
        }
    }
}

TEST_CASE("uniform attention spreads mass evenly over label tokens") {
    Fixture f;
    // zero queries give uniform causal attention at every position
    for (auto& layer : f.w.layers) layer.w_q = Matrix(layer.w_q.rows(), layer.w_q.cols());
    std::vector<AssembledPrompt> prompts;
    std::vector<int> gold;
    double expect = 0;
    for (const auto& ex : f.task.examples) {
        prompts.push_back(assemble_prompt(f.prompt, ex.input, f.cfg.max_seq));
        gold.push_back(ex.label);
        expect += 1.0 / static_cast<double>(prompts.back().tokens.size());
    }
    expect /= static_cast<double>(prompts.size());
    const auto a = attention_label_attribution(f.w, prompts, gold, f.prompt.tmpl.verbalizer, 1, 0);
    for (double m : a.mean_attention) CHECK(m == doctest::Approx(expect).epsilon(1e-5));
    CHECK(a.correct_higher_fraction == 0.0);
    CHECK(a.attention_logit_r.size() == 2);
    CHECK_THROWS_AS(attention_label_attribution(f.w, prompts, gold, f.prompt.tmpl.verbalizer, 2, 0), IndexError);
}

TEST_CASE("attribution values are bounded on a random model") {
    Fixture f;
    std::vector<AssembledPrompt> prompts;
    std::vector<int> gold;
    for (const auto& ex : f.task.examples) {
        prompts.push_back(assemble_prompt(f.prompt, ex.input, f.cfg.max_seq));
        gold.push_back(ex.label);
    }
    const auto a = attention_label_attribution(f.w, prompts, gold, f.prompt.tmpl.verbalizer, 0, 1);
    double total = 0;
    for (double m : a.mean_attention) {
        CHECK(m >= 0.0);
        total += m;
    }
    CHECK(total <= 1.0 + 1e-6);
    CHECK(a.correct_higher_fraction >= 0.0);
    CHECK(a.correct_higher_fraction <= 1.0);
    for (const auto& r : a.attention_logit_r)
        if (r) CHECK(std::abs(*r) <= 1.0);
}

TEST_CASE("agreement experiment produces every pair") {
    Fixture f;
    AgreementOptions opt;
    opt.test_size = 16;
    for (int runs : {2, 3, 4}) {
        const auto e = agreement_experiment(f.w, f.task, Variation::Templates, runs, opt);
        CHECK(e.run_ids.size() == static_cast<std::size_t>(runs));
        CHECK(e.pairs.size() == static_cast<std::size_t>(runs * (runs - 1) / 2));
        for (const auto& p : e.pairs) {
            CHECK(p.iou >= 0.0);
            CHECK(p.iou <= 1.0);
        }
    }
    const auto c = agreement_experiment(f.w, f.task, Variation::ContrastTemplates, 3, opt);
    CHECK(c.pairs.size() == 3);
    CHECK(variation_from_string("contrast") == Variation::ContrastTemplates);
    CHECK_THROWS_AS(variation_from_string("nope"), InputError);
}

TEST_CASE("agreement is deterministic for a fixed seed") {
    Fixture f;
    AgreementOptions opt;
    opt.test_size = 16;
    opt.seed = 9;
    const auto a = agreement_to_json(agreement_experiment(f.w, f.task, Variation::Demos, 3, opt));
    opt.threads = 3;
    const auto b = agreement_to_json(agreement_experiment(f.w, f.task, Variation::Demos, 3, opt));
    CHECK(a == b);
}
