#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "oracles.hpp"
#include "resdecomp/errors.hpp"
#include "resdecomp/tasks.hpp"

using namespace resdecomp;

namespace {

std::map<int, int> label_counts(const std::vector<LabeledExample>& xs) {
    std::map<int, int> m;
    for (const auto& x : xs) ++m[x.label];
    return m;
}

}  // namespace

TEST_CASE("pattern task: a rule-based matcher recovers every label") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const int n_patterns = 2 + static_cast<int>(seed % 3);
        const Task task = generate_pattern_task(seed, n_patterns, 2, 64);
        // one demonstration per pattern, taken from the pool
        std::vector<LabeledExample> demos;
        std::set<TokenId> seen;
        for (const auto& ex : task.pool) {
            if (seen.insert(ex.input.back()).second) demos.push_back(ex);
        }
        REQUIRE(demos.size() == static_cast<std::size_t>(n_patterns));
        for (const auto& ex : task.examples) CHECK(oracle::match_pattern(demos, ex.input) == ex.label);
        const auto counts = label_counts(task.examples);
        CHECK(counts.at(0) == counts.at(1));
        CHECK(task.layout.vocab_size == 8 + 2 * 2 + n_patterns + 8);
    }
}

TEST_CASE("pattern task input layout") {
    TaskOptions opts;
    opts.input_len = 3;
    const Task task = generate_pattern_task(1, 2, 2, 16, opts);
    for (const auto& ex : task.examples) {
        REQUIRE(ex.input.size() == 3);
        const auto& fillers = task.content_groups[1];
        CHECK(std::find(fillers.begin(), fillers.end(), ex.input[0]) != fillers.end());
        const auto& patterns = task.content_groups[0];
        CHECK(std::find(patterns.begin(), patterns.end(), ex.input[2]) != patterns.end());
    }
}

TEST_CASE("majority task labels agree with a counting oracle") {
    TaskOptions opt;
    opt.pool_size = 63;
    const Task task = generate_majority_task(3, 3, 5, 60, opt);
    for (const auto& ex : task.examples) {
        std::vector<int> counts(3, 0);
        for (TokenId t : ex.input) {
            for (int c = 0; c < 3; ++c) {
                const auto& g = task.content_groups[static_cast<std::size_t>(c)];
                if (std::find(g.begin(), g.end(), t) != g.end()) ++counts[static_cast<std::size_t>(c)];
            }
        }
        const int top = *std::max_element(counts.begin(), counts.end());
        CHECK(std::count(counts.begin(), counts.end(), top) == 1);
        CHECK(counts[static_cast<std::size_t>(ex.label)] == top);
        CHECK(majority_label(task, ex.input) == ex.label);
    }
    CHECK(label_counts(task.examples).at(2) == 20);
}

TEST_CASE("task generation errors") {
    CHECK_THROWS_AS(generate_pattern_task(0, 1, 2, 10), InputError);
    CHECK_THROWS_AS(generate_pattern_task(0, 2, 1, 10), InputError);
    CHECK_THROWS_AS(generate_pattern_task(0, 2, 2, 11), InputError);
    CHECK_THROWS_AS(generate_majority_task(0, 2, 4, 10), InputError);
}

TEST_CASE("generation is deterministic and JSON round-trips") {
    const Task a = generate_pattern_task(9, 3, 2, 32);
    const Task b = generate_pattern_task(9, 3, 2, 32);
    CHECK(task_to_json(a) == task_to_json(b));
    CHECK(task_to_json(a) != task_to_json(generate_pattern_task(10, 3, 2, 32)));
    const auto path = std::filesystem::temp_directory_path() / "resdecomp_task.json";
    save_task(path, a);
    const Task back = load_task(path);
    CHECK(task_to_json(back) == task_to_json(a));
    CHECK(back.examples == a.examples);
    CHECK(back.templates == a.templates);
    std::filesystem::remove(path);
}

TEST_CASE("template edits") {
    Rng rng(0);
    const VocabLayout layout = VocabLayout::make(2, 4);
    Template t = random_template(layout, 2, rng);
    t.infix = {layout.markers[0]};
    t.separator = {layout.newline, layout.newline};
    const Template spaced = perturb_template(t, TemplateEdit::AddSpace);
    CHECK(spaced.infix.back() == layout.space);
    CHECK(perturb_template(spaced, TemplateEdit::DropSpace).infix == t.infix);
    CHECK_THROWS_AS(perturb_template(t, TemplateEdit::DropSpace), EditError);
    CHECK(perturb_template(t, TemplateEdit::DropNewline).separator.size() == 1);
    const Template swapped = perturb_template(t, TemplateEdit::SwapLabelWords);
    CHECK(swapped.verbalizer == t.alt_verbalizer);
    CHECK(swapped.tags == std::vector<std::string>{"swap_label_words"});
    Template none = t;
    none.separator = {layout.space};
    CHECK_THROWS_AS(perturb_template(none, TemplateEdit::DropNewline), EditError);
    CHECK(template_edit_from_string("add_space") == TemplateEdit::AddSpace);
    CHECK_THROWS_AS(template_edit_from_string("nope"), InputError);
    const auto skel = render_skeleton(t, 1);
    CHECK(std::count(skel.begin(), skel.end(), -1) == 1);
    CHECK(std::find(skel.begin(), skel.end(), t.verbalizer[1]) != skel.end());
}

TEST_CASE("demonstration sampling") {
    const Task task = generate_pattern_task(2, 2, 2, 16);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto demos = sample_demonstrations(task.pool, 2, 6, DemoMode::balanced(), s);
        CHECK(demos.size() == 6);
        CHECK(label_counts(demos).at(0) == 3);
        CHECK(demos[4].label != demos[5].label);
    }
    const auto skew = sample_demonstrations(task.pool, 2, 4, DemoMode::all_label(1), 0);
    CHECK(label_counts(skew).at(1) == 4);
    CHECK_THROWS_AS(sample_demonstrations(task.pool, 2, 3, DemoMode::balanced(), 0), InputError);

    // a pool of distinct inputs makes disjointness observable
    std::vector<LabeledExample> pool;
    for (int i = 0; i < 40; ++i) pool.push_back({{static_cast<TokenId>(i)}, i % 2});
    const auto sets = sample_disjoint_demo_sets(pool, 2, 4, 5, 1);
    REQUIRE(sets.size() == 5);
    std::set<TokenId> used;
    for (const auto& set : sets) {
        CHECK(label_counts(set).at(0) == 2);
        for (const auto& d : set) used.insert(d.input[0]);
    }
    CHECK(used.size() == 20);
    CHECK_THROWS_AS(sample_disjoint_demo_sets(task.pool, 2, 4, 17, 1), InputError);
}

TEST_CASE("split_examples keeps K' demonstrations and trains on the rest") {
    const Task task = generate_pattern_task(4, 2, 2, 16);
    const auto subset = draw_labeled_subset(task.pool, 2, 12, 3);
    CHECK(subset.size() == 12);
    CHECK(label_counts(subset).at(0) == 6);
    const DemoSplit split = split_examples(subset, 2, 4, 7);
    CHECK(split.demo.size() == 4);
    CHECK(split.train.size() == 8);
    CHECK_THROWS_AS(split_examples(subset, 2, 12, 7), InputError);
}

TEST_CASE("assembled prompts end with the empty label slot") {
    const Task task = generate_pattern_task(5, 2, 2, 16);
    const auto demos = sample_demonstrations(task.pool, 2, 4, DemoMode::balanced(), 0);
    const Template& t = task.templates[0];
    const auto p = assemble_prompt({demos, t}, task.examples[0].input, 128);
    REQUIRE(p.label_positions.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(p.tokens[static_cast<std::size_t>(p.label_positions[i])] == t.verbalizer[static_cast<std::size_t>(demos[i].label)]);
        CHECK(p.label_classes[i] == demos[i].label);
    }
    const std::size_t per = t.prefix.size() + 1 + t.infix.size() + 1 + t.separator.size();
    CHECK(p.tokens.size() == 4 * per + t.prefix.size() + 1 + t.infix.size());
    CHECK(std::equal(t.infix.rbegin(), t.infix.rend(), p.tokens.rbegin()));
    CHECK_THROWS_AS(assemble_prompt({demos, t}, task.examples[0].input, 10), LengthError);
}

TEST_CASE("training sequences target the label word after each infix") {
    const Task task = generate_pattern_task(6, 2, 2, 16);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const TrainingSequence s = sample_training_sequence(task, 64, 3, 7, rng);
        CHECK(s.tokens.size() <= 64);
        CHECK(s.target_positions.size() >= 3);
        for (std::size_t k = 0; k < s.targets.size(); ++k) {
            const auto pos = static_cast<std::size_t>(s.target_positions[k]);
            CHECK(s.tokens[pos + 1] == s.targets[k]);
        }
        // within one sequence, each pattern keeps a single label
        std::map<TokenId, TokenId> seen;
        for (std::size_t k = 0; k < s.targets.size(); ++k) {
            // the pattern token sits right before the infix
            const auto pos = static_cast<std::size_t>(s.target_positions[k]);
            for (std::size_t j = pos + 1; j-- > 0;) {
                const auto& pats = task.content_groups[0];
                if (std::find(pats.begin(), pats.end(), s.tokens[j]) != pats.end()) {
                    auto [it, fresh] = seen.emplace(s.tokens[j], s.targets[k]);
                    CHECK(it->second == s.targets[k]);
                    break;
                }
            }
        }
    }
    CHECK_THROWS_AS(sample_training_sequence(task, 64, 0, 3, rng), InputError);
}
