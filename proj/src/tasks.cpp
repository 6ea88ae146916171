#include "resdecomp/tasks.hpp"

#include <algorithm>
#include <numeric>

#include "resdecomp/container.hpp"
#include "resdecomp/errors.hpp"

namespace resdecomp {

namespace {

constexpr int kMarkerCount = 6;

std::vector<TokenId> id_range(TokenId first, int count) {
    std::vector<TokenId> ids(static_cast<std::size_t>(count));
    std::iota(ids.begin(), ids.end(), first);
    return ids;
}

template <class T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
    rng.shuffle(std::span<T>(v));
}

// Indices of pool examples grouped by label.
std::vector<std::vector<std::size_t>> by_label(std::span<const LabeledExample> pool, int n_labels) {
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(n_labels));
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const int y = pool[i].label;
        if (y < 0 || y >= n_labels) {
            throw InputError("example label " + std::to_string(y) + " outside [0, n_labels)");
        }
        groups[static_cast<std::size_t>(y)].push_back(i);
    }
    return groups;
}

bool last_two_differ(const std::vector<LabeledExample>& demos) {
    return demos.size() < 2 || demos[demos.size() - 1].label != demos[demos.size() - 2].label;
}

// Shuffles until the last two labels differ (only possible when two labels are present).
void shuffle_demos(std::vector<LabeledExample>& demos, Rng& rng) {
    shuffle_vec(demos, rng);
    bool mixed = false;
    for (const auto& d : demos) mixed |= d.label != demos.front().label;
    if (!mixed) return;
    while (!last_two_differ(demos)) shuffle_vec(demos, rng);
}

std::vector<std::size_t> balanced_indices(std::span<const LabeledExample> pool, int n_labels, int k,
                                          Rng& rng) {
    if (n_labels < 1 || k % n_labels != 0) {
        throw InputError("balanced sampling needs k divisible by n_labels (k=" + std::to_string(k) +
                         ", labels=" + std::to_string(n_labels) + ")");
    }
    auto groups = by_label(pool, n_labels);
    const auto per_class = static_cast<std::size_t>(k / n_labels);
    std::vector<std::size_t> picked;
    for (auto& g : groups) {
        if (g.size() < per_class) {
            throw InputError("demonstration pool too small: need " + std::to_string(per_class) +
                             " examples per class");
        }
        shuffle_vec(g, rng);
        picked.insert(picked.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(per_class));
    }
    return picked;
}

LabeledExample make_pattern_example(const Task& task, int pattern_index, Rng& rng,
                                    std::span<const int> pattern_labels) {
    const auto& patterns = task.content_groups[0];
    const auto& fillers = task.content_groups[1];
    LabeledExample ex;
    for (int i = 0; i + 1 < task.input_len; ++i) {
        ex.input.push_back(fillers[rng.below(fillers.size())]);
    }
    ex.input.push_back(patterns[static_cast<std::size_t>(pattern_index)]);
    ex.label = pattern_labels[static_cast<std::size_t>(pattern_index)];
    return ex;
}

LabeledExample make_pattern_example_of_class(const Task& task, int label, Rng& rng,
                                             std::span<const int> pattern_labels) {
    std::vector<int> candidates;
    for (std::size_t p = 0; p < pattern_labels.size(); ++p) {
        if (pattern_labels[p] == label) candidates.push_back(static_cast<int>(p));
    }
    const int p = candidates[rng.below(candidates.size())];
    return make_pattern_example(task, p, rng, pattern_labels);
}

LabeledExample make_majority_example(const Task& task, int label, Rng& rng) {
    const auto n = static_cast<std::size_t>(task.n_labels);
    LabeledExample ex;
    ex.label = label;
    std::vector<int> classes(static_cast<std::size_t>(task.input_len));
    while (true) {
        std::vector<int> counts(n, 0);
        for (int& c : classes) {
            c = static_cast<int>(rng.below(n));
            ++counts[static_cast<std::size_t>(c)];
        }
        const int top = *std::max_element(counts.begin(), counts.end());
        if (counts[static_cast<std::size_t>(label)] == top &&
            std::count(counts.begin(), counts.end(), top) == 1) {
            break;
        }
    }
    for (int c : classes) {
        const auto& group = task.content_groups[static_cast<std::size_t>(c)];
        ex.input.push_back(group[rng.below(group.size())]);
    }
    return ex;
}

// n examples, n/n_labels per class, in shuffled order.
std::vector<LabeledExample> balanced_set(const Task& task, int n, Rng& rng) {
    std::vector<LabeledExample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int label = i % task.n_labels;
        if (task.kind == TaskKind::Pattern) {
            out.push_back(make_pattern_example_of_class(task, label, rng, task.pattern_labels));
        } else {
            out.push_back(make_majority_example(task, label, rng));
        }
    }
    shuffle_vec(out, rng);
    return out;
}

void finish_task(Task& task, int n_examples, const TaskOptions& options, Rng& rng) {
    if (n_examples % task.n_labels != 0) {
        throw InputError("n_examples (" + std::to_string(n_examples) + ") must be divisible by n_labels (" +
                         std::to_string(task.n_labels) + ")");
    }
    if (options.pool_size % task.n_labels != 0) {
        throw InputError("pool_size must be divisible by n_labels");
    }
    task.examples = balanced_set(task, n_examples, rng);
    task.pool = balanced_set(task, options.pool_size, rng);
    for (int i = 0; i < options.n_templates; ++i) {
        task.templates.push_back(random_template(task.layout, task.n_labels, rng));
    }
}

}  // namespace

VocabLayout VocabLayout::make(int n_labels, int n_content) {
    VocabLayout layout;
    layout.space = 0;
    layout.newline = 1;
    layout.markers = id_range(2, kMarkerCount);
    TokenId next = 2 + kMarkerCount;
    layout.label_words = id_range(next, n_labels);
    next += n_labels;
    layout.alt_label_words = id_range(next, n_labels);
    next += n_labels;
    layout.content = id_range(next, n_content);
    layout.vocab_size = next + n_content;
    return layout;
}

std::string to_string(TemplateEdit edit) {
    switch (edit) {
        case TemplateEdit::AddSpace: return "add_space";
        case TemplateEdit::DropSpace: return "drop_space";
        case TemplateEdit::DropNewline: return "drop_newline";
        case TemplateEdit::SwapLabelWords: return "swap_label_words";
    }
    return "?";
}

TemplateEdit template_edit_from_string(const std::string& text) {
    for (auto e : {TemplateEdit::AddSpace, TemplateEdit::DropSpace, TemplateEdit::DropNewline,
                   TemplateEdit::SwapLabelWords}) {
        if (to_string(e) == text) return e;
    }
    throw InputError("unknown template edit '" + text + "'");
}

Template random_template(const VocabLayout& layout, int n_labels, Rng& rng) {
    Template t;
    const auto a = static_cast<std::size_t>(rng.below(layout.markers.size()));
    auto b = static_cast<std::size_t>(rng.below(layout.markers.size() - 1));
    if (b >= a) ++b;
    if (rng.coin()) t.prefix.push_back(layout.markers[a]);
    t.infix.push_back(layout.markers[b]);
    if (rng.coin()) t.infix.push_back(layout.space);
    switch (rng.below(3)) {
        case 0: t.separator = {layout.newline}; break;
        case 1: t.separator = {layout.newline, layout.newline}; break;
        default: t.separator = {layout.space, layout.newline}; break;
    }
    t.verbalizer.assign(layout.label_words.begin(), layout.label_words.begin() + n_labels);
    t.alt_verbalizer.assign(layout.alt_label_words.begin(), layout.alt_label_words.begin() + n_labels);
    return t;
}

// Whitespace ids are fixed by the layout.
Template perturb_template(const Template& tmpl, TemplateEdit edit) {
    constexpr TokenId kSpace = 0;
    constexpr TokenId kNewline = 1;
    Template out = tmpl;
    switch (edit) {
        case TemplateEdit::AddSpace:
            out.infix.push_back(kSpace);
            break;
        case TemplateEdit::DropSpace: {
            auto it = std::find(out.infix.rbegin(), out.infix.rend(), kSpace);
            if (it == out.infix.rend()) throw EditError("drop_space: template infix has no space");
            out.infix.erase(std::next(it).base());
            break;
        }
        case TemplateEdit::DropNewline: {
            auto it = std::find(out.separator.rbegin(), out.separator.rend(), kNewline);
            if (it == out.separator.rend()) throw EditError("drop_newline: template has no newline");
            out.separator.erase(std::next(it).base());
            break;
        }
        case TemplateEdit::SwapLabelWords:
            if (out.alt_verbalizer.size() != out.verbalizer.size()) {
                throw EditError("swap_label_words: no alternate label words");
            }
            std::swap(out.verbalizer, out.alt_verbalizer);
            break;
    }
    out.tags.push_back(to_string(edit));
    return out;
}

std::vector<TokenId> render_skeleton(const Template& tmpl, int label) {
    std::vector<TokenId> out = tmpl.prefix;
    out.push_back(-1);
    out.insert(out.end(), tmpl.infix.begin(), tmpl.infix.end());
    out.push_back(tmpl.verbalizer.at(static_cast<std::size_t>(label)));
    out.insert(out.end(), tmpl.separator.begin(), tmpl.separator.end());
    return out;
}

Task generate_pattern_task(std::uint64_t seed, int n_patterns, int n_labels, int n_examples,
                           const TaskOptions& options) {
    if (n_labels < 2 || n_patterns < n_labels) {
        throw InputError("pattern task needs n_patterns >= n_labels >= 2");
    }
    if (options.input_len < 1 || options.n_fillers < 1) {
        throw InputError("pattern task needs input_len >= 1 and n_fillers >= 1");
    }
    Rng rng(substream_seed(seed, "task"));
    Task task;
    task.kind = TaskKind::Pattern;
    task.seed = seed;
    task.n_labels = n_labels;
    task.input_len = options.input_len;
    task.layout = VocabLayout::make(n_labels, n_patterns + options.n_fillers);
    const auto& content = task.layout.content;
    task.content_groups.emplace_back(content.begin(), content.begin() + n_patterns);
    task.content_groups.emplace_back(content.begin() + n_patterns, content.end());

    std::vector<int> order(static_cast<std::size_t>(n_patterns));
    std::iota(order.begin(), order.end(), 0);
    shuffle_vec(order, rng);
    task.pattern_labels.assign(static_cast<std::size_t>(n_patterns), 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        task.pattern_labels[static_cast<std::size_t>(order[i])] = static_cast<int>(i) % n_labels;
    }
    finish_task(task, n_examples, options, rng);
    return task;
}

Task generate_majority_task(std::uint64_t seed, int n_labels, int seq_len, int n_examples,
                            const TaskOptions& options) {
    if (n_labels < 2) throw InputError("majority task needs n_labels >= 2");
    if (seq_len < 1 || seq_len % 2 == 0) throw InputError("majority task needs an odd seq_len");
    if (options.sub_vocab < 1) throw InputError("majority task needs sub_vocab >= 1");
    Rng rng(substream_seed(seed, "task"));
    Task task;
    task.kind = TaskKind::Majority;
    task.seed = seed;
    task.n_labels = n_labels;
    task.input_len = seq_len;
    task.layout = VocabLayout::make(n_labels, n_labels * options.sub_vocab);
    for (int c = 0; c < n_labels; ++c) {
        auto first = task.layout.content.begin() + c * options.sub_vocab;
        task.content_groups.emplace_back(first, first + options.sub_vocab);
    }
    finish_task(task, n_examples, options, rng);
    return task;
}

int majority_label(const Task& task, std::span<const TokenId> input) {
    std::vector<int> counts(static_cast<std::size_t>(task.n_labels), 0);
    for (TokenId t : input) {
        for (std::size_t c = 0; c < task.content_groups.size(); ++c) {
            const auto& g = task.content_groups[c];
            if (std::find(g.begin(), g.end(), t) != g.end()) ++counts[c];
        }
    }
    const int top = *std::max_element(counts.begin(), counts.end());
    if (std::count(counts.begin(), counts.end(), top) != 1) return -1;
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<LabeledExample> sample_demonstrations(std::span<const LabeledExample> pool, int n_labels,
                                                  int k, DemoMode mode, std::uint64_t seed) {
    if (k < 0) throw InputError("sample_demonstrations: negative k");
    Rng rng(seed);
    std::vector<LabeledExample> demos;
    if (mode.kind == DemoMode::Kind::Balanced) {
        for (std::size_t i : balanced_indices(pool, n_labels, k, rng)) demos.push_back(pool[i]);
        shuffle_demos(demos, rng);
    } else {
        if (mode.label < 0 || mode.label >= n_labels) {
            throw InputError("sample_demonstrations: label out of range");
        }
        auto groups = by_label(pool, n_labels);
        auto& g = groups[static_cast<std::size_t>(mode.label)];
        if (g.size() < static_cast<std::size_t>(k)) {
            throw InputError("demonstration pool too small for all-label mode");
        }
        shuffle_vec(g, rng);
        for (int i = 0; i < k; ++i) demos.push_back(pool[g[static_cast<std::size_t>(i)]]);
    }
    return demos;
}

std::vector<std::vector<LabeledExample>> sample_disjoint_demo_sets(std::span<const LabeledExample> pool,
                                                                   int n_labels, int k, int count,
                                                                   std::uint64_t seed) {
    if (k % n_labels != 0) throw InputError("disjoint demo sets need k divisible by n_labels");
    Rng rng(seed);
    auto groups = by_label(pool, n_labels);
    const auto per_class = static_cast<std::size_t>(k / n_labels);
    for (auto& g : groups) {
        if (g.size() < per_class * static_cast<std::size_t>(count)) {
            throw InputError("demonstration pool too small for " + std::to_string(count) + " disjoint sets");
        }
        shuffle_vec(g, rng);
    }
    std::vector<std::vector<LabeledExample>> sets;
    for (int r = 0; r < count; ++r) {
        std::vector<LabeledExample> demos;
        for (const auto& g : groups) {
            for (std::size_t i = 0; i < per_class; ++i) {
                demos.push_back(pool[g[static_cast<std::size_t>(r) * per_class + i]]);
            }
        }
        shuffle_demos(demos, rng);
        sets.push_back(std::move(demos));
    }
    return sets;
}

std::vector<LabeledExample> draw_labeled_subset(std::span<const LabeledExample> pool, int n_labels,
                                                int k, std::uint64_t seed) {
    if (k < 0 || static_cast<std::size_t>(k) > pool.size()) {
        throw InputError("draw_labeled_subset: k outside [0, pool size]");
    }
    Rng rng(seed);
    auto groups = by_label(pool, n_labels);
    for (auto& g : groups) shuffle_vec(g, rng);
    std::vector<std::size_t> picked;
    std::vector<std::size_t> cursor(groups.size(), 0);
    for (int i = 0; i < k; ++i) {
        // round-robin over classes, skipping exhausted ones
        for (std::size_t tries = 0; tries < groups.size(); ++tries) {
            const std::size_t c = (static_cast<std::size_t>(i) + tries) % groups.size();
            if (cursor[c] < groups[c].size()) {
                picked.push_back(groups[c][cursor[c]++]);
                break;
            }
        }
    }
    std::sort(picked.begin(), picked.end());
    std::vector<LabeledExample> out;
    for (std::size_t i : picked) out.push_back(pool[i]);
    shuffle_vec(out, rng);
    return out;
}

DemoSplit split_examples(std::span<const LabeledExample> pool, int n_labels, int k_prime,
                         std::uint64_t seed) {
    if (static_cast<std::size_t>(k_prime) >= pool.size()) {
        throw InputError("split_examples: need K > K' (K=" + std::to_string(pool.size()) +
                         ", K'=" + std::to_string(k_prime) + ")");
    }
    Rng rng(seed);
    std::vector<std::size_t> picked = balanced_indices(pool, n_labels, k_prime, rng);
    DemoSplit split;
    for (std::size_t i : picked) split.demo.push_back(pool[i]);
    shuffle_demos(split.demo, rng);
    std::sort(picked.begin(), picked.end());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!std::binary_search(picked.begin(), picked.end(), i)) split.train.push_back(pool[i]);
    }
    return split;
}

AssembledPrompt assemble_prompt(const PromptSpec& spec, std::span<const TokenId> test_input, int max_seq) {
    const Template& t = spec.tmpl;
    AssembledPrompt out;
    auto append = [&](const std::vector<TokenId>& part) {
        out.tokens.insert(out.tokens.end(), part.begin(), part.end());
    };
    for (const auto& demo : spec.demonstrations) {
        if (demo.label < 0 || static_cast<std::size_t>(demo.label) >= t.verbalizer.size()) {
            throw InputError("assemble_prompt: demonstration label has no label word");
        }
        append(t.prefix);
        append(demo.input);
        append(t.infix);
        out.label_positions.push_back(static_cast<int>(out.tokens.size()));
        out.label_classes.push_back(demo.label);
        out.tokens.push_back(t.verbalizer[static_cast<std::size_t>(demo.label)]);
        append(t.separator);
    }
    append(t.prefix);
    out.tokens.insert(out.tokens.end(), test_input.begin(), test_input.end());
    append(t.infix);
    if (out.tokens.size() > static_cast<std::size_t>(max_seq)) {
        throw LengthError("assembled prompt has " + std::to_string(out.tokens.size()) +
                          " tokens, more than max_seq " + std::to_string(max_seq));
    }
    return out;
}

TrainingSequence sample_training_sequence(const Task& task, int max_seq, int min_demos, int max_demos, Rng& rng) {
    if (min_demos < 1 || max_demos < min_demos) {
        throw InputError("sample_training_sequence: need 1 <= min_demos <= max_demos");
    }
    Template tmpl = random_template(task.layout, task.n_labels, rng);
    if (rng.coin()) tmpl = perturb_template(tmpl, TemplateEdit::SwapLabelWords);

    std::vector<int> labels = task.pattern_labels;
    if (task.kind == TaskKind::Pattern) {
        std::vector<int> order(labels.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle_vec(order, rng);
        for (std::size_t i = 0; i < order.size(); ++i) {
            labels[static_cast<std::size_t>(order[i])] = static_cast<int>(i) % task.n_labels;
        }
    }

    const int per_demo = static_cast<int>(tmpl.prefix.size() + tmpl.infix.size() + tmpl.separator.size()) +
                         task.input_len + 1;
    const int fit = std::max(1, max_seq / per_demo);
    const int cap = std::max(1, std::min(max_demos, fit));
    const int n_demos = rng.uniform_int(std::min(min_demos, cap), cap);

    TrainingSequence seq;
    for (int i = 0; i < n_demos; ++i) {
        const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(task.n_labels)));
        LabeledExample ex = task.kind == TaskKind::Pattern
                                ? make_pattern_example_of_class(task, label, rng, labels)
                                : make_majority_example(task, label, rng);
        auto append = [&](const std::vector<TokenId>& part) {
            seq.tokens.insert(seq.tokens.end(), part.begin(), part.end());
        };
        append(tmpl.prefix);
        append(ex.input);
        append(tmpl.infix);
        seq.target_positions.push_back(static_cast<int>(seq.tokens.size()) - 1);
        seq.targets.push_back(tmpl.verbalizer[static_cast<std::size_t>(ex.label)]);
        seq.tokens.push_back(tmpl.verbalizer[static_cast<std::size_t>(ex.label)]);
        append(tmpl.separator);
    }
    if (seq.tokens.size() > static_cast<std::size_t>(max_seq)) {
        seq.tokens.resize(static_cast<std::size_t>(max_seq));
        while (!seq.target_positions.empty() && seq.target_positions.back() >= max_seq - 1) {
            seq.target_positions.pop_back();
            seq.targets.pop_back();
        }
    }
    return seq;
}

nlohmann::json template_to_json(const Template& t) {
    return {{"prefix", t.prefix},         {"infix", t.infix},
            {"separator", t.separator},   {"verbalizer", t.verbalizer},
            {"alt_verbalizer", t.alt_verbalizer}, {"tags", t.tags}};
}

Template template_from_json(const nlohmann::json& j) {
    Template t;
    t.prefix = j.at("prefix").get<std::vector<TokenId>>();
    t.infix = j.at("infix").get<std::vector<TokenId>>();
    t.separator = j.at("separator").get<std::vector<TokenId>>();
    t.verbalizer = j.at("verbalizer").get<std::vector<TokenId>>();
    t.alt_verbalizer = j.value("alt_verbalizer", std::vector<TokenId>{});
    t.tags = j.value("tags", std::vector<std::string>{});
    return t;
}

namespace {

nlohmann::json examples_to_json(const std::vector<LabeledExample>& examples) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : examples) arr.push_back({{"input", e.input}, {"label", e.label}});
    return arr;
}

std::vector<LabeledExample> examples_from_json(const nlohmann::json& arr) {
    std::vector<LabeledExample> out;
    for (const auto& e : arr) {
        out.push_back({e.at("input").get<std::vector<TokenId>>(), e.at("label").get<int>()});
    }
    return out;
}

}  // namespace

nlohmann::json task_to_json(const Task& task) {
    nlohmann::json templates = nlohmann::json::array();
    for (const auto& t : task.templates) templates.push_back(template_to_json(t));
    const VocabLayout& l = task.layout;
    return {
        {"format", "resdecomp-task-1"},
        {"kind", task.kind == TaskKind::Pattern ? "pattern" : "majority"},
        {"seed", task.seed},
        {"n_labels", task.n_labels},
        {"input_len", task.input_len},
        {"layout",
         {{"vocab_size", l.vocab_size},
          {"space", l.space},
          {"newline", l.newline},
          {"markers", l.markers},
          {"label_words", l.label_words},
          {"alt_label_words", l.alt_label_words},
          {"content", l.content}}},
        {"verbalizer", l.label_words},
        {"content_groups", task.content_groups},
        {"pattern_labels", task.pattern_labels},
        {"templates", templates},
        {"examples", examples_to_json(task.examples)},
        {"pool", examples_to_json(task.pool)},
    };
}

Task task_from_json(const nlohmann::json& j) {
    Task task;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "pattern") {
            task.kind = TaskKind::Pattern;
        } else if (kind == "majority") {
            task.kind = TaskKind::Majority;
        } else {
            throw FormatError("task: unknown kind '" + kind + "'");
        }
        task.seed = j.at("seed").get<std::uint64_t>();
        task.n_labels = j.at("n_labels").get<int>();
        task.input_len = j.at("input_len").get<int>();
        const auto& l = j.at("layout");
        task.layout.vocab_size = l.at("vocab_size").get<int>();
        task.layout.space = l.at("space").get<TokenId>();
        task.layout.newline = l.at("newline").get<TokenId>();
        task.layout.markers = l.at("markers").get<std::vector<TokenId>>();
        task.layout.label_words = l.at("label_words").get<std::vector<TokenId>>();
        task.layout.alt_label_words = l.at("alt_label_words").get<std::vector<TokenId>>();
        task.layout.content = l.at("content").get<std::vector<TokenId>>();
        task.content_groups = j.at("content_groups").get<std::vector<std::vector<TokenId>>>();
        task.pattern_labels = j.at("pattern_labels").get<std::vector<int>>();
        for (const auto& t : j.at("templates")) task.templates.push_back(template_from_json(t));
        task.examples = examples_from_json(j.at("examples"));
        task.pool = examples_from_json(j.at("pool"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("task file: ") + e.what());
    }
    for (const auto* set : {&task.examples, &task.pool}) {
        for (const auto& e : *set) {
            if (e.label < 0 || e.label >= task.n_labels) throw FormatError("task file: label out of range");
            for (TokenId t : e.input) {
                if (t < 0 || t >= task.layout.vocab_size) throw FormatError("task file: token outside vocab");
            }
        }
    }
    return task;
}

void save_task(const std::filesystem::path& path, const Task& task) {
    write_file_bytes(path, task_to_json(task).dump(1) + "\n");
}

Task load_task(const std::filesystem::path& path) {
    try {
        return task_from_json(nlohmann::json::parse(read_file_bytes(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("task file '" + path.string() + "': " + e.what());
    }
}

}  // namespace resdecomp
