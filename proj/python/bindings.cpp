// Python bindings. Reports cross the boundary as canonical JSON strings; the
// package's __init__ turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "resdecomp/analysis.hpp"
#include "resdecomp/commands.hpp"
#include "resdecomp/errors.hpp"
#include "resdecomp/weights_io.hpp"

namespace py = pybind11;
using namespace resdecomp;

namespace {

std::string json_of(const Report& r) { return canonical_json(r.json); }

// component name -> contribution to every vocabulary logit
std::vector<std::pair<std::string, std::vector<float>>> decompose(const TransformerWeights& w,
                                                                  const std::vector<TokenId>& tokens) {
    const ForwardResult r = forward_decomposed(w, tokens);
    const ComponentActivations acts = fold_final_layernorm(r.writes, w.final_gamma, w.config.eps);
    std::vector<std::pair<std::string, std::vector<float>>> out;
    for (std::size_t j = 0; j < acts.ids.size(); ++j) {
        out.emplace_back(acts.ids[j].name(), early_decode(acts.activations[j], w.output_embedding));
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Direct-contribution decomposition of toy transformer logits";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("d_head", &ModelConfig::d_head)
        .def_readwrite("d_mlp", &ModelConfig::d_mlp)
        .def_readwrite("vocab", &ModelConfig::vocab)
        .def_readwrite("max_seq", &ModelConfig::max_seq)
        .def_readwrite("eps", &ModelConfig::eps)
        .def("validate", &ModelConfig::validate)
        .def("component_count", &ModelConfig::component_count);

    py::class_<TransformerWeights>(m, "TransformerWeights")
        .def_readonly("config", &TransformerWeights::config)
        .def("__eq__", [](const TransformerWeights& a, const TransformerWeights& b) { return a == b; });

    m.def("init_random", &init_random, py::arg("config"), py::arg("seed"));
    m.def("save_weights", [](const std::filesystem::path& p, const TransformerWeights& w) { save_weights(p, w); });
    m.def("load_weights", [](const std::filesystem::path& p) { return load_weights(p).weights; });
    m.def("forward", [](const TransformerWeights& w, const std::vector<TokenId>& t) { return forward_standard(w, t); },
          "final-position logits");
    m.def("decompose", &decompose, py::arg("weights"), py::arg("tokens"),
          "per-component direct contributions to every logit, x0 first");

    py::class_<LabeledExample>(m, "LabeledExample")
        .def_readonly("input", &LabeledExample::input)
        .def_readonly("label", &LabeledExample::label);
    py::class_<Task>(m, "Task")
        .def_readonly("n_labels", &Task::n_labels)
        .def_readonly("examples", &Task::examples)
        .def_readonly("pool", &Task::pool)
        .def_property_readonly("vocab_size", [](const Task& t) { return t.layout.vocab_size; })
        .def_property_readonly("label_words", [](const Task& t) { return t.layout.label_words; });
    m.def("generate_pattern_task", [](std::uint64_t seed, int n_patterns, int n_labels, int n_examples) {
        return generate_pattern_task(seed, n_patterns, n_labels, n_examples);
    }, py::arg("seed"), py::arg("n_patterns") = 2, py::arg("n_labels") = 2, py::arg("n_examples") = 512);
    m.def("save_task", &save_task);
    m.def("load_task", &load_task);

    m.def("pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); });
    m.def("top_k_iou", [](const std::vector<double>& a, const std::vector<double>& b, int k) { return top_k_iou(a, b, k); },
          py::arg("a"), py::arg("b"), py::arg("k") = 5);
    m.def("paired_t_test", [](const std::vector<double>& a, const std::vector<double>& b) {
        const TTestResult r = paired_t_test_one_tailed(a, b);
        return py::make_tuple(r.t, r.p_value, r.dof);
    }, "one-tailed paired t-test of mean(a - b) > 0; returns (t, p, dof)");

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("model", &RunConfig::model)
        .def_readwrite("task", &RunConfig::task)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("k", &RunConfig::k)
        .def_readwrite("k_prime", &RunConfig::k_prime)
        .def_readwrite("l1_lambda", &RunConfig::l1_lambda)
        .def_readwrite("learning_rate", &RunConfig::learning_rate)
        .def_readwrite("test_size", &RunConfig::test_size)
        .def_readwrite("include_x0", &RunConfig::include_x0)
        .def_readwrite("threads", &RunConfig::threads);

    m.def("_eval", [](const RunConfig& c, int demo_sets, int templates) {
        return json_of(cmd_eval(c, {demo_sets, templates, 1.0}));
    });
    m.def("_reweight", [](const RunConfig& c, int runs) { return json_of(cmd_reweight(c, {runs, 1000})); });
    m.def("_calibrate", [](const RunConfig& c, int runs) { return json_of(cmd_calibrate(c, {runs, 1000})); });
    m.def("_agreement", [](const RunConfig& c, const std::string& variation, int runs) {
        return json_of(cmd_agreement(c, {variation, runs, 5}));
    });
    m.def("_prune", [](const RunConfig& c, int top, int bottom) { return json_of(cmd_prune(c, {top, bottom})); });
}
