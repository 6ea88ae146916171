#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "resdecomp/commands.hpp"
#include "resdecomp/container.hpp"
#include "resdecomp/errors.hpp"
#include "resdecomp/weights_io.hpp"

using namespace resdecomp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("resdecomp_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// A small task and model written to `dir`.
RunConfig small_setup(const fs::path& dir) {
    GenTaskOptions g;
    g.n_patterns = 4;
    g.n_examples = 32;
    const Task task = cmd_gen_task(g, 1);
    save_task(dir / "task.json", task);
    save_weights(dir / "model.tdw", cmd_init_model(oracle::small_config(2, 2, 4, task.layout.vocab_size, 64), 2));
    RunConfig c;
    c.model = dir / "model.tdw";
    c.task = dir / "task.json";
    c.test_size = 16;
    return c;
}

std::string cli() {
    const char* p = std::getenv("RESDECOMP_CLI");
    return p ? p : "";
}

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " '" + cli() + "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("gen-task is reproducible and seed-sensitive") {
    TempDir d("gentask");
    GenTaskOptions g;
    save_task(d.path / "a.json", cmd_gen_task(g, 5));
    save_task(d.path / "b.json", cmd_gen_task(g, 5));
    save_task(d.path / "c.json", cmd_gen_task(g, 6));
    CHECK(read_file_bytes(d.path / "a.json") == read_file_bytes(d.path / "b.json"));
    CHECK(read_file_bytes(d.path / "a.json") != read_file_bytes(d.path / "c.json"));
    g.kind = "majority";
    CHECK(cmd_gen_task(g, 5).kind == TaskKind::Majority);
    g.kind = "other";
    CHECK_THROWS_AS(cmd_gen_task(g, 5), UsageError);
}

TEST_CASE("init-model round-trips through the weights file") {
    TempDir d("init");
    const auto w = cmd_init_model(oracle::small_config(1, 2, 4), 3);
    save_weights(d.path / "m.tdw", w);
    CHECK(load_weights(d.path / "m.tdw").weights == w);
}

TEST_CASE("train-toy writes the scheduled checkpoints and a manifest") {
    TempDir d("train");
    const Task task = cmd_gen_task({}, 1);
    TrainToyOptions o;
    o.steps = 10;
    o.checkpoint_every = 5;
    o.train.batch_size = 2;
    const auto manifest = cmd_train_toy(oracle::small_config(1, 2, 4, task.layout.vocab_size, 64), task, o, 4, d.path);
    CHECK(manifest["checkpoints"].size() == 3);
    CHECK(fs::exists(d.path / "manifest.json"));
    CHECK(fs::exists(d.path / "step_000010.tdw"));
    const auto cks = load_checkpoints(d.path);
    REQUIRE(cks.size() == 3);
    CHECK(cks[0].step == 0);
    CHECK(cks[2].step == 10);
    CHECK(cks[2].train_loss == manifest["checkpoints"][2]["train_loss"].get<double>());
}

TEST_CASE("eval runs every demo set and template") {
    TempDir d("eval");
    const RunConfig c = small_setup(d.path);
    EvalOptions o;
    o.demo_sets = 5;
    o.templates = 3;
    const Report r = cmd_eval(c, o);
    REQUIRE(r.json["runs"].size() == 15);
    double total = 0;
    for (const auto& run : r.json["runs"]) total += run["report"]["full_accuracy"].get<double>();
    CHECK(r.json["aggregate"]["full"]["mean"].get<double>() == doctest::Approx(total / 15));
    CHECK(r.json["aggregate"]["full"].contains("sd"));

    const Report one = cmd_eval(c, {});
    CHECK(one.json["runs"].size() == 1);
    CHECK_FALSE(one.json["aggregate"]["full"].contains("sd"));
    CHECK(one.render(OutputFormat::Csv).rfind("run,component,accuracy,preferred_label,biased\n", 0) == 0);
    // sorted keys
    const std::string js = one.render(OutputFormat::Json);
    CHECK(js.find("\"aggregate\"") < js.find("\"config\""));
    CHECK(js.back() == '\n');
}

TEST_CASE("reweight and calibrate report every baseline") {
    TempDir d("reweight");
    RunConfig c = small_setup(d.path);
    c.k = 8;
    ReweightOptions o;
    o.runs = 2;
    o.max_epochs = 50;
    const Report r = cmd_reweight(c, o);
    for (const char* key : {"standard_kprime", "standard_k", "calib_plus", "comp_rw"}) CHECK(r.json["summary"].contains(key));
    CHECK(r.json["t_tests"].size() == 3);
    const Report cal = cmd_calibrate(c, o);
    CHECK_FALSE(cal.json["summary"].contains("comp_rw"));
    c.k = 4;
    CHECK_THROWS_AS(cmd_reweight(c, o), UsageError);
}

TEST_CASE("analysis commands produce their reports") {
    TempDir d("analysis");
    const RunConfig c = small_setup(d.path);
    const Report p = cmd_prune(c, {2, 2});
    CHECK(p.json.contains("prune_top"));
    CHECK(p.json.contains("prune_bottom"));
    CHECK_THROWS_AS(cmd_prune(c, {99, 0}), UsageError);

    const Report t = cmd_transfer(c, {"worst", 2});
    CHECK(t.json["targets"].size() == 2);

    const Report s = cmd_prompt_select(c);
    CHECK(s.json.contains("prompt_select_accuracy"));

    const Report a = cmd_agreement(c, {"templates", 3, 5});
    CHECK(a.json["pairs"].size() == 3);
    CHECK_THROWS_AS(cmd_agreement(c, {"demos", 1, 5}), UsageError);
}

TEST_CASE("RESDECOMP_SEED overrides the flag") {
    ::unsetenv("RESDECOMP_SEED");
    CHECK(effective_seed(7) == 7);
    ::setenv("RESDECOMP_SEED", "42", 1);
    CHECK(effective_seed(7) == 42);
    ::setenv("RESDECOMP_SEED", "x", 1);
    CHECK_THROWS_AS(effective_seed(7), InputError);
    ::unsetenv("RESDECOMP_SEED");
}

TEST_CASE("CLI exit codes and seed override") {
    if (cli().empty()) return;
    TempDir d("cli");
    const RunConfig c = small_setup(d.path);
    const std::string common = "--model " + c.model.string() + " --task " + c.task.string() + " --test-size 8";
    CHECK(run("agreement " + common + " --variation demos --runs 1") == 2);
    CHECK(run("eval " + common + " --format xml") != 0);
    CHECK(run("eval --task " + c.task.string()) == 2);
    CHECK(run("eval --model /nonexistent.tdw --task " + c.task.string()) == 1);

    const auto a = d.path / "a.json", b = d.path / "b.json", e = d.path / "e.json";
    REQUIRE(run("gen-task --seed 3 --out " + a.string()) == 0);
    REQUIRE(run("gen-task --seed 9 --out " + b.string(), "RESDECOMP_SEED=3") == 0);
    REQUIRE(run("gen-task --seed 9 --out " + e.string()) == 0);
    CHECK(read_file_bytes(a) == read_file_bytes(b));
    CHECK(read_file_bytes(a) != read_file_bytes(e));
}
