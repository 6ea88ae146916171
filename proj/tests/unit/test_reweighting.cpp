#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "resdecomp/errors.hpp"
#include "resdecomp/reweighting.hpp"

using namespace resdecomp;

TEST_CASE("analytic CE gradient matches central differences") {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto cache = synthetic::random_cache(gen, 3 + trial % 7, 2 + trial % 9, 2 + trial % 3);
        std::normal_distribution<double> n;
        std::vector<double> w(cache.num_components());
        for (double& x : w) x = 1.0 + 0.5 * n(gen);
        const auto analytic = reweighting_ce_gradient(cache, w);
        const auto numeric = synthetic::numeric_ce_gradient(cache, w, 1e-3);
        for (std::size_t j = 0; j < w.size(); ++j) {
            CHECK(analytic[j] == doctest::Approx(numeric[j]).epsilon(1e-4).scale(1.0));
        }
    }
}

TEST_CASE("loss adds the L1 term to summed cross-entropy") {
    std::mt19937_64 gen(2);
    const auto cache = synthetic::random_cache(gen, 5, 3, 2);
    const std::vector<double> w{1.0, -2.0, 0.5};
    const double with = reweighting_loss(cache, w, 0.1);
    const double without = reweighting_loss(cache, w, 0.0);
    CHECK(with - without == doctest::Approx(0.1 * 3.5));
}

TEST_CASE("unit weights reproduce the cached full prediction") {
    std::mt19937_64 gen(3);
    const auto cache = synthetic::random_cache(gen, 50, 6, 3);
    const Vector ones(6, 1.0f);
    for (std::size_t e = 0; e < cache.num_examples(); ++e) {
        const Vector full = cache.summed(e);
        CHECK(reweighted_predict(cache, e, ones) == argmax(std::span<const float>(full)));
    }
    CHECK_THROWS_AS(reweighted_predict(cache, 0, Vector(5, 1.0f)), DimensionError);
}

TEST_CASE("synthetic oracle: reweighting finds the informative component") {
    int largest = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 gen(seed);
        const auto train = synthetic::informative_cache(gen, 16);
        const auto test = synthetic::informative_cache(gen, 200);
        // the informative component alone is a perfect classifier
        Vector only(21, 0.0f);
        only[0] = 1.0f;
        CHECK(reweighted_accuracy(test, only) == 1.0);
        const ComponentWeights cw = train_component_weights(train, TrainConfig{});
        CHECK(cw.stats.epochs <= 1000);
        CHECK(reweighted_accuracy(test, cw.w) >= 0.95);
        CHECK(reweighted_accuracy(test, Vector(21, 1.0f)) <= 0.75);
        if (std::max_element(cw.w.begin(), cw.w.end()) == cw.w.begin()) ++largest;
    }
    CHECK(largest >= 9);
}

TEST_CASE("training is deterministic and rejects bad input") {
    std::mt19937_64 gen(4);
    const auto cache = synthetic::informative_cache(gen, 16);
    CHECK(train_component_weights(cache, {}).w == train_component_weights(cache, {}).w);
    CHECK_THROWS_AS(train_component_weights(ContributionCache{}, {}), InputError);
    TrainConfig huge;
    huge.learning_rate = 1e308;
    CHECK_THROWS_AS(train_component_weights(cache, huge), TrainingDivergedError);
}

TEST_CASE("Calib+ fixes a biased binary construction") {
    // every example prefers label 0; label-1 rows are less confident
    std::vector<Vector> probs;
    std::vector<int> gold;
    for (int i = 0; i < 4; ++i) {
        probs.push_back({0.8f, 0.2f});
        gold.push_back(0);
    }
    for (int i = 0; i < 4; ++i) {
        probs.push_back({0.6f, 0.4f});
        gold.push_back(1);
    }
    // ranking condition: some v separates the groups iff
    // 0.8 v0 > 0.2 v1 and 0.6 v0 < 0.4 v1, i.e. 1.5 < v1/v0 < 4
    auto accuracy = [&](std::span<const float> v) {
        int ok = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) ok += calibrated_predict(probs[i], v) == static_cast<std::size_t>(gold[i]);
        return ok / 8.0;
    };
    CHECK(accuracy(Vector{1.0f, 1.0f}) == 0.5);
    const CalibrationWeights cal = train_calibration(probs, gold, TrainConfig{});
    CHECK(cal.stats.epochs <= 1000);
    CHECK(accuracy(cal.v) == 1.0);
    const double ratio = cal.v[1] / cal.v[0];
    CHECK(ratio > 1.5);
    CHECK(ratio < 4.0);

    CHECK_THROWS_AS(train_calibration({{0.5f, 0.6f}}, std::vector<int>{0}, {}), InputError);
    const CalibrationWeights same = train_calibration({{0.5f, 0.5f}, {0.7f, 0.3f}}, std::vector<int>{0, 0}, {});
    CHECK_FALSE(same.stats.warnings.empty());
}

TEST_CASE("prompt selection ranks by cosine similarity") {
    // exhaustive check against a direct ranking
    Matrix emb(6, 2);
    const float rows[6][2] = {{1, 0}, {0, 1}, {1, 1}, {-1, 0}, {2, 0.1f}, {0.5f, 0.5f}};
    for (int i = 0; i < 6; ++i) {
        emb(static_cast<std::size_t>(i), 0) = rows[i][0];
        emb(static_cast<std::size_t>(i), 1) = rows[i][1];
    }
    const Embedder embed = [&](std::span<const TokenId> t) {
        return Vector{emb(static_cast<std::size_t>(t[0]), 0), emb(static_cast<std::size_t>(t[0]), 1)};
    };
    std::vector<LabeledExample> pool;
    for (TokenId i = 1; i < 6; ++i) pool.push_back({{i}, 0});
    const std::vector<TokenId> query{0};
    const auto picked = prompt_selection(pool, query, 5, embed);
    // cos to (1,0): idx0 (0,1)=0, idx1 (1,1)=.707, idx2 (-1,0)=-1, idx3 (2,.1)=.9988, idx4 (.5,.5)=.707
    CHECK(picked == std::vector<std::size_t>{3, 1, 4, 0, 2});
    CHECK(cosine_similarity(Vector{1, 0}, Vector{0, 1}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cosine_similarity(Vector{0, 0}, Vector{0, 1}), DegenerateStatisticError);
    CHECK_THROWS_AS(prompt_selection(pool, query, 6, embed), InputError);
}

TEST_CASE("token-mean embedder averages embedding rows") {
    const auto w = init_random(oracle::small_config(1, 1, 4, 8, 8), 0);
    const auto embed = token_mean_embedder(w);
    const Vector e = embed(std::vector<TokenId>{1, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(e[i] == doctest::Approx((w.token_embedding(1, i) + w.token_embedding(3, i)) / 2.0));
    }
}
