#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mbfv/model.hpp"

using namespace mbfv;

namespace {

// central finite difference of the batch loss
std::vector<double> numeric_gradient(const Model& model, const std::vector<double>& w,
                                     const Dataset& batch) {
    const double h = 1e-6;
    std::vector<double> g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        std::vector<double> lo = w, hi = w;
        lo[i] -= h;
        hi[i] += h;
        g[i] = (model.loss(hi, batch) - model.loss(lo, batch)) / (2.0 * h);
    }
    return g;
}

void check_gradient(const Model& model, Prng& rng, int probes) {
    Dataset batch;
    for (int s = 0; s < 8; ++s) {
        std::vector<double> x = {rng.uniform_unit() * 4.0 - 2.0, rng.uniform_unit() * 4.0 - 2.0};
        batch.push_back(Sample{x, static_cast<int>(rng.uniform_below(2))});
    }
    for (int tr = 0; tr < probes; ++tr) {
        std::vector<double> w = model.init_params(rng, 0.5);
        std::vector<double> ana = model.gradient(w, batch);
        std::vector<double> num = numeric_gradient(model, w, batch);
        for (std::size_t i = 0; i < w.size(); ++i) {
            double denom = std::max({std::abs(ana[i]), std::abs(num[i]), 1e-4});
            CHECK(std::abs(ana[i] - num[i]) / denom < 1e-5);
        }
    }
}

}  // namespace

TEST_CASE("logistic gradient matches finite differences") {
    Prng rng(71);
    check_gradient(Model::logistic(2), rng, 100);
}

TEST_CASE("mlp gradient matches finite differences") {
    Prng rng(72);
    check_gradient(Model::mlp(2, 5, 3), rng, 100);
}

TEST_CASE("balanced labels at w = 0 give zero feature gradient") {
    Model m = Model::logistic(2);
    std::vector<double> w(m.param_count(), 0.0);
    Dataset batch = {Sample{{1.5, -0.5}, 1}, Sample{{1.5, -0.5}, 0}};
    std::vector<double> g = m.gradient(w, batch);
    for (double v : g) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("duplicating a batch leaves loss and gradient unchanged") {
    Model m = Model::mlp(2, 4, 2);
    Prng rng(73);
    std::vector<double> w = m.init_params(rng);
    Dataset batch = {Sample{{0.3, -1.2}, 0}, Sample{{-0.7, 0.4}, 1}};
    Dataset doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());
    CHECK(m.loss(w, batch) == doctest::Approx(m.loss(w, doubled)));
    std::vector<double> g1 = m.gradient(w, batch), g2 = m.gradient(w, doubled);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]));
}

TEST_CASE("gradient of an empty batch throws") {
    Model m = Model::logistic(2);
    std::vector<double> w(m.param_count(), 0.0);
    CHECK_THROWS(m.gradient(w, {}));
}

TEST_CASE("parameter counts") {
    CHECK(Model::logistic(2).param_count() == 3);
    CHECK(Model::logistic(10).param_count() == 11);
    CHECK(Model::mlp(2, 5, 3).param_count() == 2 * 5 + 5 + 3 * 5 + 3);
}

TEST_CASE("blob task is learnable by the fixed separator") {
    Dataset data = make_blobs(500, 7);
    CHECK(data.size() == 500);
    // blobs sit at (+-2, +-2); the diagonal w = (1, 1, 0) should separate
    // nearly everything
    Model m = Model::logistic(2);
    std::vector<double> w = {1.0, 1.0, 0.0};
    CHECK(m.accuracy(w, data) >= 0.95);

    // both labels actually occur
    std::size_t ones = 0;
    for (const auto& s : data) ones += static_cast<std::size_t>(s.label);
    CHECK(ones > 150);
    CHECK(ones < 350);
}

TEST_CASE("blob sampling is deterministic per seed") {
    Dataset a = make_blobs(50, 3), b = make_blobs(50, 3), c = make_blobs(50, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].label == b[i].label);
    }
    bool differs = false;
    for (std::size_t i = 0; i < a.size() && !differs; ++i) differs = a[i].x != c[i].x;
    CHECK(differs);
}

TEST_CASE("shard_dataset deals round robin") {
    Dataset data = make_blobs(10, 9);
    auto shards = shard_dataset(data, 3);
    REQUIRE(shards.size() == 3);
    CHECK(shards[0].size() == 4);
    CHECK(shards[1].size() == 3);
    CHECK(shards[2].size() == 3);
    CHECK(shards[0][0].x == data[0].x);
    CHECK(shards[1][0].x == data[1].x);
    CHECK(shards[2][1].x == data[5].x);
}
