#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mbfv/dpsgd.hpp"

using namespace mbfv;

namespace {

std::size_t max_degree(const Topology& topo) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < topo.n_users(); ++i) d = std::max(d, topo.degree(i));
    return d;
}

double max_divergence(const std::vector<std::vector<double>>& a,
                      const std::vector<std::vector<double>>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t p = 0; p < a[i].size(); ++p)
            m = std::max(m, std::abs(a[i][p] - b[i][p]));
    return m;
}

}  // namespace

TEST_CASE("mixing with zero gradients reaches consensus on the initial average") {
    Prng rng(81);
    Topology topo = gen_topology(10, 0.4, rng);
    MixingMatrix mixing = mixing_matrix(topo);
    Model model = Model::logistic(2);

    std::vector<std::vector<double>> ws;
    std::vector<double> avg(model.param_count(), 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
        ws.push_back(model.init_params(rng, 1.0));
        for (std::size_t p = 0; p < avg.size(); ++p) avg[p] += ws.back()[p] / 10.0;
    }
    std::vector<std::vector<double>> zeros(10, std::vector<double>(model.param_count(), 0.0));
    for (int round = 0; round < 200; ++round) ws = plaintext_step(ws, zeros, mixing, 0.1);
    for (const auto& w : ws)
        for (std::size_t p = 0; p < w.size(); ++p) CHECK(std::abs(w[p] - avg[p]) < 1e-8);
}

TEST_CASE("two-node mixing averages exactly in one step") {
    Topology topo(2);
    topo.add_edge(0, 1);
    MixingMatrix mixing = mixing_matrix(topo);
    std::vector<std::vector<double>> ws = {{0.0, 0.0, 0.0}, {2.0, 2.0, 2.0}};
    std::vector<std::vector<double>> zeros(2, std::vector<double>(3, 0.0));
    ws = plaintext_step(ws, zeros, mixing, 0.5);
    for (const auto& w : ws)
        for (double v : w) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("encrypted weighted average oracle") {
    RingParams p = preset("n32");
    NoiseParams noise;
    Prng rng(82);
    SecretKey sk = seckeygen(p, rng);
    PublicKey pk = pubkeygen(sk, p, noise, rng);
    FixedPointConfig fp = FixedPointConfig::create(13, p);
    const int ws = 16;

    auto enc = [&](double v) {
        EncodedChunk chunk = encode(std::vector<double>(8, v), fp);
        std::vector<Ciphertext> cts;
        for (const auto& pt : chunk.plaintexts) cts.push_back(encrypt(pk, pt, p, noise, rng));
        return cts;
    };
    auto own = enc(0.0);
    auto n1 = enc(1.0), n2 = enc(2.0);
    auto weights = quantize_weights({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 0, ws);
    auto avg = encrypted_weighted_avg(own, {&n1, &n2}, weights);

    EncodedChunk out;
    out.plaintexts = {decrypt(sk, avg[0])};
    out.length = 8;
    out.scale_exponent = 13 + ws;
    for (double v : decode(out, fp)) CHECK(std::abs(v - 1.0) < 4.0 * std::ldexp(1.0, -13));

    // mismatched chunk counts and weight counts are rejected
    CHECK_THROWS(encrypted_weighted_avg(own, {&n1}, weights));
    std::vector<Ciphertext> empty;
    CHECK_THROWS(encrypted_weighted_avg(own, {&n1, &empty}, weights));
}

TEST_CASE("private training tracks the plaintext trajectory") {
    Prng rng(83);
    Topology topo = gen_topology(6, 0.5, rng);
    Model model = Model::logistic(2);
    Dataset data = make_blobs(360, 17);
    auto shards = shard_dataset(data, 6);

    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.eta = 0.1;
    cfg.seed = 5;

    TrainReport plain = run_plaintext_training(model, shards, topo, cfg);
    TrainReport priv = run_private_training(model, shards, topo, cfg);

    const double bound = static_cast<double>(cfg.iterations) *
                         static_cast<double>(max_degree(topo) + 1) * std::ldexp(1.0, -13);
    CHECK(max_divergence(plain.final_w, priv.final_w) <= bound);
    CHECK(priv.loss_per_iter.size() == cfg.iterations);
    CHECK(priv.units_per_iter.size() == cfg.iterations);
}

TEST_CASE("one iteration with negligible step size returns the mixed start") {
    // all nodes start from the same w0, so mixing is the identity and the
    // only drift left is fixed-point quantization
    Topology topo(3);
    topo.add_edge(0, 1);
    topo.add_edge(1, 2);
    topo.add_edge(0, 2);
    Model model = Model::logistic(2);
    auto shards = shard_dataset(make_blobs(60, 4), 3);

    TrainConfig cfg;
    cfg.iterations = 1;
    cfg.eta = 1e-30;
    cfg.seed = 9;
    Prng init_rng(cfg.seed);
    std::vector<double> w0 = model.init_params(init_rng);

    TrainReport priv = run_private_training(model, shards, topo, cfg);
    for (const auto& w : priv.final_w)
        for (std::size_t p = 0; p < w.size(); ++p)
            CHECK(std::abs(w[p] - w0[p]) <= 4.0 * std::ldexp(1.0, -13));
}

TEST_CASE("per-iteration ciphertext units are 2*degree + 1") {
    Prng rng(84);
    Topology topo = gen_topology(6, 0.5, rng);
    Model model = Model::logistic(2);
    auto shards = shard_dataset(make_blobs(120, 11), 6);

    TrainConfig cfg;
    cfg.iterations = 3;
    cfg.seed = 2;
    PrivateTrainer trainer(model, shards, topo, cfg);
    TrainReport rep = trainer.run();
    CHECK(trainer.bootstrap_invocations() == 0);

    for (std::size_t k = 0; k < cfg.iterations; ++k) {
        for (std::size_t i = 0; i < 6; ++i) {
            std::uint64_t units = rep.units_per_iter[k][i];
            std::uint64_t deg = topo.degree(i);
            CHECK(units == 2 * deg + 1);  // request + answers + re-share
            CHECK(units >= deg);
            CHECK(units <= 3 * deg + 1);
        }
    }
}

TEST_CASE("zero iterations: parameters untouched, traffic only in setup") {
    Topology topo(3);
    topo.add_edge(0, 1);
    topo.add_edge(1, 2);
    topo.add_edge(0, 2);
    Model model = Model::logistic(2);
    auto shards = shard_dataset(make_blobs(30, 5), 3);

    TrainConfig cfg;
    cfg.iterations = 0;
    cfg.seed = 3;
    Prng init_rng(cfg.seed);
    std::vector<double> w0 = model.init_params(init_rng);

    PrivateTrainer trainer(model, shards, topo, cfg);
    TrainReport rep = trainer.run();
    for (const auto& w : rep.final_w) CHECK(w == w0);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& m = trainer.network().meter();
        CHECK(m.sent(i, Phase::setup).messages > 0);
        CHECK(m.sent(i, Phase::gradient_sharing).messages == 0);
        CHECK(m.sent(i, Phase::aggregation).messages == 0);
        CHECK(m.sent(i, Phase::conversion).messages == 0);
    }
}

TEST_CASE("setup-phase counters do not grow during training") {
    Prng rng(85);
    Topology topo = gen_topology(5, 0.6, rng);
    Model model = Model::logistic(2);
    auto shards = shard_dataset(make_blobs(100, 6), 5);

    TrainConfig cfg;
    cfg.seed = 7;
    cfg.iterations = 0;
    PrivateTrainer setup_only(model, shards, topo, cfg);
    setup_only.run();

    cfg.iterations = 2;
    PrivateTrainer trained(model, shards, topo, cfg);
    trained.run();

    for (std::size_t i = 0; i < 5; ++i) {
        const auto& a = setup_only.network().meter().sent(i, Phase::setup);
        const auto& b = trained.network().meter().sent(i, Phase::setup);
        CHECK(a.messages == b.messages);
        CHECK(a.ciphertext_units == b.ciphertext_units);
        CHECK(a.bytes == b.bytes);
    }
}

TEST_CASE("secrets and plaintext parameters never appear on the wire") {
    Prng rng(86);
    Topology topo = gen_topology(4, 0.7, rng);
    Model model = Model::logistic(2);
    auto shards = shard_dataset(make_blobs(80, 8), 4);

    TrainConfig cfg;
    cfg.iterations = 2;
    cfg.seed = 13;
    PrivateTrainer trainer(model, shards, topo, cfg);
    trainer.run();

    // coefficient blocks (the serialized poly minus its 12-byte header)
    std::vector<Bytes> forbidden;
    FixedPointConfig fp = FixedPointConfig::create(cfg.frac_bits, trainer.params());
    for (const auto& node : trainer.nodes()) {
        Bytes sk;
        put_poly(sk, node.personal_sk.s);
        forbidden.push_back(Bytes(sk.begin() + 12, sk.end()));
        for (const auto& [owner, share] : node.session_shares) {
            Bytes sh;
            put_poly(sh, share.s);
            forbidden.push_back(Bytes(sh.begin() + 12, sh.end()));
        }
        // current parameters encoded but unencrypted
        EncodedChunk chunk = encode(node.w, fp);
        Bytes enc;
        for (const auto& pt : chunk.plaintexts)
            for (std::uint64_t m : pt.m) put_u64(enc, m);
        forbidden.push_back(std::move(enc));
    }

    for (const auto& msg : trainer.network().transcript()) {
        for (const auto& pattern : forbidden) {
            REQUIRE(!pattern.empty());
            bool found = std::search(msg.payload.begin(), msg.payload.end(), pattern.begin(),
                                     pattern.end()) != msg.payload.end();
            CHECK(!found);
        }
    }
}

TEST_CASE("global key scope requires a complete topology") {
    Model model = Model::logistic(2);
    TrainConfig cfg;
    cfg.key_scope = KeyScope::global;
    cfg.iterations = 1;
    cfg.seed = 4;

    Topology path(3);
    path.add_edge(0, 1);
    path.add_edge(1, 2);
    CHECK_THROWS(PrivateTrainer(model, shard_dataset(make_blobs(30, 2), 3), path, cfg));

    Topology complete(3);
    complete.add_edge(0, 1);
    complete.add_edge(1, 2);
    complete.add_edge(0, 2);
    auto shards = shard_dataset(make_blobs(60, 2), 3);
    TrainReport priv = run_private_training(model, shards, complete, cfg);

    TrainConfig plain_cfg = cfg;
    plain_cfg.key_scope = KeyScope::neighborhood;
    TrainReport plain = run_plaintext_training(model, shards, complete, plain_cfg);
    CHECK(max_divergence(plain.final_w, priv.final_w) <= 3.0 * std::ldexp(1.0, -13));
}

TEST_CASE("oversized mixing weights force distributed bootstrapping") {
    // weight_bits = 17 pushes the advisory noise bound past q/(4t) at the
    // first aggregation, so every node bootstraps every iteration
    Prng rng(87);
    Topology topo = gen_topology(6, 0.5, rng);
    Model model = Model::logistic(2);
    auto shards = shard_dataset(make_blobs(120, 14), 6);

    TrainConfig cfg;
    cfg.iterations = 2;
    cfg.weight_bits = 17;
    cfg.seed = 6;
    PrivateTrainer trainer(model, shards, topo, cfg);
    TrainReport priv = trainer.run();
    CHECK(trainer.bootstrap_invocations() == 12);  // 6 nodes x 2 iterations

    TrainReport plain = run_plaintext_training(model, shards, topo, cfg);
    const double bound = 2.0 * static_cast<double>(max_degree(topo) + 1) * std::ldexp(1.0, -13);
    CHECK(max_divergence(plain.final_w, priv.final_w) <= bound);
}

TEST_CASE("trainer input validation") {
    Model model = Model::logistic(2);
    Topology topo(3);
    topo.add_edge(0, 1);
    topo.add_edge(1, 2);
    TrainConfig cfg;
    CHECK_THROWS(PrivateTrainer(model, shard_dataset(make_blobs(20, 1), 2), topo, cfg));
    TrainConfig bad = cfg;
    bad.eta = 0.0;
    CHECK_THROWS(PrivateTrainer(model, shard_dataset(make_blobs(30, 1), 3), topo, bad));
    bad = cfg;
    bad.ring_preset = "n64";
    CHECK_THROWS(PrivateTrainer(model, shard_dataset(make_blobs(30, 1), 3), topo, bad));
}
