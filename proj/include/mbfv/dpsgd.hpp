#pragma once

// Training layer: plaintext D-PSGD (the ground-truth oracle) and its
// privacy-preserving counterpart running over the multiparty BFV protocol
// and the simulated network. One training iteration spans five synchronous
// sub-rounds: bootstrap request, bootstrap shares, conversion request,
// conversion shares, decrypt/update/re-share.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbfv/bfv.hpp"
#include "mbfv/codec.hpp"
#include "mbfv/model.hpp"
#include "mbfv/multiparty.hpp"
#include "mbfv/netsim.hpp"
#include "mbfv/ring.hpp"

namespace mbfv {

enum class KeyScope { neighborhood, global };

struct TrainConfig {
    double eta = 0.1;
    std::size_t iterations = 10;
    std::size_t batch_size = 8;
    KeyScope key_scope = KeyScope::neighborhood;
    int frac_bits = 13;
    int weight_bits = 16;
    std::string ring_preset = "n32";
    std::uint64_t seed = 1;

    void validate() const {
        if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
        if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
        if (frac_bits < 1 || weight_bits < 1)
            throw std::invalid_argument("fraction bits must be positive");
    }
};

struct TrainReport {
    std::vector<double> loss_per_iter;
    std::vector<double> test_acc_per_iter;
    std::vector<std::vector<double>> final_w;
    std::vector<double> averaged_w;
    // wall-clock per phase, seconds
    double time_init = 0.0;
    double time_encrypt = 0.0;
    double time_eval = 0.0;
    double time_decrypt = 0.0;
    double time_total = 0.0;
    // per-iteration, per-user ciphertext units sent
    std::vector<std::vector<std::uint64_t>> units_per_iter;
    std::string meter_csv;
};

inline std::vector<double> local_gradient(const Model& model, const Dataset& batch,
                                          const std::vector<double>& w) {
    return model.gradient(w, batch);
}

/// Deterministic batch selection shared by the plaintext and private runs,
/// so the two trajectories see identical samples.
inline Dataset pick_batch(const Dataset& shard, std::size_t node, std::size_t iter,
                          std::uint64_t seed, std::size_t batch_size) {
    Prng rng(seed ^ (0x9e3779b97f4a7c15ull * (node + 1) + iter));
    Dataset batch;
    batch.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b)
        batch.push_back(shard[rng.uniform_below(shard.size())]);
    return batch;
}

/// One decentralized-SGD step for every node: gradients are taken at the
/// pre-mixing parameters, then W_{k+1,i} = sum_j E_ij W_{k,j} - eta * g_i.
inline std::vector<std::vector<double>> plaintext_step(
    const std::vector<std::vector<double>>& ws, const std::vector<std::vector<double>>& grads,
    const MixingMatrix& mixing, double eta) {
    const std::size_t n = ws.size();
    const std::size_t h = ws.front().size();
    std::vector<std::vector<double>> next(n, std::vector<double>(h, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (mixing.w[i][j] == 0.0) continue;
            for (std::size_t p = 0; p < h; ++p) next[i][p] += mixing.w[i][j] * ws[j][p];
        }
        for (std::size_t p = 0; p < h; ++p) next[i][p] -= eta * grads[i][p];
    }
    return next;
}

inline TrainReport run_plaintext_training(const Model& model, const std::vector<Dataset>& shards,
                                          const Topology& topo, const TrainConfig& cfg,
                                          const Dataset* test_set = nullptr) {
    cfg.validate();
    const std::size_t n = topo.n_users();
    MixingMatrix mixing = mixing_matrix(topo);
    Prng init_rng(cfg.seed);
    std::vector<double> w0 = model.init_params(init_rng);
    std::vector<std::vector<double>> ws(n, w0);

    TrainReport report;
    for (std::size_t k = 0; k < cfg.iterations; ++k) {
        std::vector<std::vector<double>> grads(n);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Dataset batch = pick_batch(shards[i], i, k, cfg.seed, cfg.batch_size);
            grads[i] = local_gradient(model, batch, ws[i]);
            loss += model.loss(ws[i], batch);
        }
        ws = plaintext_step(ws, grads, mixing, cfg.eta);
        report.loss_per_iter.push_back(loss / static_cast<double>(n));
        if (test_set) report.test_acc_per_iter.push_back(model.accuracy(ws[0], *test_set));
    }
    report.final_w = ws;
    report.averaged_w.assign(model.param_count(), 0.0);
    for (const auto& w : ws)
        for (std::size_t p = 0; p < w.size(); ++p)
            report.averaged_w[p] += w[p] / static_cast<double>(n);
    return report;
}

// --- private mode ------------------------------------------------------------

namespace wire {

// ciphertext bundle: tag | u32 sender | u32 count | count * (c0, c1)
inline Bytes ct_bundle(std::size_t sender, const std::vector<Ciphertext>& cts) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(WireTag::ciphertext));
    put_u32(out, static_cast<std::uint32_t>(sender));
    put_u32(out, static_cast<std::uint32_t>(cts.size()));
    for (const auto& ct : cts) {
        put_poly(out, ct.c0);
        put_poly(out, ct.c1);
    }
    return out;
}

inline std::vector<Ciphertext> parse_ct_bundle(const Bytes& in, const RingParams& params,
                                               std::size_t& sender) {
    std::size_t pos = 0;
    if (in.at(pos++) != static_cast<std::uint8_t>(WireTag::ciphertext))
        throw std::invalid_argument("expected ciphertext bundle");
    sender = get_u32(in, pos);
    std::uint32_t count = get_u32(in, pos);
    std::vector<Ciphertext> cts;
    for (std::uint32_t c = 0; c < count; ++c) {
        Poly c0 = get_poly(in, pos, params);
        Poly c1 = get_poly(in, pos, params);
        cts.push_back(Ciphertext{std::move(c0), std::move(c1), 0.0});
    }
    return cts;
}

// request: tag | u32 owner | u32 count | count * c1
inline Bytes c1_request(WireTag tag, std::size_t owner, const std::vector<Ciphertext>& cts) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(tag));
    put_u32(out, static_cast<std::uint32_t>(owner));
    put_u32(out, static_cast<std::uint32_t>(cts.size()));
    for (const auto& ct : cts) put_poly(out, ct.c1);
    return out;
}

inline std::vector<Poly> parse_c1_request(const Bytes& in, const RingParams& params, WireTag tag,
                                          std::size_t& owner) {
    std::size_t pos = 0;
    if (in.at(pos++) != static_cast<std::uint8_t>(tag))
        throw std::invalid_argument("unexpected request tag");
    owner = get_u32(in, pos);
    std::uint32_t count = get_u32(in, pos);
    std::vector<Poly> c1s;
    for (std::uint32_t c = 0; c < count; ++c) c1s.push_back(get_poly(in, pos, params));
    return c1s;
}

// share bundle: tag | u32 party | u32 count | count * (a, b)
template <typename Share>
Bytes share_bundle(WireTag tag, std::uint32_t party, const std::vector<Share>& shares,
                   const Poly Share::*a, const Poly Share::*b) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(tag));
    put_u32(out, party);
    put_u32(out, static_cast<std::uint32_t>(shares.size()));
    for (const auto& sh : shares) {
        put_poly(out, sh.*a);
        put_poly(out, sh.*b);
    }
    return out;
}

template <typename Share>
std::vector<Share> parse_share_bundle(const Bytes& in, const RingParams& params, WireTag tag,
                                      Poly Share::*a, Poly Share::*b) {
    std::size_t pos = 0;
    if (in.at(pos++) != static_cast<std::uint8_t>(tag))
        throw std::invalid_argument("unexpected share tag");
    std::uint32_t party = get_u32(in, pos);
    std::uint32_t count = get_u32(in, pos);
    std::vector<Share> shares(count);
    for (auto& sh : shares) {
        sh.party_id = party;
        sh.*a = get_poly(in, pos, params);
        sh.*b = get_poly(in, pos, params);
    }
    return shares;
}

}  // namespace wire

struct NodeState {
    std::size_t id = 0;
    Dataset shard;
    std::vector<double> w;
    SecretKey personal_sk;
    PublicKey personal_pk;
    // one additive share per session this node is a member of, keyed by the
    // session owner (recipient) id
    std::map<std::size_t, SecretKeyShare> session_shares;
    // combined system public keys, keyed by session owner
    std::map<std::size_t, PublicKey> session_pks;
    std::map<std::size_t, PublicKey> neighbor_personal_pks;
    // latest encrypted parameters from each neighbor, under this node's
    // session key
    std::map<std::size_t, std::vector<Ciphertext>> neighbor_cts;

    // per-iteration scratch
    std::vector<Ciphertext> agg;
    std::vector<double> grad;
    std::vector<BootstrapShare> pending_bootstrap_own;
    bool bootstrap_requested = false;
};

/// Weighted average over own + neighbor ciphertexts with quantized row
/// weights; realizes Eval(f) as hom_add of plain_scalar_mul terms.
inline std::vector<Ciphertext> encrypted_weighted_avg(
    const std::vector<Ciphertext>& own, const std::vector<const std::vector<Ciphertext>*>& others,
    const std::vector<std::uint64_t>& weights) {
    if (weights.size() != others.size() + 1)
        throw std::invalid_argument("weight count != participant count");
    std::vector<Ciphertext> acc;
    for (std::size_t c = 0; c < own.size(); ++c) acc.push_back(plain_scalar_mul(own[c], weights[0]));
    for (std::size_t j = 0; j < others.size(); ++j) {
        const auto& cts = *others[j];
        if (cts.size() != own.size()) throw std::invalid_argument("chunk count mismatch");
        for (std::size_t c = 0; c < own.size(); ++c)
            acc[c] = hom_add(acc[c], plain_scalar_mul(cts[c], weights[j + 1]));
    }
    return acc;
}

class PrivateTrainer {
public:
    PrivateTrainer(Model model, std::vector<Dataset> shards, Topology topo, TrainConfig cfg,
                   const Dataset* test_set = nullptr)
        : model_(std::move(model)),
          shards_(std::move(shards)),
          cfg_(cfg),
          params_(preset(cfg.ring_preset)),
          fp_(FixedPointConfig::create(cfg.frac_bits, params_)),
          net_(std::move(topo)),
          test_set_(test_set) {
        cfg_.validate();
        if (shards_.size() != net_.topology().n_users())
            throw std::invalid_argument("one dataset shard per user required");
        if (cfg_.key_scope == KeyScope::global) {
            const auto& t = net_.topology();
            for (std::size_t i = 0; i < t.n_users(); ++i)
                if (t.degree(i) != t.n_users() - 1)
                    throw std::invalid_argument(
                        "global key scope requires a complete topology (all-N party set)");
        }
    }

    TrainReport run() {
        auto t0 = std::chrono::steady_clock::now();
        setup();
        for (std::size_t k = 0; k < cfg_.iterations; ++k) iterate(k);
        TrainReport report = finalize();
        report.time_total = seconds_since(t0);
        report.time_init = time_init_;
        report.time_encrypt = time_encrypt_;
        report.time_eval = time_eval_;
        report.time_decrypt = time_decrypt_;
        report.units_per_iter = units_per_iter_;
        report.loss_per_iter = loss_per_iter_;
        report.test_acc_per_iter = test_acc_per_iter_;
        report.meter_csv = net_.meter().dump_csv();
        return report;
    }

    Network& network() { return net_; }
    const std::vector<NodeState>& nodes() const { return nodes_; }
    const RingParams& params() const { return params_; }
    const NoiseParams& noise() const { return noise_; }
    std::size_t bootstrap_invocations() const { return bootstrap_invocations_; }

    /// Session owned by recipient i: {i} union N_i, or all users in global
    /// scope (owner collapses to 0).
    std::size_t session_owner(std::size_t i) const {
        return cfg_.key_scope == KeyScope::global ? 0 : i;
    }

    std::vector<std::size_t> session_parties(std::size_t owner) const {
        const auto& topo = net_.topology();
        if (cfg_.key_scope == KeyScope::global) {
            std::vector<std::size_t> all(topo.n_users());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            return all;
        }
        std::vector<std::size_t> parties{owner};
        for (std::size_t j : topo.neighbors(owner)) parties.push_back(j);
        std::sort(parties.begin(), parties.end());
        return parties;
    }

private:
    using Clock = std::chrono::steady_clock;

    static double seconds_since(Clock::time_point t0) {
        return std::chrono::duration<double>(Clock::now() - t0).count();
    }

    Poly session_crp(std::size_t owner) const {
        return common_random_poly(params_, session_seed(owner, 0), 1);
    }

    Poly session_alpha(std::size_t owner, std::size_t iter) const {
        return common_random_poly(params_, session_seed(owner, iter + 1), 2);
    }

    std::array<std::uint8_t, 32> session_seed(std::size_t owner, std::size_t salt) const {
        std::array<std::uint8_t, 32> seed{};
        auto put = [&](std::size_t off, std::uint64_t v) {
            for (int b = 0; b < 8; ++b) seed[off + b] = static_cast<std::uint8_t>(v >> (8 * b));
        };
        put(0, cfg_.seed);
        put(8, owner);
        put(16, salt);
        return seed;
    }

    void setup() {
        auto t0 = Clock::now();
        const auto& topo = net_.topology();
        const std::size_t n = topo.n_users();
        Prng init_rng(cfg_.seed);
        std::vector<double> w0 = model_.init_params(init_rng);

        MixingMatrix mixing = mixing_matrix(topo);
        rows_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            rows_[i] = quantize_weights(mixing.local_row(topo, i), 0, cfg_.weight_bits);

        nodes_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            NodeState& node = nodes_[i];
            node.id = i;
            node.shard = shards_[i];
            node.w = w0;
            Prng rng(cfg_.seed ^ (0xd1b54a32d192ed03ull * (i + 1)));
            node.personal_sk = seckeygen(params_, rng);
            node.personal_pk = pubkeygen(node.personal_sk, params_, noise_, rng);
            // one share per session membership
            std::vector<std::size_t> owners;
            if (cfg_.key_scope == KeyScope::global) {
                owners.push_back(0);
            } else {
                owners.push_back(i);
                for (std::size_t j : topo.neighbors(i)) owners.push_back(j);
            }
            for (std::size_t o : owners)
                node.session_shares.emplace(o, mbfv_seckeygen(static_cast<std::uint32_t>(i), params_, rng));
        }

        // round S1: personal pk broadcast; pubkey share unicast to the owner
        for (std::size_t i = 0; i < n; ++i) {
            NodeState& node = nodes_[i];
            Bytes pk_payload;
            pk_payload.push_back(static_cast<std::uint8_t>(WireTag::personal_pk));
            put_u32(pk_payload, static_cast<std::uint32_t>(i));
            put_poly(pk_payload, node.personal_pk.p0);
            put_poly(pk_payload, node.personal_pk.p1);
            net_.send(i, topo.neighbors(i), std::move(pk_payload), Phase::setup, true);

            Prng rng(cfg_.seed ^ (0xaef17502108ef2d9ull * (i + 1)));
            for (const auto& [owner, share] : node.session_shares) {
                PubKeyShare pks = mbfv_pubkeygen_share(share, session_crp(owner), noise_, rng);
                if (owner == i && cfg_.key_scope != KeyScope::global) {
                    own_pubkey_shares_[i].push_back(pks);
                } else if (cfg_.key_scope == KeyScope::global && i == 0) {
                    own_pubkey_shares_[0].push_back(pks);
                } else {
                    std::size_t dest = cfg_.key_scope == KeyScope::global ? 0 : owner;
                    net_.send(i, {dest}, pubkey_share_bytes(pks), Phase::setup, false);
                }
            }
        }
        net_.round_barrier();

        // round S2: owners combine and broadcast the combined system pk
        for (std::size_t i = 0; i < n; ++i) {
            NodeState& node = nodes_[i];
            std::vector<PubKeyShare> shares;
            for (auto& msg : net_.receive(i)) {
                std::size_t pos = 0;
                switch (static_cast<WireTag>(msg.payload.at(0))) {
                    case WireTag::personal_pk: {
                        ++pos;
                        std::uint32_t id = get_u32(msg.payload, pos);
                        Poly p0 = get_poly(msg.payload, pos, params_);
                        Poly p1 = get_poly(msg.payload, pos, params_);
                        node.neighbor_personal_pks.emplace(id, PublicKey{std::move(p0), std::move(p1)});
                        break;
                    }
                    case WireTag::pubkey_share:
                        shares.push_back(get_pubkey_share(msg.payload, pos, params_));
                        break;
                    default:
                        throw std::runtime_error("protocol abort in setup: unexpected payload");
                }
            }
            const std::size_t owner = session_owner(i);
            const bool is_owner = cfg_.key_scope == KeyScope::global ? (i == 0) : true;
            if (is_owner) {
                for (const auto& s : own_pubkey_shares_[i]) shares.push_back(s);
                auto parties = session_parties(owner);
                if (shares.size() != parties.size())
                    throw std::runtime_error("protocol abort in setup: missing pubkey share");
                PublicKey pk = mbfv_pubkeygen_combine(shares, session_crp(owner), parties.size());
                Bytes payload;
                payload.push_back(static_cast<std::uint8_t>(WireTag::personal_pk));
                put_u32(payload, static_cast<std::uint32_t>(owner) | 0x80000000u);
                put_poly(payload, pk.p0);
                put_poly(payload, pk.p1);
                node.session_pks.emplace(owner, pk);
                net_.send(i, topo.neighbors(i), std::move(payload), Phase::setup, true);
            }
        }
        net_.round_barrier();

        // round S3: collect session pks; send initial encrypted parameters
        for (std::size_t i = 0; i < n; ++i) {
            NodeState& node = nodes_[i];
            for (auto& msg : net_.receive(i)) {
                std::size_t pos = 1;
                std::uint32_t id = get_u32(msg.payload, pos);
                if ((id & 0x80000000u) == 0) continue;  // late personal pk (none expected)
                Poly p0 = get_poly(msg.payload, pos, params_);
                Poly p1 = get_poly(msg.payload, pos, params_);
                node.session_pks.emplace(id & 0x7fffffffu, PublicKey{std::move(p0), std::move(p1)});
            }
        }
        for (std::size_t i = 0; i < n; ++i) share_parameters(i, Phase::setup);
        net_.round_barrier();

        time_init_ = seconds_since(t0);
    }

    std::vector<Ciphertext> encrypt_chunk(const EncodedChunk& chunk, const PublicKey& pk,
                                          Prng& rng) {
        std::vector<Ciphertext> cts;
        cts.reserve(chunk.plaintexts.size());
        for (const auto& pt : chunk.plaintexts) cts.push_back(encrypt(pk, pt, params_, noise_, rng));
        return cts;
    }

    /// Encrypt this node's current parameters under each neighbor's session
    /// key and ship them (one broadcast under the single key in global
    /// scope).
    void share_parameters(std::size_t i, Phase phase) {
        const auto& topo = net_.topology();
        NodeState& node = nodes_[i];
        EncodedChunk chunk = encode(node.w, fp_);
        Prng rng(cfg_.seed ^ (0xc2b2ae3d27d4eb4full * (i + 1)) ^ (net_.round() << 20));
        auto t0 = Clock::now();
        if (cfg_.key_scope == KeyScope::global) {
            auto cts = encrypt_chunk(chunk, nodes_[i].session_pks.at(0), rng);
            time_encrypt_ += seconds_since(t0);
            net_.send(i, topo.neighbors(i), wire::ct_bundle(i, cts), phase, true,
                      cts.size());
        } else {
            for (std::size_t j : topo.neighbors(i)) {
                auto cts = encrypt_chunk(chunk, node.session_pks.at(j), rng);
                net_.send(i, {j}, wire::ct_bundle(i, cts), phase, false, cts.size());
            }
            time_encrypt_ += seconds_since(t0);
        }
    }

    void iterate(std::size_t k) {
        const auto& topo = net_.topology();
        const std::size_t n = topo.n_users();
        std::vector<std::uint64_t> units_before(n);
        for (std::size_t i = 0; i < n; ++i)
            units_before[i] = net_.meter().sent_total(i).ciphertext_units;

        // sub-round A: gradient, local aggregation, bootstrap request if due
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            NodeState& node = nodes_[i];
            // pick up parameter ciphertexts sent at the end of the previous
            // iteration (or during setup)
            auto t_in = Clock::now();
            for (auto& msg : net_.receive(i)) {
                std::size_t sender = 0;
                auto cts = wire::parse_ct_bundle(msg.payload, params_, sender);
                for (auto& ct : cts) ct.noise_bound_hint = fresh_noise_bound(params_, noise_);
                node.neighbor_cts[sender] = std::move(cts);
            }
            time_eval_ += seconds_since(t_in);
            Dataset batch = pick_batch(node.shard, i, k, cfg_.seed, cfg_.batch_size);
            node.grad = local_gradient(model_, batch, node.w);
            loss += model_.loss(node.w, batch);

            Prng rng(cfg_.seed ^ (0x94d049bb133111ebull * (i + 1)) ^ (k << 24));
            const std::size_t owner = session_owner(i);
            auto t_enc = Clock::now();
            auto own_cts = encrypt_chunk(encode(node.w, fp_), node.session_pks.at(owner), rng);
            time_encrypt_ += seconds_since(t_enc);

            auto neighbors = topo.neighbors(i);
            std::vector<const std::vector<Ciphertext>*> others;
            for (std::size_t j : neighbors) {
                auto it = node.neighbor_cts.find(j);
                if (it == node.neighbor_cts.end())
                    throw std::runtime_error("protocol abort in aggregation: missing ciphertext from neighbor " +
                                             std::to_string(j));
                others.push_back(&it->second);
            }
            auto t_eval = Clock::now();
            node.agg = encrypted_weighted_avg(own_cts, others, rows_[i]);

            node.bootstrap_requested = bootstrap_due(node.agg.front());
            if (node.bootstrap_requested) {
                ++bootstrap_invocations_;
                net_.send(i, neighbors, wire::c1_request(WireTag::bootstrap_c1, i, node.agg),
                          Phase::aggregation, true, node.agg.size());
            }
            time_eval_ += seconds_since(t_eval);
        }
        loss_per_iter_.push_back(loss / static_cast<double>(n));
        net_.round_barrier();

        // sub-round B: answer bootstrap requests
        auto t_boot = Clock::now();
        for (std::size_t i = 0; i < n; ++i) answer_requests(i, k, WireTag::bootstrap_c1);
        time_eval_ += seconds_since(t_boot);
        net_.round_barrier();

        // sub-round C: combine bootstrap shares, then broadcast the
        // conversion request (only c1 leaves the node)
        t_boot = Clock::now();
        for (std::size_t i = 0; i < n; ++i) {
            NodeState& node = nodes_[i];
            if (node.bootstrap_requested) {
                auto parties = session_parties(session_owner(i));
                std::vector<std::vector<BootstrapShare>> per_chunk(node.agg.size());
                for (auto& msg : net_.receive(i)) {
                    auto shares = wire::parse_share_bundle<BootstrapShare>(
                        msg.payload, params_, WireTag::bootstrap_share, &BootstrapShare::eta0,
                        &BootstrapShare::eta1);
                    for (std::size_t c = 0; c < shares.size(); ++c) per_chunk[c].push_back(shares[c]);
                }
                auto own = make_bootstrap_shares(i, i, node.agg, k);
                for (std::size_t c = 0; c < own.size(); ++c) per_chunk[c].push_back(own[c]);
                Poly alpha = session_alpha(session_owner(i), k);
                for (std::size_t c = 0; c < node.agg.size(); ++c) {
                    node.agg[c] = mbfv_bootstrap_combine(node.agg[c], per_chunk[c], alpha,
                                                         parties.size(), noise_);
                }
            } else {
                net_.receive(i);  // drop nothing; inbox should be empty
            }
            net_.send(i, topo.neighbors(i), wire::c1_request(WireTag::convert_c1, i, node.agg),
                      Phase::conversion, true, node.agg.size());
        }
        time_eval_ += seconds_since(t_boot);
        net_.round_barrier();

        // sub-round D: answer conversion requests (partial decryptions)
        auto t_cvt = Clock::now();
        for (std::size_t i = 0; i < n; ++i) answer_requests(i, k, WireTag::convert_c1);
        time_decrypt_ += seconds_since(t_cvt);
        net_.round_barrier();

        // sub-round E: combine, decrypt, update, re-share
        for (std::size_t i = 0; i < n; ++i) {
            NodeState& node = nodes_[i];
            auto t_dec = Clock::now();
            auto parties = session_parties(session_owner(i));
            std::vector<std::vector<ConvertShare>> per_chunk(node.agg.size());
            for (auto& msg : net_.receive(i)) {
                auto shares = wire::parse_share_bundle<ConvertShare>(
                    msg.payload, params_, WireTag::convert_share, &ConvertShare::h0,
                    &ConvertShare::h1);
                for (std::size_t c = 0; c < shares.size(); ++c) per_chunk[c].push_back(shares[c]);
            }
            auto own = make_convert_shares(i, i, node.agg, k);
            for (std::size_t c = 0; c < own.size(); ++c) per_chunk[c].push_back(own[c]);

            EncodedChunk decoded;
            decoded.length = node.w.size();
            decoded.scale_exponent = cfg_.frac_bits + cfg_.weight_bits;
            for (std::size_t c = 0; c < node.agg.size(); ++c) {
                if (per_chunk[c].size() != parties.size())
                    throw std::runtime_error("protocol abort in conversion: missing share for node " +
                                             std::to_string(i));
                Ciphertext converted =
                    mbfv_convert_combine(node.agg[c], per_chunk[c], parties.size(), noise_);
                decoded.plaintexts.push_back(decrypt(node.personal_sk, converted));
            }
            std::vector<double> mixed = decode(decoded, fp_);
            for (std::size_t p = 0; p < node.w.size(); ++p)
                node.w[p] = mixed[p] - cfg_.eta * node.grad[p];
            time_decrypt_ += seconds_since(t_dec);
        }
        for (std::size_t i = 0; i < n; ++i) share_parameters(i, Phase::gradient_sharing);
        net_.round_barrier();

        std::vector<std::uint64_t> units(n);
        for (std::size_t i = 0; i < n; ++i)
            units[i] = net_.meter().sent_total(i).ciphertext_units - units_before[i];
        units_per_iter_.push_back(std::move(units));
        if (test_set_) test_acc_per_iter_.push_back(model_.accuracy(nodes_[0].w, *test_set_));
    }

    std::vector<BootstrapShare> make_bootstrap_shares(std::size_t party, std::size_t owner,
                                                      const std::vector<Ciphertext>& cts,
                                                      std::size_t iter) {
        NodeState& node = nodes_[party];
        Poly alpha = session_alpha(session_owner(owner), iter);
        Prng rng(cfg_.seed ^ (0xbf58476d1ce4e5b9ull * (party + 1)) ^ (owner << 16) ^ (iter << 32) ^ 0xb0u);
        std::vector<BootstrapShare> out;
        for (const auto& ct : cts)
            out.push_back(mbfv_bootstrap_share(node.session_shares.at(session_owner(owner)), ct.c1,
                                               alpha, noise_, rng));
        return out;
    }

    std::vector<ConvertShare> make_convert_shares(std::size_t party, std::size_t owner,
                                                  const std::vector<Ciphertext>& cts,
                                                  std::size_t iter) {
        NodeState& node = nodes_[party];
        const PublicKey& recipient_pk =
            party == owner ? node.personal_pk : node.neighbor_personal_pks.at(owner);
        Prng rng(cfg_.seed ^ (0x2545f4914f6cdd1dull * (party + 1)) ^ (owner << 16) ^ (iter << 32) ^ 0xc0u);
        std::vector<ConvertShare> out;
        for (const auto& ct : cts)
            out.push_back(mbfv_convert_share(node.session_shares.at(session_owner(owner)), ct.c1,
                                             recipient_pk, noise_, rng));
        return out;
    }

    // answer every pending c1 request of the given kind addressed to a
    // session this node belongs to
    void answer_requests(std::size_t i, std::size_t iter, WireTag kind) {
        for (auto& msg : net_.receive(i)) {
            if (static_cast<WireTag>(msg.payload.at(0)) != kind)
                throw std::runtime_error("protocol abort: unexpected message kind in share round");
            std::size_t owner = 0;
            auto c1s = wire::parse_c1_request(msg.payload, params_, kind, owner);
            std::vector<Ciphertext> cts;
            for (auto& c1 : c1s) cts.push_back(Ciphertext{Poly(params_), std::move(c1), 0.0});
            if (kind == WireTag::convert_c1) {
                auto shares = make_convert_shares(i, owner, cts, iter);
                net_.send(i, {owner},
                          wire::share_bundle(WireTag::convert_share, static_cast<std::uint32_t>(i),
                                             shares, &ConvertShare::h0, &ConvertShare::h1),
                          Phase::conversion, false, shares.size());
            } else {
                auto shares = make_bootstrap_shares(i, owner, cts, iter);
                net_.send(i, {owner},
                          wire::share_bundle(WireTag::bootstrap_share, static_cast<std::uint32_t>(i),
                                             shares, &BootstrapShare::eta0, &BootstrapShare::eta1),
                          Phase::aggregation, false, shares.size());
            }
        }
    }

    TrainReport finalize() {
        TrainReport report;
        const std::size_t n = nodes_.size();
        report.final_w.reserve(n);
        for (const auto& node : nodes_) report.final_w.push_back(node.w);
        report.averaged_w.assign(model_.param_count(), 0.0);
        for (const auto& node : nodes_)
            for (std::size_t p = 0; p < node.w.size(); ++p)
                report.averaged_w[p] += node.w[p] / static_cast<double>(n);
        return report;
    }

    Model model_;
    std::vector<Dataset> shards_;
    TrainConfig cfg_;
    RingParams params_;
    NoiseParams noise_;
    FixedPointConfig fp_;
    Network net_;
    const Dataset* test_set_ = nullptr;

    std::vector<NodeState> nodes_;
    std::vector<std::vector<std::uint64_t>> rows_;  // quantized mixing rows (self first)
    std::map<std::size_t, std::vector<PubKeyShare>> own_pubkey_shares_;
    std::vector<std::vector<std::uint64_t>> units_per_iter_;
    std::vector<double> loss_per_iter_;
    std::vector<double> test_acc_per_iter_;
    std::size_t bootstrap_invocations_ = 0;

    double time_init_ = 0.0;
    double time_encrypt_ = 0.0;
    double time_eval_ = 0.0;
    double time_decrypt_ = 0.0;
};

inline TrainReport run_private_training(const Model& model, const std::vector<Dataset>& shards,
                                        const Topology& topo, const TrainConfig& cfg,
                                        const Dataset* test_set = nullptr) {
    PrivateTrainer trainer(model, shards, topo, cfg, test_set);
    return trainer.run();
}

}  // namespace mbfv
