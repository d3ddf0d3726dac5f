#pragma once

// Deterministic simulated decentralized network: topology generation,
// Metropolis mixing weights, synchronous round delivery, and an exact
// byte/message meter. The simulator owns all state; node computations never
// touch it except through send/deliver.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbfv/ring.hpp"
#include "mbfv/serialize.hpp"

namespace mbfv {

class Topology {
public:
    Topology() = default;
    explicit Topology(std::size_t n_users)
        : n_(n_users), adj_(n_users, std::vector<std::uint8_t>(n_users, 0)) {}

    std::size_t n_users() const { return n_; }

    void add_edge(std::size_t i, std::size_t j) {
        if (i == j) throw std::invalid_argument("self-loops are not allowed");
        adj_[i][j] = adj_[j][i] = 1;
    }

    bool connected_pair(std::size_t i, std::size_t j) const { return adj_[i][j] != 0; }

    std::vector<std::size_t> neighbors(std::size_t i) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n_; ++j)
            if (adj_[i][j]) out.push_back(j);
        return out;
    }

    std::size_t degree(std::size_t i) const {
        return static_cast<std::size_t>(
            std::count(adj_[i].begin(), adj_[i].end(), std::uint8_t{1}));
    }

    bool is_connected() const {
        if (n_ == 0) return true;
        std::vector<std::uint8_t> seen(n_, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t visited = 1;
        while (!stack.empty()) {
            std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < n_; ++v) {
                if (adj_[u][v] && !seen[v]) {
                    seen[v] = 1;
                    ++visited;
                    stack.push_back(v);
                }
            }
        }
        return visited == n_;
    }

    std::string edge_list() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                if (adj_[i][j]) os << i << " " << j << "\n";
        return os.str();
    }

private:
    std::size_t n_ = 0;
    std::vector<std::vector<std::uint8_t>> adj_;
};

/// Erdos-Renyi draw at the given connection rate; if the sample is
/// disconnected, a random spanning tree over the components is added.
inline Topology gen_topology(std::size_t n_users, double rate, Prng& rng) {
    if (n_users < 2) throw std::invalid_argument("need at least 2 users");
    if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("connection rate must be in (0, 1]");
    Topology topo(n_users);
    for (std::size_t i = 0; i < n_users; ++i)
        for (std::size_t j = i + 1; j < n_users; ++j)
            if (rng.uniform_unit() <= rate) topo.add_edge(i, j);

    // spanning-tree repair: random permutation, connect each node to a
    // random earlier node of its chain unless already reachable
    if (!topo.is_connected()) {
        std::vector<std::size_t> order(n_users);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n_users - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_below(i + 1)]);
        // union-find over current components
        std::vector<std::size_t> parent(n_users);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (std::size_t i = 0; i < n_users; ++i)
            for (std::size_t j = i + 1; j < n_users; ++j)
                if (topo.connected_pair(i, j)) parent[find(i)] = find(j);
        for (std::size_t idx = 1; idx < n_users; ++idx) {
            std::size_t a = order[idx];
            std::size_t b = order[rng.uniform_below(idx)];
            if (find(a) != find(b)) {
                topo.add_edge(a, b);
                parent[find(a)] = find(b);
            }
        }
    }
    return topo;
}

/// Circulant graph where every node has the same degree; used by the
/// communication benchmarks to hold |N_i| fixed.
inline Topology regular_topology(std::size_t n_users, std::size_t degree) {
    if (degree >= n_users) throw std::invalid_argument("degree must be < n_users");
    if (degree < 1) throw std::invalid_argument("degree must be >= 1");
    if ((degree % 2 == 1) && (n_users % 2 == 1))
        throw std::invalid_argument("odd degree requires an even user count");
    Topology topo(n_users);
    for (std::size_t off = 1; off <= degree / 2; ++off)
        for (std::size_t i = 0; i < n_users; ++i)
            topo.add_edge(i, (i + off) % n_users);
    if (degree % 2 == 1)
        for (std::size_t i = 0; i < n_users / 2; ++i)
            topo.add_edge(i, i + n_users / 2);
    return topo;
}

struct MixingMatrix {
    std::vector<std::vector<double>> w;

    std::size_t n() const { return w.size(); }

    /// Row restricted to {i} union N_i, in the order (self, neighbors...).
    std::vector<double> local_row(const Topology& topo, std::size_t i) const {
        std::vector<double> row{w[i][i]};
        for (std::size_t j : topo.neighbors(i)) row.push_back(w[i][j]);
        return row;
    }
};

/// Metropolis-Hastings weights: E_ij = 1/(1 + max(deg i, deg j)) on edges,
/// self weight picks up the remainder. Symmetric and doubly stochastic for
/// any connected topology.
inline MixingMatrix mixing_matrix(const Topology& topo) {
    const std::size_t n = topo.n_users();
    MixingMatrix m;
    m.w.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        double off_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!topo.connected_pair(i, j)) continue;
            double wij = 1.0 / (1.0 + static_cast<double>(std::max(topo.degree(i), topo.degree(j))));
            m.w[i][j] = wij;
            off_sum += wij;
        }
        m.w[i][i] = 1.0 - off_sum;
    }
    return m;
}

enum class Phase : std::uint8_t { setup = 0, gradient_sharing = 1, aggregation = 2, conversion = 3 };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::setup: return "setup";
        case Phase::gradient_sharing: return "gradient-sharing";
        case Phase::aggregation: return "aggregation";
        case Phase::conversion: return "conversion";
    }
    return "?";
}

struct PhaseCounters {
    std::uint64_t messages = 0;
    std::uint64_t ciphertext_units = 0;
    std::uint64_t bytes = 0;
};

/// Per-user, per-phase traffic counters. A broadcast to N_i counts as one
/// message and one ciphertext unit but |N_i| * size bytes.
class Meter {
public:
    explicit Meter(std::size_t n_users) : sent_(n_users), received_bytes_(n_users, 0) {}

    void record_send(std::size_t from, Phase phase, std::uint64_t messages,
                     std::uint64_t units, std::uint64_t bytes) {
        auto& c = sent_[from][static_cast<int>(phase)];
        c.messages += messages;
        c.ciphertext_units += units;
        c.bytes += bytes;
    }

    void record_receive(std::size_t to, std::uint64_t bytes) { received_bytes_[to] += bytes; }

    const PhaseCounters& sent(std::size_t user, Phase phase) const {
        return sent_[user][static_cast<int>(phase)];
    }

    PhaseCounters sent_total(std::size_t user) const {
        PhaseCounters total;
        for (const auto& c : sent_[user]) {
            total.messages += c.messages;
            total.ciphertext_units += c.ciphertext_units;
            total.bytes += c.bytes;
        }
        return total;
    }

    std::uint64_t received_bytes(std::size_t user) const { return received_bytes_[user]; }

    std::size_t n_users() const { return sent_.size(); }

    std::string dump_csv() const {
        std::ostringstream os;
        os << "user,phase,messages,units,bytes\n";
        for (std::size_t u = 0; u < sent_.size(); ++u)
            for (int p = 0; p < 4; ++p) {
                const auto& c = sent_[u][p];
                os << u << "," << phase_name(static_cast<Phase>(p)) << "," << c.messages << ","
                   << c.ciphertext_units << "," << c.bytes << "\n";
            }
        return os.str();
    }

private:
    std::vector<std::array<PhaseCounters, 4>> sent_;
    std::vector<std::uint64_t> received_bytes_;
};

struct Message {
    std::size_t from = 0;
    std::size_t to = 0;
    std::uint64_t round = 0;
    std::uint64_t seq = 0;  // per-sender sequence number
    Phase phase = Phase::setup;
    Bytes payload;
};

/// Synchronous message-passing network. Messages sent in round k are
/// delivered at the round barrier and observable only in round k+1.
class Network {
public:
    explicit Network(Topology topo)
        : topo_(std::move(topo)),
          meter_(topo_.n_users()),
          inbox_(topo_.n_users()),
          pending_(topo_.n_users()),
          seq_(topo_.n_users(), 0) {}

    const Topology& topology() const { return topo_; }
    const Meter& meter() const { return meter_; }
    std::uint64_t round() const { return round_; }

    /// One payload delivered to every user in to_set. A broadcast is metered
    /// as a single message/unit; unicasts are metered per recipient.
    void send(std::size_t from, const std::vector<std::size_t>& to_set, Bytes payload, Phase phase,
              bool broadcast, std::uint64_t units_per_message = 1) {
        for (std::size_t to : to_set)
            if (!topo_.connected_pair(from, to))
                throw std::invalid_argument("send target is not a neighbor");
        const auto size = static_cast<std::uint64_t>(payload.size());
        const auto fanout = static_cast<std::uint64_t>(to_set.size());
        if (broadcast)
            meter_.record_send(from, phase, 1, units_per_message, size * fanout);
        else
            meter_.record_send(from, phase, fanout, units_per_message * fanout, size * fanout);
        for (std::size_t to : to_set) {
            pending_[to].push_back(Message{from, to, round_, seq_[from], phase, payload});
            meter_.record_receive(to, size);
        }
        ++seq_[from];
        transcript_.push_back(Message{from, 0, round_, seq_[from] - 1, phase, std::move(payload)});
    }

    /// Deliver all pending messages in deterministic (sender, seq) order and
    /// advance the round counter.
    void round_barrier() {
        for (std::size_t u = 0; u < pending_.size(); ++u) {
            auto& q = pending_[u];
            std::stable_sort(q.begin(), q.end(), [](const Message& a, const Message& b) {
                return a.from != b.from ? a.from < b.from : a.seq < b.seq;
            });
            for (auto& msg : q) inbox_[u].push_back(std::move(msg));
            q.clear();
        }
        ++round_;
    }

    /// Drain user's inbox (messages delivered at earlier barriers).
    std::vector<Message> receive(std::size_t user) {
        std::vector<Message> out = std::move(inbox_[user]);
        inbox_[user].clear();
        return out;
    }

    const std::vector<Message>& transcript() const { return transcript_; }

private:
    Topology topo_;
    Meter meter_;
    std::vector<std::vector<Message>> inbox_;
    std::vector<std::vector<Message>> pending_;
    std::vector<std::uint64_t> seq_;
    std::vector<Message> transcript_;
    std::uint64_t round_ = 0;
};

}  // namespace mbfv
