#pragma once

// Tiny differentiable models with hand-written analytic gradients: binary
// logistic regression and a two-layer tanh MLP with softmax cross-entropy.
// Parameters travel as flat vectors so the crypto pipeline can treat them
// as opaque payloads.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbfv/ring.hpp"

namespace mbfv {

struct Sample {
    std::vector<double> x;
    int label = 0;
};

using Dataset = std::vector<Sample>;

class Model {
public:
    enum class Arch { logistic, mlp };

    static Model logistic(std::size_t features) {
        Model m;
        m.arch_ = Arch::logistic;
        m.in_ = features;
        m.out_ = 2;
        return m;
    }

    static Model mlp(std::size_t features, std::size_t hidden, std::size_t classes) {
        Model m;
        m.arch_ = Arch::mlp;
        m.in_ = features;
        m.hidden_ = hidden;
        m.out_ = classes;
        return m;
    }

    Arch arch() const { return arch_; }

    std::size_t param_count() const {
        if (arch_ == Arch::logistic) return in_ + 1;
        return hidden_ * in_ + hidden_ + out_ * hidden_ + out_;
    }

    std::vector<double> init_params(Prng& rng, double scale = 0.1) const {
        std::vector<double> w(param_count());
        for (auto& v : w) v = (rng.uniform_unit() * 2.0 - 1.0) * scale;
        return w;
    }

    double loss(const std::vector<double>& w, const Dataset& batch) const {
        double total = 0.0;
        for (const auto& s : batch) total += sample_loss(w, s, nullptr);
        return total / static_cast<double>(batch.size());
    }

    /// Mean analytic gradient of the cross-entropy loss over the batch.
    std::vector<double> gradient(const std::vector<double>& w, const Dataset& batch) const {
        if (batch.empty()) throw std::invalid_argument("gradient of an empty batch");
        std::vector<double> g(param_count(), 0.0);
        for (const auto& s : batch) sample_loss(w, s, &g);
        for (auto& v : g) v /= static_cast<double>(batch.size());
        return g;
    }

    int predict(const std::vector<double>& w, const std::vector<double>& x) const {
        if (arch_ == Arch::logistic) {
            double z = w[in_];
            for (std::size_t i = 0; i < in_; ++i) z += w[i] * x[i];
            return z > 0.0 ? 1 : 0;
        }
        auto probs = mlp_forward(w, x, nullptr);
        int best = 0;
        for (std::size_t c = 1; c < out_; ++c)
            if (probs[c] > probs[best]) best = static_cast<int>(c);
        return best;
    }

    double accuracy(const std::vector<double>& w, const Dataset& data) const {
        std::size_t hits = 0;
        for (const auto& s : data)
            if (predict(w, s.x) == s.label) ++hits;
        return static_cast<double>(hits) / static_cast<double>(data.size());
    }

private:
    // Returns the per-sample loss; when grad != nullptr, accumulates the
    // per-sample gradient into it.
    double sample_loss(const std::vector<double>& w, const Sample& s,
                       std::vector<double>* grad) const {
        if (arch_ == Arch::logistic) {
            double z = w[in_];
            for (std::size_t i = 0; i < in_; ++i) z += w[i] * s.x[i];
            double p = 1.0 / (1.0 + std::exp(-z));
            double y = static_cast<double>(s.label);
            if (grad) {
                double d = p - y;
                for (std::size_t i = 0; i < in_; ++i) (*grad)[i] += d * s.x[i];
                (*grad)[in_] += d;
            }
            const double eps = 1e-12;
            return -(y * std::log(p + eps) + (1.0 - y) * std::log(1.0 - p + eps));
        }
        std::vector<double> hidden_act(hidden_);
        auto probs = mlp_forward(w, s.x, &hidden_act);
        if (grad) {
            // softmax CE backprop through the tanh hidden layer
            const std::size_t w1 = 0, b1 = hidden_ * in_, w2 = b1 + hidden_, b2 = w2 + out_ * hidden_;
            std::vector<double> dz2(out_);
            for (std::size_t c = 0; c < out_; ++c)
                dz2[c] = probs[c] - (static_cast<int>(c) == s.label ? 1.0 : 0.0);
            std::vector<double> da(hidden_, 0.0);
            for (std::size_t c = 0; c < out_; ++c) {
                for (std::size_t h = 0; h < hidden_; ++h) {
                    (*grad)[w2 + c * hidden_ + h] += dz2[c] * hidden_act[h];
                    da[h] += dz2[c] * w[w2 + c * hidden_ + h];
                }
                (*grad)[b2 + c] += dz2[c];
            }
            for (std::size_t h = 0; h < hidden_; ++h) {
                double dz1 = da[h] * (1.0 - hidden_act[h] * hidden_act[h]);
                for (std::size_t i = 0; i < in_; ++i)
                    (*grad)[w1 + h * in_ + i] += dz1 * s.x[i];
                (*grad)[b1 + h] += dz1;
            }
        }
        return -std::log(probs[static_cast<std::size_t>(s.label)] + 1e-12);
    }

    std::vector<double> mlp_forward(const std::vector<double>& w, const std::vector<double>& x,
                                    std::vector<double>* hidden_out) const {
        const std::size_t w1 = 0, b1 = hidden_ * in_, w2 = b1 + hidden_, b2 = w2 + out_ * hidden_;
        std::vector<double> a(hidden_);
        for (std::size_t h = 0; h < hidden_; ++h) {
            double z = w[b1 + h];
            for (std::size_t i = 0; i < in_; ++i) z += w[w1 + h * in_ + i] * x[i];
            a[h] = std::tanh(z);
        }
        if (hidden_out) *hidden_out = a;
        std::vector<double> logits(out_);
        double zmax = -1e300;
        for (std::size_t c = 0; c < out_; ++c) {
            double z = w[b2 + c];
            for (std::size_t h = 0; h < hidden_; ++h) z += w[w2 + c * hidden_ + h] * a[h];
            logits[c] = z;
            zmax = std::max(zmax, z);
        }
        double denom = 0.0;
        for (auto& z : logits) {
            z = std::exp(z - zmax);
            denom += z;
        }
        for (auto& z : logits) z /= denom;
        return logits;
    }

    Arch arch_ = Arch::logistic;
    std::size_t in_ = 0;
    std::size_t hidden_ = 0;
    std::size_t out_ = 2;
};

/// Linearly separable two-blob task used by the training benchmarks.
inline Dataset make_blobs(std::size_t count, std::uint64_t seed, double margin = 2.0) {
    Prng rng(seed);
    Dataset data;
    data.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        int label = static_cast<int>(rng.uniform_below(2));
        double cx = label == 0 ? -margin : margin;
        double cy = label == 0 ? -margin : margin;
        // Box-Muller pair for the blob scatter
        double u1 = rng.uniform_unit();
        double u2 = rng.uniform_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        data.push_back(Sample{{cx + r * std::cos(6.283185307179586 * u2),
                               cy + r * std::sin(6.283185307179586 * u2)},
                              label});
    }
    return data;
}

inline std::vector<Dataset> shard_dataset(const Dataset& data, std::size_t n_shards) {
    std::vector<Dataset> shards(n_shards);
    for (std::size_t i = 0; i < data.size(); ++i) shards[i % n_shards].push_back(data[i]);
    return shards;
}

}  // namespace mbfv
