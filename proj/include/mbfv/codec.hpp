#pragma once

// Fixed-point bridge between real-valued vectors and Z_t plaintexts, one
// value per coefficient, plus mixing-weight quantization. Pure and
// stateless.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mbfv/bfv.hpp"
#include "mbfv/ring.hpp"

namespace mbfv {

struct FixedPointConfig {
    int frac_bits = 13;  // d; decode error stays within 2^-d
    std::uint64_t t = 0;
    std::uint32_t slot_count = 0;  // one real per coefficient

    static FixedPointConfig create(int frac_bits, const RingParams& params) {
        if (frac_bits < 1) throw std::invalid_argument("frac_bits must be positive");
        return FixedPointConfig{frac_bits, params.t(), params.n()};
    }

    // largest |v| encodable without wraparound headroom for one
    // weighted-average round at weight scale 2^ws
    double max_abs_value(int weight_bits) const {
        return static_cast<double>(t) / 2.0 /
               std::ldexp(1.0, frac_bits + weight_bits + 1);
    }
};

struct EncodedChunk {
    std::vector<Plaintext> plaintexts;
    std::size_t length = 0;
    int scale_exponent = 0;  // accumulated power-of-two denominator
};

inline EncodedChunk encode(const std::vector<double>& values, const FixedPointConfig& cfg) {
    const double scale = std::ldexp(1.0, cfg.frac_bits);
    const double limit = static_cast<double>(cfg.t) / (2.0 * scale);
    EncodedChunk chunk;
    chunk.length = values.size();
    chunk.scale_exponent = cfg.frac_bits;
    const std::size_t n_chunks = values.empty() ? 1 : (values.size() + cfg.slot_count - 1) / cfg.slot_count;
    chunk.plaintexts.assign(n_chunks, Plaintext{std::vector<std::uint64_t>(cfg.slot_count, 0)});
    for (std::size_t i = 0; i < values.size(); ++i) {
        double v = values[i];
        if (!(std::abs(v) < limit))
            throw std::invalid_argument("value magnitude exceeds fixed-point range");
        auto scaled = static_cast<std::int64_t>(std::llround(v * scale));
        std::uint64_t coded = scaled >= 0
                                  ? static_cast<std::uint64_t>(scaled)
                                  : cfg.t - static_cast<std::uint64_t>(-scaled);
        chunk.plaintexts[i / cfg.slot_count].m[i % cfg.slot_count] = coded % cfg.t;
    }
    return chunk;
}

inline std::vector<double> decode(const EncodedChunk& chunk, const FixedPointConfig& cfg) {
    const double inv_scale = std::ldexp(1.0, -chunk.scale_exponent);
    std::vector<double> out(chunk.length);
    for (std::size_t i = 0; i < chunk.length; ++i) {
        std::uint64_t c = chunk.plaintexts[i / cfg.slot_count].m[i % cfg.slot_count];
        auto centered = c > cfg.t / 2 ? static_cast<std::int64_t>(c) - static_cast<std::int64_t>(cfg.t)
                                      : static_cast<std::int64_t>(c);
        out[i] = static_cast<double>(centered) * inv_scale;
    }
    return out;
}

/// Quantize one mixing-matrix row (nonnegative, sums to 1) to integers that
/// sum to exactly 2^ws. The self weight absorbs the rounding residue.
inline std::vector<std::uint64_t> quantize_weights(const std::vector<double>& row,
                                                   std::size_t self_index, int weight_bits) {
    if (self_index >= row.size()) throw std::invalid_argument("self index out of range");
    double sum = 0.0;
    for (double w : row) {
        if (w < 0.0) throw std::invalid_argument("mixing weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("mixing row must sum to 1");
    const auto total = static_cast<std::int64_t>(1) << weight_bits;
    std::vector<std::uint64_t> out(row.size(), 0);
    std::int64_t others = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i == self_index) continue;
        auto w = static_cast<std::int64_t>(std::llround(row[i] * static_cast<double>(total)));
        out[i] = static_cast<std::uint64_t>(w);
        others += w;
    }
    std::int64_t self_w = total - others;
    if (self_w < 0)
        throw std::invalid_argument("degenerate mixing row: adjusted self weight negative");
    out[self_index] = static_cast<std::uint64_t>(self_w);
    return out;
}

}  // namespace mbfv
