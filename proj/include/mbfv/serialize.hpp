#pragma once

// Canonical byte layouts. The network meter charges exactly these byte
// counts, so the formats are stable: little-endian fixed-width integers,
// poly = u32 n | u64 q | n * u64 coefficients.

#include <array>
#include <cstdint>
#include <vector>

#include "mbfv/ring.hpp"

namespace mbfv {

using Bytes = std::vector<std::uint8_t>;

inline void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const Bytes& in, std::size_t& pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in.at(pos++)) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(const Bytes& in, std::size_t& pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in.at(pos++)) << (8 * i);
    return v;
}

inline void put_poly(Bytes& out, const Poly& p) {
    put_u32(out, p.n());
    put_u64(out, p.params().q());
    for (std::size_t i = 0; i < p.n(); ++i) put_u64(out, p[i]);
}

inline Bytes poly_bytes(const Poly& p) {
    Bytes out;
    out.reserve(12 + 8ull * p.n());
    put_poly(out, p);
    return out;
}

inline Poly get_poly(const Bytes& in, std::size_t& pos, const RingParams& params) {
    std::uint32_t n = get_u32(in, pos);
    std::uint64_t q = get_u64(in, pos);
    if (n != params.n() || q != params.q())
        throw std::invalid_argument("poly header does not match ring parameters");
    std::vector<std::uint64_t> coeffs(n);
    for (auto& c : coeffs) c = get_u64(in, pos);
    return Poly(params, std::move(coeffs));
}

inline std::size_t poly_byte_size(const RingParams& params) {
    return 12 + 8ull * params.n();
}

// message / payload tags used on the simulated wire
enum class WireTag : std::uint8_t {
    personal_pk = 1,
    pubkey_share = 2,
    ciphertext = 3,
    convert_c1 = 4,
    convert_share = 5,
    bootstrap_c1 = 6,
    bootstrap_share = 7,
};

}  // namespace mbfv
