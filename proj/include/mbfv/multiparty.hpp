#pragma once

// Multiparty BFV over a party set U: additive key sharing, joint public-key
// generation, ciphertext conversion to a recipient's personal key, and
// distributed bootstrapping. Share generation is pure per-party computation;
// combine operations fold an immutable share set sorted by party id.

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "mbfv/bfv.hpp"
#include "mbfv/ring.hpp"
#include "mbfv/serialize.hpp"

namespace mbfv {

struct SecretKeyShare {
    std::uint32_t party_id = 0;
    Poly s;
};

/// Common random polynomial expanded from a public 32-byte seed, so
/// "agreed in advance" is byte-verifiable. The domain tag separates the
/// pubkeygen p1 stream from the bootstrap alpha stream.
inline Poly common_random_poly(const RingParams& params,
                               const std::array<std::uint8_t, 32>& seed,
                               std::uint8_t domain_tag) {
    std::array<std::uint8_t, 32> tagged = seed;
    tagged[0] ^= domain_tag;
    Prng rng(tagged);
    return sample(Dist::uniform_q, params, rng);
}

struct PubKeyShare {
    std::uint32_t party_id = 0;
    Poly p0;  // -(p1*s_k + e_k)
};

struct ConvertShare {
    std::uint32_t party_id = 0;
    Poly h0;
    Poly h1;
};

struct BootstrapShare {
    std::uint32_t party_id = 0;
    Poly eta0;
    Poly eta1;
};

inline SecretKeyShare mbfv_seckeygen(std::uint32_t party_id, const RingParams& params, Prng& rng) {
    return SecretKeyShare{party_id, sample(Dist::ternary, params, rng)};
}

inline SecretKey combine_secret_shares(const std::vector<SecretKeyShare>& shares) {
    if (shares.empty()) throw std::invalid_argument("empty share set");
    Poly s(shares.front().s.params());
    for (const auto& sh : shares) s = poly_add(s, sh.s);
    return SecretKey{std::move(s)};
}

namespace detail {

template <typename Share>
std::vector<const Share*> sorted_unique_shares(const std::vector<Share>& shares,
                                               std::size_t expected_parties) {
    if (shares.size() != expected_parties)
        throw std::invalid_argument("share set size does not match party set");
    std::vector<const Share*> v;
    v.reserve(shares.size());
    for (const auto& s : shares) v.push_back(&s);
    std::sort(v.begin(), v.end(),
              [](const Share* a, const Share* b) { return a->party_id < b->party_id; });
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i]->party_id == v[i - 1]->party_id)
            throw std::invalid_argument("duplicate party_id in share set");
    return v;
}

}  // namespace detail

inline PubKeyShare mbfv_pubkeygen_share(const SecretKeyShare& share, const Poly& crp_p1,
                                        const NoiseParams& noise, Prng& rng) {
    Poly e = sample(Dist::gaussian, share.s.params(), noise, rng);
    return PubKeyShare{share.party_id, poly_neg(poly_add(poly_mul(crp_p1, share.s), e))};
}

/// pk = (sum_k p0_k mod q, p1) with combined secret s = sum s_k.
inline PublicKey mbfv_pubkeygen_combine(const std::vector<PubKeyShare>& shares, const Poly& crp_p1,
                                        std::size_t expected_parties) {
    auto ordered = detail::sorted_unique_shares(shares, expected_parties);
    Poly p0(crp_p1.params());
    for (const auto* sh : ordered) p0 = poly_add(p0, sh->p0);
    return PublicKey{std::move(p0), crp_p1};
}

// deterministic skeleton used by the sampling wrapper and by tests that pin
// the randomness
inline ConvertShare mbfv_convert_share_with(const SecretKeyShare& share, const Poly& c1,
                                            const PublicKey& recipient_pk, const Poly& mu,
                                            const Poly& e0, const Poly& e1) {
    Poly h0 = poly_add(poly_mul(share.s, c1), poly_add(poly_mul(mu, recipient_pk.p0), e0));
    Poly h1 = poly_add(poly_mul(mu, recipient_pk.p1), e1);
    return ConvertShare{share.party_id, std::move(h0), std::move(h1)};
}

/// (h0_k, h1_k) = (s_k*c1 + mu_k*p0_i + e0_k, mu_k*p1_i + e1_k).
/// mu_k is ternary, matching the single-party encryption convention.
inline ConvertShare mbfv_convert_share(const SecretKeyShare& share, const Poly& c1,
                                       const PublicKey& recipient_pk, const NoiseParams& noise,
                                       Prng& rng) {
    const RingParams& params = share.s.params();
    Poly mu = sample(Dist::ternary, params, rng);
    Poly e0 = sample(Dist::gaussian, params, noise, rng);
    Poly e1 = sample(Dist::gaussian, params, noise, rng);
    return mbfv_convert_share_with(share, c1, recipient_pk, mu, e0, e1);
}

/// Additional noise introduced by conversion: e_covt = e0 + sk_i*e1 + mu*e_cl
/// with |U| parties contributing each term.
inline double convert_noise_bound(const RingParams& params, const NoiseParams& noise,
                                  std::size_t parties) {
    return static_cast<double>(parties) * static_cast<double>(noise.bound) *
           (2.0 * params.n() + 1.0);
}

/// New ciphertext (c0 + sum h0_k, sum h1_k), decryptable by the recipient's
/// personal secret key alone.
inline Ciphertext mbfv_convert_combine(const Ciphertext& ct, const std::vector<ConvertShare>& shares,
                                       std::size_t expected_parties, const NoiseParams& noise) {
    auto ordered = detail::sorted_unique_shares(shares, expected_parties);
    Poly h0(ct.params());
    Poly h1(ct.params());
    for (const auto* sh : ordered) {
        h0 = poly_add(h0, sh->h0);
        h1 = poly_add(h1, sh->h1);
    }
    return Ciphertext{poly_add(ct.c0, h0), std::move(h1),
                      ct.noise_bound_hint + convert_noise_bound(ct.params(), noise, expected_parties)};
}

inline BootstrapShare mbfv_bootstrap_share_with(const SecretKeyShare& share, const Poly& c1,
                                                const Poly& alpha, const Poly& mask_mk,
                                                const Poly& e0, const Poly& e1) {
    const RingParams& params = share.s.params();
    Poly scaled_mask(params);
    for (std::size_t i = 0; i < params.n(); ++i)
        scaled_mask.set(i, mul_mod(mask_mk[i], params.delta(), params.q()));
    Poly eta0 = poly_add(poly_sub(poly_mul(share.s, c1), scaled_mask), e0);
    Poly eta1 = poly_add(poly_add(poly_neg(poly_mul(share.s, alpha)), scaled_mask), e1);
    return BootstrapShare{share.party_id, std::move(eta0), std::move(eta1)};
}

/// (eta0_k, eta1_k) = (s_k*c1 - delta*M_k + e0_k, -s_k*alpha + delta*M_k + e1_k)
/// with M_k uniform on R_t. The same mask appears negated in eta0 and
/// positively in eta1, so it cancels in the recombined ciphertext.
inline BootstrapShare mbfv_bootstrap_share(const SecretKeyShare& share, const Poly& c1,
                                           const Poly& alpha, const NoiseParams& noise, Prng& rng) {
    const RingParams& params = share.s.params();
    Poly mask(params);
    for (std::size_t i = 0; i < params.n(); ++i)
        mask.set(i, rng.uniform_below(params.t()));
    Poly e0 = sample(Dist::gaussian, params, noise, rng);
    Poly e1 = sample(Dist::gaussian, params, noise, rng);
    return mbfv_bootstrap_share_with(share, c1, alpha, mask, e0, e1);
}

/// Post-bootstrap noise: |U| gaussian terms plus rounding slack of
/// (q mod t) per mask carry, at most one carry per party.
inline double bootstrap_fresh_bound(const RingParams& params, const NoiseParams& noise,
                                    std::size_t parties) {
    return static_cast<double>(parties) *
           (static_cast<double>(noise.bound) + static_cast<double>(params.q() % params.t()));
}

/// ct' = ([round(t/q * [c0 + eta0]_q)]_t * delta + eta1, alpha).
/// Refuses inputs whose advisory noise bound already exceeds q/(2t):
/// bootstrapping cannot rescue an undecryptable ciphertext.
inline Ciphertext mbfv_bootstrap_combine(const Ciphertext& ct,
                                         const std::vector<BootstrapShare>& shares,
                                         const Poly& alpha, std::size_t expected_parties,
                                         const NoiseParams& noise) {
    const RingParams& params = ct.params();
    if (ct.noise_bound_hint >= static_cast<double>(noise_limit(params)))
        throw std::runtime_error("bootstrap refused: noise bound already at decryption limit");
    auto ordered = detail::sorted_unique_shares(shares, expected_parties);
    Poly eta0(params);
    Poly eta1(params);
    for (const auto* sh : ordered) {
        eta0 = poly_add(eta0, sh->eta0);
        eta1 = poly_add(eta1, sh->eta1);
    }
    Poly masked = poly_add(ct.c0, eta0);
    const std::int64_t t = static_cast<std::int64_t>(params.t());
    Poly c0(params);
    for (std::size_t i = 0; i < params.n(); ++i) {
        std::int64_t r = scale_round(masked.centered(i), params.t(), params.q()) % t;
        if (r < 0) r += t;
        c0.set(i, mul_mod(static_cast<std::uint64_t>(r), params.delta(), params.q()));
    }
    c0 = poly_add(c0, eta1);
    return Ciphertext{std::move(c0), alpha,
                      bootstrap_fresh_bound(params, noise, expected_parties)};
}

// --- wire formats for share messages ----------------------------------------

inline Bytes pubkey_share_bytes(const PubKeyShare& sh) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(WireTag::pubkey_share));
    put_u32(out, sh.party_id);
    put_poly(out, sh.p0);
    return out;
}

inline PubKeyShare get_pubkey_share(const Bytes& in, std::size_t& pos, const RingParams& params) {
    if (in.at(pos++) != static_cast<std::uint8_t>(WireTag::pubkey_share))
        throw std::invalid_argument("not a pubkey share payload");
    std::uint32_t id = get_u32(in, pos);
    return PubKeyShare{id, get_poly(in, pos, params)};
}

inline Bytes convert_share_bytes(const ConvertShare& sh) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(WireTag::convert_share));
    put_u32(out, sh.party_id);
    put_poly(out, sh.h0);
    put_poly(out, sh.h1);
    return out;
}

inline ConvertShare get_convert_share(const Bytes& in, std::size_t& pos, const RingParams& params) {
    if (in.at(pos++) != static_cast<std::uint8_t>(WireTag::convert_share))
        throw std::invalid_argument("not a convert share payload");
    std::uint32_t id = get_u32(in, pos);
    Poly h0 = get_poly(in, pos, params);
    Poly h1 = get_poly(in, pos, params);
    return ConvertShare{id, std::move(h0), std::move(h1)};
}

inline Bytes bootstrap_share_bytes(const BootstrapShare& sh) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(WireTag::bootstrap_share));
    put_u32(out, sh.party_id);
    put_poly(out, sh.eta0);
    put_poly(out, sh.eta1);
    return out;
}

inline BootstrapShare get_bootstrap_share(const Bytes& in, std::size_t& pos,
                                          const RingParams& params) {
    if (in.at(pos++) != static_cast<std::uint8_t>(WireTag::bootstrap_share))
        throw std::invalid_argument("not a bootstrap share payload");
    std::uint32_t id = get_u32(in, pos);
    Poly eta0 = get_poly(in, pos, params);
    Poly eta1 = get_poly(in, pos, params);
    return BootstrapShare{id, std::move(eta0), std::move(eta1)};
}

/// Bootstrap is invoked when the advisory bound crosses q/(4t), half the
/// hard decryption limit.
inline bool bootstrap_due(const Ciphertext& ct) {
    return ct.noise_bound_hint > static_cast<double>(ct.params().q() / (4 * ct.params().t()));
}

}  // namespace mbfv
