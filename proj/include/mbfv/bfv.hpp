#pragma once

// Single-party BFV: key generation, encryption, decryption, homomorphic
// addition and plaintext-scalar multiplication, plus an exact noise meter.
// Ciphertext-ciphertext multiplication and relinearization are out of scope;
// the training pipeline only ever evaluates linear functions.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mbfv/ring.hpp"
#include "mbfv/serialize.hpp"

namespace mbfv {

struct SecretKey {
    Poly s;
};

struct PublicKey {
    Poly p0;
    Poly p1;
};

/// Vector of n integers in [0, t).
struct Plaintext {
    std::vector<std::uint64_t> m;

    static Plaintext zero(const RingParams& params) {
        return Plaintext{std::vector<std::uint64_t>(params.n(), 0)};
    }

    void validate(const RingParams& params) const {
        if (m.size() != params.n())
            throw std::invalid_argument("plaintext length != ring degree");
        for (auto v : m)
            if (v >= params.t())
                throw std::invalid_argument("plaintext coefficient out of [0, t)");
    }

    friend bool operator==(const Plaintext& a, const Plaintext& b) { return a.m == b.m; }
};

struct Ciphertext {
    Poly c0;
    Poly c1;
    // Analytic upper bound on the noise magnitude. Advisory only: it drives
    // the bootstrap trigger and is never consulted by decrypt.
    double noise_bound_hint = 0.0;

    const RingParams& params() const { return c0.params(); }
};

/// Worst-case magnitude of the noise in a fresh encryption:
/// e0 + s*e1 - mu*e_pk with ternary s, mu and gaussian errors bounded by B.
inline double fresh_noise_bound(const RingParams& params, const NoiseParams& noise) {
    return static_cast<double>(noise.bound) * (2.0 * params.n() + 1.0);
}

inline SecretKey seckeygen(const RingParams& params, Prng& rng) {
    return SecretKey{sample(Dist::ternary, params, rng)};
}

inline PublicKey pubkeygen(const SecretKey& sk, const RingParams& params,
                           const NoiseParams& noise, Prng& rng) {
    Poly p1 = sample(Dist::uniform_q, params, rng);
    Poly e = sample(Dist::gaussian, params, noise, rng);
    Poly p0 = poly_neg(poly_add(poly_mul(sk.s, p1), e));
    return PublicKey{std::move(p0), std::move(p1)};
}

/// ct = (delta*x + mu*p0 + e0, mu*p1 + e1), mu ternary, e0/e1 gaussian.
inline Ciphertext encrypt(const PublicKey& pk, const Plaintext& pt, const RingParams& params,
                          const NoiseParams& noise, Prng& rng) {
    pt.validate(params);
    Poly mu = sample(Dist::ternary, params, rng);
    Poly e0 = sample(Dist::gaussian, params, noise, rng);
    Poly e1 = sample(Dist::gaussian, params, noise, rng);

    Poly scaled(params);
    for (std::size_t i = 0; i < params.n(); ++i)
        scaled.set(i, mul_mod(pt.m[i] % params.q(), params.delta(), params.q()));

    Poly c0 = poly_add(scaled, poly_add(poly_mul(mu, pk.p0), e0));
    Poly c1 = poly_add(poly_mul(mu, pk.p1), e1);
    return Ciphertext{std::move(c0), std::move(c1), fresh_noise_bound(params, noise)};
}

// round(t*v/q) with round-half-away-from-zero, v centered
inline std::int64_t scale_round(std::int64_t v, std::uint64_t t, std::uint64_t q) {
    __int128 num = static_cast<__int128>(v) * static_cast<__int128>(t);
    __int128 den = static_cast<__int128>(q);
    __int128 r = num >= 0 ? (2 * num + den) / (2 * den) : (2 * num - den) / (2 * den);
    return static_cast<std::int64_t>(r);
}

/// x = [ round(t/q * [c0 + c1*s]_q) ]_t  per coefficient.
inline Plaintext decrypt(const SecretKey& sk, const Ciphertext& ct) {
    const RingParams& params = ct.params();
    Poly u = poly_add(ct.c0, poly_mul(ct.c1, sk.s));
    const std::int64_t t = static_cast<std::int64_t>(params.t());
    Plaintext pt;
    pt.m.resize(params.n());
    for (std::size_t i = 0; i < params.n(); ++i) {
        std::int64_t r = scale_round(u.centered(i), params.t(), params.q()) % t;
        if (r < 0) r += t;
        pt.m[i] = static_cast<std::uint64_t>(r);
    }
    return pt;
}

inline Ciphertext hom_add(const Ciphertext& a, const Ciphertext& b) {
    if (a.params() != b.params())
        throw std::invalid_argument("ciphertext parameter mismatch");
    return Ciphertext{poly_add(a.c0, b.c0), poly_add(a.c1, b.c1),
                      a.noise_bound_hint + b.noise_bound_hint};
}

inline Ciphertext plain_scalar_mul(const Ciphertext& a, std::uint64_t k) {
    if (k >= a.params().t())
        throw std::invalid_argument("scalar must lie in [0, t)");
    return Ciphertext{poly_scalar_mul(a.c0, static_cast<std::int64_t>(k)),
                      poly_scalar_mul(a.c1, static_cast<std::int64_t>(k)),
                      a.noise_bound_hint * static_cast<double>(k)};
}

/// Exact noise meter (test instrumentation): max |centered(c0 + c1*s -
/// delta*expected)| over coefficients. Requires knowing the plaintext.
inline std::int64_t noise_of(const SecretKey& sk, const Ciphertext& ct, const Plaintext& expected) {
    const RingParams& params = ct.params();
    Poly u = poly_add(ct.c0, poly_mul(ct.c1, sk.s));
    std::int64_t worst = 0;
    for (std::size_t i = 0; i < params.n(); ++i) {
        std::uint64_t target = mul_mod(expected.m[i] % params.q(), params.delta(), params.q());
        std::uint64_t d = sub_mod(u[i], target, params.q());
        std::uint64_t q = params.q();
        std::int64_t c = d > q / 2 ? static_cast<std::int64_t>(d) - static_cast<std::int64_t>(q)
                                   : static_cast<std::int64_t>(d);
        worst = std::max(worst, std::abs(c));
    }
    return worst;
}

/// Decryption succeeds while the true noise stays below q/(2t).
inline std::uint64_t noise_limit(const RingParams& params) {
    return params.q() / (2 * params.t());
}

inline void put_public_key(Bytes& out, const PublicKey& pk) {
    out.push_back(static_cast<std::uint8_t>(WireTag::personal_pk));
    put_poly(out, pk.p0);
    put_poly(out, pk.p1);
}

inline void put_ciphertext(Bytes& out, const Ciphertext& ct) {
    out.push_back(static_cast<std::uint8_t>(WireTag::ciphertext));
    put_poly(out, ct.c0);
    put_poly(out, ct.c1);
}

inline Bytes ciphertext_bytes(const Ciphertext& ct) {
    Bytes out;
    put_ciphertext(out, ct);
    return out;
}

inline Ciphertext get_ciphertext(const Bytes& in, std::size_t& pos, const RingParams& params) {
    if (in.at(pos++) != static_cast<std::uint8_t>(WireTag::ciphertext))
        throw std::invalid_argument("not a ciphertext payload");
    Poly c0 = get_poly(in, pos, params);
    Poly c1 = get_poly(in, pos, params);
    return Ciphertext{std::move(c0), std::move(c1), 0.0};
}

}  // namespace mbfv
