#pragma once

// Exact arithmetic in R_q = Z_q[X]/(X^n + 1) with coefficient samplers.
// Coefficients are stored canonically in [0, q); a centered view maps
// c -> c - q for c > q/2.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mbfv {

inline std::uint64_t add_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    std::uint64_t s = a + b;  // q <= 2^62, no overflow
    return s >= q ? s - q : s;
}

inline std::uint64_t sub_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    return a >= b ? a - b : a + q - b;
}

inline std::uint64_t mul_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % q);
}

inline std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t q) {
    std::uint64_t r = 1 % q;
    base %= q;
    while (exp > 0) {
        if (exp & 1) r = mul_mod(r, base, q);
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    return r;
}

// Precomputed twiddle factors for the negacyclic NTT. Only built when q is
// prime with 2n | q - 1; poly_mul falls back to schoolbook otherwise.
struct NttTables {
    std::vector<std::uint64_t> psi_pow;      // psi^i, i in [0, n)
    std::vector<std::uint64_t> psi_inv_pow;  // psi^-i
    std::vector<std::uint64_t> omega_pow;    // omega^i, omega = psi^2
    std::vector<std::uint64_t> omega_inv_pow;
    std::uint64_t n_inv = 0;
};

/// Ring parameters: degree n (power of two), ciphertext modulus q <= 2^62,
/// plaintext modulus t < q. delta = floor(q/t) is cached.
class RingParams {
public:
    RingParams() = default;

    static RingParams create(std::uint32_t n, std::uint64_t q, std::uint64_t t) {
        if (n < 2 || (n & (n - 1)) != 0)
            throw std::invalid_argument("ring degree must be a power of two >= 2");
        if (q > (std::uint64_t{1} << 62))
            throw std::invalid_argument("modulus q must be <= 2^62");
        if (t <= 1 || t >= q)
            throw std::invalid_argument("plaintext modulus must satisfy 1 < t < q");
        RingParams p;
        p.n_ = n;
        p.q_ = q;
        p.t_ = t;
        p.delta_ = q / t;
        p.init_ntt();
        return p;
    }

    std::uint32_t n() const { return n_; }
    std::uint64_t q() const { return q_; }
    std::uint64_t t() const { return t_; }
    std::uint64_t delta() const { return delta_; }
    bool ntt_enabled() const { return ntt_ != nullptr; }
    const NttTables& ntt_tables() const { return *ntt_; }

    friend bool operator==(const RingParams& a, const RingParams& b) {
        return a.n_ == b.n_ && a.q_ == b.q_ && a.t_ == b.t_;
    }
    friend bool operator!=(const RingParams& a, const RingParams& b) { return !(a == b); }

private:
    void init_ntt();

    std::uint32_t n_ = 0;
    std::uint64_t q_ = 0;
    std::uint64_t t_ = 0;
    std::uint64_t delta_ = 0;
    std::shared_ptr<const NttTables> ntt_;
};

/// Truncated discrete Gaussian parameters: standard deviation sigma and
/// truncation bound B (resampled, not clamped, on |v| > B).
struct NoiseParams {
    double sigma = 3.2;
    std::int64_t bound = 19;

    static NoiseParams create(double sigma, std::int64_t bound) {
        if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
        if (bound < static_cast<std::int64_t>(std::ceil(6.0 * sigma)))
            throw std::invalid_argument("truncation bound must be >= ceil(6*sigma)");
        return NoiseParams{sigma, bound};
    }
};

/// Deterministic seeded generator. All randomness in the library flows
/// through this class, so a fixed seed replays byte-identical results.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : gen_(seed) {}

    explicit Prng(const std::array<std::uint8_t, 32>& seed_bytes) {
        std::array<std::uint32_t, 8> words{};
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                words[i] |= static_cast<std::uint32_t>(seed_bytes[4 * i + j]) << (8 * j);
        std::seed_seq seq(words.begin(), words.end());
        gen_.seed(seq);
    }

    std::uint64_t raw() { return gen_(); }

    // Unbiased uniform draw on [0, bound) via rejection.
    std::uint64_t uniform_below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % bound;
    }

    // uniform on {-1, 0, 1}
    std::int64_t ternary() { return static_cast<std::int64_t>(uniform_below(3)) - 1; }

    double uniform_unit() {
        // (0, 1], 53-bit resolution; never returns 0 so log() is safe
        return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Centered discrete Gaussian: round a Box-Muller draw, resample outside
    // [-B, B]. Hand-rolled so results do not depend on libstdc++ internals.
    std::int64_t gaussian(const NoiseParams& noise) {
        for (;;) {
            double u1 = uniform_unit();
            double u2 = uniform_unit();
            double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
            auto v = static_cast<std::int64_t>(std::llround(noise.sigma * z));
            if (v >= -noise.bound && v <= noise.bound) return v;
        }
    }

private:
    std::mt19937_64 gen_;
};

/// Element of R_q. Coefficients always reduced into [0, q).
class Poly {
public:
    Poly() = default;
    explicit Poly(const RingParams& params)
        : params_(params), coeffs_(params.n(), 0) {}

    Poly(const RingParams& params, std::vector<std::uint64_t> coeffs)
        : params_(params), coeffs_(std::move(coeffs)) {
        if (coeffs_.size() != params_.n())
            throw std::invalid_argument("coefficient count != ring degree");
        for (auto& c : coeffs_) c %= params_.q();
    }

    const RingParams& params() const { return params_; }
    std::uint32_t n() const { return params_.n(); }
    const std::vector<std::uint64_t>& coeffs() const { return coeffs_; }

    std::uint64_t operator[](std::size_t i) const { return coeffs_[i]; }

    void set(std::size_t i, std::uint64_t v) { coeffs_[i] = v % params_.q(); }

    // signed representative in (-q/2, q/2]
    std::int64_t centered(std::size_t i) const {
        std::uint64_t c = coeffs_[i];
        std::uint64_t q = params_.q();
        return c > q / 2 ? static_cast<std::int64_t>(c) - static_cast<std::int64_t>(q)
                         : static_cast<std::int64_t>(c);
    }

    void set_centered(std::size_t i, std::int64_t v) {
        std::int64_t q = static_cast<std::int64_t>(params_.q());
        std::int64_t r = v % q;
        if (r < 0) r += q;
        coeffs_[i] = static_cast<std::uint64_t>(r);
    }

    std::int64_t max_abs_centered() const {
        std::int64_t m = 0;
        for (std::size_t i = 0; i < coeffs_.size(); ++i)
            m = std::max(m, std::abs(centered(i)));
        return m;
    }

    bool is_zero() const {
        for (auto c : coeffs_)
            if (c != 0) return false;
        return true;
    }

    friend bool operator==(const Poly& a, const Poly& b) {
        return a.params_ == b.params_ && a.coeffs_ == b.coeffs_;
    }

private:
    RingParams params_;
    std::vector<std::uint64_t> coeffs_;
};

namespace detail {

inline void check_same_params(const Poly& a, const Poly& b) {
    if (a.params() != b.params())
        throw std::invalid_argument("ring parameter mismatch");
}

inline void ntt_forward(std::vector<std::uint64_t>& a, const RingParams& p) {
    const auto& tb = p.ntt_tables();
    const std::uint64_t q = p.q();
    const std::uint32_t n = p.n();
    // Cooley-Tukey, bit-reversed output then re-ordered by the caller's
    // matching inverse; we keep both passes self-consistent instead.
    std::uint32_t lg = 0;
    while ((1u << lg) < n) ++lg;
    // bit-reverse permutation
    for (std::uint32_t i = 0, j = 0; i < n; ++i) {
        if (i < j) std::swap(a[i], a[j]);
        std::uint32_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
    }
    for (std::uint32_t len = 2; len <= n; len <<= 1) {
        std::uint32_t step = n / len;
        for (std::uint32_t i = 0; i < n; i += len) {
            for (std::uint32_t k = 0; k < len / 2; ++k) {
                std::uint64_t w = tb.omega_pow[k * step];
                std::uint64_t u = a[i + k];
                std::uint64_t v = mul_mod(a[i + k + len / 2], w, q);
                a[i + k] = add_mod(u, v, q);
                a[i + k + len / 2] = sub_mod(u, v, q);
            }
        }
    }
}

inline void ntt_inverse(std::vector<std::uint64_t>& a, const RingParams& p) {
    const auto& tb = p.ntt_tables();
    const std::uint64_t q = p.q();
    const std::uint32_t n = p.n();
    for (std::uint32_t i = 0, j = 0; i < n; ++i) {
        if (i < j) std::swap(a[i], a[j]);
        std::uint32_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
    }
    for (std::uint32_t len = 2; len <= n; len <<= 1) {
        std::uint32_t step = n / len;
        for (std::uint32_t i = 0; i < n; i += len) {
            for (std::uint32_t k = 0; k < len / 2; ++k) {
                std::uint64_t w = tb.omega_inv_pow[k * step];
                std::uint64_t u = a[i + k];
                std::uint64_t v = mul_mod(a[i + k + len / 2], w, q);
                a[i + k] = add_mod(u, v, q);
                a[i + k + len / 2] = sub_mod(u, v, q);
            }
        }
    }
    for (auto& x : a) x = mul_mod(x, tb.n_inv, q);
}

}  // namespace detail

inline Poly poly_add(const Poly& a, const Poly& b) {
    detail::check_same_params(a, b);
    Poly r(a.params());
    const std::uint64_t q = a.params().q();
    for (std::size_t i = 0; i < a.n(); ++i)
        r.set(i, add_mod(a[i], b[i], q));
    return r;
}

inline Poly poly_sub(const Poly& a, const Poly& b) {
    detail::check_same_params(a, b);
    Poly r(a.params());
    const std::uint64_t q = a.params().q();
    for (std::size_t i = 0; i < a.n(); ++i)
        r.set(i, sub_mod(a[i], b[i], q));
    return r;
}

inline Poly poly_neg(const Poly& a) {
    Poly r(a.params());
    const std::uint64_t q = a.params().q();
    for (std::size_t i = 0; i < a.n(); ++i)
        r.set(i, a[i] == 0 ? 0 : q - a[i]);
    return r;
}

/// Schoolbook negacyclic convolution (X^n = -1). This O(n^2) path is the
/// ground truth; the NTT path must match it bit-exactly.
inline Poly poly_mul_schoolbook(const Poly& a, const Poly& b) {
    detail::check_same_params(a, b);
    const std::uint32_t n = a.n();
    const std::uint64_t q = a.params().q();
    Poly r(a.params());
    std::vector<std::uint64_t> acc(n, 0);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (a[i] == 0) continue;
        for (std::uint32_t j = 0; j < n; ++j) {
            std::uint64_t p = mul_mod(a[i], b[j], q);
            std::uint32_t k = i + j;
            if (k < n) {
                acc[k] = add_mod(acc[k], p, q);
            } else {
                acc[k - n] = sub_mod(acc[k - n], p, q);  // X^n wraps to -1
            }
        }
    }
    for (std::uint32_t i = 0; i < n; ++i) r.set(i, acc[i]);
    return r;
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
    detail::check_same_params(a, b);
    const RingParams& p = a.params();
    if (!p.ntt_enabled()) return poly_mul_schoolbook(a, b);
    const std::uint64_t q = p.q();
    const std::uint32_t n = p.n();
    const auto& tb = p.ntt_tables();
    std::vector<std::uint64_t> fa(n), fb(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        fa[i] = mul_mod(a[i], tb.psi_pow[i], q);
        fb[i] = mul_mod(b[i], tb.psi_pow[i], q);
    }
    detail::ntt_forward(fa, p);
    detail::ntt_forward(fb, p);
    for (std::uint32_t i = 0; i < n; ++i) fa[i] = mul_mod(fa[i], fb[i], q);
    detail::ntt_inverse(fa, p);
    Poly r(p);
    for (std::uint32_t i = 0; i < n; ++i)
        r.set(i, mul_mod(fa[i], tb.psi_inv_pow[i], q));
    return r;
}

inline Poly poly_scalar_mul(const Poly& a, std::int64_t k) {
    const std::uint64_t q = a.params().q();
    std::int64_t kr = k % static_cast<std::int64_t>(q);
    if (kr < 0) kr += static_cast<std::int64_t>(q);
    Poly r(a.params());
    for (std::size_t i = 0; i < a.n(); ++i)
        r.set(i, mul_mod(a[i], static_cast<std::uint64_t>(kr), q));
    return r;
}

enum class Dist { uniform_q, ternary, gaussian };

inline Poly sample(Dist dist, const RingParams& params, const NoiseParams& noise, Prng& rng) {
    Poly r(params);
    switch (dist) {
        case Dist::uniform_q:
            for (std::size_t i = 0; i < params.n(); ++i)
                r.set(i, rng.uniform_below(params.q()));
            break;
        case Dist::ternary:
            for (std::size_t i = 0; i < params.n(); ++i)
                r.set_centered(i, rng.ternary());
            break;
        case Dist::gaussian:
            for (std::size_t i = 0; i < params.n(); ++i)
                r.set_centered(i, rng.gaussian(noise));
            break;
    }
    return r;
}

inline Poly sample(Dist dist, const RingParams& params, Prng& rng) {
    if (dist == Dist::gaussian)
        throw std::invalid_argument("gaussian sampling requires NoiseParams");
    return sample(dist, params, NoiseParams{}, rng);
}

// --- named parameter presets -------------------------------------------------

inline void RingParams::init_ntt() {
    // need q prime with 2n | q-1; probe a primitive 2n-th root of unity
    const std::uint64_t q = q_;
    const std::uint32_t n = n_;
    if ((q - 1) % (2ull * n) != 0) return;
    // Miller-Rabin with deterministic witness set for 64-bit inputs
    auto is_prime = [](std::uint64_t m) {
        if (m < 2) return false;
        for (std::uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
            if (m % p == 0) return m == p;
        }
        std::uint64_t d = m - 1;
        int r = 0;
        while ((d & 1) == 0) { d >>= 1; ++r; }
        for (std::uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
            std::uint64_t x = pow_mod(a, d, m);
            if (x == 1 || x == m - 1) continue;
            bool composite = true;
            for (int i = 0; i < r - 1; ++i) {
                x = mul_mod(x, x, m);
                if (x == m - 1) { composite = false; break; }
            }
            if (composite) return false;
        }
        return true;
    };
    if (!is_prime(q)) return;

    std::uint64_t psi = 0;
    for (std::uint64_t cand = 2; cand < q; ++cand) {
        std::uint64_t p = pow_mod(cand, (q - 1) / (2ull * n), q);
        if (pow_mod(p, n, q) == q - 1) { psi = p; break; }
    }
    if (psi == 0) return;

    auto tb = std::make_shared<NttTables>();
    std::uint64_t psi_inv = pow_mod(psi, q - 2, q);
    std::uint64_t omega = mul_mod(psi, psi, q);
    std::uint64_t omega_inv = mul_mod(psi_inv, psi_inv, q);
    tb->psi_pow.resize(n);
    tb->psi_inv_pow.resize(n);
    tb->omega_pow.resize(n);
    tb->omega_inv_pow.resize(n);
    std::uint64_t a = 1, b = 1, c = 1, d = 1;
    for (std::uint32_t i = 0; i < n; ++i) {
        tb->psi_pow[i] = a;
        tb->psi_inv_pow[i] = b;
        tb->omega_pow[i] = c;
        tb->omega_inv_pow[i] = d;
        a = mul_mod(a, psi, q);
        b = mul_mod(b, psi_inv, q);
        c = mul_mod(c, omega, q);
        d = mul_mod(d, omega_inv, q);
    }
    tb->n_inv = pow_mod(n, q - 2, q);
    ntt_ = std::move(tb);
}

/// Named presets. "n8" is the toy/oracle size; "n2048"/"n4096" mirror the
/// benchmark key sizes; "n32" is sized for fixed-point training payloads:
/// t = 2^33 holds d + ws scale accumulation, q/t ~ 2^29 leaves headroom for
/// the 2^ws noise growth of integer-weighted ciphertext averaging, and
/// q mod t = 65 keeps the mask-removal rounding bias far below 1/2.
inline RingParams preset(const std::string& name) {
    if (name == "n8") return RingParams::create(8, 65537, 257);
    if (name == "n32") return RingParams::create(32, 4611686009837453377ull, std::uint64_t{1} << 33);
    if (name == "n2048") return RingParams::create(2048, 18014398509506561ull, std::uint64_t{1} << 20);
    if (name == "n4096") return RingParams::create(4096, 1152921504606904321ull, std::uint64_t{1} << 20);
    throw std::invalid_argument("unknown ring preset: " + name);
}

inline std::vector<std::string> preset_names() {
    return {"n8", "n32", "n2048", "n4096"};
}

}  // namespace mbfv
