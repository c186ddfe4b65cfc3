#include "tftps/group_math.hpp"

#include <mutex>
#include <set>
#include <sstream>

#include "tftps/errors.hpp"

namespace tftps {

namespace {

thread_local std::uint64_t t_modmul_count = 0;

// RFC 2409 Oakley group 2 and RFC 3526 group 14. Both are safe primes.
constexpr std::string_view kModp1024 =
    "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74020bbea63b139b22514a08798e3404dd"
    "ef9519b3cd3a431b302b0a6df25f14374fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7ed"
    "ee386bfb5a899fa5ae9f24117c4b1fe649286651ece65381ffffffffffffffff";
constexpr std::string_view kModp2048 =
    "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74020bbea63b139b22514a08798e3404dd"
    "ef9519b3cd3a431b302b0a6df25f14374fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7ed"
    "ee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf0598da48361c55d39a69163fa8fd24cf5f"
    "83655d23dca3ad961c62f356208552bb9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3b"
    "e39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf6955817183995497cea956ae515d2261898fa0510"
    "15728e5a8aacaa68ffffffffffffffff";

constexpr unsigned kSmallPrimes[] = {3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61,
                                     67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139};

BigInt reduce(const BigInt& v, const BigInt& modulus) {
    BigInt r;
    mpz_mod(r.get_mpz_t(), v.get_mpz_t(), modulus.get_mpz_t());
    return r;
}

// Cheap filter before Miller-Rabin: neither q nor 2q+1 may have a small factor.
bool survives_sieve(const BigInt& q) {
    for (unsigned sp : kSmallPrimes) {
        unsigned long r = mpz_fdiv_ui(q.get_mpz_t(), sp);
        if (mpz_cmp_ui(q.get_mpz_t(), sp) != 0 && r == 0) return false;
        // 2q + 1 = 0 (mod sp)  <=>  q = (sp - 1) / 2 (mod sp)
        if ((2 * r + 1) % sp == 0 && mpz_cmp_ui(q.get_mpz_t(), (sp - 1) / 2) != 0) return false;
    }
    return true;
}

BigInt search_safe_prime(std::size_t bit_length, Rng& rng) {
    const std::size_t qbits = bit_length - 1;
    const std::size_t nbytes = (qbits + 7) / 8;
    for (;;) {
        BigInt q = from_bytes_be(rng.bytes(nbytes));
        // Trim to qbits, force top bit (exact size) and bottom bit (odd).
        mpz_fdiv_r_2exp(q.get_mpz_t(), q.get_mpz_t(), qbits);
        mpz_setbit(q.get_mpz_t(), qbits - 1);
        mpz_setbit(q.get_mpz_t(), 0);
        if (!survives_sieve(q)) continue;
        if (mpz_probab_prime_p(q.get_mpz_t(), 1) == 0) continue;
        BigInt p = 2 * q + 1;
        if (mpz_probab_prime_p(p.get_mpz_t(), 1) == 0) continue;
        if (is_probable_prime(q) && is_probable_prime(p)) return p;
    }
}

GroupParams with_random_generators(BigInt p, Rng& rng) {
    GroupParams params;
    params.p = std::move(p);
    params.q = (params.p - 1) / 2;
    params.g1 = random_subgroup_element(params, rng);
    do {
        params.g2 = random_subgroup_element(params, rng);
    } while (params.g2 == params.g1);
    return params;
}

}  // namespace

std::size_t GroupParams::element_bytes() const { return (bits() + 7) / 8; }

std::size_t GroupParams::bits() const { return mpz_sizeinbase(p.get_mpz_t(), 2); }

std::uint64_t modmul_count() { return t_modmul_count; }
void reset_modmul_count() { t_modmul_count = 0; }

BigInt mod_exp(const BigInt& base, const BigInt& exponent, const BigInt& modulus, std::size_t exponent_bits) {
    if (modulus < 2) throw ParameterError("mod_exp: modulus must be >= 2");
    if (exponent < 0) throw ParameterError("mod_exp: exponent must be non-negative");
    std::size_t bits = exponent_bits;
    if (bits == 0) {
        bits = exponent == 0 ? 0 : mpz_sizeinbase(exponent.get_mpz_t(), 2);
    } else if (mpz_sizeinbase(exponent.get_mpz_t(), 2) > bits && exponent != 0) {
        throw ParameterError("mod_exp: exponent wider than exponent_bits");
    }

    const BigInt b = reduce(base, modulus);
    BigInt acc = 1;
    BigInt product;
    const BigInt* pick[2] = {&acc, &product};
    for (std::size_t i = bits; i-- > 0;) {
        acc *= acc;
        mpz_mod(acc.get_mpz_t(), acc.get_mpz_t(), modulus.get_mpz_t());
        product = acc * b;
        mpz_mod(product.get_mpz_t(), product.get_mpz_t(), modulus.get_mpz_t());
        const int bit = mpz_tstbit(exponent.get_mpz_t(), i);
        acc = *pick[bit];
        t_modmul_count += 2;
    }
    return acc;
}

std::uint64_t element_order(std::uint64_t g, std::uint64_t p) {
    if (p < 2) throw ParameterError("element_order: p must be >= 2");
    if (g == 0 || g >= p) throw ParameterError("element_order: g must lie in [1, p)");
    std::uint64_t x = g;
    for (std::uint64_t k = 1; k < p; ++k) {
        if (x == 1) return k;
        x = static_cast<std::uint64_t>(static_cast<unsigned __int128>(x) * g % p);
    }
    throw ParameterError("element_order: g has no finite order modulo p (p not prime?)");
}

bool is_primitive_root(std::uint64_t g, std::uint64_t p) { return element_order(g, p) == p - 1; }

bool is_probable_prime(const BigInt& n) { return mpz_probab_prime_p(n.get_mpz_t(), 64) > 0; }

GroupParams desk_params() { return GroupParams{23, 11, 4, 9}; }

GroupParams gen_group_params(std::size_t bit_length, Rng& rng) {
    if (bit_length < 8) throw ParameterError("gen_group_params: bit_length must be >= 8");
    if (bit_length == 8) return desk_params();
    if (bit_length == 1024) return with_random_generators(from_hex(kModp1024), rng);
    if (bit_length == 2048) return with_random_generators(from_hex(kModp2048), rng);
    return with_random_generators(search_safe_prime(bit_length, rng), rng);
}

BigInt random_below(const BigInt& bound, Rng& rng) {
    if (bound <= 0) throw ParameterError("random_below: bound must be positive");
    const std::size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
    const std::size_t nbytes = (bits + 7) / 8;
    for (;;) {
        BigInt v = from_bytes_be(rng.bytes(nbytes));
        mpz_fdiv_r_2exp(v.get_mpz_t(), v.get_mpz_t(), bits);
        if (v < bound) return v;
    }
}

BigInt random_subgroup_element(const GroupParams& params, Rng& rng) {
    if (params.p < 5) throw ParameterError("random_subgroup_element: group too small");
    // Squares of h in [2, p-2] are exactly the non-identity quadratic residues.
    BigInt h = random_below(params.p - 3, rng) + 2;
    BigInt g = h * h;
    mpz_mod(g.get_mpz_t(), g.get_mpz_t(), params.p.get_mpz_t());
    return g;
}

Scalar random_scalar(const GroupParams& params, Rng& rng) { return Scalar{random_below(params.q, rng)}; }

bool is_subgroup_member(const GroupParams& params, const BigInt& x) {
    if (x < 1 || x >= params.p) return false;
    BigInt r;
    mpz_powm(r.get_mpz_t(), x.get_mpz_t(), params.q.get_mpz_t(), params.p.get_mpz_t());
    return r == 1;
}

std::vector<std::string> validate_group_params(const GroupParams& params) {
    std::vector<std::string> violations;
    const bool p_prime = params.p >= 2 && is_probable_prime(params.p);
    const bool q_prime = params.q >= 2 && is_probable_prime(params.q);
    if (!p_prime) violations.emplace_back("p not prime");
    if (!q_prime) violations.emplace_back("q not prime");
    if (params.p != 2 * params.q + 1) violations.emplace_back("p != 2q + 1");

    auto check_generator = [&](const BigInt& g, const char* name) {
        if (g == 1) {
            violations.push_back(std::string(name) + " is identity");
        } else if (g < 1 || g >= params.p) {
            violations.push_back(std::string(name) + " out of range [1, p)");
        } else if (params.p >= 2 && params.q >= 1 && !is_subgroup_member(params, g)) {
            violations.push_back(std::string(name) + " not in order-q subgroup");
        }
    };
    check_generator(params.g1, "g1");
    check_generator(params.g2, "g2");
    if (params.g1 == params.g2) violations.emplace_back("g1 equals g2");
    return violations;
}

void require_valid_params(const GroupParams& params) {
    static std::mutex mutex;
    static std::set<std::pair<std::string, std::string>> known_good;
    const auto key = std::make_pair(to_hex(params.p), to_hex(params.q));
    {
        std::lock_guard lock(mutex);
        if (known_good.contains(key)) {
            // Primality already established; only the generators need checking.
            std::vector<std::string> violations;
            for (const BigInt* g : {&params.g1, &params.g2}) {
                if (*g == 1 || !is_subgroup_member(params, *g)) violations.emplace_back("bad generator");
            }
            if (params.g1 == params.g2) violations.emplace_back("g1 equals g2");
            if (violations.empty()) return;
        }
    }
    auto violations = validate_group_params(params);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << "invalid group parameters:";
        for (const auto& v : violations) msg << ' ' << v << ';';
        throw ParameterError(msg.str());
    }
    std::lock_guard lock(mutex);
    known_good.insert(key);
}

Bytes to_bytes_be(const BigInt& v) {
    if (v < 0) throw ParameterError("to_bytes_be: negative value");
    if (v == 0) return {};
    Bytes out((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
    std::size_t written = 0;
    mpz_export(out.data(), &written, 1, 1, 1, 0, v.get_mpz_t());
    out.resize(written);
    return out;
}

Bytes to_bytes_be_fixed(const BigInt& v, std::size_t width) {
    Bytes minimal = to_bytes_be(v);
    if (minimal.size() > width) throw ParameterError("to_bytes_be_fixed: value wider than field");
    Bytes out(width - minimal.size(), 0);
    append(out, minimal);
    return out;
}

BigInt from_bytes_be(ByteView data) {
    BigInt v;
    if (!data.empty()) mpz_import(v.get_mpz_t(), data.size(), 1, 1, 1, 0, data.data());
    return v;
}

std::string to_hex(const BigInt& v) { return v.get_str(16); }

BigInt from_hex(std::string_view hex) {
    if (hex.empty()) throw ParameterError("from_hex: empty string");
    for (char c : hex) {
        const bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
        if (!ok) throw ParameterError("from_hex: invalid hex digit");
    }
    return BigInt(std::string(hex), 16);
}

std::string format_params(const GroupParams& params) {
    std::ostringstream out;
    out << "p=" << to_hex(params.p) << '\n'
        << "q=" << to_hex(params.q) << '\n'
        << "g1=" << to_hex(params.g1) << '\n'
        << "g2=" << to_hex(params.g2) << '\n';
    return out.str();
}

}  // namespace tftps
