#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tftps/bytes.hpp"
#include "tftps/rng.hpp"

namespace tftps {

using BigInt = mpz_class;

/**
 * Quadratic-residue subgroup of Z_p* for a safe prime p = 2q + 1.
 *
 * g1 and g2 both generate the order-q subgroup. Nothing here is checked on
 * construction; run validate_group_params() on anything read from outside.
 */
struct GroupParams {
    BigInt p;
    BigInt q;
    BigInt g1;
    BigInt g2;

    /// Byte length of p; every fixed-width element encoding uses this.
    std::size_t element_bytes() const;
    std::size_t bits() const;

    friend bool operator==(const GroupParams&, const GroupParams&) = default;
};

/// Exponent in [0, q).
struct Scalar {
    BigInt value;
    friend bool operator==(const Scalar&, const Scalar&) = default;
};

/// Element of [1, p); members of the order-q subgroup satisfy value^q = 1.
struct GroupElement {
    BigInt value;
    friend bool operator==(const GroupElement&, const GroupElement&) = default;
};

/// Modular multiplications performed by mod_exp on the calling thread.
/// Tests use it to check that secret-dependent paths do identical work.
std::uint64_t modmul_count();
void reset_modmul_count();

/**
 * base^exponent mod modulus by square-and-multiply-always.
 *
 * Every exponent bit costs one squaring and one multiplication; the product
 * is discarded when the bit is zero. `exponent_bits` fixes the number of
 * iterations (the exponent is left-padded with zeros) so that exponents of
 * different magnitude below 2^exponent_bits run the same sequence. Zero
 * means "use the exponent's own bit length".
 */
BigInt mod_exp(const BigInt& base, const BigInt& exponent, const BigInt& modulus,
               std::size_t exponent_bits = 0);

/// Smallest k >= 1 with g^k = 1 (mod p), by linear scan. Small p only.
std::uint64_t element_order(std::uint64_t g, std::uint64_t p);
bool is_primitive_root(std::uint64_t g, std::uint64_t p);

/// Probabilistic primality, 64 Miller-Rabin rounds.
bool is_probable_prime(const BigInt& n);

/// p = 23, q = 11, g1 = 4, g2 = 9.
GroupParams desk_params();

/**
 * Fresh group parameters of the requested size, deterministic in `rng`.
 *
 * 1024 and 2048 bits reuse the RFC 2409 / RFC 3526 MODP safe primes and
 * draw both generators from `rng`; other sizes search for a safe prime.
 * bit_length 8 returns desk_params().
 */
GroupParams gen_group_params(std::size_t bit_length, Rng& rng);

/// Uniformly random subgroup element other than 1.
BigInt random_subgroup_element(const GroupParams& params, Rng& rng);
/// Uniform scalar in [0, q).
Scalar random_scalar(const GroupParams& params, Rng& rng);
BigInt random_below(const BigInt& bound, Rng& rng);

bool is_subgroup_member(const GroupParams& params, const BigInt& x);

/// Every violated invariant, as human-readable strings. Empty means valid.
std::vector<std::string> validate_group_params(const GroupParams& params);

/// Throws ParameterError listing the violations, if any. Primality results
/// are memoised per (p, q) for the lifetime of the process.
void require_valid_params(const GroupParams& params);

// Big-endian magnitude helpers.
Bytes to_bytes_be(const BigInt& v);
Bytes to_bytes_be_fixed(const BigInt& v, std::size_t width);
BigInt from_bytes_be(ByteView data);
std::string to_hex(const BigInt& v);
BigInt from_hex(std::string_view hex);

/// `p=..`, `q=..`, `g1=..`, `g2=..` lines (lower-case hex).
std::string format_params(const GroupParams& params);

}  // namespace tftps
