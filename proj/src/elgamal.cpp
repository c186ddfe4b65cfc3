#include "elgamal.hpp"

#include "tftps/errors.hpp"

namespace tftps::games::detail {

namespace {

std::size_t qbits(const GroupParams& params) { return mpz_sizeinbase(params.q.get_mpz_t(), 2); }

}  // namespace

ElGamalKeys elgamal_keygen(const GroupParams& params, Rng& rng) {
    require_valid_params(params);
    ElGamalKeys keys;
    keys.x = random_scalar(params, rng);
    keys.h.value = mod_exp(params.g1, keys.x.value, params.p, qbits(params));
    return keys;
}

ElGamalCiphertext elgamal_encrypt(const GroupParams& params, const GroupElement& h, const GroupElement& m, Rng& rng) {
    if (!is_subgroup_member(params, m.value)) throw EncodingError("elgamal: message is not a subgroup member");
    Scalar r;
    do {
        r = random_scalar(params, rng);
    } while (r.value == 0);
    ElGamalCiphertext ct;
    ct.u1.value = mod_exp(params.g1, r.value, params.p, qbits(params));
    BigInt e = mod_exp(h.value, r.value, params.p, qbits(params)) * m.value;
    mpz_mod(e.get_mpz_t(), e.get_mpz_t(), params.p.get_mpz_t());
    ct.e.value = e;
    return ct;
}

std::optional<GroupElement> elgamal_decrypt(const GroupParams& params, const Scalar& x, const ElGamalCiphertext& ct) {
    for (const auto* v : {&ct.u1.value, &ct.e.value}) {
        if (*v < 1 || *v >= params.p) return std::nullopt;
    }
    const BigInt s = mod_exp(ct.u1.value, x.value, params.p, qbits(params));
    const BigInt s_inv = mod_exp(s, params.p - 2, params.p);
    BigInt m = ct.e.value * s_inv;
    mpz_mod(m.get_mpz_t(), m.get_mpz_t(), params.p.get_mpz_t());
    return GroupElement{m};
}

}  // namespace tftps::games::detail
