#pragma once

// Textbook ElGamal over the same subgroup. Negative control for the games
// only; not installed with the public headers.

#include <optional>

#include "tftps/group_math.hpp"

namespace tftps::games::detail {

struct ElGamalKeys {
    Scalar x;
    GroupElement h;
};

struct ElGamalCiphertext {
    GroupElement u1, e;
};

ElGamalKeys elgamal_keygen(const GroupParams& params, Rng& rng);
ElGamalCiphertext elgamal_encrypt(const GroupParams& params, const GroupElement& h, const GroupElement& m, Rng& rng);
/// e / u1^x. Accepts every pair in [1, p): there is nothing to reject.
std::optional<GroupElement> elgamal_decrypt(const GroupParams& params, const Scalar& x, const ElGamalCiphertext& ct);

}  // namespace tftps::games::detail
