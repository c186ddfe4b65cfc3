#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "tftps/group_math.hpp"

namespace tftps::cs {

struct SecretKey {
    Scalar x1, x2, y1, y2, z;
    friend bool operator==(const SecretKey&, const SecretKey&) = default;
};

/// C = g1^x1 g2^x2, D = g1^y1 g2^y2, H = g1^z.
struct PublicKey {
    GroupParams params;
    GroupElement c, d, h;
    friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct KeyPair {
    PublicKey pk;
    SecretKey sk;
};

struct Ciphertext {
    GroupElement u1, u2, e, v;
    friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

KeyPair keygen(const GroupParams& params, Rng& rng);

/// u1 = g1^r, u2 = g2^r, e = H^r m, v = C^r D^(r alpha), alpha = H(u1, u2, e).
/// Throws EncodingError if m is not a subgroup member.
Ciphertext encrypt(const PublicKey& pk, const GroupElement& m, const Scalar& r);

/// Draws r uniformly from [1, q); r = 0 is redrawn.
Ciphertext encrypt(const PublicKey& pk, const GroupElement& m, Rng& rng);

/**
 * Recovers m, or std::nullopt (REJECT) when the validity tag v does not match.
 *
 * The tag check and the message recovery are both computed on every call and
 * every exponentiation runs a fixed number of iterations, so accept and
 * reject paths perform the same sequence of modular multiplications.
 * Throws ParameterError if a component lies outside [1, p).
 */
std::optional<GroupElement> decrypt(const SecretKey& sk, const GroupParams& params, const Ciphertext& ct);

/// SHA-256 over length-prefixed (u16 BE) magnitudes of u1, u2, e, reduced mod q.
Scalar hash_to_scalar(const GroupElement& u1, const GroupElement& u2, const GroupElement& e, const BigInt& q);

/// Largest payload accepted by encode_message for these parameters.
std::size_t max_message_bytes(const GroupParams& params);

/// Maps t in [1, q] into the subgroup: t itself if it is a residue, else p - t.
GroupElement encode_integer(const BigInt& t, const GroupParams& params);
BigInt decode_integer(const GroupElement& m, const GroupParams& params);

/// encode_integer of int(0x01 || bytes). Throws EncodingError when too large.
GroupElement encode_message(ByteView bytes, const GroupParams& params);
Bytes decode_message(const GroupElement& m, const GroupParams& params);

/// u1 || u2 || e || v, each as u16 BE length then a magnitude of exactly
/// element_bytes() octets.
Bytes serialize_ciphertext(const Ciphertext& ct, const GroupParams& params);
std::size_t ciphertext_wire_size(const GroupParams& params);
/// Accepts any field width; throws MalformedPacket on truncation, trailing
/// bytes, or a value outside [1, p).
Ciphertext parse_ciphertext(ByteView wire, const GroupParams& params);

/// First 16 hex characters of SHA-256 over the group and public components.
std::string key_id(const PublicKey& pk);

// Key files: `[params]`, `[public]` and optionally `[secret]` sections.
std::string format_public_key_file(const PublicKey& pk);
std::string format_secret_key_file(const KeyPair& keys);

struct KeyFile {
    PublicKey pk;
    std::optional<SecretKey> sk;
};

/// Throws ConfigError on missing sections or fields.
KeyFile parse_key_file(std::string_view text);

}  // namespace tftps::cs
