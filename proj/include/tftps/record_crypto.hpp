#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "tftps/bytes.hpp"
#include "tftps/rng.hpp"

namespace tftps::record {

inline constexpr std::size_t kMaterialBytes = 64;
inline constexpr std::size_t kKeyBytes = 32;
inline constexpr std::size_t kNonceBytes = 16;
inline constexpr std::size_t kTagBytes = 32;
/// seq (8) || nonce (16) || tag (32)
inline constexpr std::size_t kRecordOverhead = 8 + kNonceBytes + kTagBytes;

/// 512 bits of wrapped key material.
struct SessionKeyMaterial {
    std::array<std::uint8_t, kMaterialBytes> raw{};

    static SessionKeyMaterial from_bytes(ByteView bytes);
    static SessionKeyMaterial generate(Rng& rng);
    friend bool operator==(const SessionKeyMaterial&, const SessionKeyMaterial&) = default;
};

struct SessionKeys {
    std::array<std::uint8_t, kKeyBytes> enc_key{};
    std::array<std::uint8_t, kKeyBytes> mac_key{};
};

struct SealedRecord {
    std::uint64_t seq = 0;
    std::array<std::uint8_t, kNonceBytes> nonce{};
    Bytes ciphertext;
    std::array<std::uint8_t, kTagBytes> tag{};
    friend bool operator==(const SealedRecord&, const SealedRecord&) = default;
};

/// enc_key = octets [0, 32), mac_key = octets [32, 64).
SessionKeys derive_session_keys(const SessionKeyMaterial& material);
/// Throws ParameterError unless exactly 64 octets.
SessionKeys derive_session_keys(ByteView material);

/// AES-256-CTR under a fresh random nonce, then HMAC-SHA-256 over
/// seq || nonce || ciphertext.
SealedRecord seal_block(const SessionKeys& keys, std::uint64_t seq, ByteView plaintext, Rng& rng);

/// Plaintext, or std::nullopt (MAC failure). The tag is checked before any
/// decryption. A record whose carried seq differs from `seq` also fails.
std::optional<Bytes> open_block(const SessionKeys& keys, std::uint64_t seq, const SealedRecord& record);

/// Compares every byte regardless of where the first difference is.
bool tags_equal(ByteView a, ByteView b);
/// Byte comparisons performed by tags_equal on this thread (test instrumentation).
std::uint64_t tag_compare_ops();
void reset_tag_compare_ops();

/// seq (u64 BE) || nonce || tag || ciphertext
Bytes serialize_record(const SealedRecord& record);
/// Throws MalformedPacket if shorter than the fixed overhead.
SealedRecord parse_record(ByteView wire);

}  // namespace tftps::record
