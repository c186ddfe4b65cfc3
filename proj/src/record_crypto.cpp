#include "tftps/record_crypto.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <memory>

#include "tftps/digest.hpp"
#include "tftps/errors.hpp"

namespace tftps::record {

namespace {

thread_local std::uint64_t t_compare_ops = 0;

struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};

// CTR mode is its own inverse.
Bytes aes256_ctr(const std::array<std::uint8_t, kKeyBytes>& key, const std::array<std::uint8_t, kNonceBytes>& nonce,
                 ByteView input) {
    std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_ctr(), nullptr, key.data(), nonce.data()) != 1) {
        throw Error("aes-256-ctr: init failed");
    }
    Bytes out(input.size());
    int len = 0;
    if (!input.empty() &&
        EVP_EncryptUpdate(ctx.get(), out.data(), &len, input.data(), static_cast<int>(input.size())) != 1) {
        throw Error("aes-256-ctr: update failed");
    }
    int tail = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + len, &tail) != 1) throw Error("aes-256-ctr: final failed");
    return out;
}

Digest256 compute_tag(const SessionKeys& keys, std::uint64_t seq, const SealedRecord& record) {
    Bytes seq_be;
    put_u64(seq_be, seq);
    return hmac_sha256(keys.mac_key, {seq_be, record.nonce, record.ciphertext});
}

}  // namespace

SessionKeyMaterial SessionKeyMaterial::from_bytes(ByteView bytes) {
    if (bytes.size() != kMaterialBytes) throw ParameterError("session key material must be exactly 64 octets");
    SessionKeyMaterial m;
    std::copy(bytes.begin(), bytes.end(), m.raw.begin());
    return m;
}

SessionKeyMaterial SessionKeyMaterial::generate(Rng& rng) {
    SessionKeyMaterial m;
    rng.fill(m.raw);
    return m;
}

SessionKeys derive_session_keys(const SessionKeyMaterial& material) {
    SessionKeys keys;
    std::copy_n(material.raw.begin(), kKeyBytes, keys.enc_key.begin());
    std::copy_n(material.raw.begin() + kKeyBytes, kKeyBytes, keys.mac_key.begin());
    return keys;
}

SessionKeys derive_session_keys(ByteView material) { return derive_session_keys(SessionKeyMaterial::from_bytes(material)); }

SealedRecord seal_block(const SessionKeys& keys, std::uint64_t seq, ByteView plaintext, Rng& rng) {
    SealedRecord record;
    record.seq = seq;
    rng.fill(record.nonce);
    record.ciphertext = aes256_ctr(keys.enc_key, record.nonce, plaintext);
    record.tag = compute_tag(keys, seq, record);
    return record;
}

std::optional<Bytes> open_block(const SessionKeys& keys, std::uint64_t seq, const SealedRecord& record) {
    const Digest256 expected = compute_tag(keys, seq, record);
    const bool tag_ok = tags_equal(expected, record.tag);
    if (!tag_ok || record.seq != seq) return std::nullopt;
    return aes256_ctr(keys.enc_key, record.nonce, record.ciphertext);
}

bool tags_equal(ByteView a, ByteView b) {
    if (a.size() != b.size()) return false;
    std::uint8_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff |= static_cast<std::uint8_t>(a[i] ^ b[i]);
        ++t_compare_ops;
    }
    return diff == 0;
}

std::uint64_t tag_compare_ops() { return t_compare_ops; }
void reset_tag_compare_ops() { t_compare_ops = 0; }

Bytes serialize_record(const SealedRecord& record) {
    Bytes out;
    out.reserve(kRecordOverhead + record.ciphertext.size());
    put_u64(out, record.seq);
    append(out, record.nonce);
    append(out, record.tag);
    append(out, record.ciphertext);
    return out;
}

SealedRecord parse_record(ByteView wire) {
    if (wire.size() < kRecordOverhead) throw MalformedPacket("sealed record shorter than 56 octets");
    SealedRecord record;
    record.seq = get_u64(wire, 0);
    std::copy_n(wire.begin() + 8, kNonceBytes, record.nonce.begin());
    std::copy_n(wire.begin() + 8 + kNonceBytes, kTagBytes, record.tag.begin());
    record.ciphertext.assign(wire.begin() + static_cast<std::ptrdiff_t>(kRecordOverhead), wire.end());
    return record;
}

}  // namespace tftps::record
