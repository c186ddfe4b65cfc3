#include "tftps/digest.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <memory>

#include "tftps/errors.hpp"

namespace tftps {

namespace {

struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

}  // namespace

Digest256 sha256(std::initializer_list<ByteView> parts) {
    std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
    for (ByteView part : parts) {
        if (EVP_DigestUpdate(ctx.get(), part.data(), part.size()) != 1) throw Error("sha256: update failed");
    }
    Digest256 out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
        throw Error("sha256: final failed");
    }
    return out;
}

Digest256 hmac_sha256(ByteView key, std::initializer_list<ByteView> parts) {
    Bytes joined;
    for (ByteView part : parts) append(joined, part);
    Digest256 out{};
    unsigned int len = 0;
    if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), joined.data(), joined.size(), out.data(),
             &len) == nullptr ||
        len != out.size()) {
        throw Error("hmac-sha256 failed");
    }
    return out;
}

}  // namespace tftps
