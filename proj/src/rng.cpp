#include "tftps/rng.hpp"

#include <openssl/rand.h>

#include <algorithm>

#include "tftps/digest.hpp"
#include "tftps/errors.hpp"

namespace tftps {

Rng Rng::from_seed(std::uint64_t seed) {
    Bytes encoded;
    put_u64(encoded, seed);
    static constexpr std::string_view kDomain = "tftps-rng-v1";
    return Rng(sha256({to_bytes(kDomain), encoded}));
}

Rng Rng::system() {
    std::array<std::uint8_t, 32> key{};
    if (RAND_bytes(key.data(), static_cast<int>(key.size())) != 1) throw Error("RAND_bytes failed");
    return Rng(key);
}

void Rng::refill() {
    Bytes ctr;
    put_u64(ctr, counter_++);
    block_ = sha256({key_, ctr});
    used_ = 0;
}

void Rng::fill(std::span<std::uint8_t> out) {
    std::size_t done = 0;
    while (done < out.size()) {
        if (used_ == block_.size()) refill();
        std::size_t take = std::min(out.size() - done, block_.size() - used_);
        std::copy_n(block_.begin() + static_cast<std::ptrdiff_t>(used_), take, out.begin() + static_cast<std::ptrdiff_t>(done));
        used_ += take;
        done += take;
    }
}

Bytes Rng::bytes(std::size_t n) {
    Bytes out(n);
    fill(out);
    return out;
}

std::uint64_t Rng::next_u64() {
    std::array<std::uint8_t, 8> raw{};
    fill(raw);
    return get_u64(raw, 0);
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw ParameterError("Rng::below: bound must be non-zero");
    // Rejection sampling keeps the result unbiased.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    for (;;) {
        std::uint64_t v = next_u64();
        if (v < limit) return v % bound;
    }
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

Rng Rng::fork() {
    std::array<std::uint8_t, 32> child{};
    fill(child);
    return Rng(sha256({to_bytes("tftps-rng-fork"), child}));
}

}  // namespace tftps
