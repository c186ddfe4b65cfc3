#pragma once

#include <array>
#include <cstdint>

#include "tftps/bytes.hpp"

namespace tftps {

/// Deterministic random bit generator: SHA-256 over (seed || counter).
///
/// `Rng::from_seed` gives reproducible streams for tests, games and keygen
/// with `--seed`; `Rng::system` seeds the same generator from the OS CSPRNG.
/// Not thread-safe; use one instance per session.
class Rng {
public:
    static Rng from_seed(std::uint64_t seed);
    static Rng system();

    void fill(std::span<std::uint8_t> out);
    Bytes bytes(std::size_t n);
    std::uint64_t next_u64();
    /// Uniform in [0, bound); bound must be non-zero.
    std::uint64_t below(std::uint64_t bound);
    /// Uniform in [0, 1).
    double uniform01();
    bool coin() { return (next_u64() & 1U) != 0; }

    /// Independent child stream, deterministic given this stream's state.
    Rng fork();

private:
    explicit Rng(const std::array<std::uint8_t, 32>& key) : key_(key) {}
    void refill();

    std::array<std::uint8_t, 32> key_{};
    std::uint64_t counter_ = 0;
    std::array<std::uint8_t, 32> block_{};
    std::size_t used_ = block_.size();
};

}  // namespace tftps
