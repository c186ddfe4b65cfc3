#pragma once

#include "tftps/cramer_shoup.hpp"
#include "tftps/fixed_time.hpp"

namespace tftps::cs_timing {

inline constexpr const char* kEncryptOp = "cs.encrypt";
inline constexpr const char* kDecryptOp = "cs.decrypt";

/// cs.encrypt is keyed by the element width, cs.decrypt by the ciphertext wire size.
fixed_time::OpClass encrypt_class(const GroupParams& params);
fixed_time::OpClass decrypt_class(const GroupParams& params);

/// Times encryption / decryption of fresh random messages under a fresh key.
fixed_time::TimeBudget calibrate_encrypt(const GroupParams& params, std::size_t n_samples, double safety_factor,
                                         Rng& rng);
fixed_time::TimeBudget calibrate_decrypt(const GroupParams& params, std::size_t n_samples, double safety_factor,
                                         Rng& rng);

/// Looks up the cs.decrypt budget, calibrating (30 samples, factor 1.5) and
/// storing it when the table has none.
fixed_time::TimeBudget ensure_decrypt_budget(fixed_time::BudgetTable& table, const GroupParams& params);

}  // namespace tftps::cs_timing
