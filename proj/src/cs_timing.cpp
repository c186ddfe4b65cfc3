#include "tftps/cs_timing.hpp"

#include <mutex>
#include <vector>

namespace tftps::cs_timing {

fixed_time::OpClass encrypt_class(const GroupParams& params) { return {kEncryptOp, params.element_bytes()}; }

fixed_time::OpClass decrypt_class(const GroupParams& params) { return {kDecryptOp, cs::ciphertext_wire_size(params)}; }

fixed_time::TimeBudget calibrate_encrypt(const GroupParams& params, std::size_t n_samples, double safety_factor,
                                         Rng& rng) {
    const cs::KeyPair keys = cs::keygen(params, rng);
    std::vector<GroupElement> messages;
    for (std::size_t i = 0; i < n_samples; ++i) messages.push_back(GroupElement{random_subgroup_element(params, rng)});
    return fixed_time::calibrate(
        encrypt_class(params), [&](std::size_t i) { (void)cs::encrypt(keys.pk, messages[i], rng); }, n_samples,
        safety_factor);
}

fixed_time::TimeBudget calibrate_decrypt(const GroupParams& params, std::size_t n_samples, double safety_factor,
                                         Rng& rng) {
    const cs::KeyPair keys = cs::keygen(params, rng);
    std::vector<cs::Ciphertext> cts;
    for (std::size_t i = 0; i < n_samples; ++i) {
        cts.push_back(cs::encrypt(keys.pk, GroupElement{random_subgroup_element(params, rng)}, rng));
    }
    return fixed_time::calibrate(
        decrypt_class(params), [&](std::size_t i) { (void)cs::decrypt(keys.sk, params, cts[i]); }, n_samples,
        safety_factor);
}

fixed_time::TimeBudget ensure_decrypt_budget(fixed_time::BudgetTable& table, const GroupParams& params) {
    static std::mutex calibration_mutex;
    const auto op = decrypt_class(params);
    if (auto found = table.find(op)) return *found;
    std::lock_guard lock(calibration_mutex);
    if (auto found = table.find(op)) return *found;
    Rng rng = Rng::system();
    auto budget = calibrate_decrypt(params, 30, 1.5, rng);
    table.put(budget);
    return budget;
}

}  // namespace tftps::cs_timing
