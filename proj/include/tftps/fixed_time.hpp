#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace tftps::fixed_time {

using Clock = std::chrono::steady_clock;
using Nanos = std::chrono::nanoseconds;

/// Operation name plus the input length the budget applies to.
struct OpClass {
    std::string name;
    std::size_t input_length = 0;

    std::string label() const { return name + ":" + std::to_string(input_length); }
    friend auto operator<=>(const OpClass&, const OpClass&) = default;
};

struct TimeBudget {
    OpClass op_class;
    Nanos budget{0};
    std::size_t samples = 0;
    double safety_factor = 1.0;
};

struct TimingSample {
    OpClass op_class;
    Nanos elapsed{0};
    Clock::time_point timestamp;
};

struct OverrunEvent {
    OpClass op_class;
    Nanos budget{0};
    Nanos actual{0};
};

/// Installs the handler called on every budget overrun (nullptr restores the
/// default, which only counts). Thread-safe.
void set_overrun_handler(std::function<void(const OverrunEvent&)> handler);
std::uint64_t overrun_count();

namespace detail {
void report_overrun(const OverrunEvent& event);
/// Sleeps until `deadline - 1ms`, then spins on the monotonic clock.
void pad_until(Clock::time_point deadline);
}  // namespace detail

/// Busy-waits for `d` on the monotonic clock.
void spin_for(Nanos d);

/// budget = max(samples) * safety_factor. Throws ParameterError on an empty
/// sample set or a factor below 1.
TimeBudget budget_from_samples(const OpClass& op_class, const std::vector<Nanos>& samples, double safety_factor);

/**
 * Runs `workload(i)` for i in [0, n_samples) and derives a budget from the
 * slowest run. Needs n_samples >= 30 and safety_factor >= 1; any exception
 * from the workload becomes a CalibrationError. Run on an idle machine.
 */
TimeBudget calibrate(const OpClass& op_class, const std::function<void(std::size_t)>& workload, std::size_t n_samples,
                     double safety_factor);

template <typename T>
struct FixedResult {
    T output;
    Nanos observed{0};
    bool overrun = false;
};

template <>
struct FixedResult<void> {
    Nanos observed{0};
    bool overrun = false;
};

/// Runs `operation` and holds completion until at least `budget` has elapsed.
/// An operation that outlives its budget is reported as an overrun and its
/// result is still returned.
template <typename F>
auto run_fixed(const TimeBudget& budget, F&& operation) -> FixedResult<std::invoke_result_t<F>> {
    using R = std::invoke_result_t<F>;
    const auto start = Clock::now();
    const auto deadline = start + budget.budget;
    auto finish = [&](auto& result) {
        const auto done = Clock::now();
        if (done > deadline) {
            result.overrun = true;
            result.observed = std::chrono::duration_cast<Nanos>(done - start);
            detail::report_overrun(OverrunEvent{budget.op_class, budget.budget, result.observed});
            return;
        }
        detail::pad_until(deadline);
        result.observed = std::chrono::duration_cast<Nanos>(Clock::now() - start);
    };
    if constexpr (std::is_void_v<R>) {
        std::forward<F>(operation)();
        FixedResult<void> result;
        finish(result);
        return result;
    } else {
        FixedResult<R> result{std::forward<F>(operation)()};
        finish(result);
        return result;
    }
}

template <typename T>
struct Observed {
    T output;
    TimingSample sample;
};

template <>
struct Observed<void> {
    TimingSample sample;
};

/// Unpadded measurement of a single call.
template <typename F>
auto observe(F&& operation, OpClass op_class = {}) -> Observed<std::invoke_result_t<F>> {
    using R = std::invoke_result_t<F>;
    const auto start = Clock::now();
    if constexpr (std::is_void_v<R>) {
        std::forward<F>(operation)();
        const auto end = Clock::now();
        return Observed<void>{TimingSample{std::move(op_class), std::chrono::duration_cast<Nanos>(end - start), start}};
    } else {
        R out = std::forward<F>(operation)();
        const auto end = Clock::now();
        return Observed<R>{std::move(out),
                           TimingSample{std::move(op_class), std::chrono::duration_cast<Nanos>(end - start), start}};
    }
}

/// Budgets keyed by op class, persisted as `<name>:<input_length>=<budget_ns>` lines.
class BudgetTable {
public:
    BudgetTable() = default;
    BudgetTable(const BudgetTable& other);
    BudgetTable& operator=(const BudgetTable& other);

    void put(const TimeBudget& budget);
    std::optional<TimeBudget> find(const OpClass& op_class) const;
    /// Throws CalibrationError naming the missing op class.
    TimeBudget require(const OpClass& op_class) const;
    std::vector<TimeBudget> all() const;
    bool empty() const;

    std::string serialize() const;
    /// Throws ConfigError on malformed lines.
    static BudgetTable parse(const std::string& text);

    static BudgetTable load(const std::string& path);
    void save(const std::string& path) const;

private:
    mutable std::mutex mutex_;
    std::map<OpClass, TimeBudget> budgets_;
};

/// $TFTPS_CALIBRATION when set, else `fallback`.
std::string calibration_path(const std::string& fallback = "tftps-calibration.txt");

}  // namespace tftps::fixed_time
