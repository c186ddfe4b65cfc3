#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "tftps/cs_timing.hpp"
#include "tftps/errors.hpp"
#include "tftps/fixed_time.hpp"

using namespace tftps;
using namespace tftps::fixed_time;
using namespace std::chrono_literals;

TEST(Budget, MaxTimesFactor) {
    const auto b = budget_from_samples({"op", 4}, {12ms, 15ms, 13ms}, 1.2);
    EXPECT_EQ(b.budget, Nanos(18ms));
    EXPECT_EQ(b.samples, 3u);
    EXPECT_EQ(budget_from_samples({"op", 4}, {7ms, 9ms}, 1.0).budget, Nanos(9ms));
    EXPECT_THROW(budget_from_samples({"op", 4}, {}, 1.0), ParameterError);
    EXPECT_THROW(budget_from_samples({"op", 4}, {1ms}, 0.9), ParameterError);
}

TEST(Calibrate, Preconditions) {
    EXPECT_THROW(calibrate({"op", 1}, [](std::size_t) {}, 29, 1.5), ParameterError);
    EXPECT_THROW(calibrate({"op", 1}, [](std::size_t) {}, 30, 0.5), ParameterError);
    EXPECT_THROW(calibrate({"op", 1}, [](std::size_t) { throw std::runtime_error("boom"); }, 30, 1.5),
                 CalibrationError);
    const auto b = calibrate({"spin", 1}, [](std::size_t) { spin_for(200us); }, 30, 1.0);
    EXPECT_GE(b.budget, Nanos(200us));
    EXPECT_EQ(b.samples, 30u);
}

TEST(RunFixed, PadsToBudget) {
    const TimeBudget budget{{"pad", 0}, 18ms, 1, 1.0};
    const auto r = run_fixed(budget, [] {
        spin_for(10ms);
        return 7;
    });
    EXPECT_EQ(r.output, 7);
    EXPECT_FALSE(r.overrun);
    EXPECT_GE(r.observed, Nanos(18ms));
    EXPECT_LT(r.observed, Nanos(18ms) + Nanos(5ms));
}

TEST(RunFixed, OverrunReturnsResult) {
    std::vector<OverrunEvent> events;
    set_overrun_handler([&](const OverrunEvent& e) { events.push_back(e); });
    const auto before = overrun_count();
    const TimeBudget budget{{"slow", 0}, 5ms, 1, 1.0};
    const auto r = run_fixed(budget, [] {
        spin_for(8ms);
        return std::string("done");
    });
    set_overrun_handler(nullptr);
    EXPECT_EQ(r.output, "done");
    EXPECT_TRUE(r.overrun);
    EXPECT_GE(r.observed, Nanos(8ms));
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].op_class.name, "slow");
    EXPECT_EQ(overrun_count(), before + 1);
}

TEST(Observe, ComposesWithRunFixed) {
    const TimeBudget budget{{"pad", 0}, 3ms, 1, 1.0};
    const auto o = observe([&] { return run_fixed(budget, [] {}).overrun; });
    EXPECT_FALSE(o.output);
    EXPECT_GE(o.sample.elapsed, Nanos(3ms));
    const auto noop = observe([] {});
    EXPECT_GE(noop.sample.elapsed.count(), 0);
    EXPECT_LT(noop.sample.elapsed, Nanos(1ms));
}

TEST(Observe, LeakyWorkloadIsMonotone) {
    Nanos last{0};
    for (int weight : {0, 4, 16, 64}) {
        const auto o = observe([&] { spin_for(Nanos(std::chrono::microseconds(50 * weight))); });
        EXPECT_GE(o.sample.elapsed, last);
        last = o.sample.elapsed;
    }
}

// Two equal-length classes of input with very different raw cost.
TEST(RunFixed, HidesInputDependentCost) {
    const TimeBudget budget = calibrate({"uneven", 8}, [](std::size_t i) { spin_for(i % 2 ? 2ms : 200us); }, 30, 1.5);
    const auto start_overruns = overrun_count();
    double sum[2] = {0, 0};
    for (int i = 0; i < 400; ++i) {
        const auto r = run_fixed(budget, [&] { spin_for(i % 2 ? 2ms : 200us); });
        sum[i % 2] += static_cast<double>(r.observed.count());
    }
    const double diff = std::abs(sum[0] - sum[1]) / 200.0;
    EXPECT_LT(diff, 0.05 * static_cast<double>(budget.budget.count()));
    EXPECT_LE(overrun_count() - start_overruns, 4u);
}

TEST(RunFixed, HidesCramerShoupAcceptReject) {
    auto rng = Rng::from_seed(12);
    const auto params = gen_group_params(1024, rng);
    const auto keys = cs::keygen(params, rng);
    const auto budget = cs_timing::calibrate_decrypt(params, 30, 1.5, rng);
    const auto good = cs::encrypt(keys.pk, cs::encode_message(Bytes(32, 0x00), params), rng);
    auto bad = cs::encrypt(keys.pk, cs::encode_message(Bytes(32, 0xFF), params), rng);
    bad.v.value = bad.v.value * params.g1 % params.p;
    double sum[2] = {0, 0};
    for (int i = 0; i < 100; ++i) {
        sum[i % 2] += static_cast<double>(
            run_fixed(budget, [&] { return cs::decrypt(keys.sk, params, i % 2 ? bad : good); }).observed.count());
    }
    EXPECT_LT(std::abs(sum[0] - sum[1]) / 50.0, 0.05 * static_cast<double>(budget.budget.count()));
}

TEST(Table, SerializeParseSave) {
    BudgetTable t;
    t.put({{"cs.decrypt", 1032}, Nanos(123456), 30, 1.5});
    t.put({{"cs.encrypt", 256}, Nanos(789), 30, 1.5});
    EXPECT_EQ(t.serialize(), "cs.decrypt:1032=123456\ncs.encrypt:256=789\n");
    const auto back = BudgetTable::parse(t.serialize());
    ASSERT_TRUE(back.find({"cs.decrypt", 1032}).has_value());
    EXPECT_EQ(back.find({"cs.decrypt", 1032})->budget, Nanos(123456));
    EXPECT_FALSE(back.find({"cs.decrypt", 1}).has_value());
    EXPECT_THROW(back.require({"nope", 1}), CalibrationError);
    EXPECT_THROW(BudgetTable::parse("garbage\n"), ConfigError);

    const auto path = (std::filesystem::temp_directory_path() / "tftps-budget-test.txt").string();
    t.save(path);
    EXPECT_EQ(BudgetTable::load(path).serialize(), t.serialize());
    std::filesystem::remove(path);
}

TEST(Table, EnvOverride) {
    ::setenv("TFTPS_CALIBRATION", "/tmp/elsewhere.txt", 1);
    EXPECT_EQ(calibration_path(), "/tmp/elsewhere.txt");
    ::unsetenv("TFTPS_CALIBRATION");
    EXPECT_EQ(calibration_path("x.txt"), "x.txt");
}
