#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "tftps/errors.hpp"
#include "tftps/group_math.hpp"

using namespace tftps;

TEST(ModExp, Examples) {
    EXPECT_EQ(mod_exp(3, 2, 7), 2);
    EXPECT_EQ(mod_exp(3, 6, 7), 1);
    EXPECT_EQ(mod_exp(4, 0, 23), 1);
    EXPECT_EQ(mod_exp(4, 11, 23), oracle::pow_mod(4, 11, 23));
    EXPECT_EQ(mod_exp(4, 11, 23), 1);
}

TEST(ModExp, RejectsTinyModulus) {
    EXPECT_THROW(mod_exp(3, 2, 1), ParameterError);
    EXPECT_THROW(mod_exp(3, 2, 0), ParameterError);
}

TEST(ModExp, MatchesNaiveOracle) {
    auto rng = Rng::from_seed(5);
    for (int i = 0; i < 2000; ++i) {
        const std::uint64_t m = 2 + rng.below(5000);
        const std::uint64_t b = rng.below(10000);
        const std::uint64_t e = rng.below(300);
        ASSERT_EQ(mod_exp(b, e, m), oracle::pow_mod(b, e, m)) << b << "^" << e << " mod " << m;
    }
}

TEST(ModExp, MatchesGmpOnLargeOperands) {
    auto rng = Rng::from_seed(6);
    const auto params = gen_group_params(1024, rng);
    for (int i = 0; i < 20; ++i) {
        const BigInt b = random_below(params.p, rng);
        const BigInt e = random_below(params.q, rng);
        BigInt want;
        mpz_powm(want.get_mpz_t(), b.get_mpz_t(), e.get_mpz_t(), params.p.get_mpz_t());
        EXPECT_EQ(mod_exp(b, e, params.p), want);
        EXPECT_EQ(mod_exp(b, e, params.p, 1024), want);
    }
}

TEST(ModExp, WorkIndependentOfExponentBits) {
    const BigInt p = desk_params().p;
    std::set<std::uint64_t> counts;
    for (unsigned e = 0; e < 256; ++e) {
        reset_modmul_count();
        mod_exp(5, e, p, 8);
        counts.insert(modmul_count());
    }
    EXPECT_EQ(counts.size(), 1u);
}

TEST(OrdersModSeven, GeneratorThreeRow) {
    const std::vector<BigInt> want{3, 2, 6, 4, 5, 1};
    std::vector<BigInt> row;
    std::set<BigInt> seen;
    for (int x = 1; x <= 6; ++x) {
        row.push_back(mod_exp(3, x, 7));
        seen.insert(row.back());
    }
    EXPECT_EQ(row, want);
    EXPECT_EQ(seen, (std::set<BigInt>{1, 2, 3, 4, 5, 6}));
}

TEST(OrdersModSeven, GeneratorFourRow) {
    const std::vector<BigInt> want{4, 2, 1, 4, 2, 1};
    for (int x = 1; x <= 6; ++x) EXPECT_EQ(mod_exp(4, x, 7), want[x - 1]);
}

TEST(PrimitiveRoot, Examples) {
    EXPECT_EQ(element_order(3, 7), 6u);
    EXPECT_EQ(element_order(4, 7), 3u);
    EXPECT_EQ(element_order(1, 7), 1u);
    EXPECT_TRUE(is_primitive_root(3, 7));
    EXPECT_FALSE(is_primitive_root(4, 7));
    EXPECT_FALSE(is_primitive_root(1, 7));
    EXPECT_THROW(element_order(0, 7), ParameterError);
    EXPECT_THROW(element_order(7, 7), ParameterError);
}

TEST(PrimitiveRoot, AgreesWithBruteForceBelow100) {
    for (std::uint64_t p = 3; p < 100; ++p) {
        if (!oracle::is_prime(p)) continue;
        for (std::uint64_t g = 1; g < p; ++g) {
            ASSERT_EQ(element_order(g, p), oracle::order(g, p)) << g << " mod " << p;
            ASSERT_EQ(is_primitive_root(g, p), oracle::order(g, p) == p - 1);
        }
    }
}

TEST(Params, DeskParamsByBruteForce) {
    const auto d = desk_params();
    EXPECT_EQ(d.p, 23);
    EXPECT_EQ(d.q, 11);
    EXPECT_EQ(d.g1, 4);
    EXPECT_EQ(d.g2, 9);
    std::set<std::uint64_t> squares;
    for (std::uint64_t x = 1; x < 23; ++x) squares.insert(x * x % 23);
    EXPECT_TRUE(squares.count(4));
    EXPECT_TRUE(squares.count(9));
    EXPECT_EQ(oracle::order(4, 23), 11u);
    EXPECT_EQ(oracle::order(9, 23), 11u);
    EXPECT_TRUE(validate_group_params(d).empty());
    auto rng = Rng::from_seed(1);
    EXPECT_EQ(gen_group_params(8, rng), d);
}

TEST(Params, Violations) {
    auto bad = desk_params();
    bad.g1 = 1;
    EXPECT_FALSE(validate_group_params(bad).empty());
    EXPECT_THROW(require_valid_params(bad), ParameterError);

    auto composite = desk_params();
    composite.p = 22;
    const auto v = validate_group_params(composite);
    ASSERT_FALSE(v.empty());
    bool mentions_prime = false;
    for (const auto& s : v) mentions_prime |= s.find("prime") != std::string::npos;
    EXPECT_TRUE(mentions_prime);

    auto same = desk_params();
    same.g2 = same.g1;
    EXPECT_FALSE(validate_group_params(same).empty());

    auto outside = desk_params();
    outside.g2 = 5;  // a non-residue mod 23
    EXPECT_FALSE(validate_group_params(outside).empty());
}

TEST(Params, DeterministicAndValid) {
    for (std::size_t bits : {16u, 64u, 1024u}) {
        auto a = Rng::from_seed(77);
        auto b = Rng::from_seed(77);
        const auto pa = gen_group_params(bits, a);
        EXPECT_EQ(pa, gen_group_params(bits, b));
        EXPECT_TRUE(validate_group_params(pa).empty()) << bits;
        EXPECT_EQ(pa.bits(), bits);
    }
}

TEST(Params, Production2048) {
    auto rng = Rng::from_seed(3);
    const auto params = gen_group_params(2048, rng);
    EXPECT_TRUE(validate_group_params(params).empty());
    EXPECT_EQ(params.element_bytes(), 256u);
}

TEST(Params, LagrangeAndHomomorphism) {
    auto rng = Rng::from_seed(8);
    const auto params = gen_group_params(1024, rng);
    for (int i = 0; i < 100; ++i) {
        const BigInt g = random_subgroup_element(params, rng);
        ASSERT_TRUE(is_subgroup_member(params, g));
        ASSERT_EQ(mod_exp(g, params.q, params.p), 1);
    }
    for (int i = 0; i < 50; ++i) {
        const BigInt a = random_scalar(params, rng).value;
        const BigInt b = random_scalar(params, rng).value;
        const BigInt lhs = mod_exp(params.g1, a + b, params.p);
        const BigInt rhs = mod_exp(params.g1, a, params.p) * mod_exp(params.g1, b, params.p) % params.p;
        ASSERT_EQ(lhs, rhs);
    }
}

TEST(Params, RandomDrawsStayInRange) {
    auto rng = Rng::from_seed(9);
    const auto d = desk_params();
    std::set<BigInt> elements;
    for (int i = 0; i < 500; ++i) {
        const auto s = random_scalar(d, rng);
        ASSERT_GE(s.value, 0);
        ASSERT_LT(s.value, d.q);
        const auto e = random_subgroup_element(d, rng);
        ASSERT_NE(e, 1);
        elements.insert(e);
    }
    EXPECT_EQ(elements.size(), 10u);
}

TEST(Params, TextFormat) {
    EXPECT_EQ(format_params(desk_params()), "p=17\nq=b\ng1=4\ng2=9\n");
    EXPECT_EQ(to_hex(BigInt(255)), "ff");
    EXPECT_EQ(from_hex("ff"), 255);
    EXPECT_EQ(to_bytes_be_fixed(BigInt(1), 3), (Bytes{0, 0, 1}));
    EXPECT_EQ(from_bytes_be(Bytes{1, 0}), 256);
}

TEST(Primality, SmallNumbersAgreeWithTrialDivision) {
    for (std::uint64_t n = 0; n < 2000; ++n) ASSERT_EQ(is_probable_prime(n), oracle::is_prime(n)) << n;
}
