#include "tftps/games.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "elgamal.hpp"
#include "tftps/cramer_shoup.hpp"
#include "tftps/errors.hpp"

namespace tftps::games {

namespace {

BigInt mulmod(const BigInt& a, const BigInt& b, const BigInt& m) {
    BigInt r = a * b;
    mpz_mod(r.get_mpz_t(), r.get_mpz_t(), m.get_mpz_t());
    return r;
}

bool in_range(const BigInt& v, const GroupParams& params) { return v >= 1 && v < params.p; }

class CsScheme : public GameScheme {
public:
    explicit CsScheme(GroupParams params) : params_(std::move(params)) {}

    std::string name() const override { return "cs"; }
    const GroupParams& params() const override { return params_; }
    void keygen(Rng& rng) override { keys_ = cs::keygen(params_, rng); }

    GameCiphertext encrypt(const GroupElement& m, Rng& rng) const override {
        const auto ct = cs::encrypt(keys().pk, m, rng);
        return {{ct.u1.value, ct.u2.value, ct.e.value, ct.v.value}};
    }

    std::optional<GroupElement> decrypt(const GameCiphertext& c) const override {
        if (c.parts.size() != 4) return std::nullopt;
        for (const auto& v : c.parts) {
            if (!in_range(v, params_)) return std::nullopt;
        }
        return cs::decrypt(keys().sk, params_, {{c.parts[0]}, {c.parts[1]}, {c.parts[2]}, {c.parts[3]}});
    }

    std::size_t message_index() const override { return 2; }

private:
    const cs::KeyPair& keys() const {
        if (!keys_) throw ParameterError("scheme used before keygen");
        return *keys_;
    }

    GroupParams params_;
    std::optional<cs::KeyPair> keys_;
};

class ElGamalScheme : public GameScheme {
public:
    explicit ElGamalScheme(GroupParams params) : params_(std::move(params)) {}

    std::string name() const override { return "elgamal"; }
    const GroupParams& params() const override { return params_; }
    void keygen(Rng& rng) override { keys_ = detail::elgamal_keygen(params_, rng); }

    GameCiphertext encrypt(const GroupElement& m, Rng& rng) const override {
        const auto ct = detail::elgamal_encrypt(params_, keys().h, m, rng);
        return {{ct.u1.value, ct.e.value}};
    }

    std::optional<GroupElement> decrypt(const GameCiphertext& c) const override {
        if (c.parts.size() != 2) return std::nullopt;
        return detail::elgamal_decrypt(params_, keys().x, {{c.parts[0]}, {c.parts[1]}});
    }

    std::size_t message_index() const override { return 1; }

private:
    const detail::ElGamalKeys& keys() const {
        if (!keys_) throw ParameterError("scheme used before keygen");
        return *keys_;
    }

    GroupParams params_;
    std::optional<detail::ElGamalKeys> keys_;
};

class LeakyScheme : public GameScheme {
public:
    LeakyScheme(std::unique_ptr<GameScheme> inner, Nanos per_bit, std::size_t max_bits)
        : inner_(std::move(inner)), per_bit_(per_bit), max_bits_(max_bits) {}

    std::string name() const override { return "leaky-" + inner_->name(); }
    const GroupParams& params() const override { return inner_->params(); }
    void keygen(Rng& rng) override { inner_->keygen(rng); }

    GameCiphertext encrypt(const GroupElement& m, Rng& rng) const override {
        auto c = inner_->encrypt(m, rng);
        leak(m);
        return c;
    }

    std::optional<GroupElement> decrypt(const GameCiphertext& c) const override {
        auto m = inner_->decrypt(c);
        if (m) leak(*m);
        return m;
    }

    std::size_t message_index() const override { return inner_->message_index(); }

private:
    void leak(const GroupElement& m) const {
        const BigInt t = cs::decode_integer(m, params());
        const std::size_t bits = std::min<std::size_t>(mpz_popcount(t.get_mpz_t()), max_bits_);
        fixed_time::spin_for(per_bit_ * static_cast<std::int64_t>(bits));
    }

    std::unique_ptr<GameScheme> inner_;
    Nanos per_bit_;
    std::size_t max_bits_;
};

// ------------------------------------------------------------- adversaries

std::pair<GroupElement, GroupElement> random_equal_length_pair(const GroupParams& params, Rng& rng) {
    GroupElement m0{random_subgroup_element(params, rng)};
    for (;;) {
        GroupElement m1{random_subgroup_element(params, rng)};
        if (m1 != m0 && message_length(m1, params) == message_length(m0, params)) return {m0, m1};
    }
}

class RandomAdversary : public Adversary {
public:
    std::string name() const override { return "random"; }
    void phase1(Oracle&, Rng&) override {}
    std::pair<GroupElement, GroupElement> choose(Oracle& oracle, Rng& rng) override {
        return random_equal_length_pair(oracle.params(), rng);
    }
    int guess(const Challenge&, Oracle&, Rng& rng) override { return rng.coin() ? 1 : 0; }
};

// Multiplies the message component of c* by g1 and asks for the result.
class MalleateAdversary : public Adversary {
public:
    std::string name() const override { return "malleate"; }
    void phase1(Oracle&, Rng&) override {}

    std::pair<GroupElement, GroupElement> choose(Oracle& oracle, Rng& rng) override {
        m_ = random_equal_length_pair(oracle.params(), rng);
        return m_;
    }

    int guess(const Challenge& challenge, Oracle& oracle, Rng& rng) override {
        const GroupParams& params = oracle.params();
        GameCiphertext mauled = challenge.ciphertext;
        auto& part = mauled.parts.at(oracle.scheme().message_index());
        part = mulmod(part, params.g1, params.p);
        const auto response = oracle.decrypt(mauled);
        if (response.plaintext) {
            const BigInt g1_inv = mod_exp(params.g1, params.p - 2, params.p);
            const GroupElement m{mulmod(response.plaintext->value, g1_inv, params.p)};
            if (m == m_.first) return 0;
            if (m == m_.second) return 1;
        }
        return rng.coin() ? 1 : 0;
    }

private:
    std::pair<GroupElement, GroupElement> m_;
};

// Builds per-class timing samples from timed encryptions of m0 = 0^k and
// m1 = 1^k, then assigns t_ft to the class with the nearer mean. k = 7 is the
// longest message whose encoding stays within the fixture's 64-bit leak cap.
class TimingDictionaryAdversary : public Adversary {
public:
    static constexpr std::size_t kMessageBytes = 7;

    std::string name() const override { return "timedict"; }

    void phase1(Oracle& oracle, Rng&) override {
        const auto [m0, m1] = messages(oracle.params());
        while (oracle.queries_left() >= 2) {
            for (int cls = 0; cls < 2; ++cls) {
                auto timed = oracle.encrypt(cls == 0 ? m0 : m1);
                if (!timed) return;
                dictionary_[cls].push_back(static_cast<double>(timed->elapsed.count()));
            }
        }
    }

    std::pair<GroupElement, GroupElement> choose(Oracle& oracle, Rng&) override { return messages(oracle.params()); }

    int guess(const Challenge& challenge, Oracle&, Rng& rng) override {
        if (dictionary_[0].empty() || dictionary_[1].empty()) return rng.coin() ? 1 : 0;
        const double t = static_cast<double>(challenge.elapsed.count());
        const double d0 = std::abs(t - mean(dictionary_[0]));
        const double d1 = std::abs(t - mean(dictionary_[1]));
        if (d0 == d1) return rng.coin() ? 1 : 0;
        return d0 < d1 ? 0 : 1;
    }

private:
    static std::pair<GroupElement, GroupElement> messages(const GroupParams& params) {
        const std::size_t k = std::min(kMessageBytes, cs::max_message_bytes(params));
        const Bytes zeros(k, 0x00);
        const Bytes ones(k, 0xff);
        return {cs::encode_message(zeros, params), cs::encode_message(ones, params)};
    }

    static double mean(const std::vector<double>& xs) {
        double sum = 0;
        for (double x : xs) sum += x;
        return sum / static_cast<double>(xs.size());
    }

    std::vector<double> dictionary_[2];
};

// ------------------------------------------------------------------ oracle

class TrialOracle : public Oracle {
public:
    TrialOracle(GameScheme& scheme, const GameConfig& config, const ScTaConfig* timing,
                const fixed_time::TimeBudget* enc_budget, const fixed_time::TimeBudget* dec_budget, Rng& scheme_rng,
                Rng& channel_rng, Transcript* transcript, std::size_t trial)
        : scheme_(scheme), config_(config), timing_(timing), enc_budget_(enc_budget), dec_budget_(dec_budget),
          scheme_rng_(scheme_rng), channel_rng_(channel_rng), transcript_(transcript), trial_(trial) {}

    const GroupParams& params() const override { return scheme_.params(); }
    const GameScheme& scheme() const override { return scheme_; }
    int phase() const override { return phase_; }
    std::size_t queries_left() const override { return used_ >= config_.query_budget ? 0 : config_.query_budget - used_; }
    bool timed() const override { return timing_ != nullptr; }

    std::optional<TimedCiphertext> encrypt(const GroupElement& m) override {
        if (queries_left() == 0) {
            log("encrypt", false, true, false, Nanos(0));
            return std::nullopt;
        }
        ++used_;
        auto [ct, t] = timed_call(false, [&] { return scheme_.encrypt(m, scheme_rng_); });
        log("encrypt", false, false, true, t);
        return TimedCiphertext{std::move(ct), t};
    }

    OracleResponse decrypt(const GameCiphertext& c) override {
        const bool is_challenge = challenge_ && c == *challenge_;
        if ((phase_ == 2 && is_challenge) || queries_left() == 0) {
            log("decrypt", is_challenge, true, false, Nanos(0));
            return OracleResponse{std::nullopt, true, Nanos(0)};
        }
        ++used_;
        auto [m, t] = timed_call(true, [&] { return scheme_.decrypt(c); });
        if (m) returned_.push_back(*m);
        log("decrypt", is_challenge, false, true, t);
        return OracleResponse{std::move(m), false, t};
    }

    bool was_returned(const GroupElement& m) const {
        return std::find(returned_.begin(), returned_.end(), m) != returned_.end();
    }

    Challenge make_challenge(const GroupElement& m) {
        auto [ct, t] = timed_call(false, [&] { return scheme_.encrypt(m, scheme_rng_); });
        challenge_ = ct;
        log("challenge", true, false, true, t);
        phase_ = 2;
        used_ = 0;
        return Challenge{std::move(ct), t};
    }

private:
    template <typename F>
    auto timed_call(bool decrypting, F&& f) -> std::pair<std::invoke_result_t<F>, Nanos> {
        if (!timing_) return {f(), Nanos(0)};
        const Nanos delay = timing_->delay.sample(channel_rng_);
        if (timing_->mode == TimingMode::Fixed) {
            auto r = fixed_time::run_fixed(decrypting ? *dec_budget_ : *enc_budget_, std::forward<F>(f));
            return {std::move(r.output), r.observed + delay};
        }
        auto r = fixed_time::observe(std::forward<F>(f));
        return {std::move(r.output), r.sample.elapsed + delay};
    }

    void log(const char* kind, bool is_challenge, bool refused, bool answered, Nanos t) {
        if (!transcript_) return;
        transcript_->push_back(TranscriptEntry{trial_, phase_, kind, is_challenge, refused, answered, t.count()});
    }

    GameScheme& scheme_;
    const GameConfig& config_;
    const ScTaConfig* timing_;
    const fixed_time::TimeBudget* enc_budget_;
    const fixed_time::TimeBudget* dec_budget_;
    Rng& scheme_rng_;
    Rng& channel_rng_;
    Transcript* transcript_;
    std::size_t trial_;
    int phase_ = 1;
    std::size_t used_ = 0;
    std::optional<GameCiphertext> challenge_;
    std::vector<GroupElement> returned_;
};

GameResult run_game(const char* game, GameScheme& scheme, const AdversaryFactory& factory, const ScTaConfig* timing,
                    const GameConfig& config) {
    config.validate();
    std::optional<fixed_time::TimeBudget> enc_budget, dec_budget;
    if (timing && timing->mode == TimingMode::Fixed) {
        if (!timing->budgets) throw CalibrationError("fixed mode needs calibrated budgets; run `tftps calibrate` first");
        enc_budget = timing->budgets->require(scheme_op_class(scheme, false));
        dec_budget = timing->budgets->require(scheme_op_class(scheme, true));
    }

    Rng master = Rng::from_seed(config.seed);
    Rng challenger_rng = master.fork();
    Rng scheme_rng = master.fork();
    Rng adversary_rng = master.fork();
    Rng channel_rng = master.fork();

    GameResult result;
    result.game = game;
    result.scheme = scheme.name();
    result.mode = mode_name(timing ? timing->mode : TimingMode::Untimed);
    result.seed = config.seed;
    result.trials = config.n_trials;
    result.threshold = config.threshold();

    for (std::size_t trial = 0; trial < config.n_trials; ++trial) {
        scheme.keygen(challenger_rng);
        auto adversary = factory();
        if (trial == 0) result.adversary = adversary->name();
        TrialOracle oracle(scheme, config, timing, enc_budget ? &*enc_budget : nullptr,
                           dec_budget ? &*dec_budget : nullptr, scheme_rng, channel_rng,
                           config.keep_transcript ? &result.transcript : nullptr, trial);

        adversary->phase1(oracle, adversary_rng);
        const auto [m0, m1] = adversary->choose(oracle, adversary_rng);
        const int b = challenger_rng.coin() ? 1 : 0;
        result.b_ones += static_cast<std::size_t>(b);

        const GroupParams& params = scheme.params();
        const bool forfeit = !is_subgroup_member(params, m0.value) || !is_subgroup_member(params, m1.value) ||
                             message_length(m0, params) != message_length(m1, params) || oracle.was_returned(m0) ||
                             oracle.was_returned(m1);
        if (forfeit) {
            ++result.forfeits;
            continue;
        }
        const Challenge challenge = oracle.make_challenge(b == 0 ? m0 : m1);
        if (adversary->guess(challenge, oracle, adversary_rng) == b) ++result.correct;
    }

    const std::size_t scored = result.trials - result.forfeits;
    if (scored >= 30) {
        const auto est = estimate_advantage(result.correct, scored);
        result.advantage = est.advantage;
        result.ci99 = est.ci99;
    } else {
        result.advantage = 0.0;
        result.ci99 = 1.0;
    }
    return result;
}

}  // namespace

std::unique_ptr<GameScheme> make_scheme(const std::string& name, const GroupParams& params) {
    if (name == "cs") return std::make_unique<CsScheme>(params);
    if (name == "elgamal") return std::make_unique<ElGamalScheme>(params);
    throw ParameterError("unknown scheme '" + name + "' (expected cs or elgamal)");
}

std::unique_ptr<GameScheme> leaky_fixture(std::unique_ptr<GameScheme> inner, Nanos per_bit, std::size_t max_bits) {
    if (!inner) throw ParameterError("leaky_fixture: no scheme");
    return std::make_unique<LeakyScheme>(std::move(inner), per_bit, max_bits);
}

std::size_t message_length(const GroupElement& m, const GroupParams& params) {
    if (m.value < 1 || m.value >= params.p) return 0;
    return to_bytes_be(cs::decode_integer(m, params)).size();
}

const char* mode_name(TimingMode mode) {
    switch (mode) {
        case TimingMode::Untimed: return "none";
        case TimingMode::Leaky: return "leaky";
        case TimingMode::Fixed: return "fixed";
    }
    return "?";
}

AdversaryFactory make_adversary(const std::string& name) {
    if (name == "random") return [] { return std::make_unique<RandomAdversary>(); };
    if (name == "malleate") return [] { return std::make_unique<MalleateAdversary>(); };
    if (name == "timedict") return [] { return std::make_unique<TimingDictionaryAdversary>(); };
    throw ParameterError("unknown adversary '" + name + "' (expected random, malleate or timedict)");
}

double GameConfig::threshold() const {
    if (negligibility_threshold) return *negligibility_threshold;
    return 3.0 / std::sqrt(static_cast<double>(n_trials));
}

void GameConfig::validate() const {
    if (n_trials < 30) throw ParameterError("games need at least 30 trials");
}

AdvantageEstimate estimate_advantage(std::size_t correct, std::size_t trials) {
    if (trials < 30) throw ParameterError("advantage estimate needs at least 30 trials");
    if (correct > trials) throw ParameterError("correct exceeds trials");
    constexpr double z99 = 2.5758293035489004;
    const double p = static_cast<double>(correct) / static_cast<double>(trials);
    return {std::abs(2.0 * p - 1.0), z99 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials))};
}

std::string GameResult::to_json() const {
    nlohmann::ordered_json j;
    j["game"] = game;
    j["scheme"] = scheme;
    j["adversary"] = adversary;
    j["trials"] = trials;
    j["correct"] = correct;
    j["forfeits"] = forfeits;
    j["advantage"] = advantage;
    j["ci99"] = ci99;
    j["threshold"] = threshold;
    j["mode"] = mode;
    j["seed"] = seed;
    return j.dump();
}

std::size_t oracle_hygiene_violations(const Transcript& transcript) {
    std::size_t bad = 0;
    for (const auto& e : transcript) {
        if (e.phase == 2 && e.kind == "decrypt" && e.is_challenge && e.answered) ++bad;
    }
    return bad;
}

std::string transcript_to_json_lines(const Transcript& transcript) {
    std::string out;
    for (const auto& e : transcript) {
        nlohmann::ordered_json j;
        j["trial"] = e.trial;
        j["phase"] = e.phase;
        j["kind"] = e.kind;
        j["challenge"] = e.is_challenge;
        j["refused"] = e.refused;
        j["answered"] = e.answered;
        j["elapsed_ns"] = e.elapsed_ns;
        out += j.dump();
        out += '\n';
    }
    return out;
}

GameResult run_ind_cca2(GameScheme& scheme, const AdversaryFactory& adversary, const GameConfig& config) {
    return run_game("cca2", scheme, adversary, nullptr, config);
}

GameResult run_ind_cca2_scta(GameScheme& scheme, const AdversaryFactory& adversary, const ScTaConfig& timing,
                             const GameConfig& config) {
    if (timing.mode == TimingMode::Untimed) throw ParameterError("scta game needs leaky or fixed timing");
    return run_game("scta", scheme, adversary, &timing, config);
}

fixed_time::OpClass scheme_op_class(const GameScheme& scheme, bool decrypt) {
    return {scheme.name() + (decrypt ? ".decrypt" : ".encrypt"), scheme.params().element_bytes()};
}

std::vector<fixed_time::TimeBudget> calibrate_scheme(GameScheme& scheme, std::size_t n_samples, double safety_factor,
                                                     Rng& rng) {
    const GroupParams& params = scheme.params();
    scheme.keygen(rng);
    const std::size_t worst_bytes = std::min<std::size_t>(cs::max_message_bytes(params), 64);
    std::vector<GroupElement> messages;
    for (std::size_t i = 0; i < n_samples; ++i) {
        if (i % 2 == 0 && worst_bytes > 0) messages.push_back(cs::encode_message(Bytes(worst_bytes, 0xff), params));
        else messages.push_back(GroupElement{random_subgroup_element(params, rng)});
    }
    std::vector<GameCiphertext> cts;
    for (const auto& m : messages) cts.push_back(scheme.encrypt(m, rng));

    std::vector<fixed_time::TimeBudget> out;
    out.push_back(fixed_time::calibrate(
        scheme_op_class(scheme, false), [&](std::size_t i) { scheme.encrypt(messages[i], rng); }, n_samples,
        safety_factor));
    out.push_back(fixed_time::calibrate(
        scheme_op_class(scheme, true), [&](std::size_t i) { scheme.decrypt(cts[i]); }, n_samples, safety_factor));
    return out;
}

}  // namespace tftps::games
