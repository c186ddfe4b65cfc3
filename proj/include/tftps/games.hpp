#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tftps/fixed_time.hpp"
#include "tftps/group_math.hpp"
#include "tftps/transport.hpp"

namespace tftps::games {

using Nanos = std::chrono::nanoseconds;

/// Scheme-neutral ciphertext: the group components in the scheme's order.
struct GameCiphertext {
    std::vector<BigInt> parts;
    friend bool operator==(const GameCiphertext&, const GameCiphertext&) = default;
};

/// Encryption scheme under test. Holds the key pair of the current trial.
class GameScheme {
public:
    virtual ~GameScheme() = default;
    virtual std::string name() const = 0;
    virtual const GroupParams& params() const = 0;
    virtual void keygen(Rng& rng) = 0;
    virtual GameCiphertext encrypt(const GroupElement& m, Rng& rng) const = 0;
    /// std::nullopt is REJECT, including for structurally invalid input.
    virtual std::optional<GroupElement> decrypt(const GameCiphertext& c) const = 0;
    /// Index of the component that carries the message factor.
    virtual std::size_t message_index() const = 0;
};

/// "cs" (Cramer-Shoup) or "elgamal" (textbook ElGamal, the vulnerable control).
std::unique_ptr<GameScheme> make_scheme(const std::string& name, const GroupParams& params);

/// Wraps a scheme so that encrypt and decrypt spin `per_bit` for every set
/// bit of the message's integer encoding, up to `max_bits` bits. Outputs are
/// unchanged.
std::unique_ptr<GameScheme> leaky_fixture(std::unique_ptr<GameScheme> inner, Nanos per_bit = std::chrono::microseconds(50),
                                          std::size_t max_bits = 64);

/// Byte length of the integer a message element encodes; the equal-length rule compares these.
std::size_t message_length(const GroupElement& m, const GroupParams& params);

enum class TimingMode { Untimed, Leaky, Fixed };
const char* mode_name(TimingMode mode);

struct OracleResponse {
    std::optional<GroupElement> plaintext;
    bool refused = false;
    /// Zero in the untimed game.
    Nanos elapsed{0};
};

struct TimedCiphertext {
    GameCiphertext ciphertext;
    Nanos elapsed{0};
};

struct TranscriptEntry {
    std::size_t trial = 0;
    int phase = 1;
    std::string kind;
    bool is_challenge = false;
    bool refused = false;
    bool answered = false;
    std::int64_t elapsed_ns = 0;
};

using Transcript = std::vector<TranscriptEntry>;

/**
 * What the adversary may touch during a trial: the public parameters, timed
 * encryptions under the trial's public key, and the decryption oracle.
 * Every timed call counts against the per-phase query budget; calls past
 * the budget are refused.
 */
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual const GroupParams& params() const = 0;
    virtual const GameScheme& scheme() const = 0;
    virtual int phase() const = 0;
    virtual std::size_t queries_left() const = 0;
    virtual bool timed() const = 0;
    /// std::nullopt once the budget is spent.
    virtual std::optional<TimedCiphertext> encrypt(const GroupElement& m) = 0;
    virtual OracleResponse decrypt(const GameCiphertext& c) = 0;
};

struct Challenge {
    GameCiphertext ciphertext;
    /// t_ft: observed time of the challenge encryption.
    Nanos elapsed{0};
};

class Adversary {
public:
    virtual ~Adversary() = default;
    virtual std::string name() const = 0;
    virtual void phase1(Oracle& oracle, Rng& rng) = 0;
    virtual std::pair<GroupElement, GroupElement> choose(Oracle& oracle, Rng& rng) = 0;
    virtual int guess(const Challenge& challenge, Oracle& oracle, Rng& rng) = 0;
};

using AdversaryFactory = std::function<std::unique_ptr<Adversary>()>;

/// "random", "malleate" or "timedict"; throws ParameterError otherwise.
AdversaryFactory make_adversary(const std::string& name);

struct GameConfig {
    std::size_t n_trials = 1000;
    std::uint64_t seed = 1;
    /// Timed oracle calls allowed per phase.
    std::size_t query_budget = 8;
    std::optional<double> negligibility_threshold;
    bool keep_transcript = true;

    /// 3 / sqrt(n_trials) unless overridden.
    double threshold() const;
    /// Throws ParameterError for fewer than 30 trials.
    void validate() const;
};

struct ScTaConfig {
    TimingMode mode = TimingMode::Leaky;
    /// Transmission delay added to every observed time, independent of b.
    net::DelayModel delay = net::DelayModel::uniform(Nanos(0), std::chrono::microseconds(200));
    /// Required in Fixed mode: budgets from calibrate_scheme().
    std::shared_ptr<const fixed_time::BudgetTable> budgets;
};

struct AdvantageEstimate {
    double advantage = 0.0;
    /// Half-width of the 99% normal-approximation interval for correct/trials.
    double ci99 = 0.0;
};

/// Throws ParameterError when trials < 30 or correct > trials.
AdvantageEstimate estimate_advantage(std::size_t correct, std::size_t trials);

struct GameResult {
    std::string game;
    std::string scheme;
    std::string adversary;
    std::string mode;
    std::uint64_t seed = 0;
    std::size_t trials = 0;
    std::size_t correct = 0;
    std::size_t forfeits = 0;
    std::size_t b_ones = 0;
    double advantage = 0.0;
    double ci99 = 0.0;
    double threshold = 0.0;
    Transcript transcript;

    /// {game, scheme, adversary, trials, correct, advantage, ci99, mode, seed, ...}
    std::string to_json() const;
};

/// Phase-2 answers to the challenge ciphertext found in the transcript (must be zero).
std::size_t oracle_hygiene_violations(const Transcript& transcript);
std::string transcript_to_json_lines(const Transcript& transcript);

GameResult run_ind_cca2(GameScheme& scheme, const AdversaryFactory& adversary, const GameConfig& config);

/// The same game with every oracle answer and the challenge timed. Fixed
/// mode pads each scheme call to its calibrated budget; both modes add the
/// sampled channel delay. Runs on the calling thread only.
GameResult run_ind_cca2_scta(GameScheme& scheme, const AdversaryFactory& adversary, const ScTaConfig& timing,
                             const GameConfig& config);

/// Op classes "<scheme>.encrypt" / "<scheme>.decrypt" keyed by element width.
fixed_time::OpClass scheme_op_class(const GameScheme& scheme, bool decrypt);

/// Calibrates both op classes of `scheme` over worst-case and random
/// messages. Calls scheme.keygen().
std::vector<fixed_time::TimeBudget> calibrate_scheme(GameScheme& scheme, std::size_t n_samples, double safety_factor,
                                                     Rng& rng);

}  // namespace tftps::games
