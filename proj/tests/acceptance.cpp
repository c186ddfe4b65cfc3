// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>

#include "arq_enumeration.hpp"
#include "tftps/cramer_shoup.hpp"
#include "tftps/cs_timing.hpp"
#include "tftps/errors.hpp"
#include "tftps/games.hpp"
#include "tftps/record_crypto.hpp"
#include "tftps/tftp_endpoints.hpp"

using namespace tftps;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int n, bool ok, const std::string& what, const std::string& detail, Clock::time_point start) {
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("criterion %2d: %s  %s  [%s; %.1fs]\n", n, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

const GroupParams& params_of(std::size_t bits) {
    static std::map<std::size_t, GroupParams> cache;
    auto it = cache.find(bits);
    if (it == cache.end()) {
        auto rng = Rng::from_seed(bits);
        it = cache.emplace(bits, gen_group_params(bits, rng)).first;
    }
    return it->second;
}

void roundtrip() {
    const auto start = Clock::now();
    auto rng = Rng::from_seed(101);
    std::size_t ok = 0, total = 0;
    for (std::size_t bits : {std::size_t{8}, std::size_t{2048}}) {
        const auto& params = params_of(bits);
        const int n = bits == 8 ? 1000 : 200;
        const auto keys = cs::keygen(params, rng);
        for (int i = 0; i < n; ++i) {
            const GroupElement m{random_subgroup_element(params, rng)};
            const Scalar r = random_scalar(params, rng);
            ok += cs::decrypt(keys.sk, params, cs::encrypt(keys.pk, m, r)) == m;
            ++total;
        }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    report(1, ok == total && secs < 120, "Cramer-Shoup roundtrip (1000 desk + 200 at 2048-bit)",
           fmt("%.0f/%.0f exact, limit 120s", static_cast<double>(ok), static_cast<double>(total)), start);
}

void tamper() {
    const auto start = Clock::now();
    auto rng = Rng::from_seed(102);
    const auto& params = params_of(2048);
    const auto keys = cs::keygen(params, rng);
    int rejected = 0;
    for (int i = 0; i < 500; ++i) {
        auto ct = cs::encrypt(keys.pk, GroupElement{random_subgroup_element(params, rng)}, rng);
        GroupElement* parts[] = {&ct.u1, &ct.u2, &ct.e, &ct.v};
        GroupElement& target = *parts[rng.below(4)];
        BigInt other;
        do {
            other = random_subgroup_element(params, rng);
        } while (other == target.value);
        target.value = other;
        rejected += !cs::decrypt(keys.sk, params, ct).has_value();
    }
    report(2, rejected == 500, "tamper rejection, one component replaced",
           fmt("%.0f/500 rejected, tolerance 0", rejected), start);
}

void table_one() {
    const auto start = Clock::now();
    std::vector<long> row;
    for (int x = 1; x <= 6; ++x) row.push_back(mod_exp(3, x, 7).get_si());
    const bool ok = is_primitive_root(3, 7) && !is_primitive_root(4, 7) && row == std::vector<long>{3, 2, 6, 4, 5, 1};
    std::string shown;
    for (long v : row) shown += std::to_string(v) + " ";
    report(3, ok, "orders mod 7: 3 primitive, 4 not, powers of 3",
           "row " + shown + "expected 3 2 6 4 5 1", start);
}

games::GameConfig game_config(std::size_t n, std::uint64_t seed) {
    games::GameConfig c;
    c.n_trials = n;
    c.seed = seed;
    c.keep_transcript = true;
    return c;
}

void cca2_separation() {
    const auto start = Clock::now();
    const auto& params = params_of(1024);
    auto eg = games::make_scheme("elgamal", params);
    auto cs = games::make_scheme("cs", params);
    const auto a = games::run_ind_cca2(*eg, games::make_adversary("malleate"), game_config(200, 4));
    const auto b = games::run_ind_cca2(*cs, games::make_adversary("malleate"), game_config(200, 4));
    const bool hygiene =
        games::oracle_hygiene_violations(a.transcript) == 0 && games::oracle_hygiene_violations(b.transcript) == 0;
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    report(4, a.advantage >= 0.99 && b.advantage <= 0.10 && hygiene && secs < 300,
           "CCA2 separation, malleability adversary, 200 trials, 1024-bit",
           fmt("ElGamal %.3f (>= 0.99), Cramer-Shoup %.3f (<= 0.10), hygiene ", a.advantage, b.advantage) +
               (hygiene ? "clean" : "VIOLATED"),
           start);
}

void random_baseline() {
    const auto start = Clock::now();
    const auto& params = params_of(1024);
    auto cs = games::make_scheme("cs", params);
    auto cfg = game_config(1000, 5);
    cfg.keep_transcript = false;
    const auto plain = games::run_ind_cca2(*cs, games::make_adversary("random"), cfg);
    auto leaky = games::leaky_fixture(games::make_scheme("cs", params));
    games::ScTaConfig timing;
    timing.mode = games::TimingMode::Leaky;
    const auto timed = games::run_ind_cca2_scta(*leaky, games::make_adversary("random"), timing, cfg);
    const double bound = 3.0 / std::sqrt(1000.0);
    report(5, plain.advantage <= bound && timed.advantage <= bound, "random-guess baseline, 1000 trials, both games",
           fmt("IND-CCA2 %.3f, SC-TA %.3f, bound %.3f", plain.advantage, timed.advantage, bound), start);
}

void timing_separation() {
    const auto start = Clock::now();
    const auto& params = params_of(1024);
    auto leaky = games::leaky_fixture(games::make_scheme("cs", params));
    auto rng = Rng::from_seed(106);
    auto budgets = std::make_shared<fixed_time::BudgetTable>();
    for (const auto& b : games::calibrate_scheme(*leaky, 30, 1.5, rng)) budgets->put(b);

    auto cfg = game_config(400, 6);
    cfg.keep_transcript = false;
    games::ScTaConfig t;
    t.mode = games::TimingMode::Leaky;
    const auto l = games::run_ind_cca2_scta(*leaky, games::make_adversary("timedict"), t, cfg);
    t.mode = games::TimingMode::Fixed;
    t.budgets = budgets;
    const auto before = fixed_time::overrun_count();
    const auto f = games::run_ind_cca2_scta(*leaky, games::make_adversary("timedict"), t, cfg);
    const auto overruns = fixed_time::overrun_count() - before;
    report(6, l.advantage >= 0.8 && f.advantage <= 0.15, "timing-dictionary separation, 400 trials each",
           fmt("LEAKY %.3f (>= 0.8), FIXED %.3f (<= 0.15), fixed-mode overruns %.0f", l.advantage, f.advantage,
               static_cast<double>(overruns)),
           start);
}

void fixed_time_property() {
    const auto start = Clock::now();
    auto rng = Rng::from_seed(107);
    const auto& params = params_of(1024);
    const auto keys = cs::keygen(params, rng);
    const auto budget = cs_timing::calibrate_decrypt(params, 30, 1.5, rng);
    const auto accept = cs::encrypt(keys.pk, cs::encode_message(Bytes(64, 0x00), params), rng);
    auto reject = cs::encrypt(keys.pk, cs::encode_message(Bytes(64, 0xFF), params), rng);
    reject.v.value = reject.v.value * params.g1 % params.p;
    const cs::Ciphertext* inputs[] = {&accept, &reject};

    double sum[2] = {0, 0};
    std::size_t overruns = 0, runs = 0;
    for (int i = 0; i < 1000; ++i) {
        const int which = i % 2;
        const auto r = fixed_time::run_fixed(budget, [&] { return cs::decrypt(keys.sk, params, *inputs[which]); });
        overruns += r.overrun;
        ++runs;
        if (i < 400) sum[which] += static_cast<double>(r.observed.count());
    }
    const double diff = std::abs(sum[0] - sum[1]) / 200.0;
    const double pct = 100.0 * diff / static_cast<double>(budget.budget.count());
    const double overrun_pct = 100.0 * static_cast<double>(overruns) / static_cast<double>(runs);
    report(7, pct < 5.0 && overrun_pct < 1.0, "fixed-time padding, accept vs reject decryption, 200 runs each",
           fmt("mean gap %.3f%% of budget (< 5%%), overruns %.2f%% of 1000 (< 1%%), budget %.2fms", pct, overrun_pct,
               static_cast<double>(budget.budget.count()) / 1e6),
           start);
}

void arq_exactly_once() {
    const auto start = Clock::now();
    int cases = 0, divergences = 0;
    std::string first;
    for (unsigned bits : {1u, 16u}) {
        const auto s = arq_enum::run_all(4, 2, bits, true);
        cases += s.cases;
        divergences += s.divergences;
        if (first.empty()) first = s.first_divergence;
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    report(8, divergences == 0 && secs < 60, "ARQ exactly-once vs reference model, <= 2 adverse events, <= 4 frames",
           fmt("%.0f patterns, %.0f divergences", cases, divergences) + (first.empty() ? "" : " first: " + first),
           start);
}

// True if some 64-octet window of `plain` occurs in `wire`.
bool leaks_window(const Bytes& plain, const Bytes& wire) {
    constexpr std::size_t kWindow = 64, kBlock = 32;
    std::unordered_map<std::string_view, std::size_t> blocks;
    const auto* p = reinterpret_cast<const char*>(plain.data());
    for (std::size_t o = 0; o + kBlock <= plain.size(); o += kBlock) blocks.emplace(std::string_view(p + o, kBlock), o);
    const auto* w = reinterpret_cast<const char*>(wire.data());
    for (std::size_t i = 0; i + kBlock <= wire.size(); ++i) {
        auto it = blocks.find(std::string_view(w + i, kBlock));
        if (it == blocks.end()) continue;
        // Every 64-octet window contains an aligned 32-octet block; try each alignment.
        for (std::size_t k = 0; k <= kWindow - kBlock; ++k) {
            if (k > it->second || k > i) break;
            const std::size_t ps = it->second - k, ws = i - k;
            if (ps + kWindow <= plain.size() && ws + kWindow <= wire.size() &&
                std::equal(plain.begin() + ps, plain.begin() + ps + kWindow, wire.begin() + ws))
                return true;
        }
    }
    return false;
}

bool contains(const Bytes& hay, ByteView needle) {
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

void end_to_end() {
    const auto start = Clock::now();
    auto rng = Rng::from_seed(109);
    const auto& params = params_of(2048);
    const auto server_keys = cs::keygen(params, rng);
    const Bytes file = rng.bytes(2800 * 1024);

    net::ChannelModel model;
    model.loss_rate = 0.01;
    model.corrupt_rate = 0.001;
    model.integrity_check = true;
    model.delay = net::DelayModel::uniform(std::chrono::milliseconds(1), std::chrono::milliseconds(5));
    model.seed = 9;
    net::SimNetwork sim(model, {}, tftp::tftp_describer());
    Bytes wire;
    sim.set_tap([&](const net::Endpoint&, const net::Endpoint&, ByteView d) { append(wire, d); });

    tftp::KeyStore store;
    store.add_keypair(server_keys);
    tftp::MemoryFileStore files;
    tftp::SessionConfig cfg;
    cfg.timeout = std::chrono::milliseconds(200);
    cfg.max_retries = 8;
    cfg.budgets = std::make_shared<fixed_time::BudgetTable>();
    tftp::SimServerAgent server("server", 69, store, files, cfg, Rng::from_seed(110));

    tftp::ClientRequest req;
    req.write = true;
    req.remote_name = "wheezy-raspbian.img";
    req.data = file;
    req.secure = true;
    req.recipient_pk = server_keys.pk;
    tftp::SimClientAgent client(tftp::TransferSession::client(req, {"server", 69}, cfg, Rng::from_seed(111)), "client");
    net::run_agents(sim, {&server, &client});

    const auto& rep = client.session().report();
    const auto stored = files.read("wheezy-raspbian.img");
    const bool exact = client.session().succeeded() && stored && *stored == file;
    bool key_hidden = false;
    if (const auto& k = client.session().session_keys()) key_hidden = !contains(wire, k->enc_key) && !contains(wire, k->mac_key);
    const bool no_window = !leaks_window(file, wire);
    const double virtual_secs = std::chrono::duration<double>(sim.now()).count();
    report(9, exact && no_window && key_hidden, "2.8 MB secure put at 1% loss, 0.1% corruption",
           std::string(exact ? "bit-exact" : "MISMATCH") + (no_window ? ", no plaintext window" : ", PLAINTEXT LEAK") +
               (key_hidden ? ", no key material" : ", KEY LEAK") +
               fmt(", %.0f retransmissions, %.0f lost, %.0f corrupted, virtual ETC %.1fs",
                   static_cast<double>(rep.retransmissions), static_cast<double>(sim.stats().lost),
                   static_cast<double>(sim.stats().corrupted), virtual_secs),
           start);
}

void codec() {
    const auto start = Clock::now();
    using namespace tftp;
    const Bytes rrq{0x00, 0x01, 0x6B, 0x65, 0x72, 0x6E, 0x65, 0x6C, 0x2E, 0x69,
                    0x6D, 0x67, 0x00, 0x6F, 0x63, 0x74, 0x65, 0x74, 0x00};
    const Bytes ack{0x00, 0x04, 0x00, 0x01};
    const Bytes err{0x00, 0x05, 0x00, 0x09, 'M', 'A', 'C', 0x00};
    const Bytes data{0x00, 0x03, 0x01, 0x02, 0xDE, 0xAD};
    const Bytes oack{0x00, 0x06, 's', 'e', 'c', 0x00, 'c', 's', '1', 0x00};
    bool ok = encode_packet(Request{Opcode::Rrq, "kernel.img", "octet", {}}) == rrq &&
              encode_packet(Ack{1}) == ack && encode_packet(ErrorPacket{9, "MAC"}) == err &&
              encode_packet(Data{0x0102, {0xDE, 0xAD}}) == data && encode_packet(Oack{{{"sec", "cs1"}}}) == oack;
    for (const auto* f : {&rrq, &ack, &err, &data, &oack}) ok = ok && encode_packet(decode_packet(*f)) == *f;

    auto rng = Rng::from_seed(110);
    std::size_t crashes = 0;
    for (int i = 0; i < 100000; ++i) {
        Bytes b = rng.bytes(rng.below(80));
        if (b.size() > 1 && rng.coin()) {
            b[0] = 0;
            b[1] = static_cast<std::uint8_t>(rng.below(8));
        }
        try {
            decode_packet(b);
        } catch (const MalformedPacket&) {
        } catch (...) {
            ++crashes;
        }
    }
    report(10, ok && crashes == 0, "codec fixtures and 10^5 fuzz inputs",
           std::string(ok ? "fixtures byte-exact" : "FIXTURE MISMATCH") +
               fmt(", %.0f unexpected exceptions", static_cast<double>(crashes)),
           start);
}

void mac_exhaustive() {
    const auto start = Clock::now();
    auto rng = Rng::from_seed(111);
    const auto keys = record::derive_session_keys(record::SessionKeyMaterial::generate(rng));
    const auto rec = record::seal_block(keys, 42, rng.bytes(tftp::kSecurePlaintextPerBlock), rng);
    const Bytes wire = record::serialize_record(rec);
    std::size_t failures_seen = 0;
    for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
        Bytes f = wire;
        f[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        failures_seen += !record::open_block(keys, 42, record::parse_record(f)).has_value();
    }
    const bool honest = record::open_block(keys, 42, rec).has_value();
    report(11, honest && failures_seen == wire.size() * 8, "MAC over every single-bit flip of a full record",
           fmt("%.0f/%.0f flips rejected", static_cast<double>(failures_seen), static_cast<double>(wire.size() * 8)),
           start);
}

}  // namespace

int main() {
    const std::vector<std::function<void()>> criteria{roundtrip,        tamper,          table_one,    cca2_separation,
                                                      random_baseline,  timing_separation, fixed_time_property,
                                                      arq_exactly_once, end_to_end,      codec,        mac_exhaustive};
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        try {
            criteria[i]();
        } catch (const std::exception& e) {
            std::printf("criterion %2zu: FAIL  exception: %s\n", i + 1, e.what());
            ++failures;
        }
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
