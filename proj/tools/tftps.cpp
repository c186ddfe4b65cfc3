#include <sys/stat.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tftps/cs_timing.hpp"
#include "tftps/errors.hpp"
#include "tftps/games.hpp"
#include "tftps/tftp_endpoints.hpp"

using namespace tftps;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kProtocol = 3, kSecurity = 4, kAssertion = 5 };

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

Bytes read_file(const std::string& path) {
    const std::string s = read_text(path);
    return Bytes(s.begin(), s.end());
}

void write_file(const std::string& path, ByteView data, bool secret = false) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path);
    out.close();
    if (secret) ::chmod(path.c_str(), 0600);
}

void write_text(const std::string& path, const std::string& text, bool secret = false) {
    write_file(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), secret);
}

cs::KeyFile load_key_file(const std::string& path) { return cs::parse_key_file(read_text(path)); }

net::Endpoint parse_server(const std::string& spec) {
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos) return {spec, 69};
    const int port = std::stoi(spec.substr(colon + 1));
    if (port <= 0 || port > 65535) throw ParameterError("bad port in " + spec);
    return {spec.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::shared_ptr<fixed_time::BudgetTable> load_budgets(const std::string& path) {
    if (std::filesystem::exists(path)) return std::make_shared<fixed_time::BudgetTable>(fixed_time::BudgetTable::load(path));
    return std::make_shared<fixed_time::BudgetTable>();
}

GroupParams game_params(std::size_t bits, std::uint64_t seed) {
    auto rng = Rng::from_seed(seed ? seed : bits);
    return gen_group_params(bits, rng);
}

ordered_json report_json(const tftp::SessionReport& r) {
    ordered_json j;
    j["role"] = tftp::role_name(r.role);
    j["peer"] = r.peer;
    j["file"] = r.filename;
    j["secure"] = r.secure;
    j["outcome"] = tftp::phase_name(r.outcome);
    j["bytes"] = r.bytes;
    j["blocks"] = r.blocks;
    j["retransmissions"] = r.retransmissions;
    j["mac_verifications"] = r.mac_verifications;
    j["records_accepted"] = r.records_accepted;
    j["elapsed_ms"] = std::chrono::duration<double, std::milli>(r.elapsed).count();
    j["key_exchange_ms"] = std::chrono::duration<double, std::milli>(r.key_exchange_elapsed).count();
    if (r.outcome == tftp::Phase::Failed) {
        j["error_code"] = r.error_code;
        j["error"] = r.error_message;
        j["error_from_peer"] = r.error_from_peer;
    }
    return j;
}

std::string report_line(const tftp::SessionReport& r) {
    std::ostringstream out;
    out << "session peer=" << r.peer << " file=" << r.filename << " role=" << tftp::role_name(r.role)
        << " secure=" << (r.secure ? "on" : "off") << " outcome=" << tftp::phase_name(r.outcome) << " bytes=" << r.bytes
        << " blocks=" << r.blocks << " retransmissions=" << r.retransmissions;
    if (r.secure) out << " key_exchange_ms=" << std::chrono::duration<double, std::milli>(r.key_exchange_elapsed).count();
    out << " elapsed_ms=" << std::chrono::duration<double, std::milli>(r.elapsed).count();
    if (r.outcome == tftp::Phase::Failed)
        out << " error=" << r.error_code << (r.error_from_peer ? " (peer)" : "") << " \"" << r.error_message << "\"";
    return out.str();
}

int session_exit(const tftp::SessionReport& r) {
    if (r.outcome == tftp::Phase::Done) return kOk;
    return r.error_code == static_cast<std::uint16_t>(tftp::ErrorCode::SecurityFailure) ? kSecurity : kProtocol;
}

// ------------------------------------------------------------------ keygen

struct KeygenOpts {
    std::size_t bits = 2048;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

int cmd_keygen(const KeygenOpts& o) {
    Rng rng = o.seed ? Rng::from_seed(*o.seed) : Rng::system();
    const auto params = gen_group_params(o.bits, rng);
    require_valid_params(params);
    const auto keys = cs::keygen(params, rng);
    const std::string kid = cs::key_id(keys.pk);
    write_text(o.out + ".pub", cs::format_public_key_file(keys.pk));
    write_text(o.out + ".sec", cs::format_secret_key_file(keys), true);
    if (o.json) {
        ordered_json j{{"kid", kid}, {"bits", params.bits()}, {"public", o.out + ".pub"}, {"secret", o.out + ".sec"}};
        std::cout << j.dump() << "\n";
    } else {
        std::cout << kid << "\n";
    }
    return kOk;
}

// ------------------------------------------------------------------ serve

struct ServeOpts {
    std::string config;
    std::string host = "0.0.0.0";
    int port = 69;
    std::string root = ".";
    std::string keystore;
    std::string calibration;
    bool require_security = false;
    int timeout_ms = 500;
    unsigned retries = 5;
    bool json = false;
};

// key=value lines; '#' starts a comment. Explicit flags win over the file.
void apply_config_file(ServeOpts& o, const CLI::App& app) {
    std::istringstream in(read_text(o.config));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line.erase(0, line.find_first_not_of(" \t\r"));
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(o.config + ":" + std::to_string(n) + ": expected key=value");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        auto unset = [&](const char* flag) { return app.count(flag) == 0; };
        try {
            if (key == "host") {
                if (unset("--host")) o.host = value;
            } else if (key == "port") {
                if (unset("--port")) o.port = std::stoi(value);
            } else if (key == "root") {
                if (unset("--root")) o.root = value;
            } else if (key == "keystore") {
                if (unset("--keystore")) o.keystore = value;
            } else if (key == "calibration") {
                if (unset("--calibration")) o.calibration = value;
            } else if (key == "policy") {
                if (value != "require-security" && value != "permissive")
                    throw ConfigError("policy must be require-security or permissive");
                if (unset("--require-security")) o.require_security = value == "require-security";
            } else if (key == "timeout_ms") {
                if (unset("--timeout-ms")) o.timeout_ms = std::stoi(value);
            } else if (key == "retries") {
                if (unset("--retries")) o.retries = static_cast<unsigned>(std::stoul(value));
            } else {
                throw ConfigError(o.config + ":" + std::to_string(n) + ": unknown key '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw ConfigError(o.config + ":" + std::to_string(n) + ": bad value for " + key);
        }
    }
}

int cmd_serve(ServeOpts o, const CLI::App& app) {
    if (!o.config.empty()) apply_config_file(o, app);
    if (o.port < 0 || o.port > 65535) throw ConfigError("port out of range");
    const std::string keydir = o.keystore.empty() ? tftp::KeyStore::default_path() : o.keystore;
    tftp::KeyStore keys;
    if (std::filesystem::exists(keydir)) keys = tftp::KeyStore::load_directory(keydir);
    else if (!o.keystore.empty()) throw IoError("keystore directory not found: " + keydir);
    if (!std::filesystem::is_directory(o.root)) throw IoError("root directory not found: " + o.root);
    tftp::DirectoryFileStore files(o.root);

    tftp::SessionConfig cfg;
    cfg.timeout = std::chrono::milliseconds(o.timeout_ms);
    cfg.max_retries = o.retries;
    cfg.policy.require_security = o.require_security;
    cfg.budgets = load_budgets(o.calibration.empty() ? fixed_time::calibration_path() : o.calibration);

    const bool json = o.json;
    tftp::UdpServer server(o.host, static_cast<std::uint16_t>(o.port), keys, files, cfg,
                           [json](const tftp::SessionReport& r) {
                               std::cout << (json ? report_json(r).dump() : report_line(r)) << std::endl;
                           });
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << server.local().str() << " (" << keys.ids().size() << " keys, security "
              << (o.require_security ? "required" : "optional") << ")" << std::endl;
    server.serve(g_stop);
    std::cerr << "shut down cleanly" << std::endl;
    return kOk;
}

// ------------------------------------------------------------- get / put

struct TransferOpts {
    std::string source;
    std::string target;
    std::string server;
    bool sec = false;
    std::string kid;
    std::string keystore;
    std::string key_file;
    std::string calibration;
    int timeout_ms = 500;
    unsigned retries = 5;
    bool json = false;
};

int finish_transfer(const tftp::SessionReport& r, bool json) {
    if (json) std::cout << report_json(r).dump() << "\n";
    else std::cout << report_line(r) << "\n";
    return session_exit(r);
}

tftp::SessionConfig client_config(const TransferOpts& o) {
    tftp::SessionConfig cfg;
    cfg.timeout = std::chrono::milliseconds(o.timeout_ms);
    cfg.max_retries = o.retries;
    cfg.budgets = load_budgets(o.calibration.empty() ? fixed_time::calibration_path() : o.calibration);
    return cfg;
}

tftp::KeyStore open_keystore(const TransferOpts& o) {
    const std::string dir = o.keystore.empty() ? tftp::KeyStore::default_path() : o.keystore;
    if (!std::filesystem::exists(dir)) throw ConfigError("keystore not found: " + dir);
    return tftp::KeyStore::load_directory(dir);
}

int cmd_put(const TransferOpts& o) {
    tftp::ClientRequest req;
    req.write = true;
    req.remote_name = o.target.empty() ? std::filesystem::path(o.source).filename().string() : o.target;
    req.secure = o.sec;
    if (o.sec) {
        if (!o.key_file.empty()) {
            req.recipient_pk = load_key_file(o.key_file).pk;
        } else if (!o.kid.empty()) {
            req.recipient_pk = open_keystore(o).public_key(o.kid);
        }
        if (!req.recipient_pk) throw ConfigError("--sec needs the server's public key (--server-key or --kid)");
        require_valid_params(req.recipient_pk->params);
    }
    req.data = read_file(o.source);
    auto session = tftp::TransferSession::client(std::move(req), parse_server(o.server), client_config(o), Rng::system());
    return finish_transfer(tftp::run_udp_client(session), o.json);
}

int cmd_get(const TransferOpts& o) {
    tftp::ClientRequest req;
    req.remote_name = o.source;
    req.secure = o.sec;
    if (o.sec) {
        if (!o.key_file.empty()) {
            auto kf = load_key_file(o.key_file);
            if (!kf.sk) throw ConfigError(o.key_file + " has no [secret] section");
            req.own_keys = cs::KeyPair{kf.pk, *kf.sk};
        } else if (!o.kid.empty()) {
            req.own_keys = open_keystore(o).keypair(o.kid);
        }
        if (!req.own_keys) throw ConfigError("--sec needs this client's key pair (--key or --kid)");
    }
    const std::string local = o.target.empty() ? std::filesystem::path(o.source).filename().string() : o.target;
    auto session = tftp::TransferSession::client(std::move(req), parse_server(o.server), client_config(o), Rng::system());
    const auto report = tftp::run_udp_client(session);
    if (session.succeeded()) write_file(local, session.received());
    return finish_transfer(report, o.json);
}

// ---------------------------------------------------------------- games

struct GamesOpts {
    std::string game = "cca2";
    std::string scheme = "cs";
    std::string adversary = "random";
    std::string mode = "leaky";
    std::size_t trials = 1000;
    std::uint64_t seed = 1;
    std::size_t budget = 8;
    std::size_t bits = 1024;
    std::uint64_t param_seed = 0;
    std::string keys;
    std::string calibration;
    std::string transcript;
    std::optional<double> max_advantage;
    std::optional<double> min_advantage;
    bool assert_secure = false;
    bool assert_vulnerable = false;
};

int cmd_games(const GamesOpts& o) {
    const GroupParams params = o.keys.empty() ? game_params(o.bits, o.param_seed) : load_key_file(o.keys).pk.params;
    require_valid_params(params);
    games::GameConfig cfg;
    cfg.n_trials = o.trials;
    cfg.seed = o.seed;
    cfg.query_budget = o.budget;
    cfg.keep_transcript = true;
    cfg.validate();
    const auto adversary = games::make_adversary(o.adversary);

    games::GameResult result;
    double default_max = cfg.threshold();
    double default_min = 0.99;
    if (o.game == "cca2") {
        auto scheme = games::make_scheme(o.scheme, params);
        result = games::run_ind_cca2(*scheme, adversary, cfg);
    } else if (o.game == "scta") {
        auto scheme = games::leaky_fixture(games::make_scheme(o.scheme, params));
        games::ScTaConfig timing;
        if (o.mode == "leaky") {
            timing.mode = games::TimingMode::Leaky;
        } else if (o.mode == "fixed") {
            timing.mode = games::TimingMode::Fixed;
            const std::string path = o.calibration.empty() ? fixed_time::calibration_path() : o.calibration;
            if (!std::filesystem::exists(path))
                throw CalibrationError("no calibration at " + path + "; run `tftps calibrate` first");
            timing.budgets = std::make_shared<fixed_time::BudgetTable>(fixed_time::BudgetTable::load(path));
        } else {
            throw ParameterError("--mode must be leaky or fixed");
        }
        if (o.adversary == "timedict") default_max = 0.15;
        default_min = 0.8;
        result = games::run_ind_cca2_scta(*scheme, adversary, timing, cfg);
    } else {
        throw ParameterError("--game must be cca2 or scta");
    }

    if (!o.transcript.empty()) write_text(o.transcript, games::transcript_to_json_lines(result.transcript));
    std::cout << result.to_json() << "\n";
    if (games::oracle_hygiene_violations(result.transcript) != 0) {
        std::cerr << "oracle answered the challenge in phase 2" << std::endl;
        return kAssertion;
    }
    if (o.assert_secure && result.advantage > o.max_advantage.value_or(default_max)) {
        std::cerr << "advantage " << result.advantage << " exceeds " << o.max_advantage.value_or(default_max) << std::endl;
        return kAssertion;
    }
    if (o.assert_vulnerable && result.advantage < o.min_advantage.value_or(default_min)) {
        std::cerr << "advantage " << result.advantage << " below " << o.min_advantage.value_or(default_min) << std::endl;
        return kAssertion;
    }
    return kOk;
}

// ------------------------------------------------------------- calibrate

struct CalibrateOpts {
    std::vector<std::size_t> bits{1024, 2048};
    std::size_t samples = 30;
    double factor = 1.5;
    std::string out;
    std::uint64_t param_seed = 0;
    bool json = false;
};

int cmd_calibrate(const CalibrateOpts& o) {
    std::cerr << "calibrating; keep the machine otherwise idle" << std::endl;
    const std::string path = o.out.empty() ? fixed_time::calibration_path() : o.out;
    fixed_time::BudgetTable table;
    if (std::filesystem::exists(path)) table = fixed_time::BudgetTable::load(path);
    Rng rng = Rng::system();
    std::vector<fixed_time::TimeBudget> written;
    for (std::size_t bits : o.bits) {
        const GroupParams params = game_params(bits, o.param_seed);
        written.push_back(cs_timing::calibrate_encrypt(params, o.samples, o.factor, rng));
        written.push_back(cs_timing::calibrate_decrypt(params, o.samples, o.factor, rng));
        auto leaky = games::leaky_fixture(games::make_scheme("cs", params));
        for (const auto& b : games::calibrate_scheme(*leaky, o.samples, o.factor, rng)) written.push_back(b);
    }
    for (const auto& b : written) table.put(b);
    table.save(path);
    ordered_json j = ordered_json::array();
    for (const auto& b : written) {
        if (o.json) {
            j.push_back({{"op", b.op_class.name}, {"input_length", b.op_class.input_length}, {"budget_ns", b.budget.count()},
                         {"samples", b.samples}, {"safety_factor", b.safety_factor}});
        } else {
            std::cout << b.op_class.label() << " budget " << std::chrono::duration<double, std::milli>(b.budget).count()
                      << " ms\n";
        }
    }
    if (o.json) std::cout << ordered_json{{"path", path}, {"budgets", j}}.dump() << "\n";
    else std::cout << "wrote " << path << "\n";
    return kOk;
}

// -------------------------------------------------------------- simulate

struct SimulateOpts {
    std::size_t size = 2800 * 1024;
    std::string file;
    std::string direction = "put";
    double loss = 0.01;
    double corrupt = 0.001;
    double duplicate = 0.0;
    double delay_min_ms = 1;
    double delay_max_ms = 5;
    bool no_integrity = false;
    bool sec = false;
    std::size_t bits = 1024;
    std::uint64_t seed = 1;
    int timeout_ms = 200;
    unsigned retries = 8;
    std::string trace;
    bool json = false;
};

int cmd_simulate(const SimulateOpts& o) {
    if (o.direction != "put" && o.direction != "get") throw ParameterError("--direction must be put or get");
    Rng rng = Rng::from_seed(o.seed);
    const Bytes data = o.file.empty() ? rng.bytes(o.size) : read_file(o.file);
    const auto params = game_params(o.bits, 0);
    const auto server_keys = cs::keygen(params, rng);
    const auto client_keys = cs::keygen(params, rng);

    net::ChannelModel model;
    model.loss_rate = o.loss;
    model.corrupt_rate = o.corrupt;
    model.duplicate_rate = o.duplicate;
    model.delay = net::DelayModel::uniform(std::chrono::duration_cast<net::Nanos>(std::chrono::duration<double, std::milli>(o.delay_min_ms)),
                                           std::chrono::duration_cast<net::Nanos>(std::chrono::duration<double, std::milli>(o.delay_max_ms)));
    model.seed = o.seed;
    model.integrity_check = !o.no_integrity;
    model.validate();
    net::SimNetwork sim(model, {}, tftp::tftp_describer());

    tftp::KeyStore store;
    store.add_keypair(server_keys);
    store.add_public(client_keys.pk);
    tftp::MemoryFileStore files;
    const std::string name = "payload.bin";
    if (o.direction == "get") files.write(name, data);

    tftp::SessionConfig cfg;
    cfg.timeout = std::chrono::milliseconds(o.timeout_ms);
    cfg.max_retries = o.retries;
    cfg.budgets = load_budgets(fixed_time::calibration_path());
    tftp::SimServerAgent server("server", 69, store, files, cfg, rng.fork());

    tftp::ClientRequest req;
    req.write = o.direction == "put";
    req.remote_name = name;
    req.secure = o.sec;
    if (req.write) {
        req.data = data;
        if (o.sec) req.recipient_pk = server_keys.pk;
    } else if (o.sec) {
        req.own_keys = client_keys;
    }
    tftp::SimClientAgent client(tftp::TransferSession::client(std::move(req), {"server", 69}, cfg, rng.fork()), "client");
    net::run_agents(sim, {&server, &client});

    const auto& session = client.session();
    const auto delivered = o.direction == "put" ? files.read(name) : std::optional<Bytes>(session.received());
    const bool exact = session.succeeded() && delivered && *delivered == data;
    if (!o.trace.empty()) write_text(o.trace, net::trace_to_json_lines(sim.trace()));

    const auto& r = session.report();
    const auto& st = sim.stats();
    if (o.json) {
        ordered_json j = report_json(r);
        j["bit_exact"] = exact;
        j["virtual_seconds"] = std::chrono::duration<double>(sim.now()).count();
        j["channel"] = {{"sent", st.sent}, {"lost", st.lost}, {"corrupted", st.corrupted},
                        {"duplicated", st.duplicated}, {"checksum_drops", st.checksum_drops}};
        std::cout << j.dump() << "\n";
    } else {
        std::cout << report_line(r) << "\n"
                  << "bit_exact=" << (exact ? "yes" : "no") << " virtual_seconds=" << std::chrono::duration<double>(sim.now()).count()
                  << " sent=" << st.sent << " lost=" << st.lost << " corrupted=" << st.corrupted << "\n";
    }
    if (session.succeeded() && !exact) return kProtocol;
    return session_exit(r);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Secure TFTP with Cramer-Shoup key exchange"};
    app.require_subcommand(1);

    KeygenOpts kg;
    auto* keygen = app.add_subcommand("keygen", "Generate a Cramer-Shoup key pair");
    keygen->add_option("--bits", kg.bits, "Group size: 8 (desk), 16-512 (toy), 1024 or 2048")->capture_default_str();
    keygen->add_option("--out", kg.out, "Output prefix; writes PREFIX.pub and PREFIX.sec")->required();
    keygen->add_option("--seed", kg.seed, "Deterministic seed");
    keygen->add_flag("--json", kg.json);

    ServeOpts sv;
    auto* serve = app.add_subcommand("serve", "Run the TFTP server until SIGINT");
    serve->add_option("--config", sv.config, "key=value config file");
    serve->add_option("--host", sv.host)->capture_default_str();
    serve->add_option("--port", sv.port)->capture_default_str();
    serve->add_option("--root", sv.root, "Directory served")->capture_default_str();
    serve->add_option("--keystore", sv.keystore, "Key directory (default $TFTPS_KEYSTORE or ./keys)");
    serve->add_option("--calibration", sv.calibration, "Budget file (default $TFTPS_CALIBRATION)");
    serve->add_flag("--require-security", sv.require_security, "Refuse plain transfers with ERROR 9");
    serve->add_option("--timeout-ms", sv.timeout_ms)->capture_default_str();
    serve->add_option("--retries", sv.retries)->capture_default_str();
    serve->add_flag("--json", sv.json);

    TransferOpts put_o, get_o;
    auto* put = app.add_subcommand("put", "Upload a file");
    put->add_option("local", put_o.source, "Local file")->required();
    put->add_option("remote", put_o.target, "Remote name (default: local file name)");
    auto* get = app.add_subcommand("get", "Download a file");
    get->add_option("remote", get_o.source, "Remote name")->required();
    get->add_option("local", get_o.target, "Local path (default: remote name)");
    for (auto [cmd, o] : {std::pair{put, &put_o}, std::pair{get, &get_o}}) {
        cmd->add_option("--server", o->server, "host[:port]")->required();
        cmd->add_flag("--sec", o->sec, "Wrap a session key with Cramer-Shoup and seal every block");
        cmd->add_option("--kid", o->kid, "Key id in the keystore");
        cmd->add_option("--keystore", o->keystore, "Key directory (default $TFTPS_KEYSTORE or ./keys)");
        cmd->add_option("--calibration", o->calibration, "Budget file (default $TFTPS_CALIBRATION)");
        cmd->add_option("--timeout-ms", o->timeout_ms)->capture_default_str();
        cmd->add_option("--retries", o->retries)->capture_default_str();
        cmd->add_flag("--json", o->json);
    }
    put->add_option("--server-key", put_o.key_file, "Server public key file");
    get->add_option("--key", get_o.key_file, "This client's secret key file");

    GamesOpts gm;
    auto* gms = app.add_subcommand("games", "Run an indistinguishability experiment");
    gms->add_option("--game", gm.game, "cca2 or scta")->capture_default_str();
    gms->add_option("--scheme", gm.scheme, "cs or elgamal")->capture_default_str();
    gms->add_option("--adversary", gm.adversary, "random, malleate or timedict")->capture_default_str();
    gms->add_option("--mode", gm.mode, "scta timing: leaky or fixed")->capture_default_str();
    gms->add_option("--trials", gm.trials)->capture_default_str();
    gms->add_option("--seed", gm.seed)->capture_default_str();
    gms->add_option("--budget", gm.budget, "Oracle queries per phase")->capture_default_str();
    gms->add_option("--bits", gm.bits, "Group size when --keys is not given")->capture_default_str();
    gms->add_option("--param-seed", gm.param_seed, "Seed for group parameters (default: --bits)");
    gms->add_option("--keys", gm.keys, "Take group parameters from a key file");
    gms->add_option("--calibration", gm.calibration, "Budget file (default $TFTPS_CALIBRATION)");
    gms->add_option("--transcript", gm.transcript, "Write the transcript as JSON lines");
    gms->add_option("--max-advantage", gm.max_advantage, "Bound for --assert");
    gms->add_option("--min-advantage", gm.min_advantage, "Bound for --assert-vulnerable");
    gms->add_flag("--assert", gm.assert_secure, "Exit 5 if the advantage is above the bound");
    gms->add_flag("--assert-vulnerable", gm.assert_vulnerable, "Exit 5 if the advantage is below the bound");

    CalibrateOpts cb;
    auto* cal = app.add_subcommand("calibrate", "Measure fixed-time budgets");
    cal->add_option("--bits", cb.bits, "Group sizes")->capture_default_str()->delimiter(',');
    cal->add_option("--samples", cb.samples)->capture_default_str();
    cal->add_option("--factor", cb.factor, "Safety factor")->capture_default_str();
    cal->add_option("--out", cb.out, "Budget file (default $TFTPS_CALIBRATION or ./tftps-calibration.txt)");
    cal->add_option("--param-seed", cb.param_seed, "Seed for group parameters (default: each size)");
    cal->add_flag("--json", cb.json);

    SimulateOpts sm;
    auto* sim = app.add_subcommand("simulate", "Run a transfer over the simulated lossy channel");
    sim->add_option("--size", sm.size, "Random payload size in octets")->capture_default_str();
    sim->add_option("--file", sm.file, "Send this file instead");
    sim->add_option("--direction", sm.direction, "put or get")->capture_default_str();
    sim->add_option("--loss", sm.loss)->capture_default_str();
    sim->add_option("--corrupt", sm.corrupt)->capture_default_str();
    sim->add_option("--duplicate", sm.duplicate)->capture_default_str();
    sim->add_option("--delay-min-ms", sm.delay_min_ms)->capture_default_str();
    sim->add_option("--delay-max-ms", sm.delay_max_ms)->capture_default_str();
    sim->add_flag("--no-integrity-check", sm.no_integrity, "Deliver damaged datagrams instead of discarding them");
    sim->add_flag("--sec", sm.sec);
    sim->add_option("--bits", sm.bits)->capture_default_str();
    sim->add_option("--seed", sm.seed)->capture_default_str();
    sim->add_option("--timeout-ms", sm.timeout_ms)->capture_default_str();
    sim->add_option("--retries", sm.retries)->capture_default_str();
    sim->add_option("--trace", sm.trace, "Write the trace as JSON lines");
    sim->add_flag("--json", sm.json);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*keygen) return cmd_keygen(kg);
        if (*serve) return cmd_serve(sv, *serve);
        if (*put) return cmd_put(put_o);
        if (*get) return cmd_get(get_o);
        if (*gms) return cmd_games(gm);
        if (*cal) return cmd_calibrate(cb);
        if (*sim) return cmd_simulate(sm);
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kIo;
    }
    return kUsage;
}
