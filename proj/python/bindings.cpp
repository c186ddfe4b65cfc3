#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tftps/cramer_shoup.hpp"
#include "tftps/errors.hpp"
#include "tftps/games.hpp"
#include "tftps/record_crypto.hpp"
#include "tftps/ssw_arq.hpp"
#include "tftps/tftp_endpoints.hpp"

namespace py = pybind11;
using namespace tftps;

namespace {

py::int_ to_py(const BigInt& v) {
    return py::reinterpret_steal<py::int_>(PyLong_FromString(v.get_str(16).c_str(), nullptr, 16));
}

BigInt from_py(const py::int_& v) {
    if (v < py::int_(0)) throw ParameterError("negative integer");
    return BigInt(py::str(py::module_::import("builtins").attr("format")(v, "x")).cast<std::string>(), 16);
}

py::bytes to_py(ByteView b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes from_py(const py::bytes& b) {
    const std::string_view s = b;
    return Bytes(s.begin(), s.end());
}

Rng rng_for(std::optional<std::uint64_t> seed) { return seed ? Rng::from_seed(*seed) : Rng::system(); }

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

py::dict packet_to_dict(const tftp::Packet& packet) {
    py::dict d;
    d["opcode"] = tftp::opcode_name(tftp::opcode_of(packet));
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, tftp::Request>) {
                d["filename"] = p.filename;
                d["mode"] = p.mode;
                d["options"] = p.options;
            } else if constexpr (std::is_same_v<T, tftp::Data>) {
                d["block"] = p.block;
                d["data"] = to_py(p.data);
            } else if constexpr (std::is_same_v<T, tftp::Ack>) {
                d["block"] = p.block;
            } else if constexpr (std::is_same_v<T, tftp::ErrorPacket>) {
                d["code"] = p.code;
                d["message"] = p.message;
            } else {
                d["options"] = p.options;
            }
        },
        packet);
    return d;
}

py::dict simulate(std::size_t size, bool secure, bool write, std::size_t bits, double loss, double corrupt,
                  std::uint64_t seed, int timeout_ms, unsigned retries) {
    Rng rng = Rng::from_seed(seed);
    const Bytes data = rng.bytes(size);
    Rng prng = Rng::from_seed(bits);
    const auto params = gen_group_params(bits, prng);
    const auto server_keys = cs::keygen(params, rng);
    const auto client_keys = cs::keygen(params, rng);

    net::ChannelModel model;
    model.loss_rate = loss;
    model.corrupt_rate = corrupt;
    model.delay = net::DelayModel::uniform(std::chrono::milliseconds(1), std::chrono::milliseconds(5));
    model.seed = seed;
    model.integrity_check = true;
    model.validate();
    net::SimNetwork sim(model, {}, tftp::tftp_describer());

    tftp::KeyStore store;
    store.add_keypair(server_keys);
    store.add_public(client_keys.pk);
    tftp::MemoryFileStore files;
    if (!write) files.write("payload.bin", data);
    tftp::SessionConfig cfg;
    cfg.timeout = std::chrono::milliseconds(timeout_ms);
    cfg.max_retries = retries;
    cfg.budgets = std::make_shared<fixed_time::BudgetTable>();
    tftp::SimServerAgent server("server", 69, store, files, cfg, rng.fork());

    tftp::ClientRequest req;
    req.write = write;
    req.remote_name = "payload.bin";
    req.secure = secure;
    if (write) {
        req.data = data;
        if (secure) req.recipient_pk = server_keys.pk;
    } else if (secure) {
        req.own_keys = client_keys;
    }
    tftp::SimClientAgent client(tftp::TransferSession::client(std::move(req), {"server", 69}, cfg, rng.fork()), "client");
    {
        py::gil_scoped_release release;
        net::run_agents(sim, {&server, &client});
    }
    const auto& session = client.session();
    const auto delivered = write ? files.read("payload.bin") : std::optional<Bytes>(session.received());
    const auto& r = session.report();
    py::dict out;
    out["outcome"] = tftp::phase_name(r.outcome);
    out["secure"] = r.secure;
    out["bytes"] = r.bytes;
    out["blocks"] = r.blocks;
    out["retransmissions"] = r.retransmissions;
    out["error_code"] = r.error_code;
    out["bit_exact"] = session.succeeded() && delivered && *delivered == data;
    out["virtual_seconds"] = std::chrono::duration<double>(sim.now()).count();
    out["datagrams"] = sim.stats().sent;
    out["lost"] = sim.stats().lost;
    out["corrupted"] = sim.stats().corrupted;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Cramer-Shoup secured TFTP: group math, key exchange, records, games and simulation";

    py::register_exception<Error>(m, "Error");
    py::register_exception<ParameterError>(m, "ParameterError", m.attr("Error"));
    py::register_exception<EncodingError>(m, "EncodingError", m.attr("Error"));
    py::register_exception<MalformedPacket>(m, "MalformedPacket", m.attr("Error"));
    py::register_exception<CalibrationError>(m, "CalibrationError", m.attr("Error"));
    py::register_exception<IoError>(m, "IoError", m.attr("Error"));
    py::register_exception<ConfigError>(m, "ConfigError", m.attr("Error"));

    py::class_<GroupParams>(m, "GroupParams")
        .def(py::init([](const py::int_& p, const py::int_& q, const py::int_& g1, const py::int_& g2) {
                 return GroupParams{from_py(p), from_py(q), from_py(g1), from_py(g2)};
             }),
             py::arg("p"), py::arg("q"), py::arg("g1"), py::arg("g2"))
        .def_property_readonly("p", [](const GroupParams& g) { return to_py(g.p); })
        .def_property_readonly("q", [](const GroupParams& g) { return to_py(g.q); })
        .def_property_readonly("g1", [](const GroupParams& g) { return to_py(g.g1); })
        .def_property_readonly("g2", [](const GroupParams& g) { return to_py(g.g2); })
        .def_property_readonly("bits", &GroupParams::bits)
        .def_property_readonly("element_bytes", &GroupParams::element_bytes)
        .def("violations", [](const GroupParams& g) { return validate_group_params(g); })
        .def("is_member", [](const GroupParams& g, const py::int_& x) { return is_subgroup_member(g, from_py(x)); })
        .def("__eq__", [](const GroupParams& a, const GroupParams& b) { return a == b; })
        .def("__repr__", [](const GroupParams& g) { return "GroupParams(bits=" + std::to_string(g.bits()) + ")"; });

    m.def("desk_params", &desk_params);
    m.def(
        "gen_group_params",
        [](std::size_t bits, std::optional<std::uint64_t> seed) {
            Rng rng = rng_for(seed);
            return gen_group_params(bits, rng);
        },
        py::arg("bits"), py::arg("seed") = py::none());
    m.def(
        "mod_exp",
        [](const py::int_& b, const py::int_& e, const py::int_& n) { return to_py(mod_exp(from_py(b), from_py(e), from_py(n))); },
        py::arg("base"), py::arg("exponent"), py::arg("modulus"));
    m.def("element_order", &element_order, py::arg("g"), py::arg("p"));
    m.def("is_primitive_root", &is_primitive_root, py::arg("g"), py::arg("p"));

    py::class_<cs::PublicKey>(m, "PublicKey")
        .def_readonly("params", &cs::PublicKey::params)
        .def_property_readonly("kid", [](const cs::PublicKey& pk) { return cs::key_id(pk); })
        .def("to_file", [](const cs::PublicKey& pk) { return cs::format_public_key_file(pk); })
        .def("__eq__", [](const cs::PublicKey& a, const cs::PublicKey& b) { return a == b; });
    py::class_<cs::KeyPair>(m, "KeyPair")
        .def_readonly("pk", &cs::KeyPair::pk)
        .def_property_readonly("kid", [](const cs::KeyPair& k) { return cs::key_id(k.pk); })
        .def("to_file", [](const cs::KeyPair& k) { return cs::format_secret_key_file(k); });

    m.def(
        "keygen",
        [](const GroupParams& params, std::optional<std::uint64_t> seed) {
            Rng rng = rng_for(seed);
            return cs::keygen(params, rng);
        },
        py::arg("params"), py::arg("seed") = py::none());
    m.def(
        "parse_key_file",
        [](const std::string& text) -> py::object {
            auto kf = cs::parse_key_file(text);
            if (kf.sk) return py::cast(cs::KeyPair{kf.pk, *kf.sk});
            return py::cast(kf.pk);
        },
        "KeyPair when the file has a [secret] section, else PublicKey");
    m.def("max_message_bytes", &cs::max_message_bytes);
    m.def(
        "encrypt",
        [](const cs::PublicKey& pk, const py::bytes& message, std::optional<std::uint64_t> seed) {
            Rng rng = rng_for(seed);
            const auto ct = cs::encrypt(pk, cs::encode_message(from_py(message), pk.params), rng);
            return to_py(cs::serialize_ciphertext(ct, pk.params));
        },
        py::arg("pk"), py::arg("message"), py::arg("seed") = py::none(), "Serialized ciphertext of an encoded byte message");
    m.def(
        "decrypt",
        [](const cs::KeyPair& keys, const py::bytes& wire) -> std::optional<py::bytes> {
            const auto& params = keys.pk.params;
            const auto m = cs::decrypt(keys.sk, params, cs::parse_ciphertext(from_py(wire), params));
            if (!m) return std::nullopt;
            return to_py(cs::decode_message(*m, params));
        },
        py::arg("keys"), py::arg("ciphertext"), "None on reject");
    m.def(
        "hash_to_scalar",
        [](const py::int_& u1, const py::int_& u2, const py::int_& e, const py::int_& q) {
            return to_py(cs::hash_to_scalar({from_py(u1)}, {from_py(u2)}, {from_py(e)}, from_py(q)).value);
        },
        py::arg("u1"), py::arg("u2"), py::arg("e"), py::arg("q"));

    m.def(
        "seal_record",
        [](const py::bytes& material, std::uint64_t seq, const py::bytes& plaintext, std::optional<std::uint64_t> seed) {
            Rng rng = rng_for(seed);
            const auto keys = record::derive_session_keys(from_py(material));
            return to_py(record::serialize_record(record::seal_block(keys, seq, from_py(plaintext), rng)));
        },
        py::arg("material"), py::arg("seq"), py::arg("plaintext"), py::arg("seed") = py::none());
    m.def(
        "open_record",
        [](const py::bytes& material, std::uint64_t seq, const py::bytes& wire) -> std::optional<py::bytes> {
            const auto keys = record::derive_session_keys(from_py(material));
            const auto pt = record::open_block(keys, seq, record::parse_record(from_py(wire)));
            if (!pt) return std::nullopt;
            return to_py(*pt);
        },
        py::arg("material"), py::arg("seq"), py::arg("record"), "None on MAC failure");

    m.def("crc32", [](const py::bytes& b) { return arq::crc32(from_py(b)); });
    m.def(
        "chunk",
        [](const py::bytes& b, std::size_t max_payload) {
            std::vector<py::bytes> out;
            for (const auto& c : arq::chunk_payload(from_py(b), max_payload).chunks) out.push_back(to_py(c));
            return out;
        },
        py::arg("data"), py::arg("max_payload") = tftp::kBlockSize);

    m.def("decode_packet", [](const py::bytes& b) { return packet_to_dict(tftp::decode_packet(from_py(b))); });
    m.def(
        "encode_request",
        [](bool write, const std::string& filename, const std::string& mode, const tftp::Options& options) {
            return to_py(tftp::encode_packet(tftp::Request{write ? tftp::Opcode::Wrq : tftp::Opcode::Rrq, filename, mode, options}));
        },
        py::arg("write"), py::arg("filename"), py::arg("mode") = "octet", py::arg("options") = tftp::Options{});
    m.def("encode_data", [](std::uint16_t block, const py::bytes& b) { return to_py(tftp::encode_packet(tftp::Data{block, from_py(b)})); });
    m.def("encode_ack", [](std::uint16_t block) { return to_py(tftp::encode_packet(tftp::Ack{block})); });
    m.def("encode_error", [](std::uint16_t code, const std::string& msg) {
        return to_py(tftp::encode_packet(tftp::ErrorPacket{code, msg}));
    });

    m.def(
        "run_game",
        [](const std::string& game, const std::string& scheme, const std::string& adversary, std::size_t trials,
           std::uint64_t seed, std::size_t bits, std::optional<std::uint64_t> param_seed) {
            Rng prng = Rng::from_seed(param_seed.value_or(bits));
            const auto params = gen_group_params(bits, prng);
            games::GameConfig cfg;
            cfg.n_trials = trials;
            cfg.seed = seed;
            cfg.keep_transcript = false;
            cfg.validate();
            auto factory = games::make_adversary(adversary);
            if (game != "cca2" && game != "scta") throw ParameterError("game must be cca2 or scta");
            games::GameResult result;
            {
                py::gil_scoped_release release;
                if (game == "cca2") {
                    auto s = games::make_scheme(scheme, params);
                    result = games::run_ind_cca2(*s, factory, cfg);
                } else {
                    auto s = games::leaky_fixture(games::make_scheme(scheme, params));
                    result = games::run_ind_cca2_scta(*s, factory, games::ScTaConfig{}, cfg);
                }
            }
            return json_loads(result.to_json());
        },
        py::arg("game") = "cca2", py::arg("scheme") = "cs", py::arg("adversary") = "random", py::arg("trials") = 1000,
        py::arg("seed") = 1, py::arg("bits") = 64, py::arg("param_seed") = py::none(),
        "GameResult as a dict; scta runs the leaky fixture untouched");

    m.def("simulate_transfer", &simulate, py::arg("size"), py::arg("secure") = true, py::arg("write") = true,
          py::arg("bits") = 1024, py::arg("loss") = 0.01, py::arg("corrupt") = 0.001, py::arg("seed") = 1,
          py::arg("timeout_ms") = 200, py::arg("retries") = 8,
          "In-process transfer over the simulated lossy channel; returns the session summary");
}
