#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "tftps/cs_timing.hpp"
#include "tftps/errors.hpp"
#include "tftps/tftp_endpoints.hpp"

using namespace tftps;
using namespace tftps::tftp;

namespace {

struct Keys {
    cs::KeyPair server;
    cs::KeyPair client;
    cs::KeyPair other;
};

const Keys& keys1024() {
    static const Keys keys = [] {
        auto rng = Rng::from_seed(11);
        const auto params = gen_group_params(1024, rng);
        return Keys{cs::keygen(params, rng), cs::keygen(params, rng), cs::keygen(params, rng)};
    }();
    return keys;
}

std::shared_ptr<fixed_time::BudgetTable> shared_budgets() {
    static auto table = std::make_shared<fixed_time::BudgetTable>();
    return table;
}

SessionConfig config() {
    SessionConfig c;
    c.timeout = Millis(200);
    c.max_retries = 5;
    c.budgets = shared_budgets();
    return c;
}

Bytes random_file(std::size_t n, std::uint64_t seed) {
    auto rng = Rng::from_seed(seed);
    return rng.bytes(n);
}

// One server plus any number of clients on a simulated network.
struct World {
    explicit World(net::ChannelModel model = {}, std::vector<net::ScriptedEvent> script = {})
        : net(model, std::move(script), tftp_describer()) {
        store.add_keypair(keys1024().server);
        store.add_public(keys1024().client.pk);
        server = std::make_unique<SimServerAgent>("server", 69, store, files, server_config, Rng::from_seed(99));
    }

    SimClientAgent& put(const std::string& name, Bytes data, bool secure) {
        ClientRequest req;
        req.write = true;
        req.remote_name = name;
        req.data = std::move(data);
        req.secure = secure;
        if (secure) req.recipient_pk = keys1024().server.pk;
        return add(std::move(req));
    }

    SimClientAgent& get(const std::string& name, bool secure) {
        ClientRequest req;
        req.remote_name = name;
        req.secure = secure;
        if (secure) req.own_keys = keys1024().client;
        return add(std::move(req));
    }

    SimClientAgent& add(ClientRequest req) {
        clients.push_back(std::make_unique<SimClientAgent>(
            TransferSession::client(std::move(req), {"server", 69}, config(), Rng::from_seed(1000 + clients.size())),
            "client"));
        return *clients.back();
    }

    void run() {
        std::vector<net::Agent*> agents{server.get()};
        for (auto& c : clients) agents.push_back(c.get());
        net::run_agents(net, agents);
    }

    net::SimNetwork net;
    KeyStore store;
    MemoryFileStore files;
    SessionConfig server_config = config();
    std::unique_ptr<SimServerAgent> server;
    std::vector<std::unique_ptr<SimClientAgent>> clients;
};

bool contains(ByteView hay, ByteView needle) {
    if (needle.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

TEST(KeyExchange, KeyblockCounts) {
    EXPECT_EQ(keyblocks_for(desk_params()), 1u);
    EXPECT_EQ(cs::ciphertext_wire_size(desk_params()), 12u);
    EXPECT_EQ(keyblocks_for(keys1024().server.pk.params), 2u);
    auto rng = Rng::from_seed(3);
    const auto p2048 = gen_group_params(2048, rng);
    EXPECT_EQ(cs::ciphertext_wire_size(p2048), 1032u);
    EXPECT_EQ(keyblocks_for(p2048), 3u);
}

TEST(KeyExchange, HonestRoundtripYieldsSameMaterial) {
    auto rng = Rng::from_seed(5);
    const auto& kp = keys1024().server;
    auto sent = key_exchange_send(kp.pk, rng);
    ASSERT_EQ(sent.blocks.chunks.size(), 2u);
    EXPECT_EQ(sent.blocks.chunks[0].size(), 512u);
    const auto budget = cs_timing::ensure_decrypt_budget(*shared_budgets(), kp.pk.params);
    auto got = key_exchange_receive(kp, sent.blocks.chunks, budget);
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(got->material, sent.material);
}

TEST(KeyExchange, AnyTamperedBitIsRejected) {
    auto rng = Rng::from_seed(6);
    const auto& kp = keys1024().server;
    const auto budget = cs_timing::ensure_decrypt_budget(*shared_budgets(), kp.pk.params);
    for (int i = 0; i < 20; ++i) {
        auto sent = key_exchange_send(kp.pk, rng);
        auto& block = sent.blocks.chunks[rng.below(sent.blocks.chunks.size())];
        const auto bit = rng.below(block.size() * 8);
        block[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
        EXPECT_FALSE(key_exchange_receive(kp, sent.blocks.chunks, budget).has_value());
    }
}

TEST(KeyExchange, WrongRecipientKeyRejects) {
    auto rng = Rng::from_seed(7);
    const auto& ks = keys1024();
    const auto budget = cs_timing::ensure_decrypt_budget(*shared_budgets(), ks.server.pk.params);
    int rejects = 0;
    for (int i = 0; i < 100; ++i) {
        auto sent = key_exchange_send(ks.server.pk, rng);
        if (!key_exchange_receive(ks.other, sent.blocks.chunks, budget)) ++rejects;
    }
    EXPECT_EQ(rejects, 100);
}

TEST(Session, PlainPutCompletes) {
    World w;
    const Bytes data = random_file(5000, 1);
    auto& c = w.put("plain.bin", data, false);
    w.run();
    EXPECT_TRUE(c.session().succeeded());
    EXPECT_EQ(w.files.read("plain.bin"), data);
    EXPECT_FALSE(c.session().report().secure);
}

TEST(Session, SecurePutCompletesBitExact) {
    World w;
    const Bytes data = random_file(20000, 2);
    auto& c = w.put("fw.img", data, true);
    w.run();
    ASSERT_TRUE(c.session().succeeded()) << c.session().report().error_message;
    EXPECT_EQ(w.files.read("fw.img"), data);
    const auto reports = w.server->reports();
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].outcome, Phase::Done);
    EXPECT_TRUE(reports[0].secure);
    // 20000 / 456 -> 44 records, the last one short.
    EXPECT_EQ(reports[0].records_accepted, 44u);
    EXPECT_EQ(reports[0].mac_verifications, reports[0].records_accepted);
}

TEST(Session, SecureGetCompletesBitExact) {
    World w;
    const Bytes data = random_file(3000, 3);
    w.files.write("boot.bin", data);
    auto& c = w.get("boot.bin", true);
    w.run();
    ASSERT_TRUE(c.session().succeeded()) << c.session().report().error_message;
    EXPECT_EQ(c.session().received(), data);
    EXPECT_EQ(c.session().report().records_accepted, c.session().report().mac_verifications);
}

TEST(Session, PlainGetCompletes) {
    World w;
    const Bytes data = random_file(1024, 4);  // exact multiple: trailing empty block
    w.files.write("two.bin", data);
    auto& c = w.get("two.bin", false);
    w.run();
    ASSERT_TRUE(c.session().succeeded());
    EXPECT_EQ(c.session().received(), data);
    EXPECT_EQ(c.session().report().blocks, 3u);
}

TEST(Session, EmptyFileSendsOneEmptyRecord) {
    for (bool secure : {false, true}) {
        World w;
        auto& c = w.put("empty", {}, secure);
        w.run();
        ASSERT_TRUE(c.session().succeeded());
        EXPECT_EQ(w.files.read("empty"), Bytes{});
        EXPECT_EQ(c.session().report().blocks, secure ? 3u : 1u);
    }
}

TEST(Session, FullLastRecordGetsEmptyFollower) {
    World w;
    const Bytes data = random_file(kSecurePlaintextPerBlock, 5);
    auto& c = w.put("one", data, true);
    w.run();
    ASSERT_TRUE(c.session().succeeded());
    EXPECT_EQ(w.files.read("one"), data);
    EXPECT_EQ(c.session().report().blocks, 2u + 2u);
}

TEST(Session, ChannelNoiseIsRetransmittedNotFatal) {
    // Corrupts ACK 1 and ACK 2 in transit and drops DATA 4.
    net::ChannelModel model;
    model.integrity_check = true;
    World w(model, {{3, net::ScriptAction::Corrupt}, {5, net::ScriptAction::Corrupt}, {8, net::ScriptAction::Drop}});
    const Bytes data = random_file(4000, 6);
    auto& c = w.put("noisy", data, true);
    w.run();
    ASSERT_TRUE(c.session().succeeded()) << c.session().report().error_message;
    EXPECT_EQ(w.files.read("noisy"), data);
    EXPECT_GE(c.session().report().retransmissions, 3u);
}

TEST(Session, TamperedRecordFailsWithSecurityError) {
    // 0 WRQ, 1 OACK, 2-5 key blocks and their ACKs, 6 DATA 3, 7 ACK 3, 8 DATA 4.
    World w({}, {{8, net::ScriptAction::Tamper}});
    auto& c = w.put("victim", random_file(4000, 7), true);
    w.run();
    EXPECT_EQ(c.session().phase(), Phase::Failed);
    EXPECT_EQ(c.session().report().error_code, 9);
    EXPECT_TRUE(c.session().report().error_from_peer);
    EXPECT_FALSE(w.files.read("victim").has_value());
    const auto reports = w.server->reports();
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].error_code, 9);
    EXPECT_EQ(reports[0].records_accepted, 1u);
}

TEST(Session, TamperedKeyBlockFailsWithSecurityError) {
    World w({}, {{2, net::ScriptAction::Tamper}});
    auto& c = w.put("victim", random_file(4000, 8), true);
    w.run();
    EXPECT_EQ(c.session().report().error_code, 9);
    const auto reports = w.server->reports();
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].records_accepted, 0u);
    EXPECT_FALSE(reports[0].error_from_peer);
}

TEST(Session, PhaseMonotoneAndNoRecordBeforeKeyExchange) {
    World w;
    auto& c = w.put("mono", random_file(2000, 9), true);
    std::vector<Phase> seen;
    w.net.set_tap([&](const net::Endpoint&, const net::Endpoint&, ByteView) { seen.push_back(c.session().phase()); });
    w.run();
    ASSERT_TRUE(c.session().succeeded());
    for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_LE(static_cast<int>(seen[i - 1]), static_cast<int>(seen[i]));
}

TEST(Session, MissingFileIsError1) {
    World w;
    auto& c = w.get("nope", false);
    w.run();
    EXPECT_EQ(c.session().phase(), Phase::Failed);
    EXPECT_EQ(c.session().report().error_code, 1);
}

TEST(Session, RequireSecurityRejectsPlain) {
    World w;
    w.server_config.policy.require_security = true;
    w.server = std::make_unique<SimServerAgent>("server", 69, w.store, w.files, w.server_config, Rng::from_seed(1));
    auto& c = w.put("x", random_file(10, 1), false);
    w.run();
    EXPECT_EQ(c.session().report().error_code, 9);
}

TEST(Session, UnknownKidIsOptionRefused) {
    World w;
    ClientRequest req;
    req.write = true;
    req.remote_name = "x";
    req.secure = true;
    req.recipient_pk = keys1024().other.pk;
    auto& c = w.add(std::move(req));
    w.run();
    EXPECT_EQ(c.session().report().error_code, 8);
}

TEST(Session, NetasciiWithSecurityIsIllegal) {
    MemoryFileStore files;
    KeyStore store;
    store.add_keypair(keys1024().server);
    Request req{Opcode::Wrq, "f", "netascii",
                to_options({std::string(kSchemeCs1), 2, cs::key_id(keys1024().server.pk)})};
    auto s = TransferSession::server(req, {"c", 1}, store, files, config(), Rng::from_seed(1));
    auto out = s.start(net::Instant(0));
    ASSERT_EQ(out.size(), 1u);
    const auto pkt = decode_packet(out[0].data);
    ASSERT_TRUE(std::holds_alternative<ErrorPacket>(pkt));
    EXPECT_EQ(std::get<ErrorPacket>(pkt).code, 4);
}

TEST(Session, WrongKeyblocksIsOptionRefused) {
    MemoryFileStore files;
    KeyStore store;
    store.add_keypair(keys1024().server);
    Request req{Opcode::Wrq, "f", "octet", to_options({std::string(kSchemeCs1), 3, cs::key_id(keys1024().server.pk)})};
    auto s = TransferSession::server(req, {"c", 1}, store, files, config(), Rng::from_seed(1));
    auto out = s.start(net::Instant(0));
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(std::get<ErrorPacket>(decode_packet(out[0].data)).code, 8);
}

// Sends one stray DATA to the server's transfer port mid-session.
class Intruder : public net::Agent {
public:
    explicit Intruder(const SimServerAgent& server) : server_(server) {}
    void start(net::SimNetwork& net) override {
        self_ = net.bind("intruder", 0, this);
        fire_at_ = net.now() + Millis(5);
    }
    void on_datagram(net::SimNetwork&, const net::Endpoint&, const net::Datagram& d) override { replies.push_back(d); }
    void on_timer(net::SimNetwork& net) override {
        fire_at_.reset();
        net.send(self_, server_.session_endpoints().at(0), encode_packet(Data{3, Bytes(10, 0xAA)}));
    }
    std::optional<net::Instant> deadline() const override { return fire_at_; }
    bool finished() const override { return !fire_at_; }

    std::vector<net::Datagram> replies;

private:
    const SimServerAgent& server_;
    net::Endpoint self_;
    std::optional<net::Instant> fire_at_;
};

TEST(Session, WrongTidGetsError5AndSessionContinues) {
    World w;
    const Bytes data = random_file(30000, 10);
    auto& c = w.put("tid", data, false);
    Intruder intruder(*w.server);
    std::vector<net::Agent*> agents{w.server.get(), &c, &intruder};
    net::run_agents(w.net, agents);
    ASSERT_EQ(intruder.replies.size(), 1u);
    const auto pkt = decode_packet(intruder.replies[0].data);
    ASSERT_TRUE(std::holds_alternative<ErrorPacket>(pkt));
    EXPECT_EQ(std::get<ErrorPacket>(pkt).code, 5);
    EXPECT_TRUE(c.session().succeeded());
    EXPECT_EQ(w.files.read("tid"), data);
}

TEST(Session, MalformedToListenPortIsError4) {
    World w;
    net::Endpoint probe = w.net.bind("probe", 0);
    w.server->start(w.net);
    w.net.send(probe, {"server", 69}, Bytes{0x00, 0x09, 0x01});
    auto reply = w.net.recv(probe, Millis(100));
    ASSERT_TRUE(reply.has_value());
    EXPECT_EQ(std::get<ErrorPacket>(decode_packet(reply->data)).code, 4);
}

TEST(Session, TwoConcurrentClientsBothComplete) {
    World w;
    const Bytes a = random_file(9000, 11), b = random_file(7000, 12);
    auto& ca = w.put("a.bin", a, true);
    auto& cb = w.put("b.bin", b, false);
    w.run();
    EXPECT_TRUE(ca.session().succeeded());
    EXPECT_TRUE(cb.session().succeeded());
    EXPECT_EQ(w.files.read("a.bin"), a);
    EXPECT_EQ(w.files.read("b.bin"), b);
    EXPECT_NE(ca.local(), cb.local());
}

TEST(Session, ShutdownAbortsWithError0) {
    World w;
    auto& c = w.put("big", random_file(200000, 13), false);
    w.server->start(w.net);
    c.start(w.net);
    w.net.advance_to(net::Instant(Millis(20)));
    w.server->shutdown(w.net);
    for (int i = 0; i < 100 && !c.finished(); ++i) {
        w.net.advance_to(w.net.now() + Millis(10));
    }
    EXPECT_EQ(c.session().phase(), Phase::Failed);
    EXPECT_EQ(c.session().report().error_code, 0);
    EXPECT_TRUE(c.session().report().error_from_peer);
}

TEST(Session, WiretapHoldsNoPlaintextWindowOrKeyMaterial) {
    World w;
    const Bytes data = random_file(1 << 20, 14);
    auto& c = w.put("secret.bin", data, true);
    Bytes wire;
    w.net.set_tap([&](const net::Endpoint&, const net::Endpoint&, ByteView d) { append(wire, d); });
    w.run();
    ASSERT_TRUE(c.session().succeeded());
    ASSERT_EQ(w.files.read("secret.bin"), data);

    constexpr std::size_t kWindow = 64;
    std::unordered_map<std::string_view, std::size_t> windows;
    const auto* base = reinterpret_cast<const char*>(data.data());
    for (std::size_t i = 0; i + kWindow <= data.size(); i += 1) windows.emplace(std::string_view(base + i, kWindow), i);
    const auto* wbase = reinterpret_cast<const char*>(wire.data());
    std::size_t hits = 0;
    for (std::size_t i = 0; i + kWindow <= wire.size(); ++i) {
        if (windows.count(std::string_view(wbase + i, kWindow))) ++hits;
    }
    EXPECT_EQ(hits, 0u);

    const auto& k = *c.session().session_keys();
    Bytes material(k.enc_key.begin(), k.enc_key.end());
    material.insert(material.end(), k.mac_key.begin(), k.mac_key.end());
    EXPECT_FALSE(contains(wire, material));
    EXPECT_FALSE(contains(wire, ByteView(k.enc_key)));
    EXPECT_FALSE(contains(wire, ByteView(k.mac_key)));
}

TEST(Stores, DirectoryStoreRefusesTraversal) {
    DirectoryFileStore store("/tmp");
    EXPECT_FALSE(store.write("../etc/passwd", {1}));
    EXPECT_FALSE(store.read("../etc/passwd").has_value());
    EXPECT_FALSE(store.write("a/b", {1}));
}

TEST(Stores, KeyStoreLoadsDirectory) {
    const std::string dir = ::testing::TempDir() + "/tftps-keys";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir + "/srv.sec") << cs::format_secret_key_file(keys1024().server);
        std::ofstream(dir + "/cli.pub") << cs::format_public_key_file(keys1024().client.pk);
        std::ofstream(dir + "/README") << "ignored";
    }
    const auto store = KeyStore::load_directory(dir);
    EXPECT_EQ(store.ids().size(), 2u);
    EXPECT_TRUE(store.keypair(cs::key_id(keys1024().server.pk)).has_value());
    EXPECT_FALSE(store.keypair(cs::key_id(keys1024().client.pk)).has_value());
    EXPECT_TRUE(store.public_key(cs::key_id(keys1024().client.pk)).has_value());
    EXPECT_THROW(KeyStore::load_directory(dir + "/missing"), IoError);
}
