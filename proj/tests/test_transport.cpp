#include <gtest/gtest.h>

#include <thread>

#include "tftps/arq_agents.hpp"
#include "tftps/errors.hpp"
#include "tftps/transport.hpp"

using namespace tftps;
using namespace tftps::net;
using namespace std::chrono_literals;

namespace {

// Sends n datagrams and returns which indexes arrived.
std::vector<bool> arrivals(ChannelModel model, int n) {
    SimNetwork net(model);
    const auto a = net.bind("a", 1);
    const auto b = net.bind("b", 2);
    for (int i = 0; i < n; ++i) {
        Bytes d;
        put_u32(d, static_cast<std::uint32_t>(i));
        net.send(a, b, d);
    }
    std::vector<bool> seen(n, false);
    while (auto d = net.recv(b, 10s)) {
        if (d->data.size() == 4) {
            const auto i = get_u32(d->data, 0);
            if (i < static_cast<std::uint32_t>(n)) seen[i] = true;
        }
    }
    return seen;
}

}  // namespace

TEST(Channel, PerfectChannelIsFifoExactlyOnce) {
    SimNetwork net(ChannelModel{});
    const auto a = net.bind("a", 1);
    const auto b = net.bind("b", 2);
    for (std::uint8_t i = 0; i < 50; ++i) net.send(a, b, Bytes{i});
    for (std::uint8_t i = 0; i < 50; ++i) {
        auto d = net.recv(b, 1s);
        ASSERT_TRUE(d.has_value());
        EXPECT_EQ(d->data, Bytes{i});
        EXPECT_EQ(d->from, a);
    }
    EXPECT_FALSE(net.recv(b, 1s).has_value());
}

TEST(Channel, TotalLossAlwaysTimesOut) {
    ChannelModel m;
    m.loss_rate = 1.0;
    const auto seen = arrivals(m, 100);
    EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 0);
}

TEST(Channel, LossRateConverges) {
    ChannelModel m;
    m.loss_rate = 0.1;
    m.seed = 2024;
    const auto seen = arrivals(m, 10000);
    const double lost = 1.0 - static_cast<double>(std::count(seen.begin(), seen.end(), true)) / 10000.0;
    EXPECT_GE(lost, 0.08);
    EXPECT_LE(lost, 0.12);
}

TEST(Channel, ReplayIsDeterministic) {
    ChannelModel m;
    m.loss_rate = 0.1;
    m.corrupt_rate = 0.05;
    m.duplicate_rate = 0.05;
    m.delay = DelayModel::uniform(1ms, 20ms);
    m.seed = 77;
    EXPECT_EQ(arrivals(m, 1000), arrivals(m, 1000));
    m.seed = 78;
    auto other = m;
    other.seed = 77;
    EXPECT_NE(arrivals(m, 1000), arrivals(other, 1000));
}

TEST(Channel, CorruptionFlipsExactlyOneBit) {
    ChannelModel m;
    m.corrupt_rate = 1.0;
    SimNetwork net(m);
    const auto a = net.bind("a", 1);
    const auto b = net.bind("b", 2);
    const Bytes original(64, 0);
    for (int i = 0; i < 100; ++i) net.send(a, b, original);
    int checked = 0;
    while (auto d = net.recv(b, 1s)) {
        int bits = 0;
        for (auto byte : d->data) bits += __builtin_popcount(byte);
        EXPECT_EQ(bits, 1);
        ++checked;
    }
    EXPECT_EQ(checked, 100);
}

TEST(Channel, IntegrityCheckDiscardsDamage) {
    ChannelModel m;
    m.corrupt_rate = 1.0;
    m.integrity_check = true;
    SimNetwork net(m);
    const auto a = net.bind("a", 1);
    const auto b = net.bind("b", 2);
    net.send(a, b, Bytes(10, 1));
    EXPECT_FALSE(net.recv(b, 1s).has_value());
    EXPECT_EQ(net.stats().checksum_drops, 1u);
}

TEST(Channel, DelayAndValidation) {
    ChannelModel m;
    m.delay = DelayModel::fixed(30ms);
    SimNetwork net(m);
    const auto a = net.bind("a", 1);
    const auto b = net.bind("b", 2);
    net.send(a, b, Bytes{1});
    EXPECT_FALSE(net.recv(b, 10ms).has_value());
    EXPECT_TRUE(net.recv(b, 30ms).has_value());
    EXPECT_THROW(net.send(a, b, Bytes(kMaxDatagram + 1)), ParameterError);
    EXPECT_NO_THROW(net.send(a, b, Bytes(kMaxDatagram)));

    ChannelModel bad;
    bad.loss_rate = 1.5;
    EXPECT_THROW(bad.validate(), ParameterError);
    bad = ChannelModel{};
    bad.delay = DelayModel::uniform(5ms, 1ms);
    EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(Channel, EphemeralPortsAreUnique) {
    SimNetwork net(ChannelModel{});
    const auto a = net.bind("h", 0);
    const auto b = net.bind("h", 0);
    EXPECT_NE(a, b);
}

namespace {

Trace two_block_run(std::vector<ScriptedEvent> script) {
    arq::Config c;
    c.seq_bits = 16;
    c.initial_seq = 0;
    ArqSenderAgent sender(c, {Bytes(10, 1), Bytes(5, 2)}, {"a", 1}, {"b", 2});
    ArqReceiverAgent receiver(c, {"b", 2});
    return run_scenario(script, {&sender, &receiver}, {}, arq_frame_describer());
}

int count(const Trace& t, const std::string& event, const std::string& kind = "") {
    return static_cast<int>(std::count_if(t.begin(), t.end(), [&](const TraceEntry& e) {
        return e.event == event && (kind.empty() || e.kind == kind);
    }));
}

}  // namespace

TEST(Scenario, CleanRun) {
    const auto t = two_block_run({});
    EXPECT_EQ(count(t, "send", "DATA"), 2);
    EXPECT_EQ(count(t, "send", "ACK"), 2);
    EXPECT_EQ(count(t, "done"), 1);
    EXPECT_EQ(count(t, "timeout"), 0);
    EXPECT_EQ(t, two_block_run({}));
}

TEST(Scenario, DroppedAckCausesOneRetransmission) {
    // Datagrams: 0 DATA 0, 1 ACK 0, 2 DATA 1, 3 ACK 1.
    const auto t = two_block_run({{1, ScriptAction::Drop}});
    EXPECT_EQ(count(t, "send", "DATA"), 3);
    EXPECT_EQ(count(t, "timeout"), 1);
    EXPECT_EQ(count(t, "done"), 1);
}

TEST(Scenario, CorruptedDataIsDroppedAndResent) {
    const auto t = two_block_run({{2, ScriptAction::Corrupt}});
    EXPECT_EQ(count(t, "checksum-drop"), 1);
    EXPECT_EQ(count(t, "send", "DATA"), 3);
    EXPECT_EQ(count(t, "done"), 1);
}

TEST(Scenario, OutOfRangeScriptIsAnError) {
    EXPECT_THROW(two_block_run({{40, ScriptAction::Drop}}), ParameterError);
}

TEST(Scenario, TraceJsonLines) {
    const auto text = trace_to_json_lines(two_block_run({}));
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(two_block_run({}).size()));
    EXPECT_NE(text.find("\"kind\":\"DATA\""), std::string::npos);
    EXPECT_NE(text.find("\"direction\""), std::string::npos);
}

TEST(Udp, LoopbackSendRecv) {
    auto a = UdpSocket::bind("127.0.0.1", 0);
    auto b = UdpSocket::bind("127.0.0.1", 0);
    EXPECT_NE(a.local().port, 0);
    a.send(b.local(), to_bytes("ping"));
    auto d = b.recv(1000ms);
    ASSERT_TRUE(d.has_value());
    EXPECT_EQ(d->data, to_bytes("ping"));
    EXPECT_EQ(d->from.port, a.local().port);
    EXPECT_FALSE(b.recv(20ms).has_value());
    EXPECT_THROW(a.send(b.local(), Bytes(kMaxDatagram + 1)), ParameterError);
}
