#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "tftps/bytes.hpp"
#include "tftps/rng.hpp"

namespace tftps::net {

using Nanos = std::chrono::nanoseconds;
using Millis = std::chrono::milliseconds;
/// Virtual or monotonic clock reading.
using Instant = std::chrono::nanoseconds;

inline constexpr std::size_t kMaxDatagram = 65507;

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct Datagram {
    Endpoint from;
    Bytes data;
};

/// Thin IPv4 UDP socket. Move-only; closes on destruction.
class UdpSocket {
public:
    /// Port 0 binds an ephemeral port. Throws IoError on failure.
    static UdpSocket bind(const std::string& host, std::uint16_t port);

    UdpSocket(UdpSocket&& other) noexcept;
    UdpSocket& operator=(UdpSocket&& other) noexcept;
    UdpSocket(const UdpSocket&) = delete;
    UdpSocket& operator=(const UdpSocket&) = delete;
    ~UdpSocket();

    Endpoint local() const { return local_; }
    void send(const Endpoint& to, ByteView data);
    /// std::nullopt on timeout.
    std::optional<Datagram> recv(Millis timeout);

private:
    UdpSocket(int fd, Endpoint local) : fd_(fd), local_(std::move(local)) {}
    int fd_ = -1;
    Endpoint local_;
};

struct DelayModel {
    Nanos lo{0};
    Nanos hi{0};

    static DelayModel fixed(Nanos d) { return {d, d}; }
    static DelayModel uniform(Nanos lo, Nanos hi) { return {lo, hi}; }
    Nanos sample(Rng& rng) const;
};

struct ChannelModel {
    double loss_rate = 0.0;
    double corrupt_rate = 0.0;
    double duplicate_rate = 0.0;
    DelayModel delay = DelayModel::fixed(Millis(1));
    std::uint64_t seed = 0;
    /// Emulates the UDP checksum: datagrams damaged in transit are discarded
    /// on arrival. Scripted tampering recomputes the checksum and gets through.
    bool integrity_check = false;

    /// Throws ParameterError if a rate is outside [0, 1] or the delay range is inverted.
    void validate() const;
};

enum class ScriptAction { Drop, Corrupt, Duplicate, Tamper };

/// Applies `action` to the `index`-th datagram sent on the network (0-based).
struct ScriptedEvent {
    std::size_t index = 0;
    ScriptAction action = ScriptAction::Drop;
};

struct TraceEntry {
    Instant t{0};
    std::string direction;
    std::string kind;
    int seq = -1;
    std::string event;

    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

using Trace = std::vector<TraceEntry>;

/// One JSON object per line: {t, direction, kind, seq, event}; t in milliseconds.
std::string trace_to_json_lines(const Trace& trace);

/// Classifies a datagram for the trace: (kind, seq or -1).
using Describer = std::function<std::pair<std::string, int>(ByteView)>;

class SimNetwork;

/// A participant stepped by the simulator on a virtual clock.
class Agent {
public:
    virtual ~Agent() = default;
    virtual void start(SimNetwork& net) = 0;
    virtual void on_datagram(SimNetwork& net, const Endpoint& local, const Datagram& dgram) = 0;
    virtual void on_timer(SimNetwork& net) = 0;
    virtual std::optional<Instant> deadline() const = 0;
    virtual bool finished() const = 0;
};

struct ChannelStats {
    std::size_t sent = 0;
    std::size_t lost = 0;
    std::size_t corrupted = 0;
    std::size_t duplicated = 0;
    std::size_t delivered = 0;
    std::size_t checksum_drops = 0;
};

/**
 * Deterministic datagram network on a virtual clock.
 *
 * Each send draws loss, corruption (one uniformly chosen bit) and
 * duplication from the channel model, then schedules delivery after a
 * sampled delay. Scripted events override the random draws for the
 * datagram at their index. Single-threaded.
 */
class SimNetwork {
public:
    explicit SimNetwork(ChannelModel model, std::vector<ScriptedEvent> script = {}, Describer describer = {});

    Instant now() const { return now_; }
    const ChannelModel& model() const { return model_; }

    /// Port 0 allocates an ephemeral port. Datagrams for an owned endpoint go
    /// to its agent; otherwise they queue for recv().
    Endpoint bind(const std::string& host, std::uint16_t port = 0, Agent* owner = nullptr);
    void unbind(const Endpoint& endpoint);

    /// Throws ParameterError for datagrams over 65507 octets.
    void send(const Endpoint& from, const Endpoint& to, ByteView data);

    /// Waits on the virtual clock for a datagram addressed to `at`.
    std::optional<Datagram> recv(const Endpoint& at, Millis timeout);

    std::optional<Instant> next_delivery_time() const;
    /// Advances the clock to `t`, dispatching every delivery due by then.
    void advance_to(Instant t);

    void note(const std::string& direction, const std::string& event, ByteView data = {});

    /// Sees every datagram as sent, before the channel acts on it.
    using Tap = std::function<void(const Endpoint& from, const Endpoint& to, ByteView data)>;
    void set_tap(Tap tap) { tap_ = std::move(tap); }

    const Trace& trace() const { return trace_; }
    const ChannelStats& stats() const { return stats_; }
    std::size_t datagrams_sent() const { return sent_index_; }
    /// Script entries whose index was never reached.
    std::vector<ScriptedEvent> unused_script() const;

private:
    struct InFlight {
        Instant due;
        std::uint64_t order;
        Endpoint from;
        Endpoint to;
        Bytes data;
        std::uint32_t checksum;
        bool operator>(const InFlight& other) const {
            return due != other.due ? due > other.due : order > other.order;
        }
    };
    struct Binding {
        Agent* owner = nullptr;
        std::deque<Datagram> mailbox;
    };

    void schedule(const Endpoint& from, const Endpoint& to, Bytes data, std::uint32_t checksum);
    void deliver(InFlight item);
    void record(const Endpoint& from, const Endpoint& to, const std::string& event, ByteView data);

    ChannelModel model_;
    Rng rng_;
    std::map<std::size_t, ScriptAction> script_;
    Describer describer_;
    Tap tap_;
    Instant now_{0};
    std::uint64_t order_ = 0;
    std::size_t sent_index_ = 0;
    std::uint16_t next_port_ = 49152;
    std::map<Endpoint, Binding> bindings_;
    std::priority_queue<InFlight, std::vector<InFlight>, std::greater<>> in_flight_;
    Trace trace_;
    ChannelStats stats_;
};

struct ScenarioOptions {
    Instant time_limit = std::chrono::hours(1);
};

/**
 * Runs the agents against a SimNetwork until all are finished or no event
 * remains. Returns the full trace. Throws ParameterError if the script
 * references a datagram index the run never produced.
 */
Trace run_scenario(const std::vector<ScriptedEvent>& script, const std::vector<Agent*>& agents,
                   const ChannelModel& model = {}, Describer describer = {}, ScenarioOptions options = {});

/// Same, but runs on a caller-owned network so stats and bindings stay inspectable.
void run_agents(SimNetwork& net, const std::vector<Agent*>& agents, ScenarioOptions options = {});

}  // namespace tftps::net
