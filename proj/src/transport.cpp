#include "tftps/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <nlohmann/json.hpp>

#include "tftps/errors.hpp"
#include "tftps/ssw_arq.hpp"

namespace tftps::net {

namespace {

sockaddr_in to_sockaddr(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    const std::string host = ep.host.empty() || ep.host == "localhost" ? "127.0.0.1" : ep.host;
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ParameterError("not an IPv4 address: " + ep.host);
    return addr;
}

Endpoint from_sockaddr(const sockaddr_in& addr) {
    char buf[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof(buf));
    return Endpoint{buf, ntohs(addr.sin_port)};
}

std::string os_error(const std::string& what) { return what + ": " + std::strerror(errno); }

}  // namespace

UdpSocket UdpSocket::bind(const std::string& host, std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw IoError(os_error("socket"));
    const sockaddr_in addr = to_sockaddr(Endpoint{host, port});
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string msg = os_error("bind " + host + ":" + std::to_string(port));
        ::close(fd);
        throw IoError(msg);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    return UdpSocket(fd, from_sockaddr(bound));
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept : fd_(other.fd_), local_(std::move(other.local_)) { other.fd_ = -1; }

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = other.fd_;
        local_ = std::move(other.local_);
        other.fd_ = -1;
    }
    return *this;
}

UdpSocket::~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
}

void UdpSocket::send(const Endpoint& to, ByteView data) {
    if (data.size() > kMaxDatagram) throw ParameterError("datagram larger than 65507 octets");
    const sockaddr_in addr = to_sockaddr(to);
    if (::sendto(fd_, data.data(), data.size(), 0, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) < 0) {
        throw IoError(os_error("sendto " + to.str()));
    }
}

std::optional<Datagram> UdpSocket::recv(Millis timeout) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<Millis::rep>(timeout.count(), 0)));
    if (ready < 0) {
        if (errno == EINTR) return std::nullopt;
        throw IoError(os_error("poll"));
    }
    if (ready == 0) return std::nullopt;
    Bytes buf(kMaxDatagram);
    sockaddr_in from{};
    socklen_t len = sizeof(from);
    const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) return std::nullopt;
        throw IoError(os_error("recvfrom"));
    }
    buf.resize(static_cast<std::size_t>(n));
    return Datagram{from_sockaddr(from), std::move(buf)};
}

Nanos DelayModel::sample(Rng& rng) const {
    if (hi <= lo) return lo;
    const auto span = static_cast<std::uint64_t>((hi - lo).count()) + 1;
    return lo + Nanos(static_cast<Nanos::rep>(rng.below(span)));
}

void ChannelModel::validate() const {
    for (double r : {loss_rate, corrupt_rate, duplicate_rate}) {
        if (!(r >= 0.0 && r <= 1.0)) throw ParameterError("channel probabilities must lie in [0, 1]");
    }
    if (delay.lo < Nanos(0) || delay.hi < delay.lo) throw ParameterError("channel delay range is invalid");
}

std::string trace_to_json_lines(const Trace& trace) {
    std::string out;
    for (const auto& e : trace) {
        nlohmann::json j;
        j["t"] = static_cast<double>(e.t.count()) / 1e6;
        j["direction"] = e.direction;
        j["kind"] = e.kind;
        j["seq"] = e.seq;
        j["event"] = e.event;
        out += j.dump();
        out += '\n';
    }
    return out;
}

SimNetwork::SimNetwork(ChannelModel model, std::vector<ScriptedEvent> script, Describer describer)
    : model_(model), rng_(Rng::from_seed(model.seed)), describer_(std::move(describer)) {
    model_.validate();
    for (const auto& e : script) script_[e.index] = e.action;
}

Endpoint SimNetwork::bind(const std::string& host, std::uint16_t port, Agent* owner) {
    if (port == 0) {
        do {
            port = next_port_++;
            if (next_port_ == 0) next_port_ = 49152;
        } while (bindings_.contains(Endpoint{host, port}));
    }
    Endpoint ep{host, port};
    if (bindings_.contains(ep)) throw IoError("address in use: " + ep.str());
    bindings_[ep].owner = owner;
    return ep;
}

void SimNetwork::unbind(const Endpoint& endpoint) { bindings_.erase(endpoint); }

void SimNetwork::record(const Endpoint& from, const Endpoint& to, const std::string& event, ByteView data) {
    TraceEntry entry{now_, from.str() + "->" + to.str(), "raw", -1, event};
    if (describer_ && !data.empty()) {
        auto [kind, seq] = describer_(data);
        entry.kind = std::move(kind);
        entry.seq = seq;
    }
    trace_.push_back(std::move(entry));
}

void SimNetwork::note(const std::string& direction, const std::string& event, ByteView data) {
    TraceEntry entry{now_, direction, "note", -1, event};
    if (describer_ && !data.empty()) {
        auto [kind, seq] = describer_(data);
        entry.kind = std::move(kind);
        entry.seq = seq;
    }
    trace_.push_back(std::move(entry));
}

void SimNetwork::send(const Endpoint& from, const Endpoint& to, ByteView data) {
    if (data.size() > kMaxDatagram) throw ParameterError("datagram larger than 65507 octets");
    const std::size_t index = sent_index_++;
    ++stats_.sent;
    record(from, to, "send", data);
    if (tap_) tap_(from, to, data);

    // Every random draw happens for every datagram so that scripted events
    // do not shift the random stream for later datagrams.
    const bool rand_lost = rng_.uniform01() < model_.loss_rate;
    const bool rand_corrupt = rng_.uniform01() < model_.corrupt_rate;
    const bool rand_dup = rng_.uniform01() < model_.duplicate_rate;
    const std::uint64_t bit_draw = rng_.next_u64();

    bool lost = rand_lost, corrupt = rand_corrupt, dup = rand_dup, tamper = false;
    if (auto it = script_.find(index); it != script_.end()) {
        lost = it->second == ScriptAction::Drop;
        corrupt = it->second == ScriptAction::Corrupt;
        dup = it->second == ScriptAction::Duplicate;
        tamper = it->second == ScriptAction::Tamper;
    }

    if (lost) {
        ++stats_.lost;
        record(from, to, "drop", data);
        return;
    }
    Bytes payload(data.begin(), data.end());
    const std::uint32_t checksum = arq::crc32(payload);
    std::uint32_t carried = checksum;
    if ((corrupt || tamper) && !payload.empty()) {
        const std::uint64_t bit = bit_draw % (payload.size() * 8);
        payload[bit / 8] ^= static_cast<std::uint8_t>(1U << (bit % 8));
        ++stats_.corrupted;
        if (tamper) carried = arq::crc32(payload);
        record(from, to, tamper ? "tamper" : "corrupt", payload);
    }
    if (dup) {
        ++stats_.duplicated;
        record(from, to, "duplicate", payload);
        schedule(from, to, payload, carried);
    }
    schedule(from, to, std::move(payload), carried);
}

void SimNetwork::schedule(const Endpoint& from, const Endpoint& to, Bytes data, std::uint32_t checksum) {
    const Nanos delay = model_.delay.sample(rng_);
    in_flight_.push(InFlight{now_ + delay, order_++, from, to, std::move(data), checksum});
}

std::optional<Instant> SimNetwork::next_delivery_time() const {
    if (in_flight_.empty()) return std::nullopt;
    return in_flight_.top().due;
}

void SimNetwork::deliver(InFlight item) {
    if (model_.integrity_check && arq::crc32(item.data) != item.checksum) {
        ++stats_.checksum_drops;
        record(item.from, item.to, "checksum-drop", item.data);
        return;
    }
    auto it = bindings_.find(item.to);
    if (it == bindings_.end()) {
        record(item.from, item.to, "unreachable", item.data);
        return;
    }
    ++stats_.delivered;
    record(item.from, item.to, "deliver", item.data);
    Datagram dgram{item.from, std::move(item.data)};
    if (it->second.owner != nullptr) {
        it->second.owner->on_datagram(*this, item.to, dgram);
    } else {
        it->second.mailbox.push_back(std::move(dgram));
    }
}

void SimNetwork::advance_to(Instant t) {
    while (!in_flight_.empty() && in_flight_.top().due <= t) {
        InFlight item = in_flight_.top();
        in_flight_.pop();
        if (item.due > now_) now_ = item.due;
        deliver(std::move(item));
    }
    if (t > now_) now_ = t;
}

std::optional<Datagram> SimNetwork::recv(const Endpoint& at, Millis timeout) {
    const Instant deadline = now_ + timeout;
    for (;;) {
        auto it = bindings_.find(at);
        if (it == bindings_.end()) throw ParameterError("recv on unbound endpoint " + at.str());
        if (!it->second.mailbox.empty()) {
            Datagram d = std::move(it->second.mailbox.front());
            it->second.mailbox.pop_front();
            return d;
        }
        auto next = next_delivery_time();
        if (!next || *next > deadline) {
            advance_to(deadline);
            return std::nullopt;
        }
        advance_to(*next);
    }
}

std::vector<ScriptedEvent> SimNetwork::unused_script() const {
    std::vector<ScriptedEvent> out;
    for (const auto& [index, action] : script_) {
        if (index >= sent_index_) out.push_back(ScriptedEvent{index, action});
    }
    return out;
}

void run_agents(SimNetwork& net, const std::vector<Agent*>& agents, ScenarioOptions options) {
    for (Agent* a : agents) a->start(net);
    for (;;) {
        bool all_finished = true;
        std::optional<Instant> next = net.next_delivery_time();
        for (Agent* a : agents) {
            if (!a->finished()) all_finished = false;
            if (auto d = a->deadline(); d && (!next || *d < *next)) next = *d;
        }
        if (all_finished || !next) break;
        if (*next > options.time_limit) break;
        net.advance_to(std::max(*next, net.now()));
        for (Agent* a : agents) {
            if (auto d = a->deadline(); d && *d <= net.now()) a->on_timer(net);
        }
    }
}

Trace run_scenario(const std::vector<ScriptedEvent>& script, const std::vector<Agent*>& agents,
                   const ChannelModel& model, Describer describer, ScenarioOptions options) {
    SimNetwork net(model, script, std::move(describer));
    run_agents(net, agents, options);
    if (!net.unused_script().empty()) {
        throw ParameterError("scenario script references datagram index " +
                             std::to_string(net.unused_script().front().index) + " but only " +
                             std::to_string(net.datagrams_sent()) + " datagrams were sent");
    }
    return net.trace();
}

}  // namespace tftps::net
