#include "tftps/tftp_endpoints.hpp"

#include <algorithm>

#include "tftps/errors.hpp"

namespace tftps::tftp {

net::Describer tftp_describer() {
    return [](ByteView data) -> std::pair<std::string, int> {
        try {
            const Packet p = decode_packet(data);
            int seq = -1;
            if (const auto* d = std::get_if<Data>(&p)) seq = d->block;
            else if (const auto* a = std::get_if<Ack>(&p)) seq = a->block;
            else if (const auto* e = std::get_if<ErrorPacket>(&p)) seq = e->code;
            return {opcode_name(opcode_of(p)), seq};
        } catch (const MalformedPacket&) {
            return {"garbage", -1};
        }
    };
}

// ------------------------------------------------------------ sim client

SimClientAgent::SimClientAgent(TransferSession session, std::string host)
    : session_(std::move(session)), host_(std::move(host)) {}

void SimClientAgent::emit(net::SimNetwork& net, const std::vector<Outgoing>& out) {
    for (const auto& o : out) net.send(self_, o.to, o.data);
}

void SimClientAgent::start(net::SimNetwork& net) {
    self_ = net.bind(host_, 0, this);
    emit(net, session_.start(net.now()));
}

void SimClientAgent::on_datagram(net::SimNetwork& net, const net::Endpoint&, const net::Datagram& dgram) {
    emit(net, session_.on_datagram(dgram.from, dgram.data, net.now()));
}

void SimClientAgent::on_timer(net::SimNetwork& net) { emit(net, session_.on_timer(net.now())); }

// ------------------------------------------------------------ sim server

SimServerAgent::SimServerAgent(std::string host, std::uint16_t port, const KeyStore& keys, FileStore& files,
                               SessionConfig config, Rng rng)
    : host_(std::move(host)), port_(port), keys_(keys), files_(files), config_(std::move(config)),
      rng_(std::move(rng)) {
    if (!config_.budgets) config_.budgets = std::make_shared<fixed_time::BudgetTable>();
}

void SimServerAgent::start(net::SimNetwork& net) { listen_ = net.bind(host_, port_, this); }

void SimServerAgent::emit(net::SimNetwork& net, const net::Endpoint& from, const std::vector<Outgoing>& out) {
    for (const auto& o : out) net.send(from, o.to, o.data);
}

void SimServerAgent::accept(net::SimNetwork& net, const net::Datagram& dgram) {
    Packet packet;
    try {
        packet = decode_packet(dgram.data);
    } catch (const MalformedPacket& e) {
        net.send(listen_, dgram.from, encode_packet(make_error(ErrorCode::IllegalOperation, e.what())));
        return;
    }
    const auto* request = std::get_if<Request>(&packet);
    if (!request) {
        net.send(listen_, dgram.from,
                 encode_packet(make_error(ErrorCode::IllegalOperation, "expected RRQ or WRQ")));
        return;
    }
    for (const auto& [local, entry] : sessions_) {
        if (entry.peer == dgram.from && !entry.session->finished()) return;
    }
    const net::Endpoint local = net.bind(host_, 0, this);
    auto session = std::make_unique<TransferSession>(
        TransferSession::server(*request, dgram.from, keys_, files_, config_, rng_.fork()));
    auto out = session->start(net.now());
    sessions_.emplace(local, Entry{dgram.from, std::move(session)});
    emit(net, local, out);
}

void SimServerAgent::on_datagram(net::SimNetwork& net, const net::Endpoint& local, const net::Datagram& dgram) {
    if (local == listen_) {
        accept(net, dgram);
        return;
    }
    auto it = sessions_.find(local);
    if (it == sessions_.end()) return;
    emit(net, local, it->second.session->on_datagram(dgram.from, dgram.data, net.now()));
}

void SimServerAgent::on_timer(net::SimNetwork& net) {
    for (auto& [local, entry] : sessions_) {
        const auto d = entry.session->deadline();
        if (d && *d <= net.now()) emit(net, local, entry.session->on_timer(net.now()));
    }
}

std::optional<Instant> SimServerAgent::deadline() const {
    std::optional<Instant> best;
    for (const auto& [local, entry] : sessions_) {
        const auto d = entry.session->deadline();
        if (d && (!best || *d < *best)) best = d;
    }
    return best;
}

bool SimServerAgent::finished() const {
    return std::all_of(sessions_.begin(), sessions_.end(),
                       [](const auto& kv) { return kv.second.session->finished(); });
}

void SimServerAgent::shutdown(net::SimNetwork& net, const std::string& message) {
    for (auto& [local, entry] : sessions_) emit(net, local, entry.session->abort(message, net.now()));
}

std::vector<SessionReport> SimServerAgent::reports() const {
    std::vector<SessionReport> out;
    for (const auto& [local, entry] : sessions_) out.push_back(entry.session->report());
    return out;
}

std::vector<net::Endpoint> SimServerAgent::session_endpoints() const {
    std::vector<net::Endpoint> out;
    for (const auto& [local, entry] : sessions_) out.push_back(local);
    return out;
}

// ------------------------------------------------------------------- UDP

namespace {

Instant monotonic_now() {
    return std::chrono::duration_cast<Instant>(std::chrono::steady_clock::now().time_since_epoch());
}

void send_all(net::UdpSocket& socket, const std::vector<Outgoing>& out) {
    for (const auto& o : out) socket.send(o.to, o.data);
}

void drive(TransferSession& session, net::UdpSocket& socket, const std::atomic<bool>* stop) {
    constexpr Millis kPoll{50};
    send_all(socket, session.start(monotonic_now()));
    while (!session.finished()) {
        if (stop && stop->load()) {
            send_all(socket, session.abort("server shutting down", monotonic_now()));
            break;
        }
        Millis wait = kPoll;
        if (const auto d = session.deadline()) {
            const auto left = std::chrono::ceil<Millis>(*d - monotonic_now());
            wait = std::clamp(left, Millis(0), kPoll);
        }
        if (auto dgram = socket.recv(wait)) {
            send_all(socket, session.on_datagram(dgram->from, dgram->data, monotonic_now()));
        }
        const auto d = session.deadline();
        if (d && monotonic_now() >= *d) send_all(socket, session.on_timer(monotonic_now()));
    }
}

}  // namespace

SessionReport run_udp_client(TransferSession& session, const std::string& bind_host) {
    auto socket = net::UdpSocket::bind(bind_host, 0);
    drive(session, socket, nullptr);
    return session.report();
}

UdpServer::UdpServer(const std::string& host, std::uint16_t port, const KeyStore& keys, FileStore& files,
                     SessionConfig config, ReportSink on_report)
    : host_(host), socket_(net::UdpSocket::bind(host, port)), keys_(keys), files_(files), config_(std::move(config)),
      on_report_(std::move(on_report)) {
    if (!config_.budgets) config_.budgets = std::make_shared<fixed_time::BudgetTable>();
}

UdpServer::~UdpServer() {
    for (auto& t : threads_) {
        if (t.joinable()) t.join();
    }
}

void UdpServer::serve(const std::atomic<bool>& stop) {
    while (!stop.load()) {
        auto dgram = socket_.recv(Millis(100));
        if (!dgram) continue;
        Packet packet;
        try {
            packet = decode_packet(dgram->data);
        } catch (const MalformedPacket& e) {
            socket_.send(dgram->from, encode_packet(make_error(ErrorCode::IllegalOperation, e.what())));
            continue;
        }
        auto* request = std::get_if<Request>(&packet);
        if (!request) {
            socket_.send(dgram->from, encode_packet(make_error(ErrorCode::IllegalOperation, "expected RRQ or WRQ")));
            continue;
        }
        {
            std::lock_guard lock(mutex_);
            if (!active_.insert(dgram->from).second) continue;
        }
        threads_.emplace_back(
            [this, req = std::move(*request), peer = dgram->from, &stop]() mutable { run_session(std::move(req), peer, stop); });
    }
    for (auto& t : threads_) t.join();
    threads_.clear();
}

void UdpServer::run_session(Request request, net::Endpoint peer, const std::atomic<bool>& stop) {
    auto session = TransferSession::server(std::move(request), peer, keys_, files_, config_, Rng::system());
    try {
        auto socket = net::UdpSocket::bind(host_, 0);
        drive(session, socket, &stop);
    } catch (const Error& e) {
        std::vector<Outgoing> ignored = session.abort(e.what(), monotonic_now());
        (void)ignored;
    }
    {
        std::lock_guard lock(mutex_);
        active_.erase(peer);
        if (on_report_) on_report_(session.report());
    }
}

}  // namespace tftps::tftp
