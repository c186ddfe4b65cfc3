#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tftps/tftp_session.hpp"
#include "tftps/transport.hpp"

namespace tftps::tftp {

/// Classifies TFTP datagrams for traces as (opcode name, block or -1).
net::Describer tftp_describer();

/// Drives one client session on a SimNetwork.
class SimClientAgent : public net::Agent {
public:
    SimClientAgent(TransferSession session, std::string host);

    void start(net::SimNetwork& net) override;
    void on_datagram(net::SimNetwork& net, const net::Endpoint& local, const net::Datagram& dgram) override;
    void on_timer(net::SimNetwork& net) override;
    std::optional<Instant> deadline() const override { return session_.deadline(); }
    bool finished() const override { return session_.finished(); }

    const TransferSession& session() const { return session_; }
    const net::Endpoint& local() const { return self_; }

private:
    void emit(net::SimNetwork& net, const std::vector<Outgoing>& out);

    TransferSession session_;
    std::string host_;
    net::Endpoint self_;
};

/// Listens on `host:port` of a SimNetwork and runs one session per request,
/// each on its own ephemeral endpoint.
class SimServerAgent : public net::Agent {
public:
    SimServerAgent(std::string host, std::uint16_t port, const KeyStore& keys, FileStore& files, SessionConfig config,
                   Rng rng);

    void start(net::SimNetwork& net) override;
    void on_datagram(net::SimNetwork& net, const net::Endpoint& local, const net::Datagram& dgram) override;
    void on_timer(net::SimNetwork& net) override;
    std::optional<Instant> deadline() const override;
    /// True once every session it started has finished.
    bool finished() const override;

    /// Aborts every unfinished session with ERROR 0.
    void shutdown(net::SimNetwork& net, const std::string& message = "server shutting down");

    const net::Endpoint& listen_endpoint() const { return listen_; }
    std::vector<SessionReport> reports() const;
    std::size_t session_count() const { return sessions_.size(); }
    std::vector<net::Endpoint> session_endpoints() const;

private:
    struct Entry {
        net::Endpoint peer;
        std::unique_ptr<TransferSession> session;
    };

    void emit(net::SimNetwork& net, const net::Endpoint& from, const std::vector<Outgoing>& out);
    void accept(net::SimNetwork& net, const net::Datagram& dgram);

    std::string host_;
    std::uint16_t port_;
    const KeyStore& keys_;
    FileStore& files_;
    SessionConfig config_;
    Rng rng_;
    net::Endpoint listen_;
    std::map<net::Endpoint, Entry> sessions_;
};

/// Runs a client session over a real UDP socket until it finishes.
SessionReport run_udp_client(TransferSession& session, const std::string& bind_host = "0.0.0.0");

/**
 * Real UDP server: the listening socket accepts RRQ/WRQ and every request
 * gets a thread with its own ephemeral socket. serve() returns after `stop`
 * becomes true, once each session has been aborted with ERROR 0 and joined.
 */
class UdpServer {
public:
    using ReportSink = std::function<void(const SessionReport&)>;

    UdpServer(const std::string& host, std::uint16_t port, const KeyStore& keys, FileStore& files,
              SessionConfig config, ReportSink on_report = {});
    ~UdpServer();

    net::Endpoint local() const { return socket_.local(); }
    void serve(const std::atomic<bool>& stop);

private:
    void run_session(Request request, net::Endpoint peer, const std::atomic<bool>& stop);

    std::string host_;
    net::UdpSocket socket_;
    const KeyStore& keys_;
    FileStore& files_;
    SessionConfig config_;
    ReportSink on_report_;
    std::mutex mutex_;
    std::set<net::Endpoint> active_;
    std::vector<std::thread> threads_;
};

}  // namespace tftps::tftp
