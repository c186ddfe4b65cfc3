#pragma once

#include <vector>

#include "tftps/ssw_arq.hpp"
#include "tftps/transport.hpp"

namespace tftps::net {

/// Classifies demo-format ARQ frames as ("DATA"|"ACK", seq).
Describer arq_frame_describer();

/// Sends `payloads` in order using the demo frame format.
class ArqSenderAgent : public Agent {
public:
    ArqSenderAgent(arq::Config config, std::vector<Bytes> payloads, Endpoint self, Endpoint peer);

    void start(SimNetwork& net) override;
    void on_datagram(SimNetwork& net, const Endpoint& local, const Datagram& dgram) override;
    void on_timer(SimNetwork& net) override;
    std::optional<Instant> deadline() const override { return state_.deadline; }
    bool finished() const override { return state_.done || state_.failed; }

    bool done() const { return state_.done; }
    bool failed() const { return state_.failed; }
    const arq::SenderState& state() const { return state_; }
    std::size_t data_transmissions() const { return transmissions_; }

private:
    void apply(SimNetwork& net, const arq::SenderEvent& event);

    arq::Config config_;
    std::vector<Bytes> payloads_;
    Endpoint self_, peer_;
    arq::SenderState state_;
    std::size_t transmissions_ = 0;
};

class ArqReceiverAgent : public Agent {
public:
    ArqReceiverAgent(arq::Config config, Endpoint self);

    void start(SimNetwork& net) override;
    void on_datagram(SimNetwork& net, const Endpoint& local, const Datagram& dgram) override;
    void on_timer(SimNetwork&) override {}
    std::optional<Instant> deadline() const override { return std::nullopt; }
    bool finished() const override { return true; }

    const std::vector<Bytes>& delivered() const { return delivered_; }
    const arq::ReceiverState& state() const { return state_; }

private:
    arq::Config config_;
    Endpoint self_;
    arq::ReceiverState state_;
    std::vector<Bytes> delivered_;
};

}  // namespace tftps::net
