#include "tftps/arq_agents.hpp"

#include "tftps/errors.hpp"

namespace tftps::net {

Describer arq_frame_describer() {
    return [](ByteView data) -> std::pair<std::string, int> {
        try {
            const arq::Frame f = arq::decode_frame(data);
            return {f.kind == arq::FrameKind::Ack ? "ACK" : "DATA", f.seq};
        } catch (const MalformedPacket&) {
            return {"garbage", -1};
        }
    };
}

ArqSenderAgent::ArqSenderAgent(arq::Config config, std::vector<Bytes> payloads, Endpoint self, Endpoint peer)
    : config_(config), payloads_(std::move(payloads)), self_(std::move(self)), peer_(std::move(peer)),
      state_(arq::initial_sender(config_)) {
    if (payloads_.empty()) throw ParameterError("ArqSenderAgent: nothing to send");
}

void ArqSenderAgent::apply(SimNetwork& net, const arq::SenderEvent& event) {
    auto step = arq::sender_step(config_, std::move(state_), event, net.now());
    state_ = std::move(step.state);
    for (const auto& a : step.actions) {
        if (const auto* emit = std::get_if<arq::action::EmitFrame>(&a)) {
            ++transmissions_;
            net.send(self_, peer_, arq::encode_frame(emit->frame));
        } else if (std::holds_alternative<arq::action::Done>(a)) {
            net.note(self_.str(), "done");
        } else {
            net.note(self_.str(), "fail");
        }
    }
}

void ArqSenderAgent::start(SimNetwork& net) {
    net.bind(self_.host, self_.port, this);
    for (std::size_t i = 0; i < payloads_.size(); ++i) {
        apply(net, arq::sender_event::Send{payloads_[i], i + 1 == payloads_.size()});
    }
}

void ArqSenderAgent::on_datagram(SimNetwork& net, const Endpoint&, const Datagram& dgram) {
    arq::Frame f;
    try {
        f = arq::decode_frame(dgram.data);
    } catch (const MalformedPacket&) {
        apply(net, arq::sender_event::CorruptAck{});
        return;
    }
    if (f.kind != arq::FrameKind::Ack || !arq::frame_valid(f)) {
        apply(net, arq::sender_event::CorruptAck{});
        return;
    }
    apply(net, arq::sender_event::AckReceived{f.seq});
}

void ArqSenderAgent::on_timer(SimNetwork& net) {
    net.note(self_.str(), "timeout");
    apply(net, arq::sender_event::Timeout{});
}

ArqReceiverAgent::ArqReceiverAgent(arq::Config config, Endpoint self)
    : config_(config), self_(std::move(self)), state_(arq::initial_receiver(config_)) {}

void ArqReceiverAgent::start(SimNetwork& net) { net.bind(self_.host, self_.port, this); }

void ArqReceiverAgent::on_datagram(SimNetwork& net, const Endpoint&, const Datagram& dgram) {
    arq::Frame f;
    try {
        f = arq::decode_frame(dgram.data);
    } catch (const MalformedPacket&) {
        ++state_.dropped;
        net.note(self_.str(), "checksum-drop");
        return;
    }
    auto step = arq::receiver_step(config_, std::move(state_), f);
    state_ = std::move(step.state);
    for (const auto& a : step.actions) {
        if (const auto* emit = std::get_if<arq::action::EmitFrame>(&a)) {
            net.send(self_, dgram.from, arq::encode_frame(emit->frame));
        } else if (const auto* d = std::get_if<arq::action::Deliver>(&a)) {
            delivered_.push_back(d->payload);
            net.note(self_.str(), "deliver-up");
        } else {
            net.note(self_.str(), "checksum-drop");
        }
    }
}

}  // namespace tftps::net
