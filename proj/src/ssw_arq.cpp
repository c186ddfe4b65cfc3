#include "tftps/ssw_arq.hpp"

#include <zlib.h>

#include "tftps/errors.hpp"

namespace tftps::arq {

std::uint32_t crc32(ByteView data) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes a uInt length; feed very large buffers in pieces.
    std::size_t at = 0;
    while (at < data.size()) {
        const auto piece = static_cast<uInt>(std::min<std::size_t>(data.size() - at, 1U << 30));
        crc = ::crc32(crc, data.data() + at, piece);
        at += piece;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t frame_checksum(std::uint16_t seq, FrameKind kind, ByteView payload) {
    Bytes covered;
    covered.reserve(3 + payload.size());
    put_u16(covered, seq);
    covered.push_back(static_cast<std::uint8_t>(kind));
    append(covered, payload);
    return crc32(covered);
}

Frame make_frame(std::uint16_t seq, FrameKind kind, Bytes payload) {
    Frame f{seq, kind, std::move(payload), 0};
    f.checksum = frame_checksum(f.seq, f.kind, f.payload);
    return f;
}

bool frame_valid(const Frame& frame) { return frame.checksum == frame_checksum(frame.seq, frame.kind, frame.payload); }

Bytes encode_frame(const Frame& frame) {
    if (frame.payload.size() > 0xFFFF) throw ParameterError("encode_frame: payload longer than 65535");
    Bytes out;
    out.reserve(9 + frame.payload.size());
    out.push_back(static_cast<std::uint8_t>(frame.kind));
    put_u16(out, frame.seq);
    put_u16(out, static_cast<std::uint16_t>(frame.payload.size()));
    append(out, frame.payload);
    put_u32(out, frame.checksum);
    return out;
}

Frame decode_frame(ByteView wire) {
    if (wire.size() < 9) throw MalformedPacket("frame: shorter than header + crc");
    Frame f;
    // Unknown kinds are kept so the checksum, not the parser, rejects them.
    f.kind = static_cast<FrameKind>(wire[0]);
    f.seq = get_u16(wire, 1);
    const std::size_t len = get_u16(wire, 3);
    if (wire.size() != 9 + len) throw MalformedPacket("frame: length field disagrees with datagram size");
    f.payload.assign(wire.begin() + 5, wire.begin() + 5 + static_cast<std::ptrdiff_t>(len));
    f.checksum = get_u32(wire, 5 + len);
    return f;
}

ChunkSet chunk_payload(ByteView data, std::size_t max_payload) {
    if (max_payload == 0) throw ParameterError("chunk_payload: max_payload must be >= 1");
    ChunkSet set;
    set.original_length = data.size();
    for (std::size_t at = 0; at < data.size(); at += max_payload) {
        const std::size_t n = std::min(max_payload, data.size() - at);
        set.chunks.emplace_back(data.begin() + static_cast<std::ptrdiff_t>(at),
                                data.begin() + static_cast<std::ptrdiff_t>(at + n));
    }
    if (set.chunks.empty()) set.chunks.emplace_back();
    set.total_chunks = set.chunks.size();
    return set;
}

Bytes reassemble(const ChunkSet& set) {
    if (set.chunks.size() != set.total_chunks) throw ParameterError("reassemble: chunk count mismatch");
    Bytes out;
    out.reserve(set.original_length);
    for (const auto& c : set.chunks) append(out, c);
    if (out.size() != set.original_length) throw ParameterError("reassemble: length mismatch");
    return out;
}

std::uint16_t Config::next(std::uint16_t seq) const {
    const std::uint32_t modulus = 1U << seq_bits;
    return static_cast<std::uint16_t>((static_cast<std::uint32_t>(seq) + 1) % modulus);
}

std::uint16_t Config::prev(std::uint16_t seq) const {
    const std::uint32_t modulus = 1U << seq_bits;
    return static_cast<std::uint16_t>((static_cast<std::uint32_t>(seq) + modulus - 1) % modulus);
}

SenderState initial_sender(const Config& config) {
    if (config.seq_bits < 1 || config.seq_bits > 16) throw ParameterError("arq: seq_bits must be in [1, 16]");
    SenderState s;
    s.current_seq = config.initial_seq;
    return s;
}

namespace {

void emit_next(const Config& config, SenderState& s, std::vector<SenderAction>& actions, Instant now) {
    if (s.outstanding || s.queue.empty()) return;
    auto [payload, final] = std::move(s.queue.front());
    s.queue.pop_front();
    s.outstanding = make_frame(s.current_seq, FrameKind::Data, std::move(payload));
    s.outstanding_is_final = final;
    s.retries = 0;
    s.deadline = now + config.timeout;
    actions.emplace_back(action::EmitFrame{*s.outstanding});
}

}  // namespace

Step<SenderState, SenderAction> sender_step(const Config& config, SenderState s, const SenderEvent& event,
                                            Instant now) {
    std::vector<SenderAction> actions;
    if (s.done || s.failed) return {std::move(s), std::move(actions)};

    if (const auto* send = std::get_if<sender_event::Send>(&event)) {
        if (send->payload.size() > config.max_payload) throw ParameterError("arq: payload exceeds max_payload");
        s.queue.emplace_back(send->payload, send->final);
        emit_next(config, s, actions, now);
    } else if (const auto* ack = std::get_if<sender_event::AckReceived>(&event)) {
        if (s.outstanding && ack->seq == s.outstanding->seq) {
            const bool was_final = s.outstanding_is_final;
            s.outstanding.reset();
            s.outstanding_is_final = false;
            s.deadline.reset();
            s.current_seq = config.next(s.current_seq);
            if (was_final) {
                s.done = true;
                actions.emplace_back(action::Done{});
            } else {
                emit_next(config, s, actions, now);
            }
        }
    } else if (std::holds_alternative<sender_event::Timeout>(event)) {
        if (s.outstanding) {
            if (s.retries >= config.max_retries) {
                s.failed = true;
                s.deadline.reset();
                actions.emplace_back(action::Fail{});
            } else {
                ++s.retries;
                ++s.retransmissions;
                s.deadline = now + config.timeout;
                actions.emplace_back(action::EmitFrame{*s.outstanding});
            }
        }
    }
    // CorruptAck: treated as lost.
    return {std::move(s), std::move(actions)};
}

ReceiverState initial_receiver(const Config& config) {
    if (config.seq_bits < 1 || config.seq_bits > 16) throw ParameterError("arq: seq_bits must be in [1, 16]");
    ReceiverState r;
    r.expected_seq = config.initial_seq;
    return r;
}

Step<ReceiverState, ReceiverAction> receiver_step(const Config& config, ReceiverState r, const Frame& frame) {
    std::vector<ReceiverAction> actions;
    if (frame.kind != FrameKind::Data || !frame_valid(frame)) {
        ++r.dropped;
        actions.emplace_back(action::Drop{});
    } else if (frame.seq == r.expected_seq) {
        actions.emplace_back(action::Deliver{frame.seq, frame.payload});
        actions.emplace_back(action::EmitFrame{make_frame(frame.seq, FrameKind::Ack, {})});
        r.last_accepted = frame.seq;
        r.expected_seq = config.next(frame.seq);
        ++r.delivered;
    } else if (r.last_accepted && frame.seq == *r.last_accepted) {
        ++r.duplicates;
        actions.emplace_back(action::EmitFrame{make_frame(frame.seq, FrameKind::Ack, {})});
    } else {
        ++r.dropped;
        actions.emplace_back(action::Drop{});
    }
    return {std::move(r), std::move(actions)};
}

}  // namespace tftps::arq
