#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <optional>
#include <variant>
#include <vector>

#include "tftps/bytes.hpp"

namespace tftps::arq {

using Millis = std::chrono::milliseconds;
/// Caller-supplied clock reading; only differences matter.
using Instant = std::chrono::nanoseconds;

/// Standard reflected CRC-32 (poly 0xEDB88320, init and xorout 0xFFFFFFFF).
std::uint32_t crc32(ByteView data);

enum class FrameKind : std::uint8_t { Data = 0, Ack = 1 };

struct Frame {
    std::uint16_t seq = 0;
    FrameKind kind = FrameKind::Data;
    Bytes payload;
    std::uint32_t checksum = 0;
    friend bool operator==(const Frame&, const Frame&) = default;
};

/// CRC-32 over seq (u16 BE) || kind || payload.
std::uint32_t frame_checksum(std::uint16_t seq, FrameKind kind, ByteView payload);
Frame make_frame(std::uint16_t seq, FrameKind kind, Bytes payload);
bool frame_valid(const Frame& frame);

/// Demo wire format: kind (1) || seq (2) || length (2) || payload || crc32 (4).
Bytes encode_frame(const Frame& frame);
/// Structural decode only; the checksum is carried through for frame_valid.
/// Throws MalformedPacket on truncation or a length mismatch.
Frame decode_frame(ByteView wire);

struct ChunkSet {
    std::size_t total_chunks = 0;
    std::vector<Bytes> chunks;
    std::size_t original_length = 0;
};

/// ceil(len / max_payload) chunks, at least one (empty input gives a single
/// empty chunk). Throws ParameterError when max_payload is 0.
ChunkSet chunk_payload(ByteView data, std::size_t max_payload);
/// Concatenates in index order; throws ParameterError on a count or length mismatch.
Bytes reassemble(const ChunkSet& set);

struct Config {
    /// 1 for the alternating-bit demo, 16 for TFTP block numbers.
    unsigned seq_bits = 16;
    std::uint16_t initial_seq = 0;
    std::size_t max_payload = 512;
    Millis timeout{500};
    unsigned max_retries = 5;

    std::uint16_t next(std::uint16_t seq) const;
    std::uint16_t prev(std::uint16_t seq) const;
};

struct SenderState {
    std::uint16_t current_seq = 0;
    std::optional<Frame> outstanding;
    /// Payload plus whether it is the last one of the transfer.
    std::deque<std::pair<Bytes, bool>> queue;
    bool outstanding_is_final = false;
    std::optional<Instant> deadline;
    unsigned retries = 0;
    std::uint64_t retransmissions = 0;
    bool done = false;
    bool failed = false;
};

namespace sender_event {
/// Queue a payload; `final` marks the last one of the transfer.
struct Send {
    Bytes payload;
    bool final = false;
};
struct AckReceived {
    std::uint16_t seq = 0;
};
struct Timeout {};
struct CorruptAck {};
}  // namespace sender_event

using SenderEvent = std::variant<sender_event::Send, sender_event::AckReceived, sender_event::Timeout,
                                 sender_event::CorruptAck>;

namespace action {
struct EmitFrame {
    Frame frame;
};
struct Done {};
struct Fail {};
struct Deliver {
    std::uint16_t seq = 0;
    Bytes payload;
};
struct Drop {};
}  // namespace action

using SenderAction = std::variant<action::EmitFrame, action::Done, action::Fail>;
using ReceiverAction = std::variant<action::EmitFrame, action::Deliver, action::Drop>;

template <typename State, typename Action>
struct Step {
    State state;
    std::vector<Action> actions;
};

SenderState initial_sender(const Config& config);

/**
 * Advances the sender by one event at time `now`.
 *
 * At most one DATA frame is ever outstanding. A matching ACK releases the
 * next queued payload (or Done after the final one); a stale ACK changes
 * nothing. Timeout re-emits the outstanding frame bit-for-bit until
 * max_retries retransmissions have been spent, then Fail. Events after Done
 * or Fail are ignored.
 */
Step<SenderState, SenderAction> sender_step(const Config& config, SenderState state, const SenderEvent& event,
                                            Instant now);

struct ReceiverState {
    std::uint16_t expected_seq = 0;
    std::optional<std::uint16_t> last_accepted;
    std::uint64_t delivered = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t dropped = 0;
};

ReceiverState initial_receiver(const Config& config);

/// Bad checksum or non-DATA frame: Drop, no ACK. Previously accepted seq:
/// re-ACK without delivering. Expected seq: Deliver then ACK.
Step<ReceiverState, ReceiverAction> receiver_step(const Config& config, ReceiverState state, const Frame& frame);

}  // namespace tftps::arq
