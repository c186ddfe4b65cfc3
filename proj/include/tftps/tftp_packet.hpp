#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tftps/bytes.hpp"

namespace tftps::tftp {

inline constexpr std::size_t kBlockSize = 512;

enum class Opcode : std::uint16_t { Rrq = 1, Wrq = 2, Data = 3, Ack = 4, Error = 5, Oack = 6 };

/// RFC 1350 codes 0-7, RFC 2347 code 8, and 9 for MAC or decryption failure.
enum class ErrorCode : std::uint16_t {
    NotDefined = 0,
    FileNotFound = 1,
    AccessViolation = 2,
    DiskFull = 3,
    IllegalOperation = 4,
    UnknownTid = 5,
    FileExists = 6,
    NoSuchUser = 7,
    OptionRefused = 8,
    SecurityFailure = 9,
};

using Options = std::vector<std::pair<std::string, std::string>>;

struct Request {
    Opcode opcode = Opcode::Rrq;  // Rrq or Wrq
    std::string filename;
    std::string mode = "octet";
    Options options;
    friend bool operator==(const Request&, const Request&) = default;
};

struct Data {
    std::uint16_t block = 0;
    Bytes data;
    friend bool operator==(const Data&, const Data&) = default;
};

struct Ack {
    std::uint16_t block = 0;
    friend bool operator==(const Ack&, const Ack&) = default;
};

struct ErrorPacket {
    std::uint16_t code = 0;
    std::string message;
    friend bool operator==(const ErrorPacket&, const ErrorPacket&) = default;
};

struct Oack {
    Options options;
    friend bool operator==(const Oack&, const Oack&) = default;
};

using Packet = std::variant<Request, Data, Ack, ErrorPacket, Oack>;

ErrorPacket make_error(ErrorCode code, std::string message);

/// RFC 1350 layout; options follow as NUL-terminated name/value pairs.
/// Throws ParameterError for strings containing NUL or DATA over 512 octets.
Bytes encode_packet(const Packet& packet);

/// Throws MalformedPacket on anything that is not a well-formed packet.
/// Mode and option names are lower-cased.
Packet decode_packet(ByteView wire);

Opcode opcode_of(const Packet& packet);
const char* opcode_name(Opcode op);

/// Parsed security options. `valid` is false when sec is present but the
/// other fields are missing or malformed.
struct SecurityOptions {
    std::optional<std::string> sec;
    std::uint32_t keyblocks = 0;
    std::string kid;
    bool valid = true;

    bool enabled() const { return sec.has_value(); }
    friend bool operator==(const SecurityOptions&, const SecurityOptions&) = default;
};

inline constexpr const char* kSchemeCs1 = "cs1";

SecurityOptions parse_security_options(const Options& options);
/// sec, keyblocks, kid in that order; empty when security is off.
Options to_options(const SecurityOptions& sec);

struct ServerPolicy {
    bool require_security = false;
    std::vector<std::string> schemes{kSchemeCs1};
};

/**
 * Server-side option negotiation. Returns the options to echo in an OACK
 * (empty: reply without OACK) or the ERROR to send instead: 8 for an
 * unsupported scheme or bad parameters, 9 for a plain request under a
 * require-security policy. Unknown options are dropped.
 */
std::variant<Options, ErrorPacket> negotiate(const Options& requested, const ServerPolicy& policy);

}  // namespace tftps::tftp
