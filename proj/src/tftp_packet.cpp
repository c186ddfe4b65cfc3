#include "tftps/tftp_packet.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "tftps/errors.hpp"

namespace tftps::tftp {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

void put_string(Bytes& out, const std::string& s) {
    if (s.find('\0') != std::string::npos) throw ParameterError("tftp strings may not contain NUL");
    out.insert(out.end(), s.begin(), s.end());
    out.push_back(0);
}

void put_options(Bytes& out, const Options& options) {
    for (const auto& [name, value] : options) {
        put_string(out, name);
        put_string(out, value);
    }
}

class Reader {
public:
    explicit Reader(ByteView wire) : wire_(wire) {}

    bool at_end() const { return at_ == wire_.size(); }

    std::string string(const char* what) {
        const auto begin = wire_.begin() + static_cast<std::ptrdiff_t>(at_);
        const auto nul = std::find(begin, wire_.end(), std::uint8_t{0});
        if (nul == wire_.end()) throw MalformedPacket(std::string("unterminated ") + what);
        std::string s(begin, nul);
        at_ = static_cast<std::size_t>(nul - wire_.begin()) + 1;
        return s;
    }

    Options options() {
        Options out;
        while (!at_end()) {
            std::string name = lower(string("option name"));
            if (name.empty()) throw MalformedPacket("empty option name");
            if (at_end()) throw MalformedPacket("option without value");
            std::string value = string("option value");
            out.emplace_back(std::move(name), std::move(value));
        }
        return out;
    }

private:
    ByteView wire_;
    std::size_t at_ = 2;
};

}  // namespace

ErrorPacket make_error(ErrorCode code, std::string message) {
    return ErrorPacket{static_cast<std::uint16_t>(code), std::move(message)};
}

Opcode opcode_of(const Packet& packet) {
    return std::visit(
        [](const auto& p) -> Opcode {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Request>) return p.opcode;
            else if constexpr (std::is_same_v<T, Data>) return Opcode::Data;
            else if constexpr (std::is_same_v<T, Ack>) return Opcode::Ack;
            else if constexpr (std::is_same_v<T, ErrorPacket>) return Opcode::Error;
            else return Opcode::Oack;
        },
        packet);
}

const char* opcode_name(Opcode op) {
    switch (op) {
        case Opcode::Rrq: return "RRQ";
        case Opcode::Wrq: return "WRQ";
        case Opcode::Data: return "DATA";
        case Opcode::Ack: return "ACK";
        case Opcode::Error: return "ERROR";
        case Opcode::Oack: return "OACK";
    }
    return "?";
}

Bytes encode_packet(const Packet& packet) {
    Bytes out;
    put_u16(out, static_cast<std::uint16_t>(opcode_of(packet)));
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Request>) {
                if (p.opcode != Opcode::Rrq && p.opcode != Opcode::Wrq) throw ParameterError("request opcode must be RRQ or WRQ");
                if (p.filename.empty()) throw ParameterError("request filename is empty");
                put_string(out, p.filename);
                put_string(out, p.mode);
                put_options(out, p.options);
            } else if constexpr (std::is_same_v<T, Data>) {
                if (p.data.size() > kBlockSize) throw ParameterError("DATA payload exceeds 512 octets");
                put_u16(out, p.block);
                append(out, p.data);
            } else if constexpr (std::is_same_v<T, Ack>) {
                put_u16(out, p.block);
            } else if constexpr (std::is_same_v<T, ErrorPacket>) {
                put_u16(out, p.code);
                put_string(out, p.message);
            } else {
                put_options(out, p.options);
            }
        },
        packet);
    return out;
}

Packet decode_packet(ByteView wire) {
    if (wire.size() < 2) throw MalformedPacket("packet shorter than opcode");
    const std::uint16_t op = get_u16(wire, 0);
    Reader r(wire);
    switch (static_cast<Opcode>(op)) {
        case Opcode::Rrq:
        case Opcode::Wrq: {
            Request req;
            req.opcode = static_cast<Opcode>(op);
            req.filename = r.string("filename");
            if (req.filename.empty()) throw MalformedPacket("empty filename");
            if (r.at_end()) throw MalformedPacket("missing mode");
            req.mode = lower(r.string("mode"));
            if (req.mode != "octet" && req.mode != "netascii" && req.mode != "mail") {
                throw MalformedPacket("unknown transfer mode '" + req.mode + "'");
            }
            req.options = r.options();
            return req;
        }
        case Opcode::Data: {
            if (wire.size() < 4) throw MalformedPacket("DATA shorter than header");
            if (wire.size() - 4 > kBlockSize) throw MalformedPacket("DATA payload exceeds 512 octets");
            return Data{get_u16(wire, 2), Bytes(wire.begin() + 4, wire.end())};
        }
        case Opcode::Ack: {
            if (wire.size() != 4) throw MalformedPacket("ACK must be exactly 4 octets");
            return Ack{get_u16(wire, 2)};
        }
        case Opcode::Error: {
            if (wire.size() < 5) throw MalformedPacket("ERROR shorter than header");
            ErrorPacket e;
            e.code = get_u16(wire, 2);
            // The reader starts two octets in, which here skips the error code.
            Reader msg(wire.subspan(2));
            e.message = msg.string("error message");
            if (!msg.at_end()) throw MalformedPacket("trailing bytes after ERROR message");
            return e;
        }
        case Opcode::Oack: {
            Oack o;
            o.options = r.options();
            return o;
        }
    }
    throw MalformedPacket("unknown opcode " + std::to_string(op));
}

SecurityOptions parse_security_options(const Options& options) {
    SecurityOptions sec;
    std::optional<std::string> keyblocks, kid;
    for (const auto& [name, value] : options) {
        if (name == "sec") sec.sec = value;
        else if (name == "keyblocks") keyblocks = value;
        else if (name == "kid") kid = value;
    }
    if (!sec.sec) return SecurityOptions{};
    if (!keyblocks || !kid || kid->empty()) {
        sec.valid = false;
        return sec;
    }
    std::uint32_t n = 0;
    const auto* begin = keyblocks->data();
    const auto* end = begin + keyblocks->size();
    auto [ptr, ec] = std::from_chars(begin, end, n);
    if (ec != std::errc() || ptr != end || n < 1) {
        sec.valid = false;
        return sec;
    }
    sec.keyblocks = n;
    sec.kid = *kid;
    return sec;
}

Options to_options(const SecurityOptions& sec) {
    if (!sec.sec) return {};
    return {{"sec", *sec.sec}, {"keyblocks", std::to_string(sec.keyblocks)}, {"kid", sec.kid}};
}

std::variant<Options, ErrorPacket> negotiate(const Options& requested, const ServerPolicy& policy) {
    const SecurityOptions sec = parse_security_options(requested);
    if (!sec.enabled()) {
        if (policy.require_security) return make_error(ErrorCode::SecurityFailure, "server requires sec=cs1");
        return Options{};
    }
    if (std::find(policy.schemes.begin(), policy.schemes.end(), *sec.sec) == policy.schemes.end()) {
        return make_error(ErrorCode::OptionRefused, "unsupported security scheme '" + *sec.sec + "'");
    }
    if (!sec.valid) return make_error(ErrorCode::OptionRefused, "sec requires keyblocks >= 1 and a kid");
    return to_options(sec);
}

}  // namespace tftps::tftp
