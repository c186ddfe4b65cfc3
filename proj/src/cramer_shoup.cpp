#include "tftps/cramer_shoup.hpp"

#include <map>
#include <sstream>

#include "tftps/digest.hpp"
#include "tftps/errors.hpp"

namespace tftps::cs {

namespace {

std::size_t bit_length(const BigInt& v) { return mpz_sizeinbase(v.get_mpz_t(), 2); }

BigInt mulmod(const BigInt& a, const BigInt& b, const BigInt& m) {
    BigInt r = a * b;
    mpz_mod(r.get_mpz_t(), r.get_mpz_t(), m.get_mpz_t());
    return r;
}

void append_prefixed(Bytes& out, const BigInt& v) {
    Bytes mag = to_bytes_be(v);
    put_u16(out, static_cast<std::uint16_t>(mag.size()));
    append(out, mag);
}

void check_scalar(const Scalar& s, const GroupParams& params, const char* what) {
    if (s.value < 0 || s.value >= params.q) throw ParameterError(std::string(what) + " outside [0, q)");
}

}  // namespace

KeyPair keygen(const GroupParams& params, Rng& rng) {
    require_valid_params(params);
    KeyPair keys;
    keys.sk.x1 = random_scalar(params, rng);
    keys.sk.x2 = random_scalar(params, rng);
    keys.sk.y1 = random_scalar(params, rng);
    keys.sk.y2 = random_scalar(params, rng);
    keys.sk.z = random_scalar(params, rng);

    const std::size_t qbits = bit_length(params.q);
    const auto& p = params.p;
    auto pair_exp = [&](const Scalar& a, const Scalar& b) {
        return mulmod(mod_exp(params.g1, a.value, p, qbits), mod_exp(params.g2, b.value, p, qbits), p);
    };
    keys.pk.params = params;
    keys.pk.c = GroupElement{pair_exp(keys.sk.x1, keys.sk.x2)};
    keys.pk.d = GroupElement{pair_exp(keys.sk.y1, keys.sk.y2)};
    keys.pk.h = GroupElement{mod_exp(params.g1, keys.sk.z.value, p, qbits)};
    return keys;
}

Ciphertext encrypt(const PublicKey& pk, const GroupElement& m, const Scalar& r) {
    const GroupParams& params = pk.params;
    if (!is_subgroup_member(params, m.value)) throw EncodingError("encrypt: message is not a subgroup member");
    check_scalar(r, params, "encrypt: r");

    const std::size_t qbits = bit_length(params.q);
    const auto& p = params.p;
    Ciphertext ct;
    ct.u1.value = mod_exp(params.g1, r.value, p, qbits);
    ct.u2.value = mod_exp(params.g2, r.value, p, qbits);
    ct.e.value = mulmod(mod_exp(pk.h.value, r.value, p, qbits), m.value, p);
    const Scalar alpha = hash_to_scalar(ct.u1, ct.u2, ct.e, params.q);
    BigInt r_alpha = r.value * alpha.value;
    mpz_mod(r_alpha.get_mpz_t(), r_alpha.get_mpz_t(), params.q.get_mpz_t());
    ct.v.value = mulmod(mod_exp(pk.c.value, r.value, p, qbits), mod_exp(pk.d.value, r_alpha, p, qbits), p);
    return ct;
}

Ciphertext encrypt(const PublicKey& pk, const GroupElement& m, Rng& rng) {
    Scalar r;
    do {
        r = random_scalar(pk.params, rng);
    } while (r.value == 0);
    return encrypt(pk, m, r);
}

std::optional<GroupElement> decrypt(const SecretKey& sk, const GroupParams& params, const Ciphertext& ct) {
    const auto& p = params.p;
    const auto& q = params.q;
    for (const GroupElement* x : {&ct.u1, &ct.u2, &ct.e, &ct.v}) {
        if (x->value < 1 || x->value >= p) throw ParameterError("decrypt: ciphertext component outside [1, p)");
    }
    const std::size_t qbits = bit_length(q);
    const std::size_t pbits = bit_length(p);

    const Scalar alpha = hash_to_scalar(ct.u1, ct.u2, ct.e, q);
    BigInt s1 = sk.x1.value + sk.y1.value * alpha.value;
    BigInt s2 = sk.x2.value + sk.y2.value * alpha.value;
    mpz_mod(s1.get_mpz_t(), s1.get_mpz_t(), q.get_mpz_t());
    mpz_mod(s2.get_mpz_t(), s2.get_mpz_t(), q.get_mpz_t());
    const BigInt expected_v = mulmod(mod_exp(ct.u1.value, s1, p, qbits), mod_exp(ct.u2.value, s2, p, qbits), p);

    // Message recovery runs regardless of the tag outcome. The inverse uses
    // Fermat's little theorem so it is defined for any u1 in [1, p).
    const BigInt u1z = mod_exp(ct.u1.value, sk.z.value, p, qbits);
    const BigInt u1z_inv = mod_exp(u1z, p - 2, p, pbits);
    GroupElement m{mulmod(ct.e.value, u1z_inv, p)};

    const bool valid = expected_v == ct.v.value;
    if (!valid) return std::nullopt;
    return m;
}

Scalar hash_to_scalar(const GroupElement& u1, const GroupElement& u2, const GroupElement& e, const BigInt& q) {
    if (q < 1) throw ParameterError("hash_to_scalar: q must be positive");
    Bytes input;
    append_prefixed(input, u1.value);
    append_prefixed(input, u2.value);
    append_prefixed(input, e.value);
    const Digest256 digest = sha256({input});
    BigInt alpha = from_bytes_be(digest);
    mpz_mod(alpha.get_mpz_t(), alpha.get_mpz_t(), q.get_mpz_t());
    return Scalar{alpha};
}

std::size_t max_message_bytes(const GroupParams& params) {
    // int(0x01 || b) < 2^(8n + 1) <= 2^(bits(q) - 1) <= q
    const std::size_t qbits = bit_length(params.q);
    return qbits < 2 ? 0 : (qbits - 2) / 8;
}

GroupElement encode_integer(const BigInt& t, const GroupParams& params) {
    if (t < 1 || t > params.q) throw EncodingError("encode_integer: value outside [1, q]");
    const BigInt legendre = mod_exp(t, params.q, params.p, bit_length(params.q));
    const BigInt negated = params.p - t;
    const BigInt* pick[2] = {&negated, &t};
    return GroupElement{*pick[legendre == 1 ? 1 : 0]};
}

BigInt decode_integer(const GroupElement& m, const GroupParams& params) {
    if (m.value < 1 || m.value >= params.p) throw EncodingError("decode_integer: element outside [1, p)");
    return m.value > params.q ? BigInt(params.p - m.value) : m.value;
}

GroupElement encode_message(ByteView bytes, const GroupParams& params) {
    if (bytes.size() > max_message_bytes(params)) throw EncodingError("encode_message: payload too large for group");
    Bytes prefixed{0x01};
    append(prefixed, bytes);
    return encode_integer(from_bytes_be(prefixed), params);
}

Bytes decode_message(const GroupElement& m, const GroupParams& params) {
    Bytes raw = to_bytes_be(decode_integer(m, params));
    if (raw.empty() || raw.front() != 0x01) throw EncodingError("decode_message: missing 0x01 prefix");
    return Bytes(raw.begin() + 1, raw.end());
}

std::size_t ciphertext_wire_size(const GroupParams& params) { return 4 * (2 + params.element_bytes()); }

Bytes serialize_ciphertext(const Ciphertext& ct, const GroupParams& params) {
    const std::size_t width = params.element_bytes();
    Bytes out;
    out.reserve(ciphertext_wire_size(params));
    for (const GroupElement* x : {&ct.u1, &ct.u2, &ct.e, &ct.v}) {
        put_u16(out, static_cast<std::uint16_t>(width));
        append(out, to_bytes_be_fixed(x->value, width));
    }
    return out;
}

Ciphertext parse_ciphertext(ByteView wire, const GroupParams& params) {
    Ciphertext ct;
    std::size_t at = 0;
    for (GroupElement* x : {&ct.u1, &ct.u2, &ct.e, &ct.v}) {
        if (wire.size() - at < 2) throw MalformedPacket("ciphertext: truncated length field");
        const std::size_t len = get_u16(wire, at);
        at += 2;
        if (wire.size() - at < len) throw MalformedPacket("ciphertext: truncated component");
        x->value = from_bytes_be(wire.subspan(at, len));
        at += len;
        if (x->value < 1 || x->value >= params.p) throw MalformedPacket("ciphertext: component outside [1, p)");
    }
    if (at != wire.size()) throw MalformedPacket("ciphertext: trailing bytes");
    return ct;
}

std::string key_id(const PublicKey& pk) {
    Bytes input;
    for (const BigInt* v : {&pk.params.p, &pk.params.q, &pk.params.g1, &pk.params.g2, &pk.c.value, &pk.d.value,
                            &pk.h.value}) {
        append_prefixed(input, *v);
    }
    const Digest256 digest = sha256({input});
    return to_hex(ByteView(digest).first(8));
}

std::string format_public_key_file(const PublicKey& pk) {
    std::ostringstream out;
    out << "[params]\n"
        << format_params(pk.params) << "[public]\n"
        << "C=" << to_hex(pk.c.value) << '\n'
        << "D=" << to_hex(pk.d.value) << '\n'
        << "H=" << to_hex(pk.h.value) << '\n';
    return out.str();
}

std::string format_secret_key_file(const KeyPair& keys) {
    std::ostringstream out;
    out << format_public_key_file(keys.pk) << "[secret]\n"
        << "x1=" << to_hex(keys.sk.x1.value) << '\n'
        << "x2=" << to_hex(keys.sk.x2.value) << '\n'
        << "y1=" << to_hex(keys.sk.y1.value) << '\n'
        << "y2=" << to_hex(keys.sk.y2.value) << '\n'
        << "z=" << to_hex(keys.sk.z.value) << '\n';
    return out.str();
}

KeyFile parse_key_file(std::string_view text) {
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::string current;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            current = line.substr(1, line.size() - 2);
            sections[current];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || current.empty()) {
            throw ConfigError("key file line " + std::to_string(lineno) + ": expected key=value inside a section");
        }
        sections[current][line.substr(0, eq)] = line.substr(eq + 1);
    }

    auto field = [&](const std::string& section, const std::string& name) -> BigInt {
        auto s = sections.find(section);
        if (s == sections.end()) throw ConfigError("key file: missing [" + section + "] section");
        auto f = s->second.find(name);
        if (f == s->second.end()) throw ConfigError("key file: missing " + name + " in [" + section + "]");
        try {
            return from_hex(f->second);
        } catch (const ParameterError&) {
            throw ConfigError("key file: " + name + " is not hex");
        }
    };

    KeyFile kf;
    kf.pk.params = GroupParams{field("params", "p"), field("params", "q"), field("params", "g1"), field("params", "g2")};
    kf.pk.c.value = field("public", "C");
    kf.pk.d.value = field("public", "D");
    kf.pk.h.value = field("public", "H");
    if (sections.contains("secret")) {
        kf.sk = SecretKey{Scalar{field("secret", "x1")}, Scalar{field("secret", "x2")}, Scalar{field("secret", "y1")},
                          Scalar{field("secret", "y2")}, Scalar{field("secret", "z")}};
    }
    return kf;
}

}  // namespace tftps::cs
