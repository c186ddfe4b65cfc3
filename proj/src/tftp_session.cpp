#include "tftps/tftp_session.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tftps/cs_timing.hpp"
#include "tftps/errors.hpp"

namespace tftps::tftp {

namespace fs = std::filesystem;

const char* phase_name(Phase phase) {
    switch (phase) {
        case Phase::Negotiate: return "NEGOTIATE";
        case Phase::KeyExchange: return "KEY_EXCHANGE";
        case Phase::DataTransfer: return "DATA_TRANSFER";
        case Phase::Done: return "DONE";
        case Phase::Failed: return "FAILED";
    }
    return "?";
}

const char* role_name(Role role) {
    switch (role) {
        case Role::ClientRead: return "client-read";
        case Role::ClientWrite: return "client-write";
        case Role::ServerRead: return "server-read";
        case Role::ServerWrite: return "server-write";
    }
    return "?";
}

// ---------------------------------------------------------------- KeyStore

std::string KeyStore::add_public(const cs::PublicKey& pk) {
    std::string kid = cs::key_id(pk);
    public_[kid] = pk;
    return kid;
}

std::string KeyStore::add_keypair(const cs::KeyPair& keys) {
    std::string kid = add_public(keys.pk);
    secret_[kid] = keys.sk;
    return kid;
}

std::optional<cs::PublicKey> KeyStore::public_key(const std::string& kid) const {
    auto it = public_.find(kid);
    if (it == public_.end()) return std::nullopt;
    return it->second;
}

std::optional<cs::KeyPair> KeyStore::keypair(const std::string& kid) const {
    auto pub = public_.find(kid);
    auto sec = secret_.find(kid);
    if (pub == public_.end() || sec == secret_.end()) return std::nullopt;
    return cs::KeyPair{pub->second, sec->second};
}

std::vector<std::string> KeyStore::ids() const {
    std::vector<std::string> out;
    for (const auto& [kid, pk] : public_) out.push_back(kid);
    return out;
}

KeyStore KeyStore::load_directory(const std::string& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("keystore directory not found: " + dir);
    KeyStore store;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto ext = entry.path().extension().string();
        if (!entry.is_regular_file() || (ext != ".pub" && ext != ".sec")) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        if (!in) throw IoError("cannot read key file " + entry.path().string());
        std::stringstream text;
        text << in.rdbuf();
        cs::KeyFile file;
        try {
            file = cs::parse_key_file(text.str());
        } catch (const ConfigError& e) {
            throw ConfigError(entry.path().string() + ": " + e.what());
        }
        if (file.sk) store.add_keypair({file.pk, *file.sk});
        else store.add_public(file.pk);
    }
    return store;
}

std::string KeyStore::default_path(const std::string& fallback) {
    const char* env = std::getenv("TFTPS_KEYSTORE");
    return env && *env ? std::string(env) : fallback;
}

// ---------------------------------------------------------------- FileStore

std::optional<Bytes> MemoryFileStore::read(const std::string& name) {
    std::lock_guard lock(mutex_);
    auto it = files_.find(name);
    if (it == files_.end()) return std::nullopt;
    return it->second;
}

bool MemoryFileStore::write(const std::string& name, const Bytes& data) {
    std::lock_guard lock(mutex_);
    files_[name] = data;
    return true;
}

std::optional<std::string> DirectoryFileStore::resolve(const std::string& name) const {
    if (name.empty() || name == "." || name == ".." || name.find('/') != std::string::npos ||
        name.find('\\') != std::string::npos) {
        return std::nullopt;
    }
    return (fs::path(root_) / name).string();
}

std::optional<Bytes> DirectoryFileStore::read(const std::string& name) {
    auto path = resolve(name);
    if (!path) return std::nullopt;
    std::ifstream in(*path, std::ios::binary);
    if (!in) return std::nullopt;
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool DirectoryFileStore::write(const std::string& name, const Bytes& data) {
    auto path = resolve(name);
    if (!path) return false;
    std::ofstream out(*path, std::ios::binary | std::ios::trunc);
    if (!out) return false;
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    return static_cast<bool>(out);
}

// ------------------------------------------------------------ key exchange

std::size_t keyblocks_for(const GroupParams& params) {
    return (cs::ciphertext_wire_size(params) + kBlockSize - 1) / kBlockSize;
}

KeyExchangeBlocks key_exchange_send(const cs::PublicKey& recipient, Rng& rng) {
    const auto material = record::SessionKeyMaterial::generate(rng);
    const auto m = cs::encode_message(material.raw, recipient.params);
    const auto ct = cs::encrypt(recipient, m, rng);
    const Bytes wire = cs::serialize_ciphertext(ct, recipient.params);
    return {material, arq::chunk_payload(wire, kBlockSize)};
}

std::optional<UnwrappedKeys> key_exchange_receive(const cs::KeyPair& recipient, const std::vector<Bytes>& blocks,
                                                  const fixed_time::TimeBudget& budget) {
    const GroupParams& params = recipient.pk.params;
    Bytes wire;
    for (const auto& b : blocks) append(wire, b);
    auto result = fixed_time::run_fixed(budget, [&]() -> std::optional<record::SessionKeyMaterial> {
        try {
            const auto ct = cs::parse_ciphertext(wire, params);
            const auto m = cs::decrypt(recipient.sk, params, ct);
            if (!m) return std::nullopt;
            const Bytes raw = cs::decode_message(*m, params);
            if (raw.size() != record::kMaterialBytes) return std::nullopt;
            return record::SessionKeyMaterial::from_bytes(raw);
        } catch (const Error&) {
            return std::nullopt;
        }
    });
    if (!result.output) return std::nullopt;
    return UnwrappedKeys{*result.output, record::derive_session_keys(*result.output)};
}

// --------------------------------------------------------- TransferSession

TransferSession::TransferSession(Role role, SessionConfig config, Rng rng)
    : role_(role), config_(std::move(config)), rng_(std::move(rng)) {
    if (!config_.budgets) config_.budgets = std::make_shared<fixed_time::BudgetTable>();
    arq_config_.seq_bits = 16;
    arq_config_.initial_seq = 1;
    arq_config_.max_payload = kBlockSize;
    arq_config_.timeout = config_.timeout;
    arq_config_.max_retries = config_.max_retries;
    sender_ = arq::initial_sender(arq_config_);
    receiver_ = arq::initial_receiver(arq_config_);
    report_.role = role;
}

TransferSession TransferSession::client(ClientRequest request, net::Endpoint server, SessionConfig config, Rng rng) {
    TransferSession s(request.write ? Role::ClientWrite : Role::ClientRead, std::move(config), std::move(rng));
    s.peer_ = std::move(server);
    s.secure_ = request.secure;
    s.request_.opcode = request.write ? Opcode::Wrq : Opcode::Rrq;
    s.request_.filename = request.remote_name;
    s.request_.mode = "octet";
    if (request.write) s.file_ = std::move(request.data);
    if (s.secure_) {
        const cs::PublicKey* pk = nullptr;
        if (request.write) {
            if (!request.recipient_pk) throw ParameterError("secure put needs the server's public key");
            s.recipient_pk_ = request.recipient_pk;
            pk = &*s.recipient_pk_;
        } else {
            if (!request.own_keys) throw ParameterError("secure get needs the client's key pair");
            s.own_keys_ = request.own_keys;
            pk = &s.own_keys_->pk;
        }
        s.sec_.sec = kSchemeCs1;
        s.sec_.keyblocks = static_cast<std::uint32_t>(keyblocks_for(pk->params));
        s.sec_.kid = cs::key_id(*pk);
        s.request_.options = to_options(s.sec_);
    }
    s.report_.filename = s.request_.filename;
    s.report_.secure = s.secure_;
    s.report_.peer = s.peer_.str();
    return s;
}

TransferSession TransferSession::server(Request request, net::Endpoint peer, const KeyStore& keys, FileStore& files,
                                        SessionConfig config, Rng rng) {
    if (request.opcode != Opcode::Rrq && request.opcode != Opcode::Wrq) {
        throw ParameterError("server session needs an RRQ or WRQ");
    }
    TransferSession s(request.opcode == Opcode::Rrq ? Role::ServerRead : Role::ServerWrite, std::move(config),
                      std::move(rng));
    s.peer_ = std::move(peer);
    s.peer_locked_ = true;
    s.keystore_ = &keys;
    s.files_ = &files;
    s.request_ = std::move(request);
    s.report_.filename = s.request_.filename;
    s.report_.peer = s.peer_.str();
    return s;
}

void TransferSession::send(std::vector<Outgoing>& out, const net::Endpoint& to, const Packet& packet) {
    out.push_back({to, encode_packet(packet)});
}

void TransferSession::fail(std::vector<Outgoing>& out, ErrorCode code, const std::string& message, Instant now,
                           bool notify_peer) {
    if (phase_ == Phase::Done || phase_ == Phase::Failed) return;
    phase_ = Phase::Failed;
    sending_ = false;
    awaiting_control_ = false;
    key_chunks_.clear();
    keys_.reset();
    report_.outcome = Phase::Failed;
    report_.error_code = static_cast<std::uint16_t>(code);
    report_.error_message = message;
    report_.elapsed = now - started_;
    report_.retransmissions = sender_.retransmissions + control_retries_;
    if (notify_peer) send(out, peer_, make_error(code, message));
}

void TransferSession::finish_ok(Instant now) {
    phase_ = Phase::Done;
    sending_ = false;
    report_.outcome = Phase::Done;
    report_.elapsed = now - started_;
    report_.retransmissions = sender_.retransmissions + control_retries_;
    if (receiving_) dally_until_ = now + config_.dally();
}

void TransferSession::send_control(std::vector<Outgoing>& out, Bytes packet, Instant now) {
    control_ = std::move(packet);
    awaiting_control_ = true;
    control_retries_ = 0;
    control_deadline_ = now + config_.timeout;
    out.push_back({peer_, control_});
}

std::vector<Outgoing> TransferSession::start(Instant now) {
    std::vector<Outgoing> out;
    started_ = now;
    if (role_ == Role::ClientRead || role_ == Role::ClientWrite) start_client(out, now);
    else start_server(out, now);
    return out;
}

void TransferSession::start_client(std::vector<Outgoing>& out, Instant now) {
    send_control(out, encode_packet(request_), now);
}

void TransferSession::start_server(std::vector<Outgoing>& out, Instant now) {
    if (request_.mode == "mail") {
        fail(out, ErrorCode::IllegalOperation, "mail mode is not supported", now);
        return;
    }
    auto negotiated = negotiate(request_.options, config_.policy);
    if (auto* err = std::get_if<ErrorPacket>(&negotiated)) {
        fail(out, static_cast<ErrorCode>(err->code), err->message, now);
        return;
    }
    const Options echoed = std::get<Options>(negotiated);
    sec_ = parse_security_options(echoed);
    secure_ = sec_.enabled();
    report_.secure = secure_;
    if (secure_ && request_.mode != "octet") {
        fail(out, ErrorCode::IllegalOperation, "sec=cs1 requires octet mode", now);
        return;
    }
    if (secure_) {
        const GroupParams* params = nullptr;
        if (role_ == Role::ServerWrite) {
            own_keys_ = keystore_->keypair(sec_.kid);
            if (own_keys_) params = &own_keys_->pk.params;
        } else {
            recipient_pk_ = keystore_->public_key(sec_.kid);
            if (recipient_pk_) params = &recipient_pk_->params;
        }
        if (!params) {
            fail(out, ErrorCode::OptionRefused, "unknown kid " + sec_.kid, now);
            return;
        }
        if (sec_.keyblocks != keyblocks_for(*params)) {
            fail(out, ErrorCode::OptionRefused,
                 "keyblocks must be " + std::to_string(keyblocks_for(*params)) + " for kid " + sec_.kid, now);
            return;
        }
    }
    if (role_ == Role::ServerRead) {
        auto data = files_->read(request_.filename);
        if (!data) {
            fail(out, ErrorCode::FileNotFound, "file not found: " + request_.filename, now);
            return;
        }
        file_ = std::move(*data);
    }

    if (secure_) {
        send_control(out, encode_packet(Oack{echoed}), now);
        if (role_ == Role::ServerWrite) begin_receiving(now);
    } else if (role_ == Role::ServerWrite) {
        send_control(out, encode_packet(Ack{0}), now);
        begin_receiving(now);
    } else {
        begin_sending(out, now);
    }
}

void TransferSession::begin_sending(std::vector<Outgoing>& out, Instant now) {
    std::vector<Bytes> payloads;
    std::size_t per_block = kBlockSize;
    if (secure_) {
        auto kx = key_exchange_send(*recipient_pk_, rng_);
        if (kx.blocks.chunks.size() != sec_.keyblocks) {
            fail(out, ErrorCode::OptionRefused, "wrapped key does not fit the negotiated keyblocks", now);
            return;
        }
        keys_ = record::derive_session_keys(kx.material);
        payloads = std::move(kx.blocks.chunks);
        per_block = kSecurePlaintextPerBlock;
    }
    const std::size_t records = file_.size() / per_block + 1;
    std::uint64_t block = payloads.size();
    for (std::size_t i = 0; i < records; ++i) {
        ++block;
        const std::size_t off = i * per_block;
        const std::size_t len = std::min(per_block, file_.size() - off);
        ByteView chunk(file_.data() + off, len);
        if (secure_) payloads.push_back(record::serialize_record(record::seal_block(*keys_, block, chunk, rng_)));
        else payloads.emplace_back(chunk.begin(), chunk.end());
    }

    sending_ = true;
    payload_count_ = payloads.size();
    acked_ = 0;
    phase_ = secure_ ? Phase::KeyExchange : Phase::DataTransfer;
    kx_started_ = now;
    report_.bytes = file_.size();
    report_.blocks = payload_count_;
    for (std::size_t i = 0; i < payloads.size(); ++i) {
        apply_sender(out, arq::sender_event::Send{std::move(payloads[i]), i + 1 == payload_count_}, now);
    }
}

void TransferSession::begin_receiving(Instant now) {
    receiving_ = true;
    phase_ = secure_ ? Phase::KeyExchange : Phase::DataTransfer;
    kx_started_ = now;
    last_activity_ = now;
    if (secure_) cs_timing::ensure_decrypt_budget(*config_.budgets, own_keys_->pk.params);
}

void TransferSession::apply_sender(std::vector<Outgoing>& out, const arq::SenderEvent& event, Instant now) {
    const bool was_outstanding = sender_.outstanding.has_value();
    const std::uint16_t before = sender_.current_seq;
    auto step = arq::sender_step(arq_config_, std::move(sender_), event, now);
    sender_ = std::move(step.state);
    if (was_outstanding && sender_.current_seq != before) {
        ++acked_;
        if (phase_ == Phase::KeyExchange && acked_ == sec_.keyblocks) {
            phase_ = Phase::DataTransfer;
            report_.key_exchange_elapsed = now - kx_started_;
        }
    }
    for (const auto& a : step.actions) {
        if (const auto* emit = std::get_if<arq::action::EmitFrame>(&a)) {
            send(out, peer_, Data{emit->frame.seq, emit->frame.payload});
        } else if (std::holds_alternative<arq::action::Done>(a)) {
            finish_ok(now);
        } else {
            fail(out, ErrorCode::NotDefined, "retransmission limit reached", now);
        }
    }
}

void TransferSession::handle_data(std::vector<Outgoing>& out, const Data& data, Instant now) {
    last_activity_ = now;
    auto step = arq::receiver_step(arq_config_, std::move(receiver_),
                                   arq::make_frame(data.block, arq::FrameKind::Data, data.data));
    receiver_ = std::move(step.state);
    for (const auto& a : step.actions) {
        if (const auto* d = std::get_if<arq::action::Deliver>(&a)) {
            if (!accept_payload(out, d->payload, now)) return;
        } else if (const auto* emit = std::get_if<arq::action::EmitFrame>(&a)) {
            send(out, peer_, Ack{emit->frame.seq});
        }
    }
    if (phase_ == Phase::Done && !dally_until_) finish_ok(now);
}

bool TransferSession::accept_payload(std::vector<Outgoing>& out, const Bytes& payload, Instant now) {
    ++delivered_;
    if (secure_ && delivered_ <= sec_.keyblocks) {
        key_chunks_.push_back(payload);
        if (delivered_ < sec_.keyblocks) return true;
        const auto budget = cs_timing::ensure_decrypt_budget(*config_.budgets, own_keys_->pk.params);
        auto unwrapped = key_exchange_receive(*own_keys_, key_chunks_, budget);
        key_chunks_.clear();
        if (!unwrapped) {
            fail(out, ErrorCode::SecurityFailure, "key exchange rejected", now);
            return false;
        }
        keys_ = unwrapped->keys;
        phase_ = Phase::DataTransfer;
        report_.key_exchange_elapsed = now - kx_started_;
        return true;
    }

    if (secure_) {
        if (phase_ != Phase::DataTransfer || !keys_) {
            fail(out, ErrorCode::SecurityFailure, "record before key exchange", now);
            return false;
        }
        std::optional<Bytes> plain;
        try {
            const auto rec = record::parse_record(payload);
            ++report_.mac_verifications;
            plain = record::open_block(*keys_, delivered_, rec);
        } catch (const MalformedPacket&) {
        }
        if (!plain) {
            fail(out, ErrorCode::SecurityFailure, "MAC verification failed on block " + std::to_string(delivered_),
                 now);
            return false;
        }
        ++report_.records_accepted;
        append(file_, *plain);
    } else {
        append(file_, payload);
    }
    report_.blocks = delivered_;
    report_.bytes = file_.size();

    if (payload.size() < kBlockSize) {
        if (role_ == Role::ServerWrite && !files_->write(request_.filename, file_)) {
            fail(out, ErrorCode::AccessViolation, "cannot write " + request_.filename, now);
            return false;
        }
        phase_ = Phase::Done;
    }
    return true;
}

bool TransferSession::check_oack(std::vector<Outgoing>& out, const Oack& oack, Instant now) {
    const SecurityOptions got = parse_security_options(oack.options);
    if (!secure_) {
        if (got.enabled()) {
            fail(out, ErrorCode::OptionRefused, "server acknowledged options that were not requested", now);
            return false;
        }
        return true;
    }
    if (!(got == sec_)) {
        fail(out, ErrorCode::OptionRefused, "OACK does not echo the requested security options", now);
        return false;
    }
    return true;
}

std::vector<Outgoing> TransferSession::on_datagram(const net::Endpoint& from, ByteView bytes, Instant now) {
    std::vector<Outgoing> out;
    if (phase_ == Phase::Failed || finished()) return out;

    if (peer_locked_ && from != peer_) {
        send(out, from, make_error(ErrorCode::UnknownTid, "unknown transfer ID"));
        return out;
    }

    Packet packet;
    try {
        packet = decode_packet(bytes);
    } catch (const MalformedPacket& e) {
        send(out, from, make_error(ErrorCode::IllegalOperation, e.what()));
        return out;
    }

    const bool client = role_ == Role::ClientRead || role_ == Role::ClientWrite;
    auto lock_peer = [&] {
        peer_ = from;
        peer_locked_ = true;
        report_.peer = peer_.str();
        awaiting_control_ = false;
    };

    if (const auto* err = std::get_if<ErrorPacket>(&packet)) {
        if (client && !peer_locked_) lock_peer();
        fail(out, static_cast<ErrorCode>(err->code), err->message, now, false);
        report_.error_from_peer = true;
        return out;
    }
    if (phase_ == Phase::Done) {
        // Dallying: re-ACK a retransmitted final block.
        if (const auto* data = std::get_if<Data>(&packet); data && receiving_) handle_data(out, *data, now);
        return out;
    }
    if (std::holds_alternative<Request>(packet)) {
        send(out, from, make_error(ErrorCode::IllegalOperation, "request on a transfer port"));
        return out;
    }

    if (const auto* oack = std::get_if<Oack>(&packet)) {
        if (client && phase_ == Phase::Negotiate) {
            lock_peer();
            if (!check_oack(out, *oack, now)) return out;
            if (role_ == Role::ClientWrite) {
                begin_sending(out, now);
            } else {
                send(out, peer_, Ack{0});
                begin_receiving(now);
            }
        } else if (role_ == Role::ClientRead && receiving_ && delivered_ == 0) {
            send(out, peer_, Ack{0});
        }
        return out;
    }

    if (const auto* ack = std::get_if<Ack>(&packet)) {
        if (role_ == Role::ClientWrite && phase_ == Phase::Negotiate) {
            if (ack->block != 0) return out;
            lock_peer();
            if (secure_) {
                fail(out, ErrorCode::OptionRefused, "server ignored the security options", now);
                return out;
            }
            begin_sending(out, now);
        } else if (role_ == Role::ServerRead && awaiting_control_ && !sending_) {
            if (ack->block != 0) return out;
            awaiting_control_ = false;
            begin_sending(out, now);
        } else if (sending_) {
            apply_sender(out, arq::sender_event::AckReceived{ack->block}, now);
        }
        return out;
    }

    const auto& data = std::get<Data>(packet);
    if (role_ == Role::ClientRead && phase_ == Phase::Negotiate) {
        lock_peer();
        if (secure_) {
            fail(out, ErrorCode::OptionRefused, "server ignored the security options", now);
            return out;
        }
        begin_receiving(now);
    }
    if (!receiving_) return out;
    awaiting_control_ = false;
    handle_data(out, data, now);
    return out;
}

std::vector<Outgoing> TransferSession::on_timer(Instant now) {
    std::vector<Outgoing> out;
    if (phase_ == Phase::Done) {
        if (dally_until_ && now >= *dally_until_) dallied_ = true;
        return out;
    }
    if (phase_ == Phase::Failed) return out;

    if (awaiting_control_ && control_deadline_ && now >= *control_deadline_) {
        if (control_retries_ >= config_.max_retries) {
            fail(out, ErrorCode::NotDefined, "timed out waiting for " + peer_.str(), now, peer_locked_);
            return out;
        }
        ++control_retries_;
        control_deadline_ = now + config_.timeout;
        out.push_back({peer_, control_});
    }
    if (sending_ && sender_.deadline && now >= *sender_.deadline) {
        apply_sender(out, arq::sender_event::Timeout{}, now);
    }
    if (receiving_ && !awaiting_control_ && phase_ != Phase::Done && phase_ != Phase::Failed &&
        now >= last_activity_ + config_.timeout * (config_.max_retries + 2)) {
        fail(out, ErrorCode::NotDefined, "timed out waiting for DATA", now);
    }
    return out;
}

std::vector<Outgoing> TransferSession::abort(const std::string& message, Instant now) {
    std::vector<Outgoing> out;
    if (phase_ == Phase::Done || phase_ == Phase::Failed) return out;
    fail(out, ErrorCode::NotDefined, message, now, peer_locked_ || role_ == Role::ServerRead ||
                                                      role_ == Role::ServerWrite);
    return out;
}

std::optional<Instant> TransferSession::deadline() const {
    if (phase_ == Phase::Failed) return std::nullopt;
    if (phase_ == Phase::Done) {
        if (dally_until_ && !dallied_) return dally_until_;
        return std::nullopt;
    }
    std::optional<Instant> best;
    auto consider = [&](Instant t) {
        if (!best || t < *best) best = t;
    };
    if (awaiting_control_ && control_deadline_) consider(*control_deadline_);
    if (sending_ && sender_.deadline) consider(*sender_.deadline);
    if (receiving_ && !awaiting_control_) consider(last_activity_ + config_.timeout * (config_.max_retries + 2));
    return best;
}

bool TransferSession::finished() const {
    if (phase_ == Phase::Failed) return true;
    if (phase_ == Phase::Done) return !dally_until_ || dallied_;
    return false;
}

}  // namespace tftps::tftp
