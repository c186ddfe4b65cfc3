#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tftps/cramer_shoup.hpp"
#include "tftps/fixed_time.hpp"
#include "tftps/record_crypto.hpp"
#include "tftps/ssw_arq.hpp"
#include "tftps/tftp_packet.hpp"
#include "tftps/transport.hpp"

namespace tftps::tftp {

using net::Instant;
using Millis = std::chrono::milliseconds;

/// Plaintext octets carried by one sealed DATA block.
inline constexpr std::size_t kSecurePlaintextPerBlock = kBlockSize - record::kRecordOverhead;

enum class Phase { Negotiate, KeyExchange, DataTransfer, Done, Failed };
enum class Role { ClientRead, ClientWrite, ServerRead, ServerWrite };

const char* phase_name(Phase phase);
const char* role_name(Role role);

/// Cramer-Shoup keys indexed by key id. Read-only once loaded.
class KeyStore {
public:
    std::string add_public(const cs::PublicKey& pk);
    std::string add_keypair(const cs::KeyPair& keys);

    std::optional<cs::PublicKey> public_key(const std::string& kid) const;
    std::optional<cs::KeyPair> keypair(const std::string& kid) const;
    std::vector<std::string> ids() const;
    bool empty() const { return public_.empty(); }

    /// Loads every *.pub and *.sec file in `dir`; throws IoError / ConfigError.
    static KeyStore load_directory(const std::string& dir);
    /// $TFTPS_KEYSTORE when set, else `fallback`.
    static std::string default_path(const std::string& fallback = "keys");

private:
    std::map<std::string, cs::PublicKey> public_;
    std::map<std::string, cs::SecretKey> secret_;
};

class FileStore {
public:
    virtual ~FileStore() = default;
    virtual std::optional<Bytes> read(const std::string& name) = 0;
    /// False when the file cannot be written.
    virtual bool write(const std::string& name, const Bytes& data) = 0;
};

class MemoryFileStore : public FileStore {
public:
    std::optional<Bytes> read(const std::string& name) override;
    bool write(const std::string& name, const Bytes& data) override;

private:
    std::mutex mutex_;
    std::map<std::string, Bytes> files_;
};

/// Files under `root`; names with path separators or ".." are refused.
class DirectoryFileStore : public FileStore {
public:
    explicit DirectoryFileStore(std::string root) : root_(std::move(root)) {}
    std::optional<Bytes> read(const std::string& name) override;
    bool write(const std::string& name, const Bytes& data) override;

private:
    std::optional<std::string> resolve(const std::string& name) const;
    std::string root_;
};

/// DATA blocks needed to carry a wrapped key for these parameters.
std::size_t keyblocks_for(const GroupParams& params);

struct KeyExchangeBlocks {
    record::SessionKeyMaterial material;
    arq::ChunkSet blocks;
};

/// Draws 64 octets of key material, wraps them under `recipient` and splits
/// the serialized ciphertext into 512-octet DATA payloads.
KeyExchangeBlocks key_exchange_send(const cs::PublicKey& recipient, Rng& rng);

struct UnwrappedKeys {
    record::SessionKeyMaterial material;
    record::SessionKeys keys;
};

/**
 * Reassembles the key blocks and decrypts them inside run_fixed(budget).
 * Returns std::nullopt (security failure) on a Cramer-Shoup reject, an
 * unparseable ciphertext, or a payload that is not 64 octets of material.
 */
std::optional<UnwrappedKeys> key_exchange_receive(const cs::KeyPair& recipient, const std::vector<Bytes>& blocks,
                                                  const fixed_time::TimeBudget& budget);

struct SessionConfig {
    Millis timeout{500};
    unsigned max_retries = 5;
    /// Shared cs.decrypt budgets; a missing entry is calibrated on first use.
    std::shared_ptr<fixed_time::BudgetTable> budgets;
    ServerPolicy policy;

    Millis dally() const { return timeout * (max_retries + 1); }
};

struct SessionReport {
    Role role = Role::ClientRead;
    std::string peer;
    std::string filename;
    bool secure = false;
    Phase outcome = Phase::Negotiate;
    std::uint16_t error_code = 0;
    std::string error_message;
    bool error_from_peer = false;
    std::uint64_t bytes = 0;
    std::uint64_t blocks = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t mac_verifications = 0;
    std::uint64_t records_accepted = 0;
    std::chrono::nanoseconds key_exchange_elapsed{0};
    std::chrono::nanoseconds elapsed{0};
};

struct Outgoing {
    net::Endpoint to;
    Bytes data;
};

struct ClientRequest {
    bool write = false;
    std::string remote_name;
    /// File contents for a write.
    Bytes data;
    bool secure = false;
    /// Write: the server's public key. Read: unused.
    std::optional<cs::PublicKey> recipient_pk;
    /// Read: this client's key pair, which the server wraps to.
    std::optional<cs::KeyPair> own_keys;
};

/**
 * One TFTP transfer, client or server side, stepped by datagrams and timer
 * expiries. Owns no sockets: every step returns the datagrams to send.
 *
 * Phases only move forward (Negotiate, KeyExchange, DataTransfer, then Done
 * or Failed). With security on, the sender's first `keyblocks` DATA blocks
 * carry the wrapped session key and the rest carry sealed records; the
 * receiver accepts a record only after the key exchange succeeded and its
 * MAC verified.
 */
class TransferSession {
public:
    static TransferSession client(ClientRequest request, net::Endpoint server, SessionConfig config, Rng rng);
    static TransferSession server(Request request, net::Endpoint peer, const KeyStore& keys, FileStore& files,
                                  SessionConfig config, Rng rng);

    std::vector<Outgoing> start(Instant now);
    std::vector<Outgoing> on_datagram(const net::Endpoint& from, ByteView data, Instant now);
    std::vector<Outgoing> on_timer(Instant now);
    /// Ends the session with ERROR 0 unless it already finished.
    std::vector<Outgoing> abort(const std::string& message, Instant now);

    std::optional<Instant> deadline() const;
    Phase phase() const { return phase_; }
    /// Done or Failed, and any post-transfer dally period has elapsed.
    bool finished() const;
    bool succeeded() const { return phase_ == Phase::Done; }
    const SessionReport& report() const { return report_; }
    /// Data received by a client read.
    const Bytes& received() const { return file_; }
    /// Set once the key exchange completed on either side.
    const std::optional<record::SessionKeys>& session_keys() const { return keys_; }

private:
    TransferSession(Role role, SessionConfig config, Rng rng);

    void send(std::vector<Outgoing>& out, const net::Endpoint& to, const Packet& packet);
    void fail(std::vector<Outgoing>& out, tftp::ErrorCode code, const std::string& message, Instant now,
              bool notify_peer = true);
    void finish_ok(Instant now);

    void start_client(std::vector<Outgoing>& out, Instant now);
    void start_server(std::vector<Outgoing>& out, Instant now);
    void send_control(std::vector<Outgoing>& out, Bytes packet, Instant now);

    void begin_sending(std::vector<Outgoing>& out, Instant now);
    void begin_receiving(Instant now);
    void apply_sender(std::vector<Outgoing>& out, const arq::SenderEvent& event, Instant now);
    void handle_data(std::vector<Outgoing>& out, const Data& data, Instant now);
    bool accept_payload(std::vector<Outgoing>& out, const Bytes& payload, Instant now);

    bool check_oack(std::vector<Outgoing>& out, const Oack& oack, Instant now);

    Role role_;
    Phase phase_ = Phase::Negotiate;
    SessionConfig config_;
    Rng rng_;

    net::Endpoint peer_;
    bool peer_locked_ = false;
    const KeyStore* keystore_ = nullptr;
    FileStore* files_ = nullptr;
    Request request_;

    bool secure_ = false;
    SecurityOptions sec_;
    std::optional<cs::PublicKey> recipient_pk_;
    std::optional<cs::KeyPair> own_keys_;

    Bytes file_;

    // Request / OACK / ACK 0 retransmission while waiting for the peer.
    Bytes control_;
    bool awaiting_control_ = false;
    unsigned control_retries_ = 0;
    std::optional<Instant> control_deadline_;

    arq::Config arq_config_;
    bool sending_ = false;
    arq::SenderState sender_;
    std::size_t payload_count_ = 0;
    std::size_t acked_ = 0;

    bool receiving_ = false;
    arq::ReceiverState receiver_;
    std::uint64_t delivered_ = 0;
    std::vector<Bytes> key_chunks_;
    std::optional<record::SessionKeys> keys_;
    Instant last_activity_{0};

    Instant started_{0};
    Instant kx_started_{0};
    std::optional<Instant> dally_until_;
    bool dallied_ = false;

    SessionReport report_;
};

}  // namespace tftps::tftp
