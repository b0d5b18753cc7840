#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nanoua/codec.hpp"
#include "nanoua/status.hpp"
#include "nanoua/types.hpp"

// OPC UA TCP transport: Hello/Acknowledge/Error connection setup, secure
// channels restricted to security policy None, and chunk-level message
// segmentation. Every frame starts with 3 ASCII type bytes, one chunk-flag
// byte, and a uint32 total size; everything is little-endian.
//
// Error containment follows three tiers: violations of the connection
// protocol (bad Hello, unknown frame types, frames over the receive buffer)
// answer ERR and close the TCP connection; chunk-sequencing violations answer
// ERR and close only the secure channel, leaving the connection free to open
// a new one; a request that reassembles beyond the per-stage message buffer
// answers an in-channel ServiceFault and the channel survives.
namespace nanoua::transport {

inline constexpr const char* kSecurityPolicyNoneUri =
    "http://opcfoundation.org/UA/SecurityPolicy#None";

enum class MsgType : uint8_t { HEL, ACK, ERR, OPN, CLO, MSG };

const char* msg_type_name(MsgType t);

enum class ChunkFlag : char { Intermediate = 'C', Final = 'F', Abort = 'A' };

// Frame header: type + flag + total size (header included).
inline constexpr uint32_t kFrameHeaderBytes = 8;
// MSG/CLO overhead on top of the body: frame header, channel id, token id,
// sequence number, request id. Chunk body capacity = sendBufferSize minus this.
inline constexpr uint32_t kChunkHeaderBytes = 24;
// Part 6 floor for the negotiated buffer sizes; below it the Hello is refused.
inline constexpr uint32_t kMinBufferSize = 8192;
// Cap on the Hello frame itself (it precedes any negotiation).
inline constexpr uint32_t kMaxHelloBytes = 4096;

struct TransportLimits {
    uint32_t protocol_version = 0;
    uint32_t receive_buffer_size = 0;
    uint32_t send_buffer_size = 0;
    uint32_t max_message_size = 0;  // 0 = no limit
    uint32_t max_chunk_count = 0;   // 0 = no limit
    bool operator==(const TransportLimits&) const = default;
};

// What this server advertises: both buffers equal the per-stage message
// buffer, whole messages must fit one stage buffer, at most 4 chunks each.
inline constexpr TransportLimits kServerLimits{0, 8192, 8192, 8192, 4};

// Element-wise minimum of the two offers; 0 means "no limit" for
// maxMessageSize and maxChunkCount, so 0 loses against any bound.
TransportLimits negotiate(const TransportLimits& client, const TransportLimits& server);

struct Hello {
    TransportLimits limits;
    UaString endpoint_url;
    bool operator==(const Hello&) const = default;
};

struct Acknowledge {
    TransportLimits limits;
    bool operator==(const Acknowledge&) const = default;
};

struct ErrorMessage {
    uint32_t code = 0;
    UaString reason;
    bool operator==(const ErrorMessage&) const = default;
};

// One OPN/CLO/MSG frame. OPN carries the asymmetric security header (policy
// URI plus two null certificate fields under policy None); CLO and MSG carry
// the symmetric one (the token id).
struct MessageChunk {
    MsgType type = MsgType::MSG;
    ChunkFlag flag = ChunkFlag::Final;
    uint32_t secure_channel_id = 0;
    UaString security_policy_uri;    // OPN only
    ByteString sender_certificate;   // OPN only
    ByteString receiver_thumbprint;  // OPN only
    uint32_t token_id = 0;           // CLO/MSG only
    uint32_t sequence_number = 0;
    uint32_t request_id = 0;
    std::vector<uint8_t> body;
    bool operator==(const MessageChunk&) const = default;
};

struct FrameHeader {
    MsgType type = MsgType::HEL;
    ChunkFlag flag = ChunkFlag::Final;
    uint32_t size = 0;
    bool operator==(const FrameHeader&) const = default;
};

std::vector<uint8_t> encode_hello(const Hello& h);
std::vector<uint8_t> encode_acknowledge(const Acknowledge& a);
std::vector<uint8_t> encode_error(const ErrorMessage& e);
std::vector<uint8_t> encode_chunk(const MessageChunk& c);

Decoded<FrameHeader> decode_frame_header(std::span<const uint8_t> frame);
Decoded<Hello> decode_hello(std::span<const uint8_t> frame, const DecodeLimits& lim = {});
Decoded<Acknowledge> decode_acknowledge(std::span<const uint8_t> frame);
Decoded<ErrorMessage> decode_error(std::span<const uint8_t> frame, const DecodeLimits& lim = {});
Decoded<MessageChunk> decode_chunk(std::span<const uint8_t> frame, const DecodeLimits& lim = {});

// Accumulates raw TCP bytes and carves complete frames out of them. A header
// declaring an unknown type, an illegal flag, or a size outside
// [8, max_frame_bytes] latches a fatal status: the connection cannot recover
// because the stream offset is lost.
class FrameBuffer {
public:
    explicit FrameBuffer(uint32_t max_frame_bytes) : cap_(max_frame_bytes) {}

    // Appends bytes; returns fatal() so callers can bail out early.
    uint32_t push(std::span<const uint8_t> data);
    // Next complete frame, header included. nullopt when none is buffered
    // (or the stream is poisoned — check fatal()).
    std::optional<std::vector<uint8_t>> next_frame();

    uint32_t fatal() const { return fatal_; }
    size_t buffered() const { return data_.size() - consumed_; }

private:
    void scan();

    uint32_t cap_;
    uint32_t fatal_ = status::Good;
    std::vector<uint8_t> data_;
    size_t consumed_ = 0;
};

struct ChunkSplit {
    std::vector<MessageChunk> chunks;
    uint32_t status = status::Good;
    bool ok() const { return status == nanoua::status::Good; }
};

// Maximal-fill split of one service message into MSG chunks: every chunk but
// the last is full and flagged 'C', the last is flagged 'F'. Sequence numbers
// count up from first_sequence_number. Fails with BadRequestTooLarge when the
// message exceeds maxMessageSize or needs more than maxChunkCount chunks.
ChunkSplit split_into_chunks(std::span<const uint8_t> msg, const TransportLimits& limits,
                             uint32_t channel_id, uint32_t token_id, uint32_t request_id,
                             uint32_t first_sequence_number);

// Per-channel reassembly of MSG chunks into service messages, enforcing the
// strict +1 sequence rule and the stage message-buffer capacity. The first
// sequence number seen on the channel fixes the base; OPN/CLO frames consume
// sequence numbers too, so the connection routes theirs through
// check_sequence(). A request that overflows the buffer is reported once
// (status BadTcpMessageTooLarge, discarded bytes attached so the caller can
// still extract the request handle) and its remaining chunks are swallowed.
class Reassembler {
public:
    explicit Reassembler(uint32_t capacity) : capacity_(capacity) {}

    struct Result {
        uint32_t status = status::Good;
        std::optional<std::vector<uint8_t>> message;  // set when 'F' completes one
        std::vector<uint8_t> discarded;               // partial bytes of an overflowed request
        bool aborted = false;                         // 'A' dropped the partial message
    };

    Result feed(const MessageChunk& chunk);
    // Sequence bookkeeping for frames handled outside the reassembler:
    // validates strict succession and advances. Good or BadSequenceNumberInvalid.
    uint32_t check_sequence(uint32_t seq);

    size_t buffered() const { return partial_.size(); }
    bool idle() const { return partial_.empty() && !skipping_; }

private:
    uint32_t capacity_;
    std::optional<uint32_t> expected_seq_;
    std::vector<uint8_t> partial_;
    uint32_t request_id_ = 0;   // of the message being accumulated
    bool collecting_ = false;   // partial_/request_id_ are live
    bool skipping_ = false;     // draining the rest of an overflowed request
};

// Session/service layer behind the transport. on_request receives one
// reassembled service message and returns the complete response message
// (possibly a ServiceFault); on_channel_closed releases whatever state the
// layer bound to the channel.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::vector<uint8_t> on_request(uint32_t channel_id,
                                            std::span<const uint8_t> request) = 0;
    virtual void on_channel_closed(uint32_t channel_id) = 0;
};

// Time source for response headers and token lifetimes: the live server wraps
// the system clock, the simulator supplies its deterministic engine clock.
class Clock {
public:
    virtual ~Clock() = default;
    virtual DateTime now() = 0;
};

// Secure-channel id allocator. One instance per engine; ids are never reused
// within its lifetime. The live server keeps a single (atomic) allocator for
// the whole process; each simulator run constructs a fresh one so traces stay
// reproducible.
class ChannelIdAllocator {
public:
    virtual ~ChannelIdAllocator() = default;
    virtual uint32_t next() = 0;  // fresh, nonzero
};

struct ConnectionConfig {
    TransportLimits capabilities = kServerLimits;
    uint32_t min_protocol_version = 0;
    // Cap on the OPN requestedLifetime echo; a request of 0 means "no
    // preference" and gets the cap.
    uint32_t max_token_lifetime_ms = 3'600'000;
    // Capacity of the stage message buffer reassembled requests must fit.
    uint32_t message_buffer_bytes = 8192;
};

// Everything the connection wants done after a feed() call: frames to write
// back, in order, and whether to drop the TCP connection afterwards.
struct ConnectionOutput {
    std::vector<std::vector<uint8_t>> frames;
    bool close = false;
};

// The per-TCP-connection transport state machine. Strictly single-threaded;
// the caller owns the socket and pumps bytes through feed(). At most one
// secure channel exists per connection; closing the channel (sequence error)
// returns the connection to the await-OPN state, closing the connection kills
// both.
class Connection {
public:
    enum class State { AwaitHello, AwaitOpen, Open, Closed };

    Connection(const ConnectionConfig& cfg, Backend& backend, Clock& clock,
               ChannelIdAllocator& channel_ids);

    ConnectionOutput feed(std::span<const uint8_t> bytes);
    // The TCP peer vanished without CLO: free the channel, no output.
    void on_disconnect();

    State state() const { return state_; }
    uint32_t channel_id() const { return channel_id_; }
    const TransportLimits& negotiated() const { return negotiated_; }
    // Bytes of a partially reassembled request currently held for the
    // channel; the simulator charges them against the stage buffer budget.
    size_t reassembly_bytes() const;

private:
    void handle_frame(ConnectionOutput& out, std::span<const uint8_t> frame);
    void handle_hello(ConnectionOutput& out, std::span<const uint8_t> frame);
    void handle_open(ConnectionOutput& out, std::span<const uint8_t> frame);
    void handle_close(ConnectionOutput& out, std::span<const uint8_t> frame);
    void handle_message(ConnectionOutput& out, std::span<const uint8_t> frame);
    void dispatch_request(ConnectionOutput& out, uint32_t request_id,
                          std::span<const uint8_t> message);
    void send_response(ConnectionOutput& out, uint32_t request_id,
                       std::span<const uint8_t> request, std::vector<uint8_t> response);
    void fail_connection(ConnectionOutput& out, uint32_t code, const char* reason);
    void fail_channel(ConnectionOutput& out, uint32_t code, const char* reason);
    void teardown_channel();

    ConnectionConfig cfg_;
    Backend& backend_;
    Clock& clock_;
    ChannelIdAllocator& channel_ids_;

    State state_ = State::AwaitHello;
    FrameBuffer frames_;
    TransportLimits negotiated_;
    uint32_t hello_version_ = 0;

    uint32_t channel_id_ = 0;
    uint32_t token_id_ = 0;
    uint32_t prev_token_id_ = 0;  // grace window after a renew
    uint32_t next_token_number_ = 1;
    uint32_t server_seq_ = 1;
    std::optional<Reassembler> reassembler_;
};

}  // namespace nanoua::transport
