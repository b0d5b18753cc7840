#include "nanoua/transport.hpp"

#include <algorithm>
#include <cstring>

#include "nanoua/bytes.hpp"

namespace nanoua::transport {

namespace {

constexpr const char* kTypeNames[] = {"HEL", "ACK", "ERR", "OPN", "CLO", "MSG"};

bool known_flag(char f) { return f == 'C' || f == 'F' || f == 'A'; }

std::optional<MsgType> type_from_bytes(const uint8_t* p) {
    for (size_t i = 0; i < std::size(kTypeNames); ++i)
        if (std::memcmp(p, kTypeNames[i], 3) == 0) return MsgType(i);
    return std::nullopt;
}

uint32_t read_le32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

void put_frame_header(ByteWriter& w, MsgType t, ChunkFlag f) {
    w.bytes(reinterpret_cast<const uint8_t*>(msg_type_name(t)), 3);
    w.u8(uint8_t(f));
    w.u32(0);  // total size, patched by take_frame
}

std::vector<uint8_t> take_frame(ByteWriter& w) {
    w.patch_u32(4, uint32_t(w.size()));
    return w.take();
}

void put_string(ByteWriter& w, const UaString& s) {
    if (!s) {
        w.u32(0xFFFFFFFF);
        return;
    }
    w.u32(uint32_t(s->size()));
    w.bytes(reinterpret_cast<const uint8_t*>(s->data()), s->size());
}

void put_byte_string(ByteWriter& w, const ByteString& b) {
    if (!b) {
        w.u32(0xFFFFFFFF);
        return;
    }
    w.u32(uint32_t(b->size()));
    w.bytes(b->data(), b->size());
}

// Shared helper for the frame decoders: validates the 8-byte header and that
// the declared size matches the span handed in (FrameBuffer guarantees this
// for frames it carved; direct callers must pass exactly one frame).
template <typename T>
bool open_frame(Decoded<T>& out, std::span<const uint8_t> frame, MsgType expected,
                FrameHeader& hdr) {
    const auto h = decode_frame_header(frame);
    if (!h.ok()) {
        out.error = h.error;
        return false;
    }
    if (h.value.type != expected || h.value.size != frame.size()) {
        out.error = DecodeError::Malformed;
        return false;
    }
    hdr = h.value;
    return true;
}

bool read_string(ByteReader& r, UaString& out, const DecodeLimits& lim, DecodeError& err) {
    const int32_t len = r.i32();
    if (r.truncated()) {
        err = DecodeError::Truncated;
        return false;
    }
    if (len == -1) {
        out = std::nullopt;
        return true;
    }
    if (len < 0) {
        err = DecodeError::Malformed;
        return false;
    }
    if (uint32_t(len) > lim.max_string_bytes) {
        err = DecodeError::LimitExceeded;
        return false;
    }
    const auto v = r.view(size_t(len));
    if (r.truncated()) {
        err = DecodeError::Truncated;
        return false;
    }
    out = std::string(reinterpret_cast<const char*>(v.data()), v.size());
    return true;
}

bool read_byte_string(ByteReader& r, ByteString& out, const DecodeLimits& lim, DecodeError& err) {
    const int32_t len = r.i32();
    if (r.truncated()) {
        err = DecodeError::Truncated;
        return false;
    }
    if (len == -1) {
        out = std::nullopt;
        return true;
    }
    if (len < 0) {
        err = DecodeError::Malformed;
        return false;
    }
    if (uint32_t(len) > lim.max_string_bytes) {
        err = DecodeError::LimitExceeded;
        return false;
    }
    const auto v = r.view(size_t(len));
    if (r.truncated()) {
        err = DecodeError::Truncated;
        return false;
    }
    out = std::vector<uint8_t>(v.begin(), v.end());
    return true;
}

}  // namespace

const char* msg_type_name(MsgType t) { return kTypeNames[size_t(t)]; }

TransportLimits negotiate(const TransportLimits& client, const TransportLimits& server) {
    // 0 means unbounded for the message size and chunk count, so it loses
    // against any explicit bound from the other side.
    const auto min0 = [](uint32_t a, uint32_t b) {
        if (a == 0) return b;
        if (b == 0) return a;
        return std::min(a, b);
    };
    TransportLimits n;
    n.protocol_version = std::min(client.protocol_version, server.protocol_version);
    n.receive_buffer_size = std::min(client.receive_buffer_size, server.receive_buffer_size);
    n.send_buffer_size = std::min(client.send_buffer_size, server.send_buffer_size);
    n.max_message_size = min0(client.max_message_size, server.max_message_size);
    n.max_chunk_count = min0(client.max_chunk_count, server.max_chunk_count);
    return n;
}

// ------------------------------------------------------------ frame codecs

std::vector<uint8_t> encode_hello(const Hello& h) {
    ByteWriter w;
    put_frame_header(w, MsgType::HEL, ChunkFlag::Final);
    w.u32(h.limits.protocol_version);
    w.u32(h.limits.receive_buffer_size);
    w.u32(h.limits.send_buffer_size);
    w.u32(h.limits.max_message_size);
    w.u32(h.limits.max_chunk_count);
    put_string(w, h.endpoint_url);
    return take_frame(w);
}

std::vector<uint8_t> encode_acknowledge(const Acknowledge& a) {
    ByteWriter w;
    put_frame_header(w, MsgType::ACK, ChunkFlag::Final);
    w.u32(a.limits.protocol_version);
    w.u32(a.limits.receive_buffer_size);
    w.u32(a.limits.send_buffer_size);
    w.u32(a.limits.max_message_size);
    w.u32(a.limits.max_chunk_count);
    return take_frame(w);
}

std::vector<uint8_t> encode_error(const ErrorMessage& e) {
    ByteWriter w;
    put_frame_header(w, MsgType::ERR, ChunkFlag::Final);
    w.u32(e.code);
    put_string(w, e.reason);
    return take_frame(w);
}

std::vector<uint8_t> encode_chunk(const MessageChunk& c) {
    ByteWriter w;
    put_frame_header(w, c.type, c.flag);
    w.u32(c.secure_channel_id);
    if (c.type == MsgType::OPN) {
        put_string(w, c.security_policy_uri);
        put_byte_string(w, c.sender_certificate);
        put_byte_string(w, c.receiver_thumbprint);
    } else {
        w.u32(c.token_id);
    }
    w.u32(c.sequence_number);
    w.u32(c.request_id);
    w.bytes(c.body.data(), c.body.size());
    return take_frame(w);
}

Decoded<FrameHeader> decode_frame_header(std::span<const uint8_t> frame) {
    Decoded<FrameHeader> out;
    if (frame.size() < kFrameHeaderBytes) {
        out.error = DecodeError::Truncated;
        return out;
    }
    const auto type = type_from_bytes(frame.data());
    if (!type || !known_flag(char(frame[3]))) {
        out.error = DecodeError::Malformed;
        return out;
    }
    out.value.type = *type;
    out.value.flag = ChunkFlag(char(frame[3]));
    out.value.size = read_le32(frame.data() + 4);
    out.consumed = kFrameHeaderBytes;
    if (out.value.size < kFrameHeaderBytes) out.error = DecodeError::Malformed;
    return out;
}

Decoded<Hello> decode_hello(std::span<const uint8_t> frame, const DecodeLimits& lim) {
    Decoded<Hello> out;
    FrameHeader hdr;
    if (!open_frame(out, frame, MsgType::HEL, hdr)) return out;
    ByteReader r(frame.subspan(kFrameHeaderBytes));
    out.value.limits.protocol_version = r.u32();
    out.value.limits.receive_buffer_size = r.u32();
    out.value.limits.send_buffer_size = r.u32();
    out.value.limits.max_message_size = r.u32();
    out.value.limits.max_chunk_count = r.u32();
    if (r.truncated()) {
        out.error = DecodeError::Truncated;
        return out;
    }
    if (!read_string(r, out.value.endpoint_url, lim, out.error)) return out;
    if (r.remaining() != 0) {
        out.error = DecodeError::Malformed;
        return out;
    }
    out.consumed = frame.size();
    return out;
}

Decoded<Acknowledge> decode_acknowledge(std::span<const uint8_t> frame) {
    Decoded<Acknowledge> out;
    FrameHeader hdr;
    if (!open_frame(out, frame, MsgType::ACK, hdr)) return out;
    ByteReader r(frame.subspan(kFrameHeaderBytes));
    out.value.limits.protocol_version = r.u32();
    out.value.limits.receive_buffer_size = r.u32();
    out.value.limits.send_buffer_size = r.u32();
    out.value.limits.max_message_size = r.u32();
    out.value.limits.max_chunk_count = r.u32();
    if (r.truncated()) {
        out.error = DecodeError::Truncated;
        return out;
    }
    if (r.remaining() != 0) {
        out.error = DecodeError::Malformed;
        return out;
    }
    out.consumed = frame.size();
    return out;
}

Decoded<ErrorMessage> decode_error(std::span<const uint8_t> frame, const DecodeLimits& lim) {
    Decoded<ErrorMessage> out;
    FrameHeader hdr;
    if (!open_frame(out, frame, MsgType::ERR, hdr)) return out;
    ByteReader r(frame.subspan(kFrameHeaderBytes));
    out.value.code = r.u32();
    if (r.truncated()) {
        out.error = DecodeError::Truncated;
        return out;
    }
    if (!read_string(r, out.value.reason, lim, out.error)) return out;
    if (r.remaining() != 0) {
        out.error = DecodeError::Malformed;
        return out;
    }
    out.consumed = frame.size();
    return out;
}

Decoded<MessageChunk> decode_chunk(std::span<const uint8_t> frame, const DecodeLimits& lim) {
    Decoded<MessageChunk> out;
    const auto h = decode_frame_header(frame);
    if (!h.ok()) {
        out.error = h.error;
        return out;
    }
    if (h.value.type == MsgType::HEL || h.value.type == MsgType::ACK ||
        h.value.type == MsgType::ERR || h.value.size != frame.size()) {
        out.error = DecodeError::Malformed;
        return out;
    }
    out.value.type = h.value.type;
    out.value.flag = h.value.flag;
    ByteReader r(frame.subspan(kFrameHeaderBytes));
    out.value.secure_channel_id = r.u32();
    if (h.value.type == MsgType::OPN) {
        if (!read_string(r, out.value.security_policy_uri, lim, out.error)) return out;
        if (!read_byte_string(r, out.value.sender_certificate, lim, out.error)) return out;
        if (!read_byte_string(r, out.value.receiver_thumbprint, lim, out.error)) return out;
    } else {
        out.value.token_id = r.u32();
    }
    out.value.sequence_number = r.u32();
    out.value.request_id = r.u32();
    if (r.truncated()) {
        out.error = DecodeError::Truncated;
        return out;
    }
    const auto body = r.view(r.remaining());
    out.value.body.assign(body.begin(), body.end());
    out.consumed = frame.size();
    return out;
}

// ------------------------------------------------------------ frame buffer

void FrameBuffer::scan() {
    if (fatal_ != status::Good || buffered() < kFrameHeaderBytes) return;
    const uint8_t* p = data_.data() + consumed_;
    if (!type_from_bytes(p) || !known_flag(char(p[3]))) {
        fatal_ = status::BadTcpMessageTypeInvalid;
        return;
    }
    const uint32_t size = read_le32(p + 4);
    if (size < kFrameHeaderBytes) {
        fatal_ = status::BadTcpMessageTypeInvalid;
    } else if (size > cap_) {
        fatal_ = status::BadTcpMessageTooLarge;
    }
}

uint32_t FrameBuffer::push(std::span<const uint8_t> data) {
    if (fatal_ != status::Good) return fatal_;
    data_.insert(data_.end(), data.begin(), data.end());
    scan();
    return fatal_;
}

std::optional<std::vector<uint8_t>> FrameBuffer::next_frame() {
    scan();
    if (fatal_ != status::Good || buffered() < kFrameHeaderBytes) return std::nullopt;
    const uint32_t size = read_le32(data_.data() + consumed_ + 4);
    if (buffered() < size) return std::nullopt;
    std::vector<uint8_t> frame(data_.begin() + long(consumed_),
                               data_.begin() + long(consumed_ + size));
    consumed_ += size;
    if (consumed_ == data_.size()) {
        data_.clear();
        consumed_ = 0;
    } else if (consumed_ > 4 * size_t(cap_)) {
        data_.erase(data_.begin(), data_.begin() + long(consumed_));
        consumed_ = 0;
    }
    scan();  // validate the next header as soon as it is visible
    return frame;
}

// -------------------------------------------------------- split/reassemble

ChunkSplit split_into_chunks(std::span<const uint8_t> msg, const TransportLimits& limits,
                             uint32_t channel_id, uint32_t token_id, uint32_t request_id,
                             uint32_t first_sequence_number) {
    ChunkSplit out;
    if (limits.send_buffer_size <= kChunkHeaderBytes ||
        (limits.max_message_size != 0 && msg.size() > limits.max_message_size)) {
        out.status = status::BadRequestTooLarge;
        return out;
    }
    const size_t cap = limits.send_buffer_size - kChunkHeaderBytes;
    const size_t count = msg.empty() ? 1 : (msg.size() + cap - 1) / cap;
    if (limits.max_chunk_count != 0 && count > limits.max_chunk_count) {
        out.status = status::BadRequestTooLarge;
        return out;
    }
    out.chunks.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        MessageChunk c;
        c.type = MsgType::MSG;
        c.flag = (i + 1 == count) ? ChunkFlag::Final : ChunkFlag::Intermediate;
        c.secure_channel_id = channel_id;
        c.token_id = token_id;
        c.sequence_number = first_sequence_number + uint32_t(i);
        c.request_id = request_id;
        const size_t off = i * cap;
        const size_t n = std::min(cap, msg.size() - off);
        c.body.assign(msg.begin() + long(off), msg.begin() + long(off + n));
        out.chunks.push_back(std::move(c));
    }
    return out;
}

uint32_t Reassembler::check_sequence(uint32_t seq) {
    if (expected_seq_ && seq != *expected_seq_) return status::BadSequenceNumberInvalid;
    expected_seq_ = seq + 1;
    return status::Good;
}

Reassembler::Result Reassembler::feed(const MessageChunk& chunk) {
    Result r;
    if ((r.status = check_sequence(chunk.sequence_number)) != status::Good) return r;
    if (skipping_) {
        // Draining the remainder of a request that already overflowed.
        if (chunk.request_id != request_id_) {
            r.status = status::BadTcpMessageTypeInvalid;
            return r;
        }
        if (chunk.flag != ChunkFlag::Intermediate) {
            skipping_ = false;
            collecting_ = false;
            r.aborted = chunk.flag == ChunkFlag::Abort;
        }
        return r;
    }
    if (chunk.flag == ChunkFlag::Abort) {
        partial_.clear();
        collecting_ = false;
        r.aborted = true;
        return r;
    }
    if (collecting_ && chunk.request_id != request_id_) {
        partial_.clear();
        collecting_ = false;
        r.status = status::BadTcpMessageTypeInvalid;
        return r;
    }
    if (!collecting_) {
        collecting_ = true;
        request_id_ = chunk.request_id;
    }
    partial_.insert(partial_.end(), chunk.body.begin(), chunk.body.end());
    if (partial_.size() > capacity_) {
        r.status = status::BadTcpMessageTooLarge;
        r.discarded = std::move(partial_);
        partial_.clear();
        if (chunk.flag == ChunkFlag::Intermediate) {
            skipping_ = true;  // request_id_ stays set to match the drain
        } else {
            collecting_ = false;
        }
        return r;
    }
    if (chunk.flag == ChunkFlag::Final) {
        r.message = std::move(partial_);
        partial_.clear();
        collecting_ = false;
    }
    return r;
}

// --------------------------------------------------------------- connection

Connection::Connection(const ConnectionConfig& cfg, Backend& backend, Clock& clock,
                       ChannelIdAllocator& channel_ids)
    : cfg_(cfg),
      backend_(backend),
      clock_(clock),
      channel_ids_(channel_ids),
      frames_(cfg.capabilities.receive_buffer_size) {}

ConnectionOutput Connection::feed(std::span<const uint8_t> bytes) {
    ConnectionOutput out;
    if (state_ == State::Closed) return out;
    frames_.push(bytes);
    while (state_ != State::Closed) {
        auto frame = frames_.next_frame();
        if (!frame) break;
        handle_frame(out, *frame);
    }
    if (state_ != State::Closed && frames_.fatal() != status::Good)
        fail_connection(out, frames_.fatal(), "malformed frame header");
    return out;
}

void Connection::on_disconnect() {
    if (state_ == State::Closed) return;
    teardown_channel();
    state_ = State::Closed;
}

size_t Connection::reassembly_bytes() const {
    return reassembler_ ? reassembler_->buffered() : 0;
}

void Connection::handle_frame(ConnectionOutput& out, std::span<const uint8_t> frame) {
    switch (decode_frame_header(frame).value.type) {
        case MsgType::HEL: handle_hello(out, frame); return;
        case MsgType::OPN: handle_open(out, frame); return;
        case MsgType::CLO: handle_close(out, frame); return;
        case MsgType::MSG: handle_message(out, frame); return;
        case MsgType::ERR:
            // The peer reported an error; answering it would be noise.
            teardown_channel();
            state_ = State::Closed;
            out.close = true;
            return;
        case MsgType::ACK:
            fail_connection(out, status::BadTcpMessageTypeInvalid, "unexpected ACK from client");
            return;
    }
}

void Connection::handle_hello(ConnectionOutput& out, std::span<const uint8_t> frame) {
    if (state_ != State::AwaitHello) {
        fail_connection(out, status::BadTcpMessageTypeInvalid, "second Hello");
        return;
    }
    if (frame.size() > kMaxHelloBytes) {
        fail_connection(out, status::BadTcpMessageTooLarge, "Hello frame too large");
        return;
    }
    const auto h = decode_hello(frame);
    if (!h.ok()) {
        fail_connection(out,
                        h.error == DecodeError::LimitExceeded ? status::BadTcpEndpointUrlInvalid
                                                              : status::BadDecodingError,
                        "malformed Hello");
        return;
    }
    if (h.value.limits.protocol_version < cfg_.min_protocol_version) {
        fail_connection(out, status::BadProtocolVersionUnsupported,
                        "protocol version below server minimum");
        return;
    }
    if (h.value.limits.receive_buffer_size < kMinBufferSize ||
        h.value.limits.send_buffer_size < kMinBufferSize) {
        fail_connection(out, status::BadTcpMessageTooLarge, "client buffers below 8192");
        return;
    }
    hello_version_ = h.value.limits.protocol_version;
    negotiated_ = negotiate(h.value.limits, cfg_.capabilities);
    out.frames.push_back(encode_acknowledge(Acknowledge{negotiated_}));
    state_ = State::AwaitOpen;
}

void Connection::handle_open(ConnectionOutput& out, std::span<const uint8_t> frame) {
    if (state_ == State::AwaitHello) {
        fail_connection(out, status::BadTcpMessageTypeInvalid, "OPN before Hello");
        return;
    }
    const auto c = decode_chunk(frame);
    if (!c.ok()) {
        fail_connection(out, status::BadDecodingError, "malformed OPN chunk");
        return;
    }
    const auto& chunk = c.value;
    if (chunk.flag != ChunkFlag::Final) {
        fail_connection(out, status::BadTcpMessageTypeInvalid, "chunked OPN");
        return;
    }
    if (!chunk.security_policy_uri || *chunk.security_policy_uri != kSecurityPolicyNoneUri) {
        fail_connection(out, status::BadSecurityPolicyRejected, "security policy not None");
        return;
    }
    if ((chunk.sender_certificate && !chunk.sender_certificate->empty()) ||
        (chunk.receiver_thumbprint && !chunk.receiver_thumbprint->empty())) {
        fail_connection(out, status::BadSecurityPolicyRejected, "certificate under policy None");
        return;
    }
    if (state_ == State::Open) {
        if (chunk.secure_channel_id != channel_id_) {
            fail_connection(out, status::BadTcpSecureChannelUnknown, "OPN channel id mismatch");
            return;
        }
        if (!reassembler_->idle()) {
            fail_channel(out, status::BadTcpMessageTypeInvalid, "OPN inside a chunked request");
            return;
        }
        if (reassembler_->check_sequence(chunk.sequence_number) != status::Good) {
            fail_channel(out, status::BadSequenceNumberInvalid, "OPN sequence number");
            return;
        }
    } else if (chunk.secure_channel_id != 0) {
        fail_connection(out, status::BadTcpSecureChannelUnknown, "channel id on first OPN");
        return;
    }
    const auto req = decode_service(chunk.body);
    if (!req.ok() || !std::holds_alternative<OpenSecureChannelRequest>(req.value.body)) {
        fail_connection(out, status::BadDecodingError, "OPN body is not an open request");
        return;
    }
    const auto& body = std::get<OpenSecureChannelRequest>(req.value.body);
    if (body.client_protocol_version != hello_version_) {
        fail_connection(out, status::BadProtocolVersionUnsupported,
                        "OPN protocol version differs from Hello");
        return;
    }
    if (body.security_mode != 1) {
        fail_connection(out, status::BadSecurityModeRejected, "security mode not None");
        return;
    }
    if (body.request_type > 1) {
        fail_connection(out, status::BadRequestTypeInvalid, "unknown OPN request type");
        return;
    }
    const bool renew = body.request_type == 1;
    if (renew != (state_ == State::Open)) {
        fail_connection(out, status::BadRequestTypeInvalid,
                        renew ? "renew without a channel" : "issue on an open channel");
        return;
    }
    if (!renew) {
        channel_id_ = channel_ids_.next();
        next_token_number_ = 1;
        server_seq_ = 1;
        prev_token_id_ = 0;
        reassembler_.emplace(cfg_.message_buffer_bytes);
        reassembler_->check_sequence(chunk.sequence_number);  // first chunk fixes the base
    } else {
        prev_token_id_ = token_id_;
    }
    token_id_ = next_token_number_++;

    const DateTime now = clock_.now();
    const uint32_t lifetime =
        body.requested_lifetime == 0
            ? cfg_.max_token_lifetime_ms
            : std::min(body.requested_lifetime, cfg_.max_token_lifetime_ms);
    OpenSecureChannelResponse resp;
    resp.header.timestamp = now;
    resp.header.request_handle = body.header.request_handle;
    resp.header.service_result = status::Good;
    resp.server_protocol_version = 0;
    resp.security_token = ChannelSecurityToken{channel_id_, token_id_, now, lifetime};
    resp.server_nonce = std::nullopt;

    MessageChunk rc;
    rc.type = MsgType::OPN;
    rc.flag = ChunkFlag::Final;
    rc.secure_channel_id = channel_id_;
    rc.security_policy_uri = std::string(kSecurityPolicyNoneUri);
    rc.sequence_number = server_seq_++;
    rc.request_id = chunk.request_id;
    rc.body = encode_service(ServiceMessage{msgid::OpenSecureChannelResponse, resp});
    out.frames.push_back(encode_chunk(rc));
    state_ = State::Open;
}

void Connection::handle_close(ConnectionOutput& out, std::span<const uint8_t> frame) {
    if (state_ != State::Open) {
        fail_connection(out, status::BadTcpSecureChannelUnknown, "CLO before OPN");
        return;
    }
    const auto c = decode_chunk(frame);
    if (!c.ok()) {
        fail_connection(out, status::BadDecodingError, "malformed CLO chunk");
        return;
    }
    if (c.value.secure_channel_id != channel_id_) {
        fail_connection(out, status::BadTcpSecureChannelUnknown, "CLO channel id mismatch");
        return;
    }
    // The channel is going away regardless, so the sequence check result is
    // moot; it still advances the counter for uniformity. No response to CLO.
    reassembler_->check_sequence(c.value.sequence_number);
    teardown_channel();
    state_ = State::Closed;
    out.close = true;
}

void Connection::handle_message(ConnectionOutput& out, std::span<const uint8_t> frame) {
    if (state_ != State::Open) {
        fail_connection(out, status::BadTcpSecureChannelUnknown, "MSG before OPN");
        return;
    }
    const auto c = decode_chunk(frame);
    if (!c.ok()) {
        fail_connection(out, status::BadDecodingError, "malformed MSG chunk");
        return;
    }
    const auto& chunk = c.value;
    if (chunk.secure_channel_id != channel_id_) {
        fail_connection(out, status::BadTcpSecureChannelUnknown, "unknown channel id");
        return;
    }
    if (chunk.token_id != token_id_ &&
        (prev_token_id_ == 0 || chunk.token_id != prev_token_id_)) {
        fail_channel(out, status::BadSecureChannelTokenUnknown, "unknown token id");
        return;
    }
    auto r = reassembler_->feed(chunk);
    switch (r.status) {
        case status::Good:
            break;
        case status::BadTcpMessageTooLarge: {
            // Oversized request: in-channel fault, channel survives.
            const auto handle = peek_request_handle(r.discarded);
            send_response(out, chunk.request_id, {},
                          encode_service_fault(clock_.now(), handle.value_or(0),
                                               status::BadTcpMessageTooLarge));
            return;
        }
        case status::BadSequenceNumberInvalid:
            fail_channel(out, r.status, "sequence number gap or repeat");
            return;
        default:
            fail_channel(out, r.status, "interleaved request ids");
            return;
    }
    if (r.message) dispatch_request(out, chunk.request_id, *r.message);
}

void Connection::dispatch_request(ConnectionOutput& out, uint32_t request_id,
                                  std::span<const uint8_t> message) {
    send_response(out, request_id, message, backend_.on_request(channel_id_, message));
}

void Connection::send_response(ConnectionOutput& out, uint32_t request_id,
                               std::span<const uint8_t> request, std::vector<uint8_t> response) {
    auto split = split_into_chunks(response, negotiated_, channel_id_, token_id_, request_id,
                                   server_seq_);
    if (!split.ok()) {
        // The response cannot fit the client's limits; a fault always can,
        // since buffers are never below 8192.
        const auto handle = peek_request_handle(request);
        response = encode_service_fault(clock_.now(), handle.value_or(0),
                                        status::BadResponseTooLarge);
        split = split_into_chunks(response, negotiated_, channel_id_, token_id_, request_id,
                                  server_seq_);
    }
    for (auto& ch : split.chunks) out.frames.push_back(encode_chunk(ch));
    server_seq_ += uint32_t(split.chunks.size());
}

void Connection::fail_connection(ConnectionOutput& out, uint32_t code, const char* reason) {
    out.frames.push_back(encode_error(ErrorMessage{code, std::string(reason)}));
    teardown_channel();
    state_ = State::Closed;
    out.close = true;
}

void Connection::fail_channel(ConnectionOutput& out, uint32_t code, const char* reason) {
    out.frames.push_back(encode_error(ErrorMessage{code, std::string(reason)}));
    teardown_channel();
    state_ = State::AwaitOpen;
}

void Connection::teardown_channel() {
    if (channel_id_ != 0) backend_.on_channel_closed(channel_id_);
    channel_id_ = 0;
    token_id_ = 0;
    prev_token_id_ = 0;
    reassembler_.reset();
}

}  // namespace nanoua::transport
