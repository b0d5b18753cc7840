#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "nanoua/codec.hpp"
#include "nanoua/status.hpp"
#include "nanoua/transport.hpp"
#include "test_util.hpp"

using namespace nanoua;
using namespace nanoua::transport;

namespace {

// 2026-01-01T00:00:00Z, same fixed instant the service tests use.
constexpr int64_t kTestTicks = 134116992000000000;

struct FixedClock final : Clock {
    DateTime now() override { return DateTime{kTestTicks}; }
};

struct CountingIds final : ChannelIdAllocator {
    uint32_t issued = 0;
    uint32_t next() override { return ++issued; }
};

// Records requests and channel closures; answers with a canned response or,
// by default, echoes the request bytes back.
struct RecordingBackend final : Backend {
    std::vector<std::vector<uint8_t>> requests;
    std::vector<uint32_t> request_channels;
    std::vector<uint32_t> closed;
    std::vector<uint8_t> canned;

    std::vector<uint8_t> on_request(uint32_t channel_id,
                                    std::span<const uint8_t> request) override {
        requests.emplace_back(request.begin(), request.end());
        request_channels.push_back(channel_id);
        if (!canned.empty()) return canned;
        return {request.begin(), request.end()};
    }
    void on_channel_closed(uint32_t channel_id) override { closed.push_back(channel_id); }
};

std::vector<uint8_t> opn_request_message(uint32_t handle, uint32_t request_type = 0,
                                         uint32_t lifetime = 600000,
                                         uint32_t protocol_version = 0) {
    OpenSecureChannelRequest r;
    r.header.timestamp = DateTime{kTestTicks};
    r.header.request_handle = handle;
    r.client_protocol_version = protocol_version;
    r.request_type = request_type;
    r.security_mode = 1;
    r.requested_lifetime = lifetime;
    return encode_service(ServiceMessage{msgid::OpenSecureChannelRequest, r});
}

MessageChunk opn_chunk(uint32_t channel_id, uint32_t seq, uint32_t request_id,
                       std::vector<uint8_t> body,
                       const char* policy = kSecurityPolicyNoneUri) {
    MessageChunk c;
    c.type = MsgType::OPN;
    c.flag = ChunkFlag::Final;
    c.secure_channel_id = channel_id;
    c.security_policy_uri = std::string(policy);
    c.sequence_number = seq;
    c.request_id = request_id;
    c.body = std::move(body);
    return c;
}

MessageChunk msg_chunk(uint32_t channel_id, uint32_t token, uint32_t seq, uint32_t request_id,
                       std::vector<uint8_t> body, ChunkFlag flag = ChunkFlag::Final) {
    MessageChunk c;
    c.type = MsgType::MSG;
    c.flag = flag;
    c.secure_channel_id = channel_id;
    c.token_id = token;
    c.sequence_number = seq;
    c.request_id = request_id;
    c.body = std::move(body);
    return c;
}

Hello client_hello(uint32_t recv = 65536, uint32_t send = 65536, uint32_t max_msg = 0,
                   uint32_t max_chunks = 0, uint32_t version = 0) {
    Hello h;
    h.limits = TransportLimits{version, recv, send, max_msg, max_chunks};
    h.endpoint_url = std::string("opc.tcp://localhost:4840/");
    return h;
}

// A connection plus its collaborators, with a hand-rolled client side.
struct Wire {
    FixedClock clock;
    CountingIds ids;
    RecordingBackend backend;
    Connection conn;
    uint32_t client_seq = 1;
    uint32_t channel = 0;
    uint32_t token = 0;

    explicit Wire(const ConnectionConfig& cfg = {}) : conn(cfg, backend, clock, ids) {}

    ConnectionOutput feed(const std::vector<uint8_t>& frame) { return conn.feed(frame); }

    // HEL/ACK + OPN exchange; returns the ACK'd limits.
    TransportLimits handshake(const Hello& hello = client_hello()) {
        auto out = feed(encode_hello(hello));
        REQUIRE(out.frames.size() == 1);
        const auto ack = decode_acknowledge(out.frames[0]);
        REQUIRE(ack.ok());
        out = feed(encode_chunk(opn_chunk(0, client_seq++, 1, opn_request_message(1))));
        REQUIRE(out.frames.size() == 1);
        const auto resp = decode_chunk(out.frames[0]);
        REQUIRE(resp.ok());
        REQUIRE(resp.value.type == MsgType::OPN);
        const auto body = decode_service(resp.value.body);
        REQUIRE(body.ok());
        const auto& opn = std::get<OpenSecureChannelResponse>(body.value.body);
        channel = opn.security_token.channel_id;
        token = opn.security_token.token_id;
        REQUIRE(channel != 0);
        return ack.value.limits;
    }

    ConnectionOutput request(std::vector<uint8_t> message, uint32_t request_id = 7) {
        return feed(encode_chunk(msg_chunk(channel, token, client_seq++, request_id,
                                           std::move(message))));
    }
};

std::vector<uint8_t> cat(const std::vector<std::vector<uint8_t>>& frames) {
    std::vector<uint8_t> all;
    for (const auto& f : frames) all.insert(all.end(), f.begin(), f.end());
    return all;
}

}  // namespace

TEST_CASE("connection frames match the reference stack encodings") {
    // Hex dumps generated with the node-opcua transport serializers.
    Hello h;
    h.limits = TransportLimits{0, 65536, 65536, 16777216, 4096};
    h.endpoint_url = std::string("opc.tcp://localhost:4840/");
    const std::string hel_hex =
        "48454c46390000000000000000000100000001000000000100100000190000006f70632e7463703a2f2f"
        "6c6f63616c686f73743a343834302f";
    CHECK(to_hex(encode_hello(h)) == hel_hex);

    Acknowledge a;
    a.limits = TransportLimits{0, 8192, 8192, 8192, 4};
    const std::string ack_hex = "41434b461c0000000000000000200000002000000020000004000000";
    CHECK(to_hex(encode_acknowledge(a)) == ack_hex);

    ErrorMessage e;
    e.code = status::BadTcpMessageTooLarge;
    e.reason = std::string("message too large");
    const std::string err_hex =
        "455252462100000000008080110000006d65737361676520746f6f206c61726765";
    CHECK(to_hex(encode_error(e)) == err_hex);

    // Null endpoint url and zeroed optional limits.
    Hello h2;
    h2.limits = TransportLimits{1, 8192, 8192, 0, 0};
    h2.endpoint_url = std::nullopt;
    const std::string hel2_hex = "48454c46200000000100000000200000002000000000000000000000ffffffff";
    CHECK(to_hex(encode_hello(h2)) == hel2_hex);

    // And the decoders invert all four.
    const auto dh = decode_hello(from_hex(hel_hex));
    REQUIRE(dh.ok());
    CHECK(dh.value == h);
    const auto da = decode_acknowledge(from_hex(ack_hex));
    REQUIRE(da.ok());
    CHECK(da.value == a);
    const auto de = decode_error(from_hex(err_hex));
    REQUIRE(de.ok());
    CHECK(de.value == e);
    const auto dh2 = decode_hello(from_hex(hel2_hex));
    REQUIRE(dh2.ok());
    CHECK(dh2.value == h2);
}

TEST_CASE("negotiate takes element-wise minima with zero as no-limit") {
    const TransportLimits server{0, 8192, 8192, 8192, 4};

    SUBCASE("client offers more than the server capability") {
        const auto n = negotiate(TransportLimits{0, 65536, 65536, 16777216, 4096}, server);
        CHECK(n == TransportLimits{0, 8192, 8192, 8192, 4});
    }
    SUBCASE("client offers exactly the capability") {
        CHECK(negotiate(server, server) == server);
    }
    SUBCASE("zero means unbounded and loses to any bound") {
        const auto n = negotiate(TransportLimits{0, 65536, 65536, 0, 0}, server);
        CHECK(n.max_message_size == 8192);
        CHECK(n.max_chunk_count == 4);
        const auto u = negotiate(TransportLimits{0, 9000, 9000, 0, 0},
                                 TransportLimits{0, 8192, 8192, 0, 0});
        CHECK(u.max_message_size == 0);
        CHECK(u.max_chunk_count == 0);
    }
    SUBCASE("protocol version is a plain minimum") {
        CHECK(negotiate(TransportLimits{3, 65536, 65536, 0, 0}, TransportLimits{2, 8192, 8192, 0, 0})
                  .protocol_version == 2);
    }
}

TEST_CASE("chunk frames lay out as header, security header, sequence header, body") {
    SUBCASE("OPN carries the asymmetric header; reference layout") {
        // Asymmetric security header hex confirmed against node-opcua.
        auto c = opn_chunk(0, 1, 2, {0x61, 0x62});
        const std::string expect =
            "4f504e4651000000"  // "OPN" 'F' size 81
            "00000000"          // channel 0
            "2f000000687474703a2f2f6f7063666f756e646174696f6e2e6f72672f55412f5365637572697479"
            "506f6c696379234e6f6e65ffffffffffffffff"  // policy None, null certs
            "0100000002000000"                        // sequence 1, request 2
            "6162";
        CHECK(to_hex(encode_chunk(c)) == expect);
        const auto d = decode_chunk(from_hex(expect));
        REQUIRE(d.ok());
        CHECK(d.value == c);
    }
    SUBCASE("MSG carries the token id") {
        auto c = msg_chunk(5, 6, 7, 8, {0x61, 0x62, 0x63});
        const std::string expect =
            "4d5347461b000000"  // "MSG" 'F' size 27
            "05000000"          // channel
            "06000000"          // token
            "0700000008000000"  // sequence, request
            "616263";
        CHECK(to_hex(encode_chunk(c)) == expect);
        const auto d = decode_chunk(from_hex(expect));
        REQUIRE(d.ok());
        CHECK(d.value == c);
    }
    SUBCASE("CLO matches MSG layout") {
        MessageChunk c;
        c.type = MsgType::CLO;
        c.flag = ChunkFlag::Final;
        c.secure_channel_id = 9;
        c.token_id = 10;
        c.sequence_number = 11;
        c.request_id = 12;
        const auto bytes = encode_chunk(c);
        CHECK(to_hex(bytes).substr(0, 8) == "434c4f46");
        CHECK(bytes.size() == kChunkHeaderBytes);
        const auto d = decode_chunk(bytes);
        REQUIRE(d.ok());
        CHECK(d.value == c);
    }
    SUBCASE("intermediate and abort flags survive the roundtrip") {
        for (ChunkFlag f : {ChunkFlag::Intermediate, ChunkFlag::Final, ChunkFlag::Abort}) {
            auto c = msg_chunk(1, 1, 1, 1, {0x00}, f);
            const auto d = decode_chunk(encode_chunk(c));
            REQUIRE(d.ok());
            CHECK(d.value.flag == f);
        }
    }
    SUBCASE("decode rejects truncation, wrong types, and size mismatches") {
        const auto good = encode_chunk(msg_chunk(1, 1, 1, 1, {0x61}));
        for (size_t n = 0; n < kChunkHeaderBytes; n++) {
            const auto d = decode_chunk(std::span(good).first(n));
            CHECK_FALSE(d.ok());
        }
        auto bad = good;
        bad[0] = 'H';
        bad[1] = 'E';
        bad[2] = 'L';
        CHECK_FALSE(decode_chunk(bad).ok());
        bad = good;
        bad.push_back(0x00);  // declared size no longer matches the span
        CHECK_FALSE(decode_chunk(bad).ok());
        CHECK_FALSE(decode_hello(encode_acknowledge(Acknowledge{})).ok());
    }
}

TEST_CASE("frame buffer carves frames out of an arbitrarily segmented stream") {
    const auto f1 = encode_hello(client_hello());
    const auto f2 = encode_acknowledge(Acknowledge{kServerLimits});
    const auto f3 = encode_chunk(msg_chunk(1, 1, 1, 1, {0x61, 0x62}));
    std::vector<uint8_t> stream = f1;
    stream.insert(stream.end(), f2.begin(), f2.end());
    stream.insert(stream.end(), f3.begin(), f3.end());

    SUBCASE("byte-at-a-time delivery yields the same frames") {
        FrameBuffer fb(8192);
        std::vector<std::vector<uint8_t>> got;
        for (uint8_t b : stream) {
            REQUIRE(fb.push(std::span(&b, 1)) == status::Good);
            while (auto f = fb.next_frame()) got.push_back(*f);
        }
        REQUIRE(got.size() == 3);
        CHECK(got[0] == f1);
        CHECK(got[1] == f2);
        CHECK(got[2] == f3);
        CHECK(fb.buffered() == 0);
    }
    SUBCASE("one push can carry many frames") {
        FrameBuffer fb(8192);
        REQUIRE(fb.push(stream) == status::Good);
        CHECK(fb.next_frame().value() == f1);
        CHECK(fb.next_frame().value() == f2);
        CHECK(fb.next_frame().value() == f3);
        CHECK_FALSE(fb.next_frame().has_value());
    }
    SUBCASE("unknown message types poison the stream") {
        FrameBuffer fb(8192);
        const std::string junk = "GET / HTTP/1.1\r\n";
        CHECK(fb.push(std::span(reinterpret_cast<const uint8_t*>(junk.data()), junk.size())) ==
              status::BadTcpMessageTypeInvalid);
        CHECK_FALSE(fb.next_frame().has_value());
    }
    SUBCASE("a size field below the header size poisons the stream") {
        std::vector<uint8_t> bad = {'M', 'S', 'G', 'F', 7, 0, 0, 0};
        FrameBuffer fb(8192);
        CHECK(fb.push(bad) == status::BadTcpMessageTypeInvalid);
    }
    SUBCASE("a size field over the receive buffer reports too-large") {
        std::vector<uint8_t> bad = {'M', 'S', 'G', 'F', 0x01, 0x20, 0, 0};  // 8193
        FrameBuffer fb(8192);
        CHECK(fb.push(bad) == status::BadTcpMessageTooLarge);
    }
    SUBCASE("poison after a valid frame still surfaces, and the frame first") {
        FrameBuffer fb(8192);
        auto both = f2;
        both.insert(both.end(), {'X', 'Y', 'Z', 'F', 8, 0, 0, 0});
        REQUIRE(fb.push(both) == status::Good);  // bad header not at the front yet
        CHECK(fb.next_frame().value() == f2);
        CHECK_FALSE(fb.next_frame().has_value());
        CHECK(fb.fatal() == status::BadTcpMessageTypeInvalid);
    }
}

TEST_CASE("split fills chunks maximally and respects the limits") {
    const TransportLimits lim{0, 8192, 8192, 8192, 4};
    const size_t cap = lim.send_buffer_size - kChunkHeaderBytes;

    SUBCASE("a message of exactly one body is a single final chunk") {
        std::vector<uint8_t> msg(cap, 0x5A);
        const auto s = split_into_chunks(msg, lim, 3, 4, 5, 10);
        REQUIRE(s.ok());
        REQUIRE(s.chunks.size() == 1);
        CHECK(s.chunks[0].flag == ChunkFlag::Final);
        CHECK(s.chunks[0].body == msg);
        CHECK(s.chunks[0].sequence_number == 10);
        CHECK(s.chunks[0].secure_channel_id == 3);
        CHECK(s.chunks[0].token_id == 4);
        CHECK(s.chunks[0].request_id == 5);
    }
    SUBCASE("two bodies plus one byte become C,C,F with maximal fill") {
        // The whole message must still fit maxMessageSize, so lift it.
        TransportLimits wide = lim;
        wide.max_message_size = 0;
        std::vector<uint8_t> msg(2 * cap + 1, 0x11);
        const auto s = split_into_chunks(msg, wide, 1, 1, 1, 1);
        REQUIRE(s.ok());
        REQUIRE(s.chunks.size() == 3);
        CHECK(s.chunks[0].flag == ChunkFlag::Intermediate);
        CHECK(s.chunks[1].flag == ChunkFlag::Intermediate);
        CHECK(s.chunks[2].flag == ChunkFlag::Final);
        CHECK(s.chunks[0].body.size() == cap);
        CHECK(s.chunks[1].body.size() == cap);
        CHECK(s.chunks[2].body.size() == 1);
        CHECK(s.chunks[0].sequence_number == 1);
        CHECK(s.chunks[1].sequence_number == 2);
        CHECK(s.chunks[2].sequence_number == 3);
        for (const auto& c : s.chunks)
            CHECK(encode_chunk(c).size() <= lim.send_buffer_size);
    }
    SUBCASE("an empty message still produces one (empty) final chunk") {
        const auto s = split_into_chunks({}, lim, 1, 1, 1, 1);
        REQUIRE(s.ok());
        REQUIRE(s.chunks.size() == 1);
        CHECK(s.chunks[0].body.empty());
        CHECK(s.chunks[0].flag == ChunkFlag::Final);
    }
    SUBCASE("exceeding maxMessageSize is BadRequestTooLarge") {
        std::vector<uint8_t> msg(lim.max_message_size + 1, 0);
        CHECK(split_into_chunks(msg, lim, 1, 1, 1, 1).status == status::BadRequestTooLarge);
    }
    SUBCASE("exceeding maxChunkCount is BadRequestTooLarge") {
        TransportLimits wide = lim;
        wide.max_message_size = 0;
        std::vector<uint8_t> msg(4 * cap + 1, 0);
        CHECK(split_into_chunks(msg, wide, 1, 1, 1, 1).status == status::BadRequestTooLarge);
        wide.max_chunk_count = 0;
        CHECK(split_into_chunks(msg, wide, 1, 1, 1, 1).ok());
    }
}

TEST_CASE("reassembler concatenates bodies and enforces order, abort, and capacity") {
    SUBCASE("C then F concatenates in order") {
        Reassembler r(8192);
        auto first = r.feed(msg_chunk(1, 1, 1, 9, {'a', 'b'}, ChunkFlag::Intermediate));
        CHECK(first.status == status::Good);
        CHECK_FALSE(first.message.has_value());
        auto second = r.feed(msg_chunk(1, 1, 2, 9, {'c', 'd'}));
        CHECK(second.status == status::Good);
        REQUIRE(second.message.has_value());
        CHECK(*second.message == std::vector<uint8_t>{'a', 'b', 'c', 'd'});
        CHECK(r.idle());
    }
    SUBCASE("abort discards the partial message and the channel lives on") {
        Reassembler r(8192);
        r.feed(msg_chunk(1, 1, 1, 9, {'a', 'b'}, ChunkFlag::Intermediate));
        auto aborted = r.feed(msg_chunk(1, 1, 2, 9, {}, ChunkFlag::Abort));
        CHECK(aborted.status == status::Good);
        CHECK(aborted.aborted);
        CHECK(r.idle());
        auto next = r.feed(msg_chunk(1, 1, 3, 10, {'x'}));
        REQUIRE(next.message.has_value());
        CHECK(*next.message == std::vector<uint8_t>{'x'});
    }
    SUBCASE("sequence gaps and repeats are BadSequenceNumberInvalid") {
        Reassembler r(8192);
        CHECK(r.feed(msg_chunk(1, 1, 1, 9, {'a'}, ChunkFlag::Intermediate)).status ==
              status::Good);
        CHECK(r.feed(msg_chunk(1, 1, 3, 9, {'b'})).status == status::BadSequenceNumberInvalid);
        Reassembler r2(8192);
        r2.feed(msg_chunk(1, 1, 5, 9, {'a'}, ChunkFlag::Intermediate));
        CHECK(r2.feed(msg_chunk(1, 1, 5, 9, {'b'})).status == status::BadSequenceNumberInvalid);
    }
    SUBCASE("the first chunk fixes the sequence base") {
        Reassembler r(8192);
        CHECK(r.feed(msg_chunk(1, 1, 41, 9, {'a'}, ChunkFlag::Intermediate)).status ==
              status::Good);
        CHECK(r.feed(msg_chunk(1, 1, 42, 9, {'b'})).status == status::Good);
    }
    SUBCASE("external frames advance the same sequence space") {
        Reassembler r(8192);
        CHECK(r.check_sequence(1) == status::Good);
        CHECK(r.feed(msg_chunk(1, 1, 2, 9, {'a'})).status == status::Good);
        CHECK(r.check_sequence(4) == status::BadSequenceNumberInvalid);
        CHECK(r.check_sequence(3) == status::Good);
    }
    SUBCASE("overflowing the stage buffer reports once and swallows the rest") {
        Reassembler r(8192);
        std::vector<uint8_t> half(8168, 0x22);
        CHECK(r.feed(msg_chunk(1, 1, 1, 9, half, ChunkFlag::Intermediate)).status ==
              status::Good);
        auto overflow = r.feed(msg_chunk(1, 1, 2, 9, half, ChunkFlag::Intermediate));
        CHECK(overflow.status == status::BadTcpMessageTooLarge);
        CHECK(overflow.discarded.size() == 2 * half.size());
        // Remaining chunks of the same request are drained silently.
        auto drained = r.feed(msg_chunk(1, 1, 3, 9, half, ChunkFlag::Intermediate));
        CHECK(drained.status == status::Good);
        CHECK_FALSE(drained.message.has_value());
        auto last = r.feed(msg_chunk(1, 1, 4, 9, half));
        CHECK(last.status == status::Good);
        CHECK_FALSE(last.message.has_value());
        CHECK(r.idle());
        // And the channel still works afterwards.
        auto next = r.feed(msg_chunk(1, 1, 5, 10, {'x'}));
        REQUIRE(next.message.has_value());
    }
    SUBCASE("an overflow on the final chunk needs no draining") {
        Reassembler r(100);
        std::vector<uint8_t> blob(101, 0x22);
        auto overflow = r.feed(msg_chunk(1, 1, 1, 9, blob));
        CHECK(overflow.status == status::BadTcpMessageTooLarge);
        CHECK(r.idle());
        auto next = r.feed(msg_chunk(1, 1, 2, 10, {'x'}));
        REQUIRE(next.message.has_value());
    }
    SUBCASE("a different request id inside a message is rejected") {
        Reassembler r(8192);
        r.feed(msg_chunk(1, 1, 1, 9, {'a'}, ChunkFlag::Intermediate));
        CHECK(r.feed(msg_chunk(1, 1, 2, 10, {'b'})).status == status::BadTcpMessageTypeInvalid);
    }
}

TEST_CASE("split and reassemble are mutual inverses on random messages") {
    std::mt19937 rng(0x7a57ed);
    const TransportLimits profiles[] = {
        {0, 8192, 8192, 8192, 4},    // the server's own limits
        {0, 65560, 65560, 0, 0},     // wide-open, exercises many chunks
    };
    for (const auto& lim : profiles) {
        const size_t cap = lim.send_buffer_size - kChunkHeaderBytes;
        const size_t max_len = lim.max_message_size ? lim.max_message_size : 65536;
        std::vector<size_t> sizes = {0, 1, cap - 1, cap, cap + 1, 2 * cap, 2 * cap + 1, max_len};
        for (auto& n : sizes) n = std::min(n, max_len);
        std::uniform_int_distribution<size_t> len(0, max_len);
        while (sizes.size() < 40) sizes.push_back(len(rng));
        for (size_t n : sizes) {
            std::vector<uint8_t> msg(n);
            for (auto& b : msg) b = uint8_t(rng());
            const auto s = split_into_chunks(msg, lim, 2, 3, 4, 1);
            REQUIRE(s.ok());
            CHECK(s.chunks.size() <= (lim.max_chunk_count ? lim.max_chunk_count : s.chunks.size()));
            Reassembler r{uint32_t(max_len)};
            std::optional<std::vector<uint8_t>> got;
            for (size_t i = 0; i < s.chunks.size(); i++) {
                // Run every chunk through the wire codec on the way.
                const auto d = decode_chunk(encode_chunk(s.chunks[i]));
                REQUIRE(d.ok());
                CHECK(d.value.flag == (i + 1 == s.chunks.size() ? ChunkFlag::Final
                                                                : ChunkFlag::Intermediate));
                if (i + 1 < s.chunks.size()) CHECK(d.value.body.size() == cap);
                auto res = r.feed(d.value);
                REQUIRE(res.status == status::Good);
                if (res.message) got = std::move(res.message);
            }
            REQUIRE(got.has_value());
            CHECK(*got == msg);
        }
    }
}

TEST_CASE("connection walks hello, open, request, response") {
    Wire w;
    const auto limits = w.handshake();
    CHECK(limits == TransportLimits{0, 8192, 8192, 8192, 4});
    CHECK(w.conn.state() == Connection::State::Open);
    CHECK(w.channel == 1);
    CHECK(w.token == 1);

    // The OPN response is byte-identical to one composed directly.
    Wire w2;
    auto out = w2.feed(encode_hello(client_hello()));
    out = w2.feed(encode_chunk(opn_chunk(0, 1, 1, opn_request_message(1))));
    REQUIRE(out.frames.size() == 1);
    OpenSecureChannelResponse resp;
    resp.header.timestamp = DateTime{kTestTicks};
    resp.header.request_handle = 1;
    resp.security_token = ChannelSecurityToken{1, 1, DateTime{kTestTicks}, 600000};
    MessageChunk expect;
    expect.type = MsgType::OPN;
    expect.flag = ChunkFlag::Final;
    expect.secure_channel_id = 1;
    expect.security_policy_uri = std::string(kSecurityPolicyNoneUri);
    expect.sequence_number = 1;
    expect.request_id = 1;
    expect.body = encode_service(ServiceMessage{msgid::OpenSecureChannelResponse, resp});
    CHECK(to_hex(out.frames[0]) == to_hex(encode_chunk(expect)));

    // A request echoes back through the backend in a MSG chunk.
    const std::vector<uint8_t> payload = {1, 2, 3, 4};
    out = w.request(payload, 42);
    REQUIRE(out.frames.size() == 1);
    const auto d = decode_chunk(out.frames[0]);
    REQUIRE(d.ok());
    CHECK(d.value.type == MsgType::MSG);
    CHECK(d.value.secure_channel_id == w.channel);
    CHECK(d.value.token_id == w.token);
    CHECK(d.value.request_id == 42);
    CHECK(d.value.sequence_number == 2);  // server seq 1 went to the OPN response
    CHECK(d.value.body == payload);
    REQUIRE(w.backend.requests.size() == 1);
    CHECK(w.backend.requests[0] == payload);
    CHECK(w.backend.request_channels[0] == w.channel);
}

TEST_CASE("connection enforces the hello rules") {
    SUBCASE("second hello closes the connection") {
        Wire w;
        w.feed(encode_hello(client_hello()));
        auto out = w.feed(encode_hello(client_hello()));
        REQUIRE(out.frames.size() == 1);
        const auto e = decode_error(out.frames[0]);
        REQUIRE(e.ok());
        CHECK(e.value.code == status::BadTcpMessageTypeInvalid);
        CHECK(out.close);
        CHECK(w.conn.state() == Connection::State::Closed);
    }
    SUBCASE("buffers below 8192 are refused") {
        Wire w;
        auto out = w.feed(encode_hello(client_hello(8191, 65536)));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadTcpMessageTooLarge);
        CHECK(out.close);
    }
    SUBCASE("protocol versions below the server minimum are refused") {
        ConnectionConfig cfg;
        cfg.min_protocol_version = 1;
        Wire w(cfg);
        auto out = w.feed(encode_hello(client_hello()));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadProtocolVersionUnsupported);
        CHECK(out.close);
    }
    SUBCASE("malformed first bytes answer ERR and close") {
        Wire w;
        const std::string junk = "GET / HTTP/1.1\r\nHost: x\r\n\r\n";
        auto out = w.feed(std::vector<uint8_t>(junk.begin(), junk.end()));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadTcpMessageTypeInvalid);
        CHECK(out.close);
    }
    SUBCASE("a MSG before OPN is BadTcpSecureChannelUnknown") {
        Wire w;
        w.feed(encode_hello(client_hello()));
        auto out = w.feed(encode_chunk(msg_chunk(1, 1, 1, 1, {0x00})));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadTcpSecureChannelUnknown);
        CHECK(out.close);
    }
}

TEST_CASE("connection enforces the open-secure-channel rules") {
    SUBCASE("a non-None security policy is rejected") {
        Wire w;
        w.feed(encode_hello(client_hello()));
        auto out = w.feed(encode_chunk(opn_chunk(
            0, 1, 1, opn_request_message(1),
            "http://opcfoundation.org/UA/SecurityPolicy#Basic256Sha256")));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadSecurityPolicyRejected);
        CHECK(out.close);
    }
    SUBCASE("the requested lifetime is clamped to the server maximum") {
        Wire w;
        w.feed(encode_hello(client_hello()));
        auto out = w.feed(
            encode_chunk(opn_chunk(0, 1, 1, opn_request_message(1, 0, 1'000'000'000))));
        REQUIRE(out.frames.size() == 1);
        const auto body = decode_service(decode_chunk(out.frames[0]).value.body);
        const auto& opn = std::get<OpenSecureChannelResponse>(body.value.body);
        CHECK(opn.security_token.revised_lifetime == 3'600'000);
    }
    SUBCASE("channel ids are fresh across connections of one allocator") {
        FixedClock clock;
        CountingIds ids;
        RecordingBackend backend;
        std::vector<uint32_t> seen;
        for (int i = 0; i < 3; i++) {
            Connection conn({}, backend, clock, ids);
            conn.feed(encode_hello(client_hello()));
            auto out = conn.feed(encode_chunk(opn_chunk(0, 1, 1, opn_request_message(1))));
            REQUIRE(out.frames.size() == 1);
            seen.push_back(conn.channel_id());
            conn.on_disconnect();
        }
        CHECK(seen == std::vector<uint32_t>{1, 2, 3});
    }
    SUBCASE("a renew issues a new token on the same channel") {
        Wire w;
        w.handshake();
        auto out = w.feed(encode_chunk(opn_chunk(w.channel, w.client_seq++, 2,
                                                 opn_request_message(2, 1))));
        REQUIRE(out.frames.size() == 1);
        const auto body = decode_service(decode_chunk(out.frames[0]).value.body);
        const auto& opn = std::get<OpenSecureChannelResponse>(body.value.body);
        CHECK(opn.security_token.channel_id == w.channel);
        CHECK(opn.security_token.token_id == 2);
        // Both the old and the new token are accepted afterwards.
        auto r1 = w.request({0x01}, 3);
        CHECK(r1.frames.size() == 1);
        w.token = 2;
        auto r2 = w.request({0x02}, 4);
        CHECK(r2.frames.size() == 1);
    }
    SUBCASE("an issue on an already open channel closes the connection") {
        Wire w;
        w.handshake();
        auto out = w.feed(encode_chunk(opn_chunk(w.channel, w.client_seq++, 2,
                                                 opn_request_message(2, 0))));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadRequestTypeInvalid);
        CHECK(out.close);
    }
}

TEST_CASE("sequence errors close the channel but not the connection") {
    Wire w;
    w.handshake();
    // Skip a sequence number.
    auto out = w.feed(encode_chunk(msg_chunk(w.channel, w.token, w.client_seq + 5, 9, {0x00})));
    REQUIRE(out.frames.size() == 1);
    CHECK(decode_error(out.frames[0]).value.code == status::BadSequenceNumberInvalid);
    CHECK_FALSE(out.close);
    CHECK(w.conn.state() == Connection::State::AwaitOpen);
    REQUIRE(w.backend.closed.size() == 1);
    CHECK(w.backend.closed[0] == w.channel);

    // A fresh OPN on the same connection gets a fresh channel id.
    out = w.feed(encode_chunk(opn_chunk(0, 1, 1, opn_request_message(1))));
    REQUIRE(out.frames.size() == 1);
    const auto body = decode_service(decode_chunk(out.frames[0]).value.body);
    const auto& opn = std::get<OpenSecureChannelResponse>(body.value.body);
    CHECK(opn.security_token.channel_id == 2);
    CHECK(opn.security_token.channel_id != w.channel);
}

TEST_CASE("an oversized request answers a service fault and keeps the channel") {
    Wire w;
    w.handshake();

    // A request whose chunks reassemble past the 8192-byte stage buffer; the
    // prefix is a well-formed header so the fault can echo handle 77.
    ReadRequest rr;
    rr.header.request_handle = 77;
    rr.header.timestamp = DateTime{kTestTicks};
    auto message = encode_service(ServiceMessage{msgid::ReadRequest, rr});
    message.resize(9000, 0x00);
    const TransportLimits client_side{0, 65536, 8192, 0, 0};
    const auto chunks = split_into_chunks(message, client_side, w.channel, w.token, 9,
                                          w.client_seq);
    REQUIRE(chunks.ok());
    REQUIRE(chunks.chunks.size() == 2);
    w.client_seq += 2;

    auto out = w.feed(encode_chunk(chunks.chunks[0]));
    CHECK(out.frames.empty());
    out = w.feed(encode_chunk(chunks.chunks[1]));
    REQUIRE(out.frames.size() == 1);
    CHECK_FALSE(out.close);
    const auto d = decode_chunk(out.frames[0]);
    REQUIRE(d.ok());
    const auto fault = decode_service(d.value.body);
    REQUIRE(fault.ok());
    const auto& f = std::get<ServiceFault>(fault.value.body);
    CHECK(f.header.service_result == status::BadTcpMessageTooLarge);
    CHECK(f.header.request_handle == 77);
    CHECK(w.backend.requests.empty());

    // The channel survives: a normal request still works.
    out = w.request({0x01, 0x02}, 10);
    REQUIRE(out.frames.size() == 1);
    CHECK(decode_chunk(out.frames[0]).value.body == std::vector<uint8_t>{0x01, 0x02});
}

TEST_CASE("a chunked request reassembles for the backend when it fits") {
    ConnectionConfig cfg;
    cfg.message_buffer_bytes = 16384;
    Wire w(cfg);
    w.handshake();
    std::vector<uint8_t> message(9000);
    for (size_t i = 0; i < message.size(); i++) message[i] = uint8_t(i * 7);
    const TransportLimits client_side{0, 65536, 8192, 0, 0};
    const auto chunks = split_into_chunks(message, client_side, w.channel, w.token, 5,
                                          w.client_seq);
    REQUIRE(chunks.chunks.size() == 2);
    w.client_seq += 2;
    auto out = w.feed(encode_chunk(chunks.chunks[0]));
    CHECK(out.frames.empty());
    out = w.feed(encode_chunk(chunks.chunks[1]));
    REQUIRE(w.backend.requests.size() == 1);
    CHECK(w.backend.requests[0] == message);
    // The echoed 9000-byte response exceeds the negotiated 8192 maxMessageSize,
    // so the connection substitutes a BadResponseTooLarge fault.
    REQUIRE(out.frames.size() == 1);
    const auto fault = decode_service(decode_chunk(out.frames[0]).value.body);
    REQUIRE(fault.ok());
    CHECK(std::get<ServiceFault>(fault.value.body).header.service_result ==
          status::BadResponseTooLarge);
}

TEST_CASE("responses larger than one chunk are split") {
    Wire w;
    w.handshake();
    // 8192 bytes fits maxMessageSize exactly but not a single 8168-byte body.
    w.backend.canned.assign(8192, 0xAB);
    auto out = w.request({0x01}, 6);
    REQUIRE(out.frames.size() == 2);
    const auto c1 = decode_chunk(out.frames[0]);
    const auto c2 = decode_chunk(out.frames[1]);
    REQUIRE(c1.ok());
    REQUIRE(c2.ok());
    CHECK(c1.value.flag == ChunkFlag::Intermediate);
    CHECK(c2.value.flag == ChunkFlag::Final);
    CHECK(c1.value.body.size() == 8168);
    CHECK(c2.value.body.size() == 24);
    CHECK(c2.value.sequence_number == c1.value.sequence_number + 1);
    CHECK(c1.value.request_id == 6);
    CHECK(c2.value.request_id == 6);
    std::vector<uint8_t> glued = c1.value.body;
    glued.insert(glued.end(), c2.value.body.begin(), c2.value.body.end());
    CHECK(glued == w.backend.canned);
}

TEST_CASE("abort chunks drop the partial request without output") {
    Wire w;
    w.handshake();
    auto out = w.feed(encode_chunk(
        msg_chunk(w.channel, w.token, w.client_seq++, 9, {0x01}, ChunkFlag::Intermediate)));
    CHECK(out.frames.empty());
    out = w.feed(encode_chunk(
        msg_chunk(w.channel, w.token, w.client_seq++, 9, {}, ChunkFlag::Abort)));
    CHECK(out.frames.empty());
    CHECK_FALSE(out.close);
    CHECK(w.backend.requests.empty());
    // The next request goes through untouched.
    out = w.request({0x02}, 10);
    REQUIRE(out.frames.size() == 1);
    CHECK(w.backend.requests.size() == 1);
}

TEST_CASE("channel teardown notifies the session layer exactly once") {
    SUBCASE("CLO closes channel and connection without a response") {
        Wire w;
        w.handshake();
        MessageChunk clo;
        clo.type = MsgType::CLO;
        clo.flag = ChunkFlag::Final;
        clo.secure_channel_id = w.channel;
        clo.token_id = w.token;
        clo.sequence_number = w.client_seq++;
        clo.request_id = 99;
        clo.body = encode_service(ServiceMessage{msgid::CloseSecureChannelRequest,
                                                 CloseSecureChannelRequest{}});
        auto out = w.feed(encode_chunk(clo));
        CHECK(out.frames.empty());
        CHECK(out.close);
        CHECK(w.backend.closed == std::vector<uint32_t>{w.channel});
        CHECK(w.conn.state() == Connection::State::Closed);
    }
    SUBCASE("a client ERR closes silently") {
        Wire w;
        w.handshake();
        auto out = w.feed(encode_error(ErrorMessage{status::BadTimeout, std::nullopt}));
        CHECK(out.frames.empty());
        CHECK(out.close);
        CHECK(w.backend.closed == std::vector<uint32_t>{w.channel});
    }
    SUBCASE("a vanished peer frees the channel") {
        Wire w;
        w.handshake();
        w.conn.on_disconnect();
        CHECK(w.backend.closed == std::vector<uint32_t>{w.channel});
        CHECK(w.conn.state() == Connection::State::Closed);
        // Idempotent.
        w.conn.on_disconnect();
        CHECK(w.backend.closed.size() == 1);
    }
    SUBCASE("a wrong token id closes the channel") {
        Wire w;
        w.handshake();
        auto out = w.feed(encode_chunk(msg_chunk(w.channel, 999, w.client_seq++, 9, {0x00})));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadSecureChannelTokenUnknown);
        CHECK(w.conn.state() == Connection::State::AwaitOpen);
        CHECK(w.backend.closed == std::vector<uint32_t>{w.channel});
    }
    SUBCASE("a wrong channel id closes the connection") {
        Wire w;
        w.handshake();
        auto out = w.feed(encode_chunk(msg_chunk(w.channel + 7, w.token, w.client_seq++, 9,
                                                 {0x00})));
        REQUIRE(out.frames.size() == 1);
        CHECK(decode_error(out.frames[0]).value.code == status::BadTcpSecureChannelUnknown);
        CHECK(out.close);
    }
}

TEST_CASE("a pipelined handshake in one write behaves like three") {
    std::vector<std::vector<uint8_t>> script = {
        encode_hello(client_hello()),
        encode_chunk(opn_chunk(0, 1, 1, opn_request_message(1))),
        encode_chunk(msg_chunk(1, 1, 2, 5, {0x10, 0x20})),
    };

    // All at once.
    Wire one;
    auto out = one.feed(cat(script));
    REQUIRE(out.frames.size() == 3);
    CHECK_FALSE(out.close);

    // Byte by byte.
    Wire dribble;
    std::vector<std::vector<uint8_t>> collected;
    for (uint8_t b : cat(script)) {
        auto o = dribble.conn.feed(std::span(&b, 1));
        for (auto& f : o.frames) collected.push_back(std::move(f));
    }
    REQUIRE(collected.size() == 3);
    for (size_t i = 0; i < 3; i++) CHECK(to_hex(collected[i]) == to_hex(out.frames[i]));
}

TEST_CASE("hostile byte streams produce typed errors, never crashes") {
    std::mt19937 rng(0xfeedface);

    SUBCASE("raw random bytes") {
        for (int round = 0; round < 200; round++) {
            FixedClock clock;
            CountingIds ids;
            RecordingBackend backend;
            Connection conn({}, backend, clock, ids);
            std::uniform_int_distribution<int> len(1, 400);
            while (conn.state() != Connection::State::Closed) {
                std::vector<uint8_t> junk(size_t(len(rng)));
                for (auto& b : junk) b = uint8_t(rng());
                auto out = conn.feed(junk);
                for (const auto& f : out.frames)
                    CHECK(decode_frame_header(f).ok());
                if (out.close) break;
            }
        }
    }
    SUBCASE("well-framed chunks with random fields") {
        FixedClock clock;
        CountingIds ids;
        RecordingBackend backend;
        std::uniform_int_distribution<int> pick(0, 5);
        std::uniform_int_distribution<int> blen(0, 64);
        std::uniform_int_distribution<uint32_t> word(0, 8);
        auto conn = std::make_unique<Connection>(ConnectionConfig{}, backend, clock, ids);
        for (int i = 0; i < 3000; i++) {
            if (conn->state() == Connection::State::Closed)
                conn = std::make_unique<Connection>(ConnectionConfig{}, backend, clock, ids);
            std::vector<uint8_t> frame;
            switch (pick(rng)) {
                case 0: frame = encode_hello(client_hello(word(rng) * 4096, 65536)); break;
                case 1: frame = encode_acknowledge(Acknowledge{kServerLimits}); break;
                case 2: frame = encode_error(ErrorMessage{word(rng), std::nullopt}); break;
                case 3:
                    frame = encode_chunk(opn_chunk(word(rng), word(rng), word(rng),
                                                   opn_request_message(word(rng))));
                    break;
                default: {
                    std::vector<uint8_t> body(size_t(blen(rng)));
                    for (auto& b : body) b = uint8_t(rng());
                    const ChunkFlag flags[] = {ChunkFlag::Intermediate, ChunkFlag::Final,
                                               ChunkFlag::Abort};
                    frame = encode_chunk(msg_chunk(word(rng), word(rng), word(rng), word(rng),
                                                   std::move(body), flags[word(rng) % 3]));
                }
            }
            auto out = conn->feed(frame);
            for (const auto& f : out.frames) CHECK(decode_frame_header(f).ok());
        }
    }
}
