#pragma once

// Builds replayable captures by scripting a client against a functional
// transport + stage bank (no cycle accounting involved). The recorded frames
// are exactly what a live conversation produces, so they drive the simulator
// the same way recorded traffic does. Script errors throw; both the doctest
// suites and the acceptance harness surface the message.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nanoua/asm.hpp"
#include "nanoua/bytes.hpp"
#include "nanoua/codec.hpp"
#include "nanoua/engine.hpp"
#include "nanoua/nsimage.hpp"
#include "nanoua/sessions.hpp"
#include "nanoua/status.hpp"
#include "nanoua/transport.hpp"
#include "test_util.hpp"

namespace simutil {

using namespace nanoua;

constexpr int64_t kScriptTicks = 134116992000000000;  // 2026-01-01T00:00:00Z

inline vm::VmProgram load_programs() {
    const auto dir = data_path("NANOUA_PROGRAMS", "programs");
    auto assembled = uasm::assemble(read_file(dir + "/services.s"), "services");
    if (!assembled.ok()) throw std::runtime_error("services.s did not assemble");
    return std::move(*assembled.program);
}

inline ns::NamespaceImage load_image() {
    const auto dir = data_path("NANOUA_MODELS", "models");
    auto compiled = ns::compile_model_file(dir + "/device_three_values.txt");
    if (!compiled.ok()) throw std::runtime_error("device model did not compile");
    auto opened = ns::NamespaceImage::open(std::move(compiled.image));
    if (!opened.image.has_value()) throw std::runtime_error("device image did not open");
    return std::move(*opened.image);
}

struct ScriptClock final : transport::Clock {
    DateTime now() override { return DateTime{kScriptTicks}; }
};

struct ScriptIds final : transport::ChannelIdAllocator {
    uint32_t last = 0;
    uint32_t next() override { return ++last; }
};

// A functional server instance that records every frame it sees or emits.
struct ScriptServer {
    ScriptClock clock;
    ScriptIds ids;
    session::ServiceEngine engine;
    transport::Connection conn;
    sim::Capture cap;

    explicit ScriptServer(const session::EngineConfig& cfg, ns::NamespaceImage image,
                          vm::VmProgram programs)
        : engine(cfg, std::move(image), std::move(programs), clock),
          conn(session::transport_config(cfg), engine, clock, ids) {}

    std::vector<std::vector<uint8_t>> send(const std::vector<uint8_t>& frame) {
        cap.frames.push_back({true, frame});
        auto out = conn.feed(frame);
        for (const auto& f : out.frames) cap.frames.push_back({false, f});
        return std::move(out.frames);
    }

    sim::Capture take() { return std::move(cap); }
};

// Client-side script state: sequence numbers, channel, session token.
class SessionScript {
public:
    explicit SessionScript(ScriptServer& server) : srv_(server) {}

    void handshake() {
        transport::Hello hello;
        hello.limits = transport::TransportLimits{0, 65536, 65536, 0, 0};
        hello.endpoint_url = UaString{"opc.tcp://localhost:4840/"};
        auto out = srv_.send(transport::encode_hello(hello));
        if (out.size() != 1) throw std::runtime_error("hello: expected one ACK frame");
        if (!transport::decode_acknowledge(out[0]).ok())
            throw std::runtime_error("hello: response is not an ACK");

        OpenSecureChannelRequest opn;
        opn.header.timestamp = DateTime{kScriptTicks};
        opn.header.request_handle = handle_++;
        opn.security_mode = 1;
        opn.requested_lifetime = 600000;
        transport::MessageChunk c;
        c.type = transport::MsgType::OPN;
        c.flag = transport::ChunkFlag::Final;
        c.secure_channel_id = 0;
        c.security_policy_uri = std::string(transport::kSecurityPolicyNoneUri);
        c.sequence_number = seq_++;
        c.request_id = reqid_++;
        c.body = encode_service(ServiceMessage{msgid::OpenSecureChannelRequest, opn});
        out = srv_.send(transport::encode_chunk(c));
        if (out.size() != 1) throw std::runtime_error("open: expected one OPN frame");
        auto chunk = transport::decode_chunk(out[0]);
        if (!chunk.ok()) throw std::runtime_error("open: undecodable response chunk");
        auto body = decode_service(chunk.value.body);
        if (!body.ok()) throw std::runtime_error("open: undecodable response body");
        const auto& resp = std::get<OpenSecureChannelResponse>(body.value.body);
        channel_ = resp.security_token.channel_id;
        token_ = resp.security_token.token_id;
    }

    // One request-response exchange over the secure channel.
    ServiceMessage roundtrip(const ServiceMessage& request) {
        transport::MessageChunk c;
        c.type = transport::MsgType::MSG;
        c.flag = transport::ChunkFlag::Final;
        c.secure_channel_id = channel_;
        c.token_id = token_;
        c.sequence_number = seq_++;
        c.request_id = reqid_++;
        c.body = encode_service(request);
        auto out = srv_.send(transport::encode_chunk(c));
        if (out.empty()) throw std::runtime_error("exchange: no response frames");
        std::vector<uint8_t> body;
        for (const auto& f : out) {
            auto chunk = transport::decode_chunk(f);
            if (!chunk.ok()) throw std::runtime_error("exchange: undecodable response chunk");
            body.insert(body.end(), chunk.value.body.begin(), chunk.value.body.end());
        }
        auto decoded = decode_service(body);
        if (!decoded.ok()) throw std::runtime_error("exchange: undecodable response body");
        return decoded.value;
    }

    NodeId establish(double timeout_ms = 60'000) {
        CreateSessionRequest cs;
        cs.header.request_handle = handle_++;
        cs.header.timestamp = DateTime{kScriptTicks};
        cs.session_name = UaString{"script"};
        cs.requested_session_timeout = timeout_ms;
        auto created = roundtrip(ServiceMessage{msgid::CreateSessionRequest, cs});
        const auto* created_ok = std::get_if<CreateSessionResponse>(&created.body);
        if (!created_ok) throw std::runtime_error("establish: CreateSession refused");
        auth_ = created_ok->authentication_token;

        ActivateSessionRequest act;
        act.header.request_handle = handle_++;
        act.header.authentication_token = auth_;
        act.header.timestamp = DateTime{kScriptTicks};
        ByteWriter w;
        encode_string(w, UaString{"anonymous"});
        act.user_identity_token.type_id = NodeId::numeric(0, msgid::AnonymousIdentityToken);
        act.user_identity_token.body = w.take();
        auto activated = roundtrip(ServiceMessage{msgid::ActivateSessionRequest, act});
        if (!std::holds_alternative<ActivateSessionResponse>(activated.body))
            throw std::runtime_error("establish: ActivateSession refused");
        return auth_;
    }

    ServiceMessage read(const NodeId& node, uint32_t attribute = 13) {
        ReadRequest r;
        r.header.request_handle = handle_++;
        r.header.authentication_token = auth_;
        r.header.timestamp = DateTime{kScriptTicks};
        r.timestamps_to_return = 3;  // Neither
        ReadValueId item;
        item.node_id = node;
        item.attribute_id = attribute;
        r.nodes_to_read = std::vector<ReadValueId>{item};
        return roundtrip(ServiceMessage{msgid::ReadRequest, r});
    }

    ServiceMessage write(const NodeId& node, Variant v) {
        WriteRequest r;
        r.header.request_handle = handle_++;
        r.header.authentication_token = auth_;
        r.header.timestamp = DateTime{kScriptTicks};
        WriteValue item;
        item.node_id = node;
        item.attribute_id = 13;
        item.value.value = std::move(v);
        r.nodes_to_write = std::vector<WriteValue>{item};
        return roundtrip(ServiceMessage{msgid::WriteRequest, r});
    }

    void close_session() {
        CloseSessionRequest r;
        r.header.request_handle = handle_++;
        r.header.authentication_token = auth_;
        r.header.timestamp = DateTime{kScriptTicks};
        auto resp = roundtrip(ServiceMessage{msgid::CloseSessionRequest, r});
        if (!std::holds_alternative<CloseSessionResponse>(resp.body))
            throw std::runtime_error("close_session refused");
    }

    void close_channel() {
        CloseSecureChannelRequest r;
        r.header.request_handle = handle_++;
        r.header.timestamp = DateTime{kScriptTicks};
        transport::MessageChunk c;
        c.type = transport::MsgType::CLO;
        c.flag = transport::ChunkFlag::Final;
        c.secure_channel_id = channel_;
        c.token_id = token_;
        c.sequence_number = seq_++;
        c.request_id = reqid_++;
        c.body = encode_service(ServiceMessage{msgid::CloseSecureChannelRequest, r});
        auto out = srv_.send(transport::encode_chunk(c));
        if (!out.empty()) throw std::runtime_error("close_channel: unexpected response");
    }

    const NodeId& auth_token() const { return auth_; }

private:
    ScriptServer& srv_;
    uint32_t seq_ = 1;
    uint32_t reqid_ = 1;
    uint32_t handle_ = 1;
    uint32_t channel_ = 0;
    uint32_t token_ = 0;
    NodeId auth_;
};

// The stock conversation most simulator tests replay: handshake, session,
// a run of counter reads and writes, orderly teardown.
inline sim::Capture session_capture(const session::EngineConfig& cfg, int reads, int writes) {
    ScriptServer srv(cfg, load_image(), load_programs());
    SessionScript script(srv);
    script.handshake();
    script.establish();
    const NodeId counter = NodeId::numeric(1, 1003);
    for (int i = 0; i < reads; i++) {
        auto resp = script.read(counter);
        if (!std::holds_alternative<ReadResponse>(resp.body))
            throw std::runtime_error("capture: read refused");
    }
    for (int i = 0; i < writes; i++) {
        auto resp = script.write(counter, Variant{int32_t(i)});
        if (!std::holds_alternative<WriteResponse>(resp.body))
            throw std::runtime_error("capture: write refused");
    }
    script.close_session();
    script.close_channel();
    return srv.take();
}

}  // namespace simutil
