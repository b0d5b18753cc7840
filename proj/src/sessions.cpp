#include "nanoua/sessions.hpp"

#include <algorithm>
#include <array>

#include "nanoua/bytes.hpp"
#include "nanoua/status.hpp"

namespace nanoua::session {

namespace {

constexpr const char* kTransportProfileUri =
    "http://opcfoundation.org/UA-Profile/Transport/uatcp-uasc-uabinary";

// splitmix64; the token stream must be reproducible across processes so that
// record/replay can compare session handshakes byte for byte.
uint64_t mix(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

int64_t ms_between(DateTime earlier, DateTime later) {
    return (later.ticks - earlier.ticks) / 10'000;  // 100 ns ticks
}

// Anonymous is the only accepted identity: either an explicit
// AnonymousIdentityToken extension object or an empty one (which the
// standard reads as "anonymous, if the server allows it").
bool is_anonymous_identity(const ExtensionObject& token) {
    if (token.type_id == NodeId()) return !token.body.has_value();
    return token.type_id == NodeId::numeric(0, msgid::AnonymousIdentityToken);
}

}  // namespace

uint32_t effective_stages(const EngineConfig& cfg) {
    const uint32_t n = std::max<uint32_t>(1, cfg.num_stages);
    return cfg.multi_session ? n : 1;
}

transport::ConnectionConfig transport_config(const EngineConfig& cfg) {
    transport::ConnectionConfig c;
    c.capabilities.max_chunk_count = cfg.fragmentation ? cfg.max_chunk_count : 1;
    c.message_buffer_bytes = cfg.buffer_bytes_per_stage;
    return c;
}

const char* stage_state_name(StageState s) {
    switch (s) {
        case StageState::Free: return "free";
        case StageState::ChannelBound: return "channel-bound";
        case StageState::SessionCreated: return "session-created";
        case StageState::SessionActive: return "session-active";
    }
    return "?";
}

ServiceEngine::ServiceEngine(EngineConfig cfg, ns::NamespaceImage image,
                             vm::VmProgram programs, transport::Clock& clock)
    : cfg_(std::move(cfg)),
      image_(std::move(image)),
      programs_(std::move(programs)),
      clock_(clock),
      rng_state_(cfg_.token_seed) {
    stages_.resize(effective_stages(cfg_));
}

uint64_t ServiceEngine::next_random() { return mix(rng_state_); }

ByteString ServiceEngine::fresh_nonce() {
    std::vector<uint8_t> nonce(32);
    for (size_t i = 0; i < nonce.size(); i += 8) {
        const uint64_t word = next_random();
        for (size_t j = 0; j < 8; j++) nonce[i + j] = uint8_t(word >> (8 * j));
    }
    return nonce;
}

std::vector<uint8_t> ServiceEngine::fault(DateTime now, uint32_t handle, uint32_t code) {
    return encode_service_fault(now, handle, code);
}

EndpointDescription ServiceEngine::endpoint_description() const {
    EndpointDescription e;
    e.endpoint_url = UaString{cfg_.endpoint_url};
    e.server.application_uri = UaString{"urn:nanoua:device"};
    e.server.product_uri = UaString{"urn:nanoua"};
    e.server.application_name = LocalizedText{UaString{}, UaString{"nanoua device server"}};
    e.server.application_type = 0;  // Server
    e.security_mode = 1;            // None
    e.security_policy_uri = UaString{std::string(transport::kSecurityPolicyNoneUri)};
    UserTokenPolicy anon;
    anon.policy_id = UaString{"anonymous"};
    anon.token_type = 0;
    e.user_identity_tokens = std::vector<UserTokenPolicy>{anon};
    e.transport_profile_uri = UaString{kTransportProfileUri};
    e.security_level = 0;
    return e;
}

void ServiceEngine::free_stage(Stage& s) { s = Stage{}; }

ServiceEngine::Stage* ServiceEngine::stage_for_channel(uint32_t channel_id) {
    if (channel_id == 0) return nullptr;
    for (auto& s : stages_)
        if (s.state != StageState::Free && s.bound_channel == channel_id) return &s;
    return nullptr;
}

void ServiceEngine::sweep_locked(DateTime now) {
    for (auto& s : stages_) {
        if (s.state != StageState::SessionCreated && s.state != StageState::SessionActive)
            continue;
        if (s.timeout_ms > 0 && double(ms_between(s.last_activity, now)) > s.timeout_ms)
            free_stage(s);
    }
}

void ServiceEngine::sweep(DateTime now) {
    std::lock_guard lock(mu_);
    sweep_locked(now);
}

StageState ServiceEngine::stage_state(size_t index) const {
    std::lock_guard lock(mu_);
    return stages_.at(index).state;
}

uint32_t ServiceEngine::stage_channel(size_t index) const {
    std::lock_guard lock(mu_);
    return stages_.at(index).bound_channel;
}

size_t ServiceEngine::active_sessions() const {
    std::lock_guard lock(mu_);
    size_t n = 0;
    for (const auto& s : stages_)
        if (s.state != StageState::Free) n++;
    return n;
}

std::vector<DispatchStats> ServiceEngine::drain_stats() {
    std::lock_guard lock(mu_);
    return std::exchange(stats_, {});
}

void ServiceEngine::on_channel_closed(uint32_t channel_id) {
    std::lock_guard lock(mu_);
    if (auto* s = stage_for_channel(channel_id)) free_stage(*s);
}

std::vector<uint8_t> ServiceEngine::on_request(uint32_t channel_id,
                                               std::span<const uint8_t> request) {
    std::lock_guard lock(mu_);
    const DateTime now = clock_.now();
    sweep_locked(now);

    DispatchStats stats;
    stats.request_bytes = uint32_t(request.size());

    std::vector<uint8_t> response;
    const auto type = peek_type_id(request);
    if (!type) {
        response = fault(now, 0, status::BadDecodingError);
    } else {
        stats.service_type = *type;
        switch (*type) {
            case msgid::ReadRequest:
            case msgid::WriteRequest:
                response = dispatch(now, channel_id, *type, request, stats);
                break;
            case msgid::GetEndpointsRequest:
            case msgid::CreateSessionRequest:
            case msgid::ActivateSessionRequest:
            case msgid::CloseSessionRequest: {
                const auto decoded = decode_service(request);
                if (!decoded.ok()) {
                    response = fault(now, peek_request_handle(request).value_or(0),
                                     status::BadDecodingError);
                    break;
                }
                switch (*type) {
                    case msgid::GetEndpointsRequest:
                        response = handle_get_endpoints(now, decoded.value);
                        break;
                    case msgid::CreateSessionRequest:
                        response = handle_create_session(now, channel_id, decoded.value, stats);
                        break;
                    case msgid::ActivateSessionRequest:
                        response = handle_activate_session(now, channel_id, decoded.value,
                                                           stats);
                        break;
                    default:
                        response = handle_close_session(now, channel_id, decoded.value, stats);
                }
                break;
            }
            default:
                // Anything else — Browse, Subscribe, discovery — is outside
                // the Nano subset this engine implements.
                response = fault(now, peek_request_handle(request).value_or(0),
                                 status::BadServiceUnsupported);
        }
    }

    stats.response_bytes = uint32_t(response.size());
    if (!stats.used_vm) {
        // Natively handled services have no VM cycle count; charge a
        // deterministic bytes-touched proxy: every request/response byte is
        // read or written once (data) and processed once (compute).
        stats.data_bytes = request.size() + response.size();
        stats.vm_cycles = 2 * stats.data_bytes;
    }
    stats_.push_back(std::move(stats));
    return response;
}

std::vector<uint8_t> ServiceEngine::handle_get_endpoints(DateTime now,
                                                         const ServiceMessage& msg) {
    const auto& req = std::get<GetEndpointsRequest>(msg.body);
    GetEndpointsResponse resp;
    resp.header.timestamp = now;
    resp.header.request_handle = req.header.request_handle;
    resp.header.service_result = status::Good;
    resp.endpoints = std::vector<EndpointDescription>{endpoint_description()};
    return encode_service(ServiceMessage{msgid::GetEndpointsResponse, resp});
}

std::vector<uint8_t> ServiceEngine::handle_create_session(DateTime now, uint32_t channel_id,
                                                          const ServiceMessage& msg,
                                                          DispatchStats& stats) {
    const auto& req = std::get<CreateSessionRequest>(msg.body);

    // One session per stage and one stage per channel: a repeated
    // CreateSession on the same channel replaces that channel's session.
    Stage* stage = stage_for_channel(channel_id);
    if (stage == nullptr) {
        for (auto& s : stages_) {
            if (s.state == StageState::Free) {
                stage = &s;
                break;
            }
        }
        if (stage == nullptr)
            return fault(now, req.header.request_handle, status::BadTooManySessions);
        stage->state = StageState::ChannelBound;
        stage->bound_channel = channel_id;
    }
    stats.stage = int(stage - stages_.data());

    session_counter_++;
    stage->session_id = NodeId::numeric(1, 100'000 + session_counter_);
    std::vector<uint8_t> token_bytes(32);
    for (size_t i = 0; i < token_bytes.size(); i += 8) {
        const uint64_t word = next_random();
        for (size_t j = 0; j < 8; j++) token_bytes[i + j] = uint8_t(word >> (8 * j));
    }
    stage->auth_token = NodeId::opaque(1, std::move(token_bytes));
    {
        ByteWriter w;
        encode_node_id(w, stage->auth_token);
        stage->token_wire = w.take();
    }
    const double requested = req.requested_session_timeout;
    stage->timeout_ms = (requested > 0 && requested <= cfg_.max_session_timeout_ms)
                            ? requested
                            : cfg_.max_session_timeout_ms;
    stage->last_activity = now;
    stage->state = StageState::SessionCreated;

    CreateSessionResponse resp;
    resp.header.timestamp = now;
    resp.header.request_handle = req.header.request_handle;
    resp.session_id = stage->session_id;
    resp.authentication_token = stage->auth_token;
    resp.revised_session_timeout = stage->timeout_ms;
    resp.server_nonce = fresh_nonce();
    resp.server_endpoints = std::vector<EndpointDescription>{endpoint_description()};
    resp.max_request_message_size = cfg_.buffer_bytes_per_stage;
    return encode_service(ServiceMessage{msgid::CreateSessionResponse, resp});
}

std::vector<uint8_t> ServiceEngine::handle_activate_session(DateTime now, uint32_t channel_id,
                                                            const ServiceMessage& msg,
                                                            DispatchStats& stats) {
    const auto& req = std::get<ActivateSessionRequest>(msg.body);
    Stage* stage = stage_for_channel(channel_id);
    if (stage == nullptr || stage->state == StageState::ChannelBound ||
        req.header.authentication_token != stage->auth_token)
        return fault(now, req.header.request_handle, status::BadSessionIdInvalid);
    stats.stage = int(stage - stages_.data());

    if (!is_anonymous_identity(req.user_identity_token))
        return fault(now, req.header.request_handle, status::BadIdentityTokenRejected);

    stage->state = StageState::SessionActive;
    stage->last_activity = now;

    ActivateSessionResponse resp;
    resp.header.timestamp = now;
    resp.header.request_handle = req.header.request_handle;
    resp.server_nonce = fresh_nonce();
    return encode_service(ServiceMessage{msgid::ActivateSessionResponse, resp});
}

std::vector<uint8_t> ServiceEngine::handle_close_session(DateTime now, uint32_t channel_id,
                                                         const ServiceMessage& msg,
                                                         DispatchStats& stats) {
    const auto& req = std::get<CloseSessionRequest>(msg.body);
    Stage* stage = stage_for_channel(channel_id);
    if (stage == nullptr || stage->state == StageState::ChannelBound ||
        req.header.authentication_token != stage->auth_token)
        return fault(now, req.header.request_handle, status::BadSessionIdInvalid);
    stats.stage = int(stage - stages_.data());

    free_stage(*stage);

    CloseSessionResponse resp;
    resp.header.timestamp = now;
    resp.header.request_handle = req.header.request_handle;
    return encode_service(ServiceMessage{msgid::CloseSessionResponse, resp});
}

std::vector<uint8_t> ServiceEngine::dispatch(DateTime now, uint32_t channel_id,
                                             uint32_t service_type,
                                             std::span<const uint8_t> request,
                                             DispatchStats& stats) {
    const uint32_t handle = peek_request_handle(request).value_or(0);

    Stage* stage = stage_for_channel(channel_id);
    if (stage == nullptr || stage->state == StageState::ChannelBound)
        return fault(now, handle, status::BadSessionIdInvalid);
    stats.stage = int(stage - stages_.data());
    if (stage->state == StageState::SessionCreated)
        return fault(now, handle, status::BadSessionNotActivated);
    stage->last_activity = now;

    // The type id has been routed on; the program starts at the RequestHeader.
    const auto type_id = decode_node_id(request);
    if (!type_id.ok()) return fault(now, handle, status::BadDecodingError);
    std::vector<uint8_t> body(request.begin() + type_id.consumed, request.end());

    vm::BufferStream req_stream = vm::BufferStream::preloaded(std::move(body));
    vm::BufferStream response(cfg_.buffer_bytes_per_stage);
    ns::NamespacePort port(image_);
    ByteWriter ts;
    ts.u64(uint64_t(now.ticks));
    vm::BufferStream timestamp = vm::BufferStream::preloaded(ts.take());
    vm::BufferStream handle_scratch(8);
    vm::BufferStream token = vm::BufferStream::preloaded(stage->token_wire);
    vm::BufferStream staging(4160);
    vm::BufferStream attr(8);
    vm::BufferStream consts(32);
    vm::BufferStream range(4160);
    vm::BufferStream count(8);
    vm::BufferStream tstamps(8);
    vm::BufferStream fault_scratch(8);

    std::array<vm::Stream*, vm::kNumStreams> streams{};
    streams[0] = &req_stream;
    streams[1] = &response;
    streams[2] = &port;
    streams[3] = &timestamp;
    streams[4] = &handle_scratch;
    streams[5] = &token;
    streams[8] = &staging;
    streams[10] = &attr;
    streams[11] = &consts;
    streams[12] = &range;
    streams[13] = &count;
    streams[14] = &tstamps;
    streams[15] = &fault_scratch;

    const auto run = vm::run_service(programs_, service_type, streams, cfg_.vm_budget);
    stats.used_vm = true;
    stats.vm_cycles = run.cycles_used;
    stats.data_bytes = run.data_bytes;
    stats.image_bytes = port.take_image_traffic();
    stats.trap = run.trap;

    if (run.outcome == vm::RunOutcome::Halted) {
        const auto out = response.contents();
        return {out.begin(), out.end()};
    }
    // A trap is an engine defect surfaced as an internal error; running out
    // of budget is the engine's watchdog tripping.
    const uint32_t code = run.outcome == vm::RunOutcome::Trapped ? status::BadInternalError
                                                                 : status::BadTimeout;
    return fault(now, handle, code);
}

}  // namespace nanoua::session
