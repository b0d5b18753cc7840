#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nanoua/codec.hpp"
#include "nanoua/nsimage.hpp"
#include "nanoua/transport.hpp"
#include "nanoua/vm.hpp"

// The S3 stage bank: one stage per concurrent session, each a small state
// machine owning a bounded message buffer. Session bookkeeping services
// (GetEndpoints, CreateSession, ActivateSession, CloseSession) are handled
// natively; Read and Write are dispatched to the stream VM with the bundled
// service programs and the compiled namespace image.
//
// The engine sits behind the transport as its Backend: requests arrive
// already reassembled, responses leave as one byte vector per request, and
// channel teardown frees any stage bound to that channel.
namespace nanoua::session {

enum class StageState : uint8_t {
    Free = 0,
    ChannelBound = 1,    // allocated to a channel, session not yet created
    SessionCreated = 2,  // token issued, waiting for ActivateSession
    SessionActive = 3,   // serving Read/Write
};

const char* stage_state_name(StageState s);

struct EngineConfig {
    uint32_t num_stages = 3;
    uint32_t buffer_bytes_per_stage = 8192;
    uint32_t max_chunk_count = 4;
    // Feature switches advertised by the profile; both on by default.
    bool fragmentation = true;
    bool multi_session = true;

    std::string endpoint_url = "opc.tcp://localhost:4840/";
    // Sessions requesting more (or zero, or nonsense) are clamped to this.
    double max_session_timeout_ms = 3'600'000.0;
    // Cycle ceiling per VM dispatch; generous, a read of one node costs ~2k.
    uint64_t vm_budget = 1'000'000;
    // Seed for the deterministic session-token stream. Fixed by default so a
    // replay against a fresh engine reproduces recorded tokens exactly.
    uint64_t token_seed = 0x06c1e6f7a92d5c03;
};

// Stage bank size the configuration actually grants: multi_session off
// collapses the bank to a single stage regardless of num_stages.
uint32_t effective_stages(const EngineConfig& cfg);

// Transport capabilities implied by the engine configuration: chunking
// collapses to one chunk per message when fragmentation is off, and the
// reassembled-request cap is the stage buffer size.
transport::ConnectionConfig transport_config(const EngineConfig& cfg);

// Accounting for one handled request, drained by the simulator to feed the
// cycle model. `vm_cycles` is VM cost for dispatched services; for natively
// handled services it falls back to bytes-touched as a deterministic proxy.
struct DispatchStats {
    uint32_t service_type = 0;
    int stage = -1;  // -1 when no stage was involved
    bool used_vm = false;
    uint64_t vm_cycles = 0;
    uint64_t data_bytes = 0;   // stream traffic share of vm_cycles
    uint64_t image_bytes = 0;  // namespace-port traffic during the dispatch
    uint32_t request_bytes = 0;
    uint32_t response_bytes = 0;
    std::optional<vm::Trap> trap;
};

class ServiceEngine final : public transport::Backend {
public:
    ServiceEngine(EngineConfig cfg, ns::NamespaceImage image, vm::VmProgram programs,
                  transport::Clock& clock);

    std::vector<uint8_t> on_request(uint32_t channel_id,
                                    std::span<const uint8_t> request) override;
    void on_channel_closed(uint32_t channel_id) override;

    // Frees stages whose sessions have been silent past their timeout. Runs
    // implicitly before each request; the live server also calls it from its
    // housekeeping tick so idle sessions expire without traffic.
    void sweep(DateTime now);

    const EngineConfig& config() const { return cfg_; }
    size_t stage_count() const { return stages_.size(); }
    StageState stage_state(size_t index) const;
    uint32_t stage_channel(size_t index) const;
    size_t active_sessions() const;

    // The shared namespace; live-server tooling reads value slots through it.
    ns::NamespaceImage& image() { return image_; }

    std::vector<DispatchStats> drain_stats();

private:
    struct Stage {
        StageState state = StageState::Free;
        uint32_t bound_channel = 0;
        NodeId session_id;
        NodeId auth_token;
        std::vector<uint8_t> token_wire;  // auth_token in its encoded form
        double timeout_ms = 0;
        DateTime last_activity{};
    };

    EndpointDescription endpoint_description() const;
    uint64_t next_random();
    ByteString fresh_nonce();
    std::vector<uint8_t> fault(DateTime now, uint32_t handle, uint32_t code);

    void free_stage(Stage& s);
    Stage* stage_for_channel(uint32_t channel_id);
    void sweep_locked(DateTime now);

    std::vector<uint8_t> handle_get_endpoints(DateTime now, const ServiceMessage& msg);
    std::vector<uint8_t> handle_create_session(DateTime now, uint32_t channel_id,
                                               const ServiceMessage& msg,
                                               DispatchStats& stats);
    std::vector<uint8_t> handle_activate_session(DateTime now, uint32_t channel_id,
                                                 const ServiceMessage& msg,
                                                 DispatchStats& stats);
    std::vector<uint8_t> handle_close_session(DateTime now, uint32_t channel_id,
                                              const ServiceMessage& msg,
                                              DispatchStats& stats);
    std::vector<uint8_t> dispatch(DateTime now, uint32_t channel_id, uint32_t service_type,
                                  std::span<const uint8_t> request, DispatchStats& stats);

    EngineConfig cfg_;
    ns::NamespaceImage image_;
    vm::VmProgram programs_;
    transport::Clock& clock_;

    mutable std::mutex mu_;
    std::vector<Stage> stages_;
    uint64_t rng_state_;
    uint32_t session_counter_ = 0;
    std::vector<DispatchStats> stats_;
};

}  // namespace nanoua::session
