#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nanoua/nsimage.hpp"
#include "nanoua/sessions.hpp"
#include "nanoua/vm.hpp"

// The deterministic cycle simulator: transport plus the S3 stage bank over a
// shared memory with a round-robin arbiter, accounted across two clock
// domains. The memory (and the transport pipeline living in its domain) runs
// at a fixed 100 units; the OPC UA engine running the stages is clocked at
// 25/33/50, crossing into the memory domain through a synchronizer.
//
// Replaying a capture yields the server's responses, a dense per-cycle trace
// (one state per unit per memory cycle, at most one memory grant per cycle),
// request start/end markers for latency, and a trace hash for determinism
// checks. Identical inputs produce identical outputs, bytes and trace alike.
//
// A unit's trace state is sampled in the memory domain: a computing stage
// shows `active` only on the cycles where an engine clock edge lands (so a
// slower engine clock dilutes activity), `stalled` while it sits in the
// synchronizer or waits for a grant, and `idle` otherwise.
namespace nanoua::sim {

inline constexpr uint32_t kGrantBytes = 4;       // memory port width per grant
inline constexpr uint32_t kBufferBudget = 24 * 1024;  // stage SRAM, total

struct ClockConfig {
    uint32_t engine_freq = 50;  // abstract ratio units; operating points 25/33/50
    uint32_t mem_freq = 100;    // fixed
    uint32_t sync_penalty = 2;  // memory cycles per engine->memory crossing
};

// Round-robin arbitration over requesters 0..n-1 (0 is the transport, 1+i is
// stage i). One grant per step; the pointer advances past the grantee and
// stands still when nobody requests.
class Arbiter {
public:
    explicit Arbiter(uint32_t num_requesters) : n_(num_requesters) {}

    // request_mask bit i set = requester i wants the port. Returns the
    // granted requester, or -1 when the mask is empty.
    int step(uint32_t request_mask);
    uint32_t pointer() const { return ptr_; }

private:
    uint32_t n_;
    uint32_t ptr_ = 0;
};

enum class UnitState : uint8_t { Idle = 0, Active = 1, Stalled = 2 };
const char* unit_state_name(UnitState s);
std::string unit_name(uint32_t unit);  // "transport", "stage0", ...

struct RequestMarker {
    uint64_t start_cycle = 0;  // transport begins ingesting the request
    uint64_t end_cycle = 0;    // transport finishes emitting the response
    uint32_t service_type = 0;  // request type id; 0 for transport-level exchanges
    int stage = -1;
};

struct CycleTrace {
    uint32_t num_units = 0;
    uint64_t cycles = 0;
    std::vector<uint8_t> states;  // num_units entries per cycle, cycle-major
    std::vector<int8_t> grants;   // granted requester per cycle, -1 for none
    std::vector<RequestMarker> markers;
    uint64_t fnv_hash = 0;  // FNV-1a over every cycle's states and grant
    uint32_t max_occupancy_bytes = 0;
    bool occupancy_within_budget = true;  // never exceeded kBufferBudget

    UnitState state_at(uint64_t cycle, uint32_t unit) const {
        return UnitState(states[cycle * num_units + unit]);
    }
};

// end - start of the indexed request marker; nullopt when no such request.
std::optional<uint64_t> latency(const CycleTrace& t, size_t request_index);
// Fraction of active unit-cycles over [begin, end); nullopt on an empty or
// out-of-range window.
std::optional<double> activity(const CycleTrace& t, uint64_t begin, uint64_t end);

// ------------------------------------------------------------------ capture

struct CaptureFrame {
    bool inbound = false;  // client-to-server
    std::vector<uint8_t> bytes;
};

struct Capture {
    std::vector<CaptureFrame> frames;
};

// Directory layout: manifest.txt with one line per frame -- direction ("in"
// or "out"), byte count, frame file name -- plus the raw frame files.
struct LoadedCapture {
    Capture capture;
    std::string error;
    bool ok() const { return error.empty(); }
};
LoadedCapture load_capture(const std::string& dir);
// Returns an empty string on success, else the failure description.
std::string save_capture(const Capture& c, const std::string& dir);

// ---------------------------------------------------------------- execution

struct RunReport {
    std::vector<std::vector<uint8_t>> responses;  // outbound frames, in order
    CycleTrace trace;
    uint64_t response_bytes = 0;  // functional side of the conservation check
    uint64_t emitted_bytes = 0;   // cycle-model side; must match response_bytes
    std::string error;
    bool ok() const { return error.empty(); }
};

// Feed the capture's inbound frames through a fresh transport + stage bank
// and account every byte against the memory model. Outbound frames in the
// capture are ignored here; the replay tool compares them against
// `responses` after masking volatile fields.
RunReport run_trace(const session::EngineConfig& engine_cfg, const ClockConfig& clocks,
                    const Capture& capture, ns::NamespaceImage image,
                    vm::VmProgram programs);

// Field-wise comparison of a capture's recorded outbound frames against the
// frames a replay regenerated. Volatile fields (timestamps, nonces) are
// masked on both sides and secure channel ids are normalized, since a live
// server hands out ids from a process-wide counter while a replay starts
// fresh. Everything else must match exactly.
struct ReplayReport {
    size_t frames_expected = 0;
    size_t frames_compared = 0;   // pairs that matched
    std::string divergence;       // empty = full match
    bool ok() const { return divergence.empty(); }
};
ReplayReport compare_replay(const Capture& capture,
                            const std::vector<std::vector<uint8_t>>& responses);

// Line-oriented export: "cycle unit state" with a trailing "grant" token on
// the granted unit's line.
void export_trace(const CycleTrace& t, std::ostream& out);
// key=value summary: cycle totals, conservation counters, per-service mean
// latencies, activity, occupancy, trace hash.
void export_summary(const RunReport& r, std::ostream& out);

}  // namespace nanoua::sim
