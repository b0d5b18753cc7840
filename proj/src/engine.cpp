#include "nanoua/engine.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "nanoua/codec.hpp"
#include "nanoua/status.hpp"
#include "nanoua/transport.hpp"

namespace nanoua::sim {

namespace {

// Simulated wall clock origin: 2026-01-01 00:00 UTC in OPC UA ticks. Replay
// timestamps get masked before comparison, so only monotonicity matters.
constexpr int64_t kEpochTicks = 134116992000000000;

constexpr uint64_t kFnvOffset = 1469598103934665603ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

}  // namespace

int Arbiter::step(uint32_t request_mask) {
    for (uint32_t k = 0; k < n_; k++) {
        const uint32_t cand = (ptr_ + k) % n_;
        if (request_mask & (1u << cand)) {
            ptr_ = (cand + 1) % n_;
            return int(cand);
        }
    }
    return -1;
}

const char* unit_state_name(UnitState s) {
    switch (s) {
        case UnitState::Idle: return "idle";
        case UnitState::Active: return "active";
        case UnitState::Stalled: return "stalled";
    }
    return "?";
}

std::string unit_name(uint32_t unit) {
    if (unit == 0) return "transport";
    return "stage" + std::to_string(unit - 1);
}

std::optional<uint64_t> latency(const CycleTrace& t, size_t request_index) {
    if (request_index >= t.markers.size()) return std::nullopt;
    const auto& m = t.markers[request_index];
    return m.end_cycle - m.start_cycle;
}

std::optional<double> activity(const CycleTrace& t, uint64_t begin, uint64_t end) {
    if (begin >= end || end > t.cycles || t.num_units == 0) return std::nullopt;
    uint64_t active = 0;
    for (uint64_t c = begin; c < end; c++)
        for (uint32_t u = 0; u < t.num_units; u++)
            if (t.state_at(c, u) == UnitState::Active) active++;
    return double(active) / (double(end - begin) * double(t.num_units));
}

// ------------------------------------------------------------------ capture

LoadedCapture load_capture(const std::string& dir) {
    LoadedCapture out;
    const std::string manifest_path = dir + "/manifest.txt";
    std::ifstream mf(manifest_path);
    if (!mf) {
        out.error = "cannot open " + manifest_path;
        return out;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(mf, line)) {
        lineno++;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string direction, file;
        uint64_t count = 0;
        if (!(ls >> direction >> count >> file) || (direction != "in" && direction != "out")) {
            out.error = manifest_path + ":" + std::to_string(lineno) +
                        ": expected \"in|out <bytes> <file>\"";
            return out;
        }
        std::ifstream ff(dir + "/" + file, std::ios::binary);
        if (!ff) {
            out.error = "missing frame file " + file;
            return out;
        }
        std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(ff)),
                                   std::istreambuf_iterator<char>());
        if (bytes.size() != count) {
            out.error = file + ": manifest says " + std::to_string(count) + " bytes, file has " +
                        std::to_string(bytes.size());
            return out;
        }
        out.capture.frames.push_back({direction == "in", std::move(bytes)});
    }
    return out;
}

std::string save_capture(const Capture& c, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return "cannot create " + dir + ": " + ec.message();
    std::ostringstream manifest;
    int n = 0;
    for (const auto& f : c.frames) {
        char name[32];
        std::snprintf(name, sizeof name, "frame-%04d.bin", ++n);
        std::ofstream ff(dir + "/" + name, std::ios::binary | std::ios::trunc);
        if (!ff) return std::string("cannot write ") + name;
        ff.write(reinterpret_cast<const char*>(f.bytes.data()), std::streamsize(f.bytes.size()));
        if (!ff) return std::string("short write on ") + name;
        manifest << (f.inbound ? "in" : "out") << ' ' << f.bytes.size() << ' ' << name << '\n';
    }
    std::ofstream mf(dir + "/manifest.txt", std::ios::trunc);
    mf << manifest.str();
    if (!mf) return "cannot write manifest.txt";
    return {};
}

// ---------------------------------------------------------------- simulator

namespace {

// Wall clock driven by the memory-cycle counter (100 cycles per microsecond
// keeps lifetimes and timeouts effectively infinite within a replay).
class SimClock final : public transport::Clock {
public:
    explicit SimClock(const uint64_t& cycle) : cycle_(cycle) {}
    DateTime now() override { return DateTime{kEpochTicks + int64_t(cycle_ / 10)}; }

private:
    const uint64_t& cycle_;
};

class SequentialIds final : public transport::ChannelIdAllocator {
public:
    uint32_t next() override { return ++last_; }

private:
    uint32_t last_ = 0;
};

class Simulator {
public:
    Simulator(const session::EngineConfig& engine_cfg, const ClockConfig& clocks,
              ns::NamespaceImage image, vm::VmProgram programs)
        : clocks_(clocks),
          num_units_(1 + session::effective_stages(engine_cfg)),
          arbiter_(num_units_),
          clock_(cycle_),
          engine_(engine_cfg, std::move(image), std::move(programs), clock_),
          conn_(session::transport_config(engine_cfg), engine_, clock_, ids_) {}

    RunReport run(const Capture& capture);

private:
    struct CycleResult {
        int grant = -1;
        bool tick = false;  // an engine clock edge landed in this memory cycle
    };

    // Advance one memory cycle: arbitrate the port, step the engine-clock
    // phase accumulator, stamp every unit's state into the trace.
    // `computing_unit` (or -1) is marked active only if the engine ticked;
    // requesters and explicitly stalled units show stalled unless granted.
    CycleResult step_cycle(uint32_t request_mask, uint32_t stall_mask, int computing_unit);

    // Move `bytes` through the port for `unit`, one grant per kGrantBytes.
    // Returns the cycle of the final grant; adds actual bytes to *moved.
    uint64_t transfer(uint32_t unit, uint64_t bytes, uint64_t* moved = nullptr);

    // A stage's dispatch: `ticks` engine-domain cycles of execution, then
    // `grants` memory transactions flushing the dispatch's stream and image
    // traffic through the port. The two phases stay separate so the engine
    // share scales purely with the clock ratio; each transaction pays the
    // synchronizer penalty in full before the grant request goes up.
    void stage_work(uint32_t unit, uint64_t ticks, uint64_t grants);

    void feed_hash(uint8_t b) {
        hash_ ^= b;
        hash_ *= kFnvPrime;
    }

    ClockConfig clocks_;
    uint32_t num_units_;
    Arbiter arbiter_;
    uint64_t cycle_ = 0;
    uint32_t acc_ = 0;  // engine-clock phase accumulator (DDS style)
    SimClock clock_;
    SequentialIds ids_;
    session::ServiceEngine engine_;
    transport::Connection conn_;

    uint64_t occupancy_ = 0;  // stage SRAM bytes currently claimed
    CycleTrace trace_;
    uint64_t hash_ = kFnvOffset;
};

Simulator::CycleResult Simulator::step_cycle(uint32_t request_mask, uint32_t stall_mask,
                                             int computing_unit) {
    CycleResult r;
    r.grant = arbiter_.step(request_mask);

    acc_ += clocks_.engine_freq;
    if (acc_ >= clocks_.mem_freq) {
        acc_ -= clocks_.mem_freq;
        r.tick = true;
    }

    for (uint32_t u = 0; u < num_units_; u++) {
        UnitState s = UnitState::Idle;
        if (((request_mask | stall_mask) >> u) & 1u) s = UnitState::Stalled;
        if (computing_unit == int(u) && r.tick) s = UnitState::Active;
        if (r.grant == int(u)) s = UnitState::Active;
        trace_.states.push_back(uint8_t(s));
        feed_hash(uint8_t(s));
    }
    trace_.grants.push_back(int8_t(r.grant));
    feed_hash(uint8_t(r.grant));

    if (occupancy_ > trace_.max_occupancy_bytes) trace_.max_occupancy_bytes = uint32_t(occupancy_);
    if (occupancy_ > kBufferBudget) trace_.occupancy_within_budget = false;

    cycle_++;
    return r;
}

uint64_t Simulator::transfer(uint32_t unit, uint64_t bytes, uint64_t* moved) {
    uint64_t last = cycle_;
    uint64_t left = bytes;
    while (left > 0) {
        if (step_cycle(1u << unit, 0, -1).grant == int(unit)) {
            const uint64_t chunk = std::min<uint64_t>(kGrantBytes, left);
            left -= chunk;
            if (moved) *moved += chunk;
            last = cycle_ - 1;
        }
    }
    return last;
}

void Simulator::stage_work(uint32_t unit, uint64_t ticks, uint64_t grants) {
    for (uint64_t done = 0; done < ticks;) {
        if (step_cycle(0, 0, int(unit)).tick) done++;
    }
    for (uint64_t done = 0; done < grants; done++) {
        for (uint32_t p = 0; p < clocks_.sync_penalty; p++) step_cycle(0, 1u << unit, -1);
        while (step_cycle(1u << unit, 0, -1).grant != int(unit)) {
        }
    }
}

RunReport Simulator::run(const Capture& capture) {
    RunReport report;
    trace_.num_units = num_units_;

    std::optional<RequestMarker> pending;
    for (const auto& frame : capture.frames) {
        if (!frame.inbound) continue;  // recorded responses are the comparison side
        if (conn_.state() == transport::Connection::State::Closed) break;

        if (!pending) {
            pending = RequestMarker{};
            pending->start_cycle = cycle_;
        }

        // Ingest: the frame lands in buffer memory on top of whatever
        // partial chunks the reassembler already holds for this request.
        occupancy_ = conn_.reassembly_bytes() + frame.bytes.size();
        transfer(0, frame.bytes.size());

        auto out = conn_.feed(frame.bytes);
        auto stats = engine_.drain_stats();
        occupancy_ = conn_.reassembly_bytes();

        for (const auto& st : stats) {
            pending->service_type = st.service_type;
            pending->stage = st.stage;
            if (st.stage >= 0) {
                // The stage owns its message buffer for the whole dispatch;
                // request and response never coexist (the response stream
                // overwrites the consumed request). The VM's cost (a cycle
                // per instruction byte and per data byte) is all engine-side
                // execution; the stream and image bytes it touched also
                // cross the shared memory, four per grant.
                occupancy_ = std::max<uint64_t>(st.request_bytes, st.response_bytes);
                stage_work(uint32_t(1 + st.stage), st.vm_cycles,
                           ceil_div(st.data_bytes + st.image_bytes, kGrantBytes));
            } else {
                // Stageless service handled in the transport pipeline: same
                // clock domain as the memory, so no synchronizer crossing.
                transfer(0, st.data_bytes);
            }
        }

        if (!out.frames.empty()) {
            uint64_t left = 0;
            for (const auto& f : out.frames) left += f.size();
            uint64_t end = cycle_;
            for (auto& f : out.frames) {
                occupancy_ = left;
                end = transfer(0, f.size(), &report.emitted_bytes);
                left -= f.size();
                report.response_bytes += f.size();
                report.responses.push_back(std::move(f));
            }
            occupancy_ = conn_.reassembly_bytes();
            pending->end_cycle = end;
            trace_.markers.push_back(*pending);
            pending.reset();
        } else if (conn_.reassembly_bytes() == 0) {
            // Nothing came back and nothing is pending reassembly: a silent
            // teardown (CLO, client ERR). The exchange has no response side.
            pending.reset();
        }

        if (out.close) break;
    }
    conn_.on_disconnect();

    trace_.cycles = cycle_;
    trace_.fnv_hash = hash_;
    report.trace = std::move(trace_);
    return report;
}

}  // namespace

RunReport run_trace(const session::EngineConfig& engine_cfg, const ClockConfig& clocks,
                    const Capture& capture, ns::NamespaceImage image, vm::VmProgram programs) {
    RunReport bad;
    if (clocks.mem_freq == 0 || clocks.engine_freq == 0) {
        bad.error = "clock frequencies must be positive";
        return bad;
    }
    if (clocks.engine_freq > clocks.mem_freq) {
        bad.error = "engine clock cannot outrun the memory clock";
        return bad;
    }
    const uint32_t stages = session::effective_stages(engine_cfg);
    if (stages > 8) {
        bad.error = "stage count out of range (1..8)";
        return bad;
    }
    if (uint64_t(stages) * engine_cfg.buffer_bytes_per_stage > kBufferBudget) {
        bad.error = "stage buffers exceed the memory budget";
        return bad;
    }
    Simulator sim(engine_cfg, clocks, std::move(image), std::move(programs));
    return sim.run(capture);
}

// ------------------------------------------------------------------- replay

namespace {

struct MaskedBody {
    ServiceMessage msg;
    std::string err;  // empty = decoded fine
};

MaskedBody masked_body(const std::vector<uint8_t>& body) {
    auto d = decode_service(body);
    if (!d.ok()) return {{}, "undecodable service body"};
    ServiceMessage m = mask_volatile_fields(std::move(d.value));
    // The channel id inside the OPN response comes from a process-wide
    // counter on a live server; the chunk-level mapping already checks it.
    if (auto* opn = std::get_if<OpenSecureChannelResponse>(&m.body)) {
        opn->security_token.channel_id = 0;
    }
    return {std::move(m), {}};
}

}  // namespace

ReplayReport compare_replay(const Capture& capture,
                            const std::vector<std::vector<uint8_t>>& responses) {
    ReplayReport rep;
    std::vector<const std::vector<uint8_t>*> recorded;
    for (const auto& f : capture.frames)
        if (!f.inbound) recorded.push_back(&f.bytes);
    rep.frames_expected = recorded.size();

    // A live server mints channel ids from a shared counter; a replay starts
    // at 1. Pin each recorded id to the replayed id it first pairs with.
    std::map<uint32_t, uint32_t> channel_map;
    std::vector<uint8_t> rec_body, rep_body;  // chunked bodies, reassembled per side

    const size_t n = std::min(recorded.size(), responses.size());
    for (size_t i = 0; i < n; i++) {
        const auto& a = *recorded[i];
        const auto& b = responses[i];
        const std::string label = "outbound frame " + std::to_string(i);

        auto ha = transport::decode_frame_header(a);
        auto hb = transport::decode_frame_header(b);
        if (!ha.ok() || !hb.ok()) {
            rep.divergence = label + ": unparseable frame header";
            return rep;
        }
        if (ha.value.type != hb.value.type) {
            rep.divergence = label + ": recorded " + transport::msg_type_name(ha.value.type) +
                             ", replay produced " + transport::msg_type_name(hb.value.type);
            return rep;
        }

        switch (ha.value.type) {
            case transport::MsgType::ACK: {
                auto da = transport::decode_acknowledge(a);
                auto db = transport::decode_acknowledge(b);
                if (!da.ok() || !db.ok() || !(da.value == db.value)) {
                    rep.divergence = label + ": acknowledge differs";
                    return rep;
                }
                break;
            }
            case transport::MsgType::ERR: {
                auto da = transport::decode_error(a);
                auto db = transport::decode_error(b);
                if (!da.ok() || !db.ok() || !(da.value == db.value)) {
                    rep.divergence = label + ": error frame differs";
                    return rep;
                }
                break;
            }
            case transport::MsgType::OPN:
            case transport::MsgType::MSG:
            case transport::MsgType::CLO: {
                auto da = transport::decode_chunk(a);
                auto db = transport::decode_chunk(b);
                if (!da.ok() || !db.ok()) {
                    rep.divergence = label + ": unparseable chunk";
                    return rep;
                }
                const auto& ca = da.value;
                const auto& cb = db.value;
                auto [it, fresh] = channel_map.emplace(ca.secure_channel_id, cb.secure_channel_id);
                if (!fresh && it->second != cb.secure_channel_id) {
                    rep.divergence = label + ": secure channel id mapping broke";
                    return rep;
                }
                if (ca.flag != cb.flag || ca.token_id != cb.token_id ||
                    ca.sequence_number != cb.sequence_number || ca.request_id != cb.request_id ||
                    !(ca.security_policy_uri == cb.security_policy_uri)) {
                    rep.divergence = label + ": chunk header differs";
                    return rep;
                }
                if (ca.flag == transport::ChunkFlag::Abort) {
                    if (ca.body != cb.body) {
                        rep.divergence = label + ": abort payload differs";
                        return rep;
                    }
                    rec_body.clear();
                    rep_body.clear();
                    break;
                }
                rec_body.insert(rec_body.end(), ca.body.begin(), ca.body.end());
                rep_body.insert(rep_body.end(), cb.body.begin(), cb.body.end());
                if (ca.flag == transport::ChunkFlag::Final) {
                    auto ma = masked_body(rec_body);
                    auto mb = masked_body(rep_body);
                    rec_body.clear();
                    rep_body.clear();
                    if (!ma.err.empty() || !mb.err.empty()) {
                        rep.divergence = label + ": " + (ma.err.empty() ? mb.err : ma.err);
                        return rep;
                    }
                    if (!(ma.msg == mb.msg)) {
                        rep.divergence = label + ": service body differs after masking";
                        return rep;
                    }
                }
                break;
            }
            default: {
                if (a != b) {
                    rep.divergence = label + ": raw bytes differ";
                    return rep;
                }
                break;
            }
        }
        rep.frames_compared++;
    }

    if (recorded.size() != responses.size()) {
        rep.divergence = "frame count: recorded " + std::to_string(recorded.size()) +
                         ", replay produced " + std::to_string(responses.size());
    }
    return rep;
}

// ------------------------------------------------------------------- export

void export_trace(const CycleTrace& t, std::ostream& out) {
    for (uint64_t c = 0; c < t.cycles; c++) {
        for (uint32_t u = 0; u < t.num_units; u++) {
            out << c << ' ' << unit_name(u) << ' ' << unit_state_name(t.state_at(c, u));
            if (t.grants[c] == int8_t(u)) out << " grant";
            out << '\n';
        }
    }
}

namespace {

const char* service_label(uint32_t type_id) {
    switch (type_id) {
        case 0: return "transport";
        case msgid::GetEndpointsRequest: return "get_endpoints";
        case msgid::CreateSessionRequest: return "create_session";
        case msgid::ActivateSessionRequest: return "activate_session";
        case msgid::CloseSessionRequest: return "close_session";
        case msgid::ReadRequest: return "read";
        case msgid::WriteRequest: return "write";
        default: return nullptr;
    }
}

}  // namespace

void export_summary(const RunReport& r, std::ostream& out) {
    const auto& t = r.trace;
    out << "cycles=" << t.cycles << '\n';
    out << "units=" << t.num_units << '\n';
    out << "requests=" << t.markers.size() << '\n';
    out << "response_bytes=" << r.response_bytes << '\n';
    out << "emitted_bytes=" << r.emitted_bytes << '\n';
    out << "max_occupancy_bytes=" << t.max_occupancy_bytes << '\n';
    out << "occupancy_within_budget=" << (t.occupancy_within_budget ? 1 : 0) << '\n';
    char hex[24];
    std::snprintf(hex, sizeof hex, "%016" PRIx64, t.fnv_hash);
    out << "trace_hash=0x" << hex << '\n';
    if (auto a = activity(t, 0, t.cycles)) out << "activity=" << *a << '\n';

    struct Acc {
        uint64_t sum = 0;
        uint64_t count = 0;
    };
    std::map<uint32_t, Acc> per_service;
    for (const auto& m : t.markers) {
        auto& acc = per_service[m.service_type];
        acc.sum += m.end_cycle - m.start_cycle;
        acc.count++;
    }
    for (const auto& [type_id, acc] : per_service) {
        std::string key;
        if (const char* name = service_label(type_id)) {
            key = name;
        } else {
            key = "service" + std::to_string(type_id);
        }
        out << "latency." << key << ".count=" << acc.count << '\n';
        out << "latency." << key << ".mean=" << double(acc.sum) / double(acc.count) << '\n';
    }
}

}  // namespace nanoua::sim
