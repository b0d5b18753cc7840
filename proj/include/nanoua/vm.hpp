#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

// The stream processor: a Harvard-architecture VM whose variable-length
// instructions copy, compare, and synthesize OPC UA-typed values between up
// to 16 bounded streams. Service programs for it are assembled from mnemonic
// source (see the asm module); the engine binds streams and runs it once per
// request.
//
// Instruction encoding (first byte determines total length; prefix-free):
//
//   00            HALT                        1 byte
//   01            RET                         1 byte
//   02 cc         TRAP #code                  2 bytes
//   1t ab         COPY.t  sA, sB              2 bytes  (a = src, b = dst nibble)
//   2t a0         SKIP.t  sA                  2 bytes
//   3t ab         CMP.t   sA, sB              2 bytes  (sets eq/lt flags)
//   40 ll hh      BR      rel16               3 bytes  (relative to next insn)
//   5c ll hh      BRC.c   rel16               3 bytes  (c = condition nibble)
//   60 0d ii*4    LDI     sD, #imm32          6 bytes  (append 4 bytes LE)
//   61 00 ii*4    LDI     ctr, #imm32         6 bytes
//   62 0a         LDI     ctr, sA             2 bytes  (pop u32 from stream)
//   70 ll hh      CALL    rel16               3 bytes
//   80 rs         MKIDX   iR, sS[.r|.w]       2 bytes  (r = reg<<1|cursor, s = stream)
//   90 rs         SEEK    iR, sS[.r|.w]       2 bytes  (.w truncates the stream)
//   Ad bb         EMIT    sD, #byte           2 bytes  (d = dst stream nibble)
//
// Type tags t (nibble): 0 reserved for user-defined structures (illegal to
// execute today), 1=i8 2=u8 3=i16 4=u16 5=i32 6=u32 7=f32 8=f64 9=str 10=nid
// 11=lt 12=qn 13=var 14=bs 15=dv. Boolean traffic uses the u8 tag.
//
// Cost model: 1 cycle per instruction byte fetched plus 1 cycle per data byte
// moved through any stream (reads and writes both count).
//
// Stream convention: s0 = request message, s1 = response buffer, s2 =
// namespace interface, s3..s15 = scratch (s3 holds the request timestamp by
// convention of the bundled programs).
namespace nanoua::vm {

inline constexpr int kNumStreams = 16;
inline constexpr int kStackDepth = 64;
inline constexpr int kNumIndexRegs = 8;

enum class TypeTag : uint8_t {
    Structure = 0,
    I8 = 1,
    U8 = 2,
    I16 = 3,
    U16 = 4,
    I32 = 5,
    U32 = 6,
    F32 = 7,
    F64 = 8,
    Str = 9,
    Nid = 10,
    Lt = 11,
    Qn = 12,
    Var = 13,
    Bs = 14,
    Dv = 15,
};

// Assembler suffix for a tag ("i8", "str", ...); null for the reserved tag.
const char* type_tag_suffix(TypeTag t);

enum class Cond : uint8_t {
    Eq = 0,
    Ne = 1,
    Lt = 2,
    Le = 3,
    Gt = 4,
    Ge = 5,
    Cnz = 6,  // if ctr > 0: ctr -= 1; branch when the new value is nonzero
    Cz = 7,   // branch when ctr == 0 (no decrement)
};

const char* cond_suffix(Cond c);

// Opcode first-byte values (rows 1t/2t/3t/Ad carry the tag/stream nibble).
namespace op {
constexpr uint8_t Halt = 0x00;
constexpr uint8_t Ret = 0x01;
constexpr uint8_t Trap = 0x02;
constexpr uint8_t CopyRow = 0x10;
constexpr uint8_t SkipRow = 0x20;
constexpr uint8_t CmpRow = 0x30;
constexpr uint8_t Br = 0x40;
constexpr uint8_t BrcRow = 0x50;  // 0x50..0x57
constexpr uint8_t LdiImm = 0x60;
constexpr uint8_t LdiCtrImm = 0x61;
constexpr uint8_t LdiCtrStream = 0x62;
constexpr uint8_t Call = 0x70;
constexpr uint8_t Mkidx = 0x80;
constexpr uint8_t Seek = 0x90;
constexpr uint8_t EmitRow = 0xA0;  // 0xA0..0xAF
}  // namespace op

// Total encoded length of the instruction starting with this byte; 0 means
// no instruction starts with it.
int insn_length(uint8_t first);

enum class TrapCode : uint8_t {
    StreamOverrun = 1,   // read past a stream's end or write past its capacity
    StackOverflow = 2,
    StackUnderflow = 3,
    IllegalOpcode = 4,   // also: truncated instruction, pc out of bounds
    TypeMismatch = 5,    // stream bytes not decodable as the instruction's tag
    ProgramTrap = 6,     // explicit TRAP instruction
};

const char* trap_name(TrapCode c);

struct Trap {
    TrapCode code;
    uint8_t detail = 0;  // TRAP operand, or the stream index involved
    bool operator==(const Trap&) const = default;
};

// ------------------------------------------------------------------ streams

// A bounded byte queue with independent read/write cursors. The readable
// region is [0, end); writes append at the write cursor and extend end.
class Stream {
public:
    virtual ~Stream() = default;

    // Readable remainder starting at the read cursor.
    virtual std::span<const uint8_t> peek() const = 0;
    // Advance the read cursor; n must not exceed peek().size().
    virtual void consume(size_t n) = 0;
    // Append bytes at the write cursor; false when capacity would be exceeded.
    virtual bool write(std::span<const uint8_t> b) = 0;

    virtual size_t read_pos() const = 0;
    virtual size_t write_pos() const = 0;
    // Reposition a cursor to an earlier point. seek_write truncates the
    // readable region to pos (and clamps the read cursor); both return false
    // when pos lies beyond the current extent.
    virtual bool seek_read(size_t pos) = 0;
    virtual bool seek_write(size_t pos) = 0;
};

class BufferStream final : public Stream {
public:
    explicit BufferStream(size_t capacity) : cap_(capacity) { buf_.reserve(capacity); }

    static BufferStream preloaded(std::vector<uint8_t> bytes) {
        BufferStream s(bytes.size());
        s.buf_ = std::move(bytes);
        return s;
    }

    std::span<const uint8_t> peek() const override {
        return {buf_.data() + rpos_, buf_.size() - rpos_};
    }
    void consume(size_t n) override { rpos_ += n; }
    bool write(std::span<const uint8_t> b) override {
        if (buf_.size() + b.size() > cap_) return false;
        buf_.insert(buf_.end(), b.begin(), b.end());
        return true;
    }
    size_t read_pos() const override { return rpos_; }
    size_t write_pos() const override { return buf_.size(); }
    bool seek_read(size_t pos) override {
        if (pos > buf_.size()) return false;
        rpos_ = pos;
        return true;
    }
    bool seek_write(size_t pos) override {
        if (pos > buf_.size()) return false;
        buf_.resize(pos);
        if (rpos_ > pos) rpos_ = pos;
        return true;
    }

    std::span<const uint8_t> contents() const { return {buf_.data(), buf_.size()}; }
    size_t capacity() const { return cap_; }

private:
    std::vector<uint8_t> buf_;
    size_t cap_;
    size_t rpos_ = 0;
};

// ----------------------------------------------------------------- programs

struct VmProgram {
    std::string name;
    std::vector<uint8_t> code;
    // (service type id, code offset), in declaration order.
    std::vector<std::pair<uint32_t, uint32_t>> entry_points;

    std::optional<uint32_t> entry_for(uint32_t service_type) const {
        for (const auto& [svc, off] : entry_points)
            if (svc == service_type) return off;
        return std::nullopt;
    }
};

// Image format: magic "UAVM", version u16, entry count u32, (serviceTypeId
// u32, offset u32) pairs, code length u32, code bytes. Little-endian.
std::vector<uint8_t> serialize_program(const VmProgram& p);

struct ParsedProgram {
    VmProgram program;
    std::string error;  // empty on success
    bool ok() const { return error.empty(); }
};
ParsedProgram parse_program(std::span<const uint8_t> image);

// ------------------------------------------------------------------ scanner

// Wire-grammar walker, independent of the codec module: the number of bytes
// one value of type `tag` occupies at the start of `b`.
constexpr ptrdiff_t kScanMalformed = -1;  // bytes cannot start a value of this type
constexpr ptrdiff_t kScanShort = -2;      // needs more bytes than available
ptrdiff_t scan_value_length(TypeTag tag, std::span<const uint8_t> b);

// Typed comparison of two scanned values (a and b are exactly one value
// each). Numeric tags compare by value, str/bs/nid/qn/lt/var compare with
// null sorting before content (see the ISA reference for the exact order).
struct CmpFlags {
    bool eq = false;
    bool lt = false;
};
CmpFlags compare_values(TypeTag tag, std::span<const uint8_t> a, std::span<const uint8_t> b);

// ----------------------------------------------------------------- machine

struct StepEffect {
    uint8_t length = 0;   // instruction bytes fetched
    uint32_t cost = 0;    // length + data bytes moved
    std::array<uint16_t, kNumStreams> stream_read{};   // data bytes consumed per stream
    std::array<uint16_t, kNumStreams> stream_write{};  // data bytes appended per stream
    bool halted = false;
    std::optional<Trap> trap;
};

struct VmState {
    uint32_t pc = 0;
    uint8_t sp = 0;
    std::array<uint32_t, kStackDepth> stack{};
    bool flag_eq = false;
    bool flag_lt = false;
    uint32_t ctr = 0;
    std::array<uint32_t, kNumIndexRegs> index_regs{};
    std::array<Stream*, kNumStreams> streams{};
    uint64_t cycles = 0;
    bool halted = false;
    std::optional<Trap> trap;

    // Streams left null behave as empty zero-capacity streams (any access
    // traps StreamOverrun).
};

// Execute exactly one instruction. No-op when already halted or trapped.
// On a trap the instruction has no stream effects (validation precedes
// mutation) and only its fetch cost is charged.
StepEffect step(VmState& st, const VmProgram& p);

enum class RunOutcome : uint8_t { Halted, Trapped, BudgetExhausted, NoEntryPoint };

struct RunResult {
    RunOutcome outcome;
    uint64_t cycles_used = 0;
    std::optional<Trap> trap;
    uint32_t pc = 0;  // final program counter (trap site when trapped)
    // Data bytes moved through streams. The cycle simulator runs the whole
    // cost in the engine clock domain and additionally pushes these bytes
    // (plus namespace-image traffic) through the shared-memory port.
    uint64_t data_bytes = 0;
};

// Run from the entry point for `service_type` until HALT, trap, or budget
// exhaustion. Identical inputs produce identical stream contents and cycle
// counts. When the next instruction would exceed the budget the run stops
// with cycles_used == budget exactly.
RunResult run_service(const VmProgram& p, uint32_t service_type,
                      const std::array<Stream*, kNumStreams>& streams, uint64_t budget);

}  // namespace nanoua::vm
