#include "nanoua/vm.hpp"

#include <bit>
#include <cstring>

#include "nanoua/bytes.hpp"

namespace nanoua::vm {

const char* type_tag_suffix(TypeTag t) {
    switch (t) {
        case TypeTag::Structure: return nullptr;
        case TypeTag::I8: return "i8";
        case TypeTag::U8: return "u8";
        case TypeTag::I16: return "i16";
        case TypeTag::U16: return "u16";
        case TypeTag::I32: return "i32";
        case TypeTag::U32: return "u32";
        case TypeTag::F32: return "f32";
        case TypeTag::F64: return "f64";
        case TypeTag::Str: return "str";
        case TypeTag::Nid: return "nid";
        case TypeTag::Lt: return "lt";
        case TypeTag::Qn: return "qn";
        case TypeTag::Var: return "var";
        case TypeTag::Bs: return "bs";
        case TypeTag::Dv: return "dv";
    }
    return nullptr;
}

const char* cond_suffix(Cond c) {
    switch (c) {
        case Cond::Eq: return "eq";
        case Cond::Ne: return "ne";
        case Cond::Lt: return "lt";
        case Cond::Le: return "le";
        case Cond::Gt: return "gt";
        case Cond::Ge: return "ge";
        case Cond::Cnz: return "cnz";
        case Cond::Cz: return "cz";
    }
    return nullptr;
}

const char* trap_name(TrapCode c) {
    switch (c) {
        case TrapCode::StreamOverrun: return "StreamOverrun";
        case TrapCode::StackOverflow: return "StackOverflow";
        case TrapCode::StackUnderflow: return "StackUnderflow";
        case TrapCode::IllegalOpcode: return "IllegalOpcode";
        case TrapCode::TypeMismatch: return "TypeMismatch";
        case TrapCode::ProgramTrap: return "ProgramTrap";
    }
    return "?";
}

int insn_length(uint8_t first) {
    const uint8_t hi = first & 0xF0;
    const uint8_t lo = first & 0x0F;
    switch (hi) {
        case 0x00:
            if (first == op::Halt || first == op::Ret) return 1;
            if (first == op::Trap) return 2;
            return 0;
        case 0x10:
        case 0x20:
        case 0x30:
            return lo == 0 ? 0 : 2;  // tag 0 reserved
        case 0x40:
            return first == op::Br ? 3 : 0;
        case 0x50:
            return lo <= 7 ? 3 : 0;
        case 0x60:
            if (first == op::LdiImm || first == op::LdiCtrImm) return 6;
            if (first == op::LdiCtrStream) return 2;
            return 0;
        case 0x70:
            return first == op::Call ? 3 : 0;
        case 0x80:
            return first == op::Mkidx ? 2 : 0;
        case 0x90:
            return first == op::Seek ? 2 : 0;
        case 0xA0:
            return 2;
        default:
            return 0;
    }
}

// ------------------------------------------------------------------ scanner

namespace {

ptrdiff_t scan_fixed(size_t n, std::span<const uint8_t> b) {
    return b.size() >= n ? static_cast<ptrdiff_t>(n) : kScanShort;
}

int32_t read_i32(std::span<const uint8_t> b, size_t at) {
    uint32_t v = static_cast<uint32_t>(b[at]) | static_cast<uint32_t>(b[at + 1]) << 8 |
                 static_cast<uint32_t>(b[at + 2]) << 16 | static_cast<uint32_t>(b[at + 3]) << 24;
    return static_cast<int32_t>(v);
}

// str and bs share the length-prefixed layout (-1 = null).
ptrdiff_t scan_len_prefixed(std::span<const uint8_t> b) {
    if (b.size() < 4) return kScanShort;
    const int32_t len = read_i32(b, 0);
    if (len == -1) return 4;
    if (len < 0) return kScanMalformed;
    const size_t total = 4 + static_cast<size_t>(len);
    return b.size() >= total ? static_cast<ptrdiff_t>(total) : kScanShort;
}

ptrdiff_t scan_nid(std::span<const uint8_t> b) {
    if (b.empty()) return kScanShort;
    switch (b[0]) {
        case 0x00: return scan_fixed(2, b);
        case 0x01: return scan_fixed(4, b);
        case 0x02: return scan_fixed(7, b);
        case 0x03: {
            if (b.size() < 3) return kScanShort;
            const ptrdiff_t s = scan_len_prefixed(b.subspan(3));
            return s < 0 ? s : 3 + s;
        }
        case 0x04: return scan_fixed(19, b);
        case 0x05: {
            if (b.size() < 3) return kScanShort;
            const ptrdiff_t s = scan_len_prefixed(b.subspan(3));
            return s < 0 ? s : 3 + s;
        }
        default: return kScanMalformed;
    }
}

ptrdiff_t scan_qn(std::span<const uint8_t> b) {
    if (b.size() < 2) return kScanShort;
    const ptrdiff_t s = scan_len_prefixed(b.subspan(2));
    return s < 0 ? s : 2 + s;
}

ptrdiff_t scan_lt(std::span<const uint8_t> b) {
    if (b.empty()) return kScanShort;
    const uint8_t mask = b[0];
    if (mask & ~0x03u) return kScanMalformed;
    ptrdiff_t at = 1;
    for (uint8_t bit : {uint8_t{0x01}, uint8_t{0x02}}) {
        if (!(mask & bit)) continue;
        const ptrdiff_t s = scan_len_prefixed(b.subspan(static_cast<size_t>(at)));
        if (s < 0) return s;
        at += s;
    }
    return at;
}

ptrdiff_t scan_var(std::span<const uint8_t> b) {
    if (b.empty()) return kScanShort;
    const uint8_t tb = b[0];
    if (tb == 0) return 1;
    if (tb & 0xC0u) return kScanMalformed;  // arrays and dimensions unsupported
    const auto body = b.subspan(1);
    ptrdiff_t s;
    switch (tb) {
        case 1: s = scan_fixed(1, body); break;   // Boolean
        case 2: s = scan_fixed(1, body); break;   // SByte
        case 3: s = scan_fixed(1, body); break;   // Byte
        case 4: s = scan_fixed(2, body); break;   // Int16
        case 5: s = scan_fixed(2, body); break;   // UInt16
        case 6: s = scan_fixed(4, body); break;   // Int32
        case 7: s = scan_fixed(4, body); break;   // UInt32
        case 10: s = scan_fixed(4, body); break;  // Float
        case 11: s = scan_fixed(8, body); break;  // Double
        case 12: s = scan_len_prefixed(body); break;  // String
        case 13: s = scan_fixed(8, body); break;      // DateTime
        case 15: s = scan_len_prefixed(body); break;  // ByteString
        case 17: s = scan_nid(body); break;           // NodeId
        case 20: s = scan_qn(body); break;            // QualifiedName
        case 21: s = scan_lt(body); break;            // LocalizedText
        default: return kScanMalformed;
    }
    return s < 0 ? s : 1 + s;
}

ptrdiff_t scan_dv(std::span<const uint8_t> b) {
    if (b.empty()) return kScanShort;
    const uint8_t mask = b[0];
    if (mask & ~0x3Fu) return kScanMalformed;
    ptrdiff_t at = 1;
    auto take = [&](ptrdiff_t s) {
        if (s < 0) return s;
        at += s;
        return ptrdiff_t{0};
    };
    // Wire order: value, status, source ts, source picos, server ts, server picos.
    if (mask & 0x01) {
        if (ptrdiff_t e = take(scan_var(b.subspan(static_cast<size_t>(at)))); e < 0) return e;
    }
    if (mask & 0x02) {
        if (ptrdiff_t e = take(scan_fixed(4, b.subspan(static_cast<size_t>(at)))); e < 0) return e;
    }
    if (mask & 0x04) {
        if (ptrdiff_t e = take(scan_fixed(8, b.subspan(static_cast<size_t>(at)))); e < 0) return e;
    }
    if (mask & 0x10) {
        if (ptrdiff_t e = take(scan_fixed(2, b.subspan(static_cast<size_t>(at)))); e < 0) return e;
    }
    if (mask & 0x08) {
        if (ptrdiff_t e = take(scan_fixed(8, b.subspan(static_cast<size_t>(at)))); e < 0) return e;
    }
    if (mask & 0x20) {
        if (ptrdiff_t e = take(scan_fixed(2, b.subspan(static_cast<size_t>(at)))); e < 0) return e;
    }
    return at;
}

}  // namespace

ptrdiff_t scan_value_length(TypeTag tag, std::span<const uint8_t> b) {
    switch (tag) {
        case TypeTag::Structure: return kScanMalformed;
        case TypeTag::I8:
        case TypeTag::U8: return scan_fixed(1, b);
        case TypeTag::I16:
        case TypeTag::U16: return scan_fixed(2, b);
        case TypeTag::I32:
        case TypeTag::U32:
        case TypeTag::F32: return scan_fixed(4, b);
        case TypeTag::F64: return scan_fixed(8, b);
        case TypeTag::Str:
        case TypeTag::Bs: return scan_len_prefixed(b);
        case TypeTag::Nid: return scan_nid(b);
        case TypeTag::Lt: return scan_lt(b);
        case TypeTag::Qn: return scan_qn(b);
        case TypeTag::Var: return scan_var(b);
        case TypeTag::Dv: return scan_dv(b);
    }
    return kScanMalformed;
}

// -------------------------------------------------------------- comparisons

namespace {

template <typename T>
T load_le(std::span<const uint8_t> b) {
    std::array<uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), b.data(), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(raw.begin(), raw.end());
    }
    return std::bit_cast<T>(raw);
}

template <typename T>
CmpFlags cmp_numeric(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    const T x = load_le<T>(a), y = load_le<T>(b);
    return {x == y, x < y};  // floats: NaN leaves both flags clear
}

// Length-prefixed bytes with null (-1) ordered before everything else.
CmpFlags cmp_len_prefixed(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    const bool an = read_i32(a, 0) == -1, bn = read_i32(b, 0) == -1;
    if (an || bn) return {an == bn, an && !bn};
    const auto ab = a.subspan(4), bb = b.subspan(4);
    const int c = std::memcmp(ab.data(), bb.data(), std::min(ab.size(), bb.size()));
    if (c != 0) return {false, c < 0};
    return {ab.size() == bb.size(), ab.size() < bb.size()};
}

struct NidKey {
    uint16_t ns;
    int rank;  // 0 numeric, 1 string, 2 guid, 3 opaque
    uint32_t num = 0;
    std::span<const uint8_t> bytes{};  // string/guid/opaque payload (after any length)
};

// The three numeric encodings are alternative spellings of the same identity,
// so the key normalizes them before comparing.
NidKey nid_key(std::span<const uint8_t> b) {
    NidKey k{};
    switch (b[0]) {
        case 0x00:
            k = {0, 0, b[1], {}};
            break;
        case 0x01:
            k = {b[1], 0, load_le<uint16_t>(b.subspan(2)), {}};
            break;
        case 0x02:
            k = {load_le<uint16_t>(b.subspan(1)), 0, load_le<uint32_t>(b.subspan(3)), {}};
            break;
        case 0x03: {
            k.ns = load_le<uint16_t>(b.subspan(1));
            k.rank = 1;
            const int32_t len = read_i32(b, 3);
            k.bytes = len <= 0 ? std::span<const uint8_t>{} : b.subspan(7, static_cast<size_t>(len));
            break;
        }
        case 0x04:
            k.ns = load_le<uint16_t>(b.subspan(1));
            k.rank = 2;
            k.bytes = b.subspan(3, 16);
            break;
        case 0x05: {
            k.ns = load_le<uint16_t>(b.subspan(1));
            k.rank = 3;
            const int32_t len = read_i32(b, 3);
            k.bytes = len <= 0 ? std::span<const uint8_t>{} : b.subspan(7, static_cast<size_t>(len));
            break;
        }
    }
    return k;
}

CmpFlags cmp_nid(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    const NidKey x = nid_key(a), y = nid_key(b);
    if (x.ns != y.ns) return {false, x.ns < y.ns};
    if (x.rank != y.rank) return {false, x.rank < y.rank};
    if (x.rank == 0) return {x.num == y.num, x.num < y.num};
    const int c = std::memcmp(x.bytes.data(), y.bytes.data(), std::min(x.bytes.size(), y.bytes.size()));
    if (c != 0) return {false, c < 0};
    return {x.bytes.size() == y.bytes.size(), x.bytes.size() < y.bytes.size()};
}

// qn/lt/var/dv order bytewise; programs only rely on the eq bit for them.
CmpFlags cmp_bytewise(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    const int c = std::memcmp(a.data(), b.data(), std::min(a.size(), b.size()));
    if (c != 0) return {false, c < 0};
    return {a.size() == b.size(), a.size() < b.size()};
}

}  // namespace

CmpFlags compare_values(TypeTag tag, std::span<const uint8_t> a, std::span<const uint8_t> b) {
    switch (tag) {
        case TypeTag::I8: return cmp_numeric<int8_t>(a, b);
        case TypeTag::U8: return cmp_numeric<uint8_t>(a, b);
        case TypeTag::I16: return cmp_numeric<int16_t>(a, b);
        case TypeTag::U16: return cmp_numeric<uint16_t>(a, b);
        case TypeTag::I32: return cmp_numeric<int32_t>(a, b);
        case TypeTag::U32: return cmp_numeric<uint32_t>(a, b);
        case TypeTag::F32: return cmp_numeric<float>(a, b);
        case TypeTag::F64: return cmp_numeric<double>(a, b);
        case TypeTag::Str:
        case TypeTag::Bs: return cmp_len_prefixed(a, b);
        case TypeTag::Nid: return cmp_nid(a, b);
        default: return cmp_bytewise(a, b);
    }
}

// ----------------------------------------------------------------- programs

std::vector<uint8_t> serialize_program(const VmProgram& p) {
    ByteWriter w;
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>("UAVM"), 4));
    w.u16(1);
    w.u32(static_cast<uint32_t>(p.entry_points.size()));
    for (const auto& [svc, off] : p.entry_points) {
        w.u32(svc);
        w.u32(off);
    }
    w.u32(static_cast<uint32_t>(p.code.size()));
    w.bytes(p.code);
    return w.take();
}

ParsedProgram parse_program(std::span<const uint8_t> image) {
    ParsedProgram out;
    ByteReader r(image);
    const auto magic = r.view(4);
    if (r.truncated() || std::memcmp(magic.data(), "UAVM", 4) != 0) {
        out.error = "not a program image (bad magic)";
        return out;
    }
    const uint16_t version = r.u16();
    if (version != 1) {
        out.error = "unsupported image version " + std::to_string(version);
        return out;
    }
    const uint32_t entries = r.u32();
    if (entries > 256) {
        out.error = "implausible entry count";
        return out;
    }
    for (uint32_t i = 0; i < entries; i++) {
        const uint32_t svc = r.u32();
        const uint32_t off = r.u32();
        out.program.entry_points.emplace_back(svc, off);
    }
    const uint32_t code_len = r.u32();
    if (r.truncated() || code_len > r.remaining()) {
        out.error = "truncated image";
        return out;
    }
    const auto code = r.view(code_len);
    out.program.code.assign(code.begin(), code.end());
    if (r.remaining() != 0) {
        out.error = "trailing bytes after code";
        return out;
    }
    for (const auto& [svc, off] : out.program.entry_points) {
        if (off >= out.program.code.size() && !(off == 0 && out.program.code.empty())) {
            out.error = "entry point offset out of range";
            return out;
        }
        (void)svc;
    }
    return out;
}

// ------------------------------------------------------------------ machine

namespace {

// Zero-capacity stand-in for unbound stream slots.
class NullStream final : public Stream {
public:
    std::span<const uint8_t> peek() const override { return {}; }
    void consume(size_t) override {}
    bool write(std::span<const uint8_t> b) override { return b.empty(); }
    size_t read_pos() const override { return 0; }
    size_t write_pos() const override { return 0; }
    bool seek_read(size_t pos) override { return pos == 0; }
    bool seek_write(size_t pos) override { return pos == 0; }
};

NullStream g_null_stream;

Stream& stream_at(VmState& st, unsigned idx) {
    Stream* s = st.streams[idx];
    return s ? *s : g_null_stream;
}

int16_t rel16(const uint8_t* p) {
    return static_cast<int16_t>(static_cast<uint16_t>(p[0]) | static_cast<uint16_t>(p[1]) << 8);
}

uint32_t imm32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

}  // namespace

StepEffect step(VmState& st, const VmProgram& p) {
    StepEffect fx;
    if (st.halted || st.trap) return fx;

    auto trap = [&](TrapCode code, uint8_t detail) -> StepEffect& {
        st.trap = Trap{code, detail};
        // A trapped instruction has no stream effects; charge the fetch only.
        fx.stream_read.fill(0);
        fx.stream_write.fill(0);
        fx.cost = fx.length;
        st.cycles += fx.cost;
        fx.trap = st.trap;
        return fx;
    };

    const auto& code = p.code;
    if (st.pc >= code.size()) return trap(TrapCode::IllegalOpcode, 0);
    const uint8_t first = code[st.pc];
    const int len = insn_length(first);
    if (len == 0) return trap(TrapCode::IllegalOpcode, first);
    if (st.pc + static_cast<uint32_t>(len) > code.size()) return trap(TrapCode::IllegalOpcode, first);

    fx.length = static_cast<uint8_t>(len);
    fx.cost = fx.length;
    const uint8_t* operand = code.data() + st.pc + 1;
    uint32_t next_pc = st.pc + static_cast<uint32_t>(len);

    auto charge_read = [&](unsigned s, size_t n) {
        fx.stream_read[s] += static_cast<uint16_t>(n);
        fx.cost += static_cast<uint32_t>(n);
    };
    auto charge_write = [&](unsigned s, size_t n) {
        fx.stream_write[s] += static_cast<uint16_t>(n);
        fx.cost += static_cast<uint32_t>(n);
    };

    // Scans one value at stream a's read cursor. Returns the value's bytes,
    // or an empty span after arming a trap.
    auto scan_stream = [&](unsigned a, TypeTag tag, bool& failed) -> std::span<const uint8_t> {
        const auto avail = stream_at(st, a).peek();
        const ptrdiff_t n = scan_value_length(tag, avail);
        if (n < 0) {
            trap(n == kScanShort ? TrapCode::StreamOverrun : TrapCode::TypeMismatch,
                 static_cast<uint8_t>(a));
            failed = true;
            return {};
        }
        failed = false;
        return avail.first(static_cast<size_t>(n));
    };

    switch (first & 0xF0) {
        case 0x00: {
            if (first == op::Halt) {
                st.halted = true;
                fx.halted = true;
            } else if (first == op::Ret) {
                if (st.sp == 0) return trap(TrapCode::StackUnderflow, 0);
                next_pc = st.stack[--st.sp];
            } else {  // TRAP
                return trap(TrapCode::ProgramTrap, operand[0]);
            }
            break;
        }
        case 0x10: {  // COPY.t sA, sB
            const auto tag = static_cast<TypeTag>(first & 0x0F);
            const unsigned a = operand[0] >> 4, b = operand[0] & 0x0F;
            bool failed;
            const auto bytes = scan_stream(a, tag, failed);
            if (failed) return fx;
            if (!stream_at(st, b).write(bytes)) return trap(TrapCode::StreamOverrun, static_cast<uint8_t>(b));
            stream_at(st, a).consume(bytes.size());
            charge_read(a, bytes.size());
            charge_write(b, bytes.size());
            break;
        }
        case 0x20: {  // SKIP.t sA
            const auto tag = static_cast<TypeTag>(first & 0x0F);
            const unsigned a = operand[0] >> 4;
            bool failed;
            const auto bytes = scan_stream(a, tag, failed);
            if (failed) return fx;
            stream_at(st, a).consume(bytes.size());
            charge_read(a, bytes.size());
            break;
        }
        case 0x30: {  // CMP.t sA, sB
            const auto tag = static_cast<TypeTag>(first & 0x0F);
            const unsigned a = operand[0] >> 4, b = operand[0] & 0x0F;
            bool failed;
            const auto abytes = scan_stream(a, tag, failed);
            if (failed) return fx;
            // Scan b only after a succeeded; both scans must pass before any
            // cursor moves so a trap leaves the machine untouched.
            const auto bavail = stream_at(st, b).peek();
            const ptrdiff_t bn = scan_value_length(tag, bavail);
            if (bn < 0)
                return trap(bn == kScanShort ? TrapCode::StreamOverrun : TrapCode::TypeMismatch,
                            static_cast<uint8_t>(b));
            const auto bbytes = bavail.first(static_cast<size_t>(bn));
            const CmpFlags flags = compare_values(tag, abytes, bbytes);
            stream_at(st, a).consume(abytes.size());
            stream_at(st, b).consume(bbytes.size());
            charge_read(a, abytes.size());
            charge_read(b, bbytes.size());
            st.flag_eq = flags.eq;
            st.flag_lt = flags.lt;
            break;
        }
        case 0x40: {  // BR
            next_pc = static_cast<uint32_t>(static_cast<int64_t>(next_pc) + rel16(operand));
            break;
        }
        case 0x50: {  // BRC.c
            const auto cond = static_cast<Cond>(first & 0x0F);
            bool take = false;
            switch (cond) {
                case Cond::Eq: take = st.flag_eq; break;
                case Cond::Ne: take = !st.flag_eq; break;
                case Cond::Lt: take = st.flag_lt; break;
                case Cond::Le: take = st.flag_eq || st.flag_lt; break;
                case Cond::Gt: take = !st.flag_eq && !st.flag_lt; break;
                case Cond::Ge: take = !st.flag_lt; break;
                case Cond::Cnz:
                    if (st.ctr > 0) st.ctr--;
                    take = st.ctr != 0;
                    break;
                case Cond::Cz: take = st.ctr == 0; break;
            }
            if (take) next_pc = static_cast<uint32_t>(static_cast<int64_t>(next_pc) + rel16(operand));
            break;
        }
        case 0x60: {
            if (first == op::LdiImm) {
                const unsigned d = operand[0] & 0x0F;
                const uint8_t raw[4] = {operand[1], operand[2], operand[3], operand[4]};
                if (!stream_at(st, d).write({raw, 4})) return trap(TrapCode::StreamOverrun, static_cast<uint8_t>(d));
                charge_write(d, 4);
            } else if (first == op::LdiCtrImm) {
                st.ctr = imm32(operand + 1);
            } else {  // LDI ctr, sA
                const unsigned a = operand[0] & 0x0F;
                const auto avail = stream_at(st, a).peek();
                if (avail.size() < 4) return trap(TrapCode::StreamOverrun, static_cast<uint8_t>(a));
                st.ctr = imm32(avail.data());
                stream_at(st, a).consume(4);
                charge_read(a, 4);
            }
            break;
        }
        case 0x70: {  // CALL
            if (st.sp >= kStackDepth) return trap(TrapCode::StackOverflow, 0);
            st.stack[st.sp++] = next_pc;
            next_pc = static_cast<uint32_t>(static_cast<int64_t>(next_pc) + rel16(operand));
            break;
        }
        case 0x80: {  // MKIDX iR, sS[.r|.w]
            const unsigned reg = operand[0] >> 5, write_cursor = (operand[0] >> 4) & 1;
            const unsigned s = operand[0] & 0x0F;
            Stream& stm = stream_at(st, s);
            st.index_regs[reg] = static_cast<uint32_t>(write_cursor ? stm.write_pos() : stm.read_pos());
            break;
        }
        case 0x90: {  // SEEK iR, sS[.r|.w]
            const unsigned reg = operand[0] >> 5, write_cursor = (operand[0] >> 4) & 1;
            const unsigned s = operand[0] & 0x0F;
            Stream& stm = stream_at(st, s);
            const uint32_t pos = st.index_regs[reg];
            const bool ok = write_cursor ? stm.seek_write(pos) : stm.seek_read(pos);
            if (!ok) return trap(TrapCode::StreamOverrun, static_cast<uint8_t>(s));
            break;
        }
        case 0xA0: {  // EMIT sD, #byte
            const unsigned d = first & 0x0F;
            const uint8_t raw = operand[0];
            if (!stream_at(st, d).write({&raw, 1})) return trap(TrapCode::StreamOverrun, static_cast<uint8_t>(d));
            charge_write(d, 1);
            break;
        }
        default:
            return trap(TrapCode::IllegalOpcode, first);
    }

    st.pc = next_pc;
    st.cycles += fx.cost;
    return fx;
}

RunResult run_service(const VmProgram& p, uint32_t service_type,
                      const std::array<Stream*, kNumStreams>& streams, uint64_t budget) {
    const auto entry = p.entry_for(service_type);
    if (!entry) return {RunOutcome::NoEntryPoint, 0, std::nullopt, 0, 0};

    VmState st;
    st.pc = *entry;
    st.streams = streams;
    uint64_t data_bytes = 0;

    while (!st.halted && !st.trap) {
        // Peek the next instruction's cost so exhaustion lands exactly on the
        // budget instead of overshooting mid-instruction.
        if (st.pc < p.code.size()) {
            const int len = insn_length(p.code[st.pc]);
            if (len > 0 && st.cycles + static_cast<uint64_t>(len) > budget) {
                return {RunOutcome::BudgetExhausted, budget, std::nullopt, st.pc, data_bytes};
            }
        }
        const auto eff = step(st, p);
        data_bytes += eff.cost - eff.length;
        if (st.cycles > budget) {
            // A data-moving instruction ran past the line; clamp to the
            // budget and report exhaustion. Effects up to here are kept —
            // the caller discards the streams on anything but Halted.
            return {RunOutcome::BudgetExhausted, budget, std::nullopt, st.pc, data_bytes};
        }
    }
    if (st.trap) return {RunOutcome::Trapped, st.cycles, st.trap, st.pc, data_bytes};
    return {RunOutcome::Halted, st.cycles, std::nullopt, st.pc, data_bytes};
}

}  // namespace nanoua::vm
