#include "nanoua/asm.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>

namespace nanoua::uasm {

namespace {

using vm::Cond;
using vm::TypeTag;

std::optional<TypeTag> tag_from_suffix(std::string_view s) {
    if (s == "bool") return TypeTag::U8;  // booleans travel as bytes
    if (s == "i8") return TypeTag::I8;
    if (s == "u8") return TypeTag::U8;
    if (s == "i16") return TypeTag::I16;
    if (s == "u16") return TypeTag::U16;
    if (s == "i32") return TypeTag::I32;
    if (s == "u32") return TypeTag::U32;
    if (s == "f32") return TypeTag::F32;
    if (s == "f64") return TypeTag::F64;
    if (s == "str") return TypeTag::Str;
    if (s == "nid") return TypeTag::Nid;
    if (s == "lt") return TypeTag::Lt;
    if (s == "qn") return TypeTag::Qn;
    if (s == "var") return TypeTag::Var;
    if (s == "bs") return TypeTag::Bs;
    if (s == "dv") return TypeTag::Dv;
    return std::nullopt;
}

std::optional<Cond> cond_from_suffix(std::string_view s) {
    if (s == "eq") return Cond::Eq;
    if (s == "ne") return Cond::Ne;
    if (s == "lt") return Cond::Lt;
    if (s == "le") return Cond::Le;
    if (s == "gt") return Cond::Gt;
    if (s == "ge") return Cond::Ge;
    if (s == "cnz") return Cond::Cnz;
    if (s == "cz") return Cond::Cz;
    return std::nullopt;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool is_ident(std::string_view s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

std::optional<int64_t> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    const std::string z(s);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(z.c_str(), &end, 0);
    if (errno != 0 || end != z.c_str() + z.size()) return std::nullopt;
    return v;
}

struct Operand {
    enum class Kind { Stream, StreamCursor, IndexReg, Ctr, Imm, Label } kind;
    int num = 0;
    bool write_cursor = false;
    int64_t imm = 0;
    std::string label;
};

// "s0".."s15", "s3.r", "s3.w", "i0".."i7", "ctr", "#imm", or a label name.
std::optional<Operand> parse_operand(std::string_view t, std::string& err) {
    Operand op{};
    if (t.empty()) {
        err = "empty operand";
        return std::nullopt;
    }
    if (t == "ctr") {
        op.kind = Operand::Kind::Ctr;
        return op;
    }
    if (t[0] == '#') {
        const auto v = parse_int(t.substr(1));
        if (!v) {
            err = "bad immediate '" + std::string(t) + "'";
            return std::nullopt;
        }
        op.kind = Operand::Kind::Imm;
        op.imm = *v;
        return op;
    }
    if (t[0] == 's' && t.size() >= 2 && std::isdigit(static_cast<unsigned char>(t[1]))) {
        std::string_view rest = t.substr(1);
        bool cursor = false, write = false;
        if (const auto dot = rest.find('.'); dot != std::string_view::npos) {
            const auto suffix = rest.substr(dot + 1);
            if (suffix == "r") {
                cursor = true;
            } else if (suffix == "w") {
                cursor = write = true;
            } else {
                err = "bad cursor qualifier on '" + std::string(t) + "' (use .r or .w)";
                return std::nullopt;
            }
            rest = rest.substr(0, dot);
        }
        const auto n = parse_int(rest);
        if (!n) {
            err = "bad stream operand '" + std::string(t) + "'";
            return std::nullopt;
        }
        if (*n < 0 || *n >= vm::kNumStreams) {
            err = "stream index out of range in '" + std::string(t) + "' (s0..s15)";
            return std::nullopt;
        }
        op.kind = cursor ? Operand::Kind::StreamCursor : Operand::Kind::Stream;
        op.num = int(*n);
        op.write_cursor = write;
        return op;
    }
    if (t[0] == 'i' && t.size() == 2 && std::isdigit(static_cast<unsigned char>(t[1]))) {
        const int n = t[1] - '0';
        if (n >= vm::kNumIndexRegs) {
            err = "index register out of range in '" + std::string(t) + "' (i0..i7)";
            return std::nullopt;
        }
        op.kind = Operand::Kind::IndexReg;
        op.num = n;
        return op;
    }
    if (is_ident(t)) {
        op.kind = Operand::Kind::Label;
        op.label = std::string(t);
        return op;
    }
    err = "unrecognized operand '" + std::string(t) + "'";
    return std::nullopt;
}

struct PendingInsn {
    int line = 0;
    uint32_t offset = 0;
    int size = 0;
    uint8_t first = 0;
    uint8_t second = 0;      // operand byte for 2-byte forms
    uint32_t imm32 = 0;      // ldi payload
    std::string label;       // branch/call target, empty otherwise
};

struct Assembler {
    std::vector<AsmError> errors;
    std::vector<PendingInsn> insns;
    std::map<std::string, std::pair<uint32_t, int>> labels;  // name -> (offset, line)
    std::vector<std::tuple<uint32_t, std::string, int>> entries;  // (service, label, line)
    uint32_t offset = 0;

    void fail(int line, std::string msg) { errors.push_back({line, std::move(msg)}); }

    void define_label(int line, std::string_view name) {
        const auto [it, inserted] = labels.emplace(std::string(name), std::make_pair(offset, line));
        if (!inserted)
            fail(line, "duplicate label '" + std::string(name) + "' (first defined on line " +
                           std::to_string(it->second.second) + ")");
    }

    // Operand-shape helpers; each reports its own error and returns nullopt.
    std::optional<int> want_stream(int line, const std::vector<Operand>& ops, size_t i,
                                   const char* mnemonic) {
        if (i < ops.size() && ops[i].kind == Operand::Kind::Stream) return ops[i].num;
        fail(line, std::string(mnemonic) + ": operand " + std::to_string(i + 1) +
                       " must be a stream (s0..s15)");
        return std::nullopt;
    }
    std::optional<int64_t> want_imm(int line, const std::vector<Operand>& ops, size_t i,
                                    const char* mnemonic, int64_t lo, int64_t hi) {
        if (i >= ops.size() || ops[i].kind != Operand::Kind::Imm) {
            fail(line, std::string(mnemonic) + ": operand " + std::to_string(i + 1) +
                           " must be an immediate (#n)");
            return std::nullopt;
        }
        if (ops[i].imm < lo || ops[i].imm > hi) {
            fail(line, std::string(mnemonic) + ": immediate " + std::to_string(ops[i].imm) +
                           " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            return std::nullopt;
        }
        return ops[i].imm;
    }

    bool want_count(int line, const std::vector<Operand>& ops, size_t n, const char* mnemonic) {
        if (ops.size() == n) return true;
        fail(line, std::string(mnemonic) + ": expected " + std::to_string(n) + " operand" +
                       (n == 1 ? "" : "s") + ", got " + std::to_string(ops.size()));
        return false;
    }

    void push(PendingInsn p) {
        p.offset = offset;
        offset += static_cast<uint32_t>(p.size);
        insns.push_back(std::move(p));
    }

    void handle_insn(int line, std::string_view mnemonic, const std::vector<Operand>& ops) {
        std::string_view base = mnemonic, suffix;
        if (const auto dot = mnemonic.find('.'); dot != std::string_view::npos) {
            base = mnemonic.substr(0, dot);
            suffix = mnemonic.substr(dot + 1);
        }
        PendingInsn p;
        p.line = line;

        auto typed2 = [&](uint8_t row, const char* name) {
            const auto tag = tag_from_suffix(suffix);
            if (!tag) {
                fail(line, std::string(name) + ": unknown type suffix '." + std::string(suffix) + "'");
                return;
            }
            if (!want_count(line, ops, 2, name)) return;
            const auto a = want_stream(line, ops, 0, name);
            const auto b = want_stream(line, ops, 1, name);
            if (!a || !b) return;
            p.size = 2;
            p.first = uint8_t(row | uint8_t(*tag));
            p.second = uint8_t(*a << 4 | *b);
            push(p);
        };

        if (base == "halt" || base == "ret") {
            if (!want_count(line, ops, 0, base == "halt" ? "halt" : "ret")) return;
            p.size = 1;
            p.first = base == "halt" ? vm::op::Halt : vm::op::Ret;
            push(p);
        } else if (base == "trap") {
            if (!want_count(line, ops, 1, "trap")) return;
            const auto code = want_imm(line, ops, 0, "trap", 0, 255);
            if (!code) return;
            p.size = 2;
            p.first = vm::op::Trap;
            p.second = uint8_t(*code);
            push(p);
        } else if (base == "copy") {
            typed2(vm::op::CopyRow, "copy");
        } else if (base == "cmp") {
            typed2(vm::op::CmpRow, "cmp");
        } else if (base == "skip") {
            const auto tag = tag_from_suffix(suffix);
            if (!tag) {
                fail(line, "skip: unknown type suffix '." + std::string(suffix) + "'");
                return;
            }
            if (!want_count(line, ops, 1, "skip")) return;
            const auto a = want_stream(line, ops, 0, "skip");
            if (!a) return;
            p.size = 2;
            p.first = uint8_t(vm::op::SkipRow | uint8_t(*tag));
            p.second = uint8_t(*a << 4);
            push(p);
        } else if (base == "br" || base == "call" || base == "brc") {
            uint8_t first = vm::op::Br;
            if (base == "call") {
                first = vm::op::Call;
            } else if (base == "brc") {
                const auto c = cond_from_suffix(suffix);
                if (!c) {
                    fail(line, "brc: unknown condition suffix '." + std::string(suffix) + "'");
                    return;
                }
                first = uint8_t(vm::op::BrcRow | uint8_t(*c));
            }
            if (!want_count(line, ops, 1, std::string(base).c_str())) return;
            if (ops[0].kind != Operand::Kind::Label) {
                fail(line, std::string(base) + ": operand must be a label");
                return;
            }
            p.size = 3;
            p.first = first;
            p.label = ops[0].label;
            push(p);
        } else if (base == "ldi") {
            if (!want_count(line, ops, 2, "ldi")) return;
            if (ops[0].kind == Operand::Kind::Ctr) {
                if (ops[1].kind == Operand::Kind::Stream) {
                    p.size = 2;
                    p.first = vm::op::LdiCtrStream;
                    p.second = uint8_t(ops[1].num);
                    push(p);
                    return;
                }
                const auto imm = want_imm(line, ops, 1, "ldi", INT64_C(-2147483648),
                                          INT64_C(4294967295));
                if (!imm) return;
                p.size = 6;
                p.first = vm::op::LdiCtrImm;
                p.second = 0;
                p.imm32 = uint32_t(*imm);
                push(p);
                return;
            }
            if (ops[0].kind != Operand::Kind::Stream) {
                fail(line, "ldi: first operand must be a stream or ctr");
                return;
            }
            const auto imm = want_imm(line, ops, 1, "ldi", INT64_C(-2147483648),
                                      INT64_C(4294967295));
            if (!imm) return;
            p.size = 6;
            p.first = vm::op::LdiImm;
            p.second = uint8_t(ops[0].num);
            p.imm32 = uint32_t(*imm);
            push(p);
        } else if (base == "mkidx" || base == "seek") {
            const char* name = base == "mkidx" ? "mkidx" : "seek";
            if (!want_count(line, ops, 2, name)) return;
            if (ops[0].kind != Operand::Kind::IndexReg) {
                fail(line, std::string(name) + ": first operand must be an index register (i0..i7)");
                return;
            }
            if (ops[1].kind != Operand::Kind::StreamCursor) {
                fail(line, std::string(name) + ": second operand must be a stream cursor (sN.r or sN.w)");
                return;
            }
            p.size = 2;
            p.first = base == "mkidx" ? vm::op::Mkidx : vm::op::Seek;
            p.second = uint8_t(ops[0].num << 5 | (ops[1].write_cursor ? 0x10 : 0) | ops[1].num);
            push(p);
        } else if (base == "emit") {
            if (!want_count(line, ops, 2, "emit")) return;
            const auto d = want_stream(line, ops, 0, "emit");
            const auto v = want_imm(line, ops, 1, "emit", -128, 255);
            if (!d || !v) return;
            p.size = 2;
            p.first = uint8_t(vm::op::EmitRow | *d);
            p.second = uint8_t(*v);
            push(p);
        } else {
            fail(line, "unknown mnemonic '" + std::string(mnemonic) + "'");
        }
    }

    void handle_line(int line, std::string_view text) {
        text = trim(text);
        // Leading labels, possibly several, possibly followed by code.
        while (true) {
            const auto colon = text.find(':');
            if (colon == std::string_view::npos) break;
            const auto head = trim(text.substr(0, colon));
            if (!is_ident(head)) break;
            define_label(line, head);
            text = trim(text.substr(colon + 1));
        }
        if (text.empty()) return;

        if (text[0] == '.') {
            auto rest = text.substr(1);
            const auto sp = rest.find_first_of(" \t");
            const auto word = sp == std::string_view::npos ? rest : rest.substr(0, sp);
            if (word != "entry") {
                fail(line, "unknown directive '." + std::string(word) + "'");
                return;
            }
            rest = sp == std::string_view::npos ? std::string_view{} : trim(rest.substr(sp));
            const auto sp2 = rest.find_first_of(" \t");
            if (sp2 == std::string_view::npos) {
                fail(line, ".entry: expected '<serviceTypeId> <label>'");
                return;
            }
            const auto id = parse_int(rest.substr(0, sp2));
            const auto label = trim(rest.substr(sp2));
            if (!id || *id < 0 || *id > INT64_C(4294967295)) {
                fail(line, ".entry: bad service type id");
                return;
            }
            if (!is_ident(label)) {
                fail(line, ".entry: bad label name '" + std::string(label) + "'");
                return;
            }
            for (const auto& [svc, lbl, ln] : entries) {
                if (svc == uint32_t(*id)) {
                    fail(line, ".entry: service type " + std::to_string(svc) +
                                   " already has an entry point (line " + std::to_string(ln) + ")");
                    return;
                }
            }
            entries.emplace_back(uint32_t(*id), std::string(label), line);
            return;
        }

        // Instruction: mnemonic, then comma-separated operands.
        const auto sp = text.find_first_of(" \t");
        const auto mnemonic = sp == std::string_view::npos ? text : text.substr(0, sp);
        std::vector<Operand> ops;
        if (sp != std::string_view::npos) {
            auto rest = trim(text.substr(sp));
            while (!rest.empty()) {
                const auto comma = rest.find(',');
                const auto piece = trim(comma == std::string_view::npos ? rest : rest.substr(0, comma));
                std::string err;
                const auto op = parse_operand(piece, err);
                if (!op) {
                    fail(line, err);
                    return;
                }
                ops.push_back(*op);
                if (comma == std::string_view::npos) break;
                rest = trim(rest.substr(comma + 1));
                if (rest.empty()) {
                    fail(line, "trailing comma");
                    return;
                }
            }
        }
        handle_insn(line, mnemonic, ops);
    }
};

}  // namespace

AsmResult assemble(std::string_view source, std::string program_name) {
    Assembler a;
    int line = 1;
    size_t pos = 0;
    while (pos <= source.size()) {
        const auto nl = source.find('\n', pos);
        auto text = source.substr(pos, nl == std::string_view::npos ? source.size() - pos : nl - pos);
        if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
        if (const auto sc = text.find(';'); sc != std::string_view::npos) text = text.substr(0, sc);
        a.handle_line(line, text);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
        line++;
    }

    // Second pass: resolve labels and lay down bytes.
    vm::VmProgram prog;
    prog.name = std::move(program_name);
    prog.code.reserve(a.offset);
    for (const auto& p : a.insns) {
        prog.code.push_back(p.first);
        if (!p.label.empty()) {
            const auto it = a.labels.find(p.label);
            if (it == a.labels.end()) {
                a.fail(p.line, "undefined label '" + p.label + "'");
                prog.code.push_back(0);
                prog.code.push_back(0);
                continue;
            }
            const int64_t rel = int64_t(it->second.first) - (int64_t(p.offset) + p.size);
            if (rel < INT16_MIN || rel > INT16_MAX) {
                a.fail(p.line, "branch to '" + p.label + "' is out of range (" +
                                   std::to_string(rel) + " bytes)");
                prog.code.push_back(0);
                prog.code.push_back(0);
                continue;
            }
            prog.code.push_back(uint8_t(uint16_t(rel) & 0xFF));
            prog.code.push_back(uint8_t(uint16_t(rel) >> 8));
            continue;
        }
        if (p.size >= 2) prog.code.push_back(p.second);
        if (p.size == 6) {
            for (int i = 0; i < 4; i++) prog.code.push_back(uint8_t(p.imm32 >> (8 * i)));
        }
    }
    for (const auto& [svc, label, ln] : a.entries) {
        const auto it = a.labels.find(label);
        if (it == a.labels.end()) {
            a.fail(ln, "undefined label '" + label + "' in .entry");
            continue;
        }
        if (it->second.first >= prog.code.size()) {
            a.fail(ln, ".entry label '" + label + "' points past the end of the code");
            continue;
        }
        prog.entry_points.emplace_back(svc, it->second.first);
    }

    AsmResult out;
    out.errors = std::move(a.errors);
    if (out.errors.empty()) out.program = std::move(prog);
    return out;
}

// ------------------------------------------------------------ disassembler

DisasmResult disassemble(const vm::VmProgram& p) {
    DisasmResult out;
    const auto& code = p.code;

    // First walk: instruction boundaries.
    std::set<uint32_t> starts;
    {
        uint32_t pc = 0;
        while (pc < code.size()) {
            const int len = vm::insn_length(code[pc]);
            if (len == 0) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "illegal opcode 0x%02x at offset %u", code[pc], pc);
                out.error = buf;
                return out;
            }
            if (pc + uint32_t(len) > code.size()) {
                out.error = "truncated instruction at offset " + std::to_string(pc);
                return out;
            }
            starts.insert(pc);
            pc += uint32_t(len);
        }
    }

    // Branch and entry targets become labels. The end-of-code offset is a
    // legal (if unusual) target.
    std::set<uint32_t> targets;
    auto note_target = [&](int64_t t, uint32_t at) -> bool {
        if (t < 0 || t > int64_t(code.size()) ||
            (t < int64_t(code.size()) && !starts.count(uint32_t(t)))) {
            out.error = "branch at offset " + std::to_string(at) +
                        " does not land on an instruction";
            return false;
        }
        targets.insert(uint32_t(t));
        return true;
    };
    for (uint32_t pc : starts) {
        const uint8_t first = code[pc];
        if (first == vm::op::Br || first == vm::op::Call ||
            (first & 0xF0) == vm::op::BrcRow) {
            const int16_t rel = int16_t(uint16_t(code[pc + 1]) | uint16_t(code[pc + 2]) << 8);
            if (!note_target(int64_t(pc) + 3 + rel, pc)) return out;
        }
    }
    for (const auto& [svc, off] : p.entry_points) {
        if (off >= code.size() && !(off == 0 && code.empty())) {
            out.error = "entry point for service " + std::to_string(svc) + " is out of range";
            return out;
        }
        if (!code.empty() && !starts.count(off)) {
            out.error = "entry point for service " + std::to_string(svc) +
                        " does not land on an instruction";
            return out;
        }
        targets.insert(off);
    }

    auto label_of = [&](uint32_t off) { return "L" + std::to_string(off); };

    std::string& t = out.text;
    for (const auto& [svc, off] : p.entry_points)
        t += ".entry " + std::to_string(svc) + " " + label_of(off) + "\n";
    if (!p.entry_points.empty()) t += "\n";

    char buf[96];
    auto line = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof buf, fmt, args...);
        t += "    ";
        t += buf;
        t += "\n";
    };

    uint32_t pc = 0;
    while (pc < code.size()) {
        if (targets.count(pc)) t += label_of(pc) + ":\n";
        const uint8_t first = code[pc];
        const int len = vm::insn_length(first);
        const uint8_t opnd = len >= 2 ? code[pc + 1] : 0;
        const uint8_t hi = first & 0xF0, lo = first & 0x0F;

        switch (hi) {
            case 0x00:
                if (first == vm::op::Halt) {
                    line("%s", "halt");
                } else if (first == vm::op::Ret) {
                    line("%s", "ret");
                } else {
                    line("trap #%u", opnd);
                }
                break;
            case 0x10:
                line("copy.%s s%u, s%u", vm::type_tag_suffix(TypeTag(lo)), opnd >> 4, opnd & 0x0F);
                break;
            case 0x20:
                line("skip.%s s%u", vm::type_tag_suffix(TypeTag(lo)), opnd >> 4);
                break;
            case 0x30:
                line("cmp.%s s%u, s%u", vm::type_tag_suffix(TypeTag(lo)), opnd >> 4, opnd & 0x0F);
                break;
            case 0x40:
            case 0x50:
            case 0x70: {
                const int16_t rel = int16_t(uint16_t(code[pc + 1]) | uint16_t(code[pc + 2]) << 8);
                const uint32_t target = uint32_t(int64_t(pc) + 3 + rel);
                if (hi == 0x40) {
                    line("br %s", label_of(target).c_str());
                } else if (hi == 0x50) {
                    line("brc.%s %s", vm::cond_suffix(Cond(lo)), label_of(target).c_str());
                } else {
                    line("call %s", label_of(target).c_str());
                }
                break;
            }
            case 0x60: {
                if (first == vm::op::LdiCtrStream) {
                    line("ldi ctr, s%u", opnd & 0x0F);
                } else {
                    const uint32_t imm = uint32_t(code[pc + 2]) | uint32_t(code[pc + 3]) << 8 |
                                         uint32_t(code[pc + 4]) << 16 | uint32_t(code[pc + 5]) << 24;
                    if (first == vm::op::LdiImm) {
                        if (imm > 9)
                            line("ldi s%u, #0x%08x", opnd & 0x0F, imm);
                        else
                            line("ldi s%u, #%u", opnd & 0x0F, imm);
                    } else {
                        line("ldi ctr, #%u", imm);
                    }
                }
                break;
            }
            case 0x80:
            case 0x90:
                line("%s i%u, s%u.%c", hi == 0x80 ? "mkidx" : "seek", opnd >> 5, opnd & 0x0F,
                     (opnd & 0x10) ? 'w' : 'r');
                break;
            case 0xA0:
                line("emit s%u, #0x%02x", lo, opnd);
                break;
        }
        pc += uint32_t(len);
    }
    if (targets.count(uint32_t(code.size())) && !code.empty())
        t += label_of(uint32_t(code.size())) + ":\n";

    return out;
}

}  // namespace nanoua::uasm
