#include "nanoua/nsimage.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "nanoua/bytes.hpp"
#include "nanoua/codec.hpp"
#include "nanoua/status.hpp"

namespace nanoua::ns {

namespace {

using vm::TypeTag;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

std::optional<nanoua::NodeId> parse_node_id_text(std::string_view text) {
    text = trim(text);
    uint16_t ns = 0;
    if (text.starts_with("ns=")) {
        const auto semi = text.find(';');
        if (semi == std::string_view::npos) return std::nullopt;
        const std::string nss(text.substr(3, semi - 3));
        char* end = nullptr;
        const unsigned long v = std::strtoul(nss.c_str(), &end, 10);
        if (end != nss.c_str() + nss.size() || v > 0xFFFF) return std::nullopt;
        ns = uint16_t(v);
        text = text.substr(semi + 1);
    }
    if (text.starts_with("i=")) {
        const std::string num(text.substr(2));
        char* end = nullptr;
        const unsigned long long v = std::strtoull(num.c_str(), &end, 10);
        if (num.empty() || end != num.c_str() + num.size() || v > 0xFFFFFFFFull)
            return std::nullopt;
        return NodeId::numeric(ns, uint32_t(v));
    }
    if (text.starts_with("s=")) {
        if (text.size() == 2) return std::nullopt;
        return NodeId::string(ns, std::string(text.substr(2)));
    }
    return std::nullopt;
}

std::string node_id_to_text(const nanoua::NodeId& id) {
    std::string out;
    if (id.namespace_index != 0) out = "ns=" + std::to_string(id.namespace_index) + ";";
    if (id.is_numeric()) return out + "i=" + std::to_string(id.numeric_id());
    if (const auto* s = std::get_if<std::string>(&id.ident)) return out + "s=" + *s;
    return out + "?";
}

// ---------------------------------------------------------------- compiler

namespace {

struct ModelNode {
    std::string file;
    int line = 0;
    nanoua::NodeId id;
    uint8_t node_class = 0;
    QualifiedName browse;
    LocalizedText display;
    nanoua::NodeId data_type;
    uint8_t access = 0x01;  // CurrentRead
    Variant value;
    int explicit_capacity = -1;
};

std::optional<uint8_t> node_class_from_name(std::string_view s) {
    if (s == "Object") return 1;
    if (s == "Variable") return 2;
    if (s == "Method") return 4;
    if (s == "ObjectType") return 8;
    if (s == "VariableType") return 16;
    if (s == "ReferenceType") return 32;
    if (s == "DataType") return 64;
    if (s == "View") return 128;
    return std::nullopt;
}

// Splits a line into whitespace-separated fields; double quotes group and are
// stripped ("a b"=one field, key="v w"=key=v w).
std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool in_field = false, in_quotes = false;
    for (char c : line) {
        if (in_quotes) {
            if (c == '"') {
                in_quotes = false;
            } else {
                cur.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            in_field = true;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (in_field) {
                out.push_back(std::move(cur));
                cur.clear();
                in_field = false;
            }
            continue;
        }
        cur.push_back(c);
        in_field = true;
    }
    if (in_field) out.push_back(std::move(cur));
    return out;
}

std::optional<int64_t> parse_i64(std::string_view s) {
    if (s.empty()) return std::nullopt;
    const std::string z(s);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(z.c_str(), &end, 0);
    if (errno != 0 || end != z.c_str() + z.size()) return std::nullopt;
    return v;
}

std::optional<Variant> parse_value_literal(std::string_view t, std::string& err) {
    const auto colon = t.find(':');
    if (colon == std::string_view::npos) {
        err = "value literal needs a '<type>:' prefix";
        return std::nullopt;
    }
    const auto type = t.substr(0, colon);
    const auto body = t.substr(colon + 1);
    Variant v;

    auto integral = [&](int64_t lo, int64_t hi, auto assign) -> std::optional<Variant> {
        const auto n = parse_i64(body);
        if (!n || *n < lo || *n > hi) {
            err = "integer literal out of range for " + std::string(type);
            return std::nullopt;
        }
        assign(*n);
        return v;
    };

    if (type == "bool") {
        if (body == "true" || body == "1") {
            v.value = true;
        } else if (body == "false" || body == "0") {
            v.value = false;
        } else {
            err = "bool literal must be true or false";
            return std::nullopt;
        }
        return v;
    }
    if (type == "i8") return integral(INT8_MIN, INT8_MAX, [&](int64_t n) { v.value = int8_t(n); });
    if (type == "u8") return integral(0, UINT8_MAX, [&](int64_t n) { v.value = uint8_t(n); });
    if (type == "i16") return integral(INT16_MIN, INT16_MAX, [&](int64_t n) { v.value = int16_t(n); });
    if (type == "u16") return integral(0, UINT16_MAX, [&](int64_t n) { v.value = uint16_t(n); });
    if (type == "i32") return integral(INT32_MIN, INT32_MAX, [&](int64_t n) { v.value = int32_t(n); });
    if (type == "u32") return integral(0, UINT32_MAX, [&](int64_t n) { v.value = uint32_t(n); });
    if (type == "f32" || type == "f64") {
        const std::string z(body);
        char* end = nullptr;
        const double d = std::strtod(z.c_str(), &end);
        if (z.empty() || end != z.c_str() + z.size()) {
            err = "bad float literal";
            return std::nullopt;
        }
        if (type == "f32") {
            v.value = float(d);
        } else {
            v.value = d;
        }
        return v;
    }
    if (type == "str") {
        v.value = UaString{std::string(body)};
        return v;
    }
    if (type == "dt") {
        const auto n = parse_i64(body);
        if (!n) {
            err = "dt literal must be raw ticks";
            return std::nullopt;
        }
        v.value = DateTime{*n};
        return v;
    }
    err = "unknown value type '" + std::string(type) + "'";
    return std::nullopt;
}

// Builtin type id a declared data type enforces on writes; 0 = no constraint.
uint32_t builtin_id_of(const Variant& v) { return v.type_id(); }

struct SourceLine {
    std::string file;
    int line;
    std::string text;
};

bool expand_source(const std::string& text, const std::string& name,
                   const IncludeResolver& resolve, int depth, std::vector<SourceLine>& out,
                   std::vector<CompileError>& errors) {
    if (depth > 8) {
        errors.push_back({name, 0, "include nesting too deep"});
        return false;
    }
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        line++;
        std::string_view sv(raw);
        if (const auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
        sv = trim(sv);
        if (sv.empty()) continue;
        if (sv.starts_with("include ")) {
            const std::string inc(trim(sv.substr(8)));
            if (!resolve) {
                errors.push_back({name, line, "include is not available here"});
                return false;
            }
            const auto body = resolve(inc);
            if (!body) {
                errors.push_back({name, line, "cannot read include '" + inc + "'"});
                return false;
            }
            if (!expand_source(*body, inc, resolve, depth + 1, out, errors)) return false;
            continue;
        }
        out.push_back({name, line, std::string(sv)});
    }
    return true;
}

}  // namespace

CompileResult compile_model(std::string_view source, const std::string& source_name,
                            const IncludeResolver& resolve) {
    CompileResult res;
    std::vector<SourceLine> lines;
    if (!expand_source(std::string(source), source_name, resolve, 0, lines, res.errors))
        return res;

    std::vector<ModelNode> nodes;
    auto fail = [&](const SourceLine& sl, std::string msg) {
        res.errors.push_back({sl.file, sl.line, std::move(msg)});
    };

    for (const auto& sl : lines) {
        const auto fields = split_fields(sl.text);
        if (fields.empty()) continue;
        if (fields[0] != "node") {
            fail(sl, "unknown directive '" + fields[0] + "'");
            continue;
        }
        if (fields.size() < 2) {
            fail(sl, "node: missing node id");
            continue;
        }
        ModelNode n;
        n.file = sl.file;
        n.line = sl.line;
        const auto id = parse_node_id_text(fields[1]);
        if (!id) {
            fail(sl, "node: bad node id '" + fields[1] + "'");
            continue;
        }
        n.id = *id;

        bool bad = false, have_value = false, have_datatype = false;
        for (size_t i = 2; i < fields.size() && !bad; i++) {
            const auto& f = fields[i];
            const auto eq = f.find('=');
            if (eq == std::string::npos) {
                fail(sl, "node: expected key=value, got '" + f + "'");
                bad = true;
                break;
            }
            const auto key = f.substr(0, eq);
            const auto val = f.substr(eq + 1);
            if (key == "class") {
                const auto c = node_class_from_name(val);
                if (!c) {
                    fail(sl, "node: unknown class '" + val + "'");
                    bad = true;
                    break;
                }
                n.node_class = *c;
            } else if (key == "browse") {
                const auto colon = val.find(':');
                std::string name = val;
                uint16_t bns = 0;
                if (colon != std::string::npos &&
                    val.find_first_not_of("0123456789") >= colon) {
                    bns = uint16_t(std::atoi(val.substr(0, colon).c_str()));
                    name = val.substr(colon + 1);
                }
                n.browse = QualifiedName{bns, UaString{name}};
            } else if (key == "display") {
                n.display = LocalizedText{UaString{}, UaString{val}};
            } else if (key == "datatype") {
                const auto dt = parse_node_id_text(val);
                if (!dt) {
                    fail(sl, "node: bad datatype node id '" + val + "'");
                    bad = true;
                    break;
                }
                n.data_type = *dt;
                have_datatype = true;
            } else if (key == "access") {
                if (val == "r") {
                    n.access = 0x01;
                } else if (val == "rw") {
                    n.access = 0x03;
                } else {
                    fail(sl, "node: access must be r or rw");
                    bad = true;
                    break;
                }
            } else if (key == "value") {
                std::string err;
                const auto v = parse_value_literal(val, err);
                if (!v) {
                    fail(sl, "node: " + err);
                    bad = true;
                    break;
                }
                n.value = *v;
                have_value = true;
            } else if (key == "capacity") {
                const auto c = parse_i64(val);
                if (!c || *c < 0 || *c > 0xFFFF) {
                    fail(sl, "node: bad capacity");
                    bad = true;
                    break;
                }
                n.explicit_capacity = int(*c);
            } else {
                fail(sl, "node: unknown key '" + key + "'");
                bad = true;
                break;
            }
        }
        if (bad) continue;
        if (n.node_class == 0) {
            fail(sl, "node: class= is required");
            continue;
        }
        if (!n.browse.name) {
            fail(sl, "node: browse= is required");
            continue;
        }
        if (!n.display.text) n.display = LocalizedText{UaString{}, n.browse.name};
        if (n.node_class != 2 && (have_value || have_datatype)) {
            fail(sl, "node: value/datatype only apply to Variables");
            continue;
        }
        if (n.node_class == 2 && !have_datatype) {
            // Derive from the initial value; valueless variables hold anything.
            n.data_type = have_value ? NodeId::numeric(0, builtin_id_of(n.value))
                                     : NodeId::numeric(0, 24);  // BaseDataType
        }
        nodes.push_back(std::move(n));
    }
    if (!res.errors.empty()) return res;

    // Sort by node id; the index then lists records in file order.
    struct Encoded {
        std::vector<uint8_t> nid;
        const ModelNode* node;
        std::vector<uint8_t> record;  // without the value slot
        std::vector<uint8_t> value;   // current value variant bytes ("" = none)
        uint16_t capacity = 0;
    };
    std::vector<Encoded> enc;
    enc.reserve(nodes.size());
    for (const auto& n : nodes) {
        Encoded e;
        ByteWriter wn;
        encode_node_id(wn, n.id);
        e.nid = wn.take();
        e.node = &n;
        enc.push_back(std::move(e));
    }
    std::sort(enc.begin(), enc.end(), [](const Encoded& a, const Encoded& b) {
        return vm::compare_values(TypeTag::Nid, a.nid, b.nid).lt;
    });
    for (size_t i = 1; i < enc.size(); i++) {
        if (vm::compare_values(TypeTag::Nid, enc[i - 1].nid, enc[i].nid).eq) {
            const auto& n = *enc[i].node;
            res.errors.push_back({n.file, n.line,
                                  "duplicate node id " + node_id_to_text(n.id)});
        }
    }
    if (!res.errors.empty()) return res;

    for (auto& e : enc) {
        const ModelNode& n = *e.node;
        ByteWriter w;
        w.bytes(e.nid);
        w.u8(n.node_class);
        encode_qualified_name(w, n.browse);
        encode_localized_text(w, n.display);
        if (n.node_class == 2) {
            encode_node_id(w, n.data_type);
            w.u8(n.access);
            if (!n.value.is_null()) {
                ByteWriter wv;
                encode_variant(wv, n.value);
                e.value = wv.take();
            }
            if (e.value.size() > 0xFFFF) {
                res.errors.push_back({n.file, n.line, "initial value too large"});
                continue;
            }
            const uint16_t len = uint16_t(e.value.size());
            e.capacity = len;
            if (n.explicit_capacity >= 0) {
                if (n.explicit_capacity < len) {
                    res.errors.push_back(
                        {n.file, n.line, "capacity smaller than the initial value"});
                    continue;
                }
                e.capacity = uint16_t(n.explicit_capacity);
            }
            w.u16(e.capacity);
            w.u16(len);
        }
        e.record = w.take();
    }
    if (!res.errors.empty()) return res;

    uint32_t record_total = 0, value_total = 0;
    for (const auto& e : enc) {
        record_total += uint32_t(e.record.size());
        value_total += e.capacity;
    }
    const uint32_t count = uint32_t(enc.size());
    const uint32_t index_offset = kHeaderBytes + record_total + value_total;
    const uint32_t total = index_offset + 4 * count;

    res.report = {count, kHeaderBytes, record_total, value_total, 4 * count, total};
    if (total > kMaxImageBytes) {
        res.errors.push_back({source_name, 0,
                              "image size " + std::to_string(total) + " exceeds the " +
                                  std::to_string(kMaxImageBytes) + " byte budget"});
        return res;
    }

    ByteWriter img;
    img.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>("NSIM"), 4));
    img.u16(1);
    img.u32(count);
    img.u32(index_offset);
    img.u32(total);
    std::vector<uint32_t> offsets;
    offsets.reserve(count);
    for (const auto& e : enc) {
        offsets.push_back(uint32_t(img.size()));
        img.bytes(e.record);
        img.bytes(e.value);
        for (size_t pad = e.value.size(); pad < e.capacity; pad++) img.u8(0);
    }
    for (const uint32_t off : offsets) img.u32(off);
    res.image = img.take();
    return res;
}

CompileResult compile_model_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        CompileResult r;
        r.errors.push_back({path, 0, "cannot read file"});
        return r;
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    const IncludeResolver resolve = [&dir](const std::string& name) -> std::optional<std::string> {
        std::ifstream inc(dir / name, std::ios::binary);
        if (!inc) return std::nullopt;
        std::ostringstream body;
        body << inc.rdbuf();
        return body.str();
    };
    return compile_model(ss.str(), std::filesystem::path(path).filename().string(), resolve);
}

// ------------------------------------------------------------------- image

namespace {

struct RecordView {
    bool ok = false;
    std::span<const uint8_t> nid, browse, display, data_type;
    uint8_t node_class = 0;
    uint8_t access = 0;
    uint16_t capacity = 0, length = 0;
    uint32_t value_offset = 0;      // absolute, start of the slot
    uint32_t length_field_offset = 0;  // absolute, for in-place updates
    uint32_t parsed_bytes = 0;      // record bytes up to and including the slot
};

RecordView parse_record(std::span<const uint8_t> img, uint32_t off) {
    RecordView v;
    if (off >= img.size()) return v;
    size_t at = off;
    auto scan = [&](TypeTag tag) -> std::span<const uint8_t> {
        const auto n = vm::scan_value_length(tag, img.subspan(at));
        if (n < 0) return {};
        const auto s = img.subspan(at, size_t(n));
        at += size_t(n);
        return s;
    };
    v.nid = scan(TypeTag::Nid);
    if (v.nid.empty()) return v;
    if (at >= img.size()) return v;
    v.node_class = img[at++];
    v.browse = scan(TypeTag::Qn);
    if (v.browse.empty()) return v;
    v.display = scan(TypeTag::Lt);
    if (v.display.empty()) return v;
    if (v.node_class == 2) {
        v.data_type = scan(TypeTag::Nid);
        if (v.data_type.empty()) return v;
        if (at + 5 > img.size()) return v;
        v.access = img[at++];
        v.capacity = uint16_t(img[at] | img[at + 1] << 8);
        at += 2;
        v.length_field_offset = uint32_t(at);
        v.length = uint16_t(img[at] | img[at + 1] << 8);
        at += 2;
        if (v.length > v.capacity) return v;
        if (at + v.capacity > img.size()) return v;
        v.value_offset = uint32_t(at);
        at += v.capacity;
    }
    v.parsed_bytes = uint32_t(at - off);
    v.ok = true;
    return v;
}

}  // namespace

NamespaceImage::OpenResult NamespaceImage::open(std::vector<uint8_t> bytes) {
    OpenResult out;
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), "NSIM", 4) != 0) {
        out.error = "not a namespace image (bad magic)";
        return out;
    }
    ByteReader r(std::span<const uint8_t>(bytes).subspan(4));
    const uint16_t version = r.u16();
    const uint32_t count = r.u32();
    const uint32_t index_offset = r.u32();
    const uint32_t total = r.u32();
    if (version != 1) {
        out.error = "unsupported image version " + std::to_string(version);
        return out;
    }
    if (total != bytes.size()) {
        out.error = "image size field disagrees with the file size";
        return out;
    }
    if (index_offset > bytes.size() || bytes.size() - index_offset != size_t(count) * 4) {
        out.error = "index does not fit the node count";
        return out;
    }
    NamespaceImage img;
    img.bytes_ = std::move(bytes);
    img.count_ = count;
    img.index_offset_ = index_offset;
    if (auto err = img.verify(); !err.empty()) {
        out.error = std::move(err);
        return out;
    }
    out.image = std::move(img);
    return out;
}

std::vector<uint32_t> NamespaceImage::record_offsets() const {
    std::vector<uint32_t> out;
    out.reserve(count_);
    for (uint32_t i = 0; i < count_; i++) {
        const size_t at = index_offset_ + size_t(i) * 4;
        out.push_back(uint32_t(bytes_[at]) | uint32_t(bytes_[at + 1]) << 8 |
                      uint32_t(bytes_[at + 2]) << 16 | uint32_t(bytes_[at + 3]) << 24);
    }
    return out;
}

std::string NamespaceImage::verify() const {
    const auto offsets = record_offsets();
    uint32_t expect = kHeaderBytes;
    for (uint32_t i = 0; i < count_; i++) {
        if (offsets[i] != expect)
            return "record " + std::to_string(i) + " offset " + std::to_string(offsets[i]) +
                   " does not follow its predecessor (expected " + std::to_string(expect) + ")";
        const auto rec = parse_record(bytes_, offsets[i]);
        if (!rec.ok) return "record " + std::to_string(i) + " does not parse";
        if (i > 0) {
            const auto prev = parse_record(bytes_, offsets[i - 1]);
            const auto cmp = vm::compare_values(TypeTag::Nid, prev.nid, rec.nid);
            if (!cmp.lt) return "index is not sorted at position " + std::to_string(i);
        }
        expect += rec.parsed_bytes;
    }
    if (expect != index_offset_) return "records do not end at the index";
    return {};
}

SizeReport NamespaceImage::report() const {
    SizeReport rep;
    rep.node_count = count_;
    rep.header_bytes = kHeaderBytes;
    rep.index_bytes = 4 * count_;
    for (const uint32_t off : record_offsets()) {
        const auto rec = parse_record(bytes_, off);
        rep.record_bytes += rec.parsed_bytes - rec.capacity;
        rep.value_bytes += rec.capacity;
    }
    rep.total_bytes = uint32_t(bytes_.size());
    return rep;
}

NamespaceImage::LookupResult NamespaceImage::lookup(std::span<const uint8_t> query) const {
    LookupResult res;
    uint32_t lo = 0, hi = count_;
    while (lo < hi) {
        const uint32_t mid = lo + (hi - lo) / 2;
        const size_t at = index_offset_ + size_t(mid) * 4;
        const uint32_t off = uint32_t(bytes_[at]) | uint32_t(bytes_[at + 1]) << 8 |
                             uint32_t(bytes_[at + 2]) << 16 | uint32_t(bytes_[at + 3]) << 24;
        res.probes++;
        res.bytes_touched += 4;  // the index entry
        const auto rec_nid_len = vm::scan_value_length(TypeTag::Nid, std::span(bytes_).subspan(off));
        if (rec_nid_len < 0) return res;  // corrupt; verify() would have caught it
        const auto rec_nid = std::span(bytes_).subspan(off, size_t(rec_nid_len));
        res.bytes_touched += uint32_t(rec_nid_len);
        const auto cmp = vm::compare_values(TypeTag::Nid, query, rec_nid);
        if (cmp.eq) {
            res.found = true;
            res.record_offset = off;
            return res;
        }
        if (cmp.lt) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return res;
}

NamespaceImage::ReadReply NamespaceImage::read_attribute(std::span<const uint8_t> node_id,
                                                         uint32_t attribute_id) const {
    ReadReply rep;
    const auto found = lookup(node_id);
    rep.bytes_touched = found.bytes_touched;
    if (!found.found) {
        rep.status = status::BadNodeIdUnknown;
        return rep;
    }
    if (attribute_id < 1 || attribute_id > attr::MaxKnown) {
        rep.status = status::BadAttributeIdInvalid;
        return rep;
    }
    const auto rec = parse_record(bytes_, found.record_offset);
    rep.bytes_touched += rec.parsed_bytes - rec.capacity;

    auto wrap = [&](uint8_t type_byte, std::span<const uint8_t> payload) {
        rep.variant.reserve(payload.size() + 1);
        rep.variant.push_back(type_byte);
        rep.variant.insert(rep.variant.end(), payload.begin(), payload.end());
        rep.status = status::Good;
    };

    switch (attribute_id) {
        case attr::NodeId:
            wrap(0x11, rec.nid);
            break;
        case attr::BrowseName:
            wrap(0x14, rec.browse);
            break;
        case attr::DisplayName:
            wrap(0x15, rec.display);
            break;
        case attr::DataType:
            if (rec.node_class != 2) {
                rep.status = status::BadAttributeIdInvalid;
                break;
            }
            wrap(0x11, rec.data_type);
            break;
        case attr::AccessLevel:
            if (rec.node_class != 2) {
                rep.status = status::BadAttributeIdInvalid;
                break;
            }
            wrap(0x03, std::span(&rec.access, 1));
            break;
        case attr::Value: {
            if (rec.node_class != 2) {
                rep.status = status::BadAttributeIdInvalid;
                break;
            }
            if (rec.length == 0) {
                // Valueless variable: a null variant.
                rep.variant.push_back(0x00);
                rep.status = status::Good;
                break;
            }
            const auto slot = std::span(bytes_).subspan(rec.value_offset, rec.length);
            rep.variant.assign(slot.begin(), slot.end());
            rep.bytes_touched += rec.length;
            rep.status = status::Good;
            break;
        }
        default:
            rep.status = status::BadAttributeIdInvalid;
            break;
    }
    return rep;
}

NamespaceImage::WriteReply NamespaceImage::write_value(std::span<const uint8_t> node_id,
                                                       std::span<const uint8_t> data_value) {
    WriteReply rep;
    const auto found = lookup(node_id);
    rep.bytes_touched = found.bytes_touched;
    if (!found.found) {
        rep.status = status::BadNodeIdUnknown;
        return rep;
    }
    const auto rec = parse_record(bytes_, found.record_offset);
    rep.bytes_touched += rec.parsed_bytes - rec.capacity;
    if (rec.node_class != 2) {
        rep.status = status::BadAttributeIdInvalid;
        return rep;
    }
    if (!(rec.access & 0x02)) {
        rep.status = status::BadNotWritable;
        return rep;
    }

    // The DataValue must carry a value and nothing else; writing statuses or
    // timestamps is not supported here.
    if (data_value.empty() || vm::scan_value_length(TypeTag::Dv, data_value) < 0) {
        rep.status = status::BadInternalError;
        return rep;
    }
    const uint8_t mask = data_value[0];
    if (mask == 0x00) {
        rep.status = status::BadTypeMismatch;  // nothing to write into a typed slot
        return rep;
    }
    if (mask != 0x01) {
        rep.status = status::BadWriteNotSupported;
        return rep;
    }
    const auto variant = data_value.subspan(1);
    const uint8_t type_byte = variant[0];
    if (type_byte == 0x00) {
        rep.status = status::BadTypeMismatch;
        return rep;
    }

    // Declared type constraint: ns0 numeric data types map one-to-one onto
    // variant type bytes; BaseDataType (24) accepts anything.
    const auto dt = decode_node_id(rec.data_type);
    if (dt.ok() && dt.value.is_numeric() && dt.value.namespace_index == 0 &&
        dt.value.numeric_id() != 24 && dt.value.numeric_id() != type_byte) {
        rep.status = status::BadTypeMismatch;
        return rep;
    }

    if (variant.size() > rec.capacity) {
        rep.status = status::BadOutOfRange;
        return rep;
    }
    std::memcpy(bytes_.data() + rec.value_offset, variant.data(), variant.size());
    const uint16_t len = uint16_t(variant.size());
    bytes_[rec.length_field_offset] = uint8_t(len & 0xFF);
    bytes_[rec.length_field_offset + 1] = uint8_t(len >> 8);
    rep.bytes_touched += uint32_t(variant.size()) + 2;
    rep.status = status::Good;
    return rep;
}

// ------------------------------------------------------------------- port

std::span<const uint8_t> NamespacePort::peek() const {
    if (!replied_) return {};
    return std::span(reply_).subspan(reply_pos_);
}

void NamespacePort::consume(size_t n) { reply_pos_ += n; }

bool NamespacePort::write(std::span<const uint8_t> b) {
    if (replied_) {
        // The previous transaction must be fully drained before the next
        // query starts; anything else is a program bug.
        if (reply_pos_ != reply_.size()) return false;
        reset();
    }
    if (query_.size() + b.size() > 4096) return false;
    query_.insert(query_.end(), b.begin(), b.end());
    try_execute();
    return true;
}

bool NamespacePort::seek_read(size_t pos) {
    if (!replied_ || pos > reply_.size()) return false;
    reply_pos_ = pos;
    return true;
}

bool NamespacePort::seek_write(size_t pos) { return pos == query_.size(); }

uint64_t NamespacePort::take_image_traffic() {
    const uint64_t t = image_traffic_;
    image_traffic_ = 0;
    return t;
}

void NamespacePort::reset() {
    query_.clear();
    reply_.clear();
    reply_pos_ = 0;
    replied_ = false;
}

void NamespacePort::try_execute() {
    if (query_.empty()) return;
    const auto body = std::span<const uint8_t>(query_).subspan(1);
    auto answer = [&](uint32_t status, std::span<const uint8_t> variant) {
        reply_.clear();
        for (int i = 0; i < 4; i++) reply_.push_back(uint8_t(status >> (8 * i)));
        reply_.insert(reply_.end(), variant.begin(), variant.end());
        reply_pos_ = 0;
        replied_ = true;
    };

    if (query_[0] != 0x01 && query_[0] != 0x02) {
        answer(status::BadInternalError, {});
        return;
    }
    const auto nid_len = vm::scan_value_length(TypeTag::Nid, body);
    if (nid_len == vm::kScanShort) return;  // wait for more bytes
    if (nid_len < 0) {
        answer(status::BadInternalError, {});
        return;
    }
    const auto nid = body.first(size_t(nid_len));
    const auto rest = body.subspan(size_t(nid_len));

    switch (query_[0]) {
        case 0x01: {  // read attribute
            if (rest.size() < 4) return;
            const uint32_t attr_id = uint32_t(rest[0]) | uint32_t(rest[1]) << 8 |
                                     uint32_t(rest[2]) << 16 | uint32_t(rest[3]) << 24;
            const auto rep = img_.read_attribute(nid, attr_id);
            image_traffic_ += rep.bytes_touched;
            answer(rep.status, rep.variant);
            break;
        }
        case 0x02: {  // write value
            const auto dv_len = vm::scan_value_length(TypeTag::Dv, rest);
            if (dv_len == vm::kScanShort) return;
            if (dv_len < 0) {
                answer(status::BadInternalError, {});
                return;
            }
            const auto rep = img_.write_value(nid, rest.first(size_t(dv_len)));
            image_traffic_ += rep.bytes_touched;
            answer(rep.status, {});
            break;
        }
        default:
            answer(status::BadInternalError, {});
            break;
    }
}

}  // namespace nanoua::ns
