#include "nanoua/codec.hpp"

#include <cstring>

namespace nanoua {

const char* builtin_type_name(BuiltinType t) {
    switch (t) {
        case BuiltinType::Boolean: return "Boolean";
        case BuiltinType::SByte: return "SByte";
        case BuiltinType::Byte: return "Byte";
        case BuiltinType::Int16: return "Int16";
        case BuiltinType::UInt16: return "UInt16";
        case BuiltinType::Int32: return "Int32";
        case BuiltinType::UInt32: return "UInt32";
        case BuiltinType::Int64: return "Int64";
        case BuiltinType::UInt64: return "UInt64";
        case BuiltinType::Float: return "Float";
        case BuiltinType::Double: return "Double";
        case BuiltinType::String: return "String";
        case BuiltinType::DateTime: return "DateTime";
        case BuiltinType::Guid: return "Guid";
        case BuiltinType::ByteString: return "ByteString";
        case BuiltinType::XmlElement: return "XmlElement";
        case BuiltinType::NodeIdType: return "NodeId";
        case BuiltinType::StatusCode: return "StatusCode";
        case BuiltinType::QualifiedName: return "QualifiedName";
        case BuiltinType::LocalizedText: return "LocalizedText";
        case BuiltinType::Variant: return "Variant";
    }
    return "?";
}

uint8_t Variant::type_id() const {
    // Indexed by alternative position in Variant::Value.
    static constexpr uint8_t kWireId[] = {0, 1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13, 15, 17, 20, 21};
    return kWireId[value.index()];
}

int compare(const NodeId& a, const NodeId& b) {
    if (a.namespace_index != b.namespace_index)
        return a.namespace_index < b.namespace_index ? -1 : 1;
    if (a.ident.index() != b.ident.index()) return a.ident.index() < b.ident.index() ? -1 : 1;
    switch (a.ident.index()) {
        case 0: {
            uint32_t x = std::get<uint32_t>(a.ident), y = std::get<uint32_t>(b.ident);
            return x < y ? -1 : x > y ? 1 : 0;
        }
        case 1: {
            int c = std::get<std::string>(a.ident).compare(std::get<std::string>(b.ident));
            return c < 0 ? -1 : c > 0 ? 1 : 0;
        }
        case 2:
            return std::memcmp(std::get<Guid>(a.ident).bytes.data(),
                               std::get<Guid>(b.ident).bytes.data(), 16);
        default: {
            const auto& x = std::get<std::vector<uint8_t>>(a.ident);
            const auto& y = std::get<std::vector<uint8_t>>(b.ident);
            return x < y ? -1 : y < x ? 1 : 0;
        }
    }
}

const char* decode_error_name(DecodeError e) {
    switch (e) {
        case DecodeError::None: return "None";
        case DecodeError::Truncated: return "Truncated";
        case DecodeError::Malformed: return "Malformed";
        case DecodeError::LimitExceeded: return "LimitExceeded";
        case DecodeError::UnsupportedType: return "UnsupportedType";
    }
    return "?";
}

namespace {

// Decode context: byte cursor + limits + first-error latch. Composite
// decoders chain with && so the first failure stops the walk.
struct Dec {
    ByteReader r;
    DecodeLimits lim;
    DecodeError err = DecodeError::None;

    Dec(std::span<const uint8_t> b, const DecodeLimits& l) : r(b), lim(l) {}

    bool fail(DecodeError e) {
        if (err == DecodeError::None) err = e;
        return false;
    }
    bool check() { return r.truncated() ? fail(DecodeError::Truncated) : true; }
    DecodeError result() const {
        if (err != DecodeError::None) return err;
        return r.truncated() ? DecodeError::Truncated : DecodeError::None;
    }

    bool u8(uint8_t& v) { v = r.u8(); return check(); }
    bool u16(uint16_t& v) { v = r.u16(); return check(); }
    bool u32(uint32_t& v) { v = r.u32(); return check(); }
    bool i32(int32_t& v) { v = r.i32(); return check(); }
    bool i64(int64_t& v) { v = r.i64(); return check(); }
    bool f32(float& v) { v = r.f32(); return check(); }
    bool f64(double& v) { v = r.f64(); return check(); }
    bool boolean(bool& v) {
        v = r.u8() != 0;
        return check();
    }
};

bool dec_str(Dec& d, UaString& out) {
    int32_t len = d.r.i32();
    if (!d.check()) return false;
    if (len == -1) {
        out = std::nullopt;
        return true;
    }
    if (len < 0) return d.fail(DecodeError::Malformed);
    if (uint32_t(len) > d.lim.max_string_bytes) return d.fail(DecodeError::LimitExceeded);
    auto v = d.r.view(size_t(len));
    if (!d.check()) return false;
    out = std::string(v.begin(), v.end());
    return true;
}

bool dec_bstr(Dec& d, ByteString& out) {
    int32_t len = d.r.i32();
    if (!d.check()) return false;
    if (len == -1) {
        out = std::nullopt;
        return true;
    }
    if (len < 0) return d.fail(DecodeError::Malformed);
    if (uint32_t(len) > d.lim.max_string_bytes) return d.fail(DecodeError::LimitExceeded);
    auto v = d.r.view(size_t(len));
    if (!d.check()) return false;
    out = std::vector<uint8_t>(v.begin(), v.end());
    return true;
}

bool dec_guid(Dec& d, Guid& g) {
    auto v = d.r.view(16);
    if (!d.check()) return false;
    std::memcpy(g.bytes.data(), v.data(), 16);
    return true;
}

bool dec_node_id(Dec& d, NodeId& id) {
    uint8_t enc;
    if (!d.u8(enc)) return false;
    switch (enc) {
        case 0x00: {  // TwoByte: id in one byte, ns 0
            uint8_t b;
            if (!d.u8(b)) return false;
            id = NodeId::numeric(0, b);
            return true;
        }
        case 0x01: {  // FourByte: ns in one byte, id in two
            uint8_t ns;
            uint16_t v;
            if (!d.u8(ns) || !d.u16(v)) return false;
            id = NodeId::numeric(ns, v);
            return true;
        }
        case 0x02: {  // Numeric: full widths
            uint16_t ns;
            uint32_t v;
            if (!d.u16(ns) || !d.u32(v)) return false;
            id = NodeId::numeric(ns, v);
            return true;
        }
        case 0x03: {  // String
            uint16_t ns;
            UaString s;
            if (!d.u16(ns) || !dec_str(d, s)) return false;
            id = NodeId::string(ns, s ? std::move(*s) : std::string());
            return true;
        }
        case 0x04: {  // Guid
            uint16_t ns;
            Guid g;
            if (!d.u16(ns) || !dec_guid(d, g)) return false;
            id = NodeId{ns, g};
            return true;
        }
        case 0x05: {  // ByteString
            uint16_t ns;
            ByteString b;
            if (!d.u16(ns) || !dec_bstr(d, b)) return false;
            id = NodeId::opaque(ns, b ? std::move(*b) : std::vector<uint8_t>());
            return true;
        }
        default:
            return d.fail(DecodeError::Malformed);
    }
}

bool dec_qualified_name(Dec& d, QualifiedName& q) {
    return d.u16(q.namespace_index) && dec_str(d, q.name);
}

bool dec_localized_text(Dec& d, LocalizedText& t) {
    uint8_t mask;
    if (!d.u8(mask)) return false;
    if (mask & ~0x03) return d.fail(DecodeError::Malformed);
    t.locale = std::nullopt;
    t.text = std::nullopt;
    if ((mask & 0x01) && !dec_str(d, t.locale)) return false;
    if ((mask & 0x02) && !dec_str(d, t.text)) return false;
    return true;
}

bool dec_variant(Dec& d, Variant& v) {
    uint8_t tb;
    if (!d.u8(tb)) return false;
    if (tb == 0) {
        v.value = std::monostate{};
        return true;
    }
    // Bit 7 flags an array payload, bit 6 array dimensions: out of Nano scope.
    if (tb & 0xC0) return d.fail(DecodeError::UnsupportedType);
    switch (tb) {
        case 1: {
            bool b;
            if (!d.boolean(b)) return false;
            v.value = b;
            return true;
        }
        case 2: {
            uint8_t b;
            if (!d.u8(b)) return false;
            v.value = int8_t(b);
            return true;
        }
        case 3: {
            uint8_t b;
            if (!d.u8(b)) return false;
            v.value = b;
            return true;
        }
        case 4: {
            uint16_t x;
            if (!d.u16(x)) return false;
            v.value = int16_t(x);
            return true;
        }
        case 5: {
            uint16_t x;
            if (!d.u16(x)) return false;
            v.value = x;
            return true;
        }
        case 6: {
            int32_t x;
            if (!d.i32(x)) return false;
            v.value = x;
            return true;
        }
        case 7: {
            uint32_t x;
            if (!d.u32(x)) return false;
            v.value = x;
            return true;
        }
        case 10: {
            float x;
            if (!d.f32(x)) return false;
            v.value = x;
            return true;
        }
        case 11: {
            double x;
            if (!d.f64(x)) return false;
            v.value = x;
            return true;
        }
        case 12: {
            UaString s;
            if (!dec_str(d, s)) return false;
            v.value = std::move(s);
            return true;
        }
        case 13: {
            int64_t t;
            if (!d.i64(t)) return false;
            v.value = DateTime{t};
            return true;
        }
        case 15: {
            ByteString b;
            if (!dec_bstr(d, b)) return false;
            v.value = std::move(b);
            return true;
        }
        case 17: {
            NodeId id;
            if (!dec_node_id(d, id)) return false;
            v.value = std::move(id);
            return true;
        }
        case 20: {
            QualifiedName q;
            if (!dec_qualified_name(d, q)) return false;
            v.value = std::move(q);
            return true;
        }
        case 21: {
            LocalizedText t;
            if (!dec_localized_text(d, t)) return false;
            v.value = std::move(t);
            return true;
        }
        // Known built-in types outside the Nano subset.
        case 8:
        case 9:
        case 14:
        case 16:
        case 18:
        case 19:
        case 22:
        case 23:
        case 24:
        case 25:
            return d.fail(DecodeError::UnsupportedType);
        default:
            return d.fail(DecodeError::Malformed);
    }
}

bool dec_data_value(Dec& d, DataValue& dv) {
    uint8_t mask;
    if (!d.u8(mask)) return false;
    if (mask & ~0x3F) return d.fail(DecodeError::Malformed);
    dv = DataValue{};
    if (mask & 0x01) {
        Variant v;
        if (!dec_variant(d, v)) return false;
        dv.value = std::move(v);
    }
    if (mask & 0x02) {
        uint32_t s;
        if (!d.u32(s)) return false;
        dv.status = s;
    }
    // Wire order interleaves the picosecond fields with their timestamps.
    if (mask & 0x04) {
        int64_t t;
        if (!d.i64(t)) return false;
        dv.source_timestamp = DateTime{t};
    }
    if (mask & 0x10) {
        uint16_t p;
        if (!d.u16(p)) return false;
        dv.source_picoseconds = p;
    }
    if (mask & 0x08) {
        int64_t t;
        if (!d.i64(t)) return false;
        dv.server_timestamp = DateTime{t};
    }
    if (mask & 0x20) {
        uint16_t p;
        if (!d.u16(p)) return false;
        dv.server_picoseconds = p;
    }
    return true;
}

bool dec_extension_object(Dec& d, ExtensionObject& e) {
    if (!dec_node_id(d, e.type_id)) return false;
    uint8_t enc;
    if (!d.u8(enc)) return false;
    switch (enc) {
        case 0:
            e.body = std::nullopt;
            return true;
        case 1:
            return dec_bstr(d, e.body);
        case 2:  // XML body: legal on the wire, outside the subset
            return d.fail(DecodeError::UnsupportedType);
        default:
            return d.fail(DecodeError::Malformed);
    }
}

// Single DiagnosticInfo: only the empty form (mask byte 0) is in-subset.
bool dec_diagnostic_info(Dec& d, uint8_t& mask) {
    if (!d.u8(mask)) return false;
    if (mask != 0) return d.fail(DecodeError::UnsupportedType);
    return true;
}

template <typename T, typename Fn>
bool dec_array(Dec& d, std::optional<std::vector<T>>& out, Fn elem) {
    int32_t n;
    if (!d.i32(n)) return false;
    if (n == -1) {
        out = std::nullopt;
        return true;
    }
    if (n < 0) return d.fail(DecodeError::Malformed);
    if (uint32_t(n) > d.lim.max_array_elems) return d.fail(DecodeError::LimitExceeded);
    out.emplace();
    out->reserve(size_t(n));
    for (int32_t i = 0; i < n; i++) {
        T v{};
        if (!elem(d, v)) return false;
        out->push_back(std::move(v));
    }
    return true;
}

// ------------------------------------------------------------- encode side

void enc_str(ByteWriter& w, const UaString& s) {
    if (!s) {
        w.i32(-1);
        return;
    }
    w.i32(int32_t(s->size()));
    w.bytes(reinterpret_cast<const uint8_t*>(s->data()), s->size());
}

void enc_bstr(ByteWriter& w, const ByteString& b) {
    if (!b) {
        w.i32(-1);
        return;
    }
    w.i32(int32_t(b->size()));
    w.bytes(b->data(), b->size());
}

void enc_node_id(ByteWriter& w, const NodeId& id) {
    switch (id.ident.index()) {
        case 0: {
            uint32_t v = std::get<uint32_t>(id.ident);
            if (id.namespace_index == 0 && v <= 0xFF) {
                w.u8(0x00);
                w.u8(uint8_t(v));
            } else if (id.namespace_index <= 0xFF && v <= 0xFFFF) {
                w.u8(0x01);
                w.u8(uint8_t(id.namespace_index));
                w.u16(uint16_t(v));
            } else {
                w.u8(0x02);
                w.u16(id.namespace_index);
                w.u32(v);
            }
            break;
        }
        case 1: {
            w.u8(0x03);
            w.u16(id.namespace_index);
            const auto& s = std::get<std::string>(id.ident);
            w.i32(int32_t(s.size()));
            w.bytes(reinterpret_cast<const uint8_t*>(s.data()), s.size());
            break;
        }
        case 2: {
            w.u8(0x04);
            w.u16(id.namespace_index);
            w.bytes(std::get<Guid>(id.ident).bytes.data(), 16);
            break;
        }
        default: {
            w.u8(0x05);
            w.u16(id.namespace_index);
            const auto& b = std::get<std::vector<uint8_t>>(id.ident);
            w.i32(int32_t(b.size()));
            w.bytes(b.data(), b.size());
            break;
        }
    }
}

void enc_qualified_name(ByteWriter& w, const QualifiedName& q) {
    w.u16(q.namespace_index);
    enc_str(w, q.name);
}

void enc_localized_text(ByteWriter& w, const LocalizedText& t) {
    uint8_t mask = (t.locale ? 0x01 : 0) | (t.text ? 0x02 : 0);
    w.u8(mask);
    if (t.locale) enc_str(w, t.locale);
    if (t.text) enc_str(w, t.text);
}

// Bare scalar payload, no Variant type byte. Returns false for null.
bool enc_value_payload(ByteWriter& w, const Variant& v) {
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return false;
            } else if constexpr (std::is_same_v<T, bool>) {
                w.u8(x ? 1 : 0);
            } else if constexpr (std::is_same_v<T, int8_t>) {
                w.i8(x);
            } else if constexpr (std::is_same_v<T, uint8_t>) {
                w.u8(x);
            } else if constexpr (std::is_same_v<T, int16_t>) {
                w.i16(x);
            } else if constexpr (std::is_same_v<T, uint16_t>) {
                w.u16(x);
            } else if constexpr (std::is_same_v<T, int32_t>) {
                w.i32(x);
            } else if constexpr (std::is_same_v<T, uint32_t>) {
                w.u32(x);
            } else if constexpr (std::is_same_v<T, float>) {
                w.f32(x);
            } else if constexpr (std::is_same_v<T, double>) {
                w.f64(x);
            } else if constexpr (std::is_same_v<T, UaString>) {
                enc_str(w, x);
            } else if constexpr (std::is_same_v<T, DateTime>) {
                w.i64(x.ticks);
            } else if constexpr (std::is_same_v<T, ByteString>) {
                enc_bstr(w, x);
            } else if constexpr (std::is_same_v<T, NodeId>) {
                enc_node_id(w, x);
            } else if constexpr (std::is_same_v<T, QualifiedName>) {
                enc_qualified_name(w, x);
            } else if constexpr (std::is_same_v<T, LocalizedText>) {
                enc_localized_text(w, x);
            }
            return true;
        },
        v.value);
}

void enc_variant(ByteWriter& w, const Variant& v) {
    w.u8(v.type_id());
    enc_value_payload(w, v);
}

void enc_data_value(ByteWriter& w, const DataValue& dv) {
    uint8_t mask = (dv.value ? 0x01 : 0) | (dv.status ? 0x02 : 0) |
                   (dv.source_timestamp ? 0x04 : 0) | (dv.server_timestamp ? 0x08 : 0) |
                   (dv.source_picoseconds ? 0x10 : 0) | (dv.server_picoseconds ? 0x20 : 0);
    w.u8(mask);
    if (dv.value) enc_variant(w, *dv.value);
    if (dv.status) w.u32(*dv.status);
    if (dv.source_timestamp) w.i64(dv.source_timestamp->ticks);
    if (dv.source_picoseconds) w.u16(*dv.source_picoseconds);
    if (dv.server_timestamp) w.i64(dv.server_timestamp->ticks);
    if (dv.server_picoseconds) w.u16(*dv.server_picoseconds);
}

void enc_extension_object(ByteWriter& w, const ExtensionObject& e) {
    enc_node_id(w, e.type_id);
    if (!e.body) {
        w.u8(0);
        return;
    }
    w.u8(1);
    enc_bstr(w, e.body);
}

template <typename T, typename Fn>
void enc_array(ByteWriter& w, const std::optional<std::vector<T>>& a, Fn elem) {
    if (!a) {
        w.i32(-1);
        return;
    }
    w.i32(int32_t(a->size()));
    for (const auto& v : *a) elem(w, v);
}

// --------------------------------------------------- service struct codecs

bool dec_request_header(Dec& d, RequestHeader& h) {
    return dec_node_id(d, h.authentication_token) && d.i64(h.timestamp.ticks) &&
           d.u32(h.request_handle) && d.u32(h.return_diagnostics) &&
           dec_str(d, h.audit_entry_id) && d.u32(h.timeout_hint) &&
           dec_extension_object(d, h.additional_header);
}

void enc_request_header(ByteWriter& w, const RequestHeader& h) {
    enc_node_id(w, h.authentication_token);
    w.i64(h.timestamp.ticks);
    w.u32(h.request_handle);
    w.u32(h.return_diagnostics);
    enc_str(w, h.audit_entry_id);
    w.u32(h.timeout_hint);
    enc_extension_object(w, h.additional_header);
}

bool dec_response_header(Dec& d, ResponseHeader& h) {
    uint8_t diag;
    return d.i64(h.timestamp.ticks) && d.u32(h.request_handle) && d.u32(h.service_result) &&
           dec_diagnostic_info(d, diag) &&
           dec_array(d, h.string_table, [](Dec& dd, UaString& s) { return dec_str(dd, s); }) &&
           dec_extension_object(d, h.additional_header);
}

void enc_response_header(ByteWriter& w, const ResponseHeader& h) {
    w.i64(h.timestamp.ticks);
    w.u32(h.request_handle);
    w.u32(h.service_result);
    w.u8(0);  // empty DiagnosticInfo
    enc_array(w, h.string_table, [](ByteWriter& ww, const UaString& s) { enc_str(ww, s); });
    enc_extension_object(w, h.additional_header);
}

bool dec_application_description(Dec& d, ApplicationDescription& a) {
    return dec_str(d, a.application_uri) && dec_str(d, a.product_uri) &&
           dec_localized_text(d, a.application_name) && d.u32(a.application_type) &&
           dec_str(d, a.gateway_server_uri) && dec_str(d, a.discovery_profile_uri) &&
           dec_array(d, a.discovery_urls, [](Dec& dd, UaString& s) { return dec_str(dd, s); });
}

void enc_application_description(ByteWriter& w, const ApplicationDescription& a) {
    enc_str(w, a.application_uri);
    enc_str(w, a.product_uri);
    enc_localized_text(w, a.application_name);
    w.u32(a.application_type);
    enc_str(w, a.gateway_server_uri);
    enc_str(w, a.discovery_profile_uri);
    enc_array(w, a.discovery_urls, [](ByteWriter& ww, const UaString& s) { enc_str(ww, s); });
}

bool dec_user_token_policy(Dec& d, UserTokenPolicy& p) {
    return dec_str(d, p.policy_id) && d.u32(p.token_type) && dec_str(d, p.issued_token_type) &&
           dec_str(d, p.issuer_endpoint_url) && dec_str(d, p.security_policy_uri);
}

void enc_user_token_policy(ByteWriter& w, const UserTokenPolicy& p) {
    enc_str(w, p.policy_id);
    w.u32(p.token_type);
    enc_str(w, p.issued_token_type);
    enc_str(w, p.issuer_endpoint_url);
    enc_str(w, p.security_policy_uri);
}

bool dec_endpoint_description(Dec& d, EndpointDescription& e) {
    return dec_str(d, e.endpoint_url) && dec_application_description(d, e.server) &&
           dec_bstr(d, e.server_certificate) && d.u32(e.security_mode) &&
           dec_str(d, e.security_policy_uri) &&
           dec_array(d, e.user_identity_tokens,
                     [](Dec& dd, UserTokenPolicy& p) { return dec_user_token_policy(dd, p); }) &&
           dec_str(d, e.transport_profile_uri) && d.u8(e.security_level);
}

void enc_endpoint_description(ByteWriter& w, const EndpointDescription& e) {
    enc_str(w, e.endpoint_url);
    enc_application_description(w, e.server);
    enc_bstr(w, e.server_certificate);
    w.u32(e.security_mode);
    enc_str(w, e.security_policy_uri);
    enc_array(w, e.user_identity_tokens,
              [](ByteWriter& ww, const UserTokenPolicy& p) { enc_user_token_policy(ww, p); });
    enc_str(w, e.transport_profile_uri);
    w.u8(e.security_level);
}

bool dec_signature_data(Dec& d, SignatureData& s) {
    return dec_str(d, s.algorithm) && dec_bstr(d, s.signature);
}

void enc_signature_data(ByteWriter& w, const SignatureData& s) {
    enc_str(w, s.algorithm);
    enc_bstr(w, s.signature);
}

bool dec_signed_software_certificate(Dec& d, SignedSoftwareCertificate& c) {
    return dec_bstr(d, c.certificate_data) && dec_bstr(d, c.signature);
}

void enc_signed_software_certificate(ByteWriter& w, const SignedSoftwareCertificate& c) {
    enc_bstr(w, c.certificate_data);
    enc_bstr(w, c.signature);
}

bool dec_diag_array(Dec& d, DiagnosticInfos& out) {
    return dec_array(d, out, [](Dec& dd, uint8_t& m) { return dec_diagnostic_info(dd, m); });
}

void enc_diag_array(ByteWriter& w, const DiagnosticInfos& a) {
    enc_array(w, a, [](ByteWriter& ww, const uint8_t&) { ww.u8(0); });
}

// Per-service bodies (request/response header excluded — handled by caller).

bool dec_body(Dec& d, GetEndpointsRequest& m) {
    return dec_request_header(d, m.header) && dec_str(d, m.endpoint_url) &&
           dec_array(d, m.locale_ids, [](Dec& dd, UaString& s) { return dec_str(dd, s); }) &&
           dec_array(d, m.profile_uris, [](Dec& dd, UaString& s) { return dec_str(dd, s); });
}

void enc_body(ByteWriter& w, const GetEndpointsRequest& m) {
    enc_request_header(w, m.header);
    enc_str(w, m.endpoint_url);
    enc_array(w, m.locale_ids, [](ByteWriter& ww, const UaString& s) { enc_str(ww, s); });
    enc_array(w, m.profile_uris, [](ByteWriter& ww, const UaString& s) { enc_str(ww, s); });
}

bool dec_body(Dec& d, GetEndpointsResponse& m) {
    return dec_response_header(d, m.header) &&
           dec_array(d, m.endpoints, [](Dec& dd, EndpointDescription& e) {
               return dec_endpoint_description(dd, e);
           });
}

void enc_body(ByteWriter& w, const GetEndpointsResponse& m) {
    enc_response_header(w, m.header);
    enc_array(w, m.endpoints, [](ByteWriter& ww, const EndpointDescription& e) {
        enc_endpoint_description(ww, e);
    });
}

bool dec_body(Dec& d, OpenSecureChannelRequest& m) {
    return dec_request_header(d, m.header) && d.u32(m.client_protocol_version) &&
           d.u32(m.request_type) && d.u32(m.security_mode) && dec_bstr(d, m.client_nonce) &&
           d.u32(m.requested_lifetime);
}

void enc_body(ByteWriter& w, const OpenSecureChannelRequest& m) {
    enc_request_header(w, m.header);
    w.u32(m.client_protocol_version);
    w.u32(m.request_type);
    w.u32(m.security_mode);
    enc_bstr(w, m.client_nonce);
    w.u32(m.requested_lifetime);
}

bool dec_body(Dec& d, OpenSecureChannelResponse& m) {
    return dec_response_header(d, m.header) && d.u32(m.server_protocol_version) &&
           d.u32(m.security_token.channel_id) && d.u32(m.security_token.token_id) &&
           d.i64(m.security_token.created_at.ticks) && d.u32(m.security_token.revised_lifetime) &&
           dec_bstr(d, m.server_nonce);
}

void enc_body(ByteWriter& w, const OpenSecureChannelResponse& m) {
    enc_response_header(w, m.header);
    w.u32(m.server_protocol_version);
    w.u32(m.security_token.channel_id);
    w.u32(m.security_token.token_id);
    w.i64(m.security_token.created_at.ticks);
    w.u32(m.security_token.revised_lifetime);
    enc_bstr(w, m.server_nonce);
}

bool dec_body(Dec& d, CloseSecureChannelRequest& m) { return dec_request_header(d, m.header); }

void enc_body(ByteWriter& w, const CloseSecureChannelRequest& m) {
    enc_request_header(w, m.header);
}

bool dec_body(Dec& d, CreateSessionRequest& m) {
    return dec_request_header(d, m.header) && dec_application_description(d, m.client_description) &&
           dec_str(d, m.server_uri) && dec_str(d, m.endpoint_url) && dec_str(d, m.session_name) &&
           dec_bstr(d, m.client_nonce) && dec_bstr(d, m.client_certificate) &&
           d.f64(m.requested_session_timeout) && d.u32(m.max_response_message_size);
}

void enc_body(ByteWriter& w, const CreateSessionRequest& m) {
    enc_request_header(w, m.header);
    enc_application_description(w, m.client_description);
    enc_str(w, m.server_uri);
    enc_str(w, m.endpoint_url);
    enc_str(w, m.session_name);
    enc_bstr(w, m.client_nonce);
    enc_bstr(w, m.client_certificate);
    w.f64(m.requested_session_timeout);
    w.u32(m.max_response_message_size);
}

bool dec_body(Dec& d, CreateSessionResponse& m) {
    return dec_response_header(d, m.header) && dec_node_id(d, m.session_id) &&
           dec_node_id(d, m.authentication_token) && d.f64(m.revised_session_timeout) &&
           dec_bstr(d, m.server_nonce) && dec_bstr(d, m.server_certificate) &&
           dec_array(d, m.server_endpoints,
                     [](Dec& dd, EndpointDescription& e) { return dec_endpoint_description(dd, e); }) &&
           dec_array(d, m.server_software_certificates,
                     [](Dec& dd, SignedSoftwareCertificate& c) {
                         return dec_signed_software_certificate(dd, c);
                     }) &&
           dec_signature_data(d, m.server_signature) && d.u32(m.max_request_message_size);
}

void enc_body(ByteWriter& w, const CreateSessionResponse& m) {
    enc_response_header(w, m.header);
    enc_node_id(w, m.session_id);
    enc_node_id(w, m.authentication_token);
    w.f64(m.revised_session_timeout);
    enc_bstr(w, m.server_nonce);
    enc_bstr(w, m.server_certificate);
    enc_array(w, m.server_endpoints, [](ByteWriter& ww, const EndpointDescription& e) {
        enc_endpoint_description(ww, e);
    });
    enc_array(w, m.server_software_certificates,
              [](ByteWriter& ww, const SignedSoftwareCertificate& c) {
                  enc_signed_software_certificate(ww, c);
              });
    enc_signature_data(w, m.server_signature);
    w.u32(m.max_request_message_size);
}

bool dec_body(Dec& d, ActivateSessionRequest& m) {
    return dec_request_header(d, m.header) && dec_signature_data(d, m.client_signature) &&
           dec_array(d, m.client_software_certificates,
                     [](Dec& dd, SignedSoftwareCertificate& c) {
                         return dec_signed_software_certificate(dd, c);
                     }) &&
           dec_array(d, m.locale_ids, [](Dec& dd, UaString& s) { return dec_str(dd, s); }) &&
           dec_extension_object(d, m.user_identity_token) &&
           dec_signature_data(d, m.user_token_signature);
}

void enc_body(ByteWriter& w, const ActivateSessionRequest& m) {
    enc_request_header(w, m.header);
    enc_signature_data(w, m.client_signature);
    enc_array(w, m.client_software_certificates,
              [](ByteWriter& ww, const SignedSoftwareCertificate& c) {
                  enc_signed_software_certificate(ww, c);
              });
    enc_array(w, m.locale_ids, [](ByteWriter& ww, const UaString& s) { enc_str(ww, s); });
    enc_extension_object(w, m.user_identity_token);
    enc_signature_data(w, m.user_token_signature);
}

bool dec_body(Dec& d, ActivateSessionResponse& m) {
    return dec_response_header(d, m.header) && dec_bstr(d, m.server_nonce) &&
           dec_array(d, m.results, [](Dec& dd, uint32_t& s) { return dd.u32(s); }) &&
           dec_diag_array(d, m.diagnostic_infos);
}

void enc_body(ByteWriter& w, const ActivateSessionResponse& m) {
    enc_response_header(w, m.header);
    enc_bstr(w, m.server_nonce);
    enc_array(w, m.results, [](ByteWriter& ww, const uint32_t& s) { ww.u32(s); });
    enc_diag_array(w, m.diagnostic_infos);
}

bool dec_body(Dec& d, CloseSessionRequest& m) {
    return dec_request_header(d, m.header) && d.boolean(m.delete_subscriptions);
}

void enc_body(ByteWriter& w, const CloseSessionRequest& m) {
    enc_request_header(w, m.header);
    w.u8(m.delete_subscriptions ? 1 : 0);
}

bool dec_body(Dec& d, CloseSessionResponse& m) { return dec_response_header(d, m.header); }

void enc_body(ByteWriter& w, const CloseSessionResponse& m) { enc_response_header(w, m.header); }

bool dec_body(Dec& d, ReadRequest& m) {
    return dec_request_header(d, m.header) && d.f64(m.max_age) && d.u32(m.timestamps_to_return) &&
           dec_array(d, m.nodes_to_read, [](Dec& dd, ReadValueId& rv) {
               return dec_node_id(dd, rv.node_id) && dd.u32(rv.attribute_id) &&
                      dec_str(dd, rv.index_range) && dec_qualified_name(dd, rv.data_encoding);
           });
}

void enc_body(ByteWriter& w, const ReadRequest& m) {
    enc_request_header(w, m.header);
    w.f64(m.max_age);
    w.u32(m.timestamps_to_return);
    enc_array(w, m.nodes_to_read, [](ByteWriter& ww, const ReadValueId& rv) {
        enc_node_id(ww, rv.node_id);
        ww.u32(rv.attribute_id);
        enc_str(ww, rv.index_range);
        enc_qualified_name(ww, rv.data_encoding);
    });
}

bool dec_body(Dec& d, ReadResponse& m) {
    return dec_response_header(d, m.header) &&
           dec_array(d, m.results, [](Dec& dd, DataValue& dv) { return dec_data_value(dd, dv); }) &&
           dec_diag_array(d, m.diagnostic_infos);
}

void enc_body(ByteWriter& w, const ReadResponse& m) {
    enc_response_header(w, m.header);
    enc_array(w, m.results, [](ByteWriter& ww, const DataValue& dv) { enc_data_value(ww, dv); });
    enc_diag_array(w, m.diagnostic_infos);
}

bool dec_body(Dec& d, WriteRequest& m) {
    return dec_request_header(d, m.header) &&
           dec_array(d, m.nodes_to_write, [](Dec& dd, WriteValue& wv) {
               return dec_node_id(dd, wv.node_id) && dd.u32(wv.attribute_id) &&
                      dec_str(dd, wv.index_range) && dec_data_value(dd, wv.value);
           });
}

void enc_body(ByteWriter& w, const WriteRequest& m) {
    enc_request_header(w, m.header);
    enc_array(w, m.nodes_to_write, [](ByteWriter& ww, const WriteValue& wv) {
        enc_node_id(ww, wv.node_id);
        ww.u32(wv.attribute_id);
        enc_str(ww, wv.index_range);
        enc_data_value(ww, wv.value);
    });
}

bool dec_body(Dec& d, WriteResponse& m) {
    return dec_response_header(d, m.header) &&
           dec_array(d, m.results, [](Dec& dd, uint32_t& s) { return dd.u32(s); }) &&
           dec_diag_array(d, m.diagnostic_infos);
}

void enc_body(ByteWriter& w, const WriteResponse& m) {
    enc_response_header(w, m.header);
    enc_array(w, m.results, [](ByteWriter& ww, const uint32_t& s) { ww.u32(s); });
    enc_diag_array(w, m.diagnostic_infos);
}

bool dec_body(Dec& d, ServiceFault& m) { return dec_response_header(d, m.header); }

void enc_body(ByteWriter& w, const ServiceFault& m) { enc_response_header(w, m.header); }

uint32_t body_type_id(const ServiceBody& b) {
    switch (b.index()) {
        case 0: return msgid::GetEndpointsRequest;
        case 1: return msgid::GetEndpointsResponse;
        case 2: return msgid::OpenSecureChannelRequest;
        case 3: return msgid::OpenSecureChannelResponse;
        case 4: return msgid::CloseSecureChannelRequest;
        case 5: return msgid::CreateSessionRequest;
        case 6: return msgid::CreateSessionResponse;
        case 7: return msgid::ActivateSessionRequest;
        case 8: return msgid::ActivateSessionResponse;
        case 9: return msgid::CloseSessionRequest;
        case 10: return msgid::CloseSessionResponse;
        case 11: return msgid::ReadRequest;
        case 12: return msgid::ReadResponse;
        case 13: return msgid::WriteRequest;
        case 14: return msgid::WriteResponse;
        default: return msgid::ServiceFault;
    }
}

}  // namespace

// ------------------------------------------------------------- public API

void encode_string(ByteWriter& w, const UaString& s) { enc_str(w, s); }
void encode_byte_string(ByteWriter& w, const ByteString& b) { enc_bstr(w, b); }
void encode_node_id(ByteWriter& w, const NodeId& id) { enc_node_id(w, id); }
void encode_qualified_name(ByteWriter& w, const QualifiedName& q) { enc_qualified_name(w, q); }
void encode_localized_text(ByteWriter& w, const LocalizedText& t) { enc_localized_text(w, t); }
void encode_variant(ByteWriter& w, const Variant& v) { enc_variant(w, v); }
void encode_data_value(ByteWriter& w, const DataValue& dv) { enc_data_value(w, dv); }
void encode_extension_object(ByteWriter& w, const ExtensionObject& e) {
    enc_extension_object(w, e);
}

bool encode_value(ByteWriter& w, const Variant& v) { return enc_value_payload(w, v); }

std::vector<uint8_t> encode_variant_bytes(const Variant& v) {
    ByteWriter w;
    enc_variant(w, v);
    return w.take();
}

namespace {

template <typename T, typename Fn>
Decoded<T> run_decode(std::span<const uint8_t> b, const DecodeLimits& lim, Fn fn) {
    Dec d(b, lim);
    Decoded<T> out;
    fn(d, out.value);
    out.error = d.result();
    out.consumed = d.r.pos();
    return out;
}

}  // namespace

Decoded<UaString> decode_string(std::span<const uint8_t> b, const DecodeLimits& lim) {
    return run_decode<UaString>(b, lim, [](Dec& d, UaString& v) { return dec_str(d, v); });
}

Decoded<NodeId> decode_node_id(std::span<const uint8_t> b, const DecodeLimits& lim) {
    return run_decode<NodeId>(b, lim, [](Dec& d, NodeId& v) { return dec_node_id(d, v); });
}

Decoded<QualifiedName> decode_qualified_name(std::span<const uint8_t> b,
                                             const DecodeLimits& lim) {
    return run_decode<QualifiedName>(
        b, lim, [](Dec& d, QualifiedName& v) { return dec_qualified_name(d, v); });
}

Decoded<LocalizedText> decode_localized_text(std::span<const uint8_t> b,
                                             const DecodeLimits& lim) {
    return run_decode<LocalizedText>(
        b, lim, [](Dec& d, LocalizedText& v) { return dec_localized_text(d, v); });
}

Decoded<Variant> decode_variant(std::span<const uint8_t> b, const DecodeLimits& lim) {
    return run_decode<Variant>(b, lim, [](Dec& d, Variant& v) { return dec_variant(d, v); });
}

Decoded<DataValue> decode_data_value(std::span<const uint8_t> b, const DecodeLimits& lim) {
    return run_decode<DataValue>(b, lim,
                                 [](Dec& d, DataValue& v) { return dec_data_value(d, v); });
}

Decoded<Variant> decode_value(std::span<const uint8_t> b, BuiltinType expected,
                              const DecodeLimits& lim) {
    return run_decode<Variant>(b, lim, [&](Dec& d, Variant& v) {
        switch (expected) {
            case BuiltinType::Boolean: {
                bool x;
                if (!d.boolean(x)) return false;
                v.value = x;
                return true;
            }
            case BuiltinType::SByte: {
                uint8_t x;
                if (!d.u8(x)) return false;
                v.value = int8_t(x);
                return true;
            }
            case BuiltinType::Byte: {
                uint8_t x;
                if (!d.u8(x)) return false;
                v.value = x;
                return true;
            }
            case BuiltinType::Int16: {
                uint16_t x;
                if (!d.u16(x)) return false;
                v.value = int16_t(x);
                return true;
            }
            case BuiltinType::UInt16: {
                uint16_t x;
                if (!d.u16(x)) return false;
                v.value = x;
                return true;
            }
            case BuiltinType::Int32: {
                int32_t x;
                if (!d.i32(x)) return false;
                v.value = x;
                return true;
            }
            case BuiltinType::UInt32: {
                uint32_t x;
                if (!d.u32(x)) return false;
                v.value = x;
                return true;
            }
            case BuiltinType::Float: {
                float x;
                if (!d.f32(x)) return false;
                v.value = x;
                return true;
            }
            case BuiltinType::Double: {
                double x;
                if (!d.f64(x)) return false;
                v.value = x;
                return true;
            }
            case BuiltinType::String: {
                UaString s;
                if (!dec_str(d, s)) return false;
                v.value = std::move(s);
                return true;
            }
            case BuiltinType::DateTime: {
                int64_t t;
                if (!d.i64(t)) return false;
                v.value = DateTime{t};
                return true;
            }
            case BuiltinType::ByteString: {
                ByteString bs;
                if (!dec_bstr(d, bs)) return false;
                v.value = std::move(bs);
                return true;
            }
            case BuiltinType::NodeIdType: {
                NodeId id;
                if (!dec_node_id(d, id)) return false;
                v.value = std::move(id);
                return true;
            }
            case BuiltinType::QualifiedName: {
                QualifiedName q;
                if (!dec_qualified_name(d, q)) return false;
                v.value = std::move(q);
                return true;
            }
            case BuiltinType::LocalizedText: {
                LocalizedText t;
                if (!dec_localized_text(d, t)) return false;
                v.value = std::move(t);
                return true;
            }
            case BuiltinType::Variant:
                return dec_variant(d, v);
            default:
                return d.fail(DecodeError::UnsupportedType);
        }
    });
}

std::vector<uint8_t> encode_service(const ServiceMessage& m) {
    ByteWriter w;
    enc_node_id(w, NodeId::numeric(0, body_type_id(m.body)));
    std::visit([&](const auto& b) { enc_body(w, b); }, m.body);
    return w.take();
}

Decoded<ServiceMessage> decode_service(std::span<const uint8_t> b, const DecodeLimits& lim) {
    return run_decode<ServiceMessage>(b, lim, [](Dec& d, ServiceMessage& m) {
        NodeId tid;
        if (!dec_node_id(d, tid)) return false;
        if (!tid.is_numeric() || tid.namespace_index != 0)
            return d.fail(DecodeError::UnsupportedType);
        m.type_id = tid.numeric_id();
        switch (m.type_id) {
            case msgid::GetEndpointsRequest:
                return dec_body(d, m.body.emplace<GetEndpointsRequest>());
            case msgid::GetEndpointsResponse:
                return dec_body(d, m.body.emplace<GetEndpointsResponse>());
            case msgid::OpenSecureChannelRequest:
                return dec_body(d, m.body.emplace<OpenSecureChannelRequest>());
            case msgid::OpenSecureChannelResponse:
                return dec_body(d, m.body.emplace<OpenSecureChannelResponse>());
            case msgid::CloseSecureChannelRequest:
                return dec_body(d, m.body.emplace<CloseSecureChannelRequest>());
            case msgid::CreateSessionRequest:
                return dec_body(d, m.body.emplace<CreateSessionRequest>());
            case msgid::CreateSessionResponse:
                return dec_body(d, m.body.emplace<CreateSessionResponse>());
            case msgid::ActivateSessionRequest:
                return dec_body(d, m.body.emplace<ActivateSessionRequest>());
            case msgid::ActivateSessionResponse:
                return dec_body(d, m.body.emplace<ActivateSessionResponse>());
            case msgid::CloseSessionRequest:
                return dec_body(d, m.body.emplace<CloseSessionRequest>());
            case msgid::CloseSessionResponse:
                return dec_body(d, m.body.emplace<CloseSessionResponse>());
            case msgid::ReadRequest:
                return dec_body(d, m.body.emplace<ReadRequest>());
            case msgid::ReadResponse:
                return dec_body(d, m.body.emplace<ReadResponse>());
            case msgid::WriteRequest:
                return dec_body(d, m.body.emplace<WriteRequest>());
            case msgid::WriteResponse:
                return dec_body(d, m.body.emplace<WriteResponse>());
            case msgid::ServiceFault:
                return dec_body(d, m.body.emplace<ServiceFault>());
            default:
                return d.fail(DecodeError::UnsupportedType);
        }
    });
}

std::vector<uint8_t> encode_service_fault(DateTime timestamp, uint32_t request_handle,
                                          uint32_t service_result) {
    ServiceFault f;
    f.header.timestamp = timestamp;
    f.header.request_handle = request_handle;
    f.header.service_result = service_result;
    return encode_service(ServiceMessage{msgid::ServiceFault, f});
}

std::optional<uint32_t> peek_type_id(std::span<const uint8_t> service_message) {
    const auto tid = decode_node_id(service_message);
    if (!tid.ok() || !tid.value.is_numeric() || tid.value.namespace_index != 0)
        return std::nullopt;
    return tid.value.numeric_id();
}

std::optional<uint32_t> peek_request_handle(std::span<const uint8_t> service_message) {
    const auto tid = decode_node_id(service_message);
    if (!tid.ok()) return std::nullopt;
    const auto auth = decode_node_id(service_message.subspan(tid.consumed));
    if (!auth.ok()) return std::nullopt;
    ByteReader r(service_message.subspan(tid.consumed + auth.consumed));
    r.skip(8);  // RequestHeader timestamp
    const uint32_t handle = r.u32();
    if (r.truncated()) return std::nullopt;
    return handle;
}

ServiceMessage mask_volatile_fields(ServiceMessage m) {
    std::visit(
        [](auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (requires { b.header.service_result; }) {
                b.header.timestamp = DateTime{};
                b.header.request_handle = 0;
            }
            if constexpr (std::is_same_v<T, OpenSecureChannelResponse>) {
                b.security_token.created_at = DateTime{};
                if (b.server_nonce) b.server_nonce->clear();
            }
            if constexpr (std::is_same_v<T, CreateSessionResponse>) {
                if (b.server_nonce) b.server_nonce->clear();
            }
            if constexpr (std::is_same_v<T, ActivateSessionResponse>) {
                if (b.server_nonce) b.server_nonce->clear();
            }
            if constexpr (std::is_same_v<T, ReadResponse>) {
                if (b.results) {
                    for (auto& dv : *b.results) {
                        if (dv.source_timestamp) *dv.source_timestamp = DateTime{};
                        if (dv.server_timestamp) *dv.server_timestamp = DateTime{};
                        if (dv.source_picoseconds) *dv.source_picoseconds = 0;
                        if (dv.server_picoseconds) *dv.server_picoseconds = 0;
                    }
                }
            }
        },
        m.body);
    return m;
}

}  // namespace nanoua
