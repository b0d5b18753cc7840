#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

// OPC UA built-in value types, restricted to what the Nano profile's
// Read/Write services need. Null and empty strings/bytestrings are distinct
// on the wire (length -1 vs 0), hence the optional<> wrappers.
namespace nanoua {

using UaString = std::optional<std::string>;
using ByteString = std::optional<std::vector<uint8_t>>;

// Wire type ids of the OPC UA built-in types (the Variant type byte and the
// DataType NodeId identifier share this numbering).
enum class BuiltinType : uint8_t {
    Boolean = 1,
    SByte = 2,
    Byte = 3,
    Int16 = 4,
    UInt16 = 5,
    Int32 = 6,
    UInt32 = 7,
    Int64 = 8,
    UInt64 = 9,
    Float = 10,
    Double = 11,
    String = 12,
    DateTime = 13,
    Guid = 14,
    ByteString = 15,
    XmlElement = 16,
    NodeIdType = 17,
    StatusCode = 19,
    QualifiedName = 20,
    LocalizedText = 21,
    Variant = 24,
};

const char* builtin_type_name(BuiltinType t);

struct Guid {
    // Stored exactly as the 16 wire bytes (Data1..Data3 already little-endian).
    std::array<uint8_t, 16> bytes{};
    bool operator==(const Guid&) const = default;
};

struct DateTime {
    int64_t ticks = 0;  // 100 ns intervals since 1601-01-01 UTC
    bool operator==(const DateTime&) const = default;

    static DateTime from_unix_ms(int64_t ms) {
        // 11644473600 s between 1601-01-01 and 1970-01-01.
        return DateTime{(ms + 11644473600000LL) * 10000};
    }
};

struct NodeId {
    uint16_t namespace_index = 0;
    // Alternative index doubles as the identifier-form rank used for ordering:
    // numeric < string < guid < opaque.
    std::variant<uint32_t, std::string, Guid, std::vector<uint8_t>> ident = uint32_t{0};

    static NodeId numeric(uint16_t ns, uint32_t id) { return {ns, id}; }
    static NodeId string(uint16_t ns, std::string s) { return {ns, std::move(s)}; }
    static NodeId opaque(uint16_t ns, std::vector<uint8_t> b) { return {ns, std::move(b)}; }

    bool is_numeric() const { return ident.index() == 0; }
    uint32_t numeric_id() const { return std::get<uint32_t>(ident); }
    bool is_null() const { return namespace_index == 0 && is_numeric() && numeric_id() == 0; }

    bool operator==(const NodeId&) const = default;
};

// Total order over (namespace, identifier form, identifier); the namespace
// image index is sorted by it and the VM's CMP.nid implements the same order.
int compare(const NodeId& a, const NodeId& b);

struct QualifiedName {
    uint16_t namespace_index = 0;
    UaString name;
    bool operator==(const QualifiedName&) const = default;
};

struct LocalizedText {
    UaString locale;
    UaString text;
    bool operator==(const LocalizedText&) const = default;
};

struct Variant {
    // Alternative order is fixed; type_id() maps it to the wire type byte.
    using Value = std::variant<std::monostate, bool, int8_t, uint8_t, int16_t, uint16_t,
                               int32_t, uint32_t, float, double, UaString, DateTime,
                               ByteString, NodeId, QualifiedName, LocalizedText>;
    Value value;

    Variant() = default;
    template <typename T>
    explicit Variant(T v) : value(std::move(v)) {}

    bool is_null() const { return value.index() == 0; }
    uint8_t type_id() const;  // wire type byte; 0 for null
    bool operator==(const Variant&) const = default;
};

struct DataValue {
    std::optional<Variant> value;
    std::optional<uint32_t> status;  // absent encodes as Good
    std::optional<DateTime> source_timestamp;
    std::optional<DateTime> server_timestamp;
    std::optional<uint16_t> source_picoseconds;
    std::optional<uint16_t> server_picoseconds;
    bool operator==(const DataValue&) const = default;
};

}  // namespace nanoua
