#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nanoua/types.hpp"
#include "nanoua/vm.hpp"

// Compiled namespace images: the address space the server can actually hold.
//
// Image layout (little-endian):
//   "NSIM" magic, u16 version, u32 nodeCount, u32 indexOffset, u32 totalSize
//   node records, sorted by node id, each:
//     NodeId (standard binary, shortest form)
//     u8 nodeClass (1 Object, 2 Variable, 4 Method, ... as in OPC UA)
//     QualifiedName browseName
//     LocalizedText displayName
//     variables additionally carry:
//       NodeId dataType, u8 accessLevel, u16 slotCapacity, u16 valueLength,
//       then slotCapacity bytes holding the current value as a full Variant
//       encoding in the first valueLength bytes
//   index: nodeCount x u32 record offsets in node id order
//
// Attribute reads slice these wire-form bytes straight into replies; only the
// offline compiler goes through the codec.
namespace nanoua::ns {

constexpr uint32_t kMaxImageBytes = 36864;  // hard budget for the whole image
constexpr uint32_t kHeaderBytes = 18;

// Attribute ids served by the image.
namespace attr {
constexpr uint32_t NodeId = 1;
constexpr uint32_t BrowseName = 3;
constexpr uint32_t DisplayName = 4;
constexpr uint32_t Value = 13;
constexpr uint32_t DataType = 14;
constexpr uint32_t AccessLevel = 17;
constexpr uint32_t MaxKnown = 27;  // highest id defined by the standard set
}  // namespace attr

// "i=84", "ns=1;i=1001", "ns=1;s=Flow" (numeric and string forms).
std::optional<nanoua::NodeId> parse_node_id_text(std::string_view text);
std::string node_id_to_text(const nanoua::NodeId& id);

// ---------------------------------------------------------------- compiler

struct CompileError {
    std::string file;
    int line;
    std::string message;
};

struct SizeReport {
    uint32_t node_count = 0;
    uint32_t header_bytes = 0;
    uint32_t record_bytes = 0;  // records excluding value slots
    uint32_t value_bytes = 0;   // value slot capacities
    uint32_t index_bytes = 0;
    uint32_t total_bytes = 0;   // == header + records + values + index
};

struct CompileResult {
    std::vector<uint8_t> image;  // empty when errors present
    std::vector<CompileError> errors;
    SizeReport report;
    bool ok() const { return errors.empty(); }
};

// Model source: '#' comments; directives
//   include <relative-path>
//   node <nodeid> class=<Object|Variable|...> browse=<ns>:<name>
//        display="<text>" [datatype=<nodeid>] [access=r|rw]
//        [value=<type>:<literal>] [capacity=<bytes>]
// Value literals: bool,i8,u8,i16,u16,i32,u32,f32,f64,str,dt (dt = raw ticks).
using IncludeResolver =
    std::function<std::optional<std::string>(const std::string& name)>;

CompileResult compile_model(std::string_view source, const std::string& source_name,
                            const IncludeResolver& resolve = {});
CompileResult compile_model_file(const std::string& path);

// ------------------------------------------------------------------- image

class NamespaceImage {
public:
    struct OpenResult;
    // Takes ownership of the bytes; they are mutated in place by writes.
    static OpenResult open(std::vector<uint8_t> bytes);

    struct LookupResult {
        bool found = false;
        uint32_t record_offset = 0;
        uint32_t probes = 0;       // index entries examined
        uint32_t bytes_touched = 0;  // image bytes read while searching
    };
    // query is a wire-encoded NodeId in any of the numeric spellings.
    LookupResult lookup(std::span<const uint8_t> query_node_id) const;

    struct ReadReply {
        uint32_t status = 0;
        std::vector<uint8_t> variant;  // full variant encoding when status is Good
        uint32_t bytes_touched = 0;
    };
    ReadReply read_attribute(std::span<const uint8_t> node_id, uint32_t attribute_id) const;

    struct WriteReply {
        uint32_t status = 0;
        uint32_t bytes_touched = 0;
    };
    // data_value holds a wire-encoded DataValue; only value-only writes (mask
    // 0x01) are accepted, matching the declared data type and slot capacity.
    WriteReply write_value(std::span<const uint8_t> node_id, std::span<const uint8_t> data_value);

    // Structural check of the whole image: header fields, record walkability,
    // index order, offsets. Returns an empty string when sound.
    std::string verify() const;

    uint32_t node_count() const { return count_; }
    uint32_t size() const { return uint32_t(bytes_.size()); }
    std::span<const uint8_t> bytes() const { return bytes_; }
    SizeReport report() const;

    // In node-id order; offsets into the image.
    std::vector<uint32_t> record_offsets() const;

private:
    std::vector<uint8_t> bytes_;
    uint32_t count_ = 0;
    uint32_t index_offset_ = 0;
};

struct NamespaceImage::OpenResult {
    std::optional<NamespaceImage> image;
    std::string error;
    bool ok() const { return error.empty(); }
};

// ------------------------------------------------------------------- port

// The VM-facing namespace interface, bound as stream s2. Programs write a
// query, then read the reply:
//   0x01 <NodeId> <u32 attributeId>      -> u32 status [+ Variant when Good]
//   0x02 <NodeId> <DataValue>            -> u32 status
// Writing after a reply has been fully consumed starts the next query.
class NamespacePort final : public vm::Stream {
public:
    explicit NamespacePort(NamespaceImage& image) : img_(image) {}

    std::span<const uint8_t> peek() const override;
    void consume(size_t n) override;
    bool write(std::span<const uint8_t> b) override;
    size_t read_pos() const override { return reply_pos_; }
    size_t write_pos() const override { return query_.size(); }
    bool seek_read(size_t pos) override;
    bool seek_write(size_t pos) override;

    // Image bytes touched by lookups since the last call (for the memory
    // accounting in the engine; query/reply traffic is already visible as
    // stream bytes).
    uint64_t take_image_traffic();

    void reset();

private:
    void try_execute();

    NamespaceImage& img_;
    std::vector<uint8_t> query_;
    std::vector<uint8_t> reply_;
    size_t reply_pos_ = 0;
    bool replied_ = false;
    uint64_t image_traffic_ = 0;
};

}  // namespace nanoua::ns
