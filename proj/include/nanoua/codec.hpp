#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "nanoua/bytes.hpp"
#include "nanoua/types.hpp"

// OPC UA binary encoding of the built-in types above plus the service bodies
// of the Nano profile subset (GetEndpoints, Create/Activate/CloseSession,
// Read, Write, and the secure-channel services that ride in OPN/CLO chunks).
// Everything is little-endian; strings carry an int32 length with -1 = null.
namespace nanoua {

enum class DecodeError : uint8_t {
    None = 0,
    Truncated,        // input ends before declared content
    Malformed,        // unknown encoding byte / negative length / reserved bits
    LimitExceeded,    // declared string or array length over the configured cap
    UnsupportedType,  // legal OPC UA construct outside the Nano subset
};

const char* decode_error_name(DecodeError e);

struct DecodeLimits {
    uint32_t max_string_bytes = 4096;
    uint32_t max_array_elems = 1024;
};

template <typename T>
struct Decoded {
    T value{};
    size_t consumed = 0;
    DecodeError error = DecodeError::None;
    bool ok() const { return error == DecodeError::None; }
};

// ---------------------------------------------------------------- services

// NodeIds of the binary-encoded service messages (ns=0 numeric ids).
namespace msgid {
constexpr uint32_t ServiceFault = 397;
constexpr uint32_t GetEndpointsRequest = 428;
constexpr uint32_t GetEndpointsResponse = 431;
constexpr uint32_t OpenSecureChannelRequest = 446;
constexpr uint32_t OpenSecureChannelResponse = 449;
constexpr uint32_t CloseSecureChannelRequest = 452;
constexpr uint32_t CreateSessionRequest = 461;
constexpr uint32_t CreateSessionResponse = 464;
constexpr uint32_t ActivateSessionRequest = 467;
constexpr uint32_t ActivateSessionResponse = 470;
constexpr uint32_t CloseSessionRequest = 473;
constexpr uint32_t CloseSessionResponse = 476;
constexpr uint32_t ReadRequest = 631;
constexpr uint32_t ReadResponse = 634;
constexpr uint32_t WriteRequest = 673;
constexpr uint32_t WriteResponse = 676;
constexpr uint32_t AnonymousIdentityToken = 321;
}  // namespace msgid

// Bodyless ExtensionObject unless a ByteString body is present (encoding 1).
// XML bodies are outside the Nano subset and rejected on decode.
struct ExtensionObject {
    NodeId type_id;
    ByteString body;  // nullopt encodes as "no body" (encoding byte 0)
    bool operator==(const ExtensionObject&) const = default;
};

// DiagnosticInfo arrays: this server only ever emits empty entries (mask 0),
// and only mask-0 entries decode; each element is the mask byte.
using DiagnosticInfos = std::optional<std::vector<uint8_t>>;

struct RequestHeader {
    NodeId authentication_token;
    DateTime timestamp;
    uint32_t request_handle = 0;
    uint32_t return_diagnostics = 0;
    UaString audit_entry_id;
    uint32_t timeout_hint = 0;
    ExtensionObject additional_header;
    bool operator==(const RequestHeader&) const = default;
};

struct ResponseHeader {
    DateTime timestamp;
    uint32_t request_handle = 0;
    uint32_t service_result = 0;
    // serviceDiagnostics is always the empty DiagnosticInfo (mask 0)
    std::optional<std::vector<UaString>> string_table;
    ExtensionObject additional_header;
    bool operator==(const ResponseHeader&) const = default;
};

struct ApplicationDescription {
    UaString application_uri;
    UaString product_uri;
    LocalizedText application_name;
    uint32_t application_type = 0;  // 0 = Server
    UaString gateway_server_uri;
    UaString discovery_profile_uri;
    std::optional<std::vector<UaString>> discovery_urls;
    bool operator==(const ApplicationDescription&) const = default;
};

struct UserTokenPolicy {
    UaString policy_id;
    uint32_t token_type = 0;  // 0 = Anonymous
    UaString issued_token_type;
    UaString issuer_endpoint_url;
    UaString security_policy_uri;
    bool operator==(const UserTokenPolicy&) const = default;
};

struct EndpointDescription {
    UaString endpoint_url;
    ApplicationDescription server;
    ByteString server_certificate;
    uint32_t security_mode = 1;  // 1 = None
    UaString security_policy_uri;
    std::optional<std::vector<UserTokenPolicy>> user_identity_tokens;
    UaString transport_profile_uri;
    uint8_t security_level = 0;
    bool operator==(const EndpointDescription&) const = default;
};

struct SignatureData {
    UaString algorithm;
    ByteString signature;
    bool operator==(const SignatureData&) const = default;
};

struct SignedSoftwareCertificate {
    ByteString certificate_data;
    ByteString signature;
    bool operator==(const SignedSoftwareCertificate&) const = default;
};

struct ChannelSecurityToken {
    uint32_t channel_id = 0;
    uint32_t token_id = 0;
    DateTime created_at;
    uint32_t revised_lifetime = 0;
    bool operator==(const ChannelSecurityToken&) const = default;
};

struct GetEndpointsRequest {
    RequestHeader header;
    UaString endpoint_url;
    std::optional<std::vector<UaString>> locale_ids;
    std::optional<std::vector<UaString>> profile_uris;
    bool operator==(const GetEndpointsRequest&) const = default;
};

struct GetEndpointsResponse {
    ResponseHeader header;
    std::optional<std::vector<EndpointDescription>> endpoints;
    bool operator==(const GetEndpointsResponse&) const = default;
};

struct OpenSecureChannelRequest {
    RequestHeader header;
    uint32_t client_protocol_version = 0;
    uint32_t request_type = 0;  // 0 = Issue, 1 = Renew
    uint32_t security_mode = 1;
    ByteString client_nonce;
    uint32_t requested_lifetime = 0;
    bool operator==(const OpenSecureChannelRequest&) const = default;
};

struct OpenSecureChannelResponse {
    ResponseHeader header;
    uint32_t server_protocol_version = 0;
    ChannelSecurityToken security_token;
    ByteString server_nonce;
    bool operator==(const OpenSecureChannelResponse&) const = default;
};

struct CloseSecureChannelRequest {
    RequestHeader header;
    bool operator==(const CloseSecureChannelRequest&) const = default;
};

struct CreateSessionRequest {
    RequestHeader header;
    ApplicationDescription client_description;
    UaString server_uri;
    UaString endpoint_url;
    UaString session_name;
    ByteString client_nonce;
    ByteString client_certificate;
    double requested_session_timeout = 0;
    uint32_t max_response_message_size = 0;
    bool operator==(const CreateSessionRequest&) const = default;
};

struct CreateSessionResponse {
    ResponseHeader header;
    NodeId session_id;
    NodeId authentication_token;
    double revised_session_timeout = 0;
    ByteString server_nonce;
    ByteString server_certificate;
    std::optional<std::vector<EndpointDescription>> server_endpoints;
    std::optional<std::vector<SignedSoftwareCertificate>> server_software_certificates;
    SignatureData server_signature;
    uint32_t max_request_message_size = 0;
    bool operator==(const CreateSessionResponse&) const = default;
};

struct ActivateSessionRequest {
    RequestHeader header;
    SignatureData client_signature;
    std::optional<std::vector<SignedSoftwareCertificate>> client_software_certificates;
    std::optional<std::vector<UaString>> locale_ids;
    ExtensionObject user_identity_token;
    SignatureData user_token_signature;
    bool operator==(const ActivateSessionRequest&) const = default;
};

struct ActivateSessionResponse {
    ResponseHeader header;
    ByteString server_nonce;
    std::optional<std::vector<uint32_t>> results;
    DiagnosticInfos diagnostic_infos;
    bool operator==(const ActivateSessionResponse&) const = default;
};

struct CloseSessionRequest {
    RequestHeader header;
    bool delete_subscriptions = false;
    bool operator==(const CloseSessionRequest&) const = default;
};

struct CloseSessionResponse {
    ResponseHeader header;
    bool operator==(const CloseSessionResponse&) const = default;
};

struct ReadValueId {
    NodeId node_id;
    uint32_t attribute_id = 0;
    UaString index_range;
    QualifiedName data_encoding;
    bool operator==(const ReadValueId&) const = default;
};

struct ReadRequest {
    RequestHeader header;
    double max_age = 0;
    uint32_t timestamps_to_return = 0;
    std::optional<std::vector<ReadValueId>> nodes_to_read;
    bool operator==(const ReadRequest&) const = default;
};

struct ReadResponse {
    ResponseHeader header;
    std::optional<std::vector<DataValue>> results;
    DiagnosticInfos diagnostic_infos;
    bool operator==(const ReadResponse&) const = default;
};

struct WriteValue {
    NodeId node_id;
    uint32_t attribute_id = 0;
    UaString index_range;
    DataValue value;
    bool operator==(const WriteValue&) const = default;
};

struct WriteRequest {
    RequestHeader header;
    std::optional<std::vector<WriteValue>> nodes_to_write;
    bool operator==(const WriteRequest&) const = default;
};

struct WriteResponse {
    ResponseHeader header;
    std::optional<std::vector<uint32_t>> results;
    DiagnosticInfos diagnostic_infos;
    bool operator==(const WriteResponse&) const = default;
};

struct ServiceFault {
    ResponseHeader header;
    bool operator==(const ServiceFault&) const = default;
};

using ServiceBody =
    std::variant<GetEndpointsRequest, GetEndpointsResponse, OpenSecureChannelRequest,
                 OpenSecureChannelResponse, CloseSecureChannelRequest, CreateSessionRequest,
                 CreateSessionResponse, ActivateSessionRequest, ActivateSessionResponse,
                 CloseSessionRequest, CloseSessionResponse, ReadRequest, ReadResponse,
                 WriteRequest, WriteResponse, ServiceFault>;

struct ServiceMessage {
    uint32_t type_id = 0;  // ns=0 numeric id of the DefaultBinary encoding node
    ServiceBody body;
    bool operator==(const ServiceMessage&) const = default;
};

// ------------------------------------------------------------- value layer

void encode_string(ByteWriter& w, const UaString& s);
void encode_byte_string(ByteWriter& w, const ByteString& b);
void encode_node_id(ByteWriter& w, const NodeId& id);  // always shortest legal form
void encode_qualified_name(ByteWriter& w, const QualifiedName& q);
void encode_localized_text(ByteWriter& w, const LocalizedText& t);
void encode_variant(ByteWriter& w, const Variant& v);
void encode_data_value(ByteWriter& w, const DataValue& dv);
void encode_extension_object(ByteWriter& w, const ExtensionObject& e);

Decoded<UaString> decode_string(std::span<const uint8_t> b, const DecodeLimits& lim = {});
Decoded<NodeId> decode_node_id(std::span<const uint8_t> b, const DecodeLimits& lim = {});
Decoded<QualifiedName> decode_qualified_name(std::span<const uint8_t> b,
                                             const DecodeLimits& lim = {});
Decoded<LocalizedText> decode_localized_text(std::span<const uint8_t> b,
                                             const DecodeLimits& lim = {});
Decoded<Variant> decode_variant(std::span<const uint8_t> b, const DecodeLimits& lim = {});
Decoded<DataValue> decode_data_value(std::span<const uint8_t> b, const DecodeLimits& lim = {});

// Generic single-value entry points keyed by built-in type id. encode_value
// returns nothing for types outside the subset (UnsupportedType is the only
// encode error and is reported by the bool result).
bool encode_value(ByteWriter& w, const Variant& v);
std::vector<uint8_t> encode_variant_bytes(const Variant& v);

// Decode one value of the given expected type into a Variant wrapper.
Decoded<Variant> decode_value(std::span<const uint8_t> b, BuiltinType expected,
                              const DecodeLimits& lim = {});

// ----------------------------------------------------------- message layer

// Full service message: NodeId(type id) + header + body, as carried in a MSG
// (or OPN/CLO) chunk body.
std::vector<uint8_t> encode_service(const ServiceMessage& m);
Decoded<ServiceMessage> decode_service(std::span<const uint8_t> b, const DecodeLimits& lim = {});

// Complete ServiceFault message for a request that could not be served.
std::vector<uint8_t> encode_service_fault(DateTime timestamp, uint32_t request_handle,
                                          uint32_t service_result);

// Structural peeks for routing and fault composition when a full decode is
// either impossible (truncated request) or someone else's job (the VM):
// the leading type-id NodeId, and the requestHandle sitting behind it in the
// RequestHeader. Both return nullopt on malformed prefixes.
std::optional<uint32_t> peek_type_id(std::span<const uint8_t> service_message);
std::optional<uint32_t> peek_request_handle(std::span<const uint8_t> service_message);

// Replace fields that legitimately differ between runs (response timestamps,
// echoed request handles, server nonces) with fixed placeholders so that
// recorded and replayed responses compare equal field-wise.
ServiceMessage mask_volatile_fields(ServiceMessage m);

}  // namespace nanoua
