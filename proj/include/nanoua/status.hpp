#pragma once

#include <cstdint>

// OPC UA status codes (top 16 bits of the 32-bit code; low bits are flags we
// never set). Only the codes this server can actually produce or must
// recognize are listed.
namespace nanoua::status {

constexpr uint32_t Good = 0x00000000;

constexpr uint32_t BadUnexpectedError = 0x80010000;
constexpr uint32_t BadInternalError = 0x80020000;
constexpr uint32_t BadCommunicationError = 0x80050000;
constexpr uint32_t BadDecodingError = 0x80070000;
constexpr uint32_t BadEncodingLimitsExceeded = 0x80080000;
constexpr uint32_t BadTimeout = 0x800A0000;
constexpr uint32_t BadServiceUnsupported = 0x800B0000;
constexpr uint32_t BadNothingToDo = 0x800F0000;
constexpr uint32_t BadTooManyOperations = 0x80100000;
constexpr uint32_t BadIdentityTokenInvalid = 0x80200000;
constexpr uint32_t BadIdentityTokenRejected = 0x80210000;
constexpr uint32_t BadSessionIdInvalid = 0x80250000;
constexpr uint32_t BadSessionClosed = 0x80260000;
constexpr uint32_t BadSessionNotActivated = 0x80270000;
constexpr uint32_t BadNodeIdInvalid = 0x80330000;
constexpr uint32_t BadNodeIdUnknown = 0x80340000;
constexpr uint32_t BadAttributeIdInvalid = 0x80350000;
constexpr uint32_t BadIndexRangeInvalid = 0x80360000;
constexpr uint32_t BadIndexRangeNoData = 0x80370000;
constexpr uint32_t BadNotReadable = 0x803A0000;
constexpr uint32_t BadNotWritable = 0x803B0000;
constexpr uint32_t BadOutOfRange = 0x803C0000;
constexpr uint32_t BadTimestampsToReturnInvalid = 0x802B0000;
constexpr uint32_t BadMaxAgeInvalid = 0x80700000;
constexpr uint32_t BadSecurityModeRejected = 0x80540000;
constexpr uint32_t BadSecurityPolicyRejected = 0x80550000;
constexpr uint32_t BadTooManySessions = 0x80560000;
constexpr uint32_t BadTcpServerTooBusy = 0x807D0000;
constexpr uint32_t BadTcpMessageTypeInvalid = 0x807E0000;
constexpr uint32_t BadTcpSecureChannelUnknown = 0x807F0000;
constexpr uint32_t BadTcpMessageTooLarge = 0x80800000;
constexpr uint32_t BadTcpInternalError = 0x80820000;
constexpr uint32_t BadTcpEndpointUrlInvalid = 0x80830000;
constexpr uint32_t BadSequenceNumberInvalid = 0x80880000;
constexpr uint32_t BadWriteNotSupported = 0x80730000;
constexpr uint32_t BadTypeMismatch = 0x80740000;
constexpr uint32_t BadRequestTooLarge = 0x80B80000;
constexpr uint32_t BadResponseTooLarge = 0x80B90000;
constexpr uint32_t BadSecureChannelIdInvalid = 0x80220000;
constexpr uint32_t BadSecureChannelClosed = 0x80860000;
constexpr uint32_t BadSecureChannelTokenUnknown = 0x80870000;
constexpr uint32_t BadRequestTypeInvalid = 0x80530000;
constexpr uint32_t BadProtocolVersionUnsupported = 0x80BE0000;

constexpr bool is_bad(uint32_t code) { return (code & 0x80000000u) != 0; }
constexpr bool is_good(uint32_t code) { return (code & 0xC0000000u) == 0; }

// Symbolic name for logs and fault reasons; unknown codes get a stable hex form.
const char* name(uint32_t code);

}  // namespace nanoua::status
