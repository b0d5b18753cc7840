#include "nanoua/status.hpp"

#include <cstdio>

namespace nanoua::status {

const char* name(uint32_t code) {
    switch (code) {
        case Good: return "Good";
        case BadUnexpectedError: return "BadUnexpectedError";
        case BadInternalError: return "BadInternalError";
        case BadCommunicationError: return "BadCommunicationError";
        case BadDecodingError: return "BadDecodingError";
        case BadEncodingLimitsExceeded: return "BadEncodingLimitsExceeded";
        case BadTimeout: return "BadTimeout";
        case BadServiceUnsupported: return "BadServiceUnsupported";
        case BadNothingToDo: return "BadNothingToDo";
        case BadTooManyOperations: return "BadTooManyOperations";
        case BadIdentityTokenInvalid: return "BadIdentityTokenInvalid";
        case BadIdentityTokenRejected: return "BadIdentityTokenRejected";
        case BadSessionIdInvalid: return "BadSessionIdInvalid";
        case BadSessionClosed: return "BadSessionClosed";
        case BadSessionNotActivated: return "BadSessionNotActivated";
        case BadNodeIdInvalid: return "BadNodeIdInvalid";
        case BadNodeIdUnknown: return "BadNodeIdUnknown";
        case BadAttributeIdInvalid: return "BadAttributeIdInvalid";
        case BadIndexRangeInvalid: return "BadIndexRangeInvalid";
        case BadIndexRangeNoData: return "BadIndexRangeNoData";
        case BadNotReadable: return "BadNotReadable";
        case BadNotWritable: return "BadNotWritable";
        case BadOutOfRange: return "BadOutOfRange";
        case BadTimestampsToReturnInvalid: return "BadTimestampsToReturnInvalid";
        case BadMaxAgeInvalid: return "BadMaxAgeInvalid";
        case BadSecurityModeRejected: return "BadSecurityModeRejected";
        case BadSecurityPolicyRejected: return "BadSecurityPolicyRejected";
        case BadTooManySessions: return "BadTooManySessions";
        case BadTcpServerTooBusy: return "BadTcpServerTooBusy";
        case BadTcpMessageTypeInvalid: return "BadTcpMessageTypeInvalid";
        case BadTcpSecureChannelUnknown: return "BadTcpSecureChannelUnknown";
        case BadTcpMessageTooLarge: return "BadTcpMessageTooLarge";
        case BadTcpInternalError: return "BadTcpInternalError";
        case BadTcpEndpointUrlInvalid: return "BadTcpEndpointUrlInvalid";
        case BadSequenceNumberInvalid: return "BadSequenceNumberInvalid";
        case BadWriteNotSupported: return "BadWriteNotSupported";
        case BadTypeMismatch: return "BadTypeMismatch";
        case BadRequestTooLarge: return "BadRequestTooLarge";
        case BadResponseTooLarge: return "BadResponseTooLarge";
        case BadSecureChannelIdInvalid: return "BadSecureChannelIdInvalid";
        case BadSecureChannelClosed: return "BadSecureChannelClosed";
        case BadSecureChannelTokenUnknown: return "BadSecureChannelTokenUnknown";
        case BadRequestTypeInvalid: return "BadRequestTypeInvalid";
        case BadProtocolVersionUnsupported: return "BadProtocolVersionUnsupported";
        default: break;
    }
    // Stable fallback so logs stay greppable for codes outside our table.
    thread_local char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", code);
    return buf;
}

}  // namespace nanoua::status
