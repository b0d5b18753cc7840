#!/usr/bin/env node
// Regenerates tests/oracle/corpus.jsonl: OPC UA binary encodings produced by
// node-opcua (the independent reference stack), one JSON object per line.
// The C++ codec test reconstructs each value, encodes it, and compares bytes;
// service-level entries are checked decode -> re-encode == oracle bytes.
//
// Usage: node tools/gen_codec_corpus.js [outfile]
// Requires node-opcua packages on NODE_PATH or in a local node_modules.
'use strict';

const fs = require('fs');
const { BinaryStream } = require('node-opcua-binary-stream');
const bt = require('node-opcua-basic-types');
const { NodeId, NodeIdType } = require('node-opcua-nodeid');
const { QualifiedName, LocalizedText } = require('node-opcua-data-model');
const { Variant, DataType } = require('node-opcua-variant');
const { DataValue, TimestampsToReturn } = require('node-opcua-data-value');
const { StatusCodes } = require('node-opcua-status-code');
const types = require('node-opcua-types');
const { ObjectIds } = require('node-opcua-constants');

const out = [];

function enc(fn, cap) {
  const s = new BinaryStream(Buffer.alloc(cap || 8192));
  fn(s);
  return s.buffer.slice(0, s.length).toString('hex');
}

function add(kind, desc, fields, fn, cap) {
  out.push(JSON.stringify({ kind, desc, ...fields, hex: enc(fn, cap) }));
}

// ---------------------------------------------------------------- bare scalars

// kind "bare": payload encoding without any Variant type byte.
const bare = (type, value, fn, desc) => add('bare', desc || `${type} ${JSON.stringify(value)}`, { type, value }, fn);

for (const v of [false, true]) bare('bool', v, (s) => bt.encodeBoolean(v, s));
for (const v of [0, 1, -1, 127, -128]) bare('i8', v, (s) => bt.encodeInt8(v, s));
for (const v of [0, 1, 200, 255]) bare('u8', v, (s) => bt.encodeUInt8(v, s));
for (const v of [0, 1, -1, 0x1234, 32767, -32768]) bare('i16', v, (s) => bt.encodeInt16(v, s));
for (const v of [0, 1, 0xBEEF, 65535]) bare('u16', v, (s) => bt.encodeUInt16(v, s));
for (const v of [0, 1, 5, -1, 2147483647, -2147483648, 0x01020304]) bare('i32', v, (s) => bt.encodeInt32(v, s));
for (const v of [0, 1, 255, 70000, 4294967295]) bare('u32', v, (s) => bt.encodeUInt32(v, s));
for (const v of [0, 1, -2.5, 3.1415927410125732, 1e30, -1e-30, Infinity, -Infinity]) {
  bare('f32', v === Infinity ? 'inf' : v === -Infinity ? '-inf' : v, (s) => bt.encodeFloat(v, s), `f32 ${v}`);
}
for (const v of [0, 1, -2.5, Math.PI, 1e300, -1e-300, Infinity, -Infinity]) {
  bare('f64', v === Infinity ? 'inf' : v === -Infinity ? '-inf' : v, (s) => bt.encodeDouble(v, s), `f64 ${v}`);
}
for (const v of [null, '', 'a', 'open62541-compatible', 'Grüße-日本語-⚙', 'x'.repeat(300)]) {
  bare('str', v, (s) => bt.encodeString(v, s), `str ${v === null ? 'null' : 'len' + v.length}`);
}
for (const hx of [null, '', 'ff', 'deadbeef', '00'.repeat(64)]) {
  bare('bs', hx, (s) => bt.encodeByteString(hx === null ? null : Buffer.from(hx, 'hex'), s), `bytestring ${hx === null ? 'null' : hx.length / 2}`);
}
// DateTime as milliseconds since the Unix epoch; the C++ side converts with
// its own epoch arithmetic, so this checks conversion and wire layout.
for (const ms of [0, 1, 1609459200000, 1755302400000, 4102444800000]) {
  bare('dt', ms, (s) => bt.encodeDateTime(new Date(ms), s), `datetime ${ms}ms`);
}

// Bit-walks and length sweeps: every byte lane of the integer encodings and
// every short length prefix gets exercised at least once.
for (let k = 0; k < 32; k++) {
  const v = 2 ** k;
  bare('u32', v, (s) => bt.encodeUInt32(v, s), `u32 bit${k}`);
}
for (let n = 1; n <= 16; n++) {
  const v = 'abcdefghijklmnop'.slice(0, n);
  bare('str', v, (s) => bt.encodeString(v, s), `str sweep len${n}`);
}
bare('f32', '-0', (s) => bt.encodeFloat(-0, s), 'f32 negative zero');
bare('f64', '-0', (s) => bt.encodeDouble(-0, s), 'f64 negative zero');
bare('f64', 5e-324, (s) => bt.encodeDouble(5e-324, s), 'f64 min denormal');

// -------------------------------------------------------------------- NodeIds

function nid(ns, f, id) {
  const t = { n: NodeIdType.NUMERIC, s: NodeIdType.STRING, g: NodeIdType.GUID, o: NodeIdType.BYTESTRING }[f];
  const v = f === 'o' ? Buffer.from(id, 'hex') : id;
  return new NodeId(t, v, ns);
}

function addNodeId(ns, f, id, desc) {
  add('nodeid', desc || `nodeid ns=${ns} ${f} ${id}`, { ns, f, id }, (s) => bt.encodeNodeId(nid(ns, f, id), s));
}

// numeric: exercises the TwoByte / FourByte / Numeric form thresholds
for (const [ns, id] of [[0, 0], [0, 5], [0, 84], [0, 255], [0, 256], [0, 65535], [0, 65536],
                        [1, 0], [1, 255], [1, 1003], [255, 65535], [256, 1], [2, 70000],
                        [65535, 4294967295]]) {
  addNodeId(ns, 'n', id);
}
for (const [ns, id] of [[0, ''], [1, 'Value3'], [1, 'a/b=c;d'], [2, 'Grüße-日本語'], [42, 'x'.repeat(80)]]) {
  addNodeId(ns, 's', id, `nodeid ns=${ns} str len${id.length}`);
}
for (const [ns, id] of [[0, '72962b91-fa75-4ae6-8d28-b404dc7daf63'], [1, '00000000-0000-0000-0000-000000000000'],
                        [7, 'ffffffff-ffff-ffff-ffff-ffffffffffff']]) {
  addNodeId(ns, 'g', id);
}
for (const [ns, id] of [[0, '00'], [1, 'deadbeefcafe'], [3, 'ab'.repeat(32)]]) {
  addNodeId(ns, 'o', id, `nodeid ns=${ns} opaque ${id.length / 2}B`);
}
// Numeric identifier bit-walk across the TwoByte/FourByte/Numeric thresholds.
for (let k = 0; k < 32; k++) {
  addNodeId(1, 'n', 2 ** k, `nodeid ns=1 numeric bit${k}`);
}
for (let k = 0; k < 8; k++) {
  addNodeId(0, 'n', 2 ** k, `nodeid ns=0 numeric bit${k}`);
}

// ------------------------------------------------- QualifiedName / LocalizedText

// Note: node-opcua's QualifiedName/LocalizedText constructors coerce empty
// strings to null, so "empty but present" composite fields cannot appear
// here; the bare string entries above pin that wire form instead.
for (const [ns, name] of [[0, null], [1, 'Value3'], [2, 'Grüße'], [255, 'DeviceSet'], [7, 'a b/c']]) {
  add('qn', `qualifiedname ns=${ns}`, { ns, name }, (s) => new QualifiedName({ namespaceIndex: ns, name }).encode(s));
}
for (const [locale, text] of [[null, null], ['en', null], [null, 'Value 3'], ['en-US', 'The last node'],
                              ['de', 'Grüße-日本語'], ['zh-CN', '设备']]) {
  add('lt', `localizedtext ${locale}/${text}`, { locale, text }, (s) => new LocalizedText({ locale, text }).encode(s));
}

// ------------------------------------------------------------------- Variants

// kind "variant": full wire form, type byte + payload.
function addVariant(type, dataType, value, jsonValue, desc) {
  add('variant', desc || `variant ${type}`, { type, value: jsonValue === undefined ? value : jsonValue },
      (s) => new Variant({ dataType, value }).encode(s));
}

addVariant('null', DataType.Null, null, null, 'variant null');
for (const v of [false, true]) addVariant('bool', DataType.Boolean, v, v, `variant bool ${v}`);
for (const v of [-5, 127]) addVariant('i8', DataType.SByte, v);
for (const v of [0, 254]) addVariant('u8', DataType.Byte, v);
for (const v of [-12345, 31000]) addVariant('i16', DataType.Int16, v);
for (const v of [0, 54321]) addVariant('u16', DataType.UInt16, v);
for (const v of [0, 42, -42, 2147483647, -2147483648]) addVariant('i32', DataType.Int32, v, v, `variant i32 ${v}`);
for (const v of [0, 4000000000]) addVariant('u32', DataType.UInt32, v);
for (const v of [1.5, -0.25]) addVariant('f32', DataType.Float, v);
for (const v of [2.718281828459045, -1e10]) addVariant('f64', DataType.Double, v);
for (const v of [null, '', 'hello', 'Grüße-日本語']) addVariant('str', DataType.String, v, v, `variant str ${v === null ? 'null' : v.length}`);
addVariant('dt', DataType.DateTime, new Date(1755302400000), 1755302400000, 'variant datetime');
for (const hx of [null, 'cafe']) {
  addVariant('bs', DataType.ByteString, hx === null ? null : Buffer.from(hx, 'hex'), hx, `variant bytestring ${hx}`);
}
addVariant('nid', DataType.NodeId, nid(1, 'n', 1003), { ns: 1, f: 'n', id: 1003 }, 'variant nodeid fourbyte');
addVariant('nid', DataType.NodeId, nid(0, 'n', 5), { ns: 0, f: 'n', id: 5 }, 'variant nodeid twobyte');
addVariant('nid', DataType.NodeId, nid(3, 's', 'motor'), { ns: 3, f: 's', id: 'motor' }, 'variant nodeid string');
addVariant('qn', DataType.QualifiedName, new QualifiedName({ namespaceIndex: 1, name: 'Value1' }), { ns: 1, name: 'Value1' }, 'variant qualifiedname');
addVariant('lt', DataType.LocalizedText, new LocalizedText({ locale: 'en', text: 'Device' }), { locale: 'en', text: 'Device' }, 'variant localizedtext');

// ------------------------------------------------------------------ DataValues

function addDv(desc, fields, opts) {
  add('dv', desc, fields, (s) => new DataValue(opts).encode(s));
}

addDv('dv empty', {}, {});
addDv('dv value only', { value: { type: 'i32', value: 7 } },
      { value: new Variant({ dataType: DataType.Int32, value: 7 }) });
addDv('dv status only', { status: 0x80340000 }, { statusCode: StatusCodes.BadNodeIdUnknown });
addDv('dv value+status', { value: { type: 'str', value: 'ok' }, status: 0x80740000 },
      { value: new Variant({ dataType: DataType.String, value: 'ok' }), statusCode: StatusCodes.BadTypeMismatch });
addDv('dv value+srcTs', { value: { type: 'i32', value: 1 }, srcTsMs: 1755302400000 },
      { value: new Variant({ dataType: DataType.Int32, value: 1 }), sourceTimestamp: new Date(1755302400000) });
addDv('dv value+bothTs', { value: { type: 'u16', value: 9 }, srcTsMs: 1755302400000, svrTsMs: 1755302401000 },
      { value: new Variant({ dataType: DataType.UInt16, value: 9 }), sourceTimestamp: new Date(1755302400000), serverTimestamp: new Date(1755302401000) });
// node-opcua takes picoseconds and writes the wire field in 10 ps units; the
// JSON carries the wire value (pico / 10) that the C++ DataValue holds.
addDv('dv value+srcTs+pico', { value: { type: 'bool', value: true }, srcTsMs: 1000, srcPico: 1234 },
      { value: new Variant({ dataType: DataType.Boolean, value: true }), sourceTimestamp: new Date(1000), sourcePicoseconds: 12340 });
addDv('dv all fields', { value: { type: 'f64', value: 0.5 }, status: 0x80000000, srcTsMs: 1000, srcPico: 1, svrTsMs: 2000, svrPico: 2 },
      { value: new Variant({ dataType: DataType.Double, value: 0.5 }), statusCode: StatusCodes.Bad,
        sourceTimestamp: new Date(1000), sourcePicoseconds: 10, serverTimestamp: new Date(2000), serverPicoseconds: 20 });

// ------------------------------------------------------------------- services

// kind "service": full message = type NodeId + body. The C++ side decodes the
// oracle bytes and re-encodes; equality proves both directions agree with the
// reference stack on every field of every struct in the message.
function addService(desc, objId, obj) {
  add('service', desc, { typeId: objId }, (s) => {
    bt.encodeNodeId(new NodeId(NodeIdType.NUMERIC, objId, 0), s);
    obj.encode(s);
  }, 65536);
}

const reqHeader = (handle) => new types.RequestHeader({
  authenticationToken: nid(1, 'o', '00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff'),
  timestamp: new Date(1755302400000),
  requestHandle: handle,
  returnDiagnostics: 0,
  timeoutHint: 10000,
});
const respHeader = (handle, result) => new types.ResponseHeader({
  timestamp: new Date(1755302400500),
  requestHandle: handle,
  serviceResult: result || StatusCodes.Good,
});

addService('GetEndpointsRequest', ObjectIds.GetEndpointsRequest_Encoding_DefaultBinary,
  new types.GetEndpointsRequest({
    requestHeader: new types.RequestHeader({ timestamp: new Date(1755302400000), requestHandle: 1, timeoutHint: 5000 }),
    endpointUrl: 'opc.tcp://fielddev:4840/',
    localeIds: null,
    profileUris: null,
  }));

addService('GetEndpointsResponse', ObjectIds.GetEndpointsResponse_Encoding_DefaultBinary,
  new types.GetEndpointsResponse({
    responseHeader: respHeader(1),
    endpoints: [new types.EndpointDescription({
      endpointUrl: 'opc.tcp://fielddev:4840/',
      server: new types.ApplicationDescription({
        applicationUri: 'urn:fielddev:nanoua',
        productUri: 'urn:nanoua',
        applicationName: new LocalizedText({ locale: 'en', text: 'nanoua field device' }),
        applicationType: types.ApplicationType.Server,
        discoveryUrls: ['opc.tcp://fielddev:4840/'],
      }),
      serverCertificate: null,
      securityMode: types.MessageSecurityMode.None,
      securityPolicyUri: 'http://opcfoundation.org/UA/SecurityPolicy#None',
      userIdentityTokens: [new types.UserTokenPolicy({
        policyId: 'anonymous',
        tokenType: types.UserTokenType.Anonymous,
      })],
      transportProfileUri: 'http://opcfoundation.org/UA-Profile/Transport/uatcp-uasc-uabinary',
      securityLevel: 0,
    })],
  }));

addService('OpenSecureChannelRequest', ObjectIds.OpenSecureChannelRequest_Encoding_DefaultBinary,
  new types.OpenSecureChannelRequest({
    requestHeader: new types.RequestHeader({ timestamp: new Date(1755302400000), requestHandle: 1 }),
    clientProtocolVersion: 0,
    requestType: types.SecurityTokenRequestType.Issue,
    securityMode: types.MessageSecurityMode.None,
    clientNonce: null,
    requestedLifetime: 3600000,
  }));

addService('OpenSecureChannelResponse', ObjectIds.OpenSecureChannelResponse_Encoding_DefaultBinary,
  new types.OpenSecureChannelResponse({
    responseHeader: respHeader(1),
    serverProtocolVersion: 0,
    securityToken: new types.ChannelSecurityToken({
      channelId: 3, tokenId: 1, createdAt: new Date(1755302400000), revisedLifetime: 3600000,
    }),
    serverNonce: Buffer.from('0102030405060708090a0b0c0d0e0f10', 'hex'),
  }));

addService('CloseSecureChannelRequest', ObjectIds.CloseSecureChannelRequest_Encoding_DefaultBinary,
  new types.CloseSecureChannelRequest({
    requestHeader: new types.RequestHeader({ timestamp: new Date(1755302400000), requestHandle: 9 }),
  }));

addService('CreateSessionRequest', ObjectIds.CreateSessionRequest_Encoding_DefaultBinary,
  new types.CreateSessionRequest({
    requestHeader: new types.RequestHeader({ timestamp: new Date(1755302400000), requestHandle: 2, timeoutHint: 60000 }),
    clientDescription: new types.ApplicationDescription({
      applicationUri: 'urn:client:test',
      productUri: 'urn:client',
      applicationName: new LocalizedText({ text: 'test client' }),
      applicationType: types.ApplicationType.Client,
    }),
    serverUri: null,
    endpointUrl: 'opc.tcp://fielddev:4840/',
    sessionName: 'session-1',
    clientNonce: Buffer.alloc(32, 7),
    clientCertificate: null,
    requestedSessionTimeout: 1200000,
    maxResponseMessageSize: 0,
  }));

addService('CreateSessionResponse', ObjectIds.CreateSessionResponse_Encoding_DefaultBinary,
  new types.CreateSessionResponse({
    responseHeader: respHeader(2),
    sessionId: nid(1, 'n', 100001),
    authenticationToken: nid(1, 'o', 'ffeeddccbbaa99887766554433221100ffeeddccbbaa99887766554433221100'),
    revisedSessionTimeout: 1200000,
    serverNonce: Buffer.alloc(32, 9),
    serverCertificate: null,
    serverEndpoints: [],
    serverSoftwareCertificates: null,
    serverSignature: new types.SignatureData({ algorithm: null, signature: null }),
    maxRequestMessageSize: 65536,
  }));

addService('ActivateSessionRequest anonymous', ObjectIds.ActivateSessionRequest_Encoding_DefaultBinary,
  new types.ActivateSessionRequest({
    requestHeader: reqHeader(3),
    clientSignature: new types.SignatureData({ algorithm: null, signature: null }),
    clientSoftwareCertificates: null,
    localeIds: ['en'],
    userIdentityToken: new types.AnonymousIdentityToken({ policyId: 'anonymous' }),
    userTokenSignature: new types.SignatureData({ algorithm: null, signature: null }),
  }));

addService('ActivateSessionResponse', ObjectIds.ActivateSessionResponse_Encoding_DefaultBinary,
  new types.ActivateSessionResponse({
    responseHeader: respHeader(3),
    serverNonce: Buffer.alloc(32, 11),
    results: null,
    diagnosticInfos: null,
  }));

addService('ReadRequest three attrs', ObjectIds.ReadRequest_Encoding_DefaultBinary,
  new types.ReadRequest({
    requestHeader: reqHeader(4),
    maxAge: 0,
    timestampsToReturn: TimestampsToReturn.Both,
    nodesToRead: [
      new types.ReadValueId({ nodeId: nid(1, 'n', 1003), attributeId: 13 }),
      new types.ReadValueId({ nodeId: nid(1, 'n', 1003), attributeId: 3 }),
      new types.ReadValueId({ nodeId: nid(0, 'n', 2258), attributeId: 13 }),
    ],
  }));

addService('ReadResponse mixed results', ObjectIds.ReadResponse_Encoding_DefaultBinary,
  new types.ReadResponse({
    responseHeader: respHeader(4),
    results: [
      new DataValue({ value: new Variant({ dataType: DataType.Int32, value: 42 }),
                      sourceTimestamp: new Date(1755302400000), serverTimestamp: new Date(1755302400000) }),
      new DataValue({ value: new Variant({ dataType: DataType.QualifiedName, value: new QualifiedName({ namespaceIndex: 1, name: 'Value3' }) }),
                      sourceTimestamp: new Date(1755302400000), serverTimestamp: new Date(1755302400000) }),
      new DataValue({ statusCode: StatusCodes.BadNodeIdUnknown }),
    ],
    diagnosticInfos: null,
  }));

addService('WriteRequest one value', ObjectIds.WriteRequest_Encoding_DefaultBinary,
  new types.WriteRequest({
    requestHeader: reqHeader(5),
    nodesToWrite: [new types.WriteValue({
      nodeId: nid(1, 'n', 1003),
      attributeId: 13,
      value: new DataValue({ value: new Variant({ dataType: DataType.Int32, value: 77 }) }),
    })],
  }));

addService('WriteResponse', ObjectIds.WriteResponse_Encoding_DefaultBinary,
  new types.WriteResponse({
    responseHeader: respHeader(5),
    results: [StatusCodes.Good],
    diagnosticInfos: null,
  }));

addService('CloseSessionRequest', ObjectIds.CloseSessionRequest_Encoding_DefaultBinary,
  new types.CloseSessionRequest({ requestHeader: reqHeader(6), deleteSubscriptions: true }));

addService('CloseSessionResponse', ObjectIds.CloseSessionResponse_Encoding_DefaultBinary,
  new types.CloseSessionResponse({ responseHeader: respHeader(6) }));

addService('ServiceFault BadServiceUnsupported', ObjectIds.ServiceFault_Encoding_DefaultBinary,
  new types.ServiceFault({ responseHeader: respHeader(7, StatusCodes.BadServiceUnsupported) }));

addService('ServiceFault BadTooManySessions', ObjectIds.ServiceFault_Encoding_DefaultBinary,
  new types.ServiceFault({ responseHeader: respHeader(8, StatusCodes.BadTooManySessions) }));

// --------------------------------------------------------------------- emit

const outfile = process.argv[2] || 'tests/oracle/corpus.jsonl';
fs.writeFileSync(outfile, out.join('\n') + '\n');
console.log(`${out.length} corpus entries -> ${outfile}`);
