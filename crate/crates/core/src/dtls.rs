//! DTLS 1.0/1.2 record-layer and handshake-message codec.
//!
//! Parsing and serialization are bit-exact inverses for well-formed wire
//! data: `parse(serialize(m)) == m` and re-serialization is byte-identical.
//! The version fields are carried as features, never used as validity
//! gates, so 0xFEFF (DTLS 1.0) and 0xFEFD (DTLS 1.2) — or anything else —
//! pass through untouched. Fragmented handshake messages are surfaced at
//! the fragment level; no cross-record reassembly is attempted.

use serde::{Deserialize, Serialize};

use crate::error::CodecError;

pub const CONTENT_CHANGE_CIPHER_SPEC: u8 = 20;
pub const CONTENT_ALERT: u8 = 21;
pub const CONTENT_HANDSHAKE: u8 = 22;
pub const CONTENT_APPLICATION_DATA: u8 = 23;

pub const VERSION_DTLS10: u16 = 0xFEFF;
pub const VERSION_DTLS12: u16 = 0xFEFD;

pub const MSG_CLIENT_HELLO: u8 = 1;
pub const MSG_SERVER_HELLO: u8 = 2;
pub const MSG_HELLO_VERIFY_REQUEST: u8 = 3;
pub const MSG_CERTIFICATE: u8 = 11;
pub const MSG_SERVER_KEY_EXCHANGE: u8 = 12;
pub const MSG_CERTIFICATE_REQUEST: u8 = 13;
pub const MSG_SERVER_HELLO_DONE: u8 = 14;
pub const MSG_CERTIFICATE_VERIFY: u8 = 15;
pub const MSG_CLIENT_KEY_EXCHANGE: u8 = 16;
pub const MSG_FINISHED: u8 = 20;

pub fn message_type_name(msg_type: u8) -> String {
    match msg_type {
        MSG_CLIENT_HELLO => "client_hello".into(),
        MSG_SERVER_HELLO => "server_hello".into(),
        MSG_HELLO_VERIFY_REQUEST => "hello_verify_request".into(),
        MSG_CERTIFICATE => "certificate".into(),
        MSG_SERVER_KEY_EXCHANGE => "server_key_exchange".into(),
        MSG_CERTIFICATE_REQUEST => "certificate_request".into(),
        MSG_SERVER_HELLO_DONE => "server_hello_done".into(),
        MSG_CERTIFICATE_VERIFY => "certificate_verify".into(),
        MSG_CLIENT_KEY_EXCHANGE => "client_key_exchange".into(),
        MSG_FINISHED => "finished".into(),
        other => format!("msg_{other}"),
    }
}

/// 13-byte DTLS record header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub content_type: u8,
    pub version: u16,
    pub epoch: u16,
    /// 48-bit on the wire.
    pub sequence_number: u64,
    pub length: u16,
}

/// One TLS extension, data kept opaque.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extension {
    pub ext_type: u16,
    pub data: Vec<u8>,
}

impl Extension {
    pub fn new(ext_type: u16, data: Vec<u8>) -> Self {
        Self { ext_type, data }
    }

    /// Wire size including the 4-byte type/length prefix.
    pub fn wire_len(&self) -> usize {
        4 + self.data.len()
    }

    pub fn name(&self) -> String {
        extension_name(self.ext_type)
    }
}

fn extensions_wire_len(extensions: &[Extension]) -> usize {
    extensions.iter().map(Extension::wire_len).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientHelloBody {
    pub client_version: u16,
    pub random: [u8; 32],
    pub session_id: Vec<u8>,
    pub cookie: Vec<u8>,
    pub cipher_suites: Vec<u16>,
    pub compression_methods: Vec<u8>,
    /// `None` when the hello ends after compression methods with no
    /// extensions block at all (distinct from an empty block).
    pub extensions: Option<Vec<Extension>>,
}

impl ClientHelloBody {
    pub fn extension_list(&self) -> &[Extension] {
        self.extensions.as_deref().unwrap_or(&[])
    }

    pub fn extensions_total_length(&self) -> u16 {
        extensions_wire_len(self.extension_list()) as u16
    }

    pub fn cipher_suites_length(&self) -> u16 {
        (self.cipher_suites.len() * 2) as u16
    }

    pub fn has_duplicate_extensions(&self) -> bool {
        has_duplicates(self.extension_list())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerHelloBody {
    pub server_version: u16,
    pub random: [u8; 32],
    pub session_id: Vec<u8>,
    pub cipher_suite: u16,
    pub compression_method: u8,
    pub extensions: Option<Vec<Extension>>,
}

impl ServerHelloBody {
    pub fn extension_list(&self) -> &[Extension] {
        self.extensions.as_deref().unwrap_or(&[])
    }

    pub fn extensions_total_length(&self) -> u16 {
        extensions_wire_len(self.extension_list()) as u16
    }

    pub fn has_duplicate_extensions(&self) -> bool {
        has_duplicates(self.extension_list())
    }
}

fn has_duplicates(extensions: &[Extension]) -> bool {
    let mut seen = std::collections::HashSet::new();
    extensions.iter().any(|e| !seen.insert(e.ext_type))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloVerifyRequestBody {
    pub server_version: u16,
    pub cookie: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandshakeBody {
    ClientHello(ClientHelloBody),
    ServerHello(ServerHelloBody),
    HelloVerifyRequest(HelloVerifyRequestBody),
    /// Anything else, or any fragment: raw bytes as captured.
    Opaque(Vec<u8>),
}

/// 12-byte handshake header plus its (possibly partial) body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeMessage {
    pub msg_type: u8,
    /// Total message length (24-bit on the wire).
    pub length: u32,
    pub message_seq: u16,
    pub fragment_offset: u32,
    pub fragment_length: u32,
    pub body: HandshakeBody,
}

impl HandshakeMessage {
    /// Build an unfragmented message; header lengths are derived from the
    /// encoded body.
    pub fn unfragmented(
        msg_type: u8,
        message_seq: u16,
        body: HandshakeBody,
    ) -> Result<Self, CodecError> {
        let encoded = encode_body(&body)?;
        Ok(Self {
            msg_type,
            length: encoded.len() as u32,
            message_seq,
            fragment_offset: 0,
            fragment_length: encoded.len() as u32,
            body,
        })
    }

    pub fn is_fragment(&self) -> bool {
        !(self.fragment_offset == 0 && self.fragment_length == self.length)
    }

    /// Recompute header lengths after a body edit (unfragmented only).
    pub fn refresh_lengths(&mut self) -> Result<(), CodecError> {
        let encoded = encode_body(&self.body)?;
        self.length = encoded.len() as u32;
        self.fragment_length = encoded.len() as u32;
        self.fragment_offset = 0;
        Ok(())
    }
}

/// A record's decoded payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordContent {
    Handshake(HandshakeMessage),
    /// Encrypted, non-handshake, or otherwise unparsed body.
    Opaque(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub header: RecordHeader,
    pub content: RecordContent,
}

/// Result of scanning one datagram: whatever parsed cleanly, plus the
/// terminal problem if the scan could not finish. Appending garbage to a
/// well-formed datagram never changes `entries` for the well-formed
/// prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatagramParse {
    pub entries: Vec<RecordEntry>,
    /// Bytes consumed by fully-parsed records.
    pub consumed: usize,
    pub warnings: Vec<String>,
    pub issue: Option<CodecError>,
}

impl DatagramParse {
    pub fn is_clean(&self) -> bool {
        self.issue.is_none()
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.remaining() < n {
            return None;
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_be_bytes([b[0], b[1]]))
    }

    fn u24(&mut self) -> Option<u32> {
        self.take(3)
            .map(|b| u32::from_be_bytes([0, b[0], b[1], b[2]]))
    }
}

/// Parse a UDP payload as a back-to-back sequence of DTLS records.
///
/// Handshake records at epoch 0 are decoded into [`HandshakeMessage`]s
/// (several per record when packed); everything else stays opaque. An
/// empty payload violates the precondition and is an outright error.
pub fn parse_datagram(payload: &[u8]) -> Result<DatagramParse, CodecError> {
    if payload.is_empty() {
        return Err(CodecError::EmptyPayload);
    }
    let mut parse = DatagramParse {
        entries: Vec::new(),
        consumed: 0,
        warnings: Vec::new(),
        issue: None,
    };
    let mut pos = 0usize;
    while pos < payload.len() {
        let rest = &payload[pos..];
        // content type first: short non-DTLS noise is "not DTLS", not a
        // truncated record
        let content_type = rest[0];
        if !(CONTENT_CHANGE_CIPHER_SPEC..=CONTENT_APPLICATION_DATA).contains(&content_type) {
            parse.issue = Some(CodecError::NotDtls {
                content_type,
                offset: pos,
            });
            break;
        }
        if rest.len() < 13 {
            parse.issue = Some(CodecError::TruncatedRecord {
                offset: pos,
                declared: 13,
                available: rest.len(),
            });
            break;
        }
        let header = RecordHeader {
            content_type,
            version: u16::from_be_bytes([rest[1], rest[2]]),
            epoch: u16::from_be_bytes([rest[3], rest[4]]),
            sequence_number: u64::from_be_bytes([
                0, 0, rest[5], rest[6], rest[7], rest[8], rest[9], rest[10],
            ]),
            length: u16::from_be_bytes([rest[11], rest[12]]),
        };
        let body_len = header.length as usize;
        if rest.len() - 13 < body_len {
            parse.issue = Some(CodecError::TruncatedRecord {
                offset: pos,
                declared: body_len,
                available: rest.len() - 13,
            });
            break;
        }
        let body = &rest[13..13 + body_len];
        if content_type == CONTENT_HANDSHAKE && header.epoch == 0 {
            match parse_handshake_record(body, pos + 13, &header, &mut parse) {
                Ok(()) => {}
                Err(issue) => {
                    parse.issue = Some(issue);
                    break;
                }
            }
        } else {
            parse.entries.push(RecordEntry {
                header: header.clone(),
                content: RecordContent::Opaque(body.to_vec()),
            });
        }
        pos += 13 + body_len;
        parse.consumed = pos;
    }
    Ok(parse)
}

/// Like [`parse_datagram`] but any terminal issue becomes an error.
pub fn parse_datagram_strict(payload: &[u8]) -> Result<Vec<RecordEntry>, CodecError> {
    let parse = parse_datagram(payload)?;
    match parse.issue {
        None => Ok(parse.entries),
        Some(issue) => Err(issue),
    }
}

fn parse_handshake_record(
    body: &[u8],
    base_offset: usize,
    header: &RecordHeader,
    parse: &mut DatagramParse,
) -> Result<(), CodecError> {
    let mut reader = Reader::new(body);
    while reader.remaining() > 0 {
        let at = base_offset + reader.pos;
        if reader.remaining() < 12 {
            return Err(CodecError::TruncatedBody { offset: at });
        }
        let msg_type = reader.u8().unwrap();
        let length = reader.u24().unwrap();
        let message_seq = reader.u16().unwrap();
        let fragment_offset = reader.u24().unwrap();
        let fragment_length = reader.u24().unwrap();
        if fragment_offset.saturating_add(fragment_length) > length {
            return Err(CodecError::BadFragment {
                fragment_offset,
                fragment_length,
                length,
            });
        }
        let fragment = reader
            .take(fragment_length as usize)
            .ok_or(CodecError::TruncatedBody { offset: at })?;
        let unfragmented = fragment_offset == 0 && fragment_length == length;
        let body = if unfragmented {
            match msg_type {
                MSG_CLIENT_HELLO => {
                    let parsed = parse_client_hello(fragment, at)?;
                    if parsed.has_duplicate_extensions() {
                        parse.warnings.push(format!(
                            "duplicate extension types in ClientHello at offset {at}"
                        ));
                    }
                    HandshakeBody::ClientHello(parsed)
                }
                MSG_SERVER_HELLO => {
                    let parsed = parse_server_hello(fragment, at)?;
                    if parsed.has_duplicate_extensions() {
                        parse.warnings.push(format!(
                            "duplicate extension types in ServerHello at offset {at}"
                        ));
                    }
                    HandshakeBody::ServerHello(parsed)
                }
                MSG_HELLO_VERIFY_REQUEST => {
                    HandshakeBody::HelloVerifyRequest(parse_hello_verify(fragment, at)?)
                }
                _ => HandshakeBody::Opaque(fragment.to_vec()),
            }
        } else {
            HandshakeBody::Opaque(fragment.to_vec())
        };
        parse.entries.push(RecordEntry {
            header: header.clone(),
            content: RecordContent::Handshake(HandshakeMessage {
                msg_type,
                length,
                message_seq,
                fragment_offset,
                fragment_length,
                body,
            }),
        });
    }
    Ok(())
}

fn parse_client_hello(body: &[u8], at: usize) -> Result<ClientHelloBody, CodecError> {
    let mut reader = Reader::new(body);
    let truncated = || CodecError::TruncatedBody { offset: at };
    let client_version = reader.u16().ok_or_else(truncated)?;
    let mut random = [0u8; 32];
    random.copy_from_slice(reader.take(32).ok_or_else(truncated)?);
    let sid_len = reader.u8().ok_or_else(truncated)? as usize;
    if sid_len > 32 {
        return Err(CodecError::FieldTooLong {
            field: "session_id",
            got: sid_len,
            limit: 32,
        });
    }
    let session_id = reader.take(sid_len).ok_or_else(truncated)?.to_vec();
    let cookie_len = reader.u8().ok_or_else(truncated)? as usize;
    let cookie = reader.take(cookie_len).ok_or_else(truncated)?.to_vec();
    let suites_len = reader.u16().ok_or_else(truncated)? as usize;
    if !suites_len.is_multiple_of(2) {
        return Err(CodecError::OddCipherSuiteLength(suites_len));
    }
    let suites_raw = reader.take(suites_len).ok_or_else(truncated)?;
    let cipher_suites = suites_raw
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    let comp_len = reader.u8().ok_or_else(truncated)? as usize;
    let compression_methods = reader.take(comp_len).ok_or_else(truncated)?.to_vec();
    let extensions = parse_extensions_block(&mut reader, at)?;
    if reader.remaining() != 0 {
        return Err(truncated());
    }
    Ok(ClientHelloBody {
        client_version,
        random,
        session_id,
        cookie,
        cipher_suites,
        compression_methods,
        extensions,
    })
}

fn parse_server_hello(body: &[u8], at: usize) -> Result<ServerHelloBody, CodecError> {
    let mut reader = Reader::new(body);
    let truncated = || CodecError::TruncatedBody { offset: at };
    let server_version = reader.u16().ok_or_else(truncated)?;
    let mut random = [0u8; 32];
    random.copy_from_slice(reader.take(32).ok_or_else(truncated)?);
    let sid_len = reader.u8().ok_or_else(truncated)? as usize;
    if sid_len > 32 {
        return Err(CodecError::FieldTooLong {
            field: "session_id",
            got: sid_len,
            limit: 32,
        });
    }
    let session_id = reader.take(sid_len).ok_or_else(truncated)?.to_vec();
    let cipher_suite = reader.u16().ok_or_else(truncated)?;
    let compression_method = reader.u8().ok_or_else(truncated)?;
    let extensions = parse_extensions_block(&mut reader, at)?;
    if reader.remaining() != 0 {
        return Err(truncated());
    }
    Ok(ServerHelloBody {
        server_version,
        random,
        session_id,
        cipher_suite,
        compression_method,
        extensions,
    })
}

fn parse_hello_verify(body: &[u8], at: usize) -> Result<HelloVerifyRequestBody, CodecError> {
    let mut reader = Reader::new(body);
    let truncated = || CodecError::TruncatedBody { offset: at };
    let server_version = reader.u16().ok_or_else(truncated)?;
    let cookie_len = reader.u8().ok_or_else(truncated)? as usize;
    let cookie = reader.take(cookie_len).ok_or_else(truncated)?.to_vec();
    if reader.remaining() != 0 {
        return Err(truncated());
    }
    Ok(HelloVerifyRequestBody {
        server_version,
        cookie,
    })
}

fn parse_extensions_block(
    reader: &mut Reader<'_>,
    at: usize,
) -> Result<Option<Vec<Extension>>, CodecError> {
    if reader.remaining() == 0 {
        return Ok(None);
    }
    let truncated = || CodecError::TruncatedBody { offset: at };
    let total = reader.u16().ok_or_else(truncated)? as usize;
    if reader.remaining() < total {
        return Err(truncated());
    }
    let end = reader.pos + total;
    let mut extensions = Vec::new();
    while reader.pos < end {
        if end - reader.pos < 4 {
            return Err(truncated());
        }
        let ext_type = reader.u16().unwrap();
        let data_len = reader.u16().unwrap() as usize;
        if end - reader.pos < data_len {
            return Err(truncated());
        }
        let data = reader.take(data_len).unwrap().to_vec();
        extensions.push(Extension { ext_type, data });
    }
    Ok(Some(extensions))
}

// --- serialization ---------------------------------------------------------

fn check_len(field: &'static str, got: usize, limit: usize) -> Result<(), CodecError> {
    if got > limit {
        Err(CodecError::FieldTooLong { field, got, limit })
    } else {
        Ok(())
    }
}

fn encode_extensions_block(
    extensions: &Option<Vec<Extension>>,
    out: &mut Vec<u8>,
) -> Result<(), CodecError> {
    let Some(extensions) = extensions else {
        return Ok(());
    };
    let total = extensions_wire_len(extensions);
    check_len("extensions", total, u16::MAX as usize)?;
    out.extend_from_slice(&(total as u16).to_be_bytes());
    for ext in extensions {
        check_len("extension data", ext.data.len(), u16::MAX as usize)?;
        out.extend_from_slice(&ext.ext_type.to_be_bytes());
        out.extend_from_slice(&(ext.data.len() as u16).to_be_bytes());
        out.extend_from_slice(&ext.data);
    }
    Ok(())
}

/// Encode a handshake body to its wire form.
pub fn encode_body(body: &HandshakeBody) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    match body {
        HandshakeBody::ClientHello(ch) => {
            out.extend_from_slice(&ch.client_version.to_be_bytes());
            out.extend_from_slice(&ch.random);
            check_len("session_id", ch.session_id.len(), 32)?;
            out.push(ch.session_id.len() as u8);
            out.extend_from_slice(&ch.session_id);
            check_len("cookie", ch.cookie.len(), 255)?;
            out.push(ch.cookie.len() as u8);
            out.extend_from_slice(&ch.cookie);
            check_len(
                "cipher_suites",
                ch.cipher_suites.len() * 2,
                u16::MAX as usize,
            )?;
            out.extend_from_slice(&((ch.cipher_suites.len() * 2) as u16).to_be_bytes());
            for suite in &ch.cipher_suites {
                out.extend_from_slice(&suite.to_be_bytes());
            }
            check_len("compression_methods", ch.compression_methods.len(), 255)?;
            out.push(ch.compression_methods.len() as u8);
            out.extend_from_slice(&ch.compression_methods);
            encode_extensions_block(&ch.extensions, &mut out)?;
        }
        HandshakeBody::ServerHello(sh) => {
            out.extend_from_slice(&sh.server_version.to_be_bytes());
            out.extend_from_slice(&sh.random);
            check_len("session_id", sh.session_id.len(), 32)?;
            out.push(sh.session_id.len() as u8);
            out.extend_from_slice(&sh.session_id);
            out.extend_from_slice(&sh.cipher_suite.to_be_bytes());
            out.push(sh.compression_method);
            encode_extensions_block(&sh.extensions, &mut out)?;
        }
        HandshakeBody::HelloVerifyRequest(hvr) => {
            out.extend_from_slice(&hvr.server_version.to_be_bytes());
            check_len("cookie", hvr.cookie.len(), 255)?;
            out.push(hvr.cookie.len() as u8);
            out.extend_from_slice(&hvr.cookie);
        }
        HandshakeBody::Opaque(bytes) => out.extend_from_slice(bytes),
    }
    Ok(out)
}

fn encode_handshake_message(message: &HandshakeMessage) -> Result<Vec<u8>, CodecError> {
    let body = encode_body(&message.body)?;
    check_len("handshake body", body.len(), 0xFF_FFFF)?;
    check_len("message length", message.length as usize, 0xFF_FFFF)?;
    // For fragments the declared total length is kept; the fragment length
    // always reflects the bytes actually present.
    let length = if message.is_fragment() {
        message.length
    } else {
        body.len() as u32
    };
    let mut out = Vec::with_capacity(12 + body.len());
    out.push(message.msg_type);
    out.extend_from_slice(&length.to_be_bytes()[1..]);
    out.extend_from_slice(&message.message_seq.to_be_bytes());
    out.extend_from_slice(&message.fragment_offset.to_be_bytes()[1..]);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes()[1..]);
    out.extend_from_slice(&body);
    Ok(out)
}

fn encode_record(
    content_type: u8,
    version: u16,
    epoch: u16,
    sequence_number: u64,
    body: &[u8],
) -> Result<Vec<u8>, CodecError> {
    check_len("record body", body.len(), u16::MAX as usize)?;
    if sequence_number >> 48 != 0 {
        return Err(CodecError::FieldTooLong {
            field: "sequence number",
            got: 64,
            limit: 48,
        });
    }
    let mut out = Vec::with_capacity(13 + body.len());
    out.push(content_type);
    out.extend_from_slice(&version.to_be_bytes());
    out.extend_from_slice(&epoch.to_be_bytes());
    out.extend_from_slice(&sequence_number.to_be_bytes()[2..]);
    out.extend_from_slice(&(body.len() as u16).to_be_bytes());
    out.extend_from_slice(body);
    Ok(out)
}

/// Serialize one handshake message wrapped in a single DTLS record.
pub fn serialize(
    message: &HandshakeMessage,
    record_version: u16,
    epoch: u16,
    sequence_number: u64,
) -> Result<Vec<u8>, CodecError> {
    let body = encode_handshake_message(message)?;
    encode_record(
        CONTENT_HANDSHAKE,
        record_version,
        epoch,
        sequence_number,
        &body,
    )
}

/// Serialize an arbitrary record entry (handshake or opaque).
pub fn serialize_record(entry: &RecordEntry) -> Result<Vec<u8>, CodecError> {
    let header = &entry.header;
    match &entry.content {
        RecordContent::Handshake(message) => {
            let body = encode_handshake_message(message)?;
            encode_record(
                header.content_type,
                header.version,
                header.epoch,
                header.sequence_number,
                &body,
            )
        }
        RecordContent::Opaque(bytes) => encode_record(
            header.content_type,
            header.version,
            header.epoch,
            header.sequence_number,
            bytes,
        ),
    }
}

/// Build a record entry with the header length already consistent.
pub fn record(
    content_type: u8,
    version: u16,
    epoch: u16,
    sequence_number: u64,
    content: RecordContent,
) -> Result<RecordEntry, CodecError> {
    let body_len = match &content {
        RecordContent::Handshake(m) => encode_handshake_message(m)?.len(),
        RecordContent::Opaque(b) => b.len(),
    };
    check_len("record body", body_len, u16::MAX as usize)?;
    Ok(RecordEntry {
        header: RecordHeader {
            content_type,
            version,
            epoch,
            sequence_number,
            length: body_len as u16,
        },
        content,
    })
}

// --- extension naming ------------------------------------------------------

/// Canonical IANA name for an extension type code; unknown codes render
/// as `ext_<decimal>`.
pub fn extension_name(type_code: u16) -> String {
    match type_code {
        0 => "server_name".into(),
        1 => "max_fragment_length".into(),
        5 => "status_request".into(),
        10 => "supported_groups".into(),
        11 => "ec_point_formats".into(),
        13 => "signature_algorithms".into(),
        14 => "use_srtp".into(),
        15 => "heartbeat".into(),
        16 => "application_layer_protocol_negotiation".into(),
        18 => "signed_certificate_timestamp".into(),
        21 => "padding".into(),
        22 => "encrypt_then_mac".into(),
        23 => "extended_master_secret".into(),
        28 => "record_size_limit".into(),
        35 => "session_ticket".into(),
        41 => "pre_shared_key".into(),
        42 => "early_data".into(),
        43 => "supported_versions".into(),
        44 => "cookie".into(),
        45 => "psk_key_exchange_modes".into(),
        51 => "key_share".into(),
        0xFF01 => "renegotiation_info".into(),
        other => format!("ext_{other}"),
    }
}

/// Inverse of [`extension_name`], also accepting the `ext_<decimal>` form.
pub fn extension_code(name: &str) -> Option<u16> {
    if let Some(rest) = name.strip_prefix("ext_") {
        return rest.parse().ok();
    }
    match name {
        "server_name" => Some(0),
        "max_fragment_length" => Some(1),
        "status_request" => Some(5),
        "supported_groups" => Some(10),
        "ec_point_formats" => Some(11),
        "signature_algorithms" => Some(13),
        "use_srtp" => Some(14),
        "heartbeat" => Some(15),
        "application_layer_protocol_negotiation" => Some(16),
        "signed_certificate_timestamp" => Some(18),
        "padding" => Some(21),
        "encrypt_then_mac" => Some(22),
        "extended_master_secret" => Some(23),
        "record_size_limit" => Some(28),
        "session_ticket" => Some(35),
        "pre_shared_key" => Some(41),
        "early_data" => Some(42),
        "supported_versions" => Some(43),
        "cookie" => Some(44),
        "psk_key_exchange_modes" => Some(45),
        "key_share" => Some(51),
        "renegotiation_info" => Some(0xFF01),
        _ => None,
    }
}

pub const EXT_SUPPORTED_GROUPS: u16 = 10;
pub const EXT_RENEGOTIATION_INFO: u16 = 0xFF01;
