//! Deterministic synthetic DTLS handshake captures.
//!
//! Profiles are data: a JSON config describes, per capture file, the
//! handshake shape (cookie exchange or not, extension sets, cipher lists,
//! versions), retransmission ranges, and noise-packet pools. Generation
//! uses the SplitMix64 stream exclusively, so the same (profile, count,
//! seed) always produces byte-identical pcap files on any platform.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dtls::{
    extension_code, record, serialize_record, ClientHelloBody, Extension, HandshakeBody,
    HandshakeMessage, HelloVerifyRequestBody, RecordContent, RecordEntry, ServerHelloBody,
    CONTENT_CHANGE_CIPHER_SPEC, CONTENT_HANDSHAKE, MSG_CERTIFICATE, MSG_CLIENT_HELLO,
    MSG_CLIENT_KEY_EXCHANGE, MSG_HELLO_VERIFY_REQUEST, MSG_SERVER_HELLO, MSG_SERVER_HELLO_DONE,
    MSG_SERVER_KEY_EXCHANGE,
};
use crate::error::{Error, Result};
use crate::ingest::{App, Browser};
use crate::pcap::{write_capture, CapturedPacket};
use crate::rng::SplitMix64;

/// Serialize u16 code points as `0xnnnn` strings, accepting either form
/// on input. Keeps the JSON configs readable.
mod hex_u16 {
    use serde::de::{self, Unexpected};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &u16, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("0x{value:04x}"))
    }

    pub fn parse(s: &str) -> Option<u16> {
        if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            u16::from_str_radix(hex, 16).ok()
        } else {
            s.parse().ok()
        }
    }

    struct Visitor;

    impl serde::de::Visitor<'_> for Visitor {
        type Value = u16;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a u16 or a hex string like \"0xfefd\"")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<u16, E> {
            u16::try_from(v).map_err(|_| E::invalid_value(Unexpected::Unsigned(v), &self))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<u16, E> {
            parse(v).ok_or_else(|| E::invalid_value(Unexpected::Str(v), &self))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<u16, D::Error> {
        deserializer.deserialize_any(Visitor)
    }
}

mod hex_u16_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    struct Item(#[serde(with = "super::hex_u16")] u16);

    pub fn serialize<S: Serializer>(values: &[u16], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(values.iter().map(|v| format!("0x{v:04x}")))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u16>, D::Error> {
        Ok(Vec::<Item>::deserialize(deserializer)?
            .into_iter()
            .map(|Item(v)| v)
            .collect())
    }
}

/// One extension to offer: a canonical name (or `ext_<decimal>`) plus
/// either explicit hex data or a zero-filled length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_hex: Option<String>,
}

impl ExtensionSpec {
    fn build(&self) -> Result<Extension> {
        let code = extension_code(&self.name)
            .ok_or_else(|| Error::Profile(format!("unknown extension name {:?}", self.name)))?;
        let data = match (&self.data_hex, self.data_len) {
            (Some(hex), _) => decode_hex(hex)
                .ok_or_else(|| Error::Profile(format!("bad data_hex for {:?}", self.name)))?,
            (None, Some(len)) => vec![0u8; len],
            (None, None) => Vec::new(),
        };
        if data.len() > u16::MAX as usize {
            return Err(Error::Profile(format!(
                "extension {:?} data too long",
                self.name
            )));
        }
        Ok(Extension::new(code, data))
    }
}

fn decode_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

/// Per-flight retransmission ranges (inclusive, drawn uniformly).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Retransmissions {
    #[serde(default)]
    pub client_hello: (u32, u32),
    #[serde(default)]
    pub server_flight: (u32, u32),
    #[serde(default)]
    pub client_flight: (u32, u32),
    #[serde(default)]
    pub server_finished: (u32, u32),
}

fn default_one_pool_u8() -> Vec<u8> {
    vec![0]
}

fn default_noise_pool() -> Vec<u32> {
    vec![0]
}

/// Everything that shapes one class's handshakes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub includes_hvr_exchange: bool,
    #[serde(with = "hex_u16")]
    pub client_record_version: u16,
    #[serde(with = "hex_u16")]
    pub server_record_version: u16,
    #[serde(with = "hex_u16")]
    pub hello_version: u16,
    #[serde(with = "hex_u16_vec")]
    pub cipher_suites: Vec<u16>,
    #[serde(with = "hex_u16")]
    pub chosen_cipher: u16,
    pub client_extensions: Vec<ExtensionSpec>,
    pub server_extensions: Vec<ExtensionSpec>,
    /// Pool of client session-id lengths, drawn per flow.
    #[serde(default = "default_one_pool_u8")]
    pub session_id_lengths: Vec<u8>,
    /// Pool of server session-id lengths.
    #[serde(default = "default_one_pool_u8")]
    pub server_session_id_lengths: Vec<u8>,
    /// Cookie carried by the HelloVerifyRequest and echoed by the
    /// post-cookie hello.
    #[serde(default)]
    pub cookie_length: u8,
    /// Pool of cookie lengths for the first (or only) ClientHello.
    #[serde(default = "default_one_pool_u8")]
    pub first_hello_cookie_lengths: Vec<u8>,
    /// Percent chance a flow without a cookie exchange retransmits its
    /// hello with a bumped message sequence.
    #[serde(default)]
    pub client_seq_bump_percent: u32,
    /// Percent chance the post-cookie hello of a cookie exchange reuses
    /// message sequence 0 instead of advancing to 1.
    #[serde(default)]
    pub hvr_seq_reuse_percent: u32,
    /// Whether the server flight rides in one datagram with the hello.
    #[serde(default)]
    pub packed_server_flight: bool,
    #[serde(default)]
    pub retransmissions: Retransmissions,
    /// Pool of extra (non-DTLS) noise-packet counts, drawn per flow.
    #[serde(default = "default_noise_pool")]
    pub noise_packets: Vec<u32>,
}

impl ClassProfile {
    fn validate(&self) -> Result<()> {
        if self.cipher_suites.is_empty() {
            return Err(Error::Profile("cipher suite list is empty".into()));
        }
        for pool in [&self.session_id_lengths, &self.server_session_id_lengths] {
            if pool.is_empty() {
                return Err(Error::Profile("session-id length pool is empty".into()));
            }
            if pool.iter().any(|&l| l > 32) {
                return Err(Error::Profile("session id longer than 32 bytes".into()));
            }
        }
        if self.first_hello_cookie_lengths.is_empty() {
            return Err(Error::Profile("cookie length pool is empty".into()));
        }
        if self.noise_packets.is_empty() {
            return Err(Error::Profile("noise packet pool is empty".into()));
        }
        for ext in self.client_extensions.iter().chain(&self.server_extensions) {
            ext.build()?;
        }
        Ok(())
    }
}

/// One capture file to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureSpec {
    pub file: String,
    pub app: App,
    pub browser: Browser,
    pub count: usize,
    pub profile: ClassProfile,
}

/// A whole synthetic dataset: several labeled captures plus a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub captures: Vec<CaptureSpec>,
}

impl SynthConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

struct FlowEndpoints {
    client: (IpAddr, u16),
    server: (IpAddr, u16),
}

fn endpoints(flow_index: usize) -> FlowEndpoints {
    let hi = ((flow_index >> 8) & 0xFF) as u8;
    let lo = (flow_index & 0xFF) as u8;
    FlowEndpoints {
        client: (
            IpAddr::V4(Ipv4Addr::new(10, hi, lo, 2)),
            (40_000 + (flow_index % 20_000)) as u16,
        ),
        server: (IpAddr::V4(Ipv4Addr::new(192, 0, 2, 1)), 3478),
    }
}

struct FlowBuilder<'a> {
    profile: &'a ClassProfile,
    rng: SplitMix64,
    ends: FlowEndpoints,
    ts_sec: u32,
    packet_ordinal: u32,
    client_record_seq: u64,
    server_record_seq: u64,
    packets: Vec<CapturedPacket>,
}

impl<'a> FlowBuilder<'a> {
    fn push_datagram(&mut self, from_client: bool, records: &[RecordEntry]) {
        let mut payload = Vec::new();
        for entry in records {
            payload.extend_from_slice(&serialize_record(entry).expect("profile checked"));
        }
        self.push_raw(from_client, payload);
    }

    fn push_raw(&mut self, from_client: bool, payload: Vec<u8>) {
        let (from, to) = if from_client {
            (self.ends.client, self.ends.server)
        } else {
            (self.ends.server, self.ends.client)
        };
        self.packets.push(CapturedPacket {
            ts_sec: self.ts_sec,
            ts_usec: self.packet_ordinal * 1000,
            src_addr: from.0,
            src_port: from.1,
            dst_addr: to.0,
            dst_port: to.1,
            udp_payload: payload,
        });
        self.packet_ordinal += 1;
    }

    fn handshake_record(&mut self, from_client: bool, message: HandshakeMessage) -> RecordEntry {
        let (version, seq) = if from_client {
            let s = self.client_record_seq;
            self.client_record_seq += 1;
            (self.profile.client_record_version, s)
        } else {
            let s = self.server_record_seq;
            self.server_record_seq += 1;
            (self.profile.server_record_version, s)
        };
        record(
            CONTENT_HANDSHAKE,
            version,
            0,
            seq,
            RecordContent::Handshake(message),
        )
        .expect("profile checked")
    }

    fn opaque_record(
        &mut self,
        from_client: bool,
        content_type: u8,
        epoch: u16,
        bytes: Vec<u8>,
    ) -> RecordEntry {
        let (version, seq) = if from_client {
            let s = self.client_record_seq;
            self.client_record_seq += 1;
            (self.profile.client_record_version, s)
        } else {
            let s = self.server_record_seq;
            self.server_record_seq += 1;
            (self.profile.server_record_version, s)
        };
        record(
            content_type,
            version,
            epoch,
            seq,
            RecordContent::Opaque(bytes),
        )
        .expect("profile checked")
    }

    fn repeat(&mut self, from_client: bool, records: Vec<RecordEntry>, range: (u32, u32)) {
        let copies = 1 + self.rng.range_inclusive(range.0 as u64, range.1 as u64) as u32;
        for _ in 0..copies {
            self.push_datagram(from_client, &records);
        }
    }
}

fn build_extensions(specs: &[ExtensionSpec]) -> Result<Option<Vec<Extension>>> {
    if specs.is_empty() {
        return Ok(None);
    }
    Ok(Some(
        specs
            .iter()
            .map(ExtensionSpec::build)
            .collect::<Result<_>>()?,
    ))
}

/// Generate the packets of one flow. Exposed for tests; most callers go
/// through [`generate_capture`].
pub fn flow_packets(
    profile: &ClassProfile,
    capture_seed: u64,
    flow_index: usize,
) -> Result<Vec<CapturedPacket>> {
    profile.validate()?;
    let mut rng = SplitMix64::derive(capture_seed, flow_index as u64);

    let client_extensions = build_extensions(&profile.client_extensions)?;
    let server_extensions = build_extensions(&profile.server_extensions)?;

    let mut client_random = [0u8; 32];
    rng.fill_bytes(&mut client_random);
    let mut server_random = [0u8; 32];
    rng.fill_bytes(&mut server_random);
    let client_sid_len = *rng.choose(&profile.session_id_lengths) as usize;
    let server_sid_len = *rng.choose(&profile.server_session_id_lengths) as usize;
    let client_sid = rng.bytes(client_sid_len);
    let server_sid = rng.bytes(server_sid_len);
    let first_cookie_len = *rng.choose(&profile.first_hello_cookie_lengths) as usize;
    let first_cookie = rng.bytes(first_cookie_len);
    let hvr_cookie = rng.bytes(profile.cookie_length as usize);

    let client_hello = |cookie: Vec<u8>, seq: u16| -> Result<HandshakeMessage> {
        Ok(HandshakeMessage::unfragmented(
            MSG_CLIENT_HELLO,
            seq,
            HandshakeBody::ClientHello(ClientHelloBody {
                client_version: profile.hello_version,
                random: client_random,
                session_id: client_sid.clone(),
                cookie,
                cipher_suites: profile.cipher_suites.clone(),
                compression_methods: vec![0],
                extensions: client_extensions.clone(),
            }),
        )?)
    };

    let mut builder = FlowBuilder {
        profile,
        rng,
        ends: endpoints(flow_index),
        ts_sec: 1_600_000_000 + flow_index as u32,
        packet_ordinal: 0,
        client_record_seq: 0,
        server_record_seq: 0,
        packets: Vec::new(),
    };

    let mut client_msg_seq: u16 = 0;
    let mut server_msg_seq: u16 = 0;

    if profile.includes_hvr_exchange {
        // CH(0) -> HVR -> CH(cookie); the second hello usually advances
        // to sequence 1 but profiles may blur that
        let reuse_seq = builder.rng.percent(profile.hvr_seq_reuse_percent);
        let first = client_hello(first_cookie, client_msg_seq)?;
        let entry = builder.handshake_record(true, first);
        builder.push_datagram(true, &[entry]);
        if !reuse_seq {
            client_msg_seq += 1;
        }

        let hvr = HandshakeMessage::unfragmented(
            MSG_HELLO_VERIFY_REQUEST,
            server_msg_seq,
            HandshakeBody::HelloVerifyRequest(HelloVerifyRequestBody {
                server_version: profile.hello_version,
                cookie: hvr_cookie.clone(),
            }),
        )?;
        server_msg_seq += 1;
        let entry = builder.handshake_record(false, hvr);
        builder.push_datagram(false, &[entry]);

        let second = client_hello(hvr_cookie, client_msg_seq)?;
        client_msg_seq += 1;
        let entry = builder.handshake_record(true, second);
        builder.repeat(true, vec![entry], profile.retransmissions.client_hello);
    } else {
        let bump = builder.rng.percent(profile.client_seq_bump_percent);
        let first = client_hello(first_cookie.clone(), client_msg_seq)?;
        client_msg_seq += 1;
        if bump {
            // nonstandard client: the retransmitted hello bumps its
            // message sequence without any cookie exchange
            let entry = builder.handshake_record(true, first);
            builder.push_datagram(true, &[entry]);
            let bumped = client_hello(first_cookie, client_msg_seq)?;
            client_msg_seq += 1;
            let entry = builder.handshake_record(true, bumped);
            builder.repeat(true, vec![entry], profile.retransmissions.client_hello);
        } else {
            let entry = builder.handshake_record(true, first);
            builder.repeat(true, vec![entry], profile.retransmissions.client_hello);
        }
    }

    // server flight: SH [+ Certificate + ServerKeyExchange + HelloDone]
    let server_hello = HandshakeMessage::unfragmented(
        MSG_SERVER_HELLO,
        server_msg_seq,
        HandshakeBody::ServerHello(ServerHelloBody {
            server_version: profile.hello_version,
            random: server_random,
            session_id: server_sid,
            cipher_suite: profile.chosen_cipher,
            compression_method: 0,
            extensions: server_extensions,
        }),
    )?;
    server_msg_seq += 1;
    let certificate_bytes = builder.rng.bytes(180);
    let ske_bytes = builder.rng.bytes(120);
    let certificate = HandshakeMessage::unfragmented(
        MSG_CERTIFICATE,
        server_msg_seq,
        HandshakeBody::Opaque(certificate_bytes),
    )?;
    server_msg_seq += 1;
    let key_exchange = HandshakeMessage::unfragmented(
        MSG_SERVER_KEY_EXCHANGE,
        server_msg_seq,
        HandshakeBody::Opaque(ske_bytes),
    )?;
    server_msg_seq += 1;
    let hello_done = HandshakeMessage::unfragmented(
        MSG_SERVER_HELLO_DONE,
        server_msg_seq,
        HandshakeBody::Opaque(Vec::new()),
    )?;
    let _ = server_msg_seq;

    let sh_entry = builder.handshake_record(false, server_hello);
    let cert_entry = builder.handshake_record(false, certificate);
    let ske_entry = builder.handshake_record(false, key_exchange);
    let done_entry = builder.handshake_record(false, hello_done);
    if profile.packed_server_flight {
        builder.repeat(
            false,
            vec![sh_entry, cert_entry, ske_entry, done_entry],
            profile.retransmissions.server_flight,
        );
    } else {
        let copies = {
            let r = profile.retransmissions.server_flight;
            1 + builder.rng.range_inclusive(r.0 as u64, r.1 as u64)
        };
        for _ in 0..copies {
            builder.push_datagram(false, std::slice::from_ref(&sh_entry));
            builder.push_datagram(
                false,
                &[cert_entry.clone(), ske_entry.clone(), done_entry.clone()],
            );
        }
    }

    // client flight: ClientKeyExchange + ChangeCipherSpec + Finished
    let cke_bytes = builder.rng.bytes(66);
    let key_exchange = HandshakeMessage::unfragmented(
        MSG_CLIENT_KEY_EXCHANGE,
        client_msg_seq,
        HandshakeBody::Opaque(cke_bytes),
    )?;
    let cke_entry = builder.handshake_record(true, key_exchange);
    let ccs_entry = builder.opaque_record(true, CONTENT_CHANGE_CIPHER_SPEC, 0, vec![1]);
    let finished_bytes = builder.rng.bytes(48);
    let fin_entry = builder.opaque_record(true, CONTENT_HANDSHAKE, 1, finished_bytes);
    builder.repeat(
        true,
        vec![cke_entry, ccs_entry, fin_entry],
        profile.retransmissions.client_flight,
    );

    // server: ChangeCipherSpec + Finished
    let ccs_entry = builder.opaque_record(false, CONTENT_CHANGE_CIPHER_SPEC, 0, vec![1]);
    let finished_bytes = builder.rng.bytes(48);
    let fin_entry = builder.opaque_record(false, CONTENT_HANDSHAKE, 1, finished_bytes);
    builder.repeat(
        false,
        vec![ccs_entry, fin_entry],
        profile.retransmissions.server_finished,
    );

    // trailing non-DTLS noise (STUN-flavored, first byte 0x00)
    let noise = *builder.rng.choose(&profile.noise_packets);
    for n in 0..noise {
        let mut payload = vec![0x00, 0x01, 0x00, 0x08];
        let filler = builder.rng.bytes(16);
        payload.extend_from_slice(&filler);
        builder.push_raw(n % 2 == 0, payload);
    }

    Ok(builder.packets)
}

/// Write one capture file: `count` flows, deterministic in
/// (profile, count, seed).
pub fn generate_capture(spec: &CaptureSpec, capture_seed: u64, out_path: &Path) -> Result<()> {
    spec.profile.validate()?;
    let mut packets = Vec::new();
    for flow_index in 0..spec.count {
        packets.extend(flow_packets(&spec.profile, capture_seed, flow_index)?);
    }
    write_capture(out_path, &packets)
}

/// Outcome of generating a whole config: capture paths plus the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct GeneratedDataset {
    pub manifest_path: PathBuf,
    pub capture_paths: Vec<PathBuf>,
    pub total_flows: usize,
}

/// Generate every capture in the config into `out_dir` and write a
/// `manifest.csv` next to them.
pub fn generate_dataset(config: &SynthConfig, out_dir: &Path) -> Result<GeneratedDataset> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut capture_paths = Vec::new();
    let mut manifest = String::from("path,app,browser\n");
    let mut total_flows = 0usize;
    for (index, spec) in config.captures.iter().enumerate() {
        let capture_seed = SplitMix64::derive(config.seed, index as u64).next_u64();
        let path = out_dir.join(&spec.file);
        generate_capture(spec, capture_seed, &path)?;
        manifest.push_str(&format!("{},{},{}\n", spec.file, spec.app, spec.browser));
        capture_paths.push(path);
        total_flows += spec.count;
    }
    let manifest_path = out_dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|source| Error::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(GeneratedDataset {
        manifest_path,
        capture_paths,
        total_flows,
    })
}

/// A random syntactically-valid handshake message (for round-trip
/// checking). Covers typed hellos, opaque bodies, absent/empty/duplicate
/// extension blocks, and fragment headers.
pub fn random_valid_message(rng: &mut SplitMix64) -> HandshakeMessage {
    fn random_extensions(rng: &mut SplitMix64) -> Option<Vec<Extension>> {
        match rng.below(4) {
            0 => None,
            1 => Some(Vec::new()),
            _ => {
                let n = rng.range_inclusive(1, 5) as usize;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    // small code space on purpose: duplicates happen
                    let code = [0u16, 10, 11, 13, 14, 23, 35, 0xFF01, 60000][rng.below(9) as usize];
                    let len = rng.below(20) as usize;
                    out.push(Extension::new(code, rng.bytes(len)));
                }
                Some(out)
            }
        }
    }

    let version = *rng.choose(&[0xFEFFu16, 0xFEFD, 0xFEFD, 0x0100]);
    let seq = rng.below(8) as u16;
    match rng.below(6) {
        0 | 1 => {
            let mut random = [0u8; 32];
            rng.fill_bytes(&mut random);
            let n_suites = rng.range_inclusive(1, 16) as usize;
            let sid_len = rng.below(33) as usize;
            let cookie_len = rng.below(256) as usize;
            let body = ClientHelloBody {
                client_version: version,
                random,
                session_id: rng.bytes(sid_len),
                cookie: rng.bytes(cookie_len),
                cipher_suites: (0..n_suites).map(|_| rng.next_u32() as u16).collect(),
                compression_methods: vec![0],
                extensions: random_extensions(rng),
            };
            HandshakeMessage::unfragmented(MSG_CLIENT_HELLO, seq, HandshakeBody::ClientHello(body))
                .expect("bounded fields")
        }
        2 => {
            let mut random = [0u8; 32];
            rng.fill_bytes(&mut random);
            let sid_len = rng.below(33) as usize;
            let body = ServerHelloBody {
                server_version: version,
                random,
                session_id: rng.bytes(sid_len),
                cipher_suite: rng.next_u32() as u16,
                compression_method: 0,
                extensions: random_extensions(rng),
            };
            HandshakeMessage::unfragmented(MSG_SERVER_HELLO, seq, HandshakeBody::ServerHello(body))
                .expect("bounded fields")
        }
        3 => {
            let cookie_len = rng.below(256) as usize;
            HandshakeMessage::unfragmented(
                MSG_HELLO_VERIFY_REQUEST,
                seq,
                HandshakeBody::HelloVerifyRequest(HelloVerifyRequestBody {
                    server_version: version,
                    cookie: rng.bytes(cookie_len),
                }),
            )
            .expect("bounded fields")
        }
        4 => {
            // fragment of a larger message: opaque body by design
            let total = rng.range_inclusive(24, 300) as u32;
            let offset = rng.below(total as u64) as u32;
            let fragment_len = rng.range_inclusive(1, (total - offset) as u64) as u32;
            HandshakeMessage {
                msg_type: MSG_CERTIFICATE,
                length: total,
                message_seq: seq,
                fragment_offset: offset,
                fragment_length: fragment_len,
                body: HandshakeBody::Opaque(rng.bytes(fragment_len as usize)),
            }
        }
        _ => {
            let kind = *rng.choose(&[
                MSG_CERTIFICATE,
                MSG_SERVER_KEY_EXCHANGE,
                MSG_CLIENT_KEY_EXCHANGE,
                MSG_SERVER_HELLO_DONE,
            ]);
            let len = if kind == MSG_SERVER_HELLO_DONE {
                0
            } else {
                rng.range_inclusive(1, 240) as usize
            };
            HandshakeMessage::unfragmented(kind, seq, HandshakeBody::Opaque(rng.bytes(len)))
                .expect("bounded fields")
        }
    }
}

impl fmt::Display for GeneratedDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} capture file(s), {} flows, manifest {}",
            self.capture_paths.len(),
            self.total_flows,
            self.manifest_path.display()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::group_flows;
    use crate::dtls::{parse_datagram, serialize};
    use crate::handshake::assemble;
    use crate::pcap::read_capture;

    fn minimal_profile() -> ClassProfile {
        ClassProfile {
            includes_hvr_exchange: false,
            client_record_version: 0xFEFD,
            server_record_version: 0xFEFD,
            hello_version: 0xFEFD,
            cipher_suites: vec![0xC02B, 0xC02F],
            chosen_cipher: 0xC02B,
            client_extensions: vec![ExtensionSpec {
                name: "supported_groups".into(),
                data_len: Some(4),
                data_hex: None,
            }],
            server_extensions: vec![ExtensionSpec {
                name: "renegotiation_info".into(),
                data_len: Some(1),
                data_hex: None,
            }],
            session_id_lengths: vec![0],
            server_session_id_lengths: vec![0],
            cookie_length: 20,
            first_hello_cookie_lengths: vec![0],
            client_seq_bump_percent: 0,
            hvr_seq_reuse_percent: 0,
            packed_server_flight: false,
            retransmissions: Retransmissions::default(),
            noise_packets: vec![0],
        }
    }

    #[test]
    fn unpacked_no_retx_flow_is_exactly_five_packets() {
        let packets = flow_packets(&minimal_profile(), 1, 0).unwrap();
        assert_eq!(packets.len(), 5);
        // CH / SH / rest of server flight / client flight / server finished
    }

    #[test]
    fn hvr_packed_flow_is_exactly_six_packets() {
        let mut profile = minimal_profile();
        profile.includes_hvr_exchange = true;
        profile.packed_server_flight = true;
        let packets = flow_packets(&profile, 1, 0).unwrap();
        assert_eq!(packets.len(), 6);
    }

    #[test]
    fn generation_is_deterministic() {
        let profile = minimal_profile();
        let a = flow_packets(&profile, 7, 3).unwrap();
        let b = flow_packets(&profile, 7, 3).unwrap();
        assert_eq!(a, b);
        let c = flow_packets(&profile, 8, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn capture_files_are_byte_identical_for_same_seed() {
        let spec = CaptureSpec {
            file: "x.pcap".into(),
            app: App::Google,
            browser: Browser::Firefox,
            count: 20,
            profile: minimal_profile(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.pcap");
        let p2 = dir.path().join("b.pcap");
        generate_capture(&spec, 42, &p1).unwrap();
        generate_capture(&spec, 42, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn generated_captures_ingest_cleanly() {
        let mut profile = minimal_profile();
        profile.includes_hvr_exchange = true;
        profile.retransmissions.client_hello = (0, 2);
        profile.noise_packets = vec![0, 1, 2];
        let spec = CaptureSpec {
            file: "sf.pcap".into(),
            app: App::Snowflake,
            browser: Browser::Firefox,
            count: 25,
            profile,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sf.pcap");
        generate_capture(&spec, 9, &path).unwrap();
        let report = read_capture(&path).unwrap();
        assert!(!report.truncated);
        assert!(report.warnings.is_empty());
        let flows = group_flows(report.packets);
        assert_eq!(flows.len(), 25);
        for (key, packets) in flows {
            let flow = assemble(key, &packets).unwrap();
            let record = crate::features::extract_flow(&flow).unwrap();
            assert_eq!(record.server_message_seq, 1);
            assert_eq!(record.client_message_seq, 1);
            assert_eq!(record.client_cookie_length, 20);
        }
    }

    #[test]
    fn every_handshake_record_round_trips() {
        let mut profile = minimal_profile();
        profile.includes_hvr_exchange = true;
        let packets = flow_packets(&profile, 5, 0).unwrap();
        for packet in &packets {
            let parse = parse_datagram(&packet.udp_payload).unwrap();
            assert!(parse.is_clean());
            assert_eq!(parse.consumed, packet.udp_payload.len());
        }
    }

    #[test]
    fn seq_bump_produces_client_seq_one_without_hvr() {
        let mut profile = minimal_profile();
        profile.client_seq_bump_percent = 100;
        let packets = flow_packets(&profile, 11, 0).unwrap();
        let key = crate::capture::FlowKey::of_packet(&packets[0]);
        let flow = assemble(key, &packets).unwrap();
        let record = crate::features::extract_flow(&flow).unwrap();
        assert_eq!(record.client_message_seq, 1);
        assert_eq!(record.server_message_seq, 0);
    }

    #[test]
    fn dataset_generation_writes_manifest() {
        let config = SynthConfig {
            seed: 3,
            captures: vec![
                CaptureSpec {
                    file: "a.pcap".into(),
                    app: App::Facebook,
                    browser: Browser::Chrome,
                    count: 5,
                    profile: minimal_profile(),
                },
                CaptureSpec {
                    file: "b.pcap".into(),
                    app: App::Discord,
                    browser: Browser::Firefox,
                    count: 5,
                    profile: minimal_profile(),
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let out = generate_dataset(&config, dir.path()).unwrap();
        assert_eq!(out.total_flows, 10);
        let manifest = crate::ingest::read_manifest(&out.manifest_path).unwrap();
        assert_eq!(manifest.len(), 2);
        let report = crate::ingest::ingest_dataset(&manifest);
        assert_eq!(report.cells["facebook/chrome"], 5);
        assert_eq!(report.cells["discord/firefox"], 5);
        assert_eq!(report.total_handshakes, 10);
    }

    #[test]
    fn profile_errors_are_reported() {
        let mut profile = minimal_profile();
        profile.session_id_lengths = vec![40];
        assert!(matches!(
            flow_packets(&profile, 0, 0),
            Err(Error::Profile(_))
        ));
        let mut profile = minimal_profile();
        profile.client_extensions[0].name = "definitely_not_real".into();
        assert!(flow_packets(&profile, 0, 0).is_err());
    }

    #[test]
    fn random_messages_round_trip() {
        let mut rng = SplitMix64::new(0xF00D);
        for _ in 0..1000 {
            let message = random_valid_message(&mut rng);
            let bytes = serialize(&message, 0xFEFD, 0, 1).unwrap();
            let entries = crate::dtls::parse_datagram_strict(&bytes).unwrap();
            assert_eq!(entries.len(), 1);
            let RecordContent::Handshake(parsed) = &entries[0].content else {
                panic!();
            };
            assert_eq!(*parsed, message);
            let again = serialize(parsed, 0xFEFD, 0, 1).unwrap();
            assert_eq!(again, bytes);
        }
    }

    #[test]
    fn config_json_round_trips_hex_fields() {
        let json = r#"{
            "seed": 5,
            "captures": [{
                "file": "x.pcap", "app": "google", "browser": "chrome", "count": 2,
                "profile": {
                    "includes_hvr_exchange": false,
                    "client_record_version": "0xfeff",
                    "server_record_version": "0xfefd",
                    "hello_version": "0xfefd",
                    "cipher_suites": ["0xc02b", "0xc02f"],
                    "chosen_cipher": "0xc02b",
                    "client_extensions": [{"name": "use_srtp", "data_len": 9}],
                    "server_extensions": [{"name": "renegotiation_info", "data_hex": "00"}]
                }
            }]
        }"#;
        let config = SynthConfig::from_json(json).unwrap();
        let profile = &config.captures[0].profile;
        assert_eq!(profile.client_record_version, 0xFEFF);
        assert_eq!(profile.cipher_suites, vec![0xC02B, 0xC02F]);
        // defaults fill the pools
        assert_eq!(profile.session_id_lengths, vec![0]);
        assert_eq!(profile.noise_packets, vec![0]);
        let text = serde_json::to_string(&config).unwrap();
        let back = SynthConfig::from_json(&text).unwrap();
        assert_eq!(back, config);
    }
}
