//! Countermeasure transforms over Snowflake handshakes and the
//! before/after evaluation comparing their effect.
//!
//! Each transform is a strategy behind the [`Transform`] trait, registered
//! by name and selected at runtime from configuration. Transforms operate
//! at the flow level (with feature re-extraction, keeping the result
//! wire-consistent) and, for completeness, directly on feature records.
//! All transforms are idempotent.

use serde::{Deserialize, Serialize};

use crate::dtls::{
    Extension, HandshakeBody, EXT_RENEGOTIATION_INFO, EXT_SUPPORTED_GROUPS, MSG_CLIENT_HELLO,
    MSG_HELLO_VERIFY_REQUEST, MSG_SERVER_HELLO,
};
use crate::error::Result;
use crate::eval::{cross_validate, identifier_search, EvaluationReport, IdentifierReport};
use crate::features::{extract_dataset, ExtensionFeature, FeatureRecord};
use crate::forest::Hyperparameters;
use crate::handshake::{Direction, HandshakeFlow};
use crate::ingest::App;

pub trait Transform: Send + Sync {
    /// Registry name (kebab-case).
    fn name(&self) -> &'static str;

    /// Rewrite a flow. Must be idempotent and a no-op where the transform
    /// does not apply.
    fn apply_flow(&self, flow: &HandshakeFlow) -> HandshakeFlow;

    /// The same rewrite expressed on an extracted feature record.
    fn apply_record(&self, record: &FeatureRecord) -> FeatureRecord;
}

/// Drop the pre-cookie ClientHello and the HelloVerifyRequest, renumbering
/// message sequences so the canonical hellos carry sequence 0. A no-op for
/// flows without a HelloVerifyRequest.
pub struct DropOptionalClientHello;

/// Offer `renegotiation_info` in the ServerHello (standard initial
/// encoding: a single zero-length-octet body, 5 wire bytes).
pub struct AddRenegotiationInfo;

/// Stop offering `supported_groups` in the ServerHello.
pub struct RemoveSupportedGroups;

static REGISTRY: [&dyn Transform; 3] = [
    &DropOptionalClientHello,
    &AddRenegotiationInfo,
    &RemoveSupportedGroups,
];

/// Every registered transform, in recommendation order.
pub fn registry() -> &'static [&'static dyn Transform] {
    &REGISTRY
}

/// Look a transform up by its registry name (case-insensitive, `_`
/// accepted for `-`).
pub fn lookup(name: &str) -> Option<&'static dyn Transform> {
    let normalized = name.trim().to_ascii_lowercase().replace('_', "-");
    registry().iter().copied().find(|t| t.name() == normalized)
}

/// Parse a comma-separated transform list; "all" selects the whole
/// registry.
pub fn parse_transform_list(spec: &str) -> Result<Vec<&'static dyn Transform>> {
    let trimmed = spec.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.eq_ignore_ascii_case("all") {
        return Ok(registry().to_vec());
    }
    trimmed
        .split(',')
        .map(|part| {
            lookup(part).ok_or_else(|| crate::error::Error::UnknownTransform(part.trim().into()))
        })
        .collect()
}

impl Transform for DropOptionalClientHello {
    fn name(&self) -> &'static str {
        "drop-optional-client-hello"
    }

    fn apply_flow(&self, flow: &HandshakeFlow) -> HandshakeFlow {
        let has_hvr = flow
            .messages
            .iter()
            .any(|m| m.message.msg_type == MSG_HELLO_VERIFY_REQUEST);
        if !has_hvr {
            return flow.clone();
        }

        let canonical_client_seq = flow
            .messages
            .iter()
            .filter(|m| {
                m.direction == Direction::ToServer && m.message.msg_type == MSG_CLIENT_HELLO
            })
            .map(|m| m.message.message_seq)
            .max()
            .unwrap_or(0);

        let drop = |m: &crate::handshake::FlowMessage| -> bool {
            (m.message.msg_type == MSG_CLIENT_HELLO
                && m.direction == Direction::ToServer
                && m.message.message_seq < canonical_client_seq)
                || m.message.msg_type == MSG_HELLO_VERIFY_REQUEST
        };

        let mut removed_client_seqs: Vec<u16> = Vec::new();
        let mut removed_server_seqs: Vec<u16> = Vec::new();
        for m in flow.messages.iter().filter(|m| drop(m)) {
            let seqs = if m.direction == Direction::ToServer {
                &mut removed_client_seqs
            } else {
                &mut removed_server_seqs
            };
            if !seqs.contains(&m.message.message_seq) {
                seqs.push(m.message.message_seq);
            }
        }

        let kept_packets: std::collections::BTreeSet<usize> = flow
            .messages
            .iter()
            .filter(|m| !drop(m))
            .map(|m| m.packet_index)
            .collect();
        let dropped_packets = flow
            .messages
            .iter()
            .filter(|m| drop(m))
            .map(|m| m.packet_index)
            .filter(|i| !kept_packets.contains(i))
            .collect::<std::collections::BTreeSet<usize>>();

        let mut messages = Vec::with_capacity(flow.messages.len());
        for m in flow.messages.iter().filter(|m| !drop(m)) {
            let mut kept = m.clone();
            let removed = if m.direction == Direction::ToServer {
                &removed_client_seqs
            } else {
                &removed_server_seqs
            };
            let shift = removed
                .iter()
                .filter(|&&s| s < m.message.message_seq)
                .count() as u16;
            kept.message.message_seq -= shift;
            messages.push(kept);
        }

        HandshakeFlow {
            key: flow.key.clone(),
            messages,
            packet_count: flow.packet_count - dropped_packets.len(),
            unparsed_packets: flow.unparsed_packets,
            label: flow.label,
        }
    }

    fn apply_record(&self, record: &FeatureRecord) -> FeatureRecord {
        // the server sequence is the HelloVerifyRequest witness here
        if record.server_message_seq == 0 {
            return record.clone();
        }
        let mut out = record.clone();
        out.client_message_seq = 0;
        out.server_message_seq = 0;
        out
    }
}

fn rewrite_server_hellos(
    flow: &HandshakeFlow,
    rewrite: impl Fn(&mut Vec<Extension>) -> bool,
) -> HandshakeFlow {
    let mut out = flow.clone();
    for m in &mut out.messages {
        if m.message.msg_type != MSG_SERVER_HELLO {
            continue;
        }
        let HandshakeBody::ServerHello(sh) = &mut m.message.body else {
            continue;
        };
        let mut extensions = sh.extensions.clone().unwrap_or_default();
        if rewrite(&mut extensions) {
            sh.extensions = Some(extensions);
            m.message
                .refresh_lengths()
                .expect("rewritten hello stays within wire widths");
            m.record.length = 12 + m.message.fragment_length as u16;
        }
    }
    out
}

impl Transform for AddRenegotiationInfo {
    fn name(&self) -> &'static str {
        "add-renegotiation-info"
    }

    fn apply_flow(&self, flow: &HandshakeFlow) -> HandshakeFlow {
        rewrite_server_hellos(flow, |extensions| {
            if extensions
                .iter()
                .any(|e| e.ext_type == EXT_RENEGOTIATION_INFO)
            {
                return false;
            }
            extensions.push(Extension::new(EXT_RENEGOTIATION_INFO, vec![0x00]));
            true
        })
    }

    fn apply_record(&self, record: &FeatureRecord) -> FeatureRecord {
        if record
            .server_extension_names()
            .any(|n| n == "renegotiation_info")
        {
            return record.clone();
        }
        let mut out = record.clone();
        let block_was_absent = out.server_extensions.is_empty();
        out.server_extensions.push(ExtensionFeature {
            name: "renegotiation_info".into(),
            data_len: 1,
        });
        out.server_extensions_length += 5;
        // a hello with no block at all also gains the 2-byte block length
        out.server_length += 5 + if block_was_absent { 2 } else { 0 };
        out
    }
}

impl Transform for RemoveSupportedGroups {
    fn name(&self) -> &'static str {
        "remove-supported-groups"
    }

    fn apply_flow(&self, flow: &HandshakeFlow) -> HandshakeFlow {
        rewrite_server_hellos(flow, |extensions| {
            let before = extensions.len();
            extensions.retain(|e| e.ext_type != EXT_SUPPORTED_GROUPS);
            extensions.len() != before
        })
    }

    fn apply_record(&self, record: &FeatureRecord) -> FeatureRecord {
        let Some(entry) = record
            .server_extensions
            .iter()
            .find(|e| e.name == "supported_groups")
        else {
            return record.clone();
        };
        let wire = 4 + entry.data_len;
        let mut out = record.clone();
        out.server_extensions
            .retain(|e| e.name != "supported_groups");
        out.server_extensions_length -= wire;
        out.server_length -= wire;
        out
    }
}

/// Apply transforms in order to Snowflake-labeled flows; everything else
/// passes through untouched.
pub fn apply_to_snowflake(
    flows: &[HandshakeFlow],
    transforms: &[&dyn Transform],
) -> Vec<HandshakeFlow> {
    flows
        .iter()
        .map(|flow| {
            if flow.app() == Some(App::Snowflake) {
                let mut out = flow.clone();
                for t in transforms {
                    out = t.apply_flow(&out);
                }
                out
            } else {
                flow.clone()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub transforms: Vec<String>,
    pub before: EvaluationReport,
    pub after: EvaluationReport,
    pub before_identifiers: IdentifierReport,
    pub after_identifiers: IdentifierReport,
    pub removed_identifiers: Vec<String>,
    pub remaining_identifiers: Vec<String>,
    /// Flags that appeared only after the rewrite (should stay empty).
    pub new_identifiers: Vec<String>,
    pub accuracy_delta: f64,
    pub snowflake_recall_delta: f64,
}

/// Cross-validate and identifier-search the dataset before and after
/// applying the transforms to its Snowflake flows.
pub fn evaluate_countermeasures(
    flows: &[HandshakeFlow],
    transforms: &[&dyn Transform],
    k: usize,
    hp: &Hyperparameters,
    seed: u64,
    tolerance: f64,
) -> Result<ComparisonReport> {
    let (before_records, _) = extract_dataset(flows);
    let transformed = apply_to_snowflake(flows, transforms);
    let (after_records, _) = extract_dataset(&transformed);

    let before = cross_validate(&before_records, k, hp, seed)?;
    let after = cross_validate(&after_records, k, hp, seed)?;
    let before_identifiers = identifier_search(&before_records, None, tolerance)?;
    let after_identifiers = identifier_search(&after_records, None, tolerance)?;

    let removed: Vec<String> = before_identifiers
        .flagged
        .iter()
        .filter(|name| !after_identifiers.flagged.contains(name))
        .cloned()
        .collect();
    let remaining: Vec<String> = before_identifiers
        .flagged
        .iter()
        .filter(|name| after_identifiers.flagged.contains(name))
        .cloned()
        .collect();
    let new: Vec<String> = after_identifiers
        .flagged
        .iter()
        .filter(|name| !before_identifiers.flagged.contains(name))
        .cloned()
        .collect();

    let accuracy_delta = after.accuracy - before.accuracy;
    let snowflake_recall_delta =
        after.class_metrics(App::Snowflake).recall - before.class_metrics(App::Snowflake).recall;

    Ok(ComparisonReport {
        transforms: transforms.iter().map(|t| t.name().to_string()).collect(),
        before,
        after,
        before_identifiers,
        after_identifiers,
        removed_identifiers: removed,
        remaining_identifiers: remaining,
        new_identifiers: new,
        accuracy_delta,
        snowflake_recall_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::FlowKey;
    use crate::dtls::{
        self, record, serialize_record, ClientHelloBody, HandshakeMessage, RecordContent,
        ServerHelloBody, VERSION_DTLS12,
    };
    use crate::handshake::assemble;
    use crate::ingest::Browser;
    use crate::pcap::CapturedPacket;
    use std::net::{IpAddr, Ipv4Addr};

    const CLIENT: (IpAddr, u16) = (IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)), 5000);
    const SERVER: (IpAddr, u16) = (IpAddr::V4(Ipv4Addr::new(10, 0, 0, 2)), 3478);

    fn ch(seq: u16, cookie: Vec<u8>) -> HandshakeMessage {
        HandshakeMessage::unfragmented(
            MSG_CLIENT_HELLO,
            seq,
            HandshakeBody::ClientHello(ClientHelloBody {
                client_version: VERSION_DTLS12,
                random: [1; 32],
                session_id: vec![],
                cookie,
                cipher_suites: vec![0xC02B],
                compression_methods: vec![0],
                extensions: None,
            }),
        )
        .unwrap()
    }

    fn sh(seq: u16, extensions: Vec<Extension>) -> HandshakeMessage {
        HandshakeMessage::unfragmented(
            MSG_SERVER_HELLO,
            seq,
            HandshakeBody::ServerHello(ServerHelloBody {
                server_version: VERSION_DTLS12,
                random: [2; 32],
                session_id: vec![],
                cipher_suite: 0xC02B,
                compression_method: 0,
                extensions: Some(extensions),
            }),
        )
        .unwrap()
    }

    fn hvr() -> HandshakeMessage {
        HandshakeMessage::unfragmented(
            MSG_HELLO_VERIFY_REQUEST,
            0,
            HandshakeBody::HelloVerifyRequest(dtls::HelloVerifyRequestBody {
                server_version: VERSION_DTLS12,
                cookie: vec![9; 20],
            }),
        )
        .unwrap()
    }

    fn packet(
        from: (IpAddr, u16),
        to: (IpAddr, u16),
        ts: u32,
        message: HandshakeMessage,
        record_seq: u64,
    ) -> CapturedPacket {
        let entry = record(
            22,
            VERSION_DTLS12,
            0,
            record_seq,
            RecordContent::Handshake(message),
        )
        .unwrap();
        CapturedPacket {
            ts_sec: 0,
            ts_usec: ts,
            src_addr: from.0,
            src_port: from.1,
            dst_addr: to.0,
            dst_port: to.1,
            udp_payload: serialize_record(&entry).unwrap(),
        }
    }

    fn snowflake_flow() -> HandshakeFlow {
        let packets = vec![
            packet(CLIENT, SERVER, 0, ch(0, vec![]), 0),
            packet(SERVER, CLIENT, 1, hvr(), 0),
            packet(CLIENT, SERVER, 2, ch(1, vec![9; 20]), 1),
            packet(
                SERVER,
                CLIENT,
                3,
                sh(1, vec![Extension::new(EXT_SUPPORTED_GROUPS, vec![0x00])]),
                1,
            ),
        ];
        let mut flow = assemble(FlowKey::new(CLIENT, SERVER), &packets).unwrap();
        flow.label = Some((App::Snowflake, Browser::Firefox));
        flow
    }

    fn plain_flow(app: App) -> HandshakeFlow {
        let packets = vec![
            packet(CLIENT, SERVER, 0, ch(0, vec![]), 0),
            packet(
                SERVER,
                CLIENT,
                1,
                sh(0, vec![Extension::new(EXT_RENEGOTIATION_INFO, vec![0x00])]),
                0,
            ),
        ];
        let mut flow = assemble(FlowKey::new(CLIENT, SERVER), &packets).unwrap();
        flow.label = Some((app, Browser::Chrome));
        flow
    }

    #[test]
    fn registry_resolves_names() {
        assert_eq!(registry().len(), 3);
        assert!(lookup("drop-optional-client-hello").is_some());
        assert!(lookup("Add_Renegotiation_Info").is_some());
        assert!(lookup("nonsense").is_none());
        assert!(parse_transform_list("all").unwrap().len() == 3);
        assert!(
            parse_transform_list("remove-supported-groups,add-renegotiation-info")
                .unwrap()
                .len()
                == 2
        );
        assert!(parse_transform_list("bogus").is_err());
    }

    #[test]
    fn drop_optional_hello_zeroes_sequences_and_packets() {
        let flow = snowflake_flow();
        let out = DropOptionalClientHello.apply_flow(&flow);
        assert_eq!(out.packet_count, flow.packet_count - 2);
        assert_eq!(out.messages.len(), 2);
        let record = crate::features::extract_flow(&out).unwrap();
        assert_eq!(record.client_message_seq, 0);
        assert_eq!(record.server_message_seq, 0);
        // the kept hello still carries its cookie
        assert_eq!(record.client_cookie_length, 20);
    }

    #[test]
    fn drop_optional_hello_is_a_noop_without_hvr() {
        let flow = plain_flow(App::Facebook);
        let out = DropOptionalClientHello.apply_flow(&flow);
        assert_eq!(out, flow);
    }

    #[test]
    fn add_renegotiation_info_grows_extensions_by_five() {
        let flow = snowflake_flow();
        let before = crate::features::extract_flow(&flow).unwrap();
        let out = AddRenegotiationInfo.apply_flow(&flow);
        let after = crate::features::extract_flow(&out).unwrap();
        assert_eq!(
            after.server_extensions_length,
            before.server_extensions_length + 5
        );
        assert!(after
            .server_extension_names()
            .any(|n| n == "renegotiation_info"));
        assert_eq!(after.server_length, before.server_length + 5);
    }

    #[test]
    fn remove_supported_groups_noop_when_absent() {
        let flow = plain_flow(App::Google);
        let out = RemoveSupportedGroups.apply_flow(&flow);
        assert_eq!(out, flow);
    }

    #[test]
    fn transforms_are_idempotent_at_both_levels() {
        let flow = snowflake_flow();
        let record = crate::features::extract_flow(&flow).unwrap();
        for transform in registry() {
            let once = transform.apply_flow(&flow);
            let twice = transform.apply_flow(&once);
            assert_eq!(once, twice, "flow idempotence of {}", transform.name());
            let once_r = transform.apply_record(&record);
            let twice_r = transform.apply_record(&once_r);
            assert_eq!(
                once_r,
                twice_r,
                "record idempotence of {}",
                transform.name()
            );
        }
    }

    #[test]
    fn flow_and_record_level_rewrites_agree() {
        let flow = snowflake_flow();
        let record = crate::features::extract_flow(&flow).unwrap();
        for transform in registry() {
            let via_flow = crate::features::extract_flow(&transform.apply_flow(&flow)).unwrap();
            let via_record = transform.apply_record(&record);
            assert_eq!(via_flow, via_record, "transform {}", transform.name());
        }
    }

    #[test]
    fn transformed_flows_reserialize_cleanly() {
        let mut flow = snowflake_flow();
        for transform in registry() {
            flow = transform.apply_flow(&flow);
        }
        for m in &flow.messages {
            let bytes = dtls::serialize(
                &m.message,
                m.record.version,
                m.record.epoch,
                m.record.sequence_number,
            )
            .unwrap();
            let entries = dtls::parse_datagram_strict(&bytes).unwrap();
            assert_eq!(entries.len(), 1);
            let RecordContent::Handshake(parsed) = &entries[0].content else {
                panic!();
            };
            assert_eq!(*parsed, m.message);
            assert_eq!(entries[0].header.length, m.record.length);
        }
    }

    #[test]
    fn non_snowflake_flows_are_bitwise_unchanged() {
        let flows = vec![
            snowflake_flow(),
            plain_flow(App::Facebook),
            plain_flow(App::Google),
            plain_flow(App::Discord),
        ];
        let out = apply_to_snowflake(&flows, registry());
        for (original, transformed) in flows.iter().zip(&out).skip(1) {
            assert_eq!(original, transformed);
        }
        assert_ne!(flows[0], out[0]);
    }

    #[test]
    fn empty_transform_list_is_identity() {
        // enough flows per class for 2-fold cross-validation
        let mut flows = Vec::new();
        for app in App::ALL {
            for i in 0..4u32 {
                let mut flow = if app == App::Snowflake {
                    snowflake_flow()
                } else {
                    plain_flow(app)
                };
                flow.packet_count += i as usize; // a little variety
                flows.push(flow);
            }
        }
        let hp = Hyperparameters {
            trees: 5,
            ..Default::default()
        };
        let report = evaluate_countermeasures(&flows, &[], 2, &hp, 1, 0.0).unwrap();
        assert_eq!(report.before, report.after);
        assert_eq!(report.before_identifiers, report.after_identifiers);
        assert!(report.removed_identifiers.is_empty());
        assert_eq!(report.accuracy_delta, 0.0);
    }

    #[test]
    fn dropping_the_hello_alone_leaves_the_extension_identifiers() {
        let mut flows = Vec::new();
        for app in App::ALL {
            for _ in 0..4 {
                flows.push(if app == App::Snowflake {
                    snowflake_flow()
                } else {
                    plain_flow(app)
                });
            }
        }
        let hp = Hyperparameters {
            trees: 5,
            ..Default::default()
        };
        let only_drop: Vec<&dyn Transform> = vec![&DropOptionalClientHello];
        let report = evaluate_countermeasures(&flows, &only_drop, 2, &hp, 1, 0.0).unwrap();
        assert_eq!(report.removed_identifiers, vec!["server.message_seq==1"]);
        assert_eq!(
            report.remaining_identifiers,
            vec![
                "server.extension:renegotiation_info".to_string(),
                "server.extension:supported_groups".to_string(),
            ]
        );
        assert!(report.new_identifiers.is_empty());
    }
}
