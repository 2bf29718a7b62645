//! Flow assembly: from grouped UDP packets to ordered DTLS handshake
//! flows, canonical hello selection, and per-class packet statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capture::FlowKey;
use crate::dtls::{
    self, parse_datagram, HandshakeMessage, RecordContent, RecordHeader, MSG_CLIENT_HELLO,
    MSG_SERVER_HELLO,
};
use crate::error::{Error, Result};
use crate::ingest::{App, Browser};
use crate::pcap::CapturedPacket;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Sent by the endpoint that sent the first ClientHello.
    ToServer,
    ToClient,
}

/// One handshake message observed in a flow, with its record header and
/// the index of the packet that carried it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMessage {
    pub direction: Direction,
    pub packet_index: usize,
    pub record: RecordHeader,
    pub message: HandshakeMessage,
}

/// An assembled handshake: every DTLS handshake message of one flow in
/// capture order, plus the raw UDP packet count (noise included).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeFlow {
    pub key: FlowKey,
    pub messages: Vec<FlowMessage>,
    pub packet_count: usize,
    /// Packets that carried no parseable DTLS (noise, encrypted tails).
    pub unparsed_packets: usize,
    pub label: Option<(App, Browser)>,
}

impl HandshakeFlow {
    pub fn app(&self) -> Option<App> {
        self.label.map(|(app, _)| app)
    }
}

/// Parse one flow's packets into a `HandshakeFlow`. Returns `None` when no
/// well-formed ClientHello is present (the flow is not a DTLS handshake).
/// Unparseable packets are counted, never fatal.
pub fn assemble(key: FlowKey, packets: &[CapturedPacket]) -> Option<HandshakeFlow> {
    let mut parsed_packets = Vec::with_capacity(packets.len());
    let mut unparsed = 0usize;
    for (index, packet) in packets.iter().enumerate() {
        let sender = (packet.src_addr, packet.src_port);
        match parse_datagram(&packet.udp_payload) {
            Ok(parse) if parse.is_clean() => {
                let messages: Vec<(RecordHeader, HandshakeMessage)> = parse
                    .entries
                    .into_iter()
                    .filter_map(|entry| match entry.content {
                        RecordContent::Handshake(message) => Some((entry.header, message)),
                        RecordContent::Opaque(_) => None,
                    })
                    .collect();
                parsed_packets.push((index, sender, messages));
            }
            _ => {
                unparsed += 1;
            }
        }
    }

    // The sender of the first ClientHello is the client.
    let client = parsed_packets.iter().find_map(|(_, sender, messages)| {
        messages
            .iter()
            .any(|(_, m)| m.msg_type == MSG_CLIENT_HELLO)
            .then_some(*sender)
    })?;

    let mut messages = Vec::new();
    for (packet_index, sender, packet_messages) in parsed_packets {
        let direction = if sender == client {
            Direction::ToServer
        } else {
            Direction::ToClient
        };
        for (record, message) in packet_messages {
            messages.push(FlowMessage {
                direction,
                packet_index,
                record,
                message,
            });
        }
    }

    Some(HandshakeFlow {
        key,
        messages,
        packet_count: packets.len(),
        unparsed_packets: unparsed,
        label: None,
    })
}

/// Select the canonical ClientHello/ServerHello pair.
///
/// ClientHello: highest `message_seq` among client-direction ClientHellos
/// (the post-cookie hello when a HelloVerifyRequest occurred), earliest
/// capture instance on ties. ServerHello: first instance with the highest
/// `message_seq` among server-direction ServerHellos.
pub fn canonical_hellos(flow: &HandshakeFlow) -> Result<(&FlowMessage, &FlowMessage)> {
    let client_hello = pick_highest_seq(flow, Direction::ToServer, MSG_CLIENT_HELLO)
        .expect("flow invariant: at least one ClientHello");
    let server_hello = pick_highest_seq(flow, Direction::ToClient, MSG_SERVER_HELLO)
        .ok_or(Error::IncompleteHandshake)?;
    Ok((client_hello, server_hello))
}

fn pick_highest_seq(
    flow: &HandshakeFlow,
    direction: Direction,
    msg_type: u8,
) -> Option<&FlowMessage> {
    let candidates = flow
        .messages
        .iter()
        .filter(|m| m.direction == direction && m.message.msg_type == msg_type);
    let best_seq = candidates.clone().map(|m| m.message.message_seq).max()?;
    candidates
        .into_iter()
        .find(|m| m.message.message_seq == best_seq)
}

/// Per-class mean packet count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacketStats {
    /// app name -> (flow count, total packets, mean to 2 decimals)
    pub classes: BTreeMap<String, ClassPacketStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassPacketStats {
    pub flows: usize,
    pub total_packets: usize,
    pub mean_packets: f64,
}

pub fn packet_stats(flows: &[HandshakeFlow]) -> PacketStats {
    let mut totals: BTreeMap<App, (usize, usize)> = BTreeMap::new();
    for flow in flows {
        if let Some(app) = flow.app() {
            let cell = totals.entry(app).or_insert((0, 0));
            cell.0 += 1;
            cell.1 += flow.packet_count;
        }
    }
    let classes = totals
        .into_iter()
        .map(|(app, (flows, packets))| {
            let mean = packets as f64 / flows as f64;
            (
                app.name().to_string(),
                ClassPacketStats {
                    flows,
                    total_packets: packets,
                    mean_packets: (mean * 100.0).round() / 100.0,
                },
            )
        })
        .collect();
    PacketStats { classes }
}

impl PacketStats {
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<10} {:>8} {:>14}\n", "app", "flows", "mean packets");
        for (app, cell) in &self.classes {
            out.push_str(&format!(
                "{:<10} {:>8} {:>14.2}\n",
                app, cell.flows, cell.mean_packets
            ));
        }
        out
    }
}

/// One-line JSON summary of a flow, for the JSONL debug export.
#[derive(Debug, Serialize)]
pub struct FlowSummary {
    pub key: String,
    pub packet_count: usize,
    pub unparsed_packets: usize,
    pub label: Option<String>,
    pub messages: Vec<MessageSummary>,
}

#[derive(Debug, Serialize)]
pub struct MessageSummary {
    pub direction: Direction,
    pub msg_type: String,
    pub message_seq: u16,
    pub length: u32,
}

impl FlowSummary {
    pub fn of(flow: &HandshakeFlow) -> Self {
        Self {
            key: flow.key.to_string(),
            packet_count: flow.packet_count,
            unparsed_packets: flow.unparsed_packets,
            label: flow.label.map(|(a, b)| format!("{a}/{b}")),
            messages: flow
                .messages
                .iter()
                .map(|m| MessageSummary {
                    direction: m.direction,
                    msg_type: dtls::message_type_name(m.message.msg_type),
                    message_seq: m.message.message_seq,
                    length: m.message.length,
                })
                .collect(),
        }
    }
}
