//! Bidirectional flow grouping over captured UDP packets.

use std::net::IpAddr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::pcap::CapturedPacket;

/// One UDP endpoint.
pub type Endpoint = (IpAddr, u16);

/// Direction-insensitive 5-tuple key: the two endpoints in canonical
/// (sorted) order, so `FlowKey::new(a, b) == FlowKey::new(b, a)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub low: Endpoint,
    pub high: Endpoint,
}

impl FlowKey {
    pub fn new(a: Endpoint, b: Endpoint) -> Self {
        if a <= b {
            Self { low: a, high: b }
        } else {
            Self { low: b, high: a }
        }
    }

    pub fn of_packet(p: &CapturedPacket) -> Self {
        Self::new((p.src_addr, p.src_port), (p.dst_addr, p.dst_port))
    }
}

impl std::fmt::Display for FlowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}:{}<->{}:{}",
            self.low.0, self.low.1, self.high.0, self.high.1
        )
    }
}

/// Partition packets into bidirectional flows, preserving capture order
/// within each flow and first-seen order across flows.
pub fn group_flows(packets: Vec<CapturedPacket>) -> IndexMap<FlowKey, Vec<CapturedPacket>> {
    let mut flows: IndexMap<FlowKey, Vec<CapturedPacket>> = IndexMap::new();
    for packet in packets {
        flows
            .entry(FlowKey::of_packet(&packet))
            .or_default()
            .push(packet);
    }
    flows
}
