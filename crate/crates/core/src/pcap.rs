//! Classic pcap reading and writing.
//!
//! Only the classic format (magic 0xA1B2C3D4, either byte order) is
//! supported; the datasets this pipeline consumes are distributable as
//! classic pcap. Link types: Ethernet (1, with optional 802.1Q tags) and
//! raw IP (101). IPv4 options are honoured; fragmented IP packets are
//! skipped with a warning rather than reassembled.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC_USEC: u32 = 0xA1B2_C3D4;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW_IP: u32 = 101;

/// One captured UDP datagram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedPacket {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub src_addr: IpAddr,
    pub dst_addr: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub udp_payload: Vec<u8>,
}

/// Outcome of reading one capture file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CaptureReadReport {
    pub packets: Vec<CapturedPacket>,
    /// Well-formed packets that were not UDP (or not IP at all).
    pub skipped_non_udp: usize,
    /// Per-packet problems: fragments, truncated headers, zero ports.
    pub warnings: Vec<String>,
    /// Set when the file ended in the middle of a packet record.
    pub truncated: bool,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        if end > self.data.len() {
            return None;
        }
        let out = &self.data[self.pos..end];
        self.pos = end;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16_be(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_be_bytes([b[0], b[1]]))
    }
}

fn read_u32(buf: &[u8], swapped: bool) -> u32 {
    let b = [buf[0], buf[1], buf[2], buf[3]];
    if swapped {
        u32::from_be_bytes(b)
    } else {
        u32::from_le_bytes(b)
    }
}

/// Read every UDP packet from a classic pcap file, in file order.
pub fn read_capture(path: &Path) -> Result<CaptureReadReport> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut global = [0u8; 24];
    reader
        .read_exact(&mut global)
        .map_err(|_| unreadable(path, "missing global header"))?;

    let magic = u32::from_le_bytes([global[0], global[1], global[2], global[3]]);
    let swapped = match magic {
        MAGIC_USEC => false,
        m if m == MAGIC_USEC.swap_bytes() => true,
        _ => return Err(unreadable(path, &format!("bad magic 0x{magic:08X}"))),
    };
    let linktype = read_u32(&global[20..24], swapped);
    if linktype != LINKTYPE_ETHERNET && linktype != LINKTYPE_RAW_IP {
        return Err(unreadable(
            path,
            &format!("unsupported link type {linktype}"),
        ));
    }

    let mut report = CaptureReadReport::default();
    let mut header = [0u8; 16];
    let mut index = 0usize;
    loop {
        match reader.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(source) => {
                return Err(Error::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        }
        let ts_sec = read_u32(&header[0..4], swapped);
        let ts_usec = read_u32(&header[4..8], swapped);
        let incl_len = read_u32(&header[8..12], swapped) as usize;
        let mut frame = vec![0u8; incl_len];
        if reader.read_exact(&mut frame).is_err() {
            report.truncated = true;
            report
                .warnings
                .push(format!("packet {index}: truncated record, stopping"));
            break;
        }
        match decode_frame(&frame, linktype) {
            FrameDecode::Udp {
                src_addr,
                dst_addr,
                src_port,
                dst_port,
                payload,
            } => {
                if src_port == 0 || dst_port == 0 {
                    report
                        .warnings
                        .push(format!("packet {index}: zero UDP port, skipped"));
                } else {
                    report.packets.push(CapturedPacket {
                        ts_sec,
                        ts_usec,
                        src_addr,
                        dst_addr,
                        src_port,
                        dst_port,
                        udp_payload: payload,
                    });
                }
            }
            FrameDecode::NotUdp => report.skipped_non_udp += 1,
            FrameDecode::Fragmented => {
                report
                    .warnings
                    .push(format!("packet {index}: IP fragment rejected"));
            }
            FrameDecode::Malformed(why) => {
                report.warnings.push(format!("packet {index}: {why}"));
            }
        }
        index += 1;
    }
    Ok(report)
}

fn unreadable(path: &Path, reason: &str) -> Error {
    Error::UnreadableCapture {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

enum FrameDecode {
    Udp {
        src_addr: IpAddr,
        dst_addr: IpAddr,
        src_port: u16,
        dst_port: u16,
        payload: Vec<u8>,
    },
    NotUdp,
    Fragmented,
    Malformed(&'static str),
}

fn decode_frame(frame: &[u8], linktype: u32) -> FrameDecode {
    let mut cur = Cursor {
        data: frame,
        pos: 0,
    };
    let ip_version = if linktype == LINKTYPE_ETHERNET {
        if cur.take(12).is_none() {
            return FrameDecode::Malformed("short ethernet header");
        }
        let mut ethertype = match cur.u16_be() {
            Some(t) => t,
            None => return FrameDecode::Malformed("short ethernet header"),
        };
        // 802.1Q / 802.1ad tags: skip TCI and read the inner type.
        while ethertype == 0x8100 || ethertype == 0x88A8 {
            if cur.take(2).is_none() {
                return FrameDecode::Malformed("short vlan tag");
            }
            ethertype = match cur.u16_be() {
                Some(t) => t,
                None => return FrameDecode::Malformed("short vlan tag"),
            };
        }
        match ethertype {
            0x0800 => 4,
            0x86DD => 6,
            _ => return FrameDecode::NotUdp,
        }
    } else {
        match frame.first() {
            Some(b) => match b >> 4 {
                4 => 4,
                6 => 6,
                _ => return FrameDecode::NotUdp,
            },
            None => return FrameDecode::Malformed("empty frame"),
        }
    };

    let (src_addr, dst_addr) = if ip_version == 4 {
        let start = cur.pos;
        let vihl = match cur.u8() {
            Some(b) => b,
            None => return FrameDecode::Malformed("short ipv4 header"),
        };
        if vihl >> 4 != 4 {
            return FrameDecode::Malformed("ipv4 version mismatch");
        }
        let ihl = (vihl & 0x0F) as usize * 4;
        if ihl < 20 {
            return FrameDecode::Malformed("ipv4 header length below 20");
        }
        let header = match cur.data.get(start..start + ihl) {
            Some(h) => h,
            None => return FrameDecode::Malformed("short ipv4 header"),
        };
        let flags_frag = u16::from_be_bytes([header[6], header[7]]);
        let more_fragments = flags_frag & 0x2000 != 0;
        let fragment_offset = flags_frag & 0x1FFF;
        if more_fragments || fragment_offset != 0 {
            return FrameDecode::Fragmented;
        }
        if header[9] != 17 {
            return FrameDecode::NotUdp;
        }
        let src = Ipv4Addr::new(header[12], header[13], header[14], header[15]);
        let dst = Ipv4Addr::new(header[16], header[17], header[18], header[19]);
        cur.pos = start + ihl;
        (IpAddr::V4(src), IpAddr::V4(dst))
    } else {
        let header = match cur.take(40) {
            Some(h) => h,
            None => return FrameDecode::Malformed("short ipv6 header"),
        };
        if header[6] != 17 {
            // Extension-header chains are not walked; handshake datagrams
            // in these captures carry UDP directly.
            return FrameDecode::NotUdp;
        }
        let mut s = [0u8; 16];
        s.copy_from_slice(&header[8..24]);
        let mut d = [0u8; 16];
        d.copy_from_slice(&header[24..40]);
        (IpAddr::V6(Ipv6Addr::from(s)), IpAddr::V6(Ipv6Addr::from(d)))
    };

    let src_port = match cur.u16_be() {
        Some(p) => p,
        None => return FrameDecode::Malformed("short udp header"),
    };
    let dst_port = match cur.u16_be() {
        Some(p) => p,
        None => return FrameDecode::Malformed("short udp header"),
    };
    let udp_len = match cur.u16_be() {
        Some(l) => l as usize,
        None => return FrameDecode::Malformed("short udp header"),
    };
    if cur.take(2).is_none() {
        return FrameDecode::Malformed("short udp header");
    }
    if udp_len < 8 {
        return FrameDecode::Malformed("udp length field below 8");
    }
    let payload = match cur.take(udp_len - 8) {
        Some(p) => p.to_vec(),
        None => return FrameDecode::Malformed("udp payload truncated by snaplen"),
    };
    FrameDecode::Udp {
        src_addr,
        dst_addr,
        src_port,
        dst_port,
        payload,
    }
}

/// Streaming classic-pcap writer (microsecond timestamps, Ethernet link).
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl PcapWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::new(BufWriter::new(file), path)
    }
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, path: &Path) -> Result<Self> {
        let mut header = Vec::with_capacity(24);
        header.extend_from_slice(&MAGIC_USEC.to_le_bytes());
        header.extend_from_slice(&2u16.to_le_bytes());
        header.extend_from_slice(&4u16.to_le_bytes());
        header.extend_from_slice(&0i32.to_le_bytes());
        header.extend_from_slice(&0u32.to_le_bytes());
        header.extend_from_slice(&65535u32.to_le_bytes());
        header.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&header).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self { inner })
    }

    /// Append a UDP datagram, building the Ethernet/IPv4/UDP encapsulation.
    pub fn write_udp(&mut self, packet: &CapturedPacket) -> std::io::Result<()> {
        let frame = build_frame(packet);
        let mut rec = Vec::with_capacity(16 + frame.len());
        rec.extend_from_slice(&packet.ts_sec.to_le_bytes());
        rec.extend_from_slice(&packet.ts_usec.to_le_bytes());
        rec.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        rec.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        rec.extend_from_slice(&frame);
        self.inner.write_all(&rec)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn build_frame(packet: &CapturedPacket) -> Vec<u8> {
    let (src, dst) = match (packet.src_addr, packet.dst_addr) {
        (IpAddr::V4(s), IpAddr::V4(d)) => (s, d),
        // The generator only emits IPv4; v6 input is a caller bug.
        _ => panic!("pcap writer only encapsulates IPv4"),
    };
    let udp_len = 8 + packet.udp_payload.len();
    let total_len = 20 + udp_len;
    let mut frame = Vec::with_capacity(14 + total_len);
    frame.extend_from_slice(&[0x02, 0x00, 0x00, 0x00, 0x00, 0x02]); // dst mac
    frame.extend_from_slice(&[0x02, 0x00, 0x00, 0x00, 0x00, 0x01]); // src mac
    frame.extend_from_slice(&0x0800u16.to_be_bytes());

    let mut ip = Vec::with_capacity(20);
    ip.push(0x45);
    ip.push(0);
    ip.extend_from_slice(&(total_len as u16).to_be_bytes());
    ip.extend_from_slice(&0u16.to_be_bytes()); // identification
    ip.extend_from_slice(&0u16.to_be_bytes()); // flags/fragment
    ip.push(64); // ttl
    ip.push(17); // udp
    ip.extend_from_slice(&0u16.to_be_bytes()); // checksum placeholder
    ip.extend_from_slice(&src.octets());
    ip.extend_from_slice(&dst.octets());
    let checksum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&checksum.to_be_bytes());
    frame.extend_from_slice(&ip);

    frame.extend_from_slice(&packet.src_port.to_be_bytes());
    frame.extend_from_slice(&packet.dst_port.to_be_bytes());
    frame.extend_from_slice(&(udp_len as u16).to_be_bytes());
    frame.extend_from_slice(&0u16.to_be_bytes()); // checksum 0 = absent
    frame.extend_from_slice(&packet.udp_payload);
    frame
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum = 0u32;
    for pair in header.chunks(2) {
        let word = u16::from_be_bytes([pair[0], *pair.get(1).unwrap_or(&0)]) as u32;
        sum += word;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// Convenience: write a whole capture to disk.
pub fn write_capture(path: &Path, packets: &[CapturedPacket]) -> Result<()> {
    let mut writer = PcapWriter::create(path)?;
    for p in packets {
        writer.write_udp(p).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    writer.finish().map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}
