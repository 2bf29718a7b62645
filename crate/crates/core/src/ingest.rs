//! Labeled dataset ingestion and per-class accounting.
//!
//! The manifest is a CSV with a `path,app,browser` header; paths are
//! resolved relative to the manifest's directory. Each capture file is one
//! (application, browser) cell, and the accounting report counts flows
//! that contain at least one well-formed DTLS ClientHello.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::group_flows;
use crate::error::{Error, Result};
use crate::handshake::{assemble, HandshakeFlow};
use crate::pcap::read_capture;

/// The four applications the pipeline distinguishes, in the fixed order
/// used for reports, confusion matrices, and vote tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum App {
    Snowflake,
    Facebook,
    Google,
    Discord,
}

impl App {
    pub const ALL: [App; 4] = [App::Snowflake, App::Facebook, App::Google, App::Discord];

    pub fn index(self) -> usize {
        match self {
            App::Snowflake => 0,
            App::Facebook => 1,
            App::Google => 2,
            App::Discord => 3,
        }
    }

    pub fn from_index(i: usize) -> App {
        Self::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            App::Snowflake => "snowflake",
            App::Facebook => "facebook",
            App::Google => "google",
            App::Discord => "discord",
        }
    }

    pub fn parse(s: &str) -> Result<App> {
        match s.trim().to_ascii_lowercase().as_str() {
            "snowflake" | "sf" => Ok(App::Snowflake),
            "facebook" | "fb" | "messenger" => Ok(App::Facebook),
            "google" | "g" | "hangouts" => Ok(App::Google),
            "discord" | "d" => Ok(App::Discord),
            other => Err(Error::UnknownApp(other.to_string())),
        }
    }
}

impl fmt::Display for App {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Browser {
    Firefox,
    Chrome,
}

impl Browser {
    pub const ALL: [Browser; 2] = [Browser::Firefox, Browser::Chrome];

    pub fn name(self) -> &'static str {
        match self {
            Browser::Firefox => "firefox",
            Browser::Chrome => "chrome",
        }
    }

    pub fn parse(s: &str) -> Result<Browser> {
        match s.trim().to_ascii_lowercase().as_str() {
            "firefox" | "ff" => Ok(Browser::Firefox),
            "chrome" | "chromium" => Ok(Browser::Chrome),
            other => Err(Error::UnknownBrowser(other.to_string())),
        }
    }
}

impl fmt::Display for Browser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One manifest row: a capture file plus its labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCapture {
    pub path: PathBuf,
    pub app: App,
    pub browser: Browser,
}

/// Read a `path,app,browser` manifest, resolving paths relative to it.
pub fn read_manifest(path: &Path) -> Result<Vec<LabeledCapture>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest(e.to_string()))?
        .clone();
    let idx = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Manifest(format!("missing column {name:?}")))
    };
    let (pi, ai, bi) = (idx("path")?, idx("app")?, idx("browser")?);
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Manifest(e.to_string()))?;
        let raw = PathBuf::from(&record[pi]);
        let resolved = if raw.is_absolute() {
            raw
        } else {
            base.join(raw)
        };
        rows.push(LabeledCapture {
            path: resolved,
            app: App::parse(&record[ai])?,
            browser: Browser::parse(&record[bi])?,
        });
    }
    Ok(rows)
}

/// Per-cell handshake accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    /// Handshake counts keyed "app/browser"; every cell present, zeros kept.
    pub cells: BTreeMap<String, usize>,
    /// Per-application totals.
    pub totals: BTreeMap<String, usize>,
    pub total_handshakes: usize,
    /// Flows dropped because they contained no well-formed ClientHello.
    pub flows_without_client_hello: usize,
    pub total_udp_packets: usize,
    pub skipped_non_udp: usize,
    pub files_read: usize,
    /// Unreadable files; ingestion continues past them.
    pub errors: Vec<String>,
}

impl IngestReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>10} {:>10} {:>8}\n",
            "app", "firefox", "chrome", "total"
        ));
        for app in App::ALL {
            let fx = self
                .cells
                .get(&format!("{app}/firefox"))
                .copied()
                .unwrap_or(0);
            let ch = self
                .cells
                .get(&format!("{app}/chrome"))
                .copied()
                .unwrap_or(0);
            out.push_str(&format!(
                "{:<10} {:>10} {:>10} {:>8}\n",
                app.name(),
                fx,
                ch,
                fx + ch
            ));
        }
        out.push_str(&format!("total handshakes: {}\n", self.total_handshakes));
        out
    }
}

/// Result of loading one labeled capture file into assembled flows.
#[derive(Debug)]
pub struct LoadedCapture {
    pub label: (App, Browser),
    pub flows: Vec<HandshakeFlow>,
    pub flows_without_client_hello: usize,
    pub udp_packets: usize,
    pub skipped_non_udp: usize,
    pub warnings: Vec<String>,
}

/// Parse one capture file and assemble its handshake flows.
pub fn load_capture(entry: &LabeledCapture) -> Result<LoadedCapture> {
    let report = read_capture(&entry.path)?;
    let udp_packets = report.packets.len();
    let mut flows = Vec::new();
    let mut without_ch = 0usize;
    for (key, packets) in group_flows(report.packets) {
        match assemble(key, &packets) {
            Some(mut flow) => {
                flow.label = Some((entry.app, entry.browser));
                flows.push(flow);
            }
            None => without_ch += 1,
        }
    }
    Ok(LoadedCapture {
        label: (entry.app, entry.browser),
        flows,
        flows_without_client_hello: without_ch,
        udp_packets,
        skipped_non_udp: report.skipped_non_udp,
        warnings: report.warnings,
    })
}

/// Load every manifest entry (in parallel), keeping manifest order.
/// Unreadable files are reported, not fatal.
pub fn load_dataset(manifest: &[LabeledCapture]) -> (Vec<HandshakeFlow>, IngestReport) {
    let loaded: Vec<std::result::Result<LoadedCapture, String>> = manifest
        .par_iter()
        .map(|entry| load_capture(entry).map_err(|e| format!("{}: {e}", entry.path.display())))
        .collect();

    let mut cells: BTreeMap<String, usize> = BTreeMap::new();
    for app in App::ALL {
        for browser in Browser::ALL {
            cells.insert(format!("{app}/{browser}"), 0);
        }
    }
    let mut report = IngestReport {
        cells,
        totals: App::ALL.iter().map(|a| (a.name().to_string(), 0)).collect(),
        total_handshakes: 0,
        flows_without_client_hello: 0,
        total_udp_packets: 0,
        skipped_non_udp: 0,
        files_read: 0,
        errors: Vec::new(),
    };
    let mut flows = Vec::new();
    for result in loaded {
        match result {
            Ok(capture) => {
                let (app, browser) = capture.label;
                *report
                    .cells
                    .get_mut(&format!("{app}/{browser}"))
                    .expect("all cells pre-seeded") += capture.flows.len();
                *report
                    .totals
                    .get_mut(app.name())
                    .expect("all apps pre-seeded") += capture.flows.len();
                report.total_handshakes += capture.flows.len();
                report.flows_without_client_hello += capture.flows_without_client_hello;
                report.total_udp_packets += capture.udp_packets;
                report.skipped_non_udp += capture.skipped_non_udp;
                report.files_read += 1;
                flows.extend(capture.flows);
            }
            Err(message) => report.errors.push(message),
        }
    }
    (flows, report)
}

/// Accounting-only entry point.
pub fn ingest_dataset(manifest: &[LabeledCapture]) -> IngestReport {
    load_dataset(manifest).1
}
