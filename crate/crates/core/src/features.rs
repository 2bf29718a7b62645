//! Feature extraction from canonical hellos and one-hot encoding into a
//! numeric design matrix.
//!
//! The record keeps the wire values verbatim; the only normalization is
//! extension naming. The schema is data-derived: numeric columns for the
//! length/offset/sequence fields, one one-hot column per observed value of
//! each categorical field (versions, the full ordered cipher-suite list,
//! the chosen cipher), and one presence column per extension name seen on
//! each side. Values unseen when the schema was built encode to all-zeros
//! across that field's columns, so cross-validation folds can encode test
//! rows under a training-fold schema.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dtls::HandshakeBody;
use crate::error::{Error, Result};
use crate::handshake::{canonical_hellos, FlowMessage, HandshakeFlow};
use crate::ingest::App;

/// One offered extension: canonical name plus its wire data length (kept
/// so flow-level and record-level rewrites stay in agreement).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionFeature {
    pub name: String,
    pub data_len: u32,
}

/// The raw per-handshake feature values, pre-encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub client_length: u32,
    pub client_message_seq: u16,
    pub client_fragment_offset: u32,
    pub client_dtls_version: u16,
    pub client_sid_length: u32,
    pub client_cookie_length: u32,
    pub client_cipher_suites_length: u32,
    pub client_cipher_suites: Vec<u16>,
    pub client_extensions_length: u32,
    pub client_extensions: Vec<ExtensionFeature>,

    pub server_length: u32,
    pub server_message_seq: u16,
    pub server_fragment_offset: u32,
    pub server_dtls_version: u16,
    pub server_sid_length: u32,
    pub server_extensions_length: u32,
    pub server_extensions: Vec<ExtensionFeature>,
    pub server_chosen_cipher: u16,

    pub label: Option<App>,
}

impl FeatureRecord {
    pub fn client_extension_names(&self) -> impl Iterator<Item = &str> {
        self.client_extensions.iter().map(|e| e.name.as_str())
    }

    pub fn server_extension_names(&self) -> impl Iterator<Item = &str> {
        self.server_extensions.iter().map(|e| e.name.as_str())
    }
}

/// Copy the hello-level feature fields from a canonical hello pair.
pub fn extract(client_hello: &FlowMessage, server_hello: &FlowMessage) -> Result<FeatureRecord> {
    let HandshakeBody::ClientHello(ch) = &client_hello.message.body else {
        return Err(Error::IncompleteHandshake);
    };
    let HandshakeBody::ServerHello(sh) = &server_hello.message.body else {
        return Err(Error::IncompleteHandshake);
    };
    Ok(FeatureRecord {
        client_length: client_hello.message.length,
        client_message_seq: client_hello.message.message_seq,
        client_fragment_offset: client_hello.message.fragment_offset,
        client_dtls_version: client_hello.record.version,
        client_sid_length: ch.session_id.len() as u32,
        client_cookie_length: ch.cookie.len() as u32,
        client_cipher_suites_length: ch.cipher_suites_length() as u32,
        client_cipher_suites: ch.cipher_suites.clone(),
        client_extensions_length: ch.extensions_total_length() as u32,
        client_extensions: ch
            .extension_list()
            .iter()
            .map(|e| ExtensionFeature {
                name: e.name(),
                data_len: e.data.len() as u32,
            })
            .collect(),
        server_length: server_hello.message.length,
        server_message_seq: server_hello.message.message_seq,
        server_fragment_offset: server_hello.message.fragment_offset,
        server_dtls_version: server_hello.record.version,
        server_sid_length: sh.session_id.len() as u32,
        server_extensions_length: sh.extensions_total_length() as u32,
        server_extensions: sh
            .extension_list()
            .iter()
            .map(|e| ExtensionFeature {
                name: e.name(),
                data_len: e.data.len() as u32,
            })
            .collect(),
        server_chosen_cipher: sh.cipher_suite,
        label: None,
    })
}

/// Extract one flow's feature record, carrying its label.
pub fn extract_flow(flow: &HandshakeFlow) -> Result<FeatureRecord> {
    let (ch, sh) = canonical_hellos(flow)?;
    let mut record = extract(ch, sh)?;
    record.label = flow.app();
    Ok(record)
}

/// Extract a whole dataset; incomplete handshakes are excluded and counted.
pub fn extract_dataset(flows: &[HandshakeFlow]) -> (Vec<FeatureRecord>, usize) {
    let mut records = Vec::with_capacity(flows.len());
    let mut excluded = 0usize;
    for flow in flows {
        match extract_flow(flow) {
            Ok(record) => records.push(record),
            Err(_) => excluded += 1,
        }
    }
    (records, excluded)
}

/// The extracted feature fields, in a fixed order with the ClientHello
/// side before the ServerHello side of each field pair. This order fixes
/// the schema's column layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldId {
    ClientLength,
    ServerLength,
    ClientMessageSeq,
    ServerMessageSeq,
    ClientFragmentOffset,
    ServerFragmentOffset,
    ClientDtlsVersion,
    ServerDtlsVersion,
    ClientSidLength,
    ServerSidLength,
    ClientCookieLength,
    ClientCipherSuitesLength,
    ClientCipherSuites,
    ClientExtensionsLength,
    ServerExtensionsLength,
    ClientExtensions,
    ServerExtensions,
    ServerChosenCipher,
}

impl FieldId {
    pub const ORDER: [FieldId; 18] = [
        FieldId::ClientLength,
        FieldId::ServerLength,
        FieldId::ClientMessageSeq,
        FieldId::ServerMessageSeq,
        FieldId::ClientFragmentOffset,
        FieldId::ServerFragmentOffset,
        FieldId::ClientDtlsVersion,
        FieldId::ServerDtlsVersion,
        FieldId::ClientSidLength,
        FieldId::ServerSidLength,
        FieldId::ClientCookieLength,
        FieldId::ClientCipherSuitesLength,
        FieldId::ClientCipherSuites,
        FieldId::ClientExtensionsLength,
        FieldId::ServerExtensionsLength,
        FieldId::ClientExtensions,
        FieldId::ServerExtensions,
        FieldId::ServerChosenCipher,
    ];

    pub fn is_numeric(self) -> bool {
        !matches!(
            self,
            FieldId::ClientDtlsVersion
                | FieldId::ServerDtlsVersion
                | FieldId::ClientCipherSuites
                | FieldId::ClientExtensions
                | FieldId::ServerExtensions
                | FieldId::ServerChosenCipher
        )
    }
}

fn hex16(v: u16) -> String {
    format!("0x{v:04x}")
}

fn suite_list_value(suites: &[u16]) -> String {
    let parts: Vec<String> = suites.iter().map(|s| hex16(*s)).collect();
    format!("[{}]", parts.join("+"))
}

fn numeric_value(record: &FeatureRecord, field: FieldId) -> f64 {
    match field {
        FieldId::ClientLength => record.client_length as f64,
        FieldId::ServerLength => record.server_length as f64,
        FieldId::ClientMessageSeq => record.client_message_seq as f64,
        FieldId::ServerMessageSeq => record.server_message_seq as f64,
        FieldId::ClientFragmentOffset => record.client_fragment_offset as f64,
        FieldId::ServerFragmentOffset => record.server_fragment_offset as f64,
        FieldId::ClientSidLength => record.client_sid_length as f64,
        FieldId::ServerSidLength => record.server_sid_length as f64,
        FieldId::ClientCookieLength => record.client_cookie_length as f64,
        FieldId::ClientCipherSuitesLength => record.client_cipher_suites_length as f64,
        FieldId::ClientExtensionsLength => record.client_extensions_length as f64,
        FieldId::ServerExtensionsLength => record.server_extensions_length as f64,
        _ => unreachable!("categorical field has no numeric value"),
    }
}

fn categorical_value(record: &FeatureRecord, field: FieldId) -> String {
    match field {
        FieldId::ClientDtlsVersion => hex16(record.client_dtls_version),
        FieldId::ServerDtlsVersion => hex16(record.server_dtls_version),
        FieldId::ClientCipherSuites => suite_list_value(&record.client_cipher_suites),
        FieldId::ServerChosenCipher => hex16(record.server_chosen_cipher),
        _ => unreachable!("not a one-hot field"),
    }
}

fn field_label(field: FieldId) -> &'static str {
    match field {
        FieldId::ClientLength => "client.length",
        FieldId::ServerLength => "server.length",
        FieldId::ClientMessageSeq => "client.message_seq",
        FieldId::ServerMessageSeq => "server.message_seq",
        FieldId::ClientFragmentOffset => "client.fragment_offset",
        FieldId::ServerFragmentOffset => "server.fragment_offset",
        FieldId::ClientDtlsVersion => "client.dtls_version",
        FieldId::ServerDtlsVersion => "server.dtls_version",
        FieldId::ClientSidLength => "client.sid_length",
        FieldId::ServerSidLength => "server.sid_length",
        FieldId::ClientCookieLength => "client.cookie_length",
        FieldId::ClientCipherSuitesLength => "client.cipher_suites_length",
        FieldId::ClientCipherSuites => "client.cipher_suites",
        FieldId::ClientExtensionsLength => "client.extensions_length",
        FieldId::ServerExtensionsLength => "server.extensions_length",
        FieldId::ClientExtensions => "client.extension",
        FieldId::ServerExtensions => "server.extension",
        FieldId::ServerChosenCipher => "server.chosen_cipher",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnKind {
    Numeric,
    OneHot { value: String },
    ExtensionPresence { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub field: FieldId,
    pub kind: ColumnKind,
    pub name: String,
}

/// Ordered column dictionary; stable for a given record multiset and
/// serialized alongside any trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Human-readable per-field breakdown, for the column-count audit.
    pub fn render_audit(&self) -> String {
        let mut out = String::new();
        for field in FieldId::ORDER {
            let members: Vec<&Column> = self.columns.iter().filter(|c| c.field == field).collect();
            out.push_str(&format!(
                "{:<28} {:>3} column(s)\n",
                field_label(field),
                members.len()
            ));
            if members.len() > 1
                || !matches!(members.first().map(|c| &c.kind), Some(ColumnKind::Numeric))
            {
                for column in members {
                    out.push_str(&format!("    {}\n", column.name));
                }
            }
        }
        out.push_str(&format!("total: {} columns\n", self.len()));
        out
    }
}

/// Build the schema from an observed record collection.
pub fn build_schema(records: &[FeatureRecord]) -> Result<FeatureSchema> {
    if records.is_empty() {
        return Err(Error::EmptySchema);
    }
    let mut columns = Vec::new();
    for field in FieldId::ORDER {
        if field.is_numeric() {
            columns.push(Column {
                field,
                kind: ColumnKind::Numeric,
                name: field_label(field).to_string(),
            });
            continue;
        }
        match field {
            FieldId::ClientExtensions | FieldId::ServerExtensions => {
                let mut names = BTreeSet::new();
                for record in records {
                    let iter: Box<dyn Iterator<Item = &str>> = if field == FieldId::ClientExtensions
                    {
                        Box::new(record.client_extension_names())
                    } else {
                        Box::new(record.server_extension_names())
                    };
                    names.extend(iter.map(str::to_string));
                }
                for name in names {
                    columns.push(Column {
                        field,
                        name: format!("{}:{}", field_label(field), name),
                        kind: ColumnKind::ExtensionPresence { name },
                    });
                }
            }
            _ => {
                let values: BTreeSet<String> = records
                    .iter()
                    .map(|r| categorical_value(r, field))
                    .collect();
                for value in values {
                    columns.push(Column {
                        field,
                        name: format!("{}={}", field_label(field), value),
                        kind: ColumnKind::OneHot { value },
                    });
                }
            }
        }
    }
    Ok(FeatureSchema { columns })
}

/// Value of a single column for one record.
pub fn column_value(record: &FeatureRecord, column: &Column) -> f64 {
    match &column.kind {
        ColumnKind::Numeric => numeric_value(record, column.field),
        ColumnKind::OneHot { value } => {
            if categorical_value(record, column.field) == *value {
                1.0
            } else {
                0.0
            }
        }
        ColumnKind::ExtensionPresence { name } => {
            let present = match column.field {
                FieldId::ClientExtensions => record.client_extension_names().any(|n| n == name),
                FieldId::ServerExtensions => record.server_extension_names().any(|n| n == name),
                _ => unreachable!(),
            };
            if present {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Encode one record as a numeric row under a schema.
pub fn encode(record: &FeatureRecord, schema: &FeatureSchema) -> Vec<f64> {
    schema
        .columns
        .iter()
        .map(|column| column_value(record, column))
        .collect()
}

/// Encoded design matrix with row labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Option<App>>,
}

pub fn encode_matrix(records: &[FeatureRecord], schema: &FeatureSchema) -> FeatureMatrix {
    FeatureMatrix {
        schema: schema.clone(),
        rows: records.iter().map(|r| encode(r, schema)).collect(),
        labels: records.iter().map(|r| r.label).collect(),
    }
}

impl FeatureMatrix {
    /// CSV export: header row of schema column names plus a trailing
    /// `label` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let mut header = self.schema.column_names();
        header.push("label".to_string());
        csv.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            fields.push(label.map(|a| a.name().to_string()).unwrap_or_default());
            csv.write_record(&fields)?;
        }
        csv.flush().map_err(|e| Error::Manifest(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, schema: &FeatureSchema) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers = csv.headers()?.clone();
        let expected = {
            let mut h = schema.column_names();
            h.push("label".to_string());
            h
        };
        let actual: Vec<String> = headers.iter().map(str::to_string).collect();
        if actual != expected {
            return Err(Error::Manifest(
                "feature CSV header does not match the schema".to_string(),
            ));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for result in csv.records() {
            let record = result?;
            let mut row = Vec::with_capacity(schema.len());
            for i in 0..schema.len() {
                row.push(record[i].parse::<f64>().map_err(|e| {
                    Error::Manifest(format!("bad numeric cell {:?}: {e}", &record[i]))
                })?);
            }
            let label = record[schema.len()].trim();
            labels.push(if label.is_empty() {
                None
            } else {
                Some(App::parse(label)?)
            });
            rows.push(row);
        }
        Ok(Self {
            schema: schema.clone(),
            rows,
            labels,
        })
    }
}

/// Write raw feature records as JSON lines (one record per line).
pub fn write_records_jsonl<W: Write>(records: &[FeatureRecord], mut writer: W) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::Manifest(e.to_string()))?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: std::io::Read>(reader: R) -> Result<Vec<FeatureRecord>> {
    let buffered = std::io::BufReader::new(reader);
    let mut records = Vec::new();
    for line in buffered.lines() {
        let line = line.map_err(|e| Error::Manifest(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
