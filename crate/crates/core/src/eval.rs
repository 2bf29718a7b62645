//! Stratified cross-validation, classification metrics, and the
//! identifier search that looks for class-unique features.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_schema, column_value, encode, Column, ColumnKind, FeatureRecord};
use crate::forest::{predict_forest, train_forest, Hyperparameters};
use crate::ingest::App;
use crate::rng::SplitMix64;

/// Disjoint test-index sets: per-class counts across folds differ by at
/// most one, deterministic for a given seed.
pub fn stratified_kfold(labels: &[App], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::BadFoldCount(k));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); App::ALL.len()];
    for (index, app) in labels.iter().enumerate() {
        per_class[app.index()].push(index);
    }
    for (class_index, members) in per_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::ClassSmallerThanK {
                class: App::from_index(class_index).name().to_string(),
                size: members.len(),
                k,
            });
        }
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class_index, mut members) in per_class.into_iter().enumerate() {
        let mut rng = SplitMix64::derive(seed, class_index as u64);
        rng.shuffle(&mut members);
        // round-robin deal, rotated per class so the remainder rows do not
        // all land in fold 0
        for (i, row) in members.into_iter().enumerate() {
            folds[(class_index + i) % k].push(row);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub column: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub folds: usize,
    pub hyperparameters: Hyperparameters,
    pub n_rows: usize,
    pub schema_columns: usize,
    pub fold_accuracies: Vec<f64>,
    /// Pooled over all test predictions.
    pub accuracy: f64,
    pub mean_fold_accuracy: f64,
    pub micro_f1: f64,
    /// Support-weighted macro F1 (the other reading of "micro-weighted").
    pub weighted_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    /// Rows = truth, columns = predicted, in application enum order.
    pub confusion: [[usize; 4]; 4],
    /// Mean importance per full-schema column, in schema order.
    pub importances: Vec<ImportanceEntry>,
}

impl EvaluationReport {
    pub fn class_metrics(&self, app: App) -> &ClassMetrics {
        &self.per_class[app.name()]
    }

    /// Confusion matrix as CSV (rows = truth, columns = predicted).
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth");
        for app in App::ALL {
            out.push(',');
            out.push_str(app.name());
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(App::from_index(i).name());
            for cell in row {
                out.push_str(&format!(",{cell}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "accuracy {:.4} (per-fold mean {:.4}), micro-F1 {:.4}, weighted-F1 {:.4}\n",
            self.accuracy, self.mean_fold_accuracy, self.micro_f1, self.weighted_f1
        ));
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9}\n",
            "class", "precision", "recall", "f1", "support"
        ));
        for app in App::ALL {
            let m = self.class_metrics(app);
            out.push_str(&format!(
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9}\n",
                app.name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            ));
        }
        out.push_str("confusion (rows = truth):\n");
        out.push_str(&format!("{:<10}", ""));
        for app in App::ALL {
            out.push_str(&format!("{:>10}", app.name()));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&format!("{:<10}", App::from_index(i).name()));
            for cell in row {
                out.push_str(&format!("{cell:>10}"));
            }
            out.push('\n');
        }
        out
    }
}

fn labels_of(records: &[FeatureRecord]) -> Result<Vec<App>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.label.ok_or(Error::UnlabeledRecord(i)))
        .collect()
}

fn metrics_from_confusion(
    confusion: &[[usize; 4]; 4],
) -> (f64, f64, f64, BTreeMap<String, ClassMetrics>) {
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..4).map(|i| confusion[i][i]).sum();
    let accuracy = correct as f64 / total as f64;

    // micro-F1 from pooled integer counts: FP and FN both pool to the
    // error count, so 2·TP / (2·TP + FP + FN) = 2C / 2N, computed
    // independently of the accuracy division above.
    let pooled_fp: usize = total - correct;
    let pooled_fn: usize = total - correct;
    let micro_f1 = (2 * correct) as f64 / ((2 * correct + pooled_fp + pooled_fn) as f64);

    let mut per_class = BTreeMap::new();
    let mut weighted_f1_sum = 0.0;
    for app in App::ALL {
        let i = app.index();
        let tp = confusion[i][i];
        let truth_total: usize = confusion[i].iter().sum();
        let predicted_total: usize = (0..4).map(|r| confusion[r][i]).sum();
        let precision = if predicted_total == 0 {
            0.0
        } else {
            tp as f64 / predicted_total as f64
        };
        let recall = if truth_total == 0 {
            0.0
        } else {
            tp as f64 / truth_total as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        weighted_f1_sum += f1 * truth_total as f64;
        per_class.insert(
            app.name().to_string(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support: truth_total,
            },
        );
    }
    let weighted_f1 = weighted_f1_sum / total as f64;
    (accuracy, micro_f1, weighted_f1, per_class)
}

/// Stratified k-fold cross-validation with per-fold schema rebuild: each
/// fold's schema and model come from its training rows only, and test
/// rows are encoded under that training schema (no vocabulary leakage).
pub fn cross_validate(
    records: &[FeatureRecord],
    k: usize,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<EvaluationReport> {
    let labels = labels_of(records)?;
    let full_schema = build_schema(records)?;
    let folds = stratified_kfold(&labels, k, seed)?;

    struct FoldOutcome {
        confusion: [[usize; 4]; 4],
        accuracy: f64,
        importances: Vec<(String, f64)>,
    }

    let outcomes: Vec<Result<FoldOutcome>> = folds
        .par_iter()
        .map(|test_indices| {
            let mut in_test = vec![false; records.len()];
            for &i in test_indices {
                in_test[i] = true;
            }
            let train_records: Vec<FeatureRecord> = records
                .iter()
                .enumerate()
                .filter(|(i, _)| !in_test[*i])
                .map(|(_, r)| r.clone())
                .collect();
            let fold_schema = build_schema(&train_records)?;
            let train_rows: Vec<Vec<f64>> = train_records
                .iter()
                .map(|r| encode(r, &fold_schema))
                .collect();
            let train_labels: Vec<usize> = train_records
                .iter()
                .map(|r| r.label.expect("validated above").index())
                .collect();
            let (trees, importances) =
                train_forest(&train_rows, &train_labels, App::ALL.len(), hp, seed)?;

            let mut confusion = [[0usize; 4]; 4];
            for &index in test_indices {
                let row = encode(&records[index], &fold_schema);
                let (predicted, _) = predict_forest(&trees, &row, App::ALL.len());
                confusion[labels[index].index()][predicted] += 1;
            }
            let correct: usize = (0..4).map(|i| confusion[i][i]).sum();
            let named = fold_schema
                .columns
                .iter()
                .map(|c| c.name.clone())
                .zip(importances)
                .collect();
            Ok(FoldOutcome {
                confusion,
                accuracy: correct as f64 / test_indices.len() as f64,
                importances: named,
            })
        })
        .collect();

    let mut confusion = [[0usize; 4]; 4];
    let mut fold_accuracies = Vec::with_capacity(k);
    let mut importance_by_name: BTreeMap<String, f64> = BTreeMap::new();
    for outcome in outcomes {
        let outcome = outcome?;
        for (total_row, fold_row) in confusion.iter_mut().zip(outcome.confusion.iter()) {
            for (total, cell) in total_row.iter_mut().zip(fold_row.iter()) {
                *total += cell;
            }
        }
        fold_accuracies.push(outcome.accuracy);
        for (name, value) in outcome.importances {
            *importance_by_name.entry(name).or_insert(0.0) += value;
        }
    }

    let (accuracy, micro_f1, weighted_f1, per_class) = metrics_from_confusion(&confusion);
    // single-label multiclass identity, checked on every run
    assert!(
        micro_f1 == accuracy,
        "micro-F1 {micro_f1} must equal accuracy {accuracy}"
    );
    let mean_fold_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;

    let importances = full_schema
        .columns
        .iter()
        .map(|column| ImportanceEntry {
            column: column.name.clone(),
            importance: importance_by_name.get(&column.name).copied().unwrap_or(0.0) / k as f64,
        })
        .collect();

    Ok(EvaluationReport {
        seed,
        folds: k,
        hyperparameters: *hp,
        n_rows: records.len(),
        schema_columns: full_schema.len(),
        fold_accuracies,
        accuracy,
        mean_fold_accuracy,
        micro_f1,
        weighted_f1,
        per_class,
        confusion,
        importances,
    })
}

/// Columns sorted by descending mean importance, ties by schema column
/// index; `top_n` clamps to the column count.
pub fn importance_ranking(report: &EvaluationReport, top_n: usize) -> Vec<ImportanceEntry> {
    let mut indexed: Vec<(usize, &ImportanceEntry)> =
        report.importances.iter().enumerate().collect();
    indexed.sort_by(|(ia, a), (ib, b)| {
        b.importance
            .partial_cmp(&a.importance)
            .unwrap()
            .then(ia.cmp(ib))
    });
    indexed
        .into_iter()
        .take(top_n.min(report.importances.len()))
        .map(|(_, e)| e.clone())
        .collect()
}

/// One examined column (or derived condition) with its per-class
/// presence percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnPresence {
    pub column: String,
    /// Percent present per class, application enum order (SF/FB/G/D).
    pub rates: [f64; 4],
    pub flagged: bool,
    /// The distinguished class when flagged.
    pub identifier_for: Option<App>,
    /// True for the 0%-in-one / 100%-in-the-rest form.
    pub inverted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierReport {
    pub tolerance: f64,
    pub columns: Vec<ColumnPresence>,
    pub flagged: Vec<String>,
}

impl IdentifierReport {
    pub fn rates_of(&self, column: &str) -> Option<&[f64; 4]> {
        self.columns
            .iter()
            .find(|c| c.column == column)
            .map(|c| &c.rates)
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<52} {:>7} {:>7} {:>7} {:>7}  flag\n",
            "column", "SF", "FB", "G", "D"
        );
        for presence in &self.columns {
            let flag = if presence.flagged {
                format!(
                    "{}{}",
                    presence.identifier_for.map(|a| a.name()).unwrap_or(""),
                    if presence.inverted { " (inverted)" } else { "" }
                )
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{:<52} {:>7.1} {:>7.1} {:>7.1} {:>7.1}  {}\n",
                presence.column,
                presence.rates[0],
                presence.rates[1],
                presence.rates[2],
                presence.rates[3],
                flag
            ));
        }
        out
    }
}

/// One examinable condition: a binary schema column, or an equality probe
/// on the server message sequence ("Server Message Sequence: 1" style).
enum Probe {
    SchemaColumn(Column),
    ServerMessageSeq(u16),
}

impl Probe {
    fn name(&self) -> String {
        match self {
            Probe::SchemaColumn(column) => column.name.clone(),
            Probe::ServerMessageSeq(v) => format!("server.message_seq=={v}"),
        }
    }

    fn matches(&self, record: &FeatureRecord) -> bool {
        match self {
            Probe::SchemaColumn(column) => column_value(record, column) == 1.0,
            Probe::ServerMessageSeq(v) => record.server_message_seq == *v,
        }
    }
}

/// Per-class presence percentages with the 100/0 identifier rule.
///
/// `columns_of_interest`: restrict to these column names; `None` examines
/// the full default probe set. `tolerance` loosens the exact rule by that
/// many percentage points (0 = exact saturation, the default).
pub fn identifier_search(
    records: &[FeatureRecord],
    columns_of_interest: Option<&[String]>,
    tolerance: f64,
) -> Result<IdentifierReport> {
    let labels = labels_of(records)?;
    let mut class_counts = [0usize; 4];
    for label in &labels {
        class_counts[label.index()] += 1;
    }
    if let Some(missing) = App::ALL.iter().find(|a| class_counts[a.index()] == 0) {
        return Err(Error::MissingClass(missing.name().to_string()));
    }

    let schema = build_schema(records)?;
    let mut probes: Vec<Probe> = Vec::new();
    let mut seq_values: Vec<u16> = records
        .iter()
        .map(|r| r.server_message_seq)
        .filter(|&v| v != 0)
        .collect();
    seq_values.sort_unstable();
    seq_values.dedup();
    probes.extend(seq_values.into_iter().map(Probe::ServerMessageSeq));
    probes.extend(
        schema
            .columns
            .iter()
            .filter(|c| !matches!(c.kind, ColumnKind::Numeric))
            .cloned()
            .map(Probe::SchemaColumn),
    );
    if let Some(names) = columns_of_interest {
        probes.retain(|p| names.iter().any(|n| *n == p.name()));
    }

    let mut columns = Vec::with_capacity(probes.len());
    let mut flagged = Vec::new();
    for probe in &probes {
        let mut present = [0usize; 4];
        for (record, label) in records.iter().zip(&labels) {
            if probe.matches(record) {
                present[label.index()] += 1;
            }
        }
        let mut rates = [0.0f64; 4];
        for i in 0..4 {
            rates[i] = present[i] as f64 / class_counts[i] as f64 * 100.0;
        }
        let high: Vec<usize> = (0..4).filter(|&i| rates[i] >= 100.0 - tolerance).collect();
        let low: Vec<usize> = (0..4).filter(|&i| rates[i] <= tolerance).collect();
        let (is_flagged, identifier_for, inverted) = if high.len() == 1 && low.len() == 3 {
            (true, Some(App::from_index(high[0])), false)
        } else if low.len() == 1 && high.len() == 3 {
            (true, Some(App::from_index(low[0])), true)
        } else {
            (false, None, false)
        };
        let presence = ColumnPresence {
            column: probe.name(),
            rates,
            flagged: is_flagged,
            identifier_for,
            inverted,
        };
        if is_flagged {
            flagged.push(presence.column.clone());
        }
        columns.push(presence);
    }
    Ok(IdentifierReport {
        tolerance,
        columns,
        flagged,
    })
}
