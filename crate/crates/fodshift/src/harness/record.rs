//! Run artifacts: the record of who trained on what, the rendered
//! tables, and the leakage audit.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::spec::ExperimentSpec;
use crate::io::{atomic_write, read_json, write_json};
use crate::metrics::{markdown_table, MetricsReport, CSV_HEADER};

/// Subject allocation for one cohort of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSplit {
    /// "source", "target", "young", or "old".
    pub cohort: String,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Per-subject single-fiber agreement, for consistency-vs-age curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgePoint {
    pub site: String,
    /// Which model produced the prediction, e.g. "old_model".
    pub model: String,
    pub subject_id: String,
    pub age: f64,
    pub ar_single_fiber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub splits: Vec<CohortSplit>,
    /// Subjects used to fine-tune or train ablation models, beyond
    /// the main train/val splits.
    pub adaptation_ids: Vec<String>,
    /// Subjects whose moments fed harmonization reference maps.
    pub reference_ids: Vec<String>,
    pub reports: Vec<MetricsReport>,
    pub age_points: Vec<AgePoint>,
    /// Wall-clock seconds; persisted separately so record bytes stay
    /// identical across reruns.
    #[serde(skip)]
    pub elapsed_s: f64,
}

impl RunRecord {
    /// Every ID that influenced any trained or adapted model, or any
    /// harmonization reference.
    pub fn fitted_ids(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in &self.splits {
            out.extend(s.train.iter().cloned());
            out.extend(s.val.iter().cloned());
        }
        out.extend(self.adaptation_ids.iter().cloned());
        out.extend(self.reference_ids.iter().cloned());
        out
    }

    pub fn test_ids(&self) -> BTreeSet<String> {
        self.splits
            .iter()
            .flat_map(|s| s.test.iter().cloned())
            .collect()
    }

    /// No test subject may appear in any training, validation,
    /// fine-tuning, or harmonization-reference set.
    pub fn audit_leakage(&self) -> Result<()> {
        let fitted = self.fitted_ids();
        let leaked: Vec<String> = self
            .test_ids()
            .into_iter()
            .filter(|id| fitted.contains(id))
            .collect();
        if leaked.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "test subjects leaked into fitting sets: {}",
                leaked.join(", ")
            )))
        }
    }
}

/// CSV plus Markdown over any number of runs, deterministic in record
/// and report order. An empty slice yields a header-only CSV.
pub fn render_report(records: &[RunRecord]) -> (String, String) {
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut md = String::new();
    for record in records {
        for report in &record.reports {
            for row in report.csv_rows() {
                csv.push_str(&row);
                csv.push('\n');
            }
        }
        md.push_str(&format!(
            "## {} on {} (seed {})\n\n",
            record.spec.kind.label(),
            record.spec.source.site,
            record.spec.seed
        ));
        md.push_str(&markdown_table(&record.reports));
        md.push('\n');
    }
    (csv, md)
}

#[derive(Serialize, Deserialize)]
struct Timing {
    elapsed_s: f64,
}

/// Persist one run: record.json, report.csv, report.md, and the
/// age-point table when present. Timing goes to its own file so a
/// rerun with the same seed reproduces every other artifact
/// byte-for-byte.
pub fn write_outputs(record: &RunRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("record.json"), record)?;
    write_json(
        &dir.join("timing.json"),
        &Timing {
            elapsed_s: record.elapsed_s,
        },
    )?;
    let (csv, md) = render_report(std::slice::from_ref(record));
    atomic_write(&dir.join("report.csv"), csv.as_bytes())?;
    atomic_write(&dir.join("report.md"), md.as_bytes())?;
    if !record.age_points.is_empty() {
        let mut out = String::from("site,model,subject_id,age,ar_single_fiber\n");
        for p in &record.age_points {
            let ar = match p.ar_single_fiber {
                Some(v) => format!("{v:.2}"),
                None => "-".into(),
            };
            out.push_str(&format!(
                "{},{},{},{:.4},{}\n",
                p.site, p.model, p.subject_id, p.age, ar
            ));
        }
        atomic_write(&dir.join("age_points.csv"), out.as_bytes())?;
    }
    Ok(())
}

pub fn read_record(dir: &Path) -> Result<RunRecord> {
    read_json(&dir.join("record.json"))
}
