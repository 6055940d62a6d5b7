//! Experiment specification: what to build, train, and compare.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::phantom::{preset_by_name, CohortPreset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    IntraBaseline,
    AgeSplit,
    InterSite,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::IntraBaseline => "intra_baseline",
            ExperimentKind::AgeSplit => "age_split",
            ExperimentKind::InterSite => "inter_site",
        }
    }
}

/// Adaptation methods for the inter-site experiment. The two controls
/// bracket the others: cross-testing without adaptation from below,
/// target-trained self-testing from above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ControlCross,
    ControlSelf,
    Mom,
    Finetune,
    ScratchAblation,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::ControlCross => "control_cross",
            Method::ControlSelf => "control_self",
            Method::Mom => "mom",
            Method::Finetune => "finetune",
            Method::ScratchAblation => "scratch_ablation",
        }
    }

    pub fn all() -> Vec<Method> {
        vec![
            Method::ControlCross,
            Method::ControlSelf,
            Method::Mom,
            Method::Finetune,
            Method::ScratchAblation,
        ]
    }
}

/// Which of a site's two study age windows a cohort samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Young,
    Old,
    Full,
}

impl AgeGroup {
    pub fn window(self, preset: &CohortPreset) -> (f64, f64) {
        match self {
            AgeGroup::Young => preset.young,
            AgeGroup::Old => preset.old,
            AgeGroup::Full => (preset.young.0, preset.old.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    /// Site preset name: "dhcp" or "bcp".
    pub site: String,
    pub n_subjects: usize,
    #[serde(default = "default_age_group")]
    pub age_group: AgeGroup,
    pub grid: (usize, usize, usize),
}

fn default_age_group() -> AgeGroup {
    AgeGroup::Old
}

impl CohortSpec {
    pub fn preset(&self) -> Result<CohortPreset> {
        preset_by_name(&self.site)
    }

    fn validate(&self) -> Result<()> {
        self.preset()?;
        if self.n_subjects == 0 {
            return Err(Error::invalid("cohort needs at least one subject"));
        }
        let (nx, ny, nz) = self.grid;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid("grid dims must be positive"));
        }
        Ok(())
    }
}

/// Subject-level allocation fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn study_default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train),
            ("val", self.val),
            ("test", self.test),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} fraction {f} outside [0, 1]")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Allocation counts: floor for val and test, remainder to train,
    /// so 20 subjects at 70/15/15 give 14/3/3.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let val = (n as f64 * self.val).floor() as usize;
        let test = (n as f64 * self.test).floor() as usize;
        (n - val - test, val, test)
    }
}

fn default_n_targets() -> Vec<usize> {
    vec![1, 2, 5, 10]
}

fn default_epochs() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub source: CohortSpec,
    #[serde(default)]
    pub target: Option<CohortSpec>,
    #[serde(default = "SplitFractions::study_default")]
    pub split: SplitFractions,
    #[serde(default = "default_n_targets")]
    pub n_target_subjects: Vec<usize>,
    #[serde(default = "Method::all")]
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Epochs for full trainings; fine-tuning keeps its own preset
    /// unless `ft_epochs` overrides it.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub ft_epochs: Option<usize>,
    /// Explicit age windows for the two age_split groups, replacing
    /// the site preset's. Setting both to the same window gives the
    /// degenerate young=old control.
    #[serde(default)]
    pub young_window: Option<(f64, f64)>,
    #[serde(default)]
    pub old_window: Option<(f64, f64)>,
    /// Where run artifacts go; a CLI `--out` flag takes precedence.
    /// Excluded from the spec hash so relocating a run does not change
    /// its identity.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if let Some(t) = &self.target {
            t.validate()?;
        }
        self.split.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.ft_epochs == Some(0) {
            return Err(Error::invalid("ft_epochs must be at least 1"));
        }
        for &n in &self.n_target_subjects {
            if ![1, 2, 5, 10].contains(&n) {
                return Err(Error::invalid(format!(
                    "n_target_subjects entry {n} outside the study set {{1, 2, 5, 10}}"
                )));
            }
        }
        if self
            .n_target_subjects
            .windows(2)
            .any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid(
                "n_target_subjects must be strictly increasing",
            ));
        }
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(m) {
                return Err(Error::invalid(format!("duplicate method {}", m.label())));
            }
            seen.push(*m);
        }
        for (name, w) in [("young", self.young_window), ("old", self.old_window)] {
            if let Some((lo, hi)) = w {
                if self.kind != ExperimentKind::AgeSplit {
                    return Err(Error::invalid(format!(
                        "{name}_window only applies to age_split"
                    )));
                }
                if lo > hi {
                    return Err(Error::invalid(format!("{name}_window {lo} > {hi}")));
                }
            }
        }
        match self.kind {
            ExperimentKind::IntraBaseline | ExperimentKind::AgeSplit => {
                if self.target.is_some() {
                    return Err(Error::invalid(format!(
                        "{} builds its cohorts from `source` alone; drop `target`",
                        self.kind.label()
                    )));
                }
            }
            ExperimentKind::InterSite => {
                let t = self.target.as_ref().ok_or_else(|| {
                    Error::invalid("inter_site needs a `target` cohort spec")
                })?;
                if t.site == self.source.site {
                    return Err(Error::invalid(
                        "inter_site expects distinct source and target sites",
                    ));
                }
                if self.methods.is_empty() {
                    return Err(Error::invalid("inter_site needs at least one method"));
                }
                let needs_n = self
                    .methods
                    .iter()
                    .any(|m| matches!(m, Method::Mom | Method::Finetune));
                if needs_n && self.n_target_subjects.is_empty() {
                    return Err(Error::invalid(
                        "mom and finetune need a non-empty n_target_subjects list",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding, with `out_dir`
    /// blanked so the hash identifies the computation, not its
    /// location on disk.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("spec serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
