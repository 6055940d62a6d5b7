//! Experiment orchestration: declarative specs, seeded runners, and
//! run records that carry enough provenance to audit themselves.

mod record;
mod run;
mod spec;

pub use record::{read_record, render_report, write_outputs, AgePoint, CohortSplit, RunRecord};
pub use run::{run_age_split, run_experiment, run_inter_site, run_intra_baseline};
pub use spec::{
    AgeGroup, CohortSpec, ExperimentKind, ExperimentSpec, Method, SplitFractions,
};
