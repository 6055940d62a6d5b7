//! Experiment runners. Each one builds phantom cohorts, allocates
//! subjects, trains or adapts estimators, and evaluates them on test
//! subjects it never fitted. One master seed fans out by label, so a
//! run is a pure function of its spec.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::csd::gold_standard_split;
use crate::error::{Error, Result};
use crate::estimator::{
    fine_tune, predict_volume, train, EstimatorModel, TrainConfig, DEFAULT_DROPOUT, DEFAULT_HIDDEN,
    N_FEATURES,
};
use crate::geometry::{make_tessellation, n_coeffs, SphereTessellation};
use crate::harmonize::{
    derive_mapping, reference_maps, six_direction_indices, apply_to_subject, DEFAULT_EPS,
};
use crate::harness::record::{AgePoint, CohortSplit, RunRecord};
use crate::harness::spec::{AgeGroup, CohortSpec, ExperimentKind, ExperimentSpec, Method};
use crate::metrics::{
    agreement_rate, compute_report, extract_volume_peaks, wm_mask, MetricsReport, PeakSet,
    SitePreset, PEAK_THRESHOLD,
};
use crate::phantom::{build_cohort, Subject, GT_LMAX};
use crate::seed;
use crate::volume::{MaskVolume, Volume};

/// Tessellation level for report peak extraction (642 points).
const REPORT_TESS_LEVEL: usize = 3;
/// Cross-age fine-tuning uses this many target-group subjects.
const CROSS_AGE_FT_SUBJECTS: usize = 5;
/// The from-scratch ablation trains on this many target subjects.
const SCRATCH_SUBJECTS: usize = 10;

/// Dispatch by kind, stamp timing, and re-run the leakage audit as a
/// final guard.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunRecord> {
    spec.validate()?;
    let start = Instant::now();
    let mut record = match spec.kind {
        ExperimentKind::IntraBaseline => run_intra_baseline(spec),
        ExperimentKind::AgeSplit => run_age_split(spec),
        ExperimentKind::InterSite => run_inter_site(spec),
    }?;
    record.audit_leakage()?;
    record.elapsed_s = start.elapsed().as_secs_f64();
    Ok(record)
}

fn build_group(cs: &CohortSpec, group: AgeGroup, cohort_seed: u64) -> Result<Vec<Subject>> {
    let preset = cs.preset()?;
    let window = group.window(&preset);
    build_cohort(
        &preset.protocol,
        cs.n_subjects,
        window,
        &preset.age_fa,
        cs.grid,
        cohort_seed,
    )
}

/// Shuffle subject indices and cut train/val/test by the spec's
/// rounding rule. Order within each part stays shuffled, so "the
/// first n of the train pool" is a random but reproducible choice.
fn shuffled_split(
    n: usize,
    spec: &ExperimentSpec,
    split_idx: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let (n_train, n_val, n_test) = spec.split.counts(n);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::invalid(format!(
            "{n} subjects split {n_train}/{n_val}/{n_test}; every part needs at least one"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(spec.seed, "split", split_idx);
    idx.shuffle(&mut rng);
    let val = idx[n_train..n_train + n_val].to_vec();
    let test = idx[n_train + n_val..].to_vec();
    idx.truncate(n_train);
    Ok((idx, val, test))
}

/// Move subjects out of the cohort into the three parts without
/// cloning the volumes.
fn partition(
    cohort: Vec<Subject>,
    train: &[usize],
    val: &[usize],
    test: &[usize],
) -> (Vec<Subject>, Vec<Subject>, Vec<Subject>) {
    let mut slots: Vec<Option<Subject>> = cohort.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<Subject> {
        ids.iter()
            .map(|&i| slots[i].take().expect("split indices are disjoint"))
            .collect()
    };
    let tr = take(train);
    let va = take(val);
    let te = take(test);
    (tr, va, te)
}

fn ids_of(subjects: &[Subject]) -> Vec<String> {
    subjects.iter().map(|s| s.id.clone()).collect()
}

fn model_dims() -> Vec<usize> {
    let mut dims = vec![N_FEATURES];
    dims.extend_from_slice(&DEFAULT_HIDDEN);
    dims.push(n_coeffs(GT_LMAX));
    dims
}

/// Fresh model trained with the run's hyperparameters; `k` separates
/// the init and shuffle streams of independently trained models.
fn train_fresh(
    train_set: &[Subject],
    val_set: &[Subject],
    spec: &ExperimentSpec,
    k: u64,
) -> Result<EstimatorModel> {
    let model = EstimatorModel::new(
        &model_dims(),
        DEFAULT_DROPOUT,
        seed::derive(spec.seed, "init", k),
    )?;
    let mut cfg = TrainConfig::desk(seed::derive(spec.seed, "shuffle", k));
    cfg.epochs = spec.epochs;
    let (trained, _) = train(model, train_set, val_set, &cfg)?;
    Ok(trained)
}

fn ft_config(spec: &ExperimentSpec, label_idx: u64) -> TrainConfig {
    let mut cfg = TrainConfig::fine_tune(seed::derive(spec.seed, "ft", label_idx));
    if let Some(e) = spec.ft_epochs {
        cfg.epochs = e;
    }
    cfg
}

fn stack_volumes(vols: &[&Volume<f64>]) -> Result<Volume<f64>> {
    let first = vols.first().ok_or_else(|| Error::invalid("nothing to stack"))?;
    let (nx, ny, _) = first.dims();
    let nc = first.n_channels();
    let mut nz_total = 0;
    let mut data = Vec::new();
    for v in vols {
        let (vx, vy, vz) = v.dims();
        if vx != nx || vy != ny || v.n_channels() != nc {
            return Err(Error::invalid("stacked volumes must share shape"));
        }
        nz_total += vz;
        data.extend_from_slice(v.data());
    }
    Volume::from_vec((nx, ny, nz_total), nc, first.voxel_size_mm(), data)
}

fn stack_masks(masks: &[MaskVolume]) -> Result<MaskVolume> {
    let first = masks.first().ok_or_else(|| Error::invalid("nothing to stack"))?;
    let (nx, ny, _) = first.dims();
    let mut nz_total = 0;
    let mut data = Vec::new();
    for m in masks {
        let (mx, my, mz) = m.dims();
        if mx != nx || my != ny {
            return Err(Error::invalid("stacked masks must share shape"));
        }
        nz_total += mz;
        data.extend_from_slice(m.data());
    }
    MaskVolume::from_vec((nx, ny, nz_total), 1, first.voxel_size_mm(), data)
}

/// Everything evaluation needs about one test set, computed once and
/// shared across methods: per-subject masks and GT peaks, plus the
/// z-stacked GT volume and mask (stacking is exact because the voxel
/// layout runs z slowest).
struct TestBundle {
    site: String,
    tess: SphereTessellation,
    masks: Vec<MaskVolume>,
    gt_peaks: Vec<Vec<PeakSet>>,
    gt_stack: Volume<f64>,
    mask_stack: MaskVolume,
}

impl TestBundle {
    fn prepare(test: &[Subject], site: &str, single_fiber_only: bool) -> Result<TestBundle> {
        if test.is_empty() {
            return Err(Error::invalid("empty test set"));
        }
        let preset = SitePreset::for_label(&test[0].site_label)?;
        let tess = make_tessellation(REPORT_TESS_LEVEL);
        let mut masks = Vec::with_capacity(test.len());
        let mut gt_peaks = Vec::with_capacity(test.len());
        for s in test {
            let mut mask = wm_mask(s, preset);
            if single_fiber_only {
                for v in 0..mask.n_voxels() {
                    if s.n_fibers(v) != 1 {
                        mask.voxel_mut(v)[0] = false;
                    }
                }
            }
            gt_peaks.push(extract_volume_peaks(
                &s.gt_fod,
                GT_LMAX,
                &mask,
                &tess,
                PEAK_THRESHOLD,
            )?);
            masks.push(mask);
        }
        let gt_stack = stack_volumes(&test.iter().map(|s| &s.gt_fod).collect::<Vec<_>>())?;
        let mask_stack = stack_masks(&masks)?;
        Ok(TestBundle {
            site: site.to_string(),
            tess,
            masks,
            gt_peaks,
            gt_stack,
            mask_stack,
        })
    }

    /// Score predicted FOD volumes against this bundle's ground
    /// truth; also returns one single-fiber AR point per subject.
    fn score(
        &self,
        test: &[Subject],
        preds: &[Volume<f64>],
        experiment: &str,
        method: &str,
        n_target: Option<usize>,
        model_tag: &str,
    ) -> Result<(MetricsReport, Vec<AgePoint>)> {
        let mut flat_pred = Vec::new();
        let mut points = Vec::with_capacity(test.len());
        for (i, pvol) in preds.iter().enumerate() {
            let peaks =
                extract_volume_peaks(pvol, GT_LMAX, &self.masks[i], &self.tess, PEAK_THRESHOLD)?;
            points.push(AgePoint {
                site: self.site.clone(),
                model: model_tag.to_string(),
                subject_id: test[i].id.clone(),
                age: test[i].age,
                ar_single_fiber: agreement_rate(&peaks, &self.gt_peaks[i], &self.masks[i], 1),
            });
            flat_pred.extend(peaks);
        }
        let flat_gt: Vec<PeakSet> = self.gt_peaks.iter().flatten().cloned().collect();
        let pred_stack = stack_volumes(&preds.iter().collect::<Vec<_>>())?;
        let report = compute_report(
            &pred_stack,
            &self.gt_stack,
            &flat_pred,
            &flat_gt,
            &self.mask_stack,
            &self.site,
            experiment,
            method,
            n_target,
        )?;
        Ok((report, points))
    }

    fn score_model(
        &self,
        test: &[Subject],
        model: &EstimatorModel,
        experiment: &str,
        method: &str,
        n_target: Option<usize>,
        model_tag: &str,
    ) -> Result<(MetricsReport, Vec<AgePoint>)> {
        let preds: Vec<Volume<f64>> = test
            .iter()
            .map(|s| predict_volume(model, s))
            .collect::<Result<_>>()?;
        self.score(test, &preds, experiment, method, n_target, model_tag)
    }

    /// Split-half consistency: score half A against half B as the
    /// reference instead of the phantom ground truth.
    fn score_split_half(
        &self,
        test: &[Subject],
        half_a: &[Volume<f64>],
        half_b: &[Volume<f64>],
        experiment: &str,
        method: &str,
    ) -> Result<(MetricsReport, Vec<AgePoint>)> {
        let mut flat_a = Vec::new();
        let mut flat_b = Vec::new();
        let mut points = Vec::with_capacity(test.len());
        for i in 0..test.len() {
            let peaks_a = extract_volume_peaks(
                &half_a[i],
                GT_LMAX,
                &self.masks[i],
                &self.tess,
                PEAK_THRESHOLD,
            )?;
            let peaks_b = extract_volume_peaks(
                &half_b[i],
                GT_LMAX,
                &self.masks[i],
                &self.tess,
                PEAK_THRESHOLD,
            )?;
            points.push(AgePoint {
                site: self.site.clone(),
                model: method.to_string(),
                subject_id: test[i].id.clone(),
                age: test[i].age,
                ar_single_fiber: agreement_rate(&peaks_a, &peaks_b, &self.masks[i], 1),
            });
            flat_a.extend(peaks_a);
            flat_b.extend(peaks_b);
        }
        let a_stack = stack_volumes(&half_a.iter().collect::<Vec<_>>())?;
        let b_stack = stack_volumes(&half_b.iter().collect::<Vec<_>>())?;
        let report = compute_report(
            &a_stack,
            &b_stack,
            &flat_a,
            &flat_b,
            &self.mask_stack,
            &self.site,
            experiment,
            method,
            None,
        )?;
        Ok((report, points))
    }
}

/// One cohort, one model: deep-learning estimates against ground
/// truth next to the acquisition-level gold standard on the same test
/// subjects.
pub fn run_intra_baseline(spec: &ExperimentSpec) -> Result<RunRecord> {
    let cohort = build_group(
        &spec.source,
        spec.source.age_group,
        seed::derive(spec.seed, "cohort", 0),
    )?;
    let (ti, vi, tei) = shuffled_split(cohort.len(), spec, 0)?;
    let (train_set, val_set, test_set) = partition(cohort, &ti, &vi, &tei);

    let model = train_fresh(&train_set, &val_set, spec, 0)?;
    let site = test_set[0].site_label.clone();
    let bundle = TestBundle::prepare(&test_set, &site, false)?;
    let experiment = ExperimentKind::IntraBaseline.label();

    let (dl_report, dl_points) =
        bundle.score_model(&test_set, &model, experiment, "dl", None, "dl")?;

    let mut half_a = Vec::with_capacity(test_set.len());
    let mut half_b = Vec::with_capacity(test_set.len());
    for (i, s) in test_set.iter().enumerate() {
        let (a, b) = gold_standard_split(s, seed::derive(spec.seed, "gs", i as u64))?;
        half_a.push(a.fods);
        half_b.push(b.fods);
    }
    let (gs_report, gs_points) =
        bundle.score_split_half(&test_set, &half_a, &half_b, experiment, "gs")?;

    Ok(RunRecord {
        spec_hash: spec.hash(),
        spec: spec.clone(),
        splits: vec![CohortSplit {
            cohort: "source".into(),
            train: ids_of(&train_set),
            val: ids_of(&val_set),
            test: ids_of(&test_set),
        }],
        adaptation_ids: vec![],
        reference_ids: vec![],
        reports: vec![dl_report, gs_report],
        age_points: [dl_points, gs_points].concat(),
        elapsed_s: 0.0,
    })
}

/// Young and old cohorts from one site: the 2x2 train/test matrix
/// plus cross-age fine-tuning with five target-group subjects.
pub fn run_age_split(spec: &ExperimentSpec) -> Result<RunRecord> {
    let young_cohort = build_group(&spec.source, AgeGroup::Young, seed::derive(spec.seed, "cohort", 0))?;
    let old_cohort = build_group(&spec.source, AgeGroup::Old, seed::derive(spec.seed, "cohort", 1))?;

    let (yti, yvi, ytei) = shuffled_split(young_cohort.len(), spec, 0)?;
    let (oti, ovi, otei) = shuffled_split(old_cohort.len(), spec, 1)?;
    let (y_train, y_val, y_test) = partition(young_cohort, &yti, &yvi, &ytei);
    let (o_train, o_val, o_test) = partition(old_cohort, &oti, &ovi, &otei);
    for (pool, label) in [(&y_train, "young"), (&o_train, "old")] {
        if pool.len() < CROSS_AGE_FT_SUBJECTS {
            return Err(Error::invalid(format!(
                "{label} train pool has {} subjects; cross-age fine-tuning needs {}",
                pool.len(),
                CROSS_AGE_FT_SUBJECTS
            )));
        }
    }

    let dl_young = train_fresh(&y_train, &y_val, spec, 0)?;
    let dl_old = train_fresh(&o_train, &o_val, spec, 1)?;

    let site = y_test[0].site_label.clone();
    let young_bundle = TestBundle::prepare(&y_test, &format!("{site}/young"), false)?;
    let old_bundle = TestBundle::prepare(&o_test, &format!("{site}/old"), false)?;
    let experiment = ExperimentKind::AgeSplit.label();

    let mut reports = Vec::new();
    let mut points = Vec::new();
    let mut push = |r: (MetricsReport, Vec<AgePoint>)| {
        reports.push(r.0);
        points.extend(r.1);
    };

    push(young_bundle.score_model(&y_test, &dl_young, experiment, "self", None, "young_model")?);
    push(young_bundle.score_model(&y_test, &dl_old, experiment, "cross", None, "old_model")?);
    push(old_bundle.score_model(&o_test, &dl_old, experiment, "self", None, "old_model")?);
    push(old_bundle.score_model(&o_test, &dl_young, experiment, "cross", None, "young_model")?);

    let ft_young_targets = &y_train[..CROSS_AGE_FT_SUBJECTS];
    let ft_old_targets = &o_train[..CROSS_AGE_FT_SUBJECTS];
    let (old_to_young, _) = fine_tune(dl_old.clone(), ft_young_targets, &ft_config(spec, 0))?;
    let (young_to_old, _) = fine_tune(dl_young.clone(), ft_old_targets, &ft_config(spec, 1))?;
    push(young_bundle.score_model(
        &y_test,
        &old_to_young,
        experiment,
        "cross_ft",
        Some(CROSS_AGE_FT_SUBJECTS),
        "old_model_ft",
    )?);
    push(old_bundle.score_model(
        &o_test,
        &young_to_old,
        experiment,
        "cross_ft",
        Some(CROSS_AGE_FT_SUBJECTS),
        "young_model_ft",
    )?);

    let mut adaptation_ids = ids_of(ft_young_targets);
    adaptation_ids.extend(ids_of(ft_old_targets));

    Ok(RunRecord {
        spec_hash: spec.hash(),
        spec: spec.clone(),
        splits: vec![
            CohortSplit {
                cohort: "young".into(),
                train: ids_of(&y_train),
                val: ids_of(&y_val),
                test: ids_of(&y_test),
            },
            CohortSplit {
                cohort: "old".into(),
                train: ids_of(&o_train),
                val: ids_of(&o_val),
                test: ids_of(&o_test),
            },
        ],
        adaptation_ids,
        reference_ids: vec![],
        reports,
        age_points: points,
        elapsed_s: 0.0,
    })
}

/// Source-site model against a target site, bracketed by the two
/// controls, with harmonization and fine-tuning at each requested
/// subject budget and the from-scratch ablation. Reports cover the
/// single-fiber population only.
pub fn run_inter_site(spec: &ExperimentSpec) -> Result<RunRecord> {
    let target_spec = spec
        .target
        .as_ref()
        .ok_or_else(|| Error::invalid("inter_site needs a target cohort"))?;
    let source_cohort = build_group(
        &spec.source,
        spec.source.age_group,
        seed::derive(spec.seed, "cohort", 0),
    )?;
    let target_cohort = build_group(
        target_spec,
        target_spec.age_group,
        seed::derive(spec.seed, "cohort", 1),
    )?;

    let (sti, svi, stei) = shuffled_split(source_cohort.len(), spec, 0)?;
    let (tti, tvi, ttei) = shuffled_split(target_cohort.len(), spec, 1)?;
    let (s_train, s_val, s_test) = partition(source_cohort, &sti, &svi, &stei);
    let (t_train, t_val, t_test) = partition(target_cohort, &tti, &tvi, &ttei);

    let source_model = train_fresh(&s_train, &s_val, spec, 0)?;
    let site = t_test[0].site_label.clone();
    let bundle = TestBundle::prepare(&t_test, &site, true)?;
    let experiment = ExperimentKind::InterSite.label();

    let mut reports = Vec::new();
    let mut points = Vec::new();
    let mut adaptation_ids = Vec::new();
    let mut reference_ids = Vec::new();

    for method in &spec.methods {
        match method {
            Method::ControlCross => {
                let (r, p) = bundle.score_model(
                    &t_test,
                    &source_model,
                    experiment,
                    method.label(),
                    None,
                    "source_model",
                )?;
                reports.push(r);
                points.extend(p);
            }
            Method::ControlSelf => {
                let target_model = train_fresh(&t_train, &t_val, spec, 1)?;
                let (r, p) = bundle.score_model(
                    &t_test,
                    &target_model,
                    experiment,
                    method.label(),
                    None,
                    "target_model",
                )?;
                reports.push(r);
                points.extend(p);
            }
            Method::Mom => {
                let source_ref = reference_maps(&s_train)?;
                reference_ids.extend(ids_of(&s_train));
                for &n in &spec.n_target_subjects {
                    if t_train.len() < n {
                        return Err(Error::invalid(format!(
                            "target train pool has {} subjects, mom needs {n}",
                            t_train.len()
                        )));
                    }
                    let refs = &t_train[..n];
                    let target_ref = reference_maps(refs)?;
                    reference_ids.extend(ids_of(refs));
                    let mapping = derive_mapping(&target_ref, &source_ref, DEFAULT_EPS)?;
                    let harmonized: Vec<Subject> = t_test
                        .iter()
                        .map(|s| {
                            let six = six_direction_indices(s)?;
                            apply_to_subject(s, &six, &mapping)
                        })
                        .collect::<Result<_>>()?;
                    let preds: Vec<Volume<f64>> = harmonized
                        .iter()
                        .map(|s| predict_volume(&source_model, s))
                        .collect::<Result<_>>()?;
                    let (r, p) = bundle.score(
                        &t_test,
                        &preds,
                        experiment,
                        method.label(),
                        Some(n),
                        &format!("mom_{n}"),
                    )?;
                    reports.push(r);
                    points.extend(p);
                }
            }
            Method::Finetune => {
                for &n in &spec.n_target_subjects {
                    if t_train.len() < n {
                        return Err(Error::invalid(format!(
                            "target train pool has {} subjects, finetune needs {n}",
                            t_train.len()
                        )));
                    }
                    let targets = &t_train[..n];
                    adaptation_ids.extend(ids_of(targets));
                    let (ft, _) =
                        fine_tune(source_model.clone(), targets, &ft_config(spec, n as u64))?;
                    let (r, p) = bundle.score_model(
                        &t_test,
                        &ft,
                        experiment,
                        method.label(),
                        Some(n),
                        &format!("finetune_{n}"),
                    )?;
                    reports.push(r);
                    points.extend(p);
                }
            }
            Method::ScratchAblation => {
                if t_train.len() < SCRATCH_SUBJECTS {
                    return Err(Error::invalid(format!(
                        "target train pool has {} subjects, scratch ablation needs {}",
                        t_train.len(),
                        SCRATCH_SUBJECTS
                    )));
                }
                let pool = &t_train[..SCRATCH_SUBJECTS];
                adaptation_ids.extend(ids_of(pool));
                // "Ten target subjects only" includes the validation
                // subjects, so the pool splits 8/2 internally.
                let n_val = 2;
                let scratch = train_fresh(&pool[..SCRATCH_SUBJECTS - n_val], &pool[SCRATCH_SUBJECTS - n_val..], spec, 2)?;
                let (r, p) = bundle.score_model(
                    &t_test,
                    &scratch,
                    experiment,
                    method.label(),
                    Some(SCRATCH_SUBJECTS),
                    "scratch_model",
                )?;
                reports.push(r);
                points.extend(p);
            }
        }
    }

    // Single-fiber reporting: drop the (empty) multi-fiber classes.
    for r in &mut reports {
        r.classes.retain(|c| c.class == 1);
    }
    adaptation_ids.sort_unstable();
    adaptation_ids.dedup();
    reference_ids.sort_unstable();
    reference_ids.dedup();

    Ok(RunRecord {
        spec_hash: spec.hash(),
        spec: spec.clone(),
        splits: vec![
            CohortSplit {
                cohort: "source".into(),
                train: ids_of(&s_train),
                val: ids_of(&s_val),
                test: ids_of(&s_test),
            },
            CohortSplit {
                cohort: "target".into(),
                train: ids_of(&t_train),
                val: ids_of(&t_val),
                test: ids_of(&t_test),
            },
        ],
        adaptation_ids,
        reference_ids,
        reports,
        age_points: points,
        elapsed_s: 0.0,
    })
}
