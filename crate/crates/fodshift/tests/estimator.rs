//! Estimator oracles: finite-difference gradients, hand-rolled Adam
//! steps, feature construction on known voxels, and the training
//! loop's selection and determinism rules.

use ndarray::{Array1, Array2};

use fodshift::estimator::{
    adam_step, featurize, fine_tune, loss_mse, predict_volume, sh_feature_volume, six_directions,
    train, AdamState, EstimatorModel, TrainConfig,
};
use fodshift::geometry::index_of;
use fodshift::phantom::{build_cohort, AgeFaModel, Protocol, Subject};

fn curve() -> AgeFaModel {
    AgeFaModel {
        a: 0.22,
        b: 0.12,
        c: 0.15,
        t0: 38.0,
    }
}

fn noiseless_cohort(n: usize, seed: u64) -> Vec<Subject> {
    let mut protocol = Protocol::dhcp_like();
    protocol.snr = f64::INFINITY;
    build_cohort(&protocol, n, (40.0, 44.0), &curve(), (6, 4, 4), seed).unwrap()
}

fn toy_batch(seed: u64, d_in: usize, d_out: usize, n: usize) -> (Array2<f64>, Array2<f64>) {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((d_in, n), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((d_out, n), |_| rng.random_range(-1.0..1.0));
    (x, y)
}

fn loss_of(model: &EstimatorModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let mut rng = fodshift::seed::rng(0, "eval", 0);
    loss_mse(&model.forward(x, false, &mut rng), y)
}

/// Central finite differences over every parameter of a 6->8->3 toy
/// model, twenty seeds. The analytic gradients must match to 1e-4
/// relative.
#[test]
fn gradients_match_finite_differences() {
    const H: f64 = 1e-4;
    for seed in 0..20u64 {
        let model = EstimatorModel::new(&[6, 8, 3], 0.0, seed).unwrap();
        let (x, y) = toy_batch(seed ^ 0x5eed, 6, 3, 4);
        let (_, grads) = model.backward(&x, &y, None);

        for l in 0..model.n_layers() {
            let (rows, cols) = model.weights[l].dim();
            for r in 0..rows {
                for c in 0..cols {
                    let mut plus = model.clone();
                    plus.weights[l][(r, c)] += H;
                    let mut minus = model.clone();
                    minus.weights[l][(r, c)] -= H;
                    let fd = (loss_of(&plus, &x, &y) - loss_of(&minus, &x, &y)) / (2.0 * H);
                    let an = grads.weights[l][(r, c)];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                    assert!(rel < 1e-4, "seed {seed} w[{l}][{r},{c}]: {an} vs {fd}");
                }
            }
            for r in 0..model.biases[l].len() {
                let mut plus = model.clone();
                plus.biases[l][r] += H;
                let mut minus = model.clone();
                minus.biases[l][r] -= H;
                let fd = (loss_of(&plus, &x, &y) - loss_of(&minus, &x, &y)) / (2.0 * H);
                let an = grads.biases[l][r];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "seed {seed} b[{l}][{r}]: {an} vs {fd}");
            }
        }
    }
}

#[test]
fn zero_loss_means_zero_gradients() {
    let model = EstimatorModel::new(&[6, 8, 3], 0.0, 3).unwrap();
    let (x, _) = toy_batch(9, 6, 3, 5);
    let mut rng = fodshift::seed::rng(0, "eval", 0);
    let y = model.forward(&x, false, &mut rng);
    let (loss, grads) = model.backward(&x, &y, None);
    assert_eq!(loss, 0.0);
    for g in grads.weights.iter().flat_map(|w| w.iter()) {
        assert_eq!(*g, 0.0);
    }
    for g in grads.biases.iter().flat_map(|b| b.iter()) {
        assert_eq!(*g, 0.0);
    }
}

/// Duplicating a sample leaves mean-reduced gradients unchanged.
#[test]
fn duplicate_sample_keeps_gradients() {
    let model = EstimatorModel::new(&[6, 8, 3], 0.0, 17).unwrap();
    let (x, y) = toy_batch(21, 6, 3, 1);
    let xx = ndarray::concatenate(ndarray::Axis(1), &[x.view(), x.view()]).unwrap();
    let yy = ndarray::concatenate(ndarray::Axis(1), &[y.view(), y.view()]).unwrap();
    let (l1, g1) = model.backward(&x, &y, None);
    let (l2, g2) = model.backward(&xx, &yy, None);
    assert!((l1 - l2).abs() < 1e-15);
    for (a, b) in g1
        .weights
        .iter()
        .flat_map(|w| w.iter())
        .zip(g2.weights.iter().flat_map(|w| w.iter()))
    {
        assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn forward_edge_cases() {
    // zero weights: output equals the output-layer bias
    let mut model = EstimatorModel::new(&[4, 5, 2], 0.0, 0).unwrap();
    for w in &mut model.weights {
        w.fill(0.0);
    }
    model.biases[1] = Array1::from_vec(vec![0.7, -0.3]);
    let (x, _) = toy_batch(2, 4, 2, 3);
    let mut rng = fodshift::seed::rng(0, "eval", 0);
    let out = model.forward(&x, false, &mut rng);
    for c in 0..3 {
        assert_eq!(out[(0, c)], 0.7);
        assert_eq!(out[(1, c)], -0.3);
    }

    // dropout 0: train and eval forward agree
    let model = EstimatorModel::new(&[4, 5, 2], 0.0, 1).unwrap();
    let train_out = model.forward(&x, true, &mut rng);
    let eval_out = model.forward(&x, false, &mut rng);
    assert_eq!(train_out, eval_out);

    // same seed twice: identical init and output
    let m1 = EstimatorModel::new(&[4, 5, 2], 0.1, 42).unwrap();
    let m2 = EstimatorModel::new(&[4, 5, 2], 0.1, 42).unwrap();
    assert_eq!(m1.weights[0], m2.weights[0]);
    let o1 = m1.forward(&x, false, &mut rng);
    let o2 = m2.forward(&x, false, &mut rng);
    assert_eq!(o1, o2);
}

#[test]
fn dropout_scales_kept_units() {
    // with p=0.5 the train-mode hidden activations are either 0 or
    // twice the eval-mode ones, so a linear readout of a 1-hidden-unit
    // model is either 0 or double
    let mut model = EstimatorModel::new(&[1, 1, 1], 0.5, 0).unwrap();
    model.weights[0].fill(1.0);
    model.weights[1].fill(1.0);
    let x = Array2::from_elem((1, 200), 1.0);
    let mut rng = fodshift::seed::rng(7, "dropout", 0);
    let out = model.forward(&x, true, &mut rng);
    let mut kept = 0;
    for c in 0..200 {
        let v = out[(0, c)];
        assert!(v == 0.0 || (v - 2.0).abs() < 1e-12, "unexpected value {v}");
        if v > 0.0 {
            kept += 1;
        }
    }
    assert!(kept > 60 && kept < 140, "keep rate badly off: {kept}/200");
}

#[test]
fn loss_examples() {
    let (x, _) = toy_batch(5, 3, 2, 4);
    assert_eq!(loss_mse(&x, &x), 0.0);
    let shifted = &x + 1.0;
    assert!((loss_mse(&shifted, &x) - 1.0).abs() < 1e-15);

    // batch of two voxels: mean of the per-voxel losses
    let a = Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap();
    let b = Array2::from_shape_vec((2, 1), vec![3.0, 2.0]).unwrap();
    let ab = ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).unwrap();
    let gt = Array2::zeros((2, 2));
    let la = loss_mse(&a, &Array2::zeros((2, 1)));
    let lb = loss_mse(&b, &Array2::zeros((2, 1)));
    assert!((loss_mse(&ab, &gt) - 0.5 * (la + lb)).abs() < 1e-15);
}

/// Hand-rolled single-step oracle for Adam, plus the decay edge cases.
#[test]
fn adam_step_matches_hand_oracle() {
    let mut cfg = TrainConfig::desk(0);
    cfg.weight_decay = 0.0;
    let model0 = EstimatorModel::new(&[3, 4, 2], 0.0, 8).unwrap();

    // zero gradients, zero decay: parameters unchanged
    let mut model = model0.clone();
    let mut state = AdamState::new(&model);
    let zero = fodshift::estimator::Gradients {
        weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
        biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
    };
    adam_step(&mut model, &zero, &mut state, &cfg);
    assert_eq!(model.weights[0], model0.weights[0]);

    // first step with gradient g moves by about -lr*sign(g)
    let mut model = model0.clone();
    let mut state = AdamState::new(&model);
    let mut grads = zero.clone();
    grads.weights[0][(1, 2)] = 0.37;
    grads.weights[1][(0, 0)] = -1.4;
    adam_step(&mut model, &grads, &mut state, &cfg);
    let d1 = model.weights[0][(1, 2)] - model0.weights[0][(1, 2)];
    let d2 = model.weights[1][(0, 0)] - model0.weights[1][(0, 0)];
    assert!((d1 + cfg.lr).abs() < 1e-10, "step {d1}");
    assert!((d2 - cfg.lr).abs() < 1e-10, "step {d2}");
    // untouched parameter stays put
    assert_eq!(model.weights[0][(0, 0)], model0.weights[0][(0, 0)]);

    // zero gradients with decay: pure multiplicative shrink
    let mut cfg = TrainConfig::desk(0);
    cfg.weight_decay = 1e-3;
    let mut model = model0.clone();
    let mut state = AdamState::new(&model);
    adam_step(&mut model, &zero, &mut state, &cfg);
    let factor = 1.0 - cfg.lr * cfg.weight_decay;
    for (p, p0) in model.weights[0].iter().zip(model0.weights[0].iter()) {
        assert!((p - p0 * factor).abs() < 1e-18, "{p} vs {}", p0 * factor);
    }
}

#[test]
fn features_on_known_voxels() {
    let subject = &noiseless_cohort(1, 40)[0];
    let six = six_directions(subject).unwrap();
    let sh = sh_feature_volume(subject, &six).unwrap();

    // isotropic region voxel: only c00 survives
    let iso = sh.at(5, 2, 2);
    assert!(iso[0] > 0.05, "c00 missing: {}", iso[0]);
    for j in 1..6 {
        assert!(iso[j].abs() < 1e-10, "l=2 leak at {j}: {}", iso[j]);
    }

    // border voxel: out-of-volume neighbor blocks are exact zeros
    let feats = featurize(subject, &six).unwrap();
    let corner = feats.at(0, 0, 0);
    assert!(corner[0..6].iter().all(|&v| v == 0.0), "block 0 not padded");
    // center block (offset 0,0,0) is block 13 and holds the voxel's own fit
    assert_eq!(&corner[13 * 6..14 * 6], sh.at(0, 0, 0));
    // block 26 (offset +1,+1,+1) is in bounds and nonzero
    assert!(corner[26 * 6..27 * 6].iter().any(|&v| v != 0.0));
}

/// A single fiber along z projects mostly onto c20 among the l=2
/// terms, with the negative sign of an oblate signal profile.
#[test]
fn single_fiber_signal_loads_c20() {
    use fodshift::geometry::{Direction, DirectionSet};
    use fodshift::phantom::{VoxelModel, ISO_DIFFUSIVITY};
    use fodshift::{MaskVolume, Volume};

    let base = &noiseless_cohort(1, 7)[0];
    let six = six_directions(base).unwrap();
    let mut dirs = vec![Direction::new(0.0, 0.0, 1.0).unwrap()];
    let mut bvals = vec![0.0];
    for i in 0..six.len() {
        dirs.push(six.direction(i));
        bvals.push(six.b_value(i));
    }
    let dirset = DirectionSet::new(dirs.clone(), bvals.clone()).unwrap();

    let (lpar, lperp) = (1.7e-3, 0.2e-3);
    let mut dwi = Volume::filled((1, 1, 1), dirs.len(), 2.0, 0.0);
    for (i, d) in dirs.iter().enumerate() {
        let g = d.as_array();
        let b = bvals[i];
        dwi.voxel_mut(0)[i] = 100.0 * (-b * (lperp + (lpar - lperp) * g[2] * g[2])).exp();
    }
    let subject = Subject {
        id: "synthetic-0".into(),
        age: 40.0,
        site_label: "synthetic".into(),
        dirs: dirset,
        grid: vec![VoxelModel::isotropic(100.0, ISO_DIFFUSIVITY)],
        dwi,
        gt_fod: Volume::filled((1, 1, 1), 45, 2.0, 0.0),
        wm_mask: MaskVolume::filled((1, 1, 1), 1, 2.0, true),
        gt_lmax: 8,
    };
    let sh = sh_feature_volume(&subject, &six).unwrap();
    let c = sh.voxel(0);
    let c20 = c[index_of(2, 0)];
    assert!(c20 < 0.0, "c20 should be negative: {c20}");
    for m in [-2i64, -1, 1, 2] {
        let other = c[index_of(2, m)];
        assert!(
            c20.abs() > other.abs() * 3.0,
            "c2{m} too large: {other} vs c20 {c20}"
        );
    }
}

#[test]
fn one_epoch_lr_zero_returns_initial_model() {
    let cohort = noiseless_cohort(2, 50);
    let model = EstimatorModel::new(&[162, 16, 45], 0.0, 5).unwrap();
    let mut cfg = TrainConfig::desk(5);
    cfg.epochs = 1;
    cfg.lr = 0.0;
    let (best, history) = train(model.clone(), &cohort[..1], &cohort[1..], &cfg).unwrap();
    for l in 0..model.n_layers() {
        assert_eq!(best.weights[l], model.weights[l]);
        assert_eq!(best.biases[l], model.biases[l]);
    }
    assert_eq!(history.best_epoch, 0);
    assert_eq!(history.train_subjects, vec![cohort[0].id.clone()]);
    assert_eq!(history.val_subjects, vec![cohort[1].id.clone()]);
}

#[test]
fn training_is_deterministic_and_selects_min_val() {
    let cohort = noiseless_cohort(3, 60);
    let mut cfg = TrainConfig::desk(9);
    cfg.epochs = 8;
    let run = || {
        let model = EstimatorModel::new(&[162, 32, 45], 0.1, 9).unwrap();
        train(model, &cohort[..2], &cohort[2..], &cfg).unwrap()
    };
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(h1.train_loss, h2.train_loss);
    assert_eq!(h1.val_loss, h2.val_loss);
    for l in 0..m1.n_layers() {
        assert_eq!(m1.weights[l], m2.weights[l]);
    }
    let min = h1.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(h1.best_val(), min);
    assert_eq!(
        h1.val_loss.iter().position(|&v| v == min).unwrap(),
        h1.best_epoch,
        "best_epoch must be the first minimum"
    );
}

#[test]
fn divergence_reports_training_failure() {
    let cohort = noiseless_cohort(2, 70);
    let model = EstimatorModel::new(&[162, 16, 45], 0.0, 1).unwrap();
    let mut cfg = TrainConfig::desk(1);
    cfg.epochs = 5;
    cfg.lr = 1e300;
    match train(model, &cohort[..1], &cohort[1..], &cfg) {
        Err(fodshift::Error::TrainingFailure { .. }) => {}
        other => panic!("expected TrainingFailure, got {other:?}"),
    }
}

#[test]
fn training_reduces_validation_loss() {
    let cohort = noiseless_cohort(4, 80);
    let model = EstimatorModel::new(&[162, 64, 64, 45], 0.1, 2).unwrap();
    let mut cfg = TrainConfig::desk(2);
    cfg.epochs = 250;
    let (best, history) = train(model, &cohort[..3], &cohort[3..], &cfg).unwrap();
    assert!(
        history.best_val() < 0.5 * history.val_loss[0],
        "val {} -> {}",
        history.val_loss[0],
        history.best_val()
    );

    // fine-tuning on the same source subjects barely moves the loss
    let mut ft_cfg = TrainConfig::fine_tune(3);
    ft_cfg.epochs = 20;
    let (_, ft_hist) = fine_tune(best, &cohort[..3], &ft_cfg).unwrap();
    let drift = (ft_hist.val_loss[ft_hist.val_loss.len() - 1] - ft_hist.val_loss[0]).abs()
        / ft_hist.val_loss[0];
    assert!(drift < 0.05, "same-domain fine-tune drifted by {drift}");
    assert_eq!(
        ft_hist.train_subjects,
        cohort[..3].iter().map(|s| s.id.clone()).collect::<Vec<_>>()
    );
}

#[test]
fn predict_volume_masks_and_repeats() {
    let cohort = noiseless_cohort(1, 90);
    let model = EstimatorModel::new(&[162, 16, 45], 0.1, 4).unwrap();
    let p1 = predict_volume(&model, &cohort[0]).unwrap();
    let p2 = predict_volume(&model, &cohort[0]).unwrap();
    assert_eq!(p1.data(), p2.data());
    for v in 0..p1.n_voxels() {
        let wm = cohort[0].wm_mask.voxel(v)[0];
        let all_zero = p1.voxel(v).iter().all(|&x| x == 0.0);
        if wm {
            assert!(!all_zero, "WM voxel {v} predicted all zeros");
        } else {
            assert!(all_zero, "non-WM voxel {v} not zeroed");
        }
    }
}
