//! Deconvolution oracles: quadrature against Monte-Carlo integration,
//! the active-set QP against exhaustive support enumeration, and
//! recovery checks on voxels whose generative model is known exactly.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use fodshift::csd::{
    csd_fit, gold_standard_split, response_from_tensor, restrict_channels, solve_qp,
    split_indices, CsdProblem,
};
use fodshift::geometry::{
    eval_sh, eval_sh_single, fibonacci_sphere, make_hemisphere, Direction, DirectionSet,
};
use fodshift::phantom::{
    add_rician_noise, build_cohort, simulate_signal, AgeFaModel, FiberCompartment, Protocol,
    VoxelModel, APODIZATION, ISO_DIFFUSIVITY,
};

const LAMBDA_PAR: f64 = 1.7e-3;
const LAMBDA_PERP: f64 = 0.2e-3;

fn b0_normalized(voxel: &VoxelModel, dirs: &DirectionSet) -> Vec<f64> {
    let signal = simulate_signal(voxel, dirs);
    let b0_idx = dirs.b0_indices();
    let b0: f64 = b0_idx.iter().map(|&i| signal[i]).sum::<f64>() / b0_idx.len() as f64;
    signal.into_iter().map(|s| s / b0).collect()
}

fn one_fiber(dir: Direction, wm: f64, iso: f64) -> VoxelModel {
    VoxelModel {
        fibers: vec![FiberCompartment {
            direction: dir,
            volume_fraction: wm,
            lambda_parallel: LAMBDA_PAR,
            lambda_perp: LAMBDA_PERP,
        }],
        iso_fraction: iso,
        iso_diffusivity: ISO_DIFFUSIVITY,
        s0: 100.0,
    }
}

/// r_2 for the standard kernel at b=1000 against stratified
/// Monte-Carlo integration of 2π·N_2·∫E(t)P_2(t)dt with 10⁶ strata.
#[test]
fn response_r2_matches_monte_carlo_oracle() {
    let b = 1000.0;
    let n = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0x00d1ce);
    let mut integral = 0.0;
    for i in 0..n {
        let u: f64 = rng.random();
        let t = -1.0 + 2.0 * (i as f64 + u) / n as f64;
        let e = (-b * (LAMBDA_PERP + (LAMBDA_PAR - LAMBDA_PERP) * t * t)).exp();
        let p2 = 0.5 * (3.0 * t * t - 1.0);
        integral += e * p2;
    }
    integral *= 2.0 / n as f64;
    let n2 = (5.0 / (4.0 * std::f64::consts::PI)).sqrt();
    let oracle = 2.0 * std::f64::consts::PI * n2 * integral;

    let rf = response_from_tensor(LAMBDA_PAR, LAMBDA_PERP, ISO_DIFFUSIVITY, &[b], 8).unwrap();
    assert!(
        (rf.rl(0, 2) - oracle).abs() < 1e-4,
        "quadrature {} vs MC {}",
        rf.rl(0, 2),
        oracle
    );
    assert!(rf.rl(0, 2) < 0.0);
}

/// Exhaustive support-set oracle for non-negative least squares: for
/// every subset S of variables, solve the unconstrained normal
/// equations on S, keep KKT-feasible candidates, take the best. The
/// active-set solver must land on the same point.
#[test]
fn qp_matches_support_enumeration_on_nnls() {
    let n = 5usize;
    let m = 8usize;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + trial);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let b = DVector::from_fn(m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let g = a.transpose() * &a;
        let q = -(a.transpose() * &b);

        let mut best: Option<(f64, DVector<f64>)> = None;
        for support in 0u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| support >> i & 1 == 1).collect();
            let mut x = DVector::zeros(n);
            if !idx.is_empty() {
                let k = idx.len();
                let gs = DMatrix::from_fn(k, k, |r, c| g[(idx[r], idx[c])]);
                let qs = DVector::from_fn(k, |r, _| q[idx[r]]);
                let Some(xs) = gs.lu().solve(&(-qs)) else {
                    continue;
                };
                for (r, &i) in idx.iter().enumerate() {
                    x[i] = xs[r];
                }
            }
            if x.iter().any(|&v| v < -1e-12) {
                continue;
            }
            // KKT: gradient of inactive (zero) variables must be ≥ 0.
            let grad = &g * &x + &q;
            if (0..n).any(|i| x[i] <= 1e-12 && grad[i] < -1e-9) {
                continue;
            }
            let obj = 0.5 * x.dot(&(&g * &x)) + q.dot(&x);
            if best.as_ref().is_none_or(|(bo, _)| obj < *bo) {
                best = Some((obj, x));
            }
        }
        let (best_obj, best_x) = best.expect("NNLS always has a KKT point");

        let eye = DMatrix::identity(n, n);
        let sol = solve_qp(&g, &q, &eye, &DVector::zeros(n), DVector::zeros(n), 100).unwrap();
        let obj = 0.5 * sol.x.dot(&(&g * &sol.x)) + q.dot(&sol.x);
        assert!(
            (obj - best_obj).abs() < 1e-8,
            "trial {trial}: objective {obj} vs oracle {best_obj}"
        );
        assert!(
            (&sol.x - &best_x).amax() < 1e-6,
            "trial {trial}: x {:?} vs oracle {:?}",
            sol.x.as_slice(),
            best_x.as_slice()
        );
    }
}

#[test]
fn noiseless_single_fiber_recovers_direction_and_iso() {
    let protocol = Protocol::dhcp_like();
    let dirs = protocol.directions();
    let truth = Direction::new(0.3, -0.5, (1.0f64 - 0.09 - 0.25).sqrt()).unwrap();
    let voxel = one_fiber(truth, 0.7, 0.3);
    let signal = b0_normalized(&voxel, &dirs);

    let mut shells = vec![0.0];
    shells.extend(dirs.shells());
    let response = response_from_tensor(LAMBDA_PAR, LAMBDA_PERP, ISO_DIFFUSIVITY, &shells, 8)
        .unwrap()
        .apodized_basis(APODIZATION);
    let tess = make_hemisphere(2).unwrap();
    let (fod, iso) = csd_fit(&signal, &dirs, &response, 8, &tess).unwrap();

    let grid = fibonacci_sphere(20_000);
    let amps = eval_sh(&fod, &grid);
    let argmax = amps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let err = grid[argmax].axis_angle_to(&truth).to_degrees();
    assert!(err < 2.0, "argmax off by {err}°");
    assert!((iso - 0.3).abs() < 0.02, "iso_fraction {iso}");
    assert!((fod.integral() - 0.7).abs() < 0.05, "WM integral {}", fod.integral());
}

#[test]
fn pure_isotropic_voxel_yields_flat_fod() {
    let protocol = Protocol::dhcp_like();
    let dirs = protocol.directions();
    let voxel = VoxelModel::isotropic(100.0, ISO_DIFFUSIVITY);
    let signal = b0_normalized(&voxel, &dirs);

    let mut shells = vec![0.0];
    shells.extend(dirs.shells());
    let response = response_from_tensor(LAMBDA_PAR, LAMBDA_PERP, ISO_DIFFUSIVITY, &shells, 8)
        .unwrap()
        .apodized_basis(APODIZATION);
    let tess = make_hemisphere(2).unwrap();
    let (fod, iso) = csd_fit(&signal, &dirs, &response, 8, &tess).unwrap();

    let c00 = fod.coeffs()[0];
    let high: f64 = fod.coeffs()[1..].iter().map(|c| c * c).sum();
    assert!(
        high < 0.01 * c00.max(1e-3).powi(2),
        "l≥2 energy {high} vs c00² {}",
        c00 * c00
    );
    assert!((iso - 1.0).abs() < 0.02, "iso_fraction {iso}");
}

#[test]
fn sixty_degree_crossing_peaks_within_5_degrees() {
    let protocol = Protocol::dhcp_like();
    let dirs = protocol.directions();
    let (s, c) = (30.0f64.to_radians().sin(), 30.0f64.to_radians().cos());
    let u1 = Direction::new(s, 0.0, c).unwrap();
    let u2 = Direction::new(-s, 0.0, c).unwrap();
    let voxel = VoxelModel {
        fibers: vec![
            FiberCompartment {
                direction: u1,
                volume_fraction: 0.45,
                lambda_parallel: LAMBDA_PAR,
                lambda_perp: LAMBDA_PERP,
            },
            FiberCompartment {
                direction: u2,
                volume_fraction: 0.45,
                lambda_parallel: LAMBDA_PAR,
                lambda_perp: LAMBDA_PERP,
            },
        ],
        iso_fraction: 0.1,
        iso_diffusivity: ISO_DIFFUSIVITY,
        s0: 100.0,
    };
    let signal = b0_normalized(&voxel, &dirs);

    let mut shells = vec![0.0];
    shells.extend(dirs.shells());
    let response = response_from_tensor(LAMBDA_PAR, LAMBDA_PERP, ISO_DIFFUSIVITY, &shells, 8)
        .unwrap()
        .apodized_basis(APODIZATION);
    let tess = make_hemisphere(2).unwrap();
    let (fod, _) = csd_fit(&signal, &dirs, &response, 8, &tess).unwrap();

    let grid = fibonacci_sphere(20_000);
    let amps = eval_sh(&fod, &grid);
    let first = amps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let second = amps
        .iter()
        .enumerate()
        .filter(|(i, _)| grid[*i].axis_angle_to(&grid[first]).to_degrees() > 20.0)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let mut errs = [
        grid[first].axis_angle_to(&u1).to_degrees(),
        grid[second].axis_angle_to(&u2).to_degrees(),
    ];
    let swapped = [
        grid[first].axis_angle_to(&u2).to_degrees(),
        grid[second].axis_angle_to(&u1).to_degrees(),
    ];
    if swapped[0] + swapped[1] < errs[0] + errs[1] {
        errs = swapped;
    }
    assert!(errs[0] < 5.0 && errs[1] < 5.0, "peak errors {errs:?}°");
}

#[test]
fn fit_is_homogeneous_in_signal_scale() {
    let protocol = Protocol::dhcp_like();
    let dirs = protocol.directions();
    let truth = Direction::new(0.0, 0.6, 0.8).unwrap();
    let voxel = one_fiber(truth, 0.6, 0.4);
    let raw = simulate_signal(&voxel, &dirs);
    let noisy = add_rician_noise(&raw, voxel.s0, 30.0, 7).unwrap();
    let scaled: Vec<f64> = noisy.iter().map(|s| s * 8.0).collect();

    let mut shells = vec![0.0];
    shells.extend(dirs.shells());
    let response =
        response_from_tensor(LAMBDA_PAR, LAMBDA_PERP, ISO_DIFFUSIVITY, &shells, 8).unwrap();
    let tess = make_hemisphere(2).unwrap();
    let problem = CsdProblem::new(&dirs, &response, 8, &tess).unwrap();
    let base = problem.fit(&noisy).unwrap();
    let big = problem.fit(&scaled).unwrap();

    for (a, b) in base.fod.coeffs().iter().zip(big.fod.coeffs()) {
        let denom = b.abs().max(1.0);
        assert!(
            (8.0 * a - b).abs() <= 1e-9 * denom,
            "coefficient pair {a} {b} violates homogeneity"
        );
    }
    let denom = big.iso_fraction.abs().max(1.0);
    assert!((8.0 * base.iso_fraction - big.iso_fraction).abs() <= 1e-9 * denom);
}

#[test]
fn fitted_fod_respects_constraints_under_noise() {
    let protocol = Protocol::dhcp_like();
    let dirs = protocol.directions();
    let mut shells = vec![0.0];
    shells.extend(dirs.shells());
    let response =
        response_from_tensor(LAMBDA_PAR, LAMBDA_PERP, ISO_DIFFUSIVITY, &shells, 8).unwrap();
    let tess = make_hemisphere(2).unwrap();
    let problem = CsdProblem::new(&dirs, &response, 8, &tess).unwrap();

    for seed in 0..5u64 {
        let truth = Direction::new(0.8, 0.0, 0.6).unwrap();
        let voxel = one_fiber(truth, 0.75, 0.25);
        let raw = simulate_signal(&voxel, &dirs);
        let noisy = add_rician_noise(&raw, voxel.s0, 20.0, seed).unwrap();
        let b0_idx = dirs.b0_indices();
        let b0: f64 = b0_idx.iter().map(|&i| noisy[i]).sum::<f64>() / b0_idx.len() as f64;
        let normalized: Vec<f64> = noisy.iter().map(|s| s / b0).collect();
        let fit = problem.fit(&normalized).unwrap();
        assert!(fit.iso_fraction >= 0.0);
        assert!(fit.kkt_residual < 1e-6);
        for p in tess.points() {
            let amp = eval_sh_single(&fit.fod, p);
            assert!(amp >= -1e-8, "seed {seed}: amplitude {amp} at {p:?}");
        }
    }
}

#[test]
fn split_halves_are_disjoint_and_cover_every_shell() {
    let dirs = Protocol::dhcp_like().directions();
    let split = split_indices(&dirs, 42).unwrap();
    let mut all: Vec<usize> = split.half_a.iter().chain(&split.half_b).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..dirs.len()).collect::<Vec<_>>());
    assert!(split.half_a.iter().all(|i| !split.half_b.contains(i)));

    // dHCP-like: 300 volumes split 150/150, b0s included 10/10.
    assert_eq!(split.half_a.len(), 150);
    assert_eq!(split.half_b.len(), 150);
    let b0 = |half: &[usize]| half.iter().filter(|&&i| dirs.b_value(i) == 0.0).count();
    assert_eq!(b0(&split.half_a), 10);
    assert_eq!(b0(&split.half_b), 10);
    for b in dirs.shells() {
        let shell = dirs.shell_indices(b, 50.0);
        let in_a = shell.iter().filter(|i| split.half_a.contains(i)).count();
        assert_eq!(in_a, shell.len() / 2, "shell b={b} unbalanced");
    }

    let flipped = split_indices(&dirs, 43).unwrap();
    assert_eq!(flipped.half_a, split.half_b);
    assert_eq!(flipped.half_b, split.half_a);
}

/// With no noise both halves see the same continuous signal, so the
/// two gold-standard fits must agree up to sampling truncation.
#[test]
fn noiseless_split_halves_agree() {
    let mut protocol = Protocol::dhcp_like();
    protocol.snr = f64::INFINITY;
    let curve = AgeFaModel {
        a: 0.22,
        b: 0.12,
        c: 0.15,
        t0: 38.0,
    };
    let cohort = build_cohort(&protocol, 1, (40.0, 44.0), &curve, (6, 4, 4), 11).unwrap();
    let subject = &cohort[0];
    let (fa, fb) = gold_standard_split(subject, 5).unwrap();

    let grid = fibonacci_sphere(5_000);
    let mut checked = 0;
    for v in 0..subject.dwi.n_voxels() {
        if !subject.wm_mask.voxel(v)[0] || subject.n_fibers(v) != 1 {
            continue;
        }
        let ca = fodshift::geometry::ShCoeffs::new(8, fa.fods.voxel(v).to_vec()).unwrap();
        let cb = fodshift::geometry::ShCoeffs::new(8, fb.fods.voxel(v).to_vec()).unwrap();
        let amps_a = eval_sh(&ca, &grid);
        let amps_b = eval_sh(&cb, &grid);
        let pa = amps_a
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0;
        let pb = amps_b
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0;
        let gap = grid[pa].axis_angle_to(&grid[pb]).to_degrees();
        assert!(gap < 3.0, "voxel {v}: halves disagree by {gap}°");
        let rel = (ca.coeffs()[0] - cb.coeffs()[0]).abs() / ca.coeffs()[0].abs().max(1e-12);
        assert!(rel < 0.02, "voxel {v}: c00 mismatch {rel}");
        checked += 1;
    }
    assert!(checked > 0, "phantom produced no single-fiber WM voxels");
}

#[test]
fn restrict_channels_picks_the_right_measurements() {
    let mut vol = fodshift::Volume::filled((2, 1, 1), 4, 1.0, 0.0);
    vol.voxel_mut(0).copy_from_slice(&[10.0, 11.0, 12.0, 13.0]);
    vol.voxel_mut(1).copy_from_slice(&[20.0, 21.0, 22.0, 23.0]);
    let sub = restrict_channels(&vol, &[3, 1]);
    assert_eq!(sub.voxel(0), &[13.0, 11.0]);
    assert_eq!(sub.voxel(1), &[23.0, 21.0]);
}
