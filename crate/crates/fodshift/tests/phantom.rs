//! Phantom oracles: Monte-Carlo noise moments, an explicit 3×3 tensor
//! forward model, dense-grid FOD argmax checks, and a log-linear
//! tensor-fit recovery of the age→FA trend.

use fodshift::geometry::{eval_sh_single, make_tessellation, Direction, DirectionSet};
use fodshift::phantom::{
    add_rician_noise, build_cohort, dhcp_preset, gt_fod, simulate_signal, solve_lambdas,
    FiberCompartment, Protocol, VoxelModel, MD_FIBER,
};
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[test]
fn rician_floor_matches_monte_carlo_moment() {
    // S = 0: magnitude is Rayleigh with mean σ√(π/2)
    let n = 1_000_000;
    let sigma = 5.0;
    let s0 = 100.0;
    let snr = s0 / sigma;
    let noisy = add_rician_noise(&vec![0.0; n], s0, snr, 9).unwrap();
    let mean = noisy.iter().sum::<f64>() / n as f64;
    let expected = sigma * (std::f64::consts::PI / 2.0).sqrt();
    assert!(
        (mean - expected).abs() < 0.01 * expected,
        "{mean} vs {expected}"
    );
}

#[test]
fn signal_matches_full_tensor_quadratic_form_oracle() {
    let u = Direction::normalized(1.0, -0.4, 0.8).unwrap();
    let (lpar, lperp) = (1.7e-3, 0.2e-3);
    let voxel = VoxelModel {
        fibers: vec![FiberCompartment {
            direction: u,
            volume_fraction: 0.8,
            lambda_parallel: lpar,
            lambda_perp: lperp,
        }],
        iso_fraction: 0.2,
        iso_diffusivity: 3.0e-3,
        s0: 100.0,
    };

    // oracle: build D as a dense 3×3 and evaluate gᵀDg literally
    let uv = nalgebra::Vector3::new(u.x, u.y, u.z);
    let d_tensor = Matrix3::identity() * lperp + (uv * uv.transpose()) * (lpar - lperp);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let g = Direction::normalized(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0f64).max(-0.99),
        )
        .unwrap();
        let b = rng.random_range(0.0..3000.0);
        let dirs = DirectionSet::new(vec![g], vec![b]).unwrap();
        let got = simulate_signal(&voxel, &dirs)[0];
        let gv = nalgebra::Vector3::new(g.x, g.y, g.z);
        let want = 100.0
            * (0.2 * (-b * 3.0e-3f64).exp() + 0.8 * (-b * (gv.transpose() * d_tensor * gv)[0]).exp());
        assert!((got - want).abs() < 1e-10 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn signal_is_positive_and_nonincreasing_in_b() {
    let (lpar, lperp) = solve_lambdas(0.6, MD_FIBER).unwrap();
    let u = Direction::normalized(0.2, 0.3, 0.9).unwrap();
    let voxel = VoxelModel {
        fibers: vec![FiberCompartment {
            direction: u,
            volume_fraction: 1.0,
            lambda_parallel: lpar,
            lambda_perp: lperp,
        }],
        iso_fraction: 0.0,
        iso_diffusivity: 3.0e-3,
        s0: 100.0,
    };
    let g = Direction::normalized(0.5, -0.5, 0.7).unwrap();
    let bs: Vec<f64> = (0..31).map(|i| i as f64 * 100.0).collect();
    let dirs = DirectionSet::new(vec![g; bs.len()], bs).unwrap();
    let s = simulate_signal(&voxel, &dirs);
    for w in s.windows(2) {
        assert!(w[1] > 0.0 && w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn orthogonal_crossing_argmax_lands_on_the_fibers() {
    let u1 = Direction::new(0.0, 0.0, 1.0).unwrap();
    let u2 = Direction::new(1.0, 0.0, 0.0).unwrap();
    let voxel = VoxelModel {
        fibers: vec![
            FiberCompartment {
                direction: u1,
                volume_fraction: 0.5,
                lambda_parallel: 1.7e-3,
                lambda_perp: 0.2e-3,
            },
            FiberCompartment {
                direction: u2,
                volume_fraction: 0.5,
                lambda_parallel: 1.7e-3,
                lambda_perp: 0.2e-3,
            },
        ],
        iso_fraction: 0.0,
        iso_diffusivity: 3.0e-3,
        s0: 100.0,
    };
    let fod = gt_fod(&voxel, 8);
    assert!((fod.integral() - 1.0).abs() < 1e-12);

    let tess = make_tessellation(4);
    let vals: Vec<f64> = tess.points().iter().map(|p| eval_sh_single(&fod, p)).collect();
    let top = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let p1 = tess.points()[top];
    let hit1 = p1.axis_angle_to(&u1).min(p1.axis_angle_to(&u2));
    assert!(hit1.to_degrees() < 3.0, "first argmax {}°", hit1.to_degrees());

    let other = if p1.axis_angle_to(&u1) < p1.axis_angle_to(&u2) { u2 } else { u1 };
    let top2 = (0..vals.len())
        .filter(|&i| tess.points()[i].axis_angle_to(&p1).to_degrees() > 20.0)
        .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap();
    let hit2 = tess.points()[top2].axis_angle_to(&other);
    assert!(hit2.to_degrees() < 3.0, "second argmax {}°", hit2.to_degrees());
}

#[test]
fn cohort_is_deterministic_per_seed() {
    let p = dhcp_preset();
    let a = build_cohort(&p.protocol, 2, p.old, &p.age_fa, (6, 6, 6), 77).unwrap();
    let b = build_cohort(&p.protocol, 2, p.old, &p.age_fa, (6, 6, 6), 77).unwrap();
    assert_eq!(a, b);
    let c = build_cohort(&p.protocol, 2, p.old, &p.age_fa, (6, 6, 6), 78).unwrap();
    assert_ne!(a[0].dwi, c[0].dwi);
}

#[test]
fn gt_fods_conserve_fractions_and_stay_nearly_nonnegative() {
    let p = dhcp_preset();
    let subj = &build_cohort(&p.protocol, 1, p.old, &p.age_fa, (12, 6, 6), 5).unwrap()[0];
    let tess = make_tessellation(3);
    for v in 0..subj.wm_mask.n_voxels() {
        if !subj.wm_mask.voxel(v)[0] {
            assert!(subj.gt_fod.voxel(v).iter().all(|&c| c == 0.0));
            continue;
        }
        let fod = subj.gt_coeffs(v);
        let frac_sum: f64 = subj.grid[v].fibers.iter().map(|f| f.volume_fraction).sum();
        assert!((fod.integral() - frac_sum).abs() < 1e-9);

        let vals: Vec<f64> = tess.points().iter().map(|q| eval_sh_single(&fod, q)).collect();
        let max = vals.iter().fold(f64::MIN, |a, &b| a.max(b));
        let min = vals.iter().fold(f64::MAX, |a, &b| a.min(b));
        assert!(min >= -0.05 * max, "ringing {min} vs max {max} at voxel {v}");
    }
}

/// Log-linear weighted tensor fit, independent of any library code
/// under test: ln S = ln S0 − b·gᵀDg solved for the 6 tensor entries.
fn tensor_fa_oracle(signals: &[f64], dirs: &DirectionSet) -> f64 {
    let idx: Vec<usize> = (0..dirs.len()).filter(|&i| dirs.b_value(i) <= 1100.0).collect();
    let mut a = DMatrix::zeros(idx.len(), 7);
    let mut y = DVector::zeros(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        let g = dirs.direction(i);
        let b = dirs.b_value(i);
        a[(r, 0)] = 1.0;
        a[(r, 1)] = -b * g.x * g.x;
        a[(r, 2)] = -b * g.y * g.y;
        a[(r, 3)] = -b * g.z * g.z;
        a[(r, 4)] = -2.0 * b * g.x * g.y;
        a[(r, 5)] = -2.0 * b * g.x * g.z;
        a[(r, 6)] = -2.0 * b * g.y * g.z;
        y[r] = signals[i].max(1e-12).ln();
    }
    let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * y)).unwrap();
    let d = Matrix3::new(sol[1], sol[4], sol[5], sol[4], sol[2], sol[6], sol[5], sol[6], sol[3]);
    let eig = d.symmetric_eigen().eigenvalues;
    let (l1, l2, l3) = (eig[0], eig[1], eig[2]);
    let md = (l1 + l2 + l3) / 3.0;
    let num = ((l1 - md).powi(2) + (l2 - md).powi(2) + (l3 - md).powi(2)) * 1.5;
    let den = l1 * l1 + l2 * l2 + l3 * l3;
    (num / den).sqrt()
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean).powi(2);
        dy += (ry[i] - mean).powi(2);
    }
    num / (dx * dy).sqrt()
}

#[test]
fn mean_wm_fa_rises_with_age_under_a_tensor_fit_oracle() {
    let p = dhcp_preset();
    // full age span, noiseless re-simulation for the oracle fit
    let cohort = build_cohort(
        &p.protocol,
        16,
        (p.young.0, p.old.1),
        &p.age_fa,
        (12, 5, 5),
        31,
    )
    .unwrap();
    let dirs = cohort[0].dirs.clone();
    let mut ages = Vec::new();
    let mut fas = Vec::new();
    for s in &cohort {
        let mut acc = 0.0;
        let mut n = 0;
        for (v, voxel) in s.grid.iter().enumerate() {
            if s.n_fibers(v) == 1 {
                let clean = simulate_signal(voxel, &dirs);
                acc += tensor_fa_oracle(&clean, &dirs);
                n += 1;
            }
        }
        ages.push(s.age);
        fas.push(acc / n as f64);
    }
    let rho = spearman(&ages, &fas);
    assert!(rho > 0.8, "Spearman rho = {rho}");
}

#[test]
fn cohort_at_curve_midpoint_recovers_the_plateau_value() {
    let p = dhcp_preset();
    let t0 = p.age_fa.t0;
    let cohort = build_cohort(&p.protocol, 10, (t0, t0), &p.age_fa, (6, 4, 4), 13).unwrap();
    let mut mean_fa = 0.0;
    for s in &cohort {
        // read back the generative FA from a single-fiber compartment
        let v = (0..s.grid.len()).find(|&v| s.n_fibers(v) == 1).unwrap();
        let f = &s.grid[v].fibers[0];
        mean_fa += fodshift::phantom::fa_of_tensor(f.lambda_parallel, f.lambda_perp);
    }
    mean_fa /= cohort.len() as f64;
    assert!(
        (mean_fa - p.age_fa.a).abs() < 0.02,
        "mean FA {mean_fa} vs a = {}",
        p.age_fa.a
    );
}

#[test]
fn degenerate_and_invalid_cohort_parameters_error_out() {
    let p = dhcp_preset();
    assert!(build_cohort(&p.protocol, 0, p.old, &p.age_fa, (6, 6, 6), 1).is_err());
    assert!(build_cohort(&p.protocol, 1, (44.0, 40.0), &p.age_fa, (6, 6, 6), 1).is_err());
    let mut bad = Protocol::dhcp_like();
    bad.snr = -1.0;
    assert!(build_cohort(&bad, 1, p.old, &p.age_fa, (6, 6, 6), 1).is_err());
}
