//! Arctan growth-curve fit for FA-vs-age trajectories.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// FA(t) = a + b*atan(c*(t - t0)).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ArctanFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub t0: f64,
    pub residual_rms: f64,
    pub converged: bool,
}

impl ArctanFit {
    pub fn guess(a: f64, b: f64, c: f64, t0: f64) -> Self {
        ArctanFit {
            a,
            b,
            c,
            t0,
            residual_rms: f64::INFINITY,
            converged: false,
        }
    }

    /// Data-driven starting point: level from the mean, range from the
    /// spread, inflection at the age midpoint.
    pub fn initial_guess(points: &[(f64, f64)]) -> Self {
        let n = points.len() as f64;
        let mean_fa = points.iter().map(|p| p.1).sum::<f64>() / n;
        let (min_fa, max_fa) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
        let (min_t, max_t) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.0), hi.max(p.0))
            });
        let span = (max_t - min_t).max(1.0);
        ArctanFit::guess(mean_fa, (max_fa - min_fa).max(1e-3), 2.0 / span, 0.5 * (min_t + max_t))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.a + self.b * (self.c * (t - self.t0)).atan()
    }

    /// d FA / dt.
    pub fn slope(&self, t: f64) -> f64 {
        let u = self.c * (t - self.t0);
        self.b * self.c / (1.0 + u * u)
    }
}

fn residuals(p: &[f64; 4], points: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_iterator(
        points.len(),
        points
            .iter()
            .map(|&(t, y)| p[0] + p[1] * (p[2] * (t - p[3])).atan() - y),
    )
}

fn jacobian(p: &[f64; 4], points: &[(f64, f64)]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(points.len(), 4);
    for (i, &(t, _)) in points.iter().enumerate() {
        let u = p[2] * (t - p[3]);
        let den = 1.0 + u * u;
        j[(i, 0)] = 1.0;
        j[(i, 1)] = u.atan();
        j[(i, 2)] = p[1] * (t - p[3]) / den;
        j[(i, 3)] = -p[1] * p[2] / den;
    }
    j
}

const MAX_ITERS: usize = 200;
const STEP_TOL: f64 = 1e-10;

/// Levenberg-Marquardt fit of the four curve parameters. Converged
/// when the accepted step norm drops below 1e-10; running out of
/// iterations returns the best parameters inside the error.
pub fn fit_arctan(points: &[(f64, f64)], init: &ArctanFit) -> Result<ArctanFit> {
    if points.len() < 4 {
        return Err(Error::invalid("arctan fit needs at least four points"));
    }
    let mut p = [init.a, init.b, init.c, init.t0];
    let mut r = residuals(&p, points);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..MAX_ITERS {
        let j = jacobian(&p, points);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for d in 0..4 {
                lhs[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
            let tr = residuals(&trial, points);
            let tc = tr.norm_squared();
            if tc <= cost {
                p = trial;
                r = tr;
                cost = tc;
                lambda = (lambda / 10.0).max(1e-12);
                if step.norm() < STEP_TOL {
                    converged = true;
                }
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no damping level improves the cost: the iterate is at a
            // (numerical) minimum, treat as converged
            converged = true;
            break;
        }
    }

    let rms = (cost / points.len() as f64).sqrt();
    if !converged {
        return Err(Error::FitNotConverged {
            residual_rms: rms,
            best: p.to_vec(),
        });
    }
    Ok(ArctanFit {
        a: p[0],
        b: p[1],
        c: p[2],
        t0: p[3],
        residual_rms: rms,
        converged: true,
    })
}
