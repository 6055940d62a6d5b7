//! FOD peak extraction and optimal peak matching.

use crate::geometry::{eval_sh, eval_sh_single, Direction, ShCoeffs, SphereTessellation};

/// Default absolute amplitude gate, in GT-normalized FOD units.
pub const PEAK_THRESHOLD: f64 = 0.1;
/// Minimum angular separation between reported peaks.
pub const MIN_SEPARATION_DEG: f64 = 15.0;
/// Matches beyond this axis angle are discarded.
pub const MATCH_GATE_DEG: f64 = 45.0;
/// Gradient-ascent refinement iterations per peak.
pub const REFINE_ITERS: usize = 10;
/// Step size in radians per unit of relative gradient. The gradient
/// is divided by the local amplitude, which makes refinement invariant
/// to FOD scaling and keeps the effective step below the stability
/// bound: curvature/amplitude is at most l(l+1)/2 at the band limit,
/// so 0.04 stays under 2/36 even for pure order-8 content.
const REFINE_STEP: f64 = 0.04;

#[derive(Debug, Clone)]
pub struct Peak {
    pub direction: Direction,
    pub amplitude: f64,
}

/// Up to three peaks, descending by amplitude, all above the
/// extraction threshold, pairwise at least 15 degrees apart, and
/// canonicalized to the upper hemisphere.
#[derive(Debug, Clone, Default)]
pub struct PeakSet {
    peaks: Vec<Peak>,
}

impl PeakSet {
    /// Build from raw peaks: directions are canonicalized and the set
    /// sorted by descending amplitude. Threshold and separation gating
    /// stay with the extractor.
    pub fn from_peaks(peaks: Vec<Peak>) -> PeakSet {
        let mut peaks: Vec<Peak> = peaks
            .into_iter()
            .map(|p| Peak {
                direction: p.direction.canonical(),
                amplitude: p.amplitude,
            })
            .collect();
        peaks.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
        peaks.truncate(3);
        PeakSet { peaks }
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

fn tangent_basis(d: &Direction) -> ([f64; 3], [f64; 3]) {
    let v = d.as_array();
    let r = if v[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let mut t1 = [
        v[1] * r[2] - v[2] * r[1],
        v[2] * r[0] - v[0] * r[2],
        v[0] * r[1] - v[1] * r[0],
    ];
    let n1 = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
    for t in &mut t1 {
        *t /= n1;
    }
    let t2 = [
        v[1] * t1[2] - v[2] * t1[1],
        v[2] * t1[0] - v[0] * t1[2],
        v[0] * t1[1] - v[1] * t1[0],
    ];
    (t1, t2)
}

fn nudge(d: &Direction, t: &[f64; 3], h: f64) -> Direction {
    let v = d.as_array();
    Direction::normalized(v[0] + h * t[0], v[1] + h * t[1], v[2] + h * t[2])
        .expect("nudged direction stays off the origin")
}

/// Fixed-step gradient ascent on the sphere, central-difference
/// tangent gradient, fixed iteration count.
fn refine(fod: &ShCoeffs, start: Direction) -> (Direction, f64) {
    const H: f64 = 1e-5;
    let mut d = start;
    for _ in 0..REFINE_ITERS {
        let a = eval_sh_single(fod, &d);
        if a <= 0.0 {
            break;
        }
        let (t1, t2) = tangent_basis(&d);
        let g1 = (eval_sh_single(fod, &nudge(&d, &t1, H))
            - eval_sh_single(fod, &nudge(&d, &t1, -H)))
            / (2.0 * H);
        let g2 = (eval_sh_single(fod, &nudge(&d, &t2, H))
            - eval_sh_single(fod, &nudge(&d, &t2, -H)))
            / (2.0 * H);
        let s = REFINE_STEP / a;
        let v = d.as_array();
        d = Direction::normalized(
            v[0] + s * (g1 * t1[0] + g2 * t2[0]),
            v[1] + s * (g1 * t1[1] + g2 * t2[1]),
            v[2] + s * (g1 * t1[2] + g2 * t2[2]),
        )
        .expect("refined direction stays off the origin");
    }
    (d, eval_sh_single(fod, &d))
}

/// Local maxima of the FOD over the tessellation, antipodally merged,
/// refined, thresholded, separated by 15 degrees, top `max_peaks`.
pub fn extract_peaks(
    fod: &ShCoeffs,
    tess: &SphereTessellation,
    abs_threshold: f64,
    max_peaks: usize,
) -> PeakSet {
    let amp = eval_sh(fod, tess.points());
    let mut maxima: Vec<usize> = Vec::new();
    for i in 0..tess.len() {
        if tess.neighbors(i).iter().all(|&j| amp[i] > amp[j]) {
            maxima.push(i);
        }
    }

    // the tessellation is centrally symmetric, so each FOD lobe shows
    // up twice; canonicalizing and deduplicating by axis removes the
    // antipodal copy
    let mut candidates: Vec<Peak> = Vec::new();
    for &i in &maxima {
        let (d, a) = refine(fod, tess.points()[i]);
        let c = d.canonical();
        let dup = candidates
            .iter_mut()
            .find(|p| p.direction.axis_angle_to(&c).to_degrees() < 1.0);
        match dup {
            Some(p) => {
                if a > p.amplitude {
                    p.direction = c;
                    p.amplitude = a;
                }
            }
            None => candidates.push(Peak {
                direction: c,
                amplitude: a,
            }),
        }
    }

    candidates.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    let mut peaks: Vec<Peak> = Vec::new();
    for p in candidates {
        if peaks.len() == max_peaks {
            break;
        }
        if p.amplitude < abs_threshold {
            continue;
        }
        let separated = peaks
            .iter()
            .all(|q| q.direction.axis_angle_to(&p.direction).to_degrees() >= MIN_SEPARATION_DEG);
        if separated {
            peaks.push(p);
        }
    }
    PeakSet { peaks }
}

fn assignments(k: usize, m: usize) -> Vec<Vec<usize>> {
    // all injective maps {0..k} -> {0..m}, k <= m <= 3
    fn rec(k: usize, m: usize, used: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if used.len() == k {
            out.push(used.clone());
            return;
        }
        for j in 0..m {
            if !used.contains(&j) {
                used.push(j);
                rec(k, m, used, out);
                used.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(k, m, &mut Vec::new(), &mut out);
    out
}

/// Minimum-total-angle assignment between two peak sets. All
/// assignments of the smaller set are enumerated (at most 3x3), then
/// pairs beyond the 45-degree gate are dropped. Returns
/// (pred index, gt index, angle in degrees).
pub fn match_peaks(pred: &PeakSet, gt: &PeakSet) -> Vec<(usize, usize, f64)> {
    if pred.is_empty() || gt.is_empty() {
        return Vec::new();
    }
    let angle = |i: usize, j: usize| {
        pred.peaks[i]
            .direction
            .axis_angle_to(&gt.peaks[j].direction)
            .to_degrees()
    };
    let (k, m, pred_small) = if pred.len() <= gt.len() {
        (pred.len(), gt.len(), true)
    } else {
        (gt.len(), pred.len(), false)
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    for asg in assignments(k, m) {
        let total: f64 = asg
            .iter()
            .enumerate()
            .map(|(i, &j)| if pred_small { angle(i, j) } else { angle(j, i) })
            .sum();
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, asg));
        }
    }
    let (_, asg) = best.expect("nonempty sets always admit an assignment");
    let mut pairs = Vec::new();
    for (i, &j) in asg.iter().enumerate() {
        let (p, g) = if pred_small { (i, j) } else { (j, i) };
        let a = angle(p, g);
        if a <= MATCH_GATE_DEG {
            pairs.push((p, g, a));
        }
    }
    pairs
}
