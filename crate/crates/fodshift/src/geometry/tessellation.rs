//! Icosahedral sphere tessellation: 10·4^L + 2 points at subdivision
//! level L, plus an antipodally collapsed hemisphere variant for
//! peak finding on symmetric functions.

use std::collections::HashMap;

use super::direction::Direction;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SphereTessellation {
    points: Vec<Direction>,
    faces: Vec<[usize; 3]>,
    neighbors: Vec<Vec<usize>>,
}

impl SphereTessellation {
    pub fn points(&self) -> &[Direction] {
        &self.points
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// n near-uniform points via the golden-angle spiral. Not an
/// icosahedral mesh; used for gradient scheme generation where no
/// neighbor graph is needed.
pub fn fibonacci_sphere(n: usize) -> Vec<Direction> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Direction::normalized(r * phi.cos(), r * phi.sin(), z).unwrap()
        })
        .collect()
}

/// Icosahedron subdivided `level` times, vertices on the unit sphere.
pub fn make_tessellation(level: usize) -> SphereTessellation {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let mut points: Vec<Direction> = raw
        .iter()
        .map(|&(x, y, z)| Direction::normalized(x, y, z).unwrap())
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, points: &mut Vec<Direction>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let p = points[a];
                let q = points[b];
                let d = Direction::normalized(p.x + q.x, p.y + q.y, p.z + q.z).unwrap();
                points.push(d);
                points.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut points);
            let bc = mid(b, c, &mut points);
            let ca = mid(c, a, &mut points);
            next_faces.push([a, ab, ca]);
            next_faces.push([b, bc, ab]);
            next_faces.push([c, ca, bc]);
            next_faces.push([ab, bc, ca]);
        }
        faces = next_faces;
    }

    let neighbors = neighbor_lists(points.len(), &faces);
    SphereTessellation {
        points,
        faces,
        neighbors,
    }
}

fn neighbor_lists(n: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); n];
    for &[a, b, c] in faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            nb[u].push(v);
            nb[v].push(u);
        }
    }
    for l in &mut nb {
        l.sort_unstable();
        l.dedup();
    }
    nb
}

/// Antipodal quotient of [`make_tessellation`]: one representative
/// per ±pair, neighbor edges mapped through the identification. Used
/// for local-maxima search on antipodally symmetric functions.
pub fn make_hemisphere(level: usize) -> Result<SphereTessellation> {
    let full = make_tessellation(level);
    let n = full.len();

    // The subdivided icosahedron is centrally symmetric, so every
    // point has an exact antipode in the set; find it by nearest
    // neighbor and fail loudly if symmetry ever broke.
    let mut partner = vec![usize::MAX; n];
    for i in 0..n {
        let target = full.points[i].flipped();
        let (mut best, mut best_dot) = (usize::MAX, -2.0);
        for (j, p) in full.points.iter().enumerate() {
            let d = p.dot(&target);
            if d > best_dot {
                best_dot = d;
                best = j;
            }
        }
        if best_dot < 1.0 - 1e-9 {
            return Err(Error::NumericalFailure {
                what: "tessellation lost central symmetry".into(),
                residual: 1.0 - best_dot,
            });
        }
        partner[i] = best;
    }

    let mut keep = Vec::new();
    let mut hemi_of = vec![usize::MAX; n];
    for i in 0..n {
        if partner[i] == i || i < partner[i] {
            hemi_of[i] = keep.len();
            keep.push(i);
        }
    }
    for i in 0..n {
        if hemi_of[i] == usize::MAX {
            hemi_of[i] = hemi_of[partner[i]];
        }
    }

    let points: Vec<Direction> = keep.iter().map(|&i| full.points[i].canonical()).collect();
    let mut neighbors = vec![Vec::new(); keep.len()];
    for (h, &i) in keep.iter().enumerate() {
        for &j in full.neighbors(i).iter().chain(full.neighbors(partner[i])) {
            let hj = hemi_of[j];
            if hj != h {
                neighbors[h].push(hj);
            }
        }
        neighbors[h].sort_unstable();
        neighbors[h].dedup();
    }

    Ok(SphereTessellation {
        points,
        faces: Vec::new(),
        neighbors,
    })
}
