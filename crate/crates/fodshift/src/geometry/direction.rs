use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit vector on the sphere. Antipodal equivalence is not baked in;
/// consumers that treat ±u as the same axis call [`Direction::axis_angle_to`]
/// or [`Direction::canonical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n2 = x * x + y * y + z * z;
        if (n2 - 1.0).abs() > 3.0 * Self::NORM_TOL {
            return Err(Error::invalid(format!(
                "direction ({x}, {y}, {z}) is not unit length (|v|^2 = {n2})"
            )));
        }
        Ok(Self { x, y, z })
    }

    /// Normalize an arbitrary nonzero vector onto the sphere.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn flipped(&self) -> Direction {
        Direction {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Angle in radians, 0..π.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos()
    }

    /// Angle between undirected axes, 0..π/2.
    pub fn axis_angle_to(&self, other: &Direction) -> f64 {
        self.dot(other).abs().clamp(0.0, 1.0).acos()
    }

    /// Representative of the antipodal pair with z > 0 (ties broken by
    /// y, then x), so ±u map to one key.
    pub fn canonical(&self) -> Direction {
        let flip = self.z < 0.0
            || (self.z == 0.0 && (self.y < 0.0 || (self.y == 0.0 && self.x < 0.0)));
        if flip {
            self.flipped()
        } else {
            *self
        }
    }

    /// (cos θ, φ) spherical angles: θ polar from +z, φ azimuth.
    pub fn angles(&self) -> (f64, f64) {
        (self.z.clamp(-1.0, 1.0), self.y.atan2(self.x))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Ordered gradient directions with one b-value per direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    directions: Vec<Direction>,
    b_values: Vec<f64>,
}

impl DirectionSet {
    pub fn new(directions: Vec<Direction>, b_values: Vec<f64>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("direction set must be nonempty"));
        }
        if directions.len() != b_values.len() {
            return Err(Error::invalid(format!(
                "{} directions but {} b-values",
                directions.len(),
                b_values.len()
            )));
        }
        if let Some(b) = b_values.iter().find(|&&b| !(b >= 0.0)) {
            return Err(Error::invalid(format!("negative or NaN b-value {b}")));
        }
        Ok(Self {
            directions,
            b_values,
        })
    }

    /// Single-shell set with the same b everywhere.
    pub fn single_shell(directions: Vec<Direction>, b: f64) -> Result<Self> {
        let n = directions.len();
        Self::new(directions, vec![b; n])
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn b_values(&self) -> &[f64] {
        &self.b_values
    }

    pub fn direction(&self, i: usize) -> Direction {
        self.directions[i]
    }

    pub fn b_value(&self, i: usize) -> f64 {
        self.b_values[i]
    }

    /// Indices whose b-value is within `tol` of `b`.
    pub fn shell_indices(&self, b: f64, tol: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| (self.b_values[i] - b).abs() <= tol)
            .collect()
    }

    pub fn b0_indices(&self) -> Vec<usize> {
        self.shell_indices(0.0, 1e-6)
    }

    /// Distinct nonzero b-values in ascending order (50 s/mm² merge
    /// tolerance).
    pub fn shells(&self) -> Vec<f64> {
        let mut bs: Vec<f64> = Vec::new();
        for &b in &self.b_values {
            if b > 1e-6 && !bs.iter().any(|&u| (u - b).abs() <= 50.0) {
                bs.push(b);
            }
        }
        bs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bs
    }

    pub fn subset(&self, indices: &[usize]) -> Result<DirectionSet> {
        let dirs = indices.iter().map(|&i| self.directions[i]).collect();
        let bs = indices.iter().map(|&i| self.b_values[i]).collect();
        Self::new(dirs, bs)
    }
}
