//! Text gradient tables: one "gx gy gz b" line per measurement.
//!
//! Components print with Rust's shortest-round-trip float formatting,
//! so read(write(t)) reproduces every value bit for bit.

use std::path::Path;

use super::json::atomic_write;
use crate::geometry::{Direction, DirectionSet};
use crate::{Error, Result};

pub fn write_gradient_table(path: &Path, dirs: &DirectionSet) -> Result<()> {
    let mut out = String::new();
    for i in 0..dirs.len() {
        let g = dirs.direction(i).as_array();
        out.push_str(&format!("{} {} {} {}\n", g[0], g[1], g[2], dirs.b_value(i)));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_gradient_table(path: &Path) -> Result<DirectionSet> {
    let text = std::fs::read_to_string(path)?;
    let mut directions = Vec::new();
    let mut b_values = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse = |tok: Option<&str>, what: &str| -> Result<f64> {
            tok.ok_or(())
                .and_then(|t| t.parse::<f64>().map_err(|_| ()))
                .map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    location: format!("line {}", ln + 1),
                    message: format!("malformed {what} in gradient line {line:?}"),
                })
        };
        let mut toks = line.split_whitespace();
        let x = parse(toks.next(), "x component")?;
        let y = parse(toks.next(), "y component")?;
        let z = parse(toks.next(), "z component")?;
        let b = parse(toks.next(), "b-value")?;
        if toks.next().is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                location: format!("line {}", ln + 1),
                message: "gradient line has more than four fields".into(),
            });
        }
        directions.push(Direction::new(x, y, z).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            location: format!("line {}", ln + 1),
            message: e.to_string(),
        })?);
        b_values.push(b);
    }
    DirectionSet::new(directions, b_values)
}
