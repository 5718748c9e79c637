use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{wrap_coord, Ball};

/// A finite multiset of torus points stored as flat coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointConfiguration {
    d: usize,
    coords: Vec<f64>,
}

impl PointConfiguration {
    pub fn empty(d: usize) -> Self {
        PointConfiguration {
            d,
            coords: Vec::new(),
        }
    }

    pub fn with_capacity(d: usize, n: usize) -> Self {
        PointConfiguration {
            d,
            coords: Vec::with_capacity(d * n),
        }
    }

    /// Builds a configuration from explicit points, wrapping them into `[0,1)^d`.
    pub fn from_points(d: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut c = Self::with_capacity(d, points.len());
        for p in points {
            c.push(p)?;
        }
        Ok(c)
    }

    pub fn from_flat(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d == 0 || coords.len() % d != 0 {
            return Err(Error::invalid("coords", "length is not a multiple of d"));
        }
        Ok(PointConfiguration {
            d,
            coords: coords.into_iter().map(wrap_coord).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.coords.len() / self.d
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d.max(1))
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: p.len(),
            });
        }
        self.coords.extend(p.iter().map(|&c| wrap_coord(c)));
        Ok(())
    }

    /// Appends a point known to be inside `[0,1)^d` already.
    pub(crate) fn push_unchecked(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.d);
        self.coords.extend_from_slice(p);
    }

    pub fn extend(&mut self, other: &PointConfiguration) {
        debug_assert_eq!(self.d, other.d);
        self.coords.extend_from_slice(&other.coords);
    }

    pub fn remove(&mut self, i: usize) {
        self.coords.drain(i * self.d..(i + 1) * self.d);
    }

    /// Count of points in the closed ball.
    pub fn count_in(&self, ball: &Ball) -> usize {
        self.iter().filter(|p| ball.contains_point(p)).count()
    }

    /// Points inside the closed ball, in input order.
    pub fn restrict(&self, ball: &Ball) -> PointConfiguration {
        let mut out = Self::empty(self.d);
        for p in self.iter().filter(|p| ball.contains_point(p)) {
            out.push_unchecked(p);
        }
        out
    }

    fn multiplicities(&self) -> HashMap<Vec<u64>, usize> {
        let mut m = HashMap::new();
        for p in self.iter() {
            *m.entry(p.iter().map(|c| c.to_bits()).collect()).or_insert(0) += 1;
        }
        m
    }

    /// Multiset difference `self \ other` under exact coordinate equality.
    pub fn difference(&self, other: &PointConfiguration) -> PointConfiguration {
        let mut avail = other.multiplicities();
        let mut out = Self::empty(self.d);
        for p in self.iter() {
            let key: Vec<u64> = p.iter().map(|c| c.to_bits()).collect();
            match avail.get_mut(&key) {
                Some(c) if *c > 0 => *c -= 1,
                _ => out.push_unchecked(p),
            }
        }
        out
    }

    /// Total mass of the symmetric difference.
    pub fn symmetric_difference_count(&self, other: &PointConfiguration) -> usize {
        self.difference(other).len() + other.difference(self).len()
    }

    /// Line-oriented text: a `d=<dim> n=<count>` header, then one point per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("d={} n={}\n", self.d, self.len());
        for p in self.iter() {
            let line: Vec<String> = p.iter().map(|c| format!("{c:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let mut d = None;
        let mut n = None;
        for tok in header.split_whitespace() {
            let bad = |r: &str| Error::Parse {
                line: 1,
                reason: r.to_string(),
            };
            if let Some(v) = tok.strip_prefix("d=") {
                d = Some(v.parse::<usize>().map_err(|_| bad("bad d"))?);
            } else if let Some(v) = tok.strip_prefix("n=") {
                n = Some(v.parse::<usize>().map_err(|_| bad("bad n"))?);
            } else {
                return Err(bad("unexpected header token"));
            }
        }
        let (d, n) = match (d, n) {
            (Some(d), Some(n)) if d > 0 => (d, n),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    reason: "header needs d=<dim> n=<count>".into(),
                })
            }
        };
        let mut c = Self::with_capacity(d, n);
        for (i, line) in lines {
            let vals: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(|t| t.parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if vals.len() != d {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("expected {d} coordinates, got {}", vals.len()),
                });
            }
            c.push(&vals)?;
        }
        if c.len() != n {
            return Err(Error::Parse {
                line: 1,
                reason: format!("header announces {n} points, found {}", c.len()),
            });
        }
        Ok(c)
    }
}
