use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One atom of a marked configuration with the tuple that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub unit: Option<Vec<f64>>,
    pub mark: f64,
    pub provenance: Vec<usize>,
}

/// Finite multiset of (location, mark) pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkedConfiguration {
    d: usize,
    arity: usize,
    atoms: Vec<Atom>,
}

impl MarkedConfiguration {
    pub fn new(d: usize, arity: usize, atoms: Vec<Atom>) -> Self {
        MarkedConfiguration { d, arity, atoms }
    }

    pub fn empty(d: usize, arity: usize) -> Self {
        Self::new(d, arity, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn push(&mut self, atom: Atom) {
        self.atoms.push(atom);
    }

    /// Number of atoms with mark strictly above `b`.
    pub fn count_above(&self, b: f64) -> usize {
        self.atoms.iter().filter(|a| a.mark > b).count()
    }

    /// Largest mark, or negative infinity when empty.
    pub fn max_mark(&self) -> f64 {
        self.atoms.iter().fold(f64::NEG_INFINITY, |m, a| m.max(a.mark))
    }

    pub fn restrict_above(&self, b: f64) -> Self {
        Self::new(
            self.d,
            self.arity,
            self.atoms.iter().filter(|a| a.mark > b).cloned().collect(),
        )
    }

    /// Atoms whose unit lies in `[lower, upper)` and mark in `(lo, hi]`.
    pub fn count_in_cell(&self, lower: &[f64], upper: &[f64], lo: f64, hi: f64) -> usize {
        self.atoms
            .iter()
            .filter(|a| {
                a.mark > lo
                    && a.mark <= hi
                    && a.unit.as_ref().is_some_and(|u| {
                        u.iter().zip(lower.iter().zip(upper)).all(|(&c, (&l, &h))| c >= l && c < h)
                    })
            })
            .count()
    }

    /// Text form: a `d=<dim> k=<arity> n=<count>` header, then one atom per
    /// line as unit coordinates (or `-`), mark, generating indices.
    pub fn to_text(&self) -> String {
        let mut s = format!("d={} k={} n={}\n", self.d, self.arity, self.atoms.len());
        for a in &self.atoms {
            let mut parts: Vec<String> = match &a.unit {
                Some(u) => u.iter().map(|c| format!("{c:.16e}")).collect(),
                None => vec!["-".to_string()],
            };
            parts.push(format!("{:.16e}", a.mark));
            parts.extend(a.provenance.iter().map(|i| i.to_string()));
            let _ = writeln!(s, "{}", parts.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, r: &str| Error::Parse {
            line,
            reason: r.to_string(),
        };
        let (_, header) = lines.next().ok_or(perr(1, "missing header"))?;
        let (mut d, mut k, mut n) = (None, None, None);
        for tok in header.split_whitespace() {
            let (key, val) = tok.split_once('=').ok_or(perr(1, "bad header token"))?;
            let v: usize = val.parse().map_err(|_| perr(1, "bad header value"))?;
            match key {
                "d" => d = Some(v),
                "k" => k = Some(v),
                "n" => n = Some(v),
                _ => return Err(perr(1, "unknown header key")),
            }
        }
        let (d, k, n) = match (d, k, n) {
            (Some(d), Some(k), Some(n)) => (d, k, n),
            _ => return Err(perr(1, "header needs d, k and n")),
        };
        let mut atoms = Vec::with_capacity(n);
        for (i, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |t: &str| t.parse::<f64>().map_err(|e| perr(i + 1, &e.to_string()));
            let (unit, rest) = if toks.first() == Some(&"-") {
                (None, &toks[1..])
            } else {
                if toks.len() < d {
                    return Err(perr(i + 1, "too few fields"));
                }
                let u: Result<Vec<f64>> = toks[..d].iter().map(|t| num(t)).collect();
                (Some(u?), &toks[d..])
            };
            if rest.len() != 1 + k {
                return Err(perr(i + 1, "expected a mark and one index per tuple slot"));
            }
            let mark = num(rest[0])?;
            let provenance: std::result::Result<Vec<usize>, _> = rest[1..].iter().map(|t| t.parse()).collect();
            atoms.push(Atom {
                unit,
                mark,
                provenance: provenance.map_err(|_| perr(i + 1, "bad index"))?,
            });
        }
        if atoms.len() != n {
            return Err(perr(1, "atom count does not match header"));
        }
        Ok(Self::new(d, k, atoms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_queries() {
        let m = MarkedConfiguration::new(
            2,
            1,
            vec![
                Atom {
                    unit: Some(vec![0.1, 0.2]),
                    mark: 0.5,
                    provenance: vec![3],
                },
                Atom {
                    unit: Some(vec![0.7, 0.9]),
                    mark: 2.25,
                    provenance: vec![8],
                },
            ],
        );
        assert_eq!(MarkedConfiguration::from_text(&m.to_text()).unwrap(), m);
        assert_eq!(m.count_above(1.0), 1);
        assert_eq!(m.max_mark(), 2.25);
        assert_eq!(m.count_in_cell(&[0.0, 0.0], &[0.5, 0.5], 0.0, 1.0), 1);
        assert_eq!(MarkedConfiguration::empty(2, 1).max_mark(), f64::NEG_INFINITY);
    }
}
