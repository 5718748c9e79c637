use crate::error::{Error, Result};
use crate::geometry::dist_sq;

use super::PointConfiguration;

const BRUTE_FORCE_BELOW: usize = 64;

/// Uniform cell grid over `[0,1)^d` for exact neighbour queries.
///
/// Points are stored cell by cell so that a query touches contiguous memory.
#[derive(Debug, Clone)]
pub struct GridIndex {
    d: usize,
    m: usize,
    n: usize,
    starts: Vec<u32>,
    coords: Vec<f64>,
    ids: Vec<u32>,
}

impl GridIndex {
    /// Grid with roughly two points per cell.
    pub fn new(config: &PointConfiguration) -> Self {
        let n = config.len().max(1) as f64;
        let d = config.dim().max(1);
        let side = (2.0 / n).powf(1.0 / d as f64);
        Self::with_cell_side(config, side)
    }

    /// Grid whose cells have side at least `side`.
    pub fn with_cell_side(config: &PointConfiguration, side: f64) -> Self {
        let d = config.dim().max(1);
        let n = config.len();
        let mut m = if side > 0.0 { (1.0 / side).floor() as usize } else { 1 };
        // keep the cell table no larger than a few times the point count
        let cap = ((4 * n.max(1)) as f64).powf(1.0 / d as f64).floor().max(1.0) as usize;
        m = m.clamp(1, cap.max(1));
        let ncells = m.pow(d as u32);
        let mut counts = vec![0u32; ncells + 1];
        let cell_of: Vec<usize> = config.iter().map(|p| cell_index(p, m)).collect();
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut coords = vec![0.0; n * d];
        let mut ids = vec![0u32; n];
        for (i, &c) in cell_of.iter().enumerate() {
            let slot = fill[c] as usize;
            fill[c] += 1;
            coords[slot * d..(slot + 1) * d].copy_from_slice(config.point(i));
            ids[slot] = i as u32;
        }
        GridIndex {
            d,
            m,
            n,
            starts,
            coords,
            ids,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn cells_per_axis(&self) -> usize {
        self.m
    }

    /// Calls `visit(index, squared_distance)` for every point within
    /// distance `r` of `x` (closed ball).
    pub fn within<F: FnMut(usize, f64)>(&self, x: &[f64], r: f64, mut visit: F) {
        let r2 = r * r;
        if self.n < BRUTE_FORCE_BELOW || 2.0 * r * self.m as f64 + 2.0 >= self.m as f64 {
            for slot in 0..self.n {
                let q = &self.coords[slot * self.d..(slot + 1) * self.d];
                let s = dist_sq(x, q);
                if s <= r2 {
                    visit(self.ids[slot] as usize, s);
                }
            }
            return;
        }
        let m = self.m as i64;
        let mut lo = [0i64; 8];
        let mut span = [0i64; 8];
        let d = self.d;
        assert!(d <= 8, "grid queries support d <= 8");
        for j in 0..d {
            let a = ((x[j] - r) * m as f64).floor() as i64;
            let b = ((x[j] + r) * m as f64).floor() as i64;
            lo[j] = a;
            span[j] = b - a + 1;
        }
        let mut offs = [0i64; 8];
        loop {
            let mut cell = 0usize;
            for j in 0..d {
                let c = (lo[j] + offs[j]).rem_euclid(m) as usize;
                cell = cell * self.m + c;
            }
            let (s0, s1) = (self.starts[cell] as usize, self.starts[cell + 1] as usize);
            for slot in s0..s1 {
                let q = &self.coords[slot * d..(slot + 1) * d];
                let s = dist_sq(x, q);
                if s <= r2 {
                    visit(self.ids[slot] as usize, s);
                }
            }
            // odometer over the cell block
            let mut j = d;
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                offs[j] += 1;
                if offs[j] < span[j] {
                    break;
                }
                offs[j] = 0;
            }
        }
    }

    /// Number of points within distance `r` of `x`, skipping `skip`.
    pub fn count_within(&self, x: &[f64], r: f64, skip: Option<usize>) -> usize {
        let mut c = 0;
        self.within(x, r, |i, _| {
            if Some(i) != skip {
                c += 1
            }
        });
        c
    }

    /// Exact k-th nearest neighbour distance from `x`, ignoring points for
    /// which `skip` returns true.
    pub fn kth_distance<S: Fn(usize, f64) -> bool>(&self, x: &[f64], k: usize, skip: S) -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        let mut buf: Vec<f64> = Vec::with_capacity(4 * k + 8);
        let full = (self.d as f64).sqrt() * 0.5 + 1e-9;
        let mut r = ((k as f64 + 1.0) / self.n.max(1) as f64).powf(1.0 / self.d as f64);
        loop {
            buf.clear();
            let rr = r.min(full);
            self.within(x, rr, |i, s| {
                if !skip(i, s) {
                    buf.push(s)
                }
            });
            if buf.len() >= k {
                let (_, v, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
                return Ok(v.sqrt());
            }
            if rr >= full {
                return Err(Error::NotEnoughPoints {
                    needed: k,
                    available: buf.len(),
                });
            }
            r *= 2.0;
        }
    }

    /// k-th nearest neighbour distance of point `i` of the indexed configuration.
    pub fn kth_distance_of(&self, x: &[f64], i: usize, k: usize) -> Result<f64> {
        self.kth_distance(x, k, |j, _| j == i)
    }
}

fn cell_index(p: &[f64], m: usize) -> usize {
    let mut c = 0usize;
    for &v in p {
        let j = ((v * m as f64) as usize).min(m - 1);
        c = c * m + j;
    }
    c
}

/// k-th smallest distance from `x` to the points of `omega` not located at `x`.
///
/// With `exclude_self`, every point whose coordinates equal `x` exactly is
/// removed, following `B_r(x) \ {x}`.
pub fn knn_distance(x: &[f64], omega: &PointConfiguration, k: usize, exclude_self: bool) -> Result<f64> {
    if x.len() != omega.dim() {
        return Err(Error::DimensionMismatch {
            expected: omega.dim(),
            got: x.len(),
        });
    }
    let index = GridIndex::new(omega);
    // zero torus distance means the point sits at x itself
    index.kth_distance(x, k, |_, s| exclude_self && s == 0.0)
}

/// Brute-force k-th nearest neighbour distance; the reference for tests.
pub fn knn_distance_brute(x: &[f64], omega: &PointConfiguration, k: usize, exclude_self: bool) -> Result<f64> {
    let mut ds: Vec<f64> = omega
        .iter()
        .filter(|p| !(exclude_self && *p == x))
        .map(|p| dist_sq(x, p))
        .collect();
    if ds.len() < k {
        return Err(Error::NotEnoughPoints {
            needed: k,
            available: ds.len(),
        });
    }
    if k == 0 {
        return Ok(0.0);
    }
    ds.sort_by(|a, b| a.total_cmp(b));
    Ok(ds[k - 1].sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointproc::RngSpec;
    use rand::Rng;

    fn random_config(n: usize, d: usize, seed: u64) -> PointConfiguration {
        let mut rng = RngSpec::new(seed, 0).rng();
        let mut c = PointConfiguration::empty(d);
        let mut p = vec![0.0; d];
        for _ in 0..n {
            p.iter_mut().for_each(|v| *v = rng.random());
            c.push(&p).unwrap();
        }
        c
    }

    #[test]
    fn knn_examples() {
        let c = PointConfiguration::from_points(1, &[vec![0.1], vec![0.3], vec![0.9]]).unwrap();
        assert!((knn_distance(&[0.0], &c, 2, true).unwrap() - 0.1).abs() < 1e-15);
        assert!((knn_distance(&[0.0], &c, 3, true).unwrap() - 0.3).abs() < 1e-15);
        let pair = PointConfiguration::from_points(2, &[vec![0.2, 0.2], vec![0.25, 0.9]]).unwrap();
        let r = knn_distance(&[0.2, 0.2], &pair, 1, true).unwrap();
        assert!((r - crate::geometry::dist(&[0.2, 0.2], &[0.25, 0.9])).abs() < 1e-15);
        assert!(matches!(
            knn_distance(&[0.2, 0.2], &pair, 2, true),
            Err(Error::NotEnoughPoints { .. })
        ));
    }

    #[test]
    fn grid_matches_brute_force() {
        for (n, d, seed) in [(10, 2, 1), (500, 2, 2), (1000, 3, 3), (300, 1, 4)] {
            let c = random_config(n, d, seed);
            let idx = GridIndex::new(&c);
            let mut rng = RngSpec::new(seed, 9).rng();
            for q in 0..300 {
                let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let k = 1 + q % 5;
                let g = idx.kth_distance(&x, k, |_, _| false).unwrap();
                let b = knn_distance_brute(&x, &c, k, false).unwrap();
                assert_eq!(g, b);
                let i = q % n;
                let g = idx.kth_distance_of(c.point(i), i, k).unwrap();
                let b = knn_distance_brute(c.point(i), &c, k, true).unwrap();
                assert_eq!(g, b);
            }
        }
    }

    #[test]
    fn duplicates_are_all_excluded_by_coordinates_but_not_by_index() {
        let c = PointConfiguration::from_points(
            2,
            &[vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.6], vec![0.5, 0.8]],
        )
        .unwrap();
        // coordinate exclusion drops both copies
        assert!((knn_distance(&[0.5, 0.5], &c, 1, true).unwrap() - 0.1).abs() < 1e-12);
        // index exclusion keeps the twin at distance zero
        let idx = GridIndex::new(&c);
        assert_eq!(idx.kth_distance_of(c.point(0), 0, 1).unwrap(), 0.0);
        assert!((idx.kth_distance_of(c.point(0), 0, 2).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn within_counts_match() {
        let c = random_config(2000, 2, 11);
        let idx = GridIndex::new(&c);
        let x = [0.01, 0.99];
        for r in [0.0, 0.01, 0.05, 0.2, 0.6] {
            let brute = c.iter().filter(|p| dist_sq(&x, p) <= r * r).count();
            assert_eq!(idx.count_within(&x, r, None), brute);
        }
    }
}
