//! Box-count dimension of self-similar sets, used as an exactly known
//! reference for the regression machinery.
//!
//! A family with `b` branches at scale `1/s` has, after `m` iterations,
//! `b^m` pieces of relative size `delta = s^-m`, so `ln N = -d ln delta`
//! with `d = ln b / ln s` at every level.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::regression::{fit_line, RegressionError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FractalError {
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("{branches}^{iterations} overflows the count type")]
    Overflow { branches: u64, iterations: u32 },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("cell size must be in (0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("empty point set")]
    EmptyInput,
    #[error("point {index} has coordinate {value} outside [0, 1]")]
    OutOfUnitCube { index: usize, value: f64 },
    #[error("point {index} has dimension {got}, expected {expected}")]
    MixedDimensions { index: usize, expected: usize, got: usize },
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractalFamily {
    pub branches: u64,
    pub scale: u64,
    pub iterations: u32,
    #[serde(default = "one")]
    pub embedding_dim: u32,
}

fn one() -> u32 {
    1
}

impl FractalFamily {
    pub fn new(branches: u64, scale: u64, iterations: u32) -> Result<FractalFamily, FractalError> {
        let fam = FractalFamily { branches, scale, iterations, embedding_dim: 1 };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<(), FractalError> {
        let bad = |msg: String| Err(FractalError::InvalidFamily(msg));
        if self.branches < 1 {
            return bad("branches must be at least 1".into());
        }
        if self.scale < 2 {
            return bad("scale must be at least 2".into());
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.embedding_dim < 1 {
            return bad("embedding dimension must be at least 1".into());
        }
        // Four pieces at scale 1/3 on a line overlap; it is allowed as a pure count family.
        let koch_like = self.embedding_dim == 1 && self.branches == 4 && self.scale == 3;
        let capacity = self.scale.checked_pow(self.embedding_dim).unwrap_or(u64::MAX);
        if self.branches > capacity && !koch_like {
            return bad(format!(
                "{} branches exceed the {} cells at scale 1/{} in dimension {}",
                self.branches, capacity, self.scale, self.embedding_dim
            ));
        }
        Ok(())
    }

    /// `ln b / ln s`.
    pub fn similarity_dimension(&self) -> f64 {
        (self.branches as f64).ln() / (self.scale as f64).ln()
    }
}

/// `(delta, count)` pairs sorted by decreasing `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountSeries {
    points: Vec<(f64, u64)>,
}

impl BoxCountSeries {
    /// Sorts by decreasing `delta` and checks the series invariants.
    pub fn new(mut points: Vec<(f64, u64)>) -> Result<BoxCountSeries, FractalError> {
        let bad = |msg: String| Err(FractalError::InvalidSeries(msg));
        if points.len() < 2 {
            return bad(format!("need at least 2 points, got {}", points.len()));
        }
        if let Some((d, _)) = points.iter().find(|(d, _)| !(*d > 0.0 && *d < 1.0)) {
            return bad(format!("delta {d} outside (0, 1)"));
        }
        if points.iter().any(|(_, c)| *c == 0) {
            return bad("counts must be positive".into());
        }
        points.sort_by(|a, b| b.0.total_cmp(&a.0));
        for w in points.windows(2) {
            if w[1].0 == w[0].0 {
                return Err(RegressionError::DegenerateAbscissae.into());
            }
            if w[1].1 < w[0].1 {
                return bad(format!("count decreases from {} to {} as delta shrinks", w[0].1, w[1].1));
            }
        }
        Ok(BoxCountSeries { points })
    }

    pub fn points(&self) -> &[(f64, u64)] {
        &self.points
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,count\n");
        for (d, c) in &self.points {
            out.push_str(&format!("{},{c}\n", crate::integrate::plugin::fmt17(*d)));
        }
        out
    }
}

/// Counts of the family at levels `1..=M`: `(s^-m, b^m)`.
pub fn family_counts(fam: &FractalFamily) -> Result<BoxCountSeries, FractalError> {
    fam.validate()?;
    fam.branches
        .checked_pow(fam.iterations)
        .ok_or(FractalError::Overflow { branches: fam.branches, iterations: fam.iterations })?;
    let points = (1..=fam.iterations)
        .map(|m| (1.0 / (fam.scale as f64).powi(m as i32), fam.branches.pow(m)))
        .collect();
    BoxCountSeries::new(points)
}

/// Midpoints of the `2^M` intervals of the middle-thirds Cantor set at level `M`.
pub fn cantor_midpoints(iterations: u32) -> Vec<Vec<f64>> {
    let mut intervals = vec![(0.0f64, 1.0f64)];
    for _ in 0..iterations {
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let third = (b - a) / 3.0;
                [(a, a + third), (b - third, b)]
            })
            .collect();
    }
    intervals.into_iter().map(|(a, b)| vec![0.5 * (a + b)]).collect()
}

/// Number of occupied cells of edge `delta` on the unit hypercube. A
/// coordinate of exactly 1 falls in the last cell along its axis.
pub fn box_count_points(points: &[Vec<f64>], delta: f64) -> Result<u64, FractalError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(FractalError::InvalidDelta(delta));
    }
    let first = points.first().ok_or(FractalError::EmptyInput)?;
    let dim = first.len();
    let last_cell = ((1.0 / delta).ceil() as i64 - 1).max(0);
    let mut cells: HashSet<Vec<i64>> = HashSet::new();
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(FractalError::MixedDimensions { index, expected: dim, got: p.len() });
        }
        let mut key = Vec::with_capacity(dim);
        for &value in p {
            if !(0.0..=1.0).contains(&value) {
                return Err(FractalError::OutOfUnitCube { index, value });
            }
            key.push(((value / delta).floor() as i64).min(last_cell));
        }
        cells.insert(key);
    }
    Ok(cells.len() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub d: f64,
    pub pearson_r: f64,
    pub se_slope: f64,
}

/// Least-squares slope of `ln count` against `ln delta`; `d = -slope`.
pub fn estimate_dimension(series: &BoxCountSeries) -> Result<DimensionEstimate, FractalError> {
    let pts: Vec<(f64, f64)> = series.points.iter().map(|(d, c)| (d.ln(), (*c as f64).ln())).collect();
    let fit = fit_line(&pts)?;
    Ok(DimensionEstimate { d: 0.0 - fit.slope, pearson_r: fit.pearson_r, se_slope: fit.se_slope })
}

/// Parses points in the unit hypercube from CSV. A header row is skipped
/// when its first field is not numeric.
pub fn parse_points_csv(text: &str) -> Result<Vec<Vec<f64>>, FractalError> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        let row = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| FractalError::Csv { line: i + 1, msg: e.to_string() })?;
        if let Some(prev) = out.first() {
            if prev.len() != row.len() {
                return Err(FractalError::Csv {
                    line: i + 1,
                    msg: format!("expected {} fields, found {}", prev.len(), row.len()),
                });
            }
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(FractalError::EmptyInput);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn koch_like_family_counts() {
        let s = family_counts(&FractalFamily::new(4, 3, 3).unwrap()).unwrap();
        let expect = [(1.0 / 3.0, 4), (1.0 / 9.0, 16), (1.0 / 27.0, 64)];
        for ((d, c), (ed, ec)) in s.points().iter().zip(expect) {
            assert!((d - ed).abs() < 1e-16);
            assert_eq!(*c, ec);
        }
    }

    #[test]
    fn interval_and_cantor_counts() {
        let s = family_counts(&FractalFamily::new(3, 3, 2).unwrap()).unwrap();
        assert_eq!(s.points().iter().map(|p| p.1).collect::<Vec<_>>(), [3, 9]);
        let s = family_counts(&FractalFamily::new(2, 3, 2).unwrap()).unwrap();
        assert_eq!(s.points().iter().map(|p| p.1).collect::<Vec<_>>(), [2, 4]);
    }

    #[test]
    fn family_validation() {
        assert!(FractalFamily::new(5, 3, 2).is_err());
        assert!(FractalFamily::new(4, 3, 2).is_ok());
        assert!(FractalFamily::new(1, 1, 2).is_err());
        assert!(FractalFamily::new(2, 3, 0).is_err());
        let plane = FractalFamily { branches: 8, scale: 3, iterations: 2, embedding_dim: 2 };
        assert!(plane.validate().is_ok());
    }

    #[test]
    fn overflow_guard() {
        let fam = FractalFamily::new(3, 3, 41).unwrap();
        assert!(matches!(family_counts(&fam), Err(FractalError::Overflow { .. })));
        assert!(family_counts(&FractalFamily::new(3, 3, 40).unwrap()).is_ok());
    }

    #[test]
    fn koch_like_dimension() {
        let est = estimate_dimension(&family_counts(&FractalFamily::new(4, 3, 6).unwrap()).unwrap()).unwrap();
        assert!((est.d - 4f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!((est.pearson_r + 1.0).abs() < 1e-12);
        assert!((est.d - 1.2619).abs() < 1e-4);
    }

    #[test]
    fn line_dimension_and_two_point_series() {
        let est = estimate_dimension(&family_counts(&FractalFamily::new(3, 3, 4).unwrap()).unwrap()).unwrap();
        assert!((est.d - 1.0).abs() < 1e-12);
        let est = estimate_dimension(&BoxCountSeries::new(vec![(0.5, 2), (0.25, 4)]).unwrap()).unwrap();
        assert!((est.d - 1.0).abs() < 1e-15);
        assert_eq!(est.se_slope, 0.0);
    }

    #[test]
    fn series_validation() {
        assert!(BoxCountSeries::new(vec![(0.5, 2)]).is_err());
        assert!(matches!(
            BoxCountSeries::new(vec![(0.5, 2), (0.5, 2)]),
            Err(FractalError::Regression(RegressionError::DegenerateAbscissae))
        ));
        assert!(BoxCountSeries::new(vec![(0.5, 4), (0.25, 2)]).is_err());
        assert!(BoxCountSeries::new(vec![(1.5, 1), (0.25, 2)]).is_err());
        let s = BoxCountSeries::new(vec![(0.25, 4), (0.5, 2)]).unwrap();
        assert_eq!(s.points()[0], (0.5, 2));
        assert_eq!(s.to_csv(), "delta,count\n5.0000000000000000e-1,2\n2.5000000000000000e-1,4\n");
    }

    #[test]
    fn box_count_basics() {
        assert_eq!(box_count_points(&[vec![0.3, 0.7]], 0.01).unwrap(), 1);
        let corners = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(box_count_points(&corners, 0.5).unwrap(), 4);
        assert_eq!(box_count_points(&[], 0.5), Err(FractalError::EmptyInput));
        assert!(box_count_points(&[vec![1.5]], 0.5).is_err());
        assert!(box_count_points(&[vec![0.5]], 0.0).is_err());
    }

    #[test]
    fn uniform_points_fill_every_cell() {
        // P(some cell of 100 empty) < 100 * 0.99^10000 ~ 2e-42.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        assert_eq!(box_count_points(&pts, 0.1).unwrap(), 100);
    }

    #[test]
    fn cantor_point_set_dimension() {
        let pts = cantor_midpoints(8);
        let series: Vec<(f64, u64)> = (1..=6)
            .map(|m| {
                let delta = 3f64.powi(-m);
                (delta, box_count_points(&pts, delta).unwrap())
            })
            .collect();
        for (m, (_, c)) in series.iter().enumerate() {
            assert_eq!(*c, 1u64 << (m + 1));
        }
        let est = estimate_dimension(&BoxCountSeries::new(series).unwrap()).unwrap();
        assert!((est.d - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn csv_points() {
        let pts = parse_points_csv("x,y\n0.1,0.2\n0.3, 0.4\n").unwrap();
        assert_eq!(pts, vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
        assert!(matches!(parse_points_csv("0.1,0.2\n0.3\n"), Err(FractalError::Csv { line: 2, .. })));
        assert!(matches!(parse_points_csv("0.1,abc\n"), Err(FractalError::Csv { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn family_dimension_is_exact(b in 1u64..9, s in 2u64..10, m in 2u32..8) {
            prop_assume!(b <= s);
            let fam = FractalFamily::new(b, s, m).unwrap();
            let est = estimate_dimension(&family_counts(&fam).unwrap()).unwrap();
            prop_assert!((est.d - (b as f64).ln() / (s as f64).ln()).abs() < 1e-12);
        }

        #[test]
        fn box_count_permutation_invariant_and_monotone(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 2), 1..60),
            seed in any::<u64>(),
        ) {
            let mut shuffled = pts.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut rng);
            let mut prev = 0;
            for delta in [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125] {
                let c = box_count_points(&pts, delta).unwrap();
                prop_assert_eq!(c, box_count_points(&shuffled, delta).unwrap());
                prop_assert!(c >= prev);
                prev = c;
            }
        }

        #[test]
        fn estimate_ignores_point_order(m in 2u32..7, seed in any::<u64>()) {
            let base = family_counts(&FractalFamily::new(2, 3, m).unwrap()).unwrap();
            let mut pts = base.points().to_vec();
            use rand::seq::SliceRandom;
            pts.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = estimate_dimension(&base).unwrap();
            let b = estimate_dimension(&BoxCountSeries::new(pts).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
