//! Pairwise coincidence statistics.
//!
//! Every unordered pair of observations contributes one radius: twice the
//! sup-norm distance between the two points. With the radii sorted, `r(k)` is
//! the edge of the hypercube that produces `k` coincidences, and the fraction
//! of radii `<= r` is the correlation integral `C(r)`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::Real;

/// Pairs computed exactly before falling back to a random subsample.
pub const DEFAULT_PAIR_BUDGET: usize = 50_000_000;

/// Distance between two observations.
pub trait PairNorm<T>: Sync {
    fn distance(&self, a: &[T], b: &[T]) -> T;
}

/// Maximum absolute coordinate difference.
#[derive(Debug, Clone, Copy, Default)]
pub struct SupNorm;

impl<T: Real> PairNorm<T> for SupNorm {
    #[inline]
    fn distance(&self, a: &[T], b: &[T]) -> T {
        a.iter()
            .zip(b)
            .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanNorm;

impl<T: Real> PairNorm<T> for EuclideanNorm {
    #[inline]
    fn distance(&self, a: &[T], b: &[T]) -> T {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub pair_budget: usize,
    /// Seed for the pair subsample drawn when `N(N-1)/2` exceeds the budget.
    /// Without it an over-budget dataset is an error.
    pub subsample_seed: Option<u64>,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            threads: None,
            pair_budget: DEFAULT_PAIR_BUDGET,
            subsample_seed: None,
        }
    }
}

/// Number of unordered pairs among `n` observations.
#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Sorted doubled pair distances of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiiProfile<T> {
    radii: Vec<T>,
    n: usize,
    subsampled: bool,
}

impl<T: Real> RadiiProfile<T> {
    /// Wraps precomputed radii, sorting them.
    pub fn from_radii(mut radii: Vec<T>, n: usize) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::invalid("a radii profile needs at least one pair"));
        }
        if radii.iter().any(|r| !r.is_finite() || *r < T::zero()) {
            return Err(Error::invalid("radii must be finite and non-negative"));
        }
        radii.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite radii"));
        let subsampled = radii.len() != pair_count(n);
        Ok(Self {
            radii,
            n,
            subsampled,
        })
    }

    pub fn radii(&self) -> &[T] {
        &self.radii
    }

    /// Source observation count `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Length of the radii array, `N(N-1)/2` unless subsampled.
    pub fn lr(&self) -> usize {
        self.radii.len()
    }

    pub fn is_subsampled(&self) -> bool {
        self.subsampled
    }

    /// Pairs at distance zero (duplicate observations).
    pub fn zero_pairs(&self) -> usize {
        self.radii.partition_point(|r| *r <= T::zero())
    }

    /// Number of radii `<= r`.
    pub fn count_within(&self, r: T) -> usize {
        self.radii.partition_point(|x| *x <= r)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r")?;
        for r in &self.radii {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }
}

/// Computes the sorted radii of every pair with the sup norm, exactly.
///
/// Panics only if the dataset has more pairs than fit in memory; use
/// [`pairwise_radii_with`] to apply a pair budget.
pub fn pairwise_radii<T: Real>(ds: &Dataset<T>) -> RadiiProfile<T> {
    let opts = PairOptions {
        pair_budget: usize::MAX,
        ..PairOptions::default()
    };
    pairwise_radii_by(ds, &SupNorm, &opts).expect("exact radii without a budget")
}

pub fn pairwise_radii_with<T: Real>(ds: &Dataset<T>, opts: &PairOptions) -> Result<RadiiProfile<T>> {
    pairwise_radii_by(ds, &SupNorm, opts)
}

/// Radii under an arbitrary pair norm.
pub fn pairwise_radii_by<T: Real, N: PairNorm<T>>(
    ds: &Dataset<T>,
    norm: &N,
    opts: &PairOptions,
) -> Result<RadiiProfile<T>> {
    let total = pair_count(ds.n());
    let sample = if total > opts.pair_budget {
        match opts.subsample_seed {
            Some(seed) => Some(seed),
            None => {
                return Err(Error::OverBudget {
                    pairs: total,
                    budget: opts.pair_budget,
                })
            }
        }
    } else {
        None
    };
    if opts.pair_budget == 0 {
        return Err(Error::invalid("pair budget must be at least 1"));
    }

    let run = || match sample {
        None => exact_radii(ds, norm),
        Some(seed) => sampled_radii(ds, norm, opts.pair_budget, seed),
    };
    let radii = match opts.threads {
        None => run(),
        Some(0) => return Err(Error::invalid("thread count must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {t} worker threads: {e}")))?
            .install(run),
    };
    Ok(RadiiProfile {
        radii,
        n: ds.n(),
        subsampled: sample.is_some(),
    })
}

fn exact_radii<T: Real, N: PairNorm<T>>(ds: &Dataset<T>, norm: &N) -> Vec<T> {
    let n = ds.n();
    let two = T::lit(2.0);
    let mut radii = vec![T::zero(); pair_count(n)];

    // Row i owns the contiguous block of pairs (i, i+1..n).
    let mut blocks = Vec::with_capacity(n.saturating_sub(1));
    let mut rest = radii.as_mut_slice();
    for i in 0..n.saturating_sub(1) {
        let (head, tail) = rest.split_at_mut(n - 1 - i);
        blocks.push((i, head));
        rest = tail;
    }
    blocks.into_par_iter().for_each(|(i, out)| {
        let a = ds.row(i);
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = two * norm.distance(a, ds.row(i + 1 + k));
        }
    });
    radii.par_sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    radii
}

/// Maps a row-major pair index to `(i, j)` with `i < j`.
fn pair_at(n: usize, index: usize) -> (usize, usize) {
    // offset(i) = i * (2n - i - 1) / 2 pairs precede row i
    let offset = |i: usize| i * (2 * n - i - 1) / 2;
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if offset(mid) <= index {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, lo + 1 + (index - offset(lo)))
}

fn sampled_radii<T: Real, N: PairNorm<T>>(
    ds: &Dataset<T>,
    norm: &N,
    size: usize,
    seed: u64,
) -> Vec<T> {
    let n = ds.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, pair_count(n), size).into_vec();
    picks.par_sort_unstable();
    let two = T::lit(2.0);
    let mut radii: Vec<T> = picks
        .par_iter()
        .map(|&idx| {
            let (i, j) = pair_at(n, idx);
            two * norm.distance(ds.row(i), ds.row(j))
        })
        .collect();
    radii.par_sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    radii
}

/// Correlation integral: fraction of radii `<= r`.
pub fn correlation_at<T: Real>(profile: &RadiiProfile<T>, r: T) -> T {
    T::from_count(profile.count_within(r)) / T::from_count(profile.lr())
}

/// The log-log coincidence curve: points `(log2 r, log2 C(r))`.
///
/// Serializes to JSON as `{n, lr, points: [[log2_r, log2_C], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CorrelationCurve<T> {
    pub n: usize,
    pub lr: usize,
    pub points: Vec<(T, T)>,
    /// Pairs at radius zero, left out of the plot but counted in `C`.
    #[serde(skip)]
    pub zero_pairs: usize,
    /// Number of resampled points, when the curve was resampled.
    #[serde(skip)]
    pub resampled: Option<usize>,
}

/// Builds the log-log curve, one point per distinct positive radius, optionally
/// resampled to `resample` log-uniform abscissae.
pub fn curve<T: Real>(profile: &RadiiProfile<T>, resample: Option<usize>) -> Result<CorrelationCurve<T>> {
    let radii = profile.radii();
    let lr = T::from_count(profile.lr());
    let mut points = Vec::new();
    for (idx, &r) in radii.iter().enumerate() {
        let last_of_tie = radii.get(idx + 1).is_none_or(|next| *next != r);
        if r > T::zero() && last_of_tie {
            let k = T::from_count(idx + 1);
            points.push((r.log2(), (k / lr).log2()));
        }
    }
    if points.is_empty() {
        return Err(Error::Degenerate);
    }
    let raw = CorrelationCurve {
        n: profile.n(),
        lr: profile.lr(),
        points,
        zero_pairs: profile.zero_pairs(),
        resampled: None,
    };
    match resample {
        None => Ok(raw),
        Some(m) => raw.resample(m),
    }
}

impl<T: Real> CorrelationCurve<T> {
    /// Wraps externally supplied points, checking the curve invariants.
    pub fn from_points(points: Vec<(T, T)>, n: usize, lr: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("a curve needs at least one point"));
        }
        for (i, &(x, y)) in points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::invalid(format!("curve point {} is not finite", i + 1)));
            }
            if y > T::zero() {
                return Err(Error::invalid(format!(
                    "curve point {} has log2 C = {y} > 0",
                    i + 1
                )));
            }
            if i > 0 {
                let (px, py) = points[i - 1];
                if x < px || y < py {
                    return Err(Error::invalid(format!(
                        "curve point {} breaks the non-decreasing order",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self {
            n,
            lr,
            points,
            zero_pairs: 0,
            resampled: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest and largest `log2 r`.
    pub fn extent(&self) -> (T, T) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Piecewise-linear interpolation of `log2 C` at `num_points` evenly spaced
    /// `log2 r` abscissae spanning the curve.
    pub fn resample(&self, num_points: usize) -> Result<Self> {
        if num_points < 2 {
            return Err(Error::invalid("resampling needs at least 2 points"));
        }
        let (x0, x1) = self.extent();
        let pts = &self.points;
        let mut out = Vec::with_capacity(num_points);
        if pts.len() == 1 {
            out.push(pts[0]);
        } else {
            let step = (x1 - x0) / T::from_count(num_points - 1);
            let mut seg = 0usize;
            for k in 0..num_points {
                let x = if k + 1 == num_points {
                    x1
                } else {
                    x0 + step * T::from_count(k)
                };
                while seg + 2 < pts.len() && pts[seg + 1].0 < x {
                    seg += 1;
                }
                let (xa, ya) = pts[seg];
                let (xb, yb) = pts[seg + 1];
                let y = if xb > xa {
                    ya + (yb - ya) * ((x - xa) / (xb - xa))
                } else {
                    yb
                };
                out.push((x, y));
            }
        }
        Ok(Self {
            n: self.n,
            lr: self.lr,
            points: out,
            zero_pairs: self.zero_pairs,
            resampled: Some(num_points),
        })
    }

    /// Drops points backed by fewer than `min_pairs` coincidences.
    ///
    /// Needs `lr`; a curve without it is returned unchanged.
    pub fn above_min_pairs(&self, min_pairs: usize) -> Self {
        if self.lr == 0 || min_pairs <= 1 {
            return self.clone();
        }
        let floor = (T::from_count(min_pairs) / T::from_count(self.lr)).log2();
        // a few ulps of slack so a point sitting exactly on the floor survives
        let slack = T::lit(1e-9) * (T::one() + floor.abs());
        let points: Vec<_> = self
            .points
            .iter()
            .copied()
            .filter(|&(_, y)| y >= floor - slack)
            .collect();
        Self {
            points,
            ..self.clone()
        }
    }

    /// Writes `log2_r,log2_C` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "log2_r,log2_C")?;
        for (x, y) in &self.points {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    /// Reads curve points written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: Read>(source: R, n: usize, lr: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let mut points = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv {
                row: i + 2,
                message: e.to_string(),
            })?;
            if rec.len() != 2 {
                return Err(Error::Ragged {
                    row: i + 2,
                    expected: 2,
                    found: rec.len(),
                });
            }
            let parse = |c: usize| -> Result<T> {
                rec[c].parse::<f64>().map(T::lit).map_err(|_| Error::NonNumeric {
                    row: i + 2,
                    column: c + 1,
                    value: rec[c].to_string(),
                })
            };
            points.push((parse(0)?, parse(1)?));
        }
        Self::from_points(points, n, lr)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text)?;
        Self::from_points(raw.points, raw.n, raw.lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[&[f64]]) -> Dataset<f64> {
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_points_give_zero_radius() {
        let p = pairwise_radii(&ds(&[&[1.0, 2.0], &[1.0, 2.0]]));
        assert_eq!(p.radii(), &[0.0]);
        assert_eq!(p.zero_pairs(), 1);
        assert!(matches!(curve(&p, None), Err(Error::Degenerate)));
    }

    #[test]
    fn one_dimensional_triple() {
        let p = pairwise_radii(&ds(&[&[0.0], &[1.0], &[3.0]]));
        assert_eq!(p.radii(), &[2.0, 4.0, 6.0]);
        assert_eq!(correlation_at(&p, 4.0), 2.0 / 3.0);
        let c = curve(&p, None).unwrap();
        assert_eq!(
            c.points,
            vec![
                (1.0, (1.0f64 / 3.0).log2()),
                (2.0, (2.0f64 / 3.0).log2()),
                (6.0f64.log2(), 0.0)
            ]
        );
    }

    #[test]
    fn correlation_bounds() {
        let p = pairwise_radii(&ds(&[&[0.0], &[1.0], &[3.0]]));
        assert_eq!(correlation_at(&p, 1.999), 0.0);
        assert_eq!(correlation_at(&p, 6.0), 1.0);
        assert_eq!(correlation_at(&p, 1e9), 1.0);
    }

    #[test]
    fn ties_collapse_to_cumulative_count() {
        // radii: |0-1|*2=2, |0-2|*2=4, |1-2|*2=2
        let p = pairwise_radii(&ds(&[&[0.0], &[1.0], &[2.0]]));
        assert_eq!(p.radii(), &[2.0, 2.0, 4.0]);
        let c = curve(&p, None).unwrap();
        assert_eq!(c.points, vec![(1.0, (2.0f64 / 3.0).log2()), (2.0, 0.0)]);
    }

    #[test]
    fn zero_radii_counted_but_not_plotted() {
        let p = pairwise_radii(&ds(&[&[0.0], &[0.0], &[1.0]]));
        assert_eq!(p.radii(), &[0.0, 2.0, 2.0]);
        assert_eq!(correlation_at(&p, 0.0), 1.0 / 3.0);
        let c = curve(&p, None).unwrap();
        assert_eq!(c.points, vec![(1.0, 0.0)]);
        assert_eq!(c.zero_pairs, 1);
    }

    #[test]
    fn single_pair_curve() {
        let p = pairwise_radii(&ds(&[&[0.0, 0.0], &[0.5, 0.25]]));
        let c = curve(&p, None).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0)]);
        assert_eq!(c.lr, 1);
    }

    #[test]
    fn pair_index_mapping_is_row_major() {
        let n = 7;
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(pair_at(n, idx), (i, j));
                idx += 1;
            }
        }
    }

    #[test]
    fn budget_enforced_and_subsample_deterministic() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let d = Dataset::from_rows(&rows).unwrap();
        let mut opts = PairOptions {
            pair_budget: 100,
            ..PairOptions::default()
        };
        assert!(matches!(
            pairwise_radii_with(&d, &opts),
            Err(Error::OverBudget { pairs: 780, budget: 100 })
        ));
        opts.subsample_seed = Some(3);
        let a = pairwise_radii_with(&d, &opts).unwrap();
        let b = pairwise_radii_with(&d, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lr(), 100);
        assert!(a.is_subsampled());
        let full = pairwise_radii(&d);
        assert!(a.radii().iter().all(|r| full.radii().contains(r)));
    }

    #[test]
    fn resample_spans_raw_extent() {
        let p = pairwise_radii(&ds(&[&[0.0], &[1.0], &[3.0], &[7.0]]));
        let raw = curve(&p, None).unwrap();
        let rs = curve(&p, Some(50)).unwrap();
        assert_eq!(rs.len(), 50);
        assert_eq!(rs.points[0], raw.points[0]);
        assert_eq!(rs.points[49], *raw.points.last().unwrap());
        assert!(rs.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert!(curve(&p, Some(1)).is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let p = pairwise_radii(&ds(&[&[0.0], &[1.0], &[3.0], &[7.5]]));
        let c = curve(&p, None).unwrap();
        let back = CorrelationCurve::<f64>::read_csv(c.to_csv_string().as_bytes(), c.n, c.lr).unwrap();
        assert_eq!(back.points, c.points);
        let json = c.to_json().unwrap();
        assert!(json.starts_with("{\"n\":4,\"lr\":6,\"points\":[["));
        assert_eq!(CorrelationCurve::<f64>::from_json(&json).unwrap().points, c.points);
    }

    #[test]
    fn min_pair_floor() {
        let p = pairwise_radii(&ds(&[&[0.0], &[1.0], &[3.0], &[7.0]]));
        let c = curve(&p, None).unwrap();
        let trimmed = c.above_min_pairs(3);
        assert_eq!(trimmed.points.len(), c.points.len() - 2);
        assert!((trimmed.points[0].1 - 0.5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn euclidean_plug_in() {
        let d = ds(&[&[0.0, 0.0], &[3.0, 4.0]]);
        let p = pairwise_radii_by(&d, &EuclideanNorm, &PairOptions::default()).unwrap();
        assert_eq!(p.radii(), &[10.0]);
    }

    #[test]
    fn f32_profile() {
        let d: Dataset<f32> = Dataset::from_rows(&[[0.0f32], [1.0], [3.0]]).unwrap();
        assert_eq!(pairwise_radii(&d).radii(), &[2.0f32, 4.0, 6.0]);
    }
}
