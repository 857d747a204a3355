//! Apparent intrinsic dimension and differential entropy from the log-log
//! coincidence curve.
//!
//! Over a range of scales the curve is close to the line
//! `log2 C = d * log2 r - h`: the slope is the apparent ID and the offset the
//! apparent DE in bits. Different ranges may show different lines, each a
//! different view of the same manifold; [`multiscale_scan`] and
//! [`find_plateaus`] help locate them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coincidence::CorrelationCurve;
use crate::error::{Error, Result};
use crate::Real;

/// Closed interval of `log2 r`, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScaleRange<T> {
    pub log2_r_min: T,
    pub log2_r_max: T,
}

impl<T: Real> ScaleRange<T> {
    pub fn new(log2_r_min: T, log2_r_max: T) -> Result<Self> {
        if !log2_r_min.is_finite() || !log2_r_max.is_finite() || log2_r_min >= log2_r_max {
            return Err(Error::EmptyRange {
                lo: log2_r_min.as_f64(),
                hi: log2_r_max.as_f64(),
            });
        }
        Ok(Self {
            log2_r_min,
            log2_r_max,
        })
    }

    #[inline]
    pub fn contains(&self, log2_r: T) -> bool {
        log2_r >= self.log2_r_min && log2_r <= self.log2_r_max
    }

    pub fn width(&self) -> T {
        self.log2_r_max - self.log2_r_min
    }
}

/// Line fitted to a stretch of the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SegmentFit<T> {
    /// Apparent intrinsic dimension (slope).
    pub d_hat: T,
    /// Apparent differential entropy in bits (offset).
    pub h_hat: T,
    pub range: ScaleRange<T>,
    pub n_points: usize,
    /// RMS of `log2 C - (d log2 r - h)` over the fitted points, in bits.
    pub rms_residual: T,
}

impl<T: Real> SegmentFit<T> {
    /// `log2 C` predicted by the fitted line.
    pub fn predict(&self, log2_r: T) -> T {
        self.d_hat * log2_r - self.h_hat
    }
}

/// In-range points with runs of equal `log2 r` reduced to their last point.
fn points_in<T: Real>(curve: &CorrelationCurve<T>, range: &ScaleRange<T>) -> Vec<(T, T)> {
    let mut out: Vec<(T, T)> = Vec::new();
    for &(x, y) in curve.points.iter().filter(|p| range.contains(p.0)) {
        match out.last_mut() {
            Some(last) if last.0 == x => *last = (x, y),
            _ => out.push((x, y)),
        }
    }
    out
}

fn mean<T: Real>(values: impl Iterator<Item = T>, n: usize) -> T {
    values.sum::<T>() / T::from_count(n)
}

/// Ordinary least-squares slope of `y` on `x`.
fn ols_slope<T: Real>(pts: &[(T, T)]) -> T {
    let n = pts.len();
    let mx = mean(pts.iter().map(|p| p.0), n);
    let my = mean(pts.iter().map(|p| p.1), n);
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for &(x, y) in pts {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Fits slope and offset over `range`.
///
/// The slope is the OLS slope of `log2 C` on `log2 r` unless `d_override` is
/// given. The offset is the mean of `d * log2 r - log2 C` over the fitted
/// points, which equals the OLS intercept (negated) when `d` is the OLS slope.
pub fn fit_segment<T: Real>(
    curve: &CorrelationCurve<T>,
    range: &ScaleRange<T>,
    d_override: Option<T>,
) -> Result<SegmentFit<T>> {
    if let Some(d) = d_override {
        if !d.is_finite() || d < T::zero() {
            return Err(Error::invalid(format!("dimension override {d} must be >= 0")));
        }
    }
    let pts = points_in(curve, range);
    let needed = if d_override.is_some() { 1 } else { 2 };
    if pts.len() < needed {
        return Err(Error::InsufficientPoints {
            lo: range.log2_r_min.as_f64(),
            hi: range.log2_r_max.as_f64(),
            found: pts.len(),
            needed,
        });
    }
    let d = d_override.unwrap_or_else(|| ols_slope(&pts));
    let n = pts.len();
    let h = mean(pts.iter().map(|&(x, y)| d * x - y), n);
    let rms = mean(
        pts.iter().map(|&(x, y)| {
            let e = y - (d * x - h);
            e * e
        }),
        n,
    )
    .sqrt();
    Ok(SegmentFit {
        d_hat: d,
        h_hat: h,
        range: *range,
        n_points: n,
        rms_residual: rms,
    })
}

/// An ID hypothesis drawn against the curve: `log2 C = d * log2 r - h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CandidateLine<T> {
    pub d: T,
    pub h: T,
    pub rms_residual: T,
}

impl<T: Real> CandidateLine<T> {
    pub fn log2_c(&self, log2_r: T) -> T {
        self.d * log2_r - self.h
    }
}

/// One line per hypothesized dimension, each anchored to the points in `anchor`.
pub fn candidate_lines<T: Real>(
    curve: &CorrelationCurve<T>,
    dims: &[T],
    anchor: &ScaleRange<T>,
) -> Result<Vec<CandidateLine<T>>> {
    if dims.is_empty() {
        return Err(Error::invalid("no candidate dimensions given"));
    }
    dims.iter()
        .map(|&d| {
            fit_segment(curve, anchor, Some(d)).map(|f| CandidateLine {
                d,
                h: f.h_hat,
                rms_residual: f.rms_residual,
            })
        })
        .collect()
}

/// The candidate whose line follows the anchored points most closely.
pub fn best_candidate<T: Real>(lines: &[CandidateLine<T>]) -> Option<&CandidateLine<T>> {
    lines
        .iter()
        .min_by(|a, b| a.rms_residual.partial_cmp(&b.rms_residual).expect("finite residuals"))
}

/// Fits every window `[lo, lo + width]` with `lo` stepping by `stride` from the
/// finest abscissa. Windows holding fewer than two points are skipped.
pub fn multiscale_scan<T: Real>(
    curve: &CorrelationCurve<T>,
    window_width: T,
    stride: T,
) -> Result<Vec<SegmentFit<T>>> {
    if !(window_width > T::zero()) || !(stride > T::zero()) {
        return Err(Error::invalid("window width and stride must be positive"));
    }
    let (x0, x1) = curve.extent();
    let span = x1 - x0;
    if window_width > span {
        return Err(Error::invalid(format!(
            "window width {window_width} exceeds the curve span {span}"
        )));
    }
    let eps = T::lit(1e-9) * (T::one() + span);
    let count = ((span - window_width + eps) / stride)
        .floor()
        .to_usize()
        .unwrap_or(0)
        + 1;
    let fits: Vec<Option<SegmentFit<T>>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let lo = x0 + stride * T::from_count(k);
            let range = ScaleRange::new(lo, lo + window_width).ok()?;
            fit_segment(curve, &range, None).ok()
        })
        .collect();
    Ok(fits.into_iter().flatten().collect())
}

/// Tuning for [`find_plateaus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PlateauOptions<T> {
    /// Largest allowed `(max - min) / mean` of window slopes within a plateau.
    pub tolerance: T,
    /// Fewest consecutive windows that make a plateau.
    pub min_windows: usize,
}

impl<T: Real> Default for PlateauOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(0.1),
            min_windows: 4,
        }
    }
}

/// A run of consecutive scan windows with nearly constant slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Plateau<T> {
    /// Union of the windows' ranges.
    pub range: ScaleRange<T>,
    /// Index of the first window in the scan.
    pub first_window: usize,
    pub windows: usize,
    pub mean_slope: T,
}

/// Maximal runs of windows whose slopes stay within a relative tolerance.
///
/// From each starting window the run grows while the spread of its slopes is
/// at most `tolerance * |mean slope|`. Runs contained in an earlier run are
/// dropped, so the result is ordered from fine to coarse scales and may
/// overlap only partially.
pub fn find_plateaus<T: Real>(scan: &[SegmentFit<T>], opts: &PlateauOptions<T>) -> Vec<Plateau<T>> {
    let slopes: Vec<T> = scan.iter().map(|f| f.d_hat).collect();
    let within = |i: usize, j: usize| {
        let seg = &slopes[i..=j];
        let lo = seg.iter().copied().fold(T::infinity(), T::min);
        let hi = seg.iter().copied().fold(T::neg_infinity(), T::max);
        let m = mean(seg.iter().copied(), seg.len());
        hi - lo <= opts.tolerance * m.abs()
    };
    let mut out = Vec::new();
    let mut reach: Option<usize> = None;
    for i in 0..slopes.len() {
        let mut j = i;
        while j + 1 < slopes.len() && within(i, j + 1) {
            j += 1;
        }
        let len = j - i + 1;
        if reach.is_none_or(|r| j > r) && len >= opts.min_windows.max(1) {
            out.push(Plateau {
                range: ScaleRange {
                    log2_r_min: scan[i].range.log2_r_min,
                    log2_r_max: scan[j].range.log2_r_max,
                },
                first_window: i,
                windows: len,
                mean_slope: mean(slopes[i..=j].iter().copied(), len),
            });
        }
        reach = Some(reach.map_or(j, |r| r.max(j)));
    }
    out
}

/// Settings for the automated multiscale reading of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MultiscaleOptions<T> {
    /// Points backed by fewer coincidences are ignored.
    pub min_pairs: usize,
    /// Resample the floored curve to this many points before scanning.
    pub resample: Option<usize>,
    /// Scan window width as a fraction of the floored curve span.
    pub window_fraction: T,
    /// Scan stride as a fraction of the window width.
    pub stride_fraction: T,
    pub plateau: PlateauOptions<T>,
}

impl<T: Real> Default for MultiscaleOptions<T> {
    fn default() -> Self {
        Self {
            min_pairs: 100,
            resample: Some(400),
            window_fraction: T::lit(1.0 / 6.0),
            stride_fraction: T::lit(0.25),
            plateau: PlateauOptions::default(),
        }
    }
}

/// A plateau together with the line fitted over its whole range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PlateauFit<T> {
    pub plateau: Plateau<T>,
    pub fit: SegmentFit<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleAnalysis<T> {
    /// The curve that was scanned (floored and possibly resampled).
    pub curve: CorrelationCurve<T>,
    pub window_width: T,
    pub stride: T,
    pub scan: Vec<SegmentFit<T>>,
    /// Ordered from fine to coarse scales.
    pub plateaus: Vec<PlateauFit<T>>,
}

impl<T: Real> MultiscaleAnalysis<T> {
    /// The finest-scale plateau, where the small-`r` definitions apply.
    pub fn fine(&self) -> Option<&PlateauFit<T>> {
        self.plateaus.first()
    }

    pub fn coarse(&self) -> Option<&PlateauFit<T>> {
        self.plateaus.last()
    }
}

/// Floors, optionally resamples and scans the curve, then fits each plateau.
pub fn analyze_multiscale<T: Real>(
    curve: &CorrelationCurve<T>,
    opts: &MultiscaleOptions<T>,
) -> Result<MultiscaleAnalysis<T>> {
    if !(opts.window_fraction > T::zero() && opts.window_fraction <= T::one()) {
        return Err(Error::invalid("window fraction must be in (0, 1]"));
    }
    if !(opts.stride_fraction > T::zero()) {
        return Err(Error::invalid("stride fraction must be positive"));
    }
    let floored = curve.above_min_pairs(opts.min_pairs);
    if floored.len() < 2 {
        return Err(Error::invalid(format!(
            "fewer than two curve points are backed by {} or more pairs",
            opts.min_pairs
        )));
    }
    let scanned = match opts.resample {
        Some(m) => floored.resample(m)?,
        None => floored,
    };
    let (x0, x1) = scanned.extent();
    let width = (x1 - x0) * opts.window_fraction;
    let stride = width * opts.stride_fraction;
    let scan = multiscale_scan(&scanned, width, stride)?;
    let plateaus = find_plateaus(&scan, &opts.plateau)
        .into_iter()
        .map(|p| {
            fit_segment(&scanned, &p.range, None).map(|fit| PlateauFit { plateau: p, fit })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiscaleAnalysis {
        curve: scanned,
        window_width: width,
        stride,
        scan,
        plateaus,
    })
}
