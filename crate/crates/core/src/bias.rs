//! Small-sample bias of the coincidence estimators and its compensation.
//!
//! For `N` points uniform in a unit `d`-cube, Smith's model predicts the
//! correlation integral `C0(r) = (r(2-r))^d` and the local log-log slope
//! `d0(r) = d (1 - r/(2-r))`. Evaluating the model at the coarse
//! nearest-neighbour scale `r̄(N, d) = 1 / (1 + N^(1/d))` gives the apparent
//! ID an analyst should expect to read off the curve, and the imbalance
//! `log2 C0 - d0 log2 r` is the matching DE bias in bits.
//!
//! Compensation inverts the apparent-ID prediction to find the true ID `d̄`
//! and subtracts `Δh(N, d̄)` from the apparent DE.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Default largest ID tried when inverting an apparent ID.
pub const DEFAULT_CEILING: u32 = 200;

fn check_model<T: Real>(n: u64, d: T) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("sample count {n} must be at least 2")));
    }
    if !(d >= T::one()) || !d.is_finite() {
        return Err(Error::invalid(format!("dimension {d} must be at least 1")));
    }
    Ok(())
}

/// Correlation integral of a uniform unit `d`-cube at threshold `r ∈ (0, 1]`.
pub fn c0<T: Real>(r: T, d: T) -> Result<T> {
    if !(r > T::zero() && r <= T::one()) {
        return Err(Error::invalid(format!("threshold {r} outside (0, 1]")));
    }
    Ok((r * (T::lit(2.0) - r)).powf(d))
}

/// Log-log slope of [`c0`] at `r ∈ (0, 1)`.
pub fn d0_of_r<T: Real>(r: T, d: T) -> Result<T> {
    if !(r > T::zero() && r < T::one()) {
        return Err(Error::invalid(format!("threshold {r} outside (0, 1)")));
    }
    Ok(d * (T::one() - r / (T::lit(2.0) - r)))
}

/// Coarse expected sup-norm nearest-neighbour distance of `n` points in a unit `d`-cube.
pub fn rbar<T: Real>(n: u64, d: T) -> T {
    let n = T::from_u64(n).expect("count converts to Real");
    T::one() / (T::one() + n.powf(d.recip()))
}

/// Apparent ID predicted for `n` samples of a true `d`-dimensional source.
pub fn apparent_id<T: Real>(n: u64, d: T) -> T {
    let r = rbar(n, d);
    d * (T::one() - r / (T::lit(2.0) - r))
}

/// Predicted DE bias in bits for `n` samples of a `d`-dimensional source.
pub fn de_bias<T: Real>(n: u64, d: T) -> T {
    let r = rbar(n, d);
    let two = T::lit(2.0);
    d * ((r / (two - r)) * r.log2() + (two - r).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BiasRow<T> {
    pub d: u32,
    pub d0: T,
}

/// Predicted apparent ID for each candidate integer ID at a fixed `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BiasTable<T> {
    pub n: u64,
    pub rows: Vec<BiasRow<T>>,
}

impl<T: Real> BiasTable<T> {
    /// Row whose predicted apparent ID is closest to `d_hat` (earlier row on ties).
    pub fn closest(&self, d_hat: T) -> Option<&BiasRow<T>> {
        let mut best: Option<&BiasRow<T>> = None;
        for row in &self.rows {
            if best.is_none_or(|b| (row.d0 - d_hat).abs() < (b.d0 - d_hat).abs()) {
                best = Some(row);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "d,d0")?;
        for row in &self.rows {
            writeln!(out, "{},{}", row.d, row.d0)?;
        }
        Ok(())
    }
}

pub fn bias_table<T: Real>(n: u64, d_min: u32, d_max: u32) -> Result<BiasTable<T>> {
    if d_min < 1 || d_min > d_max {
        return Err(Error::invalid(format!(
            "invalid dimension range {d_min}..={d_max}"
        )));
    }
    check_model(n, T::one())?;
    let rows: Vec<BiasRow<T>> = (d_min..=d_max)
        .map(|d| BiasRow {
            d,
            d0: apparent_id(n, T::from_u32(d).expect("dimension converts to Real")),
        })
        .collect();
    if let Some(w) = rows.windows(2).find(|w| w[1].d0 <= w[0].d0) {
        return Err(Error::NonMonotone { d: w[1].d });
    }
    Ok(BiasTable { n, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMode {
    /// Integer ID whose predicted apparent ID is nearest (smaller ID on ties).
    #[default]
    Integer,
    /// Real root of `apparent_id(n, d) = d_hat`.
    Continuous,
}

impl std::str::FromStr for InversionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" => Ok(Self::Integer),
            "continuous" => Ok(Self::Continuous),
            other => Err(Error::invalid(format!(
                "unknown inversion mode {other:?} (integer|continuous)"
            ))),
        }
    }
}

/// Compensated ID for an apparent ID `d_hat`, searching up to [`DEFAULT_CEILING`].
pub fn invert_apparent_id<T: Real>(n: u64, d_hat: T, mode: InversionMode) -> Result<T> {
    invert_apparent_id_with(n, d_hat, mode, DEFAULT_CEILING)
}

pub fn invert_apparent_id_with<T: Real>(
    n: u64,
    d_hat: T,
    mode: InversionMode,
    ceiling: u32,
) -> Result<T> {
    if !(d_hat > T::zero()) || !d_hat.is_finite() {
        return Err(Error::invalid(format!("apparent ID {d_hat} must be positive")));
    }
    if ceiling < 1 {
        return Err(Error::invalid("search ceiling must be at least 1"));
    }
    check_model(n, T::one())?;
    let at = |d: u32| apparent_id(n, T::from_u32(d).expect("dimension converts to Real"));
    let limit = at(ceiling);
    if d_hat > limit {
        return Err(Error::BeyondCeiling {
            d_hat: d_hat.as_f64(),
            limit: limit.as_f64(),
            ceiling,
        });
    }
    match mode {
        InversionMode::Integer => {
            let mut best = (1u32, (at(1) - d_hat).abs());
            for d in 2..=ceiling {
                let err = (at(d) - d_hat).abs();
                if err < best.1 {
                    best = (d, err);
                }
            }
            Ok(T::from_u32(best.0).expect("dimension converts to Real"))
        }
        InversionMode::Continuous => {
            let floor = at(1);
            if d_hat < floor {
                return Err(Error::BelowFloor {
                    d_hat: d_hat.as_f64(),
                    floor: floor.as_f64(),
                });
            }
            // Grid scan for the first integer at or above d_hat, then bisect.
            let upper = (1..=ceiling)
                .find(|&d| at(d) >= d_hat)
                .expect("limit bounds d_hat");
            if upper == 1 {
                return Ok(T::one());
            }
            let mut lo = T::from_u32(upper - 1).expect("dimension converts to Real");
            let mut hi = T::from_u32(upper).expect("dimension converts to Real");
            let tol = T::lit(1e-6);
            for _ in 0..200 {
                if hi - lo <= tol {
                    break;
                }
                let mid = (lo + hi) / T::lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if apparent_id(n, mid) < d_hat {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok((lo + hi) / T::lit(2.0))
        }
    }
}

/// Bias-compensated ID and DE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Compensation<T> {
    pub d_bar: T,
    pub delta_h: T,
    /// Always `h_hat - delta_h`.
    pub h_bar: T,
    pub n: u64,
    /// The apparent ID that was inverted, when known.
    pub d_hat: Option<T>,
    pub h_hat: T,
}

/// Subtracts the predicted DE bias for a known (compensated) ID.
pub fn compensate<T: Real>(h_hat: T, n: u64, d_bar: T) -> Result<Compensation<T>> {
    check_model(n, d_bar)?;
    let delta_h = de_bias(n, d_bar);
    Ok(Compensation {
        d_bar,
        delta_h,
        h_bar: h_hat - delta_h,
        n,
        d_hat: None,
        h_hat,
    })
}

/// Inverts the apparent ID, then compensates the apparent DE.
pub fn compensate_estimate<T: Real>(
    n: u64,
    d_hat: T,
    h_hat: T,
    mode: InversionMode,
) -> Result<Compensation<T>> {
    let d_bar = invert_apparent_id(n, d_hat, mode)?;
    let mut c = compensate(h_hat, n, d_bar)?;
    c.d_hat = Some(d_hat);
    Ok(c)
}

/// Minimum sample counts suggested for estimating an ID of `d` without compensation.
///
/// Counts beyond the scalar range are infinite; the base-10 logarithms stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DataRequirement<T> {
    pub d: T,
    /// `42^d`
    pub smith_n_min: T,
    /// `10^(d/2)`
    pub eckmann_n_min: T,
    pub smith_log10: T,
    pub eckmann_log10: T,
}

pub fn min_observations<T: Real>(d: T) -> Result<DataRequirement<T>> {
    if !(d >= T::one()) || !d.is_finite() {
        return Err(Error::invalid(format!("dimension {d} must be at least 1")));
    }
    let smith_log10 = d * T::lit(42.0).log10();
    let eckmann_log10 = d / T::lit(2.0);
    Ok(DataRequirement {
        d,
        smith_n_min: T::lit(42.0).powf(d),
        eckmann_n_min: T::lit(10.0).powf(eckmann_log10),
        smith_log10,
        eckmann_log10,
    })
}
