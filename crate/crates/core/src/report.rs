//! End-to-end analysis report: curve, fitted segments, compensations.

use serde::{Deserialize, Serialize};

use crate::bias::{
    bias_table, compensate, invert_apparent_id, min_observations, BiasRow, Compensation,
    DataRequirement, InversionMode,
};
use crate::coincidence::CorrelationCurve;
use crate::error::{Error, Result};
use crate::estimator::{analyze_multiscale, fit_segment, MultiscaleOptions, ScaleRange, SegmentFit};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub d_ambient: usize,
    /// File path or generator description.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CurveSummary<T> {
    pub lr: usize,
    pub points: usize,
    pub duplicate_pairs: usize,
    pub subsampled: bool,
    pub log2_r_min: T,
    pub log2_r_max: T,
    /// Where the curve data was written, if anywhere.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<String>,
}

impl<T: Real> CurveSummary<T> {
    pub fn of(curve: &CorrelationCurve<T>) -> Self {
        let (lo, hi) = curve.extent();
        Self {
            lr: curve.lr,
            points: curve.len(),
            duplicate_pairs: curve.zero_pairs,
            subsampled: false,
            log2_r_min: lo,
            log2_r_max: hi,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LabeledFit<T> {
    /// `fine`, `coarse` or `range`.
    pub label: String,
    #[serde(flatten)]
    pub fit: SegmentFit<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CompensatedFit<T> {
    /// Index into [`AnalysisReport::fits`].
    pub fit_index: usize,
    #[serde(flatten)]
    pub compensation: Compensation<T>,
    /// Bias-table rows around the compensated ID.
    pub table: Vec<BiasRow<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AnalysisReport<T> {
    pub dataset: DatasetSummary,
    pub curve: CurveSummary<T>,
    pub fits: Vec<LabeledFit<T>>,
    pub compensations: Vec<CompensatedFit<T>>,
    pub requirements: Vec<DataRequirement<T>>,
}

impl<T: Real> AnalysisReport<T> {
    /// Checks that every compensation points at an existing fit.
    pub fn validate(&self) -> Result<()> {
        match self.compensations.iter().find(|c| c.fit_index >= self.fits.len()) {
            Some(c) => Err(Error::invalid(format!(
                "compensation references fit {} but only {} fits exist",
                c.fit_index,
                self.fits.len()
            ))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions<T> {
    /// Explicit fit ranges; when empty the fine and coarse plateaus are used.
    pub ranges: Vec<ScaleRange<T>>,
    pub d_override: Option<T>,
    pub compensate: bool,
    pub mode: InversionMode,
    /// Sample count used for compensation; defaults to the curve's `n`.
    pub n: Option<u64>,
    pub multiscale: MultiscaleOptions<T>,
}

impl<T: Real> Default for AnalyzeOptions<T> {
    fn default() -> Self {
        Self {
            ranges: Vec::new(),
            d_override: None,
            compensate: true,
            mode: InversionMode::Integer,
            n: None,
            multiscale: MultiscaleOptions::default(),
        }
    }
}

/// Fits the requested ranges (or the detected plateaus) and compensates each fit.
pub fn analyze<T: Real>(
    curve: &CorrelationCurve<T>,
    dataset: DatasetSummary,
    opts: &AnalyzeOptions<T>,
) -> Result<AnalysisReport<T>> {
    let mut fits = Vec::new();
    if opts.ranges.is_empty() {
        let ms = analyze_multiscale(curve, &opts.multiscale)?;
        let (fine, coarse) = (ms.fine(), ms.coarse());
        if let Some(p) = fine {
            fits.push(LabeledFit {
                label: "fine".into(),
                fit: fit_segment(&ms.curve, &p.plateau.range, opts.d_override)?,
            });
        }
        if let Some(p) = coarse.filter(|_| ms.plateaus.len() > 1) {
            fits.push(LabeledFit {
                label: "coarse".into(),
                fit: fit_segment(&ms.curve, &p.plateau.range, opts.d_override)?,
            });
        }
    } else {
        for range in &opts.ranges {
            fits.push(LabeledFit {
                label: "range".into(),
                fit: fit_segment(curve, range, opts.d_override)?,
            });
        }
    }

    let n = match opts.n {
        Some(n) => n,
        None => curve.n as u64,
    };
    let mut compensations = Vec::new();
    let mut requirements = Vec::new();
    for (i, lf) in fits.iter().enumerate() {
        let d_hat = lf.fit.d_hat;
        let mut d_req = d_hat;
        if opts.compensate && d_hat > T::zero() {
            let d_bar = invert_apparent_id(n, d_hat, opts.mode)?;
            let mut c = compensate(lf.fit.h_hat, n, d_bar)?;
            c.d_hat = Some(d_hat);
            let centre = d_bar.round().to_u32().unwrap_or(1).max(1);
            let table = bias_table(n, centre.saturating_sub(2).max(1), centre + 2)?.rows;
            compensations.push(CompensatedFit {
                fit_index: i,
                compensation: c,
                table,
            });
            d_req = d_bar;
        }
        if d_req >= T::one() {
            requirements.push(min_observations(d_req)?);
        }
    }

    let report = AnalysisReport {
        dataset,
        curve: CurveSummary::of(curve),
        fits,
        compensations,
        requirements,
    };
    report.validate()?;
    Ok(report)
}
