//! Light-curve ingestion primitives: folding, spike removal, smoothing,
//! resampling onto a uniform circular grid, normalization and phasing.
//!
//! Everything downstream works on [`UniformSeries`]: `d` samples on folded
//! time `j / d`, zero mean and unit sum of squares, with `d` a power of two.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::xcorr::rotate;

/// Tolerance on the zero-mean / unit-norm invariants.
pub const NORM_TOL: f64 = 1e-9;

/// One photometric observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub mag: f64,
    /// Carried through ingestion, never used for scoring.
    pub err: Option<f64>,
}

/// Irregularly sampled observations of one source, before folding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub id: String,
    pub samples: Vec<Sample>,
    pub period: Option<f64>,
    pub epoch: Option<f64>,
}

impl RawSeries {
    pub fn new(id: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let raw = Self {
            id: id.into(),
            samples,
            period: None,
            epoch: None,
        };
        raw.validate()?;
        Ok(raw)
    }

    pub fn with_period(mut self, period: f64, epoch: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::NonPositivePeriod(period));
        }
        self.period = Some(period);
        self.epoch = Some(epoch);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptySeries);
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::UnorderedTimes { index: i + 1 });
            }
        }
        if let Some(p) = self.period {
            if !(p > 0.0) {
                return Err(Error::NonPositivePeriod(p));
            }
        }
        Ok(())
    }
}

/// A point on the folded time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub phase: f64,
    pub mag: f64,
}

/// Knobs for spike removal, smoothing and resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub d: usize,
    pub spike_window: usize,
    pub spike_k: f64,
    pub smooth_window: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            d: 256,
            spike_window: 5,
            spike_k: 5.0,
            smooth_window: 5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.d.is_power_of_two() || self.d < 16 {
            return Err(Error::InvalidConfig(format!(
                "d must be a power of two >= 16, got {}",
                self.d
            )));
        }
        for (name, w) in [
            ("spike_window", self.spike_window),
            ("smooth_window", self.smooth_window),
        ] {
            if w < 3 || w % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be odd and >= 3, got {w}"
                )));
            }
        }
        if !(self.spike_k > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "spike_k must be positive, got {}",
                self.spike_k
            )));
        }
        Ok(())
    }
}

/// A length-`d` series on the uniform folded grid, zero mean and unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    id: String,
    values: Vec<f64>,
}

impl UniformSeries {
    /// Wraps already-normalized values, checking every invariant.
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        let d = values.len();
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::NonPowerOfTwoLength(d));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid(&id, "non-finite value"));
        }
        let sum: f64 = values.iter().sum();
        let sumsq: f64 = values.iter().map(|v| v * v).sum();
        if sum.abs() > NORM_TOL {
            return Err(invalid(&id, format!("mean is not zero (sum = {sum:e})")));
        }
        if (sumsq - 1.0).abs() > NORM_TOL {
            return Err(invalid(&id, format!("norm is not one (sum of squares = {sumsq})")));
        }
        Ok(Self { id, values })
    }

    /// Normalizes arbitrary values and wraps them.
    pub fn from_values(id: impl Into<String>, values: &[f64]) -> Result<Self> {
        let normalized = normalize(values)?;
        Self::new(id, normalized)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn d(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Circular rotation: `out[t] = self[(t - tau) mod d]`.
    pub fn rotated(&self, tau: usize) -> Self {
        Self {
            id: self.id.clone(),
            values: rotate(&self.values, tau),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl Deref for UniformSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for UniformSeries {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

fn invalid(id: &str, reason: impl Into<String>) -> Error {
    Error::InvalidSeries {
        id: id.to_string(),
        reason: reason.into(),
    }
}

/// Folds observation times onto `[0, 1)` by the fractional part of
/// `(t - t0) / period`. Output is sorted by phase; equal phases keep their
/// original order.
pub fn fold(raw: &RawSeries, period: f64, epoch: f64) -> Result<Vec<PhasePoint>> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::NonPositivePeriod(period));
    }
    if raw.samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut out: Vec<PhasePoint> = raw
        .samples
        .iter()
        .map(|s| PhasePoint {
            phase: fold_phase(s.t, period, epoch),
            mag: s.mag,
        })
        .collect();
    // stable sort keeps original order among ties
    out.sort_by(|a, b| a.phase.total_cmp(&b.phase));
    Ok(out)
}

/// Fractional part of `(t - t0) / period`, wrapped into `[0, 1)`.
pub fn fold_phase(t: f64, period: f64, epoch: f64) -> f64 {
    let x = (t - epoch) / period;
    let mut frac = x - x.floor();
    if frac >= 1.0 {
        // x.floor() rounding can leave exactly 1.0 for tiny negative x
        frac = 0.0;
    }
    frac
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_by(|a, b| a.total_cmp(b));
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

/// Drops samples that sit more than `spike_k` robust standard deviations
/// (1.4826 x MAD) from the median of their centered, circular neighborhood.
pub fn despike(points: &[PhasePoint], cfg: &PreprocessConfig) -> Result<Vec<PhasePoint>> {
    let n = points.len();
    let w = cfg.spike_window;
    if n < w {
        return Err(Error::TooFewSamples { needed: w, got: n });
    }
    let half = w / 2;
    let mut window = vec![0.0; w];
    let mut devs = vec![0.0; w];
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        for (o, slot) in window.iter_mut().enumerate() {
            *slot = points[(i + n + o - half) % n].mag;
        }
        let med = median(&mut window);
        for (dv, v) in devs.iter_mut().zip(&window) {
            *dv = (v - med).abs();
        }
        let mad = median(&mut devs);
        let dev = (points[i].mag - med).abs();
        if dev <= cfg.spike_k * 1.4826 * mad {
            keep.push(points[i]);
        }
    }
    let dropped = n - keep.len();
    if keep.len() * 2 < n {
        return Err(Error::OverAggressiveRemoval { dropped, total: n });
    }
    Ok(keep)
}

/// Centered circular moving average over `window` neighbors by index.
pub fn smooth(points: &[PhasePoint], window: usize) -> Result<Vec<PhasePoint>> {
    let n = points.len();
    if n < window {
        return Err(Error::TooFewSamples { needed: window, got: n });
    }
    let half = window / 2;
    let scale = 1.0 / window as f64;
    Ok((0..n)
        .map(|i| {
            let sum: f64 = (0..window).map(|o| points[(i + n + o - half) % n].mag).sum();
            PhasePoint {
                phase: points[i].phase,
                mag: sum * scale,
            }
        })
        .collect())
}

/// Linear interpolation onto the grid `j / d`, wrapping across the
/// `1 -> 0` seam. Samples sharing a phase are averaged first.
pub fn resample(points: &[PhasePoint], d: usize) -> Result<Vec<f64>> {
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.phase.total_cmp(&b.phase));
    let mut i = 0;
    while i < sorted.len() {
        let phase = sorted[i].phase;
        let mut j = i;
        let mut sum = 0.0;
        while j < sorted.len() && sorted[j].phase == phase {
            sum += sorted[j].mag;
            j += 1;
        }
        knots.push((phase, sum / (j - i) as f64));
        i = j;
    }
    if knots.len() < 2 {
        return Err(Error::DegenerateSeries);
    }
    let m = knots.len();
    let mut out = Vec::with_capacity(d);
    // index of the first knot with phase > t
    let mut upper = 0;
    for j in 0..d {
        let t = j as f64 / d as f64;
        while upper < m && knots[upper].0 <= t {
            upper += 1;
        }
        let (p0, v0, p1, v1) = if upper == 0 {
            let (pl, vl) = knots[m - 1];
            (pl - 1.0, vl, knots[0].0, knots[0].1)
        } else if upper == m {
            let (pl, vl) = knots[m - 1];
            (pl, vl, knots[0].0 + 1.0, knots[0].1)
        } else {
            let (pa, va) = knots[upper - 1];
            let (pb, vb) = knots[upper];
            (pa, va, pb, vb)
        };
        let v = if t == p0 {
            v0
        } else {
            v0 + (v1 - v0) * (t - p0) / (p1 - p0)
        };
        out.push(v);
    }
    Ok(out)
}

/// Z-score, then divide by `sqrt(d)` so the sum of squares is one.
pub fn normalize(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySeries);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in series".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Err(Error::ZeroVariance);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let scale = 1.0 / (var.sqrt() * (n as f64).sqrt());
    let mut out: Vec<f64> = centered.iter().map(|v| v * scale).collect();
    // one cleanup pass pulls the invariants down to rounding level
    let residual = out.iter().sum::<f64>() / n as f64;
    out.iter_mut().for_each(|v| *v -= residual);
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.iter_mut().for_each(|v| *v /= norm);
    Ok(out)
}

/// Full per-series pipeline: fold, despike, smooth, resample, normalize.
pub fn preprocess(raw: &RawSeries, cfg: &PreprocessConfig) -> Result<UniformSeries> {
    cfg.validate()?;
    raw.validate()?;
    let period = raw
        .period
        .filter(|p| *p > 0.0)
        .ok_or_else(|| Error::MissingPeriod(raw.id.clone()))?;
    let folded = fold(raw, period, raw.epoch.unwrap_or(0.0))?;
    let cleaned = despike(&folded, cfg)?;
    let smoothed = smooth(&cleaned, cfg.smooth_window)?;
    let grid = resample(&smoothed, cfg.d)?;
    UniformSeries::new(raw.id.clone(), normalize(&grid)?)
}

/// 1-D two-means on `values`, seeded at the min and max. Returns a flag per
/// value: true when it belongs to the higher-mean group.
fn two_means_high(values: &[f64]) -> Vec<bool> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![true; values.len()];
    }
    let (mut c_lo, mut c_hi) = (lo, hi);
    let mut high: Vec<bool> = values.iter().map(|&v| v - c_lo > c_hi - v).collect();
    for _ in 0..100 {
        let (mut s_lo, mut n_lo, mut s_hi, mut n_hi) = (0.0, 0usize, 0.0, 0usize);
        for (&v, &h) in values.iter().zip(&high) {
            if h {
                s_hi += v;
                n_hi += 1;
            } else {
                s_lo += v;
                n_lo += 1;
            }
        }
        if n_lo > 0 {
            c_lo = s_lo / n_lo as f64;
        }
        if n_hi > 0 {
            c_hi = s_hi / n_hi as f64;
        }
        let next: Vec<bool> = values.iter().map(|&v| v - c_lo > c_hi - v).collect();
        if next == high {
            break;
        }
        high = next;
    }
    high
}

/// Index around which the high-value cluster of the top decile sits.
pub fn peak_index(x: &[f64]) -> usize {
    let d = x.len();
    let top = ((d as f64) * 0.1).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let chosen = &order[..top];
    let vals: Vec<f64> = chosen.iter().map(|&i| x[i]).collect();
    let high = two_means_high(&vals);
    let (mut sx, mut sy) = (0.0, 0.0);
    for (&i, &h) in chosen.iter().zip(&high) {
        if h {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / d as f64;
            sx += theta.cos();
            sy += theta.sin();
        }
    }
    let theta = sy.atan2(sx);
    let pos = theta * d as f64 / (2.0 * std::f64::consts::PI);
    (pos.round() as i64).rem_euclid(d as i64) as usize
}

/// Rotates the series so its robust maximum lands at `round(0.25 d)`.
pub fn universal_phase(x: &UniformSeries) -> UniformSeries {
    let d = x.d();
    let target = (0.25 * d as f64).round() as usize % d;
    let peak = peak_index(x);
    x.rotated((target + d - peak) % d)
}

/// Shift drawn uniformly from `0..d` by `seed`.
pub fn random_shift(d: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..d)
}

/// Circular rotation by a seeded uniform shift.
pub fn random_phase(x: &UniformSeries, seed: u64) -> UniformSeries {
    x.rotated(random_shift(x.d(), seed))
}
