//! Circular cross correlation and phase alignment.
//!
//! `corr(tau) = sum_t x[t] * y[(t - tau) mod d]`, evaluated for every shift
//! at once through the convolution theorem: the inverse transform of
//! `X * conj(Y)`. For unit-norm inputs the maximum over shifts lies in
//! `[-1, 1]` and `1 - corr` is half the squared distance at that shift.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftPlan;

/// Values within this much of the maximum count as ties; the smallest
/// shift wins.
pub const TIE_TOL: f64 = 1e-12;

/// Maximized cross correlation and the shift that achieves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatch {
    pub corr: f64,
    pub shift: usize,
}

/// `out[t] = y[(t - tau) mod d]`.
pub fn rotate(y: &[f64], tau: usize) -> Vec<f64> {
    let d = y.len();
    if d == 0 {
        return Vec::new();
    }
    let tau = tau % d;
    let mut out = Vec::with_capacity(d);
    out.extend_from_slice(&y[d - tau..]);
    out.extend_from_slice(&y[..d - tau]);
    out
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

/// Correlation at a single shift, by direct summation.
pub fn xcorr_at(x: &[f64], y: &[f64], tau: usize) -> Result<f64> {
    check_lengths(x, y)?;
    let d = x.len();
    if d == 0 {
        return Ok(0.0);
    }
    let tau = tau % d;
    // y[(t - tau) mod d] split into its two contiguous runs
    let head: f64 = x[tau..].iter().zip(&y[..d - tau]).map(|(a, b)| a * b).sum();
    let tail: f64 = x[..tau].iter().zip(&y[d - tau..]).map(|(a, b)| a * b).sum();
    Ok(head + tail)
}

/// Correlation at every shift, in `O(d log d)`.
pub fn xcorr_all(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(x, y)?;
    let plan = FftPlan::new(x.len())?;
    let (xs, ys) = plan.forward_real_pair(x, y);
    let corr = Correlator::from_plan(Arc::new(plan));
    Ok(corr.correlation(&Spectrum(xs), &Spectrum(ys)))
}

/// Maximum over shifts of the circular cross correlation.
pub fn max_xcorr(x: &[f64], y: &[f64]) -> Result<PhaseMatch> {
    Ok(argmax(&xcorr_all(x, y)?))
}

/// Largest entry, smallest index among values within [`TIE_TOL`] of it.
pub fn argmax(values: &[f64]) -> PhaseMatch {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = values
        .iter()
        .position(|&v| v >= best - TIE_TOL)
        .unwrap_or(0);
    PhaseMatch {
        corr: values[shift],
        shift,
    }
}

/// Cached forward transform of a real series.
#[derive(Debug, Clone)]
pub struct Spectrum(Vec<Complex64>);

impl Spectrum {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reusable correlation engine for one series length. Spectra of series
/// that do not change (the corpus) are computed once and reused against
/// every centroid.
#[derive(Debug, Clone)]
pub struct Correlator {
    plan: Arc<FftPlan>,
}

impl Correlator {
    pub fn new(d: usize) -> Result<Self> {
        Ok(Self::from_plan(Arc::new(FftPlan::new(d)?)))
    }

    fn from_plan(plan: Arc<FftPlan>) -> Self {
        Self { plan }
    }

    pub fn d(&self) -> usize {
        self.plan.len()
    }

    pub fn spectrum(&self, x: &[f64]) -> Result<Spectrum> {
        if x.len() != self.d() {
            return Err(Error::LengthMismatch {
                left: self.d(),
                right: x.len(),
            });
        }
        Ok(Spectrum(self.plan.forward_real(x)))
    }

    /// Spectra for a whole corpus, two series per transform.
    pub fn spectra<S: AsRef<[f64]>>(&self, series: &[S]) -> Result<Vec<Spectrum>> {
        let d = self.d();
        for s in series {
            if s.as_ref().len() != d {
                return Err(Error::LengthMismatch {
                    left: d,
                    right: s.as_ref().len(),
                });
            }
        }
        let mut out = Vec::with_capacity(series.len());
        for pair in series.chunks(2) {
            if let [a, b] = pair {
                let (sa, sb) = self.plan.forward_real_pair(a.as_ref(), b.as_ref());
                out.push(Spectrum(sa));
                out.push(Spectrum(sb));
            } else {
                out.push(Spectrum(self.plan.forward_real(pair[0].as_ref())));
            }
        }
        Ok(out)
    }

    /// `corr[tau] = sum_t x[t] y[t - tau]` from the two spectra.
    pub fn correlation(&self, x: &Spectrum, y: &Spectrum) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.0.iter().zip(&y.0).map(|(a, b)| a * b.conj()).collect();
        self.plan.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// `(corr(x1, y1), corr(x2, y2))` from one inverse transform: both
    /// products are Hermitian, so `ifft(P + iQ) = p + iq` with `p, q` real.
    pub fn correlation_pair(
        &self,
        (x1, y1): (&Spectrum, &Spectrum),
        (x2, y2): (&Spectrum, &Spectrum),
    ) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut buf: Vec<Complex64> = (0..self.d())
            .map(|k| x1.0[k] * y1.0[k].conj() + i * (x2.0[k] * y2.0[k].conj()))
            .collect();
        self.plan.inverse(&mut buf);
        buf.into_iter().map(|c| (c.re, c.im)).unzip()
    }

    pub fn best_match(&self, x: &Spectrum, y: &Spectrum) -> PhaseMatch {
        argmax(&self.correlation(x, y))
    }

    /// `best_match(x, r)` for each `r` in `refs`, in order.
    pub fn best_matches(&self, x: &Spectrum, refs: &[Spectrum]) -> Vec<PhaseMatch> {
        self.batched(refs, |r| (x, r))
    }

    /// `best_match(r, y)` for each `r` in `refs`: the shift that rotates `y`
    /// onto each reference.
    pub fn alignments(&self, refs: &[Spectrum], y: &Spectrum) -> Vec<PhaseMatch> {
        self.batched(refs, |r| (r, y))
    }

    fn batched<'a, F>(&self, refs: &'a [Spectrum], pair_of: F) -> Vec<PhaseMatch>
    where
        F: Fn(&'a Spectrum) -> (&'a Spectrum, &'a Spectrum),
    {
        let mut out = Vec::with_capacity(refs.len());
        for chunk in refs.chunks(2) {
            if let [a, b] = chunk {
                let (ca, cb) = self.correlation_pair(pair_of(a), pair_of(b));
                out.push(argmax(&ca));
                out.push(argmax(&cb));
            } else {
                let (l, r) = pair_of(&chunk[0]);
                out.push(self.best_match(l, r));
            }
        }
        out
    }
}
