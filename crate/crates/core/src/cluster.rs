//! k-means and phase-aligning Pk-means over [`UniformSeries`], plus BIC
//! selection of `k`.
//!
//! Pk-means alternates two steps. The distance pass finds, for every series,
//! the centroid and circular shift with the largest cross correlation and
//! records that shift. The update pass averages each cluster's series after
//! rotating them by their recorded shifts. With unit-norm centroids the
//! quantization error `sum_i 1/2 |rot(x_i, tau_i) - w_c(i)|^2` never grows
//! from one distance pass to the next; `ModelMeta::error_trace` records it.

use std::ops::RangeInclusive;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};
use crate::series::UniformSeries;
use crate::xcorr::{rotate, Correlator, Spectrum};

/// Run bookkeeping stored alongside the centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub iterations: usize,
    pub converged: bool,
    /// Quantization error of the final distance pass, before any end-of-run
    /// renormalization.
    pub error: f64,
    pub seed: u64,
    /// Number of series the centroids were fitted on.
    pub n: usize,
    /// True when centroids were put back on the unit sphere after every
    /// update; false when only the returned model was normalized.
    pub renormalized_each_iteration: bool,
    /// Quantization error after every distance pass.
    pub error_trace: Vec<f64>,
}

/// k centroids and the share of the corpus closest to each.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    pub centroids: Vec<Vec<f64>>,
    pub proportions: Vec<f64>,
    pub meta: ModelMeta,
}

impl CentroidModel {
    /// Builds a model from explicit centroids, which are normalized to unit
    /// length. Proportions must be nonnegative and sum to one.
    pub fn new(centroids: Vec<Vec<f64>>, proportions: Vec<f64>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::EmptyInput);
        }
        if centroids.len() != proportions.len() {
            return Err(Error::InconsistentState(format!(
                "{} centroids but {} proportions",
                centroids.len(),
                proportions.len()
            )));
        }
        let d = centroids[0].len();
        let mut unit = Vec::with_capacity(centroids.len());
        for c in centroids {
            if c.len() != d {
                return Err(Error::LengthMismatch {
                    left: d,
                    right: c.len(),
                });
            }
            let norm_sq: f64 = c.iter().map(|v| v * v).sum();
            if (norm_sq - 1.0).abs() < 1e-14 {
                unit.push(c);
                continue;
            }
            unit.push(unit_normalized(&c).ok_or_else(|| {
                Error::Numerical("centroid has zero or non-finite norm".into())
            })?);
        }
        let total: f64 = proportions.iter().sum();
        if proportions.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InconsistentState(format!(
                "proportions must be nonnegative and sum to 1 (sum = {total})"
            )));
        }
        Ok(Self {
            centroids: unit,
            proportions,
            meta: ModelMeta {
                iterations: 0,
                converged: true,
                error: 0.0,
                seed: 0,
                n: 0,
                renormalized_each_iteration: true,
                error_trace: Vec::new(),
            },
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn d(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Recomputes the proportions against `data` (typically the full corpus
    /// after fitting on a sample): each series counts toward the centroid it
    /// correlates with best.
    pub fn refit_proportions(&mut self, data: &[UniformSeries]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        let corr = Correlator::new(self.d())?;
        let cspec = corr.spectra(&self.centroids)?;
        let spectra = corr.spectra(data)?;
        let best: Vec<usize> = spectra
            .par_iter()
            .map(|s| {
                let matches = corr.alignments(&cspec, s);
                let mut best = 0;
                for (j, m) in matches.iter().enumerate() {
                    if m.corr > matches[best].corr {
                        best = j;
                    }
                }
                best
            })
            .collect();
        self.proportions = proportions(&best, self.k());
        Ok(())
    }
}

/// Per-series assignment, phase and error of one clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub assignments: Vec<usize>,
    /// Shift applied to each series, `rotate(x_i, phases[i])`.
    pub phases: Vec<usize>,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Put centroids back on the unit sphere after every update. When off,
    /// centroids are plain means until the end of the run and assignment
    /// minimizes squared distance.
    pub renormalize: bool,
}

impl ClusterConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            renormalize: true,
        }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }
}

fn unit_normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| x / norm).collect())
}

fn proportions(assignments: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for &a in assignments {
        counts[a] += 1;
    }
    let n = assignments.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

fn check_data(data: &[UniformSeries], k: usize) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > data.len() {
        return Err(Error::KTooLarge { k, n: data.len() });
    }
    let d = data[0].d();
    for s in data {
        if s.d() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: s.d(),
            });
        }
    }
    Ok(d)
}

/// Seeded choice of `k` distinct series indices.
pub fn initial_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    sample(&mut rng(seed), n, k).into_vec()
}

#[derive(Debug, Clone, Copy)]
struct Pick {
    cluster: usize,
    shift: usize,
    cost: f64,
}

/// Shared Lloyd loop for both variants.
struct Lloyd<'a> {
    data: &'a [UniformSeries],
    d: usize,
    phased: bool,
    renormalize: bool,
    corr: Option<Correlator>,
    spectra: Vec<Spectrum>,
}

impl<'a> Lloyd<'a> {
    fn new(data: &'a [UniformSeries], d: usize, phased: bool, renormalize: bool) -> Result<Self> {
        let (corr, spectra) = if phased {
            let c = Correlator::new(d)?;
            let s = c.spectra(data)?;
            (Some(c), s)
        } else {
            (None, Vec::new())
        };
        Ok(Self {
            data,
            d,
            phased,
            renormalize,
            corr,
            spectra,
        })
    }

    /// Distance pass: best centroid and shift for every series. The cost is
    /// the half squared distance, `(1 + |w|^2) / 2 - corr` for unit `x`.
    fn assign(&self, centroids: &[Vec<f64>]) -> Result<Vec<Pick>> {
        let half_sq: Vec<f64> = centroids
            .iter()
            .map(|c| 0.5 * (1.0 + c.iter().map(|v| v * v).sum::<f64>()))
            .collect();
        let choose = |matches: Vec<(f64, usize)>| {
            let mut best = Pick {
                cluster: 0,
                shift: matches[0].1,
                cost: half_sq[0] - matches[0].0,
            };
            for (j, &(c, s)) in matches.iter().enumerate().skip(1) {
                let cost = half_sq[j] - c;
                if cost < best.cost {
                    best = Pick {
                        cluster: j,
                        shift: s,
                        cost,
                    };
                }
            }
            best
        };
        if self.phased {
            let corr = self.corr.as_ref().expect("phased runs carry a correlator");
            let cspec = corr.spectra(centroids)?;
            Ok(self
                .spectra
                .par_iter()
                .map(|s| {
                    choose(
                        corr.alignments(&cspec, s)
                            .into_iter()
                            .map(|m| (m.corr, m.shift))
                            .collect(),
                    )
                })
                .collect())
        } else {
            Ok(self
                .data
                .par_iter()
                .map(|x| {
                    choose(
                        centroids
                            .iter()
                            .map(|c| (x.iter().zip(c).map(|(a, b)| a * b).sum::<f64>(), 0))
                            .collect(),
                    )
                })
                .collect())
        }
    }

    /// Update pass: mean of each cluster's aligned members. Empty (or
    /// degenerate) clusters take the worst-fitting series of a cluster that
    /// can spare one.
    fn update(&self, picks: &mut [Pick], k: usize) -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; self.d]; k];
        let mut counts = vec![0usize; k];
        for (x, p) in self.data.iter().zip(picks.iter()) {
            counts[p.cluster] += 1;
            let sum = &mut sums[p.cluster];
            let d = self.d;
            let s = p.shift % d;
            // rotate(x, s)[t] = x[(t - s) mod d]
            for (t, slot) in sum.iter_mut().enumerate() {
                *slot += x[(t + d - s) % d];
            }
        }
        let mut centroids: Vec<Option<Vec<f64>>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    return None;
                }
                let mean: Vec<f64> = s.into_iter().map(|v| v / c as f64).collect();
                if self.renormalize {
                    unit_normalized(&mean)
                } else if mean.iter().map(|v| v * v).sum::<f64>() > 1e-24 {
                    Some(mean)
                } else {
                    None
                }
            })
            .collect();
        for j in 0..k {
            if centroids[j].is_some() {
                continue;
            }
            let donor = picks
                .iter()
                .enumerate()
                .filter(|(_, p)| counts[p.cluster] > 1)
                .max_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i);
            let Some(i) = donor else {
                continue;
            };
            let old = picks[i].cluster;
            counts[old] -= 1;
            counts[j] += 1;
            picks[i].cluster = j;
            centroids[j] = Some(rotate(&self.data[i], picks[i].shift));
            // the donor cluster lost a member; its mean is recomputed below
            centroids[old] = self.mean_of(picks, old);
        }
        centroids
            .into_iter()
            .enumerate()
            .map(|(j, c)| c.unwrap_or_else(|| self.data[j % self.data.len()].to_vec()))
            .collect()
    }

    fn mean_of(&self, picks: &[Pick], cluster: usize) -> Option<Vec<f64>> {
        let d = self.d;
        let mut sum = vec![0.0; d];
        let mut count = 0;
        for (x, p) in self.data.iter().zip(picks) {
            if p.cluster == cluster {
                count += 1;
                for (t, slot) in sum.iter_mut().enumerate() {
                    *slot += x[(t + d - p.shift % d) % d];
                }
            }
        }
        if count == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.into_iter().map(|v| v / count as f64).collect();
        if self.renormalize {
            unit_normalized(&mean)
        } else {
            Some(mean)
        }
    }

    fn run(
        &self,
        mut centroids: Vec<Vec<f64>>,
        previous: Option<&ClusterState>,
        seed: u64,
        max_iter: usize,
    ) -> Result<(CentroidModel, ClusterState)> {
        let k = centroids.len();
        let mut trace = Vec::new();
        let mut prev: Option<(Vec<usize>, Vec<usize>)> =
            previous.map(|s| (s.assignments.clone(), s.phases.clone()));
        let mut converged = false;
        let mut iterations = 0;
        let mut picks;
        loop {
            iterations += 1;
            picks = self.assign(&centroids)?;
            let error: f64 = picks.iter().map(|p| p.cost).sum::<f64>().max(0.0);
            trace.push(error);
            let assignments: Vec<usize> = picks.iter().map(|p| p.cluster).collect();
            let phases: Vec<usize> = picks.iter().map(|p| p.shift).collect();
            if let Some((pa, pp)) = &prev {
                if *pa == assignments && *pp == phases {
                    converged = true;
                    break;
                }
            }
            if iterations >= max_iter {
                break;
            }
            centroids = self.update(&mut picks, k);
            prev = Some((assignments, phases));
        }
        let state = ClusterState {
            assignments: picks.iter().map(|p| p.cluster).collect(),
            phases: picks.iter().map(|p| p.shift).collect(),
            error: *trace.last().unwrap_or(&0.0),
        };
        let centroids = centroids
            .iter()
            .map(|c| {
                unit_normalized(c)
                    .ok_or_else(|| Error::Numerical("centroid collapsed to zero".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = CentroidModel {
            centroids,
            proportions: proportions(&state.assignments, k),
            meta: ModelMeta {
                iterations,
                converged,
                error: state.error,
                seed,
                n: self.data.len(),
                renormalized_each_iteration: self.renormalize,
                error_trace: trace,
            },
        };
        Ok((model, state))
    }
}

fn seeded_centroids(data: &[UniformSeries], k: usize, seed: u64) -> Vec<Vec<f64>> {
    initial_indices(data.len(), k, seed)
        .into_iter()
        .map(|i| data[i].to_vec())
        .collect()
}

/// Plain k-means under squared Euclidean distance, no phase search.
/// Centroids are plain means during the run and unit-normalized at the end.
pub fn kmeans(data: &[UniformSeries], cfg: &ClusterConfig) -> Result<(CentroidModel, ClusterState)> {
    let d = check_data(data, cfg.k)?;
    let lloyd = Lloyd::new(data, d, false, false)?;
    lloyd.run(seeded_centroids(data, cfg.k, cfg.seed), None, cfg.seed, cfg.max_iter)
}

/// Plain k-means started from given centroids.
pub fn kmeans_from(
    data: &[UniformSeries],
    init: Vec<Vec<f64>>,
    cfg: &ClusterConfig,
) -> Result<(CentroidModel, ClusterState)> {
    let d = check_data(data, init.len())?;
    check_centroids(&init, d)?;
    Lloyd::new(data, d, false, false)?.run(init, None, cfg.seed, cfg.max_iter)
}

/// Pk-means: k-means that rephases every series onto its closest centroid
/// before each centroid update.
pub fn pkmeans(data: &[UniformSeries], cfg: &ClusterConfig) -> Result<(CentroidModel, ClusterState)> {
    let d = check_data(data, cfg.k)?;
    if !d.is_power_of_two() {
        return Err(Error::NonPowerOfTwoLength(d));
    }
    let lloyd = Lloyd::new(data, d, true, cfg.renormalize)?;
    lloyd.run(seeded_centroids(data, cfg.k, cfg.seed), None, cfg.seed, cfg.max_iter)
}

/// Pk-means from given centroids. With `previous` set, a run whose first
/// distance pass reproduces `previous` stops after one iteration.
pub fn pkmeans_from(
    data: &[UniformSeries],
    init: Vec<Vec<f64>>,
    previous: Option<&ClusterState>,
    cfg: &ClusterConfig,
) -> Result<(CentroidModel, ClusterState)> {
    let d = check_data(data, init.len())?;
    check_centroids(&init, d)?;
    if !d.is_power_of_two() {
        return Err(Error::NonPowerOfTwoLength(d));
    }
    Lloyd::new(data, d, true, cfg.renormalize)?.run(init, previous, cfg.seed, cfg.max_iter)
}

fn check_centroids(init: &[Vec<f64>], d: usize) -> Result<()> {
    for c in init {
        if c.len() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: c.len(),
            });
        }
    }
    Ok(())
}

fn check_state(data: &[UniformSeries], model: &CentroidModel, state: &ClusterState) -> Result<()> {
    if state.assignments.len() != data.len() || state.phases.len() != data.len() {
        return Err(Error::InconsistentState(format!(
            "{} series but {} assignments and {} phases",
            data.len(),
            state.assignments.len(),
            state.phases.len()
        )));
    }
    let d = model.d();
    if let Some(i) = state.assignments.iter().position(|&a| a >= model.k()) {
        return Err(Error::InconsistentState(format!(
            "series {i} assigned to cluster {} of {}",
            state.assignments[i],
            model.k()
        )));
    }
    if let Some(i) = state.phases.iter().position(|&p| p >= d) {
        return Err(Error::InconsistentState(format!(
            "series {i} has phase {} >= d = {d}",
            state.phases[i]
        )));
    }
    for s in data {
        if s.d() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: s.d(),
            });
        }
    }
    Ok(())
}

/// `sum_i 1/2 |rotate(x_i, tau_i) - w_c(i)|^2`.
pub fn quantization_error(
    data: &[UniformSeries],
    model: &CentroidModel,
    state: &ClusterState,
) -> Result<f64> {
    check_state(data, model, state)?;
    Ok(data
        .iter()
        .zip(state.assignments.iter().zip(&state.phases))
        .map(|(x, (&c, &tau))| {
            let r = rotate(x, tau);
            0.5 * r
                .iter()
                .zip(&model.centroids[c])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum())
}

/// Penalized spherical-Gaussian log-likelihood of one clustering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicScore {
    pub k: usize,
    pub loglik: f64,
    /// Free parameters: `k d` means, `k` for mixing weights and variance
    /// together with the shared variance term.
    pub p: usize,
    pub score: f64,
}

/// Smallest per-dimension variance used in the likelihood; exact fits would
/// otherwise give an infinite score.
pub const MIN_VARIANCE: f64 = 1e-12;

/// X-means style BIC: one shared variance
/// `sigma^2 = sum |r_i|^2 / (d (n - k))` over the aligned residuals
/// `r_i = rotate(x_i, tau_i) - w_c(i)`, mixing weights from cluster sizes.
pub fn bic(data: &[UniformSeries], model: &CentroidModel, state: &ClusterState) -> Result<BicScore> {
    let qe = quantization_error(data, model, state)?;
    let n = data.len();
    let k = model.k();
    let d = model.d();
    let ss = 2.0 * qe;
    let dof = (n * d) as f64 - (k * d) as f64;
    let var = if dof > 0.0 { ss / dof } else { 0.0 }.max(MIN_VARIANCE);
    let mut counts = vec![0usize; k];
    for &a in &state.assignments {
        counts[a] += 1;
    }
    let mixing: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / n as f64).ln())
        .sum();
    let nd = (n * d) as f64;
    let loglik = mixing - 0.5 * nd * (2.0 * std::f64::consts::PI * var).ln() - ss / (2.0 * var);
    let p = k * d + k + 1;
    let score = loglik - 0.5 * p as f64 * (n as f64).ln();
    if !score.is_finite() {
        return Err(Error::Numerical(format!("BIC for k = {k} is not finite")));
    }
    Ok(BicScore {
        k,
        loglik,
        p,
        score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    KMeans,
    PkMeans,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub renormalize: bool,
    pub algorithm: Algorithm,
}

impl SelectConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            restarts: 5,
            max_iter: 100,
            renormalize: true,
            algorithm: Algorithm::PkMeans,
        }
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    pub fn algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// One restart of one candidate `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartRecord {
    pub k: usize,
    pub seed: u64,
    pub error: f64,
    pub bic: f64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub best_k: usize,
    pub model: CentroidModel,
    pub state: ClusterState,
    /// Score of the kept (lowest-error) run for each candidate, in order.
    pub scores: Vec<BicScore>,
    pub restarts: Vec<RestartRecord>,
}

/// Seed used for restart `r` of candidate `k`. The first restart of every
/// `k` reuses the master seed so runs are comparable across candidates.
pub fn restart_seed(master: u64, k: usize, r: usize) -> u64 {
    if r == 0 {
        master
    } else {
        derive_seed(master, ((k as u64) << 32) | r as u64)
    }
}

/// Runs the chosen algorithm for every `k` in `ks` with `restarts` seeds,
/// keeps the lowest-error run per `k`, and returns the `k` with the largest
/// BIC (ties to the smaller `k`).
pub fn select_k(data: &[UniformSeries], ks: &[usize], cfg: &SelectConfig) -> Result<Selection> {
    if ks.is_empty() {
        return Err(Error::Config("empty k range".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > data.len()) {
        return Err(Error::KTooLarge { k, n: data.len() });
    }
    let jobs: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..cfg.restarts.max(1)).map(move |r| (k, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(k, r)| {
            let seed = restart_seed(cfg.seed, k, r);
            let cc = ClusterConfig {
                k,
                seed,
                max_iter: cfg.max_iter,
                renormalize: cfg.renormalize,
            };
            let (model, state) = match cfg.algorithm {
                Algorithm::KMeans => kmeans(data, &cc)?,
                Algorithm::PkMeans => pkmeans(data, &cc)?,
            };
            let score = bic(data, &model, &state)?;
            Ok((k, seed, model, state, score))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut restarts = Vec::with_capacity(runs.len());
    let mut kept: Vec<(CentroidModel, ClusterState, BicScore)> = Vec::new();
    for &k in ks {
        let mut best: Option<usize> = None;
        for (idx, run) in runs.iter().enumerate().filter(|(_, r)| r.0 == k) {
            restarts.push(RestartRecord {
                k,
                seed: run.1,
                error: run.3.error,
                bic: run.4.score,
            });
            if best.is_none_or(|b| run.3.error < runs[b].3.error) {
                best = Some(idx);
            }
        }
        let b = &runs[best.expect("at least one restart per k")];
        kept.push((b.2.clone(), b.3.clone(), b.4));
    }
    let mut winner = 0;
    for (i, (_, _, s)) in kept.iter().enumerate() {
        if s.score > kept[winner].2.score {
            winner = i;
        }
    }
    let scores = kept.iter().map(|(_, _, s)| *s).collect();
    let (model, state, score) = kept.swap_remove(winner);
    Ok(Selection {
        best_k: score.k,
        model,
        state,
        scores,
        restarts,
    })
}

/// `a..b` or `a..=b` style range helper for callers holding a range.
pub fn ks_from(range: RangeInclusive<usize>) -> Vec<usize> {
    range.collect()
}
