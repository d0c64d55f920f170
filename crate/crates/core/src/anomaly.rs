//! Anomaly scores and rankings.
//!
//! Every method produces one score per series where lower means more
//! anomalous, so a single ascending ranking convention covers them all.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cluster::{
    kmeans, pkmeans, select_k, Algorithm, CentroidModel, ClusterConfig, ClusterState,
    SelectConfig,
};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::series::UniformSeries;
use crate::xcorr::{Correlator, PhaseMatch, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    PcadGlobal,
    PcadLocal,
    PnMeans,
    ProtopapasN,
    RandCc,
    RandCcGauss,
    P1Mean,
    KmeansEd,
    KmeansCc,
    RiDiscord,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::PcadGlobal,
        Method::PcadLocal,
        Method::PnMeans,
        Method::ProtopapasN,
        Method::RandCc,
        Method::RandCcGauss,
        Method::P1Mean,
        Method::KmeansEd,
        Method::KmeansCc,
        Method::RiDiscord,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PcadGlobal => "PCAD_GLOBAL",
            Method::PcadLocal => "PCAD_LOCAL",
            Method::PnMeans => "PN_MEANS",
            Method::ProtopapasN => "PROTOPAPAS_N",
            Method::RandCc => "RAND_CC",
            Method::RandCcGauss => "RAND_CC_GAUSS",
            Method::P1Mean => "P1_MEAN",
            Method::KmeansEd => "KMEANS_ED",
            Method::KmeansCc => "KMEANS_CC",
            Method::RiDiscord => "RI_DISCORD",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("method: unknown method name '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub id: String,
    pub score: f64,
    /// Centroid or reference the score was measured against, when the
    /// method has one.
    pub best_cluster: Option<usize>,
    /// Shift with `rotate(x, best_shift)` aligned to that centroid.
    pub best_shift: Option<usize>,
}

impl RankEntry {
    pub fn new(id: impl Into<String>, score: f64) -> Self {
        Self {
            id: id.into(),
            score,
            best_cluster: None,
            best_shift: None,
        }
    }
}

/// Run settings written into a ranking file header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub method: Option<Method>,
    pub seed: u64,
    pub k: Option<usize>,
    pub s: Option<usize>,
}

/// Entries sorted by ascending score; the first `m` are the reported
/// anomalies.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRanking {
    pub entries: Vec<RankEntry>,
    pub m: usize,
    pub provenance: Provenance,
}

impl AnomalyRanking {
    pub fn top(&self) -> &[RankEntry] {
        &self.entries[..self.m.min(self.entries.len())]
    }

    /// 1-based rank of `id`.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id).map(|p| p + 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_m(mut self, m: usize) -> Result<Self> {
        if m > self.entries.len() {
            return Err(Error::MTooLarge {
                m,
                n: self.entries.len(),
            });
        }
        self.m = m;
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Stable ascending sort; equal scores keep input order.
pub fn rank(mut entries: Vec<RankEntry>, m: usize) -> Result<AnomalyRanking> {
    if m > entries.len() {
        return Err(Error::MTooLarge {
            m,
            n: entries.len(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for e in &entries {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::InvalidSeries {
                id: e.id.clone(),
                reason: "duplicate id in ranking".into(),
            });
        }
        if e.score.is_nan() {
            return Err(Error::Numerical(format!("score of '{}' is NaN", e.id)));
        }
    }
    entries.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(AnomalyRanking {
        entries,
        m,
        provenance: Provenance::default(),
    })
}

fn rank_all(entries: Vec<RankEntry>) -> Result<AnomalyRanking> {
    let n = entries.len();
    rank(entries, n)
}

/// How the local score picks its centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalRule {
    /// Correlation to the closest (highest-correlation) centroid.
    #[default]
    Closest,
    /// Smallest correlation over all centroids.
    LiteralMin,
}

/// Per-series PCAD scores against one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcadScore {
    /// Proportion-weighted best correlation to every centroid.
    pub global: f64,
    pub local: f64,
    pub local_cluster: usize,
    /// Closest centroid and the shift aligning the series to it.
    pub best_cluster: usize,
    pub best_shift: usize,
}

fn check_model(model: &CentroidModel, d: usize) -> Result<()> {
    if model.d() != d {
        return Err(Error::LengthMismatch {
            left: model.d(),
            right: d,
        });
    }
    Ok(())
}

fn pcad_from_matches(matches: &[PhaseMatch], proportions: &[f64], rule: LocalRule) -> PcadScore {
    let global = matches
        .iter()
        .zip(proportions)
        .map(|(m, p)| p * m.corr)
        .sum();
    let mut best = 0;
    let mut worst = 0;
    for (j, m) in matches.iter().enumerate() {
        if m.corr > matches[best].corr {
            best = j;
        }
        if m.corr < matches[worst].corr {
            worst = j;
        }
    }
    let local_cluster = match rule {
        LocalRule::Closest => best,
        LocalRule::LiteralMin => worst,
    };
    PcadScore {
        global,
        local: matches[local_cluster].corr,
        local_cluster,
        best_cluster: best,
        best_shift: matches[best].shift,
    }
}

/// Weighted sum of best correlations to every centroid, weights being the
/// cluster proportions.
pub fn score_global(x: &UniformSeries, model: &CentroidModel) -> Result<f64> {
    Ok(pcad_scores(std::slice::from_ref(x), model, LocalRule::Closest)?[0].global)
}

/// Best correlation to the closest centroid, and that centroid.
pub fn score_local(x: &UniformSeries, model: &CentroidModel) -> Result<(f64, usize)> {
    score_local_with(x, model, LocalRule::Closest)
}

pub fn score_local_with(x: &UniformSeries, model: &CentroidModel, rule: LocalRule) -> Result<(f64, usize)> {
    let s = pcad_scores(std::slice::from_ref(x), model, rule)?[0];
    Ok((s.local, s.local_cluster))
}

/// Scores a whole corpus against one model.
pub fn pcad_scores(data: &[UniformSeries], model: &CentroidModel, rule: LocalRule) -> Result<Vec<PcadScore>> {
    let Some(first) = data.first() else {
        return Ok(Vec::new());
    };
    check_model(model, first.d())?;
    let corr = Correlator::new(model.d())?;
    let cspec = corr.spectra(&model.centroids)?;
    let spectra = corr.spectra(data)?;
    Ok(spectra
        .par_iter()
        .map(|s| pcad_from_matches(&corr.alignments(&cspec, s), &model.proportions, rule))
        .collect())
}

pub fn global_ranking(data: &[UniformSeries], scores: &[PcadScore]) -> Result<AnomalyRanking> {
    rank_all(
        data.iter()
            .zip(scores)
            .map(|(x, s)| RankEntry {
                id: x.id().to_string(),
                score: s.global,
                best_cluster: Some(s.best_cluster),
                best_shift: Some(s.best_shift),
            })
            .collect(),
    )
}

pub fn local_ranking(data: &[UniformSeries], scores: &[PcadScore]) -> Result<AnomalyRanking> {
    rank_all(
        data.iter()
            .zip(scores)
            .map(|(x, s)| RankEntry {
                id: x.id().to_string(),
                score: s.local,
                best_cluster: Some(s.local_cluster),
                best_shift: Some(s.best_shift),
            })
            .collect(),
    )
}

/// One ascending local ranking per cluster, each holding the series whose
/// local score was measured against that cluster. `m` of each is the
/// cluster size; callers narrow it with [`AnomalyRanking::with_m`].
pub fn local_rankings_per_cluster(
    data: &[UniformSeries],
    scores: &[PcadScore],
    k: usize,
) -> Result<Vec<AnomalyRanking>> {
    let mut groups: Vec<Vec<RankEntry>> = vec![Vec::new(); k];
    for (x, s) in data.iter().zip(scores) {
        groups[s.local_cluster].push(RankEntry {
            id: x.id().to_string(),
            score: s.local,
            best_cluster: Some(s.local_cluster),
            best_shift: Some(s.best_shift),
        });
    }
    groups.into_iter().map(rank_all).collect()
}

/// Symmetric matrix of best correlations between every pair of series,
/// ones on the diagonal. Only `i < j` is computed.
pub fn pairwise_max_corr(data: &[UniformSeries]) -> Result<Vec<Vec<f64>>> {
    let n = data.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let corr = Correlator::new(data[0].d())?;
    let spectra = corr.spectra(data)?;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            corr.best_matches(&spectra[i], &spectra[i + 1..])
                .into_iter()
                .map(|m| m.corr)
                .collect()
        })
        .collect();
    let mut full = vec![vec![1.0; n]; n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            full[i][j] = v;
            full[j][i] = v;
        }
    }
    Ok(full)
}

/// Gaussian-weighted mean of `values`: each value weighted by the normal
/// density at its own mean and sample standard deviation. Falls back to the
/// plain mean when the spread is zero.
pub fn gaussian_weighted_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return mean;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return mean;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &v in values {
        let w = (-(v - mean).powi(2) / (2.0 * var)).exp();
        num += w * v;
        den += w;
    }
    num / den
}

fn ids_with_scores(data: &[UniformSeries], scores: Vec<f64>) -> Vec<RankEntry> {
    data.iter()
        .zip(scores)
        .map(|(x, s)| RankEntry::new(x.id(), s))
        .collect()
}

fn need(data: &[UniformSeries], n: usize) -> Result<()> {
    if data.len() < n {
        return Err(Error::TooFewSeries {
            needed: n,
            got: data.len(),
        });
    }
    Ok(())
}

/// Gaussian-weighted average of a series' best correlation to each other
/// series.
pub fn pn_means(data: &[UniformSeries]) -> Result<AnomalyRanking> {
    need(data, 3)?;
    let matrix = pairwise_max_corr(data)?;
    Ok(pn_means_from_matrix(data, &matrix)?.with_provenance(Provenance {
        method: Some(Method::PnMeans),
        ..Provenance::default()
    }))
}

/// PN-MEANS from a precomputed [`pairwise_max_corr`] matrix.
pub fn pn_means_from_matrix(data: &[UniformSeries], matrix: &[Vec<f64>]) -> Result<AnomalyRanking> {
    need(data, 3)?;
    let scores = matrix
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let others: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &v)| v)
                .collect();
            gaussian_weighted_mean(&others)
        })
        .collect();
    rank_all(ids_with_scores(data, scores))
}

/// Plain zero-shift correlation to the unit-normalized corpus mean.
pub fn protopapas_n(data: &[UniformSeries]) -> Result<AnomalyRanking> {
    need(data, 2)?;
    let d = data[0].d();
    let mut mean = vec![0.0; d];
    for x in data {
        if x.d() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: x.d(),
            });
        }
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(Error::Numerical("corpus mean is zero".into()));
    }
    for m in &mut mean {
        *m /= norm;
    }
    let scores = data
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(a, b)| a * b).sum())
        .collect();
    Ok(rank_all(ids_with_scores(data, scores))?.with_provenance(Provenance {
        method: Some(Method::ProtopapasN),
        ..Provenance::default()
    }))
}

/// Scores against `s` randomly drawn series used as pseudo-centroids.
///
/// A series never scores against itself when it was drawn as a reference,
/// unless it is the only reference. Without `gauss` the references are
/// weighted by the share of the corpus whose best reference they are; with
/// `gauss` each row is Gaussian-weighted as in [`pn_means`], which makes
/// `s = n` reproduce it.
pub fn rand_cc(data: &[UniformSeries], s: usize, seed: u64, gauss: bool) -> Result<AnomalyRanking> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if s == 0 || s > n {
        return Err(Error::SampleTooLarge { s, n });
    }
    let refs = crate::cluster::initial_indices(n, s, seed);
    let corr = Correlator::new(data[0].d())?;
    let spectra = corr.spectra(data)?;
    let ref_spectra: Vec<Spectrum> = refs.iter().map(|&i| spectra[i].clone()).collect();
    let mut self_ref = vec![None; n];
    for (j, &i) in refs.iter().enumerate() {
        self_ref[i] = Some(j);
    }
    let rows: Vec<Vec<PhaseMatch>> = spectra
        .par_iter()
        .map(|x| corr.alignments(&ref_spectra, x))
        .collect();
    let usable = |i: usize, j: usize| s == 1 || self_ref[i] != Some(j);

    let mut weights = vec![0.0; s];
    if !gauss {
        for (i, row) in rows.iter().enumerate() {
            let mut best: Option<usize> = None;
            for (j, m) in row.iter().enumerate() {
                if usable(i, j) && best.is_none_or(|b| m.corr > row[b].corr) {
                    best = Some(j);
                }
            }
            weights[best.expect("at least one usable reference")] += 1.0 / n as f64;
        }
    }
    let entries = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut best: Option<usize> = None;
            let mut vals = Vec::with_capacity(s);
            let mut ws = Vec::with_capacity(s);
            for (j, m) in row.iter().enumerate() {
                if usable(i, j) {
                    vals.push(m.corr);
                    ws.push(weights[j]);
                    if best.is_none_or(|b| m.corr > row[b].corr) {
                        best = Some(j);
                    }
                }
            }
            let score = if gauss {
                gaussian_weighted_mean(&vals)
            } else {
                let total: f64 = ws.iter().sum();
                if total > 0.0 {
                    vals.iter().zip(&ws).map(|(v, w)| v * w).sum::<f64>() / total
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            };
            let b = best.expect("at least one usable reference");
            RankEntry {
                id: data[i].id().to_string(),
                score,
                best_cluster: Some(b),
                best_shift: Some(row[b].shift),
            }
        })
        .collect();
    Ok(rank_all(entries)?.with_provenance(Provenance {
        method: Some(if gauss {
            Method::RandCcGauss
        } else {
            Method::RandCc
        }),
        seed,
        k: None,
        s: Some(s),
    }))
}

/// Pk-means with a single centroid, scored globally.
pub fn p1_mean(data: &[UniformSeries], seed: u64) -> Result<AnomalyRanking> {
    need(data, 2)?;
    let (model, _) = pkmeans(data, &ClusterConfig::new(1, seed))?;
    let scores = pcad_scores(data, &model, LocalRule::Closest)?;
    Ok(global_ranking(data, &scores)?.with_provenance(Provenance {
        method: Some(Method::P1Mean),
        seed,
        k: Some(1),
        s: None,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmeansMetric {
    /// Zero-shift Euclidean distance, reported as `1 - |x - c|^2 / 2`.
    Euclidean,
    /// Best cross correlation over all shifts.
    CrossCorrelation,
}

/// Scores against a centroid model without any phase search.
pub fn euclidean_scores(data: &[UniformSeries], model: &CentroidModel) -> Result<Vec<PcadScore>> {
    let Some(first) = data.first() else {
        return Ok(Vec::new());
    };
    check_model(model, first.d())?;
    Ok(data
        .par_iter()
        .map(|x| {
            let sims: Vec<PhaseMatch> = model
                .centroids
                .iter()
                .map(|c| PhaseMatch {
                    corr: 1.0 - 0.5 * x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
                    shift: 0,
                })
                .collect();
            pcad_from_matches(&sims, &model.proportions, LocalRule::Closest)
        })
        .collect())
}

/// Proportions of `data` closest to each centroid at zero shift.
pub fn refit_proportions_unshifted(model: &mut CentroidModel, data: &[UniformSeries]) -> Result<()> {
    let scores = euclidean_scores(data, model)?;
    let mut p = vec![0.0; model.k()];
    for s in &scores {
        p[s.best_cluster] += 1.0 / data.len() as f64;
    }
    model.proportions = p;
    Ok(())
}

/// k-means centroids scored either by Euclidean distance or by best cross
/// correlation.
pub fn kmeans_baselines(data: &[UniformSeries], k: usize, seed: u64, metric: KmeansMetric) -> Result<AnomalyRanking> {
    let (model, _) = kmeans(data, &ClusterConfig::new(k, seed))?;
    score_kmeans_model(data, &model, metric, seed)
}

pub fn score_kmeans_model(
    data: &[UniformSeries],
    model: &CentroidModel,
    metric: KmeansMetric,
    seed: u64,
) -> Result<AnomalyRanking> {
    let (scores, method) = match metric {
        KmeansMetric::Euclidean => (euclidean_scores(data, model)?, Method::KmeansEd),
        KmeansMetric::CrossCorrelation => (pcad_scores(data, model, LocalRule::Closest)?, Method::KmeansCc),
    };
    Ok(global_ranking(data, &scores)?.with_provenance(Provenance {
        method: Some(method),
        seed,
        k: Some(model.k()),
        s: None,
    }))
}

/// Brute-force rotation-invariant discords: each series' distance to its
/// nearest neighbour is `1 - best correlation`, and the stored score is its
/// negation so the farthest-neighbour series rank first. `m` sets how many
/// are reported.
pub fn ri_discord(data: &[UniformSeries], m: usize) -> Result<AnomalyRanking> {
    need(data, 2)?;
    let matrix = pairwise_max_corr(data)?;
    ri_discord_from_matrix(data, &matrix, m)
}

pub fn ri_discord_from_matrix(data: &[UniformSeries], matrix: &[Vec<f64>], m: usize) -> Result<AnomalyRanking> {
    need(data, 2)?;
    let entries = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut nn = if i == 0 { 1 } else { 0 };
            for (j, &v) in row.iter().enumerate() {
                if j != i && v > row[nn] {
                    nn = j;
                }
            }
            RankEntry {
                id: data[i].id().to_string(),
                score: -(1.0 - row[nn]),
                best_cluster: Some(nn),
                best_shift: None,
            }
        })
        .collect();
    Ok(rank(entries, m)?.with_provenance(Provenance {
        method: Some(Method::RiDiscord),
        ..Provenance::default()
    }))
}

/// How many clusters a centroid method fits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    /// Pick by BIC over this inclusive range.
    Range(usize, usize),
}

impl KChoice {
    pub fn candidates(&self) -> Vec<usize> {
        match *self {
            KChoice::Fixed(k) => vec![k],
            KChoice::Range(a, b) => (a..=b).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub seed: u64,
    pub k: KChoice,
    /// Number of series the centroid methods are fitted on; `None` uses the
    /// whole corpus. Proportions are always refitted on the whole corpus.
    pub sample: Option<usize>,
    /// Reference-set size for the RAND-CC methods. `None` uses the fitted
    /// PCAD `k`.
    pub refs: Option<usize>,
    pub restarts: usize,
    pub max_iter: usize,
    pub local_rule: LocalRule,
}

impl MethodConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            k: KChoice::Range(1, 10),
            sample: None,
            refs: None,
            restarts: 5,
            max_iter: 100,
            local_rule: LocalRule::Closest,
        }
    }
}

/// A fitted PCAD model with the clustering of its training sample.
#[derive(Debug, Clone)]
pub struct PcadFit {
    pub model: CentroidModel,
    pub state: ClusterState,
    pub sample: Vec<usize>,
    /// BIC per candidate `k`, when a range was searched.
    pub bic: Vec<crate::cluster::BicScore>,
}

/// Sub-seed stream used to draw the fitting sample.
const SAMPLE_STREAM: u64 = 0x5A4D_504C;

/// Indices of the fitting sample, in ascending order.
pub fn sample_indices(n: usize, sample: Option<usize>, seed: u64) -> Result<Vec<usize>> {
    match sample {
        None => Ok((0..n).collect()),
        Some(s) if s == 0 || s > n => Err(Error::SampleTooLarge { s, n }),
        Some(s) if s == n => Ok((0..n).collect()),
        Some(s) => {
            let mut idx = crate::cluster::initial_indices(n, s, derive_seed(seed, SAMPLE_STREAM));
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

fn fit_centroids(data: &[UniformSeries], cfg: &MethodConfig, algorithm: Algorithm) -> Result<PcadFit> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let idx = sample_indices(data.len(), cfg.sample, cfg.seed)?;
    let sample: Vec<UniformSeries> = idx.iter().map(|&i| data[i].clone()).collect();
    let select = SelectConfig::new(cfg.seed)
        .restarts(cfg.restarts)
        .max_iter(cfg.max_iter)
        .algorithm(algorithm);
    let ks: Vec<usize> = cfg.k.candidates().into_iter().filter(|&k| k <= sample.len()).collect();
    if ks.is_empty() {
        return Err(Error::KTooLarge {
            k: cfg.k.candidates().into_iter().min().unwrap_or(0),
            n: sample.len(),
        });
    }
    let sel = select_k(&sample, &ks, &select)?;
    let mut model = sel.model;
    match algorithm {
        Algorithm::PkMeans => model.refit_proportions(data)?,
        Algorithm::KMeans => refit_proportions_unshifted(&mut model, data)?,
    }
    Ok(PcadFit {
        model,
        state: sel.state,
        sample: idx,
        bic: if sel.scores.len() > 1 { sel.scores } else { Vec::new() },
    })
}

/// Pk-means on the (optionally sampled) corpus with `k` fixed or chosen by
/// BIC, proportions refitted on the full corpus.
pub fn fit_pcad(data: &[UniformSeries], cfg: &MethodConfig) -> Result<PcadFit> {
    fit_centroids(data, cfg, Algorithm::PkMeans)
}

/// Plain k-means counterpart of [`fit_pcad`].
pub fn fit_kmeans(data: &[UniformSeries], cfg: &MethodConfig) -> Result<PcadFit> {
    fit_centroids(data, cfg, Algorithm::KMeans)
}

/// Output of [`run_method`].
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub ranking: AnomalyRanking,
    pub model: Option<CentroidModel>,
    /// For PCAD local runs, one ranking per cluster.
    pub per_cluster: Vec<AnomalyRanking>,
    /// Per-series scores against the centroids (or, for the RAND-CC
    /// methods, the references), in input order. Empty for methods
    /// without centroids.
    pub scores: Vec<PcadScore>,
}

/// Runs one method end to end and reports its top `m`.
pub fn run_method(method: Method, data: &[UniformSeries], cfg: &MethodConfig, m: usize) -> Result<MethodRun> {
    if m > data.len() {
        return Err(Error::MTooLarge { m, n: data.len() });
    }
    let provenance = |k: Option<usize>, s: Option<usize>| Provenance {
        method: Some(method),
        seed: cfg.seed,
        k,
        s,
    };
    let plain = |ranking: AnomalyRanking| MethodRun {
        ranking,
        model: None,
        per_cluster: Vec::new(),
        scores: Vec::new(),
    };
    let run = match method {
        Method::PcadGlobal | Method::PcadLocal => {
            let fit = fit_pcad(data, cfg)?;
            let scores = pcad_scores(data, &fit.model, cfg.local_rule)?;
            let k = fit.model.k();
            let prov = provenance(Some(k), Some(fit.sample.len()));
            let (ranking, per_cluster) = if method == Method::PcadGlobal {
                (global_ranking(data, &scores)?, Vec::new())
            } else {
                let per = local_rankings_per_cluster(data, &scores, k)?
                    .into_iter()
                    .map(|r| r.with_provenance(prov.clone()))
                    .collect();
                (local_ranking(data, &scores)?, per)
            };
            MethodRun {
                ranking: ranking.with_provenance(prov),
                model: Some(fit.model),
                per_cluster,
                scores,
            }
        }
        Method::PnMeans => plain(pn_means(data)?),
        Method::ProtopapasN => plain(protopapas_n(data)?),
        Method::RandCc | Method::RandCcGauss => {
            let s = match (cfg.refs, &cfg.k) {
                (Some(s), _) => s,
                (None, KChoice::Fixed(k)) => *k,
                (None, KChoice::Range(..)) => fit_pcad(data, cfg)?.model.k(),
            };
            let seed = derive_seed(cfg.seed, REFS_STREAM);
            let mut r = rand_cc(data, s, seed, method == Method::RandCcGauss)?;
            r.provenance = provenance(None, Some(s));
            let refs = reference_model(data, s, seed)?;
            MethodRun {
                scores: pcad_scores(data, &refs, cfg.local_rule)?,
                model: Some(refs),
                ..plain(r)
            }
        }
        Method::P1Mean => {
            let one = MethodConfig {
                k: KChoice::Fixed(1),
                ..cfg.clone()
            };
            let fit = fit_pcad(data, &one)?;
            let scores = pcad_scores(data, &fit.model, LocalRule::Closest)?;
            MethodRun {
                ranking: global_ranking(data, &scores)?.with_provenance(provenance(Some(1), Some(fit.sample.len()))),
                model: Some(fit.model),
                per_cluster: Vec::new(),
                scores,
            }
        }
        Method::KmeansEd | Method::KmeansCc => {
            let fit = fit_kmeans(data, cfg)?;
            let metric = if method == Method::KmeansEd {
                KmeansMetric::Euclidean
            } else {
                KmeansMetric::CrossCorrelation
            };
            let ranking = score_kmeans_model(data, &fit.model, metric, cfg.seed)?
                .with_provenance(provenance(Some(fit.model.k()), Some(fit.sample.len())));
            let scores = match metric {
                KmeansMetric::Euclidean => euclidean_scores(data, &fit.model)?,
                KmeansMetric::CrossCorrelation => pcad_scores(data, &fit.model, cfg.local_rule)?,
            };
            MethodRun {
                ranking,
                model: Some(fit.model),
                per_cluster: Vec::new(),
                scores,
            }
        }
        Method::RiDiscord => plain(ri_discord(data, data.len())?),
    };
    let m_ranking = run.ranking.with_m(m)?;
    Ok(MethodRun {
        ranking: m_ranking,
        ..run
    })
}

/// Sub-seed stream for drawing RAND-CC references inside [`run_method`].
pub const REFS_STREAM: u64 = 0x5245_4653;

/// The references [`rand_cc`] draws for `(s, seed)`, as a model whose
/// proportions are the share of `data` closest to each reference.
pub fn reference_model(data: &[UniformSeries], s: usize, seed: u64) -> Result<CentroidModel> {
    let n = data.len();
    if s == 0 || s > n {
        return Err(Error::SampleTooLarge { s, n });
    }
    let refs = crate::cluster::initial_indices(n, s, seed);
    let mut model = CentroidModel::new(
        refs.iter().map(|&i| data[i].to_vec()).collect(),
        vec![1.0 / s as f64; s],
    )?;
    model.refit_proportions(data)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use crate::xcorr::{max_xcorr, rotate, xcorr_at};
    use rand::Rng;

    fn random_series(id: impl Into<String>, d: usize, r: &mut impl Rng) -> UniformSeries {
        let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        UniformSeries::from_values(id, &v).unwrap()
    }

    fn corpus(n: usize, d: usize, seed: u64) -> Vec<UniformSeries> {
        let mut r = rng(seed);
        (0..n).map(|i| random_series(format!("r{i}"), d, &mut r)).collect()
    }

    fn brute_max(x: &[f64], y: &[f64]) -> f64 {
        (0..x.len())
            .map(|t| xcorr_at(x, y, t).unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn shape(d: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..d).map(|j| f(j as f64 / d as f64)).collect()
    }

    fn pulse_corpus(n: usize, d: usize, seed: u64) -> Vec<UniformSeries> {
        let mut r = rng(seed);
        let base = shape(d, |t| if t < 0.2 { 1.0 } else { 0.0 });
        (0..n)
            .map(|i| {
                let v: Vec<f64> = base.iter().map(|b| b + 0.05 * r.random_range(-1.0..1.0)).collect();
                UniformSeries::from_values(format!("p{i}"), &rotate(&v, r.random_range(0..d))).unwrap()
            })
            .collect()
    }

    fn with_outlier(mut data: Vec<UniformSeries>, at: usize) -> Vec<UniformSeries> {
        let d = data[0].d();
        let out = UniformSeries::from_values("outlier", &shape(d, |t| (6.0 * std::f64::consts::PI * t).sin())).unwrap();
        data.insert(at, out);
        data
    }

    fn model(cents: Vec<Vec<f64>>, props: Vec<f64>) -> CentroidModel {
        CentroidModel::new(cents, props).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("pcad-global".parse::<Method>().unwrap(), Method::PcadGlobal);
        let err = "FOO".parse::<Method>().unwrap_err();
        assert!(err.to_string().contains("method"));
    }

    #[test]
    fn rank_examples() {
        let e = |id: &str, s: f64| RankEntry::new(id, s);
        let r = rank(vec![e("a", 0.1), e("b", 0.2), e("c", 0.3)], 2).unwrap();
        let ids: Vec<&str> = r.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(r.top().len(), 2);

        let r = rank(vec![e("x", 0.5), e("y", 0.5), e("z", 0.5)], 3).unwrap();
        let ids: Vec<&str> = r.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["x", "y", "z"]);

        assert!(matches!(rank(vec![e("a", 1.0)], 2), Err(Error::MTooLarge { m: 2, n: 1 })));
        assert!(rank(vec![e("a", 1.0), e("a", 2.0)], 1).is_err());
    }

    #[test]
    fn rank_matches_reference_sort() {
        let mut r = rng(3);
        let entries: Vec<RankEntry> = (0..200)
            .map(|i| RankEntry::new(format!("i{i}"), (r.random_range(0..20) as f64) / 10.0))
            .collect();
        let mut reference: Vec<(f64, usize)> = entries.iter().enumerate().map(|(i, e)| (e.score, i)).collect();
        reference.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let ranked = rank(entries.clone(), 10).unwrap();
        for (got, (_, i)) in ranked.entries.iter().zip(&reference) {
            assert_eq!(got.id, entries[*i].id);
        }
    }

    #[test]
    fn global_score_examples() {
        let data = corpus(4, 64, 1);
        let m1 = model(vec![data[0].to_vec()], vec![1.0]);
        let s = score_global(&data[1], &m1).unwrap();
        assert!((s - max_xcorr(&data[1], &data[0]).unwrap().corr).abs() < 1e-12);

        let m2 = model(vec![data[0].to_vec(), data[1].to_vec()], vec![1.0, 0.0]);
        assert!((score_global(&data[0], &m2).unwrap() - 1.0).abs() < 1e-12);

        let m3 = model(
            vec![data[0].to_vec(), data[1].to_vec(), data[2].to_vec()],
            vec![0.5, 0.3, 0.2],
        );
        let x = &data[3];
        let expect = 0.5 * brute_max(x, &data[0]) + 0.3 * brute_max(x, &data[1]) + 0.2 * brute_max(x, &data[2]);
        assert!((score_global(x, &m3).unwrap() - expect).abs() < 1e-9);

        let short = UniformSeries::from_values("s", &[1.0, -1.0, 2.0, 0.0]).unwrap();
        assert!(matches!(score_global(&short, &m3), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn local_score_examples() {
        let data = corpus(5, 64, 2);
        let m3 = model(
            vec![data[0].to_vec(), data[1].to_vec(), data[2].to_vec()],
            vec![0.2, 0.3, 0.5],
        );
        let (s, j) = score_local(&data[1], &m3).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(j, 1);

        let m1 = model(vec![data[0].to_vec()], vec![1.0]);
        let (s, _) = score_local(&data[3], &m1).unwrap();
        assert!((s - score_global(&data[3], &m1).unwrap()).abs() < 1e-15);

        for x in &data[3..] {
            let brute: Vec<f64> = m3.centroids.iter().map(|c| brute_max(x, c)).collect();
            let best = (0..3).max_by(|&a, &b| brute[a].total_cmp(&brute[b])).unwrap();
            let worst = (0..3).min_by(|&a, &b| brute[a].total_cmp(&brute[b])).unwrap();
            let (s, j) = score_local(x, &m3).unwrap();
            assert_eq!(j, best);
            assert!((s - brute[best]).abs() < 1e-9);
            let (s, j) = score_local_with(x, &m3, LocalRule::LiteralMin).unwrap();
            assert_eq!(j, worst);
            assert!((s - brute[worst]).abs() < 1e-9);
        }
    }

    #[test]
    fn scores_are_rotation_invariant_and_bounded() {
        let data = corpus(12, 64, 4);
        let m = model(vec![data[0].to_vec(), data[1].to_vec()], vec![0.4, 0.6]);
        let mut r = rng(5);
        for x in &data {
            let g = score_global(x, &m).unwrap();
            let l = score_local(x, &m).unwrap();
            assert!((-1.0..=1.0 + 1e-9).contains(&g));
            let moved = x.rotated(r.random_range(0..64));
            assert!((score_global(&moved, &m).unwrap() - g).abs() < 1e-12);
            let lm = score_local(&moved, &m).unwrap();
            assert!((lm.0 - l.0).abs() < 1e-12);
            assert_eq!(lm.1, l.1);
        }
    }

    #[test]
    fn pn_means_examples() {
        let x = corpus(1, 32, 6).remove(0);
        let same: Vec<UniformSeries> = (0..4).map(|i| x.clone().with_id(format!("c{i}"))).collect();
        let r = pn_means(&same).unwrap();
        let ids: Vec<&str> = r.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["c0", "c1", "c2", "c3"]);
        assert!(r.entries.iter().all(|e| (e.score - 1.0).abs() < 1e-12));

        let three = corpus(3, 32, 7);
        let r = pn_means(&three).unwrap();
        for (i, x) in three.iter().enumerate() {
            let others: Vec<f64> = (0..3).filter(|&j| j != i).map(|j| brute_max(x, &three[j])).collect();
            let mu = (others[0] + others[1]) / 2.0;
            let var = ((others[0] - mu).powi(2) + (others[1] - mu).powi(2)) / 1.0;
            let w: Vec<f64> = others.iter().map(|v| (-(v - mu).powi(2) / (2.0 * var)).exp()).collect();
            let expect = (w[0] * others[0] + w[1] * others[1]) / (w[0] + w[1]);
            let got = r.entries.iter().find(|e| e.id == x.id()).unwrap().score;
            assert!((got - expect).abs() < 1e-9);
        }

        let planted = with_outlier(pulse_corpus(20, 64, 8), 7);
        assert_eq!(pn_means(&planted).unwrap().entries[0].id, "outlier");
        assert!(matches!(pn_means(&three[..2]), Err(Error::TooFewSeries { .. })));
    }

    #[test]
    fn pn_means_is_permutation_equivariant() {
        let data = corpus(15, 32, 9);
        let a = pn_means(&data).unwrap();
        let mut rev = data.clone();
        rev.reverse();
        let b = pn_means(&rev).unwrap();
        for e in &a.entries {
            let f = b.entries.iter().find(|x| x.id == e.id).unwrap();
            assert!((e.score - f.score).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_matrix_is_symmetric() {
        let data = corpus(10, 32, 10);
        let m = pairwise_max_corr(&data).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(m[i][j], m[j][i]);
                if i != j {
                    assert!((m[i][j] - brute_max(&data[i], &data[j])).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn protopapas_examples() {
        let x = corpus(1, 32, 11).remove(0);
        let same: Vec<UniformSeries> = (0..3).map(|i| x.clone().with_id(format!("c{i}"))).collect();
        assert!(protopapas_n(&same).unwrap().entries.iter().all(|e| (e.score - 1.0).abs() < 1e-12));

        let y = UniformSeries::from_values("y", &shape(32, |t| (2.0 * std::f64::consts::PI * t).sin() + 0.5 * (4.0 * std::f64::consts::PI * t).cos())).unwrap();
        let mut mix = Vec::new();
        for i in 0..3 {
            mix.push(y.clone().with_id(format!("a{i}")));
            mix.push(y.rotated(16).with_id(format!("b{i}")));
        }
        let r = protopapas_n(&mix).unwrap();
        let a = r.entries.iter().find(|e| e.id == "a0").unwrap().score;
        let b = r.entries.iter().find(|e| e.id == "b0").unwrap().score;
        assert!((a - b).abs() < 1e-12);

        let data = corpus(9, 32, 12);
        let r = protopapas_n(&data).unwrap();
        let mut mean = vec![0.0; 32];
        for x in &data {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        for x in &data {
            let expect: f64 = x.iter().zip(&mean).map(|(a, b)| a * b / norm).sum();
            let got = r.entries.iter().find(|e| e.id == x.id()).unwrap().score;
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rand_cc_full_sample_matches_pn_means() {
        let data = corpus(12, 32, 13);
        let pn = pn_means(&data).unwrap();
        let rc = rand_cc(&data, 12, 99, true).unwrap();
        for e in &pn.entries {
            let f = rc.entries.iter().find(|x| x.id == e.id).unwrap();
            assert!((e.score - f.score).abs() < 1e-12);
        }
    }

    #[test]
    fn rand_cc_single_reference() {
        let data = corpus(8, 32, 14);
        for gauss in [false, true] {
            let r = rand_cc(&data, 1, 3, gauss).unwrap();
            let refi = crate::cluster::initial_indices(8, 1, 3)[0];
            for e in &r.entries {
                let x = data.iter().find(|x| x.id() == e.id).unwrap();
                let expect = max_xcorr(x, &data[refi]).unwrap().corr;
                assert!((e.score - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rand_cc_is_deterministic_and_checked() {
        let data = corpus(20, 32, 15);
        assert_eq!(rand_cc(&data, 5, 7, false).unwrap(), rand_cc(&data, 5, 7, false).unwrap());
        assert!(matches!(rand_cc(&data, 21, 7, false), Err(Error::SampleTooLarge { s: 21, n: 20 })));
    }

    #[test]
    fn p1_mean_examples() {
        let planted = with_outlier(pulse_corpus(15, 64, 16), 4);
        let r = p1_mean(&planted, 1).unwrap();
        assert_eq!(r.entries[0].id, "outlier");

        let data = pulse_corpus(6, 64, 17);
        let doubled: Vec<UniformSeries> = data
            .iter()
            .flat_map(|x| [x.clone(), x.clone().with_id(format!("{}b", x.id()))])
            .collect();
        let r = p1_mean(&doubled, 2).unwrap();
        for x in &data {
            let a = r.entries.iter().find(|e| e.id == x.id()).unwrap().score;
            let b = r.entries.iter().find(|e| e.id == format!("{}b", x.id())).unwrap().score;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn collapse_with_one_centroid() {
        let data = pulse_corpus(10, 64, 18);
        let (m, _) = pkmeans(&data, &ClusterConfig::new(1, 3)).unwrap();
        let scores = pcad_scores(&data, &m, LocalRule::Closest).unwrap();
        let p1 = p1_mean(&data, 3).unwrap();
        for (x, s) in data.iter().zip(&scores) {
            assert!((s.global - s.local).abs() < 1e-15);
            let e = p1.entries.iter().find(|e| e.id == x.id()).unwrap();
            assert!((e.score - s.global).abs() < 1e-15);
            assert!((s.global - max_xcorr(x, &m.centroids[0]).unwrap().corr).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_cc_agrees_with_pcad_on_synchronized_data() {
        let mut r = rng(19);
        let a = shape(64, |t| (-((t - 0.5) / 0.04).powi(2)).exp());
        let b = shape(64, |t| if t < 0.3 { 1.0 } else { 0.0 });
        let data: Vec<UniformSeries> = (0..20)
            .map(|i| {
                let base = if i % 2 == 0 { &a } else { &b };
                let v: Vec<f64> = base.iter().map(|x| x + 0.01 * r.random_range(-1.0..1.0)).collect();
                UniformSeries::from_values(format!("s{i}"), &v).unwrap()
            })
            .collect();
        // a seed whose initial centroids come from different shapes
        let seed = (0..)
            .find(|&s| {
                let idx = crate::cluster::initial_indices(20, 2, s);
                idx[0] % 2 != idx[1] % 2
            })
            .unwrap();
        let cfg = ClusterConfig::new(2, seed);
        let (km, _) = kmeans(&data, &cfg).unwrap();
        let (pk, pst) = pkmeans(&data, &cfg).unwrap();
        assert!(pst.phases.iter().all(|&p| p == 0));
        let kcc = score_kmeans_model(&data, &km, KmeansMetric::CrossCorrelation, 4).unwrap();
        let pg = global_ranking(&data, &pcad_scores(&data, &pk, LocalRule::Closest).unwrap()).unwrap();
        for e in &kcc.entries {
            let f = pg.entries.iter().find(|x| x.id == e.id).unwrap();
            assert!((e.score - f.score).abs() < 1e-6);
        }
    }

    #[test]
    fn kmeans_ed_examples() {
        let data = corpus(6, 32, 20);
        let m = model(vec![data[2].to_vec()], vec![1.0]);
        let ed = score_kmeans_model(&data, &m, KmeansMetric::Euclidean, 0).unwrap();
        assert!((ed.entries.iter().find(|e| e.id == data[2].id()).unwrap().score - 1.0).abs() < 1e-12);

        let two = model(vec![data[0].to_vec(), data[1].to_vec()], vec![0.5, 0.5]);
        let x = std::slice::from_ref(&data[3]);
        let moved = [data[3].rotated(5)];
        let ed0 = euclidean_scores(x, &two).unwrap()[0].global;
        let ed1 = euclidean_scores(&moved, &two).unwrap()[0].global;
        assert!((ed0 - ed1).abs() > 1e-6);
        let cc0 = pcad_scores(x, &two, LocalRule::Closest).unwrap()[0].global;
        let cc1 = pcad_scores(&moved, &two, LocalRule::Closest).unwrap()[0].global;
        assert!((cc0 - cc1).abs() < 1e-12);

        assert!(matches!(
            kmeans_baselines(&data, 7, 0, KmeansMetric::Euclidean),
            Err(Error::KTooLarge { .. })
        ));
    }

    #[test]
    fn ri_discord_examples() {
        let d = 32;
        let mut data: Vec<UniformSeries> = (0..6)
            .map(|i| {
                let v = shape(d, |t| (2.0 * std::f64::consts::PI * t).sin() + 0.1 * ((i as f64 + 1.0) * t).cos());
                UniformSeries::from_values(format!("s{i}"), &v).unwrap()
            })
            .collect();
        // only frequency 8 content: orthogonal to frequency-1 series at every shift
        let far = UniformSeries::from_values("far", &shape(d, |t| (16.0 * std::f64::consts::PI * t).sin())).unwrap();
        data.insert(2, far);
        let dup = data[4].clone().with_id("dup");
        data.push(dup);
        let r = ri_discord(&data, 3).unwrap();
        assert_eq!(r.entries[0].id, "far");
        assert_eq!(r.top().len(), 3);
        let n = r.entries.len();
        let last: Vec<&str> = r.entries[n - 2..].iter().map(|e| e.id.as_str()).collect();
        assert!(last.contains(&"dup") && last.contains(&data[4].id()));
        for e in &r.entries[n - 2..] {
            assert!(-e.score <= 1e-12);
        }
    }

    #[test]
    fn run_method_covers_every_method() {
        let data = with_outlier(pulse_corpus(24, 64, 21), 10);
        let mut cfg = MethodConfig::new(5);
        cfg.k = KChoice::Range(1, 3);
        cfg.restarts = 2;
        for method in Method::ALL {
            let run = run_method(method, &data, &cfg, 3).unwrap();
            assert_eq!(run.ranking.m, 3);
            assert_eq!(run.ranking.len(), data.len());
            assert_eq!(run.ranking.provenance.method, Some(method));
            if method != Method::PcadLocal && method != Method::KmeansEd && method != Method::ProtopapasN {
                assert!(
                    run.ranking.top().iter().any(|e| e.id == "outlier"),
                    "{method}: {:?}",
                    run.ranking.top()
                );
            }
        }
        cfg.sample = Some(12);
        let run = run_method(Method::PcadGlobal, &data, &cfg, 1).unwrap();
        let total: f64 = run.model.unwrap().proportions.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(run.ranking.provenance.s, Some(12));
    }
}
