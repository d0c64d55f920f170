//! Labeled synthetic corpora built from periodic shape templates.
//!
//! Every instance gets its own shape jitter, noise level and uniformly random
//! circular phase, then is normalized. Labels are kept beside the corpus for
//! evaluation only.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::rng;
use crate::series::{normalize, UniformSeries};
use crate::xcorr::rotate;

/// Template families, each a function of phase `t` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `sin(2 pi t) + harmonic * sin(4 pi t)`.
    Sinusoid { harmonic: f64 },
    /// Linear rise over `rise` of the cycle, linear fall over the rest.
    Sawtooth { rise: f64 },
    /// High for the first `duty` of the cycle.
    SquarePulse { duty: f64 },
    /// Two Gaussian dips half a cycle apart, the second `secondary` deep.
    DoubleDip { width: f64, secondary: f64 },
    /// Trapezoid: ramps of length `ramp` around a flat top of length `top`.
    Plateau { top: f64, ramp: f64 },
}

impl Shape {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            Shape::Sinusoid { harmonic } => (2.0 * PI * t).sin() + harmonic * (4.0 * PI * t).sin(),
            Shape::Sawtooth { rise } => {
                if t < rise {
                    t / rise
                } else {
                    1.0 - (t - rise) / (1.0 - rise)
                }
            }
            Shape::SquarePulse { duty } => f64::from(u8::from(t < duty)),
            Shape::DoubleDip { width, secondary } => {
                let dip = |c: f64| {
                    let mut dt = (t - c).abs();
                    dt = dt.min(1.0 - dt);
                    (-(dt / width).powi(2) / 2.0).exp()
                };
                -dip(0.25) - secondary * dip(0.75)
            }
            Shape::Plateau { top, ramp } => {
                if t < ramp {
                    t / ramp
                } else if t < ramp + top {
                    1.0
                } else if t < 2.0 * ramp + top {
                    1.0 - (t - ramp - top) / ramp
                } else {
                    0.0
                }
            }
        }
    }

    /// Copy with the shape parameter scaled by `factor`, kept in range.
    fn scaled(&self, factor: f64) -> Shape {
        let clamp = |v: f64, lo: f64, hi: f64| v.clamp(lo, hi);
        match *self {
            Shape::Sinusoid { harmonic } => Shape::Sinusoid {
                harmonic: harmonic * factor,
            },
            Shape::Sawtooth { rise } => Shape::Sawtooth {
                rise: clamp(rise * factor, 0.02, 0.98),
            },
            Shape::SquarePulse { duty } => Shape::SquarePulse {
                duty: clamp(duty * factor, 0.02, 0.98),
            },
            Shape::DoubleDip { width, secondary } => Shape::DoubleDip {
                width: clamp(width * factor, 0.005, 0.2),
                secondary,
            },
            Shape::Plateau { top, ramp } => Shape::Plateau {
                top: clamp(top * factor, 0.0, 0.9),
                ramp: ramp.min((1.0 - top * factor) / 2.0).max(0.01),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Sinusoid { harmonic } => harmonic.is_finite(),
            Shape::Sawtooth { rise } => rise > 0.0 && rise < 1.0,
            Shape::SquarePulse { duty } => duty > 0.0 && duty < 1.0,
            Shape::DoubleDip { width, secondary } => width > 0.0 && secondary.is_finite(),
            Shape::Plateau { top, ramp } => top >= 0.0 && ramp > 0.0 && top + 2.0 * ramp <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadSpec(format!("shape parameters out of range: {self:?}")))
        }
    }
}

/// One class of the mix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub label: String,
    pub shape: Shape,
    pub amplitude: f64,
    /// Noise standard deviation range; each instance draws its level
    /// log-uniformly from it.
    pub noise: (f64, f64),
    /// Standard deviation of the relative shape-parameter jitter.
    pub jitter: f64,
}

impl ClassSpec {
    pub fn new(label: impl Into<String>, shape: Shape) -> Self {
        Self {
            label: label.into(),
            shape,
            amplitude: 1.0,
            noise: (0.0, 0.0),
            jitter: 0.0,
        }
    }

    pub fn noise(mut self, lo: f64, hi: f64) -> Self {
        self.noise = (lo, hi);
        self
    }

    pub fn jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// One unnormalized, unrotated instance.
    fn instance(&self, d: usize, r: &mut impl Rng) -> Vec<f64> {
        let shape = if self.jitter > 0.0 {
            let z: f64 = Normal::new(0.0, self.jitter).expect("finite jitter").sample(r);
            self.shape.scaled((1.0 + z).max(0.1))
        } else {
            self.shape
        };
        let (lo, hi) = self.noise;
        let sigma = if hi > lo && lo > 0.0 {
            (lo.ln() + r.random::<f64>() * (hi.ln() - lo.ln())).exp()
        } else {
            lo.max(hi)
        };
        let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite noise");
        (0..d)
            .map(|j| {
                let v = self.amplitude * shape.eval(j as f64 / d as f64);
                if sigma > 0.0 {
                    v + noise.sample(r)
                } else {
                    v
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub normal: Vec<(ClassSpec, f64)>,
    pub outliers: Vec<(ClassSpec, f64)>,
    pub total_n: usize,
    pub d: usize,
    pub seed: u64,
}

/// A corpus with its hidden labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub series: Vec<UniformSeries>,
    pub labels: Vec<String>,
    pub outlier: Vec<bool>,
}

impl LabeledCorpus {
    pub fn ids(&self) -> Vec<String> {
        self.series.iter().map(|x| x.id().to_string()).collect()
    }

    pub fn outlier_ids(&self) -> Vec<String> {
        self.series
            .iter()
            .zip(&self.outlier)
            .filter(|(_, &o)| o)
            .map(|(x, _)| x.id().to_string())
            .collect()
    }

    pub fn count(&self, label: &str) -> usize {
        self.labels.iter().filter(|l| *l == label).count()
    }

    pub fn label_of(&self, id: &str) -> Option<&str> {
        self.series
            .iter()
            .position(|x| x.id() == id)
            .map(|i| self.labels[i].as_str())
    }
}

/// Integer counts for `fractions` of `n` by largest remainder; ties go to
/// the earlier class.
pub fn largest_remainder(fractions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.total_n < 20 {
            return Err(Error::BadSpec(format!("total_n must be at least 20, got {}", self.total_n)));
        }
        if !self.d.is_power_of_two() {
            return Err(Error::BadSpec(format!("d must be a power of two, got {}", self.d)));
        }
        if self.normal.is_empty() || self.outliers.is_empty() {
            return Err(Error::BadSpec("need at least one normal and one outlier class".into()));
        }
        let all = || self.normal.iter().chain(&self.outliers);
        let total: f64 = all().map(|(_, f)| f).sum();
        if (total - 1.0).abs() > 1e-9 || all().any(|(_, f)| !(*f >= 0.0)) {
            return Err(Error::BadSpec(format!("class fractions must be nonnegative and sum to 1, got {total}")));
        }
        for (c, _) in all() {
            c.shape.validate()?;
            if !(c.noise.0 >= 0.0 && c.noise.1 >= 0.0 && c.jitter >= 0.0) {
                return Err(Error::BadSpec(format!("class {}: negative noise or jitter", c.label)));
            }
        }
        for (o, _) in &self.outliers {
            if let Some((n, _)) = self.normal.iter().find(|(n, _)| n.label == o.label || (n.shape == o.shape && n.noise == o.noise && n.jitter == o.jitter && n.amplitude == o.amplitude)) {
                return Err(Error::BadSpec(format!(
                    "outlier class {} is the same as normal class {}",
                    o.label, n.label
                )));
            }
        }
        let mut labels: Vec<&str> = all().map(|(c, _)| c.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.normal.len() + self.outliers.len() {
            return Err(Error::BadSpec("class labels must be unique".into()));
        }
        if self.counts().iter().skip(self.normal.len()).sum::<usize>() == 0 {
            return Err(Error::BadSpec("mix has no outliers at this size".into()));
        }
        Ok(())
    }

    /// Per-class counts, normal classes first.
    pub fn counts(&self) -> Vec<usize> {
        let fractions: Vec<f64> = self.normal.iter().chain(&self.outliers).map(|(_, f)| *f).collect();
        largest_remainder(&fractions, self.total_n)
    }

    pub fn generate(&self) -> Result<LabeledCorpus> {
        self.validate()?;
        let mut r = rng(self.seed);
        let counts = self.counts();
        let classes: Vec<(&ClassSpec, bool)> = self
            .normal
            .iter()
            .map(|(c, _)| (c, false))
            .chain(self.outliers.iter().map(|(c, _)| (c, true)))
            .collect();
        let mut rows: Vec<(Vec<f64>, String, bool)> = Vec::with_capacity(self.total_n);
        for ((class, is_out), &count) in classes.iter().zip(&counts) {
            for _ in 0..count {
                let v = class.instance(self.d, &mut r);
                let shift = r.random_range(0..self.d);
                rows.push((rotate(&v, shift), class.label.clone(), *is_out));
            }
        }
        rows.shuffle(&mut r);
        let width = (self.total_n.max(2) - 1).to_string().len();
        let mut out = LabeledCorpus {
            series: Vec::with_capacity(rows.len()),
            labels: Vec::with_capacity(rows.len()),
            outlier: Vec::with_capacity(rows.len()),
        };
        for (i, (v, label, is_out)) in rows.into_iter().enumerate() {
            let values = normalize(&v).map_err(|_| Error::BadSpec(format!("class {label} produced a constant series")))?;
            out.series.push(UniformSeries::new(format!("s{i:0width$}"), values)?);
            out.labels.push(label);
            out.outlier.push(is_out);
        }
        Ok(out)
    }

    /// Normal class each outlier class is paired with for local
    /// evaluation: the one listed at the same position.
    pub fn local_pairs(&self) -> Vec<(String, String)> {
        self.normal
            .iter()
            .zip(&self.outliers)
            .map(|((n, _), (o, _))| (n.label.clone(), o.label.clone()))
            .collect()
    }
}

/// Built-in experiment geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Two similar normal classes and one dissimilar outlier class, 95/5.
    Global,
    /// Two dissimilar normal classes, each with a similar outlier class.
    Local,
    /// One jittered sawtooth population with a narrow noise band and 1%
    /// double-dip outliers. Used to study how sample size affects agreement
    /// with the pairwise benchmark.
    SampleStudy,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(Preset::Global),
            "local" => Ok(Preset::Local),
            "sample-study" | "sample_study" => Ok(Preset::SampleStudy),
            other => Err(Error::Config(format!("preset: unknown preset '{other}'"))),
        }
    }
}

impl Preset {
    pub fn spec(self, total_n: usize, d: usize, seed: u64) -> MixSpec {
        match self {
            Preset::Global => MixSpec {
                normal: vec![
                    (
                        ClassSpec::new("ceph", Shape::SquarePulse { duty: 0.08 })
                            .noise(0.05, 0.15)
                            .jitter(0.15),
                        0.475,
                    ),
                    (
                        ClassSpec::new("rrl", Shape::Plateau { top: 0.04, ramp: 0.03 })
                            .noise(0.05, 0.15)
                            .jitter(0.15),
                        0.475,
                    ),
                ],
                outliers: vec![(
                    ClassSpec::new("eb", Shape::SquarePulse { duty: 0.35 })
                        .noise(0.25, 0.6)
                        .jitter(0.15),
                    0.05,
                )],
                total_n,
                d,
                seed,
            },
            Preset::Local => MixSpec {
                normal: vec![
                    (
                        ClassSpec::new("triangle", Shape::Sawtooth { rise: 0.5 })
                            .noise(0.05, 0.1)
                            .jitter(0.05),
                        0.475,
                    ),
                    (
                        ClassSpec::new("pulse", Shape::SquarePulse { duty: 0.1 })
                            .noise(0.05, 0.1)
                            .jitter(0.05),
                        0.475,
                    ),
                ],
                outliers: vec![
                    (
                        ClassSpec::new("saw", Shape::Sawtooth { rise: 0.15 })
                            .noise(0.05, 0.1)
                            .jitter(0.05),
                        0.025,
                    ),
                    (
                        ClassSpec::new("wide", Shape::SquarePulse { duty: 0.15 })
                            .noise(0.05, 0.1)
                            .jitter(0.05),
                        0.025,
                    ),
                ],
                total_n,
                d,
                seed,
            },
            Preset::SampleStudy => MixSpec {
                normal: vec![(
                    ClassSpec::new("ceph", Shape::Sawtooth { rise: 0.25 })
                        .noise(0.1, 0.15)
                        .jitter(0.1),
                    0.99,
                )],
                outliers: vec![(
                    ClassSpec::new("eb", Shape::DoubleDip { width: 0.04, secondary: 0.6 })
                        .noise(0.1, 0.15)
                        .jitter(0.3),
                    0.01,
                )],
                total_n,
                d,
                seed,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xcorr::max_xcorr;

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(&[0.475, 0.475, 0.05], 100), vec![48, 47, 5]);
        assert_eq!(largest_remainder(&[0.95, 0.05], 100), vec![95, 5]);
        assert_eq!(largest_remainder(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[0.5, 0.5], 7).iter().sum::<usize>(), 7);
    }

    #[test]
    fn class_counts_for_a_95_5_mix() {
        let spec = MixSpec {
            normal: vec![
                (ClassSpec::new("sin", Shape::Sinusoid { harmonic: 0.0 }), 0.475),
                (ClassSpec::new("saw", Shape::Sawtooth { rise: 0.3 }), 0.475),
            ],
            outliers: vec![(ClassSpec::new("sq", Shape::SquarePulse { duty: 0.2 }), 0.05)],
            total_n: 100,
            d: 64,
            seed: 1,
        };
        let c = spec.generate().unwrap();
        assert_eq!(c.outlier.iter().filter(|&&o| o).count(), 5);
        assert_eq!(c.series.len(), 100);
        assert_eq!(c.count("sin") + c.count("saw"), 95);
    }

    #[test]
    fn generation_is_deterministic() {
        for p in [Preset::Global, Preset::Local, Preset::SampleStudy] {
            let a = p.spec(60, 64, 5).generate().unwrap();
            let b = p.spec(60, 64, 5).generate().unwrap();
            assert_eq!(a, b);
            let c = p.spec(60, 64, 6).generate().unwrap();
            assert_ne!(a.series, c.series);
        }
    }

    #[test]
    fn noiseless_classes_are_self_similar() {
        let shapes = [
            Shape::Sinusoid { harmonic: 0.3 },
            Shape::Sawtooth { rise: 0.2 },
            Shape::SquarePulse { duty: 0.25 },
            Shape::DoubleDip { width: 0.05, secondary: 0.5 },
            Shape::Plateau { top: 0.2, ramp: 0.1 },
        ];
        for (i, shape) in shapes.into_iter().enumerate() {
            let spec = MixSpec {
                normal: vec![(ClassSpec::new("a", shape), 0.9)],
                outliers: vec![(ClassSpec::new("b", Shape::Sinusoid { harmonic: 2.0 + i as f64 }), 0.1)],
                total_n: 30,
                d: 128,
                seed: i as u64,
            };
            let c = spec.generate().unwrap();
            let normals: Vec<&UniformSeries> = c.series.iter().zip(&c.outlier).filter(|(_, o)| !**o).map(|(s, _)| s).collect();
            for a in &normals {
                for b in &normals {
                    assert!(max_xcorr(a, b).unwrap().corr >= 1.0 - 1e-6, "{shape:?}");
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let good = Preset::Global.spec(100, 64, 1);
        assert!(good.validate().is_ok());

        let mut s = good.clone();
        s.total_n = 10;
        assert!(matches!(s.validate(), Err(Error::BadSpec(_))));

        let mut s = good.clone();
        s.outliers[0].0 = s.normal[0].0.clone();
        assert!(matches!(s.validate(), Err(Error::BadSpec(_))));

        let mut s = good.clone();
        s.outliers[0].0.label = "other".into();
        s.outliers[0].0.shape = s.normal[1].0.shape;
        s.outliers[0].0.noise = s.normal[1].0.noise;
        s.outliers[0].0.jitter = s.normal[1].0.jitter;
        assert!(s.validate().is_err());

        let mut s = good.clone();
        s.normal[0].1 = 0.5;
        assert!(s.validate().is_err());

        let mut s = good.clone();
        s.outliers.clear();
        assert!(s.validate().is_err());

        let mut s = good;
        s.outliers[0].1 = 0.001;
        s.normal[0].1 = 0.474 + 0.05;
        assert!(s.validate().is_err());
    }
}
