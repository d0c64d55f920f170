//! `pcad`: ingest light curves, build synthetic corpora, fit centroid models,
//! score anomalies and run seeded experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcad_core::anomaly::{
    fit_kmeans, fit_pcad, global_ranking, local_ranking, pcad_scores, score_kmeans_model, KmeansMetric,
};
use pcad_core::eval::{mean_std, rank_change};
use pcad_core::experiment::{parse_k_choice, SampleSize};
use pcad_core::io::{
    ingest, read_corpus, read_model, read_ranking, write_corpus, write_labels, write_model, write_ranking,
};
use pcad_core::synth::Preset;
use pcad_core::{
    run_experiment, AnomalyRanking, Error, ExperimentConfig, KChoice, Method, MethodConfig, PreprocessConfig,
    Provenance, Result, UniformSeries,
};

#[derive(Parser)]
#[command(name = "pcad", version, about = "Phase-invariant anomaly detection for periodic time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fold, clean, resample and normalize the light curves listed in a manifest.
    Ingest(IngestArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
    /// Fit a centroid model and write it.
    Cluster(ClusterArgs),
    /// Rank a corpus with one method.
    Score(ScoreArgs),
    /// Run a full experiment from a config file.
    Bench(BenchArgs),
    /// Rank change between a benchmark ranking and a candidate ranking.
    Rankdiff(RankdiffArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// CSV manifest with `id,path,period,epoch` rows.
    manifest: PathBuf,
    #[arg(long, default_value_t = 256)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    spike_window: usize,
    #[arg(long, default_value_t = 5.0)]
    spike_k: f64,
    #[arg(long, default_value_t = 5)]
    smooth_window: usize,
    /// Directory for the normalized series files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// global, local or sample-study.
    #[arg(long, default_value = "global")]
    preset: String,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Model selection and fitting flags shared by `cluster` and `score`.
#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed number of centroids.
    #[arg(long, conflicts_with = "k_range")]
    k: Option<usize>,
    /// Candidate range searched by BIC, as `a..b`.
    #[arg(long)]
    k_range: Option<String>,
    /// Fitting sample, as a count or a percentage such as `20%`.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

#[derive(Args)]
struct ClusterArgs {
    /// Directory of normalized series.
    corpus: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
    /// Fit plain k-means instead of Pk-means.
    #[arg(long)]
    unshifted: bool,
    /// Directory for `model.csv` and `bic.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    corpus: PathBuf,
    #[arg(long, default_value = "PCAD_GLOBAL")]
    method: String,
    /// Score against a stored model instead of fitting one.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Reported anomalies; defaults to the whole corpus.
    #[arg(long)]
    m: Option<usize>,
    /// Reference-set size for RAND_CC and RAND_CC_GAUSS.
    #[arg(long)]
    refs: Option<usize>,
    #[command(flatten)]
    fit: FitArgs,
    /// Directory for `<METHOD>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// `key = value` config file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    k_range: Option<String>,
    #[arg(long)]
    sample: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankdiffArgs {
    benchmark: PathBuf,
    candidate: PathBuf,
    /// Compare the benchmark's top `m`; defaults to its stored `m`.
    #[arg(long)]
    m: Option<usize>,
    /// Directory for `rankdiff.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Score(a) => cmd_score(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Rankdiff(a) => cmd_rankdiff(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcad: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let cfg = PreprocessConfig {
        d: a.d,
        spike_window: a.spike_window,
        spike_k: a.spike_k,
        smooth_window: a.smooth_window,
    };
    let data = ingest(&a.manifest, &cfg)?;
    create_dir(&a.out)?;
    write_corpus(&a.out, &data)?;
    println!("ingested {} series into {}", data.len(), a.out.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let preset: Preset = a.preset.parse()?;
    let corpus = preset.spec(a.n, a.d, a.seed).generate()?;
    create_dir(&a.out)?;
    write_corpus(&a.out, &corpus.series)?;
    write_labels(&a.out.join("labels.csv"), &corpus.ids(), &corpus.labels, &corpus.outlier)?;
    println!(
        "wrote {} series ({} planted outliers) to {}",
        corpus.series.len(),
        corpus.outlier.iter().filter(|&&o| o).count(),
        a.out.display()
    );
    Ok(())
}

fn method_config(fit: &FitArgs, n: usize) -> Result<MethodConfig> {
    let mut mc = MethodConfig::new(fit.seed);
    if let Some(k) = fit.k {
        mc.k = parse_k_choice("k", &k.to_string())?;
    } else if let Some(r) = &fit.k_range {
        mc.k = parse_k_choice("k-range", r)?;
        if !matches!(mc.k, KChoice::Range(..)) {
            return Err(Error::Config(format!("k-range: expected a..b, got '{r}'")));
        }
    }
    if let Some(s) = &fit.sample {
        let size: SampleSize = s.parse()?;
        let s = size.resolve(n);
        mc.sample = (s < n).then_some(s);
    }
    mc.restarts = fit.restarts;
    mc.max_iter = fit.max_iter;
    Ok(mc)
}

fn load(dir: &Path) -> Result<Vec<UniformSeries>> {
    let data = read_corpus(dir)?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(data)
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let data = load(&a.corpus)?;
    let mc = method_config(&a.fit, data.len())?;
    let fit = if a.unshifted { fit_kmeans(&data, &mc)? } else { fit_pcad(&data, &mc)? };
    create_dir(&a.out)?;
    write_model(&a.out.join("model.csv"), &fit.model)?;
    if !fit.bic.is_empty() {
        let mut text = String::from("k,loglik,p,score\n");
        for b in &fit.bic {
            text.push_str(&format!("{},{:e},{},{:e}\n", b.k, b.loglik, b.p, b.score));
        }
        let path = a.out.join("bic.csv");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    println!(
        "k={} fitted on {} of {} series, {} iterations{}",
        fit.model.k(),
        fit.sample.len(),
        data.len(),
        fit.model.meta.iterations,
        if fit.model.meta.converged { "" } else { " (not converged)" }
    );
    Ok(())
}

fn stored_model_ranking(method: Method, data: &[UniformSeries], path: &Path, seed: u64) -> Result<AnomalyRanking> {
    let model = read_model(path)?;
    let k = Some(model.k());
    let ranking = match method {
        Method::PcadGlobal | Method::PcadLocal => {
            let scores = pcad_scores(data, &model, Default::default())?;
            let r = if method == Method::PcadGlobal {
                global_ranking(data, &scores)?
            } else {
                local_ranking(data, &scores)?
            };
            r.with_provenance(Provenance {
                method: Some(method),
                seed,
                k,
                s: None,
            })
        }
        Method::KmeansEd => score_kmeans_model(data, &model, KmeansMetric::Euclidean, seed)?,
        Method::KmeansCc => score_kmeans_model(data, &model, KmeansMetric::CrossCorrelation, seed)?,
        other => {
            return Err(Error::Config(format!("model: {} does not score against a centroid model", other.name())))
        }
    };
    Ok(ranking)
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let data = load(&a.corpus)?;
    let n = data.len();
    let m = a.m.unwrap_or(n);
    let ranking = match &a.model {
        Some(path) => stored_model_ranking(method, &data, path, a.fit.seed)?.with_m(m)?,
        None => {
            let mut mc = method_config(&a.fit, n)?;
            mc.refs = a.refs;
            pcad_core::run_method(method, &data, &mc, m)?.ranking
        }
    };
    create_dir(&a.out)?;
    let path = a.out.join(format!("{}.csv", method.name()));
    write_ranking(&path, &ranking)?;
    for (i, e) in ranking.top().iter().enumerate().take(10) {
        println!("{:>4} {} {:.6}", i + 1, e.id, e.score);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    let overrides = [
        ("seed", a.seed),
        ("d", a.d),
        ("k", a.k),
        ("k_range", a.k_range),
        ("sample", a.sample),
        ("m", a.m),
        ("method", a.method),
        ("out", a.out.map(|p| p.display().to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if cfg.out.is_none() {
        return Err(Error::Config("out: an output directory is required".into()));
    }
    let outcome = run_experiment(&cfg)?;
    println!("{:<14} {:>7} {:>10} {:>10} {:>12}", "method", "sample", "precision", "stdev", "rank change");
    let cell = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v:.3}") };
    for r in &outcome.reports {
        println!(
            "{:<14} {:>7} {:>10} {:>10} {:>12}",
            r.method,
            r.sample,
            cell(r.precision),
            cell(r.precision_std),
            cell(r.mean_rank_change)
        );
    }
    Ok(())
}

fn cmd_rankdiff(a: RankdiffArgs) -> Result<()> {
    let bench = read_ranking(&a.benchmark)?;
    let cand = read_ranking(&a.candidate)?;
    let m = a.m.unwrap_or(bench.m);
    let changes = rank_change(&bench, &cand, m)?;
    let as_f: Vec<f64> = changes.iter().map(|&c| c as f64).collect();
    let (mean, sd) = mean_std(&as_f);
    let mut text = String::from("rank,id,change\n");
    for (i, (e, c)) in bench.entries.iter().zip(&changes).enumerate() {
        text.push_str(&format!("{},{},{}\n", i + 1, e.id, c));
    }
    print!("{text}");
    println!("mean rank change {mean:.3} (sd {sd:.3}) over m={m}");
    if let Some(dir) = a.out {
        create_dir(&dir)?;
        let path = dir.join("rankdiff.csv");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
