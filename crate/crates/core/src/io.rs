//! Plain-text file formats: uniform series, raw light curves, manifests,
//! centroid models and rankings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::anomaly::{AnomalyRanking, Method, Provenance, RankEntry};
use crate::cluster::CentroidModel;
use crate::error::{Error, Result};
use crate::series::{normalize, preprocess, resample, PhasePoint, PreprocessConfig, RawSeries, Sample, UniformSeries};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, field: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{field}: cannot parse '{}'", s.trim())))
}

/// `key=value` pairs of a `#` header line.
fn header_fields(line: &str) -> Vec<(&str, &str)> {
    line.trim_start_matches('#')
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect()
}

fn field<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Option<&'a str> {
    fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

const SERIES_TAG: &str = "# id=";

pub fn format_series(x: &UniformSeries) -> String {
    let mut out = format!("# id={} d={}\n", x.id(), x.d());
    for v in x.iter() {
        // shortest representation that parses back to the same f64
        out.push_str(&format!("{v:e}\n"));
    }
    out
}

pub fn write_series(path: &Path, x: &UniformSeries) -> Result<()> {
    write(path, &format_series(x))
}

fn series_values(path: &Path, text: &str) -> Result<(String, Vec<f64>)> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let fields = header_fields(first);
    let id = field(&fields, "id")
        .ok_or_else(|| Error::parse(path, 1, "header lacks id="))?
        .to_string();
    let d: Option<usize> = field(&fields, "d").map(|d| num(path, 1, "d", d)).transpose()?;
    let mut values = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(num(path, i + 1, "value", line)?);
    }
    if let Some(d) = d {
        if d != values.len() {
            return Err(Error::parse(path, 1, format!("header says d={d} but file has {} values", values.len())));
        }
    }
    Ok((id, values))
}

/// Reads a series file written by [`write_series`] exactly as stored.
pub fn read_series(path: &Path) -> Result<UniformSeries> {
    let (id, values) = series_values(path, &read(path)?)?;
    UniformSeries::new(id, values)
}

pub fn is_series_file(text: &str) -> bool {
    text.trim_start().starts_with(SERIES_TAG)
}

/// Treats a stored series as already folded: samples sit at phases
/// `j / len`, and are resampled to `d` points and normalized.
pub fn series_as_folded(path: &Path, d: usize) -> Result<UniformSeries> {
    let (id, values) = series_values(path, &read(path)?)?;
    folded_values(id, &values, d)
}

fn folded_values(id: String, values: &[f64], d: usize) -> Result<UniformSeries> {
    let len = values.len();
    let points: Vec<PhasePoint> = values
        .iter()
        .enumerate()
        .map(|(j, &mag)| PhasePoint {
            phase: j as f64 / len as f64,
            mag,
        })
        .collect();
    let grid = resample(&points, d)?;
    UniformSeries::new(id, normalize(&grid)?)
}

/// Writes one file per series, named `<id>.csv`.
pub fn write_corpus(dir: &Path, data: &[UniformSeries]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    data.iter()
        .map(|x| {
            let p = dir.join(format!("{}.csv", x.id()));
            write_series(&p, x)?;
            Ok(p)
        })
        .collect()
}

/// Reads every `*.csv` series file in `dir` in file-name order. Files that
/// are not series files (such as `labels.csv`) are skipped.
pub fn read_corpus(dir: &Path) -> Result<Vec<UniformSeries>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = read(&p)?;
        if is_series_file(&text) {
            let (id, values) = series_values(&p, &text)?;
            out.push(UniformSeries::new(id, values)?);
        }
    }
    Ok(out)
}

/// `time,magnitude[,error]` rows; `#` lines and a non-numeric first row are
/// skipped. The id is the file stem.
pub fn read_raw(path: &Path) -> Result<RawSeries> {
    let text = read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut samples = Vec::new();
    let mut first_data = true;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if first_data && cols[0].parse::<f64>().is_err() {
            first_data = false;
            continue;
        }
        first_data = false;
        if cols.len() < 2 || cols.len() > 3 {
            return Err(Error::parse(path, i + 1, format!("expected 2 or 3 columns, found {}", cols.len())));
        }
        let err = match cols.get(2) {
            Some(e) if !e.is_empty() => Some(num(path, i + 1, "error", e)?),
            _ => None,
        };
        samples.push(Sample {
            t: num(path, i + 1, "time", cols[0])?,
            mag: num(path, i + 1, "magnitude", cols[1])?,
            err,
        });
    }
    RawSeries::new(id, samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub path: PathBuf,
    pub period: Option<f64>,
    pub epoch: f64,
}

/// `id,path,period,epoch` rows, paths relative to the manifest. A header row
/// starting with `id` and `#` lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && cols[0].eq_ignore_ascii_case("id") {
            continue;
        }
        if cols.len() < 2 {
            return Err(Error::parse(path, i + 1, "expected id,path,period,epoch"));
        }
        let period = match cols.get(2) {
            Some(p) if !p.is_empty() => Some(num::<f64>(path, i + 1, "period", p)?),
            _ => None,
        };
        let epoch = match cols.get(3) {
            Some(e) if !e.is_empty() => num(path, i + 1, "epoch", e)?,
            _ => 0.0,
        };
        rows.push(ManifestRow {
            id: cols[0].to_string(),
            path: base.join(cols[1]),
            period,
            epoch,
        });
    }
    Ok(rows)
}

/// Loads and preprocesses every manifest entry, in manifest order. Files in
/// the uniform series format are taken as already folded and only
/// resampled and normalized; raw light curves need a positive period.
pub fn ingest(manifest: &Path, cfg: &PreprocessConfig) -> Result<Vec<UniformSeries>> {
    cfg.validate()?;
    read_manifest(manifest)?
        .into_iter()
        .map(|row| {
            let text = read(&row.path)?;
            if is_series_file(&text) {
                let (_, values) = series_values(&row.path, &text)?;
                return folded_values(row.id, &values, cfg.d);
            }
            let period = row
                .period
                .filter(|p| *p > 0.0 && p.is_finite())
                .ok_or_else(|| Error::MissingPeriod(row.id.clone()))?;
            let mut raw = read_raw(&row.path)?;
            raw.id = row.id.clone();
            preprocess(&raw.with_period(period, row.epoch)?, cfg)
        })
        .collect()
}

pub fn format_model(model: &CentroidModel) -> String {
    let mut out = format!(
        "# k={} d={} n={} seed={}\n",
        model.k(),
        model.d(),
        model.meta.n,
        model.meta.seed
    );
    for (j, (c, p)) in model.centroids.iter().zip(&model.proportions).enumerate() {
        out.push_str(&format!("c{j},{p:e}"));
        for v in c {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_model(path: &Path, model: &CentroidModel) -> Result<()> {
    write(path, &format_model(model))
}

pub fn read_model(path: &Path) -> Result<CentroidModel> {
    let text = read(path)?;
    let mut centroids = Vec::new();
    let mut proportions = Vec::new();
    let (mut n, mut seed) = (0, 0);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let f = header_fields(line);
            if let Some(v) = field(&f, "n") {
                n = num(path, i + 1, "n", v)?;
            }
            if let Some(v) = field(&f, "seed") {
                seed = num(path, i + 1, "seed", v)?;
            }
            continue;
        }
        let mut cols = line.split(',');
        let _label = cols.next();
        let p = cols
            .next()
            .ok_or_else(|| Error::parse(path, i + 1, "missing proportion"))?;
        proportions.push(num(path, i + 1, "proportion", p)?);
        centroids.push(
            cols.map(|v| num(path, i + 1, "centroid value", v))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    let mut model = CentroidModel::new(centroids, proportions)?;
    model.meta.n = n;
    model.meta.seed = seed;
    Ok(model)
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

pub fn format_ranking(r: &AnomalyRanking) -> String {
    let p = &r.provenance;
    let mut out = format!(
        "# method={} m={} seed={} k={} s={}\nrank,id,score,best_cluster,best_shift\n",
        p.method.map_or("-", Method::name),
        r.m,
        p.seed,
        opt(p.k),
        opt(p.s)
    );
    for (i, e) in r.entries.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{:e},{},{}\n",
            i + 1,
            e.id,
            e.score,
            e.best_cluster.map(|v| v.to_string()).unwrap_or_default(),
            e.best_shift.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    out
}

pub fn write_ranking(path: &Path, r: &AnomalyRanking) -> Result<()> {
    write(path, &format_ranking(r))
}

pub fn read_ranking(path: &Path) -> Result<AnomalyRanking> {
    let text = read(path)?;
    let mut provenance = Provenance::default();
    let mut m = None;
    let mut entries = Vec::new();
    let opt_usize = |i: usize, name: &str, v: &str| -> Result<Option<usize>> {
        if v.is_empty() || v == "-" {
            Ok(None)
        } else {
            num(path, i + 1, name, v).map(Some)
        }
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let f = header_fields(line);
            if let Some(v) = field(&f, "method").filter(|v| *v != "-") {
                provenance.method = Some(v.parse()?);
            }
            if let Some(v) = field(&f, "m") {
                m = Some(num(path, i + 1, "m", v)?);
            }
            if let Some(v) = field(&f, "seed") {
                provenance.seed = num(path, i + 1, "seed", v)?;
            }
            if let Some(v) = field(&f, "k") {
                provenance.k = opt_usize(i, "k", v)?;
            }
            if let Some(v) = field(&f, "s") {
                provenance.s = opt_usize(i, "s", v)?;
            }
            continue;
        }
        if line.starts_with("rank,") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(Error::parse(path, i + 1, format!("expected 5 columns, found {}", cols.len())));
        }
        let rank: usize = num(path, i + 1, "rank", cols[0])?;
        if rank != entries.len() + 1 {
            return Err(Error::parse(path, i + 1, format!("rank {rank} out of order")));
        }
        entries.push(RankEntry {
            id: cols[1].to_string(),
            score: num(path, i + 1, "score", cols[2])?,
            best_cluster: opt_usize(i, "best_cluster", cols[3])?,
            best_shift: opt_usize(i, "best_shift", cols[4])?,
        });
    }
    let n = entries.len();
    let m = m.unwrap_or(n);
    if m > n {
        return Err(Error::MTooLarge { m, n });
    }
    Ok(AnomalyRanking {
        entries,
        m,
        provenance,
    })
}

/// Class label of every synthetic series.
pub fn write_labels(path: &Path, ids: &[String], labels: &[String], outlier: &[bool]) -> Result<()> {
    let mut out = String::from("id,label,outlier\n");
    for ((id, l), o) in ids.iter().zip(labels).zip(outlier) {
        out.push_str(&format!("{id},{l},{}\n", u8::from(*o)));
    }
    write(path, &out)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::rank;

    fn series(id: &str, d: usize, seed: u64) -> UniformSeries {
        let v: Vec<f64> = (0..d)
            .map(|j| ((j as f64 * 0.37 + seed as f64).sin() * 3.1).cos() + j as f64 * 1e-3)
            .collect();
        UniformSeries::from_values(id, &v).unwrap()
    }

    #[test]
    fn series_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x = series("star-1", 64, 1);
        let p = dir.path().join("x.csv");
        write_series(&p, &x).unwrap();
        assert_eq!(read_series(&p).unwrap(), x);
        let again = series_as_folded(&p, 64).unwrap();
        for (a, b) in again.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn corpus_reads_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        let data = vec![series("b", 32, 1), series("a", 32, 2), series("c", 32, 3)];
        write_corpus(dir.path(), &data).unwrap();
        fs::write(dir.path().join("labels.csv"), "id,label,outlier\n").unwrap();
        let back = read_corpus(dir.path()).unwrap();
        let ids: Vec<&str> = back.iter().map(|x| x.id()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn raw_and_manifest_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let mut raw = String::from("time,magnitude,error\n");
        for i in 0..400 {
            let t = i as f64 * 0.173;
            let phase = (t / 2.5).fract();
            raw.push_str(&format!("{t},{},0.01\n", (2.0 * std::f64::consts::PI * phase).sin()));
        }
        fs::write(dir.path().join("v1.csv"), &raw).unwrap();
        fs::write(dir.path().join("v2.csv"), &raw).unwrap();
        let folded = series("pre", 64, 4);
        write_series(&dir.path().join("pre.csv"), &folded).unwrap();

        let m = dir.path().join("manifest.csv");
        fs::write(&m, "id,path,period,epoch\nstar1,v1.csv,2.5,0\npre,pre.csv,,\n").unwrap();
        let cfg = PreprocessConfig {
            d: 64,
            ..PreprocessConfig::default()
        };
        let data = ingest(&m, &cfg).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].id(), "star1");
        assert_eq!(data[0].d(), 64);
        for (a, b) in data[1].iter().zip(folded.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        fs::write(&m, "star2,v2.csv,0,0\n").unwrap();
        match ingest(&m, &cfg) {
            Err(Error::MissingPeriod(id)) => assert_eq!(id, "star2"),
            other => panic!("{other:?}"),
        }

        fs::write(&m, "").unwrap();
        assert!(ingest(&m, &cfg).unwrap().is_empty());

        fs::write(&m, "x,v1.csv,abc,0\n").unwrap();
        assert!(matches!(ingest(&m, &cfg), Err(Error::Parse { line: 1, .. })));
        fs::write(&m, "x,missing.csv,1,0\n").unwrap();
        assert!(matches!(ingest(&m, &cfg), Err(Error::Io { .. })));
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = CentroidModel::new(
            vec![series("a", 32, 1).to_vec(), series("b", 32, 2).to_vec()],
            vec![0.25, 0.75],
        )
        .unwrap();
        let p = dir.path().join("m.csv");
        write_model(&p, &model).unwrap();
        let back = read_model(&p).unwrap();
        assert_eq!(back.centroids, model.centroids);
        assert_eq!(back.proportions, model.proportions);
    }

    #[test]
    fn ranking_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = vec![RankEntry::new("a", 0.5), RankEntry::new("b", -0.25)];
        e[0].best_cluster = Some(1);
        e[0].best_shift = Some(7);
        let r = rank(e, 1).unwrap().with_provenance(Provenance {
            method: Some(Method::PcadGlobal),
            seed: 9,
            k: Some(2),
            s: None,
        });
        let p = dir.path().join("r.csv");
        write_ranking(&p, &r).unwrap();
        assert_eq!(read_ranking(&p).unwrap(), r);
        assert!(format_ranking(&r).starts_with("# method=PCAD_GLOBAL m=1 seed=9 k=2 s=-\n"));
    }
}
