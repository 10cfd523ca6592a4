//! Configuration files, CSV ingestion and result tables.
//!
//! Every table starts with a `# config_hash=<sha256>` line followed by a
//! header row. Floats are written in Rust's shortest round-trip form.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::BenchmarkReport;
use crate::model::{Hyperparameters, PairIndex, PanDataset, PriorMeans};
use crate::posterior::{
    EdgeReport, HeatmapData, Pathway, PathwayAnnotation, PathwayShare, SimilarityReport,
};
use crate::sampler::ChainTrace;
use crate::simulation::SimTruth;

const HASH_PREFIX: &str = "# config_hash=";

/// Hex SHA-256 of the value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)
        .map_err(|e| Error::InvalidInput(format!("cannot encode config: {e}")))?;
    Ok(Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Settings read from a TOML file. Sampler keys carry the same names as the
/// [`Hyperparameters`] fields; any key left out takes the simulation-study
/// default for the data's sample sizes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha1: Option<f64>,
    pub beta1: Option<f64>,
    pub alpha2: Option<f64>,
    pub beta2: Option<f64>,
    pub alpha_gamma: Option<f64>,
    pub beta_gamma: Option<f64>,
    pub delta: Option<f64>,
    pub kappa: Option<f64>,
    pub n_iterations: Option<usize>,
    pub n_burnin: Option<usize>,
    pub seed: Option<u64>,
    pub independent_mode: Option<bool>,
    /// Group manifest for `fit`, or a saved trace for the post-processing commands.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub replicates: Option<usize>,
    /// Scale every column to unit variance after centering.
    pub scale: Option<bool>,
    pub full_trace: Option<bool>,
}

impl RunConfig {
    /// Parses a TOML file; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.message().to_owned(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overridden_by(mut self, other: &RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            alpha1,
            beta1,
            alpha2,
            beta2,
            alpha_gamma,
            beta_gamma,
            delta,
            kappa,
            n_iterations,
            n_burnin,
            seed,
            independent_mode,
            input,
            output,
            replicates,
            scale,
            full_trace
        );
        self
    }

    pub fn hyperparameters(&self, sample_sizes: &[usize]) -> Result<Hyperparameters> {
        let mut h = Hyperparameters::for_sample_sizes(sample_sizes);
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { h.$f = v; } )* };
        }
        set!(
            alpha1,
            beta1,
            alpha2,
            beta2,
            alpha_gamma,
            beta_gamma,
            delta,
            kappa,
            n_iterations,
            n_burnin,
            seed,
            independent_mode
        );
        h.validate()?;
        Ok(h)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn ingestion(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

/// One group's CSV: a header of variable names, then one sample per row.
pub fn read_group_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ingestion(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.iter().any(String::is_empty) {
        return Err(ingestion(path, 1, "empty variable name in header"));
    }
    let p = headers.len();
    let mut values = Vec::new();
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line() as usize);
            ingestion(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |pos| pos.line() as usize);
        if record.len() != p {
            return Err(ingestion(
                path,
                line,
                format!("expected {p} fields, found {}", record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(ingestion(
                    path,
                    line,
                    format!("empty cell in column `{}`", headers[j]),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                ingestion(
                    path,
                    line,
                    format!("`{cell}` in column `{}` is not a number", headers[j]),
                )
            })?;
            if !v.is_finite() {
                return Err(ingestion(
                    path,
                    line,
                    format!("non-finite value in column `{}`", headers[j]),
                ));
            }
            values.push(v);
        }
        n += 1;
    }
    if n < 2 {
        return Err(ingestion(
            path,
            1,
            format!("need at least 2 samples, found {n}"),
        ));
    }
    Ok((headers, DMatrix::from_row_slice(n, p, &values)))
}

/// Reads a `label,path` manifest and every group file it names. Paths are
/// relative to the manifest.
pub fn load_dataset(manifest: &Path, scale: bool) -> Result<PanDataset> {
    let file = File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| ingestion(manifest, 1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "label" || &headers[1] != "path" {
        return Err(ingestion(
            manifest,
            1,
            "manifest header must be `label,path`",
        ));
    }
    let base = manifest.parent().unwrap_or(Path::new(""));
    let mut groups = Vec::new();
    let mut names: Option<(Vec<String>, PathBuf)> = None;
    let mut labels = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line() as usize);
            ingestion(manifest, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |pos| pos.line() as usize);
        let label = record[0].to_owned();
        if !labels.insert(label.clone()) {
            return Err(ingestion(
                manifest,
                line,
                format!("duplicate group label `{label}`"),
            ));
        }
        let path = base.join(&record[1]);
        let (header, data) = read_group_csv(&path)?;
        match &names {
            None => names = Some((header, path)),
            Some((first, first_path)) if *first != header => {
                return Err(Error::InvalidInput(format!(
                    "variable names in {} do not match those in {}",
                    path.display(),
                    first_path.display()
                )));
            }
            Some(_) => {}
        }
        groups.push((label, data));
    }
    let Some((names, _)) = names else {
        return Err(ingestion(manifest, 1, "manifest lists no groups"));
    };
    PanDataset::new(groups, names, scale)
}

/// Writes each group's (centered) data and a manifest pointing at them.
pub fn write_dataset(dir: &Path, dataset: &PanDataset) -> Result<PathBuf> {
    create_dir(dir)?;
    let manifest = dir.join("manifest.csv");
    let mut m = csv_writer(&manifest)?;
    write_record(&mut m, &manifest, ["label", "path"])?;
    for g in dataset.groups() {
        let name = format!("{}.csv", g.label);
        let path = dir.join(&name);
        let mut w = csv_writer(&path)?;
        write_record(&mut w, &path, dataset.variable_names())?;
        for row in g.data.row_iter() {
            write_record(&mut w, &path, row.iter().map(|v| v.to_string()))?;
        }
        flush(w, &path)?;
        write_record(&mut m, &manifest, [g.label.as_str(), name.as_str()])?;
    }
    flush(m, &manifest)?;
    Ok(manifest)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_record<I, T>(w: &mut csv::Writer<File>, path: &Path, record: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(record).map_err(|e| csv_error(path, e))
}

fn flush(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_owned(),
            message: format!("{other:?}"),
        },
    }
}

/// A result table being written: hash line, header, then rows.
pub struct TableWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl TableWriter {
    pub fn create(path: &Path, config_hash: &str, header: &[&str]) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{HASH_PREFIX}{config_hash}").map_err(|e| Error::io(path, e))?;
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        inner.write_record(header).map_err(|e| csv_error(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            inner,
        })
    }

    pub fn row<I, T>(&mut self, record: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.inner
            .write_record(record)
            .map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(self) -> Result<()> {
        flush(self.inner, &self.path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub config_hash: Option<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(&file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let config_hash = first
        .trim_end()
        .strip_prefix(HASH_PREFIX)
        .map(str::to_owned);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|r| r.iter().map(str::to_owned).collect())
                .map_err(|e| csv_error(path, e))
        })
        .collect::<Result<_>>()?;
    Ok(Table {
        config_hash,
        headers,
        rows,
    })
}

fn f(v: f64) -> String {
    v.to_string()
}

/// One `edges_<label>.csv` per group listing every variable pair.
pub fn write_edge_lists(
    dir: &Path,
    config_hash: &str,
    labels: &[String],
    variable_names: &[String],
    report: &EdgeReport,
    mean_partial_corr: &[Vec<f64>],
) -> Result<Vec<PathBuf>> {
    let pairs = PairIndex::new(variable_names.len());
    let mut paths = Vec::new();
    for (c, label) in labels.iter().enumerate() {
        let path = dir.join(format!("edges_{label}.csv"));
        let mut w = TableWriter::create(
            &path,
            config_hash,
            &[
                "i",
                "j",
                "var_i",
                "var_j",
                "inclusion_prob",
                "selected",
                "mean_partial_corr",
            ],
        )?;
        for (e, (i, j)) in pairs.iter().enumerate() {
            w.row([
                i.to_string(),
                j.to_string(),
                variable_names[i].clone(),
                variable_names[j].clone(),
                f(report.inclusion_prob[c][e]),
                report.adjacency[c][e].to_string(),
                f(mean_partial_corr[c][e]),
            ])?;
        }
        w.finish()?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn write_similarity(
    path: &Path,
    config_hash: &str,
    labels: &[String],
    report: &SimilarityReport,
) -> Result<()> {
    let mut w = TableWriter::create(
        path,
        config_hash,
        &["group_a", "group_b", "nsi", "nnsi", "l1_distance"],
    )?;
    for (k, (a, b)) in PairIndex::new(labels.len()).iter().enumerate() {
        w.row([
            labels[a].clone(),
            labels[b].clone(),
            f(report.nsi[k]),
            f(report.nnsi[k]),
            f(report.l1_distance[k]),
        ])?;
    }
    w.finish()
}

/// Rows are `(group_a, group_b, share)`.
pub fn write_pathways(
    path: &Path,
    config_hash: &str,
    rows: &[(String, String, PathwayShare)],
) -> Result<()> {
    let mut w = TableWriter::create(
        path,
        config_hash,
        &[
            "group_a",
            "group_b",
            "pathway_a",
            "pathway_b",
            "shared",
            "union",
            "proportion",
        ],
    )?;
    for (a, b, s) in rows {
        w.row([
            a.clone(),
            b.clone(),
            s.first.clone(),
            s.second.clone(),
            s.shared.to_string(),
            s.union.to_string(),
            f(s.proportion),
        ])?;
    }
    w.finish()
}

/// Edge-by-group probability matrix with group columns in clustering order.
pub fn write_heatmap(
    path: &Path,
    config_hash: &str,
    labels: &[String],
    variable_names: &[String],
    data: &HeatmapData,
) -> Result<()> {
    let mut header = vec!["i", "j", "var_i", "var_j"];
    header.extend(data.group_order.iter().map(|&c| labels[c].as_str()));
    let mut w = TableWriter::create(path, config_hash, &header)?;
    for (&(i, j), row) in data.edges.iter().zip(&data.rows) {
        let mut rec = vec![
            i.to_string(),
            j.to_string(),
            variable_names[i].clone(),
            variable_names[j].clone(),
        ];
        rec.extend(data.group_order.iter().map(|&c| f(row[c])));
        w.row(rec)?;
    }
    w.finish()
}

pub fn write_prior_curves(
    path: &Path,
    config_hash: &str,
    n: &[usize],
    curves: &[PriorMeans],
) -> Result<()> {
    let mut w = TableWriter::create(
        path,
        config_hash,
        &["delta", "kind", "n_a", "n_b", "prior_mean"],
    )?;
    let pairs = PairIndex::new(n.len());
    for pm in curves {
        for (c, v) in pm.within.iter().enumerate() {
            w.row([
                f(pm.delta),
                "within".into(),
                n[c].to_string(),
                n[c].to_string(),
                f(*v),
            ])?;
        }
        for (k, (a, b)) in pairs.iter().enumerate() {
            w.row([
                f(pm.delta),
                "cross".into(),
                n[a].to_string(),
                n[b].to_string(),
                f(pm.cross[k]),
            ])?;
        }
    }
    w.finish()
}

/// Writes `per_graph_auc.csv` (per-graph AUC), `shared_edge_auc.csv` (shared-edge AUC) and
/// `replicates.csv` (every score).
pub fn write_benchmark(dir: &Path, config_hash: &str, report: &BenchmarkReport) -> Result<()> {
    let labels: Vec<String> = (1..=report.n_groups).map(|c| format!("C{c}")).collect();
    let pairs: Vec<(usize, usize)> = PairIndex::new(report.n_groups).iter().collect();

    let mut t1 = TableWriter::create(
        &dir.join("per_graph_auc.csv"),
        config_hash,
        &["method", "group", "mean_auc", "sd_auc", "n"],
    )?;
    let mut t2 = TableWriter::create(
        &dir.join("shared_edge_auc.csv"),
        config_hash,
        &["method", "group_a", "group_b", "mean_auc", "sd_auc", "n"],
    )?;
    for s in &report.summaries {
        for (c, m) in s.per_graph.iter().enumerate() {
            t1.row([
                s.method.name().into(),
                labels[c].clone(),
                f(m.mean),
                f(m.sd),
                m.n.to_string(),
            ])?;
        }
        for (k, m) in s.shared.iter().enumerate() {
            let (a, b) = pairs[k];
            t2.row([
                s.method.name().into(),
                labels[a].clone(),
                labels[b].clone(),
                f(m.mean),
                f(m.sd),
                m.n.to_string(),
            ])?;
        }
    }
    t1.finish()?;
    t2.finish()?;

    let mut rep = TableWriter::create(
        &dir.join("replicates.csv"),
        config_hash,
        &["replicate", "method", "kind", "group_a", "group_b", "auc"],
    )?;
    for r in &report.results {
        for (c, v) in r.per_graph.iter().enumerate() {
            rep.row([
                r.replicate.to_string(),
                r.method.name().into(),
                "per_graph".into(),
                labels[c].clone(),
                labels[c].clone(),
                f(*v),
            ])?;
        }
        for (k, v) in r.shared.iter().enumerate() {
            let (a, b) = pairs[k];
            rep.row([
                r.replicate.to_string(),
                r.method.name().into(),
                "shared".into(),
                labels[a].clone(),
                labels[b].clone(),
                f(*v),
            ])?;
        }
    }
    rep.finish()
}

/// Writes `truth_edges.csv`, one `theta_<label>.csv` per group and
/// `shared_proportions.csv`.
pub fn write_truth(
    dir: &Path,
    config_hash: &str,
    labels: &[String],
    variable_names: &[String],
    truth: &SimTruth,
) -> Result<()> {
    let pairs = PairIndex::new(variable_names.len());
    let mut edges = TableWriter::create(
        &dir.join("truth_edges.csv"),
        config_hash,
        &["group", "i", "j", "var_i", "var_j", "theta"],
    )?;
    for (c, theta) in truth.thetas.iter().enumerate() {
        for (e, (i, j)) in pairs.iter().enumerate() {
            if truth.edges[c][e] {
                edges.row([
                    labels[c].clone(),
                    i.to_string(),
                    j.to_string(),
                    variable_names[i].clone(),
                    variable_names[j].clone(),
                    f(theta[(i, j)]),
                ])?;
            }
        }
        let path = dir.join(format!("theta_{}.csv", labels[c]));
        let header: Vec<&str> = variable_names.iter().map(String::as_str).collect();
        let mut w = TableWriter::create(&path, config_hash, &header)?;
        for row in theta.row_iter() {
            w.row(row.iter().map(|v| f(*v)))?;
        }
        w.finish()?;
    }
    edges.finish()?;
    let mut w = TableWriter::create(
        &dir.join("shared_proportions.csv"),
        config_hash,
        &["group_a", "group_b", "proportion"],
    )?;
    for (k, (a, b)) in PairIndex::new(labels.len()).iter().enumerate() {
        w.row([
            labels[a].clone(),
            labels[b].clone(),
            f(truth.shared_proportions[k]),
        ])?;
    }
    w.finish()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A fitted chain together with what is needed to label its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub config_hash: String,
    pub labels: Vec<String>,
    pub variable_names: Vec<String>,
    pub sample_sizes: Vec<usize>,
    pub hyper: Hyperparameters,
    pub trace: ChainTrace,
}

impl TraceFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let t: TraceFile =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
        let tr = &t.trace;
        if t.labels.len() != tr.n_groups || t.variable_names.len() != tr.p {
            return Err(Error::Format {
                path: path.to_owned(),
                message: "labels or variable names do not match the trace dimensions".into(),
            });
        }
        Ok(t)
    }
}

/// Lines of `pathway,var,var,...`; blank lines and `#` comments are skipped.
pub fn parse_annotation(path: &Path, variable_names: &[String]) -> Result<PathwayAnnotation> {
    let text = read_to_string(path)?;
    let mut pathways = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let name = fields.next().unwrap_or_default();
        if name.is_empty() {
            return Err(ingestion(path, k + 1, "missing pathway name"));
        }
        let mut members = BTreeSet::new();
        for v in fields.filter(|v| !v.is_empty()) {
            let idx = variable_names.iter().position(|n| n == v).ok_or_else(|| {
                ingestion(
                    path,
                    k + 1,
                    format!("unknown variable `{v}` in pathway `{name}`"),
                )
            })?;
            members.insert(idx);
        }
        pathways.push(Pathway {
            name: name.to_owned(),
            members,
        });
    }
    PathwayAnnotation::new(pathways, variable_names.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_two_groups() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "x,y\n1,2\n3,5\n5,11\n");
        write(dir.path(), "b.csv", "x,y\n0,1\n1,0\n2,2\n");
        let m = write(dir.path(), "m.csv", "label,path\nA,a.csv\nB,b.csv\n");
        let d = load_dataset(&m, false).unwrap();
        assert_eq!(d.n_groups(), 2);
        assert_eq!(d.p(), 2);
        assert_eq!(d.sample_sizes(), vec![3, 3]);
        assert!(d.max_abs_column_mean() < 1e-12);
    }

    #[test]
    fn mismatched_headers_name_both_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "x,y\n1,2\n3,5\n");
        write(dir.path(), "b.csv", "x,z\n0,1\n1,0\n");
        let m = write(dir.path(), "m.csv", "label,path\nA,a.csv\nB,b.csv\n");
        let msg = load_dataset(&m, false).unwrap_err().to_string();
        assert!(msg.contains("a.csv") && msg.contains("b.csv"), "{msg}");
    }

    #[test]
    fn ingestion_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("x,y\n1,2\n3,\n4,5\n", 3),
            ("x,y\n1,2\n3,4,5\n", 3),
            ("x,y\n1,2\n3,4\nfoo,1\n", 4),
        ];
        for (text, line) in cases {
            let p = write(dir.path(), "g.csv", text);
            match read_group_csv(&p) {
                Err(Error::Ingestion { line: l, path, .. }) => {
                    assert_eq!(l, line, "{text:?}");
                    assert_eq!(path, p);
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
        let p = write(dir.path(), "g.csv", "x,y\n1,2\n");
        assert!(matches!(read_group_csv(&p), Err(Error::Ingestion { .. })));
    }

    #[test]
    fn config_overrides_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.toml",
            "alpha1 = 2.0\nn_iterations = 300\ninput = \"data/m.csv\"\n",
        );
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(
            cfg.input.as_deref(),
            Some(dir.path().join("data/m.csv").as_path())
        );
        let cli = RunConfig {
            n_iterations: Some(50),
            n_burnin: Some(10),
            ..Default::default()
        };
        let h = cfg.overridden_by(&cli).hyperparameters(&[20, 40]).unwrap();
        assert_eq!(h.alpha1, 2.0);
        assert_eq!(h.n_iterations, 50);
        assert_eq!(h.beta2, 900.0);

        let bad = write(dir.path(), "bad.toml", "alpha_one = 2.0\n");
        assert!(matches!(RunConfig::load(&bad), Err(Error::Format { .. })));
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let report = SimilarityReport {
            nsi: vec![0.1234567890123456, 2.0 / 3.0, 1e-300],
            nnsi: vec![0.0, 1.0, 0.5],
            l1_distance: vec![std::f64::consts::PI, 1.0, 0.0],
            nnsi_defined: true,
        };
        let p = dir.path().join("s.csv");
        write_similarity(&p, "abc", &labels, &report).unwrap();
        let t = read_table(&p).unwrap();
        assert_eq!(t.config_hash.as_deref(), Some("abc"));
        assert_eq!(t.rows.len(), 3);
        let col = t.column("nsi").unwrap();
        for (row, v) in t.rows.iter().zip(&report.nsi) {
            assert_eq!(row[col].parse::<f64>().unwrap(), *v);
        }
    }

    #[test]
    fn empty_edge_set_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let data = HeatmapData {
            edges: vec![],
            rows: vec![],
            group_order: vec![1, 0],
        };
        write_heatmap(
            &p,
            "h",
            &["A".into(), "B".into()],
            &["x".into(), "y".into()],
            &data,
        )
        .unwrap();
        let t = read_table(&p).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.headers, vec!["i", "j", "var_i", "var_j", "B", "A"]);
    }

    #[test]
    fn annotation_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = write(
            dir.path(),
            "ann.txt",
            "# pathways\nP1,a,b\n\nP2, b , c\nEmpty\n",
        );
        let ann = parse_annotation(&p, &names).unwrap();
        assert_eq!(ann.pathways().len(), 3);
        assert_eq!(ann.pathways()[1].members, [1, 2].into_iter().collect());
        assert!(ann.pathways()[2].members.is_empty());
        let bad = write(dir.path(), "bad.txt", "P1,a\nP2,zz\n");
        assert!(matches!(
            parse_annotation(&bad, &names),
            Err(Error::Ingestion { line: 2, .. })
        ));
    }

    #[test]
    fn hash_is_stable() {
        let h = Hyperparameters::for_sample_sizes(&[10, 20]);
        assert_eq!(config_hash(&h).unwrap(), config_hash(&h.clone()).unwrap());
        let mut g = h.clone();
        g.seed = 1;
        assert_ne!(config_hash(&h).unwrap(), config_hash(&g).unwrap());
        assert_eq!(config_hash(&h).unwrap().len(), 64);
    }
}
