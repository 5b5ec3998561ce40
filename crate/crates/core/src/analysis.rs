//! Degree-resolved evaluation of trained models and the report formats
//! built on it: per-degree L1 magnitudes, individual and cumulative
//! accuracies, and multi-seed `mean(standard error)` tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::exec::Execution;
use crate::grad::argmax;
use crate::model::{DegreeSet, DegreeSetKind, ModelError, ModelKind, TensorNetwork};

/// Samples per reduction chunk.
const CHUNK: usize = 64;

#[derive(Error, Debug)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("report has no degrees")]
    EmptyReport,
    #[error("report columns have inconsistent lengths")]
    Ragged,
    #[error("malformed report: {0}")]
    Parse(String),
    #[error("cannot aggregate runs with different {field}: {a} vs {b}")]
    Inconsistent { field: &'static str, a: String, b: String },
    #[error("nothing to aggregate")]
    NoRuns,
    #[error("dataset has {actual} features, model expects {expected}")]
    FeatureCount { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Identifies the model and data behind a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset: String,
    pub kind: ModelKind,
    pub bond: usize,
    pub features: usize,
    pub seed: u64,
    /// Degree set the model was trained with, in `DegreeSet::spec` form.
    pub degree_set: String,
    /// Resolved configuration of the producing run.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub meta: ReportMeta,
    pub degrees: Vec<usize>,
    pub mean_l1: Vec<f64>,
    pub individual_accuracy: Vec<f64>,
    pub cumulative_accuracy: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccuracyMode {
    Individual,
    Cumulative,
}

#[derive(Default)]
struct Tally {
    l1: Vec<f64>,
    individual: Vec<usize>,
    cumulative: Vec<usize>,
}

impl Tally {
    fn new(e: usize) -> Self {
        Self {
            l1: vec![0.0; e],
            individual: vec![0; e],
            cumulative: vec![0; e],
        }
    }

    fn merge(&mut self, other: &Tally) {
        for (a, b) in self.l1.iter_mut().zip(&other.l1) {
            *a += b;
        }
        for (a, b) in self.individual.iter_mut().zip(&other.individual) {
            *a += b;
        }
        for (a, b) in self.cumulative.iter_mut().zip(&other.cumulative) {
            *a += b;
        }
    }
}

/// Runs one decomposition per sample and tallies all per-degree
/// quantities from it.
fn tally(model: &TensorNetwork, data: &Dataset, j_max: usize, exec: Execution) -> Result<Tally> {
    if data.n_features() != model.features() {
        return Err(AnalysisError::FeatureCount {
            expected: model.features(),
            actual: data.n_features(),
        });
    }
    let m = model.features();
    if j_max > m {
        return Err(ModelError::DegreeCapTooLarge { cap: j_max, m }.into());
    }
    let e = j_max + 1;
    let n = model.classes();
    let chunks = data.len().div_ceil(CHUNK);
    let parts = exec.try_map(chunks, |c| -> Result<Tally> {
        let mut t = Tally::new(e);
        let mut running = vec![0.0; n];
        for i in c * CHUNK..((c + 1) * CHUNK).min(data.len()) {
            let rows = model.interaction_decompose(data.sample(i), j_max)?;
            let label = data.label(i);
            running.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..e {
                let row = &rows.data()[j * n..(j + 1) * n];
                t.l1[j] += row.iter().map(|v| v.abs()).sum::<f64>();
                if argmax(row) == label {
                    t.individual[j] += 1;
                }
                for (r, v) in running.iter_mut().zip(row) {
                    *r += v;
                }
                if argmax(&running) == label {
                    t.cumulative[j] += 1;
                }
            }
        }
        Ok(t)
    })?;
    let mut total = Tally::new(e);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Mean over samples of `Σ_k |d_k^(j)(x)|` for `j = 0..=j_max`.
pub fn degree_magnitudes(model: &TensorNetwork, data: &Dataset, j_max: usize, exec: Execution) -> Result<Vec<f64>> {
    let t = tally(model, data, j_max, exec)?;
    let inv = 1.0 / data.len() as f64;
    Ok(t.l1.iter().map(|v| v * inv).collect())
}

/// Accuracy of argmax over degree row `j` (individual) or over the sum of
/// rows `0..=j` (cumulative), for `j = 0..=j_max`.
pub fn per_degree_accuracy(
    model: &TensorNetwork,
    data: &Dataset,
    j_max: usize,
    mode: AccuracyMode,
    exec: Execution,
) -> Result<Vec<f64>> {
    let t = tally(model, data, j_max, exec)?;
    let counts = match mode {
        AccuracyMode::Individual => t.individual,
        AccuracyMode::Cumulative => t.cumulative,
    };
    Ok(fractions(&counts, data.len()))
}

fn fractions(counts: &[usize], total: usize) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Builds a complete report for degrees `0..=j_max` from a single
/// decomposition pass over `data`.
pub fn decompose(
    model: &TensorNetwork,
    data: &Dataset,
    j_max: usize,
    meta: ReportMeta,
    exec: Execution,
) -> Result<DecompositionReport> {
    let t = tally(model, data, j_max, exec)?;
    let inv = 1.0 / data.len() as f64;
    Ok(DecompositionReport {
        meta,
        degrees: (0..=j_max).collect(),
        mean_l1: t.l1.iter().map(|v| v * inv).collect(),
        individual_accuracy: fractions(&t.individual, data.len()),
        cumulative_accuracy: fractions(&t.cumulative, data.len()),
    })
}

pub const CSV_HEADER: &str = "degree,mean_l1,acc_individual,acc_cumulative";

impl DecompositionReport {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(AnalysisError::EmptyReport);
        }
        let e = self.degrees.len();
        if self.mean_l1.len() != e || self.individual_accuracy.len() != e || self.cumulative_accuracy.len() != e {
            return Err(AnalysisError::Ragged);
        }
        Ok(())
    }

    /// CSV with the metadata as leading `# key=value` comment lines.
    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut s = String::new();
        let meta = &self.meta;
        let _ = writeln!(s, "# dataset={}", meta.dataset);
        let _ = writeln!(s, "# kind={}", meta.kind);
        let _ = writeln!(s, "# bond={}", meta.bond);
        let _ = writeln!(s, "# features={}", meta.features);
        let _ = writeln!(s, "# seed={}", meta.seed);
        let _ = writeln!(s, "# degree_set={}", meta.degree_set);
        for (k, v) in &meta.config {
            let _ = writeln!(s, "# config.{k}={v}");
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        for i in 0..self.degrees.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.degrees[i], self.mean_l1[i], self.individual_accuracy[i], self.cumulative_accuracy[i]
            );
        }
        Ok(s)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        let mut config = BTreeMap::new();
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in text.lines() {
            if let Some(c) = line.strip_prefix("# ") {
                let (k, v) = c
                    .split_once('=')
                    .ok_or_else(|| AnalysisError::Parse(format!("bad metadata line {line:?}")))?;
                match k.strip_prefix("config.") {
                    Some(key) => config.insert(key.to_string(), v.to_string()),
                    None => fields.insert(k.to_string(), v.to_string()),
                };
            } else if line == CSV_HEADER {
                header_seen = true;
            } else if !line.is_empty() {
                if !header_seen {
                    return Err(AnalysisError::Parse("missing header".into()));
                }
                rows.push(line);
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| AnalysisError::Parse(format!("missing metadata {k}")))
        };
        let num = |k: &str, v: String| v.parse::<u64>().map_err(|e| AnalysisError::Parse(format!("{k}: {e}")));
        let meta = ReportMeta {
            dataset: get("dataset")?,
            kind: get("kind")?.parse()?,
            bond: num("bond", get("bond")?)? as usize,
            features: num("features", get("features")?)? as usize,
            seed: num("seed", get("seed")?)?,
            degree_set: get("degree_set")?,
            config,
        };
        let mut report = DecompositionReport {
            meta,
            degrees: Vec::new(),
            mean_l1: Vec::new(),
            individual_accuracy: Vec::new(),
            cumulative_accuracy: Vec::new(),
        };
        for row in rows {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != 4 {
                return Err(AnalysisError::Parse(format!("bad row {row:?}")));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| AnalysisError::Parse(format!("{s:?}: {e}")));
            report
                .degrees
                .push(cols[0].parse().map_err(|e| AnalysisError::Parse(format!("{e}")))?);
            report.mean_l1.push(f(cols[1])?);
            report.individual_accuracy.push(f(cols[2])?);
            report.cumulative_accuracy.push(f(cols[3])?);
        }
        report.validate()?;
        Ok(report)
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        serde_json::to_string_pretty(self).map_err(|e| AnalysisError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| AnalysisError::Parse(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    /// `{dataset}_{kind}_{r}_{dsettag}_{seed}` with the given extension.
    pub fn file_name(&self, ext: &str) -> String {
        let tag = DegreeSet::parse(&self.meta.degree_set, self.meta.features)
            .map(|d| d.tag())
            .unwrap_or_else(|_| self.meta.degree_set.replace([',', ':'], "-"));
        run_file_name(&self.meta.dataset, self.meta.kind, self.meta.bond, &tag, self.meta.seed, ext)
    }
}

pub fn run_file_name(dataset: &str, kind: ModelKind, bond: usize, dset_tag: &str, seed: u64, ext: &str) -> String {
    format!("{dataset}_{}_{bond}_{dset_tag}_{seed}.{ext}", kind.tag())
}

/// Mean and standard error of the mean over the given values. The error is
/// absent for a single value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub standard_error: Option<f64>,
    pub count: usize,
}

pub fn mean_sem(values: &[f64]) -> Option<MeanSem> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let standard_error = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Some(MeanSem {
        mean,
        standard_error,
        count: n,
    })
}

/// `a(b)`: `mean` with `decimals` places and the standard error in units of
/// the last displayed place. Without an error only `a` is printed.
pub fn format_mean_sem(mean: f64, standard_error: Option<f64>, decimals: usize) -> String {
    let a = format!("{mean:.decimals$}");
    match standard_error {
        Some(se) => {
            let b = (se * 10f64.powi(decimals as i32)).round() as u64;
            format!("{a}({b})")
        }
        None => a,
    }
}

/// Parses an `a(b)` string back into `(mean, standard error)`.
pub fn parse_mean_sem(s: &str) -> Result<(f64, Option<f64>)> {
    let bad = || AnalysisError::Parse(format!("bad mean(se) value {s:?}"));
    let (a, b) = match s.split_once('(') {
        Some((a, rest)) => (a, Some(rest.strip_suffix(')').ok_or_else(bad)?)),
        None => (s, None),
    };
    let mean: f64 = a.parse().map_err(|_| bad())?;
    let decimals = a.split_once('.').map_or(0, |(_, f)| f.len());
    let se = match b {
        Some(b) => Some(b.parse::<u64>().map_err(|_| bad())? as f64 / 10f64.powi(decimals as i32)),
        None => None,
    };
    Ok((mean, se))
}

/// Outcome of one training run, as consumed by [`aggregate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub kind: ModelKind,
    pub bond: usize,
    pub features: usize,
    pub degree_set: String,
    pub seed: u64,
    /// Final test accuracy as a fraction.
    pub test_accuracy: f64,
    /// Training hyperparameters that must agree across aggregated runs.
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub column: String,
    /// Mean test accuracy in percent.
    pub mean: f64,
    pub standard_error: Option<f64>,
    pub seeds: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub cells: Vec<TableCell>,
}

/// Accuracy table: one row per model family and kind, one column per
/// degree set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub dataset: String,
    pub bond: usize,
    /// Training settings shared by every aggregated run.
    pub hyperparameters: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

fn family_and_column(spec: &str, m: usize) -> (String, String, usize) {
    match DegreeSet::parse(spec, m) {
        Ok(d) => match d.kind() {
            DegreeSetKind::Full => ("Full".into(), "full".into(), usize::MAX),
            DegreeSetKind::Cumulative(j) => ("Cumulative".into(), j.to_string(), *j),
            DegreeSetKind::Single(j) => ("Degree".into(), j.to_string(), *j),
            DegreeSetKind::Custom => ("Custom".into(), d.tag(), usize::MAX - 1),
        },
        Err(_) => ("Custom".into(), spec.to_string(), usize::MAX - 1),
    }
}

fn same<T: PartialEq + std::fmt::Debug>(field: &'static str, a: &T, b: &T) -> Result<()> {
    if a != b {
        return Err(AnalysisError::Inconsistent {
            field,
            a: format!("{a:?}"),
            b: format!("{b:?}"),
        });
    }
    Ok(())
}

/// Accuracies per `(sort order, column name)`.
type Columns = BTreeMap<(usize, String), Vec<f64>>;

/// Groups runs by model family, kind and degree set and reports the mean
/// and standard error over their seeds (in percent, two decimals).
pub fn aggregate(runs: &[RunSummary]) -> Result<AggregateTable> {
    let first = runs.first().ok_or(AnalysisError::NoRuns)?;
    for r in &runs[1..] {
        same("dataset", &first.dataset, &r.dataset)?;
        same("bond dimension", &first.bond, &r.bond)?;
        same("feature count", &first.features, &r.features)?;
        same("hyperparameters", &first.hyperparameters, &r.hyperparameters)?;
    }
    // (family, kind) -> column -> accuracies
    let mut groups: BTreeMap<(String, String), Columns> = BTreeMap::new();
    let mut columns: BTreeSet<(usize, String)> = BTreeSet::new();
    let mut seen: BTreeSet<(String, String, String, u64)> = BTreeSet::new();
    for r in runs {
        let (family, column, order) = family_and_column(&r.degree_set, r.features);
        let kind = r.kind.tag().to_uppercase();
        if !seen.insert((family.clone(), kind.clone(), column.clone(), r.seed)) {
            return Err(AnalysisError::Inconsistent {
                field: "seeds (duplicate run)",
                a: format!("{family} {kind} {column}"),
                b: format!("seed {}", r.seed),
            });
        }
        columns.insert((order, column.clone()));
        groups
            .entry((family, kind))
            .or_default()
            .entry((order, column))
            .or_default()
            .push(100.0 * r.test_accuracy);
    }
    let rows = groups
        .into_iter()
        .map(|((family, kind), cols)| TableRow {
            model: format!("{family} {kind}"),
            cells: cols
                .into_iter()
                .map(|((_, column), values)| {
                    let s = mean_sem(&values).expect("non-empty group");
                    TableCell {
                        column,
                        mean: s.mean,
                        standard_error: s.standard_error,
                        seeds: s.count,
                        text: format_mean_sem(s.mean, s.standard_error, 2),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(AggregateTable {
        dataset: first.dataset.clone(),
        bond: first.bond,
        hyperparameters: first.hyperparameters.clone(),
        columns: columns.into_iter().map(|(_, c)| c).collect(),
        rows,
    })
}

impl AggregateTable {
    /// Table layout: `model` then one column per degree set.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.model);
            for c in &self.columns {
                s.push(',');
                if let Some(cell) = row.cells.iter().find(|cell| &cell.column == c) {
                    s.push_str(&cell.text);
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitScheme;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(kind: ModelKind, seed: u64) -> TensorNetwork {
        TensorNetwork::init(kind, 4, 2, 3, seed, InitScheme::Gaussian { sigma: 0.7 }).unwrap()
    }

    fn data(seed: u64, count: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = (0..count * 4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let l = (0..count).map(|_| rng.random_range(0..3u8)).collect();
        Dataset::in_memory(f, l, 4, 3).unwrap()
    }

    fn meta() -> ReportMeta {
        ReportMeta {
            dataset: "mnist".into(),
            kind: ModelKind::Tr,
            bond: 2,
            features: 4,
            seed: 4,
            degree_set: "full".into(),
            config: BTreeMap::from([("lr".into(), "0.001".into())]),
        }
    }

    #[test]
    fn zero_model_has_zero_magnitudes() {
        let model = TensorNetwork::init(ModelKind::Ttn, 4, 2, 3, 0, InitScheme::Gaussian { sigma: 0.0 }).unwrap();
        let mags = degree_magnitudes(&model, &data(1, 20), 4, Execution::Sequential).unwrap();
        assert_eq!(mags, vec![0.0; 5]);
    }

    #[test]
    fn cumulative_at_full_degree_matches_forward_accuracy() {
        for kind in [ModelKind::Tr, ModelKind::Ttn] {
            let model = toy(kind, 2);
            let ds = data(3, 200);
            let cum = per_degree_accuracy(&model, &ds, 4, AccuracyMode::Cumulative, Execution::Parallel).unwrap();
            let full = crate::grad::accuracy(&model, &ds, &DegreeSet::full(4), Execution::Sequential).unwrap();
            assert_eq!(cum[4], full);
        }
    }

    #[test]
    fn degree_zero_accuracy_is_a_class_prior() {
        let model = toy(ModelKind::Tr, 5);
        let ds = data(6, 300);
        let acc = per_degree_accuracy(&model, &ds, 0, AccuracyMode::Individual, Execution::Sequential).unwrap();
        let hist = ds.class_histogram();
        let predicted = argmax(&model.interaction_decompose(ds.sample(0), 0).unwrap().into_data());
        assert_eq!(acc[0], hist[predicted] as f64 / ds.len() as f64);
    }

    #[test]
    fn reports_agree_with_separate_passes() {
        let model = toy(ModelKind::Ttn, 7);
        let ds = data(8, 150);
        let r = decompose(&model, &ds, 4, meta(), Execution::Parallel).unwrap();
        let seq = Execution::Sequential;
        assert_eq!(r.mean_l1, degree_magnitudes(&model, &ds, 4, seq).unwrap());
        assert_eq!(r.individual_accuracy, per_degree_accuracy(&model, &ds, 4, AccuracyMode::Individual, seq).unwrap());
        assert_eq!(r.cumulative_accuracy, per_degree_accuracy(&model, &ds, 4, AccuracyMode::Cumulative, seq).unwrap());
        let prefix = decompose(&model, &ds, 2, meta(), seq).unwrap();
        assert_eq!(prefix.mean_l1[..], r.mean_l1[..3]);
        assert_eq!(prefix.individual_accuracy[..], r.individual_accuracy[..3]);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let model = toy(ModelKind::Tr, 1);
        let r = decompose(&model, &data(2, 50), 4, meta(), Execution::Sequential).unwrap();
        let csv = r.to_csv().unwrap();
        assert!(csv.lines().any(|l| l == CSV_HEADER));
        assert_eq!(DecompositionReport::from_csv(&csv).unwrap(), r);
        assert_eq!(DecompositionReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert_eq!(r.file_name("csv"), "mnist_tr_2_full_4.csv");
    }

    #[test]
    fn empty_report_rejected() {
        let r = DecompositionReport {
            meta: meta(),
            degrees: vec![],
            mean_l1: vec![],
            individual_accuracy: vec![],
            cumulative_accuracy: vec![],
        };
        assert!(matches!(r.to_csv(), Err(AnalysisError::EmptyReport)));
        assert!(matches!(r.to_json(), Err(AnalysisError::EmptyReport)));
    }

    #[test]
    fn mean_sem_strings() {
        assert_eq!(format_mean_sem(96.2341, Some(0.0312), 2), "96.23(3)");
        assert_eq!(format_mean_sem(98.31, Some(0.02), 2), "98.31(2)");
        assert_eq!(format_mean_sem(70.27, Some(0.08), 2), "70.27(8)");
        assert_eq!(format_mean_sem(84.76, Some(0.07), 2), "84.76(7)");
        assert_eq!(format_mean_sem(98.31, None, 2), "98.31");
        assert_eq!(parse_mean_sem("96.23(3)").unwrap(), (96.23, Some(0.03)));
        assert_eq!(parse_mean_sem("98.54(1)").unwrap().1, Some(0.01));
        assert_eq!(parse_mean_sem("82.73").unwrap(), (82.73, None));
        assert!(parse_mean_sem("82.7(3").is_err());
    }

    #[test]
    fn ten_seed_aggregation() {
        // Ten accuracies with mean 96.23 and standard error 0.03.
        let offsets = [-0.15, -0.09, -0.06, -0.03, 0.0, 0.0, 0.03, 0.06, 0.09, 0.15];
        let runs: Vec<RunSummary> = offsets
            .iter()
            .enumerate()
            .map(|(s, o)| RunSummary {
                dataset: "mnist".into(),
                kind: ModelKind::Tr,
                bond: 20,
                features: 64,
                degree_set: "cum:2".into(),
                seed: s as u64,
                test_accuracy: (96.23 + o) / 100.0,
                hyperparameters: BTreeMap::new(),
            })
            .collect();
        let table = aggregate(&runs).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].model, "Cumulative TR");
        let cell = &table.rows[0].cells[0];
        assert_eq!(cell.column, "2");
        assert_eq!(cell.seeds, 10);
        assert_eq!(cell.text, "96.23(3)");
        assert!(table.to_csv().starts_with("model,2\nCumulative TR,96.23(3)\n"));

        let single = aggregate(&runs[..1]).unwrap();
        assert_eq!(single.rows[0].cells[0].text, "96.08");

        let mut mixed = runs.clone();
        mixed[3].bond = 10;
        assert!(matches!(aggregate(&mixed), Err(AnalysisError::Inconsistent { .. })));
        assert!(matches!(aggregate(&[]), Err(AnalysisError::NoRuns)));
    }

    #[test]
    fn argmax_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let v: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
            let c = rng.random_range(1e-3..1e3);
            let w: Vec<f64> = v.iter().map(|x| x * c).collect();
            assert_eq!(argmax(&v), argmax(&w));
        }
    }
}
