//! Implementations of the `prepare`, `train`, `decompose` and `report`
//! subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tnid_core::analysis::{self, ReportMeta, RunSummary};
use tnid_core::data::{prepare_split, CacheHeader, Dataset, IdxSource, Split};
use tnid_core::grad::{self, EpochMetrics, GradError};
use tnid_core::model::CheckpointMeta;
use tnid_core::{ModelKind, TensorNetwork};

use crate::config::ExperimentConfig;
use crate::error::CliError;

const CONFIG_TRAILER: &[u8; 4] = b"CONF";

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

pub fn cache_path(cfg: &ExperimentConfig, split: Split) -> PathBuf {
    cfg.effective_cache_dir().join(format!(
        "{}_{}_{}_{}.tnds",
        cfg.dataset,
        split_name(split),
        cfg.filter,
        cfg.side
    ))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::Data(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = cfg.effective_cache_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    for split in [Split::Train, Split::Test] {
        let source = IdxSource::in_dir(&cfg.source_dir(), split)?;
        let digest = source.digest()?;
        let path = cache_path(cfg, split);
        if let Ok(h) = CacheHeader::from_file(&path) {
            if h.source_digest == digest && h.filter == cfg.filter && h.n_features == cfg.features() {
                println!(
                    "{} {}: up to date, N={} m={} sha256={}",
                    cfg.dataset,
                    split_name(split),
                    h.count,
                    h.n_features,
                    digest
                );
                continue;
            }
        }
        let ds = prepare_split(&source, split, cfg.filter, cfg.side, cfg.execution)?;
        let mut buf = Vec::new();
        ds.write_cache(&mut buf)?;
        write_atomic(&path, &buf)?;
        println!(
            "{} {}: wrote {}, N={} m={} sha256={}",
            cfg.dataset,
            split_name(split),
            path.display(),
            ds.len(),
            ds.n_features(),
            ds.provenance().source_digest
        );
    }
    Ok(())
}

pub fn load_split(cfg: &ExperimentConfig, split: Split) -> Result<Dataset, CliError> {
    let path = cache_path(cfg, split);
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "missing dataset cache {}; run `tnid prepare` first",
            path.display()
        )));
    }
    Ok(Dataset::load(&path)?)
}

fn stem(cfg: &ExperimentConfig, kind: ModelKind, tag: &str, seed: u64) -> String {
    analysis::run_file_name(&cfg.dataset, kind, cfg.bond, tag, seed, "")
        .trim_end_matches('.')
        .to_string()
}

/// Everything recorded about one training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub config: BTreeMap<String, String>,
    pub source_digests: BTreeMap<String, String>,
    pub history: Vec<EpochMetrics>,
}

pub fn train(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dset = cfg.degree_set()?;
    let mut train_ds = load_split(cfg, Split::Train)?;
    if cfg.train_limit > 0 {
        train_ds = train_ds.head(cfg.train_limit);
    }
    let test_ds = load_split(cfg, Split::Test)?;
    let digests = BTreeMap::from([
        ("train".to_string(), train_ds.provenance().source_digest.clone()),
        ("test".to_string(), test_ds.provenance().source_digest.clone()),
    ]);
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Data(format!("{}: {e}", cfg.out.display())))?;
    let mut resolved = cfg.resolved();
    for seed in &cfg.seeds {
        let seed = *seed;
        resolved.insert("seed".into(), seed.to_string());
        let name = stem(cfg, cfg.kind, &dset.tag(), seed);
        let mut model = TensorNetwork::init(
            cfg.kind,
            cfg.features(),
            cfg.bond,
            cfg.classes,
            seed,
            cfg.init_scheme(),
        )?;
        let log_path = cfg.out.join(format!("{name}.log.jsonl"));
        let log_file = fs::File::create(&log_path)?;
        let mut log = BufWriter::new(log_file);
        let mut io_error = None;
        let result = grad::train(
            &mut model,
            &train_ds,
            Some(&test_ds),
            &dset,
            &cfg.loss_config(seed),
            cfg.execution,
            |m| {
                let line = serde_json::to_string(m).expect("metrics serialize");
                if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
                    io_error.get_or_insert(e);
                }
                eprintln!(
                    "[{name}] epoch {} loss {:.6} test {:.4} ({:.1}s)",
                    m.epoch,
                    m.train_loss,
                    m.test_accuracy.unwrap_or(f64::NAN),
                    m.wall_time_s
                );
            },
        );
        drop(log);
        if let Some(e) = io_error {
            return Err(e.into());
        }
        let history = match result {
            Ok(h) => h,
            Err(e @ GradError::Diverged { .. }) => {
                return Err(CliError::Diverged(format!("{name}: {e}")));
            }
            Err(e) => return Err(e.into()),
        };
        let test_accuracy = match history.last().and_then(|h| h.test_accuracy) {
            Some(a) => a,
            None => grad::accuracy(&model, &test_ds, &dset, cfg.execution)?,
        };

        let mut ckpt = Vec::new();
        model.write_checkpoint(
            &mut ckpt,
            &CheckpointMeta {
                seed,
                init: cfg.init_scheme(),
            },
        )?;
        let trailer = serde_json::to_vec(&resolved).expect("config serializes");
        ckpt.extend_from_slice(CONFIG_TRAILER);
        ckpt.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
        ckpt.extend_from_slice(&trailer);
        write_atomic(&cfg.out.join(format!("{name}.ckpt")), &ckpt)?;

        let record = RunRecord {
            summary: RunSummary {
                dataset: cfg.dataset.clone(),
                kind: cfg.kind,
                bond: cfg.bond,
                features: cfg.features(),
                degree_set: dset.spec(),
                seed,
                test_accuracy,
                hyperparameters: cfg.hyperparameters(),
            },
            config: resolved.clone(),
            source_digests: digests.clone(),
            history,
        };
        let mut seed_cfg = cfg.clone();
        seed_cfg.seeds = vec![seed];
        write_atomic(&cfg.out.join(format!("{name}.conf")), seed_cfg.to_text().as_bytes())?;
        let json = serde_json::to_string_pretty(&record).expect("record serializes");
        write_atomic(&cfg.out.join(format!("{name}.json")), json.as_bytes())?;
        println!("{name}: test accuracy {:.2}%", 100.0 * test_accuracy);
    }
    Ok(())
}

/// Reads a checkpoint and the configuration stored after it.
pub fn read_checkpoint(path: &Path) -> Result<(TensorNetwork, CheckpointMeta, BTreeMap<String, String>), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut reader = bytes.as_slice();
    let (model, meta) = TensorNetwork::read_checkpoint(&mut reader)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    let config = if rest.len() >= 12 && &rest[..4] == CONFIG_TRAILER {
        let len = u64::from_le_bytes(rest[4..12].try_into().expect("8 bytes")) as usize;
        let body = rest
            .get(12..12 + len)
            .ok_or_else(|| CliError::Data(format!("{}: truncated config trailer", path.display())))?;
        serde_json::from_slice(body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
    } else {
        BTreeMap::new()
    };
    Ok((model, meta, config))
}

pub fn decompose(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let test_ds = load_split(cfg, Split::Test)?;
    let paths = match checkpoint {
        Some(p) => vec![p],
        None => {
            let tag = cfg.degree_set()?.tag();
            cfg.seeds
                .iter()
                .map(|&s| cfg.out.join(format!("{}.ckpt", stem(cfg, cfg.kind, &tag, s))))
                .collect()
        }
    };
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Data(format!("{}: {e}", cfg.out.display())))?;
    for path in paths {
        let (model, meta, mut config) = read_checkpoint(&path)?;
        if model.features() != test_ds.n_features() {
            return Err(CliError::Data(format!(
                "{} expects {} features but the {} test set has {}",
                path.display(),
                model.features(),
                cfg.dataset,
                test_ds.n_features()
            )));
        }
        let m = model.features();
        let j_max = cfg.j_max.unwrap_or(m);
        if j_max > m {
            return Err(CliError::Config(format!("j_max {j_max} exceeds the feature count {m}")));
        }
        config.insert("j_max".into(), j_max.to_string());
        let report_meta = ReportMeta {
            dataset: config.get("dataset").cloned().unwrap_or_else(|| cfg.dataset.clone()),
            kind: model.kind(),
            bond: model.bond(),
            features: m,
            seed: meta.seed,
            degree_set: config.get("degrees").cloned().unwrap_or_else(|| "full".into()),
            config,
        };
        let report = analysis::decompose(&model, &test_ds, j_max, report_meta, cfg.execution)?;
        let csv_path = cfg.out.join(report.file_name("csv"));
        write_atomic(&csv_path, report.to_csv()?.as_bytes())?;
        write_atomic(
            &cfg.out.join(report.file_name("decomposition.json")),
            report.to_json()?.as_bytes(),
        )?;
        println!(
            "{}: {} degrees, cumulative accuracy at j={} is {:.2}%",
            csv_path.display(),
            report.degrees.len(),
            j_max,
            100.0 * report.cumulative_accuracy.last().copied().unwrap_or(0.0)
        );
    }
    Ok(())
}

pub fn report(cfg: &ExperimentConfig, dataset: Option<&str>, kind: Option<ModelKind>) -> Result<(), CliError> {
    let dir = &cfg.out;
    let entries = fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && !p.to_string_lossy().ends_with(".decomposition.json")
                && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("report_"))
        })
        .collect();
    paths.sort();
    let mut runs = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let Ok(record) = serde_json::from_str::<RunRecord>(&text) else {
            continue;
        };
        if dataset.is_some_and(|d| d != record.summary.dataset) || kind.is_some_and(|k| k != record.summary.kind) {
            continue;
        }
        runs.push(record.summary);
    }
    if runs.is_empty() {
        return Err(CliError::Data(format!("no completed runs in {}", dir.display())));
    }
    let table = analysis::aggregate(&runs)?;
    let base = format!("report_{}_{}", table.dataset, table.bond);
    let csv = table.to_csv();
    write_atomic(&dir.join(format!("{base}.csv")), csv.as_bytes())?;
    write_atomic(&dir.join(format!("{base}.json")), table.to_json().as_bytes())?;
    print!("{csv}");
    Ok(())
}
