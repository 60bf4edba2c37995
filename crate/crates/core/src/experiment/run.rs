use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use super::analysis::analyze_network;
use super::config::{cell_seed, CellKey, ExperimentConfig};
use super::manifest::{sha256_hex, CellMetrics, CellOutcome, CellRecord, FileEntry, Manifest, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::recnet::{train, Checkpoint};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub manifest: Manifest,
    /// Cells computed in this run.
    pub ran: Vec<CellKey>,
    /// Cells already present in the manifest and left untouched.
    pub skipped: Vec<CellKey>,
    /// Requested cells whose record is a failure.
    pub failed: Vec<CellKey>,
}

impl SweepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failed.is_empty()
    }
}

/// Trains and analyzes one cell, writing its files under `root`.
///
/// Training and analysis failures become a failed record; only I/O errors
/// are returned as errors.
pub fn run_cell(cfg: &ExperimentConfig, key: &CellKey, root: &Path) -> Result<CellRecord> {
    let seed = cell_seed(cfg.base_seed, key);
    let dir_name = key.dir();
    let dir = root.join(&dir_name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let failed = |e: Error| CellRecord {
        key: *key,
        seed,
        dir: dir_name.clone(),
        outcome: CellOutcome::Failed { error: e.to_string() },
        files: Vec::new(),
    };

    let (params, report) = match train(key.arch, key.task, key.regime, seed, &cfg.train) {
        Ok(trained) => trained,
        Err(e @ Error::Io { .. }) => return Err(e),
        Err(e) => return Ok(failed(e)),
    };
    let analysis = match analyze_network(&params, key.task, key.regime, &cfg.analysis, seed) {
        Ok(a) => a,
        Err(e @ Error::Io { .. }) => return Err(e),
        Err(e) => return Ok(failed(e)),
    };

    let checkpoint = Checkpoint::new(key.task, key.regime, seed, cfg.train.clone(), params, Some(report.clone()));
    let mut tables = vec![("checkpoint.json".to_string(), checkpoint.to_json()?.into_bytes())];
    tables.extend(analysis.tables()?);
    let mut files = Vec::with_capacity(tables.len());
    for (name, bytes) in tables {
        let path = dir.join(&name);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        files.push(FileEntry {
            path: format!("{dir_name}/{name}"),
            sha256: sha256_hex(&bytes),
        });
    }

    Ok(CellRecord {
        key: *key,
        seed,
        dir: dir_name,
        outcome: CellOutcome::Completed {
            metrics: CellMetrics {
                final_accuracy: report.final_accuracy,
                epochs_used: report.epochs_used,
                restarts: report.restarts,
                delay_accuracy: analysis.delay_accuracy.iter().map(|a| a.overall).collect(),
                correlation: analysis.correlation,
                overlap: analysis.overlap,
                usage: analysis.usage,
            },
        },
        files,
    })
}

/// Runs every requested cell that the manifest in the output directory does
/// not already hold. Completed cells whose files are missing or altered are
/// recomputed; failed cells are kept as recorded.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let root = cfg.output_dir.as_path();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let manifest_path = root.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        let m = Manifest::load(&manifest_path)?;
        if m.base_seed != cfg.base_seed {
            return Err(Error::invalid(format!(
                "{} was written with base seed {}, not {}",
                manifest_path.display(),
                m.base_seed,
                cfg.base_seed
            )));
        }
        m
    } else {
        Manifest::new(cfg.base_seed)
    };

    let cells = cfg.cells();
    let (skipped, todo): (Vec<CellKey>, Vec<CellKey>) = cells.iter().partition(|k| {
        manifest
            .get(k)
            .is_some_and(|r| !r.is_completed() || r.files_intact(root))
    });
    manifest.save(&manifest_path)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let shared = Mutex::new(manifest);
    pool.install(|| {
        todo.par_iter().try_for_each(|key| {
            let record = run_cell(cfg, key, root)?;
            let mut m = shared.lock().expect("manifest lock poisoned");
            m.upsert(record);
            m.save(&manifest_path)
        })
    })?;

    let manifest = shared.into_inner().expect("manifest lock poisoned");
    let failed = cells
        .iter()
        .filter(|k| manifest.get(k).is_some_and(|r| !r.is_completed()))
        .copied()
        .collect();
    Ok(SweepOutcome {
        manifest,
        ran: todo,
        skipped,
        failed,
    })
}
