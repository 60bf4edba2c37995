use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analysis::EVAL_DELAYS;
use super::manifest::{CellMetrics, Manifest};
use crate::error::{Error, Result};
use crate::recnet::Arch;
use crate::taskgen::{DelayRegime, Task};
use crate::temporal::UsageHistograms;

/// Mean and standard error (sample standard deviation over `sqrt(n)`); the
/// error is 0 for a single value.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub type GroupKey = (Task, Arch, DelayRegime);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub task: Task,
    pub arch: Arch,
    pub regime: DelayRegime,
    pub delay: usize,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalRow {
    pub arch: Arch,
    pub task: Task,
    pub regime: DelayRegime,
    pub replicate: usize,
    pub correlation: Option<f64>,
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalMean {
    pub task: Task,
    pub arch: Arch,
    pub regime: DelayRegime,
    pub n: usize,
    /// Mean over replicates with a defined correlation.
    pub correlation: Option<f64>,
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageMean {
    pub task: Task,
    pub arch: Arch,
    pub regime: DelayRegime,
    pub n: usize,
    pub usage: UsageHistograms,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub delay: Vec<DelayRow>,
    pub temporal: Vec<TemporalRow>,
    pub temporal_means: Vec<TemporalMean>,
    pub usage: Vec<UsageMean>,
}

/// Aggregates the completed cells of a manifest per (task, arch, regime).
pub fn summarize(manifest: &Manifest) -> Result<Summary> {
    let mut groups: BTreeMap<GroupKey, Vec<(usize, &CellMetrics)>> = BTreeMap::new();
    for rec in &manifest.cells {
        if let Some(m) = rec.metrics() {
            groups
                .entry((rec.key.task, rec.key.arch, rec.key.regime))
                .or_default()
                .push((rec.key.replicate, m));
        }
    }
    if groups.is_empty() {
        return Err(Error::invalid("manifest holds no completed cells"));
    }

    let mut summary = Summary::default();
    for (&(task, arch, regime), cells) in &groups {
        let n = cells.len();
        for delay in 0..EVAL_DELAYS {
            let values = cells
                .iter()
                .map(|(_, m)| {
                    m.delay_accuracy
                        .get(delay)
                        .copied()
                        .ok_or_else(|| Error::Parse(format!("cell lacks accuracy at delay {delay}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, se) = mean_se(&values);
            summary.delay.push(DelayRow {
                task,
                arch,
                regime,
                delay,
                n,
                mean,
                se,
            });
        }

        for (replicate, m) in cells {
            summary.temporal.push(TemporalRow {
                arch,
                task,
                regime,
                replicate: *replicate,
                correlation: m.correlation,
                overlap: m.overlap,
            });
        }
        let defined: Vec<f64> = cells.iter().filter_map(|(_, m)| m.correlation).collect();
        let overlaps: Vec<f64> = cells.iter().map(|(_, m)| m.overlap).collect();
        summary.temporal_means.push(TemporalMean {
            task,
            arch,
            regime,
            n,
            correlation: (!defined.is_empty()).then(|| mean_se(&defined).0),
            overlap: mean_se(&overlaps).0,
        });

        let mut usage = UsageHistograms {
            concepts_per_node: [0.0; 4],
            nodes_per_concept: [0.0; 13],
        };
        for (_, m) in cells {
            for (acc, v) in usage.concepts_per_node.iter_mut().zip(m.usage.concepts_per_node) {
                *acc += v / n as f64;
            }
            for (acc, v) in usage.nodes_per_concept.iter_mut().zip(m.usage.nodes_per_concept) {
                *acc += v / n as f64;
            }
        }
        summary.usage.push(UsageMean {
            task,
            arch,
            regime,
            n,
            usage,
        });
    }
    Ok(summary)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

impl Summary {
    /// `task,arch,regime,delay,n,mean,se`
    pub fn write_delay_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task", "arch", "regime", "delay", "n", "mean", "se"])?;
        for r in &self.delay {
            w.write_record([
                r.task.to_string(),
                r.arch.to_string(),
                r.regime.to_string(),
                r.delay.to_string(),
                r.n.to_string(),
                r.mean.to_string(),
                r.se.to_string(),
            ])?;
        }
        finish(w)
    }

    /// `arch,task,regime,replicate,r,overlap`
    pub fn write_temporal_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["arch", "task", "regime", "replicate", "r", "overlap"])?;
        for r in &self.temporal {
            w.write_record([
                r.arch.to_string(),
                r.task.to_string(),
                r.regime.to_string(),
                r.replicate.to_string(),
                opt(r.correlation),
                r.overlap.to_string(),
            ])?;
        }
        finish(w)
    }

    /// `task,arch,regime,n,mean_r,mean_overlap`
    pub fn write_temporal_means_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task", "arch", "regime", "n", "mean_r", "mean_overlap"])?;
        for r in &self.temporal_means {
            w.write_record([
                r.task.to_string(),
                r.arch.to_string(),
                r.regime.to_string(),
                r.n.to_string(),
                opt(r.correlation),
                r.overlap.to_string(),
            ])?;
        }
        finish(w)
    }

    /// `task,arch,regime,n,histogram,bin,fraction`
    pub fn write_usage_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task", "arch", "regime", "n", "histogram", "bin", "fraction"])?;
        for u in &self.usage {
            let hists: [(&str, &[f64]); 2] = [
                ("concepts_per_node", &u.usage.concepts_per_node),
                ("nodes_per_concept", &u.usage.nodes_per_concept),
            ];
            for (name, values) in hists {
                for (bin, f) in values.iter().enumerate() {
                    w.write_record([
                        u.task.to_string(),
                        u.arch.to_string(),
                        u.regime.to_string(),
                        u.n.to_string(),
                        name.to_string(),
                        bin.to_string(),
                        f.to_string(),
                    ])?;
                }
            }
        }
        finish(w)
    }

    /// Writes the four summary tables into `dir`, returning their names.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(name.to_string());
            Ok(())
        };
        let mut buf = Vec::new();
        self.write_delay_csv(&mut buf)?;
        put("summary_delay.csv", std::mem::take(&mut buf))?;
        self.write_temporal_csv(&mut buf)?;
        put("summary_temporal.csv", std::mem::take(&mut buf))?;
        self.write_temporal_means_csv(&mut buf)?;
        put("summary_temporal_means.csv", std::mem::take(&mut buf))?;
        self.write_usage_csv(&mut buf)?;
        put("summary_usage.csv", buf)?;
        Ok(written)
    }
}
