use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_rows, HarnessError, MetricRow};

/// Aggregate over seeds at one point of the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub config: String,
    pub episodes: u64,
    pub seeds: usize,
    pub env_steps_mean: f64,
    pub score_mean: f64,
    pub score_min: f64,
    pub score_max: f64,
    pub win_rate_mean: f64,
    pub generation_mean: f64,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| HarnessError::Io(format!("{}: {e}", path.display()))))
        .collect()
}

/// Mean and min/max band across seeds, per configuration, on the shared
/// episode grid. Seeds that stopped early contribute to the prefix they reached.
pub fn emit_curves<P: AsRef<Path>>(files: &[P], out: Option<&Path>) -> Result<Vec<CurvePoint>, HarnessError> {
    if files.is_empty() {
        return Err(HarnessError::ConfigInvalid("no metrics files given".into()));
    }
    // config -> seed -> rows
    let mut runs: BTreeMap<String, BTreeMap<u64, Vec<MetricRow>>> = BTreeMap::new();
    for f in files {
        for row in read_metrics(f.as_ref())? {
            runs.entry(row.config.clone()).or_default().entry(row.seed).or_default().push(row);
        }
    }
    let mut points = Vec::new();
    for (config, seeds) in &runs {
        let mut interval: Option<u64> = None;
        for (seed, rows) in seeds {
            let step = rows[0].episodes;
            for (k, r) in rows.iter().enumerate() {
                if r.episodes != step * (k as u64 + 1) {
                    return Err(HarnessError::MisalignedGrids(format!(
                        "{config} seed {seed}: row {k} at episode {} breaks the {step}-episode grid",
                        r.episodes
                    )));
                }
            }
            match interval {
                None => interval = Some(step),
                Some(i) if i != step => {
                    return Err(HarnessError::MisalignedGrids(format!(
                        "{config}: evaluation intervals {i} and {step} differ"
                    )))
                }
                _ => {}
            }
        }
        let longest = seeds.values().map(Vec::len).max().unwrap_or(0);
        for k in 0..longest {
            let at: Vec<&MetricRow> = seeds.values().filter_map(|rows| rows.get(k)).collect();
            let n = at.len() as f64;
            let mean = |f: fn(&MetricRow) -> f64| at.iter().map(|r| f(r)).sum::<f64>() / n;
            points.push(CurvePoint {
                config: config.clone(),
                episodes: at[0].episodes,
                seeds: at.len(),
                env_steps_mean: mean(|r| r.env_steps as f64),
                score_mean: mean(|r| r.eval_score),
                score_min: at.iter().map(|r| r.eval_score).fold(f64::INFINITY, f64::min),
                score_max: at.iter().map(|r| r.eval_score).fold(f64::NEG_INFINITY, f64::max),
                win_rate_mean: mean(|r| r.win_rate),
                generation_mean: mean(|r| r.generation as f64),
            });
        }
    }
    if let Some(path) = out {
        write_rows(path, &points)?;
    }
    Ok(points)
}
