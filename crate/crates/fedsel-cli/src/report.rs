//! Cross-run comparison: reads each run directory's manifest and round
//! records, aligns on the shortest horizon, and renders a Markdown table of
//! accuracy checkpoints plus cost totals.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fedsel_core::engine::{CostCounters, RoundRecord};
use fedsel_core::Error;

/// Written next to a run's logs; everything except the timestamps is stable
/// across reruns of the same config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub strategy: String,
    pub seed: u64,
    pub rounds: usize,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    pub totals: CostCounters,
    pub partition_residual: Option<f64>,
    pub excluded_clients: Vec<usize>,
}

pub struct RunData {
    pub name: String,
    pub manifest: RunManifest,
    pub accuracy: Vec<f64>,
}

pub fn load_run(dir: &Path) -> Result<RunData, Error> {
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let records_text = fs::read_to_string(dir.join("records.jsonl"))?;
    let mut accuracy = Vec::new();
    for (i, line) in records_text.lines().enumerate() {
        let record: RoundRecord = serde_json::from_str(line)?;
        if record.round != i + 1 {
            return Err(Error::Logic(format!(
                "{}: line {} holds round {}",
                dir.display(),
                i + 1,
                record.round
            )));
        }
        accuracy.push(record.accuracy);
    }
    if accuracy.is_empty() {
        return Err(Error::Logic(format!("{}: no round records", dir.display())));
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(RunData { name, manifest, accuracy })
}

/// 1-based round index of a percentage checkpoint: floor(pct·T/100), at
/// least 1.
fn checkpoint_round(pct: usize, horizon: usize) -> usize {
    (pct * horizon / 100).max(1)
}

/// Markdown table over the given runs, plus a warning when horizons differ
/// (all columns are then aligned on the shortest).
pub fn render(runs: &[RunData]) -> (String, Option<String>) {
    let t_min = runs.iter().map(|r| r.accuracy.len()).min().unwrap();
    let t_max = runs.iter().map(|r| r.accuracy.len()).max().unwrap();
    let warning = (t_min != t_max).then(|| {
        format!("runs have differing horizons ({t_min} to {t_max} rounds); aligning on T={t_min}")
    });

    let cps: Vec<usize> = [15usize, 50, 100]
        .iter()
        .map(|&p| checkpoint_round(p, t_min))
        .collect();
    let mut out = String::from("# Run comparison\n\n");
    out.push_str(&format!(
        "Aligned horizon T={t_min}; checkpoints at rounds {}, {}, {}.\n\n",
        cps[0], cps[1], cps[2]
    ));
    out.push_str("| run | strategy | seed | rounds | acc@15% | acc@50% | acc@100% | last-10 mean ± max dev | trainings | loss evals | transfers |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for run in runs {
        let window = &run.accuracy[t_min.saturating_sub(10)..t_min];
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let dev = window.iter().map(|a| (a - mean).abs()).fold(0.0, f64::max);
        out.push_str(&format!(
            "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} ± {:.4} | {} | {} | {} |\n",
            run.name,
            run.manifest.strategy,
            run.manifest.seed,
            run.accuracy.len(),
            run.accuracy[cps[0] - 1],
            run.accuracy[cps[1] - 1],
            run.accuracy[cps[2] - 1],
            mean,
            dev,
            run.manifest.totals.trainings,
            run.manifest.totals.loss_evaluations,
            run.manifest.totals.transfers,
        ));
    }
    (out, warning)
}

pub fn cmd_report(dirs: &[PathBuf], out: Option<&Path>) -> Result<(), Error> {
    let runs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    let (table, warning) = render(&runs);
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    match out {
        Some(path) => fs::write(path, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_with(name: &str, accuracy: Vec<f64>) -> RunData {
        RunData {
            name: name.to_string(),
            manifest: RunManifest {
                version: "0.1.0".to_string(),
                config_hash: "00".repeat(32),
                strategy: "gpcb".to_string(),
                seed: 3,
                rounds: accuracy.len(),
                started_at: "2026-01-01T00:00:00Z".to_string(),
                finished_at: "2026-01-01T00:00:01Z".to_string(),
                outputs: vec![],
                totals: CostCounters { trainings: 40, loss_evaluations: 0, transfers: 80 },
                partition_residual: None,
                excluded_clients: vec![],
            },
            accuracy,
        }
    }

    #[test]
    fn checkpoint_rounds_floor_and_clamp() {
        assert_eq!(checkpoint_round(50, 200), 100);
        assert_eq!(checkpoint_round(15, 150), 22);
        assert_eq!(checkpoint_round(100, 7), 7);
        assert_eq!(checkpoint_round(15, 3), 1);
    }

    #[test]
    fn table_reads_the_right_rounds() {
        // accuracy at round t is t/100.
        let run = run_with("a", (1..=20).map(|t| t as f64 / 100.0).collect());
        let (table, warning) = render(&[run]);
        assert!(warning.is_none());
        // T=20: checkpoints at rounds 3, 10, 20.
        assert!(table.contains("| 0.0300 | 0.1000 | 0.2000 |"), "{table}");
        // Last-10 window is rounds 11..=20: mean 0.155, max deviation 0.045.
        assert!(table.contains("| 0.1550 ± 0.0450 |"), "{table}");
        assert!(table.contains("| 40 | 0 | 80 |"));
    }

    #[test]
    fn mismatched_horizons_warn_and_align_short() {
        let a = run_with("a", (1..=20).map(|t| t as f64 / 100.0).collect());
        let b = run_with("b", (1..=10).map(|t| t as f64 / 100.0).collect());
        let (table, warning) = render(&[a, b]);
        let warning = warning.unwrap();
        assert!(warning.contains("aligning on T=10"), "{warning}");
        // Checkpoints for both rows read rounds 1, 5, 10.
        assert!(table.contains("| a | gpcb | 3 | 20 | 0.0100 | 0.0500 | 0.1000 |"), "{table}");
        assert!(table.contains("| b | gpcb | 3 | 10 | 0.0100 | 0.0500 | 0.1000 |"), "{table}");
    }

    #[test]
    fn short_runs_shrink_the_window() {
        let run = run_with("tiny", vec![0.5, 0.7]);
        let (table, _) = render(&[run]);
        // Window is both rounds: mean 0.6, deviation 0.1.
        assert!(table.contains("0.6000 ± 0.1000"), "{table}");
    }
}
