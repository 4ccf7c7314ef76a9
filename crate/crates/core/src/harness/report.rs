use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::Variant;
use crate::features::Task;
use crate::laketypes::LakeType;
use crate::{Error, Result};

/// Test-split score of one (lake type, task) in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub run: usize,
    pub seed: u64,
    pub lake_type: LakeType,
    pub task: Task,
    pub test_lake: String,
    pub observations: usize,
    pub rmse: f64,
    /// Error of the simulated labels on the same observations.
    pub sim_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub lake_type: LakeType,
    pub task: Task,
    pub runs: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub sim_rmse_mean: f64,
    pub sim_rmse_std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub variant: Variant,
    pub cells: Vec<CellResult>,
    pub event_logs: Vec<PathBuf>,
    pub gene_maps: Vec<PathBuf>,
}

impl Report {
    pub fn new(variant: Variant) -> Self {
        Report {
            variant,
            cells: Vec::new(),
            event_logs: Vec::new(),
            gene_maps: Vec::new(),
        }
    }

    pub fn refined(&self) -> bool {
        self.variant != Variant::NoRefine
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for lake_type in LakeType::ALL {
            for task in Task::ALL {
                let cells: Vec<&CellResult> = self
                    .cells
                    .iter()
                    .filter(|c| c.lake_type == lake_type && c.task == task)
                    .collect();
                if cells.is_empty() {
                    continue;
                }
                let (rmse_mean, rmse_std) = mean_std(&cells.iter().map(|c| c.rmse).collect::<Vec<_>>());
                let (sim_rmse_mean, sim_rmse_std) = mean_std(&cells.iter().map(|c| c.sim_rmse).collect::<Vec<_>>());
                rows.push(SummaryRow {
                    lake_type,
                    task,
                    runs: cells.len(),
                    rmse_mean,
                    rmse_std,
                    sim_rmse_mean,
                    sim_rmse_std,
                });
            }
        }
        rows
    }

    /// Mean test RMSE over every cell of every run.
    pub fn mean_rmse(&self) -> f64 {
        mean_std(&self.cells.iter().map(|c| c.rmse).collect::<Vec<_>>()).0
    }

    pub fn mean_rmse_of_run(&self, run: usize) -> f64 {
        mean_std(&self.cells.iter().filter(|c| c.run == run).map(|c| c.rmse).collect::<Vec<_>>()).0
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("variant,lake_type,task,runs,rmse_mean,rmse_std,sim_rmse_mean,sim_rmse_std,refined\n");
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                self.variant,
                r.lake_type,
                r.task,
                r.runs,
                r.rmse_mean,
                r.rmse_std,
                r.sim_rmse_mean,
                r.sim_rmse_std,
                self.refined()
            );
        }
        s
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("run,seed,lake_type,task,test_lake,observations,rmse,sim_rmse\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.run, c.seed, c.lake_type, c.task, c.test_lake, c.observations, c.rmse, c.sim_rmse
            );
        }
        s
    }

    /// Writes `report.csv` (per-cell mean and std) and `runs.csv`.
    pub fn write(&self, out: &Path) -> Result<()> {
        let p = out.join("report.csv");
        fs::write(&p, self.summary_csv()).map_err(|e| Error::io(&p, e))?;
        let p = out.join("runs.csv");
        fs::write(&p, self.runs_csv()).map_err(|e| Error::io(&p, e))
    }
}

pub fn write_ablation(path: &Path, reports: &[Report]) -> Result<()> {
    let mut s = String::from("variant,lake_type,task,rmse_mean,rmse_std\n");
    for r in reports {
        for row in r.summary() {
            let _ = writeln!(s, "{},{},{},{:.6},{:.6}", r.variant, row.lake_type, row.task, row.rmse_mean, row.rmse_std);
        }
        let _ = writeln!(s, "{},all,all,{:.6},", r.variant, r.mean_rmse());
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(run: usize, t: LakeType, rmse: f64) -> CellResult {
        CellResult {
            run,
            seed: run as u64,
            lake_type: t,
            task: Task::Epi,
            test_lake: "x".into(),
            observations: 3,
            rmse,
            sim_rmse: 2.0 * rmse,
        }
    }

    #[test]
    fn summary_uses_sample_std() {
        let mut r = Report::new(Variant::Full);
        r.cells = vec![cell(0, LakeType::S, 1.0), cell(1, LakeType::S, 3.0), cell(0, LakeType::M, 2.0)];
        let s = r.summary();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].rmse_mean, s[0].rmse_std, s[0].runs), (2.0, 2f64.sqrt(), 2));
        assert_eq!((s[1].rmse_std, s[1].sim_rmse_mean), (0.0, 4.0));
        assert_eq!(r.mean_rmse(), 2.0);
        assert_eq!(r.mean_rmse_of_run(0), 1.5);
        assert!(r.summary_csv().lines().nth(1).unwrap().starts_with("full,S,epi,2,2.000000,1.414214"));
    }
}
