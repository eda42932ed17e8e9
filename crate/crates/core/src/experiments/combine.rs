use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algebra::{add_tpvs, apply_tpv, lambda_sweep_with, LambdaSweepResult};
use crate::error::Result;
use crate::experiments::lab::{write_csv, write_json, Lab};
use crate::experiments::record::{CellRecord, RunRecord};
use crate::lab::{evaluate, init_id_for_seed, Split};
use crate::prompt::SoftPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombineRow {
    pub task_a: String,
    pub task_b: String,
    pub init: String,
    pub lambda: f64,
    pub exact_match_a: f64,
    pub exact_match_b: f64,
    pub direct_a: f64,
    pub direct_b: f64,
    /// Combined score over the single-task score.
    pub relative_a: f64,
    pub relative_b: f64,
    /// A task combined with itself.
    pub degenerate: bool,
}

impl CombineRow {
    pub fn min_relative(&self) -> f64 {
        self.relative_a.min(self.relative_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombineSweep {
    pub task_a: String,
    pub task_b: String,
    pub init: String,
    pub sweep: LambdaSweepResult,
}

#[derive(Debug, Clone)]
pub struct CombineOutput {
    pub rows: Vec<CombineRow>,
    pub sweeps: Vec<CombineSweep>,
    pub record: RunRecord,
}

/// Sums each pair's vectors, picks λ on validation and scores both tasks on test.
pub fn cmd_combine_eval(lab: &Lab) -> Result<CombineOutput> {
    let started = Instant::now();
    let m = &lab.manifest;
    lab.require_trained(&m.tasks)?;
    let cells: Vec<(String, String, u64)> = m
        .task_pairs()
        .into_iter()
        .flat_map(|(a, b)| m.init_seeds.iter().map(move |&s| (a.clone(), b.clone(), s)))
        .collect();
    let results = lab.run(&cells, |(a, b, seed)| {
        let (ta, tb) = (lab.task(a)?, lab.task(b)?);
        let init = lab.init(*seed)?;
        let combo = add_tpvs(&lab.tpv(a, *seed)?, &lab.tpv(b, *seed)?)?;
        let val = |task_id: &str, p: &SoftPrompt| -> Result<f64> {
            Ok(evaluate(&lab.model, p, lab.task(task_id)?, Split::Val)?.exact_match)
        };
        let sweep = lambda_sweep_with(&init, &combo, &m.lambda_grid, &val, m.selection_metric)?;
        let combined = apply_tpv(&init, &combo, sweep.best_lambda)?;
        let test = |p: &SoftPrompt, t| -> Result<f64> {
            Ok(evaluate(&lab.model, p, t, Split::Test)?.exact_match)
        };
        let (ea, eb) = (test(&combined, ta)?, test(&combined, tb)?);
        let (da, db) = (
            test(&lab.tuned(a, *seed)?, ta)?,
            test(&lab.tuned(b, *seed)?, tb)?,
        );
        let row = CombineRow {
            task_a: a.clone(),
            task_b: b.clone(),
            init: init_id_for_seed(*seed),
            lambda: sweep.best_lambda,
            exact_match_a: ea,
            exact_match_b: eb,
            direct_a: da,
            direct_b: db,
            relative_a: ea / da,
            relative_b: eb / db,
            degenerate: a == b,
        };
        Ok((row, sweep))
    });
    let mut rows = Vec::new();
    let mut sweeps = Vec::new();
    let mut records = Vec::new();
    for ((a, b, seed), res) in cells.iter().zip(results) {
        let id = format!("{a}+{b}/{}", init_id_for_seed(*seed));
        match res {
            Ok((row, sweep)) => {
                if row.degenerate {
                    log::info!(
                        "{id}: task combined with itself, relative scores reflect a doubled vector"
                    );
                }
                sweeps.push(CombineSweep {
                    task_a: a.clone(),
                    task_b: b.clone(),
                    init: row.init.clone(),
                    sweep,
                });
                rows.push(row);
                records.push(CellRecord::ok(id));
            }
            Err(e) => records.push(CellRecord::failed(id, e)),
        }
    }
    let dir = lab.out().join("combine");
    let pairs = dir.join("pairs.csv");
    let sweep_path = dir.join("sweeps.json");
    write_csv(&pairs, &rows)?;
    write_json(&sweep_path, &sweeps)?;
    let record = lab.record("combine-eval", records, vec![pairs, sweep_path], started);
    record.write(&dir.join("run.json"))?;
    Ok(CombineOutput {
        rows,
        sweeps,
        record,
    })
}
