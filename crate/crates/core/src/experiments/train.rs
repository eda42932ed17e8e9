use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::lab::{write_csv, Lab};
use crate::experiments::record::{CellRecord, RunRecord};
use crate::lab::{evaluate, init_id_for_seed, tune_prompt, MetricReport, Split, TrainConfig};
use crate::store::{save_prompt, sidecar_path};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub task: String,
    pub init: String,
    pub exact_match: f64,
    pub macro_f1: f64,
}

/// Tunes one prompt per task and init seed.
pub fn cmd_train(lab: &Lab) -> Result<RunRecord> {
    let started = Instant::now();
    let m = &lab.manifest;
    let cells: Vec<(String, u64)> = m
        .tasks
        .iter()
        .flat_map(|t| m.init_seeds.iter().map(move |&s| (t.clone(), s)))
        .collect();
    let results = lab.run(&cells, |(task_id, seed)| {
        let task = lab.task(task_id)?;
        let cfg = TrainConfig {
            seed: lab.seed_for(&[0x7EA1, lab.task_index(task_id), *seed]),
            ..m.train.clone()
        };
        let tuned = tune_prompt(&lab.model, &lab.init(*seed)?, task, &cfg)?;
        let path = lab.prompt_path(task_id, *seed);
        save_prompt(&tuned, &path)?;
        let report = evaluate(&lab.model, &tuned, task, Split::Test)?;
        Ok((cfg.seed, report, path))
    });
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for ((task, seed), res) in cells.iter().zip(results) {
        let id = format!("{task}/{}", init_id_for_seed(*seed));
        match res {
            Ok((train_seed, report, path)) => {
                rows.push(row(task, *seed, &report));
                let side = sidecar_path(&path);
                records.push(CellRecord {
                    seed: Some(train_seed),
                    metrics: Some(report),
                    files: vec![path, side],
                    ..CellRecord::ok(id)
                });
            }
            Err(e) => {
                log::warn!("cell {id} failed: {e}");
                records.push(CellRecord::failed(id, e));
            }
        }
    }
    let dir = lab.out().join("train");
    let scores = dir.join("scores.csv");
    write_csv(&scores, &rows)?;
    let record = lab.record("train", records, vec![scores], started);
    record.write(&dir.join("run.json"))?;
    Ok(record)
}

fn row(task: &str, seed: u64, r: &MetricReport) -> TrainRow {
    TrainRow {
        task: task.to_string(),
        init: init_id_for_seed(seed),
        exact_match: r.exact_match,
        macro_f1: r.macro_f1,
    }
}
