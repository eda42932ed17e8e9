use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::lab::{write_json, Lab};
use crate::experiments::record::{CellRecord, RunRecord};
use crate::geometry::{
    aggregate_cross_init, pairwise_similarity, AggregateSimilarity, LabeledTensor, SimilarityKind,
    SimilarityReport,
};
use crate::prompt::{SoftPrompt, TaskPromptVector};
use crate::store::write_atomic;

/// Pairwise matrix plus its task-level aggregate, as written for heatmaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub report: SimilarityReport,
    pub aggregate: AggregateSimilarity,
    pub same_task_mean: f64,
    pub cross_task_mean: f64,
}

#[derive(Debug, Clone)]
pub struct SimilarityOutput {
    pub prompts: Heatmap,
    pub tpvs: Heatmap,
    pub record: RunRecord,
}

/// Cosine similarity of tuned prompts and of their vectors across tasks and inits.
pub fn cmd_similarity(lab: &Lab) -> Result<SimilarityOutput> {
    let started = Instant::now();
    let m = &lab.manifest;
    lab.require_trained(&m.tasks)?;
    let cells: Vec<(String, u64)> = m
        .tasks
        .iter()
        .flat_map(|t| m.init_seeds.iter().map(move |&s| (t.clone(), s)))
        .collect();
    let loaded: Vec<(SoftPrompt, TaskPromptVector)> = lab
        .run(&cells, |(t, s)| Ok((lab.tuned(t, *s)?, lab.tpv(t, *s)?)))
        .into_iter()
        .collect::<Result<_>>()?;

    let prompt_items: Vec<LabeledTensor> = loaded
        .iter()
        .map(|(p, _)| LabeledTensor {
            task_id: p.task_id().unwrap_or_default(),
            init_id: p.init_id(),
            values: p.weights(),
        })
        .collect();
    let tpv_items: Vec<LabeledTensor> = loaded
        .iter()
        .map(|(_, v)| LabeledTensor {
            task_id: &v.task_ids()[0],
            init_id: v.init_id(),
            values: v.delta(),
        })
        .collect();

    let dir = lab.out().join("similarity");
    let mut outputs = Vec::new();
    let mut maps = Vec::new();
    for (items, kind) in [
        (&prompt_items, SimilarityKind::TaskPrompt),
        (&tpv_items, SimilarityKind::TaskPromptVector),
    ] {
        let report = pairwise_similarity(items, kind)?;
        let aggregate = aggregate_cross_init(&report, m.aggregation)?;
        let (same, cross) = aggregate.same_vs_cross();
        let heat = Heatmap {
            report,
            aggregate,
            same_task_mean: same,
            cross_task_mean: cross,
        };
        let csv_path = dir.join(format!("{}_matrix.csv", kind.as_str()));
        let json_path = dir.join(format!("{}_heatmap.json", kind.as_str()));
        let mut buf = Vec::new();
        heat.report.write_csv(&mut buf)?;
        write_atomic(&csv_path, &buf)?;
        write_json(&json_path, &heat)?;
        outputs.push(csv_path);
        outputs.push(json_path);
        maps.push(heat);
    }
    let tpvs = maps.pop().ok_or(Error::Empty("similarity output"))?;
    let prompts = maps.pop().ok_or(Error::Empty("similarity output"))?;
    let record = lab.record(
        "similarity",
        vec![CellRecord::ok("prompts"), CellRecord::ok("tpvs")],
        outputs,
        started,
    );
    record.write(&dir.join("run.json"))?;
    Ok(SimilarityOutput {
        prompts,
        tpvs,
        record,
    })
}
