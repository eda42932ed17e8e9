use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algebra::apply_tpv;
use crate::error::Result;
use crate::experiments::lab::{write_csv, write_json, Lab};
use crate::experiments::record::{CellRecord, RunRecord};
use crate::lab::{evaluate, init_id_for_seed, Split};
use crate::stats::{significance_table, SampleSummary, SignificanceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// The tuned prompt itself.
    Direct,
    /// Another init's vector applied to this init.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossInitRow {
    pub task: String,
    pub kind: ScoreKind,
    pub source_init: String,
    pub target_init: String,
    pub exact_match: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossInitSummary {
    pub task: String,
    pub direct_mean: f64,
    pub direct_std: f64,
    pub direct_n: usize,
    pub cross_mean: f64,
    pub cross_std: f64,
    pub cross_n: usize,
    pub significance: Option<SignificanceReport>,
}

impl CrossInitSummary {
    pub fn marker(&self) -> &'static str {
        self.significance
            .as_ref()
            .map_or("", SignificanceReport::marker)
    }
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow<'a> {
    task: &'a str,
    direct_mean: f64,
    direct_std: f64,
    cross_mean: f64,
    cross_std: f64,
    better: &'a str,
    p: Option<f64>,
    p_adjusted: Option<f64>,
    marker: &'a str,
}

#[derive(Debug, Clone)]
pub struct CrossInitOutput {
    pub rows: Vec<CrossInitRow>,
    pub summaries: Vec<CrossInitSummary>,
    pub record: RunRecord,
}

/// Scores every task's vector from each init applied to every other init.
pub fn cmd_cross_init(lab: &Lab) -> Result<CrossInitOutput> {
    let started = Instant::now();
    let m = &lab.manifest;
    lab.require_trained(&m.tasks)?;
    let mut cells = Vec::new();
    for t in &m.tasks {
        for &src in &m.init_seeds {
            for &dst in &m.init_seeds {
                let kind = if src == dst {
                    ScoreKind::Direct
                } else {
                    ScoreKind::Cross
                };
                cells.push((t.clone(), kind, src, dst));
            }
        }
    }
    let results = lab.run(&cells, |(task_id, kind, src, dst)| {
        let task = lab.task(task_id)?;
        let prompt = match kind {
            ScoreKind::Direct => lab.tuned(task_id, *src)?,
            ScoreKind::Cross => apply_tpv(&lab.init(*dst)?, &lab.tpv(task_id, *src)?, 1.0)?,
        };
        evaluate(&lab.model, &prompt, task, Split::Test)
    });
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for ((task, kind, src, dst), res) in cells.iter().zip(results) {
        let id = format!(
            "{task}/{}->{}",
            init_id_for_seed(*src),
            init_id_for_seed(*dst)
        );
        match res {
            Ok(r) => {
                rows.push(CrossInitRow {
                    task: task.clone(),
                    kind: *kind,
                    source_init: init_id_for_seed(*src),
                    target_init: init_id_for_seed(*dst),
                    exact_match: r.exact_match,
                    macro_f1: r.macro_f1,
                });
                records.push(CellRecord {
                    metrics: Some(r),
                    ..CellRecord::ok(id)
                });
            }
            Err(e) => records.push(CellRecord::failed(id, e)),
        }
    }
    let summaries = summarize(&m.tasks, &rows)?;

    let dir = lab.out().join("cross_init");
    let scores = dir.join("scores.csv");
    let summary_csv = dir.join("summary.csv");
    let summary_json = dir.join("summary.json");
    write_csv(&scores, &rows)?;
    let flat: Vec<SummaryRow> = summaries
        .iter()
        .map(|s| SummaryRow {
            task: &s.task,
            direct_mean: s.direct_mean,
            direct_std: s.direct_std,
            cross_mean: s.cross_mean,
            cross_std: s.cross_std,
            better: s.significance.as_ref().map_or("", |r| r.best.as_str()),
            p: s.significance.as_ref().map(|r| r.test.p),
            p_adjusted: s.significance.as_ref().map(|r| r.p_adjusted),
            marker: s.marker(),
        })
        .collect();
    write_csv(&summary_csv, &flat)?;
    write_json(&summary_json, &summaries)?;
    let record = lab.record(
        "cross-init",
        records,
        vec![scores, summary_csv, summary_json],
        started,
    );
    record.write(&dir.join("run.json"))?;
    Ok(CrossInitOutput {
        rows,
        summaries,
        record,
    })
}

/// Per-task means and standard deviations, with a direct-vs-cross test
/// Bonferroni-corrected across tasks.
pub fn summarize(tasks: &[String], rows: &[CrossInitRow]) -> Result<Vec<CrossInitSummary>> {
    let collect = |task: &str, kind| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.task == task && r.kind == kind)
            .map(|r| r.exact_match)
            .collect()
    };
    let mut out = Vec::new();
    let mut groups = Vec::new();
    let mut testable = Vec::new();
    for t in tasks {
        let direct = collect(t, ScoreKind::Direct);
        let cross = collect(t, ScoreKind::Cross);
        let stats = |v: &[f64]| {
            SampleSummary::new(v.to_vec())
                .map(|s| (s.mean, s.std))
                .unwrap_or((f64::NAN, f64::NAN))
        };
        let (dm, ds) = stats(&direct);
        let (cm, cs) = stats(&cross);
        if direct.len() >= 2 && cross.len() >= 2 {
            groups.push(BTreeMap::from([
                ("direct".to_string(), SampleSummary::new(direct.clone())?),
                ("cross".to_string(), SampleSummary::new(cross.clone())?),
            ]));
            testable.push(out.len());
        }
        out.push(CrossInitSummary {
            task: t.clone(),
            direct_mean: dm,
            direct_std: ds,
            direct_n: direct.len(),
            cross_mean: cm,
            cross_std: cs,
            cross_n: cross.len(),
            significance: None,
        });
    }
    for (i, rep) in testable.into_iter().zip(significance_table(&groups)?) {
        out[i].significance = Some(rep);
    }
    Ok(out)
}
