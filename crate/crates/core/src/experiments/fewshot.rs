use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algebra::{apply_tpv, lambda_sweep_with, sum_tpvs};
use crate::error::{Error, Result};
use crate::experiments::lab::{write_csv, write_json, Lab};
use crate::experiments::manifest::Method;
use crate::experiments::record::{CellRecord, RunRecord};
use crate::lab::train::Budget;
use crate::lab::{
    evaluate, init_id_for_seed, sample_shots, tune_multi, tune_on, Split, ToyTask, TrainConfig,
};
use crate::prompt::SoftPrompt;
use crate::stats::{significance_table, SampleSummary, SignificanceReport};
use crate::store::save_prompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotRow {
    pub target: String,
    pub method: Method,
    pub shots: usize,
    pub seed: u64,
    pub exact_match: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSummary {
    pub target: String,
    pub shots: usize,
    pub means: BTreeMap<String, f64>,
    pub stds: BTreeMap<String, f64>,
    pub significance: Option<SignificanceReport>,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow<'a> {
    target: &'a str,
    shots: usize,
    method: &'a str,
    mean: f64,
    std: f64,
    marker: &'a str,
}

#[derive(Debug, Clone)]
pub struct FewShotOutput {
    pub rows: Vec<FewShotRow>,
    pub summaries: Vec<FewShotSummary>,
    pub record: RunRecord,
}

/// Strips task provenance so a trained prompt can seed another run.
fn as_init(p: &SoftPrompt, tag: &str) -> Result<SoftPrompt> {
    let mut out = SoftPrompt::new(
        p.prompt_len(),
        p.embed_dim(),
        p.weights().to_vec(),
        p.init_id(),
    )?;
    out.meta = p.meta.clone();
    out.meta.insert("init_method".into(), tag.into());
    Ok(out)
}

fn build_init(lab: &Lab, method: Method, seed: u64) -> Result<SoftPrompt> {
    let m = &lab.manifest;
    match method {
        Method::Random => lab.init(seed),
        Method::SpotSingle => {
            let source = m.spot_source.as_ref().unwrap_or(&m.tasks[0]);
            let p = lab.tuned(source, seed)?;
            Ok(as_init(&p, method.as_str())?.with_meta("source", source.as_str()))
        }
        Method::SpotMulti => {
            let sources = m
                .tasks
                .iter()
                .map(|t| lab.task(t))
                .collect::<Result<Vec<&ToyTask>>>()?;
            let cfg = TrainConfig {
                seed: lab.seed_for(&[0x5B07, seed]),
                ..m.train.clone()
            };
            let p = tune_multi(&lab.model, &lab.init(seed)?, &sources, &cfg)?;
            as_init(&p, method.as_str())
        }
        Method::TpvCombination => {
            let base = lab.init(seed)?;
            let vs = m
                .tasks
                .iter()
                .map(|t| lab.tpv(t, seed))
                .collect::<Result<Vec<_>>>()?;
            let combo = sum_tpvs(&vs)?;
            let val = |task_id: &str, p: &SoftPrompt| -> Result<f64> {
                Ok(evaluate(&lab.model, p, lab.task(task_id)?, Split::Val)?.exact_match)
            };
            let sweep = lambda_sweep_with(&base, &combo, &m.lambda_grid, &val, m.selection_metric)?;
            let p = apply_tpv(&base, &combo, sweep.best_lambda)?;
            as_init(&p, method.as_str())
        }
    }
}

/// Few-shot curves for each initialization method on held-out targets.
pub fn cmd_fewshot(lab: &Lab) -> Result<FewShotOutput> {
    let started = Instant::now();
    let m = &lab.manifest;
    if m.targets.is_empty() {
        return Err(Error::invalid("fewshot needs at least one target task"));
    }
    if m.methods
        .iter()
        .any(|x| matches!(x, Method::SpotSingle | Method::TpvCombination))
    {
        lab.require_trained(&m.tasks)?;
    }
    let dir = lab.out().join("fewshot");

    let init_cells: Vec<(Method, u64)> = m
        .methods
        .iter()
        .flat_map(|&meth| m.init_seeds.iter().map(move |&s| (meth, s)))
        .collect();
    let built = lab.run(&init_cells, |(meth, seed)| build_init(lab, *meth, *seed));
    let mut inits = BTreeMap::new();
    let mut records = Vec::new();
    for ((meth, seed), res) in init_cells.iter().zip(built) {
        let id = format!("init/{meth}/{}", init_id_for_seed(*seed));
        match res {
            Ok(p) => {
                let path = dir
                    .join("inits")
                    .join(meth.as_str())
                    .join(format!("{}.tpv", init_id_for_seed(*seed)));
                save_prompt(&p, &path)?;
                inits.insert((*meth, *seed), p);
                records.push(CellRecord {
                    files: vec![path],
                    ..CellRecord::ok(id)
                });
            }
            Err(e) => records.push(CellRecord::failed(id, e)),
        }
    }

    let mut cells = Vec::new();
    for t in &m.targets {
        for &meth in &m.methods {
            for &shots in &m.shots {
                for &seed in &m.init_seeds {
                    cells.push((t.clone(), meth, shots, seed));
                }
            }
        }
    }
    let results = lab.run(&cells, |(target, meth, shots, seed)| {
        let task = lab.task(target)?;
        let init = inits.get(&(*meth, *seed)).ok_or_else(|| {
            Error::invalid(format!("no {meth} init for {}", init_id_for_seed(*seed)))
        })?;
        let prompt = match m.shot_batch_size(*shots)? {
            None => init.clone(),
            Some(batch_size) => {
                let data_seed =
                    lab.seed_for(&[0x5407, lab.task_index(target), *shots as u64, *seed]);
                let data = sample_shots(task, *shots, data_seed)?;
                let cfg = TrainConfig {
                    budget: Budget::Steps(crate::lab::train::FEW_SHOT_UPDATE_STEPS),
                    batch_size,
                    seed: data_seed,
                    ..m.train.clone()
                };
                tune_on(&lab.model, init, &[&data], target, &cfg)?.0
            }
        };
        evaluate(&lab.model, &prompt, task, Split::Test)
    });
    let mut rows = Vec::new();
    for ((target, meth, shots, seed), res) in cells.iter().zip(results) {
        let id = format!("{target}/{meth}/{shots}/{}", init_id_for_seed(*seed));
        match res {
            Ok(r) => {
                rows.push(FewShotRow {
                    target: target.clone(),
                    method: *meth,
                    shots: *shots,
                    seed: *seed,
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
    let summaries = summarize(&m.targets, &m.shots, &rows)?;

    let curves = dir.join("curves.csv");
    let summary_csv = dir.join("summary.csv");
    let summary_json = dir.join("summary.json");
    write_csv(&curves, &rows)?;
    let mut flat = Vec::new();
    for s in &summaries {
        for (meth, mean) in &s.means {
            let best = s.significance.as_ref().is_some_and(|r| &r.best == meth);
            flat.push(SummaryRow {
                target: &s.target,
                shots: s.shots,
                method: meth,
                mean: *mean,
                std: s.stds[meth],
                marker: if best {
                    s.significance
                        .as_ref()
                        .map_or("", SignificanceReport::marker)
                } else {
                    ""
                },
            });
        }
    }
    write_csv(&summary_csv, &flat)?;
    write_json(&summary_json, &summaries)?;
    let record = lab.record(
        "fewshot",
        records,
        vec![curves, summary_csv, summary_json],
        started,
    );
    record.write(&dir.join("run.json"))?;
    Ok(FewShotOutput {
        rows,
        summaries,
        record,
    })
}

/// Per (target, shots) method means, with best-vs-second tests
/// Bonferroni-corrected across all (target, shots) rows.
pub fn summarize(
    targets: &[String],
    shots: &[usize],
    rows: &[FewShotRow],
) -> Result<Vec<FewShotSummary>> {
    let mut out = Vec::new();
    let mut groups = Vec::new();
    let mut testable = Vec::new();
    for t in targets {
        for &n in shots {
            let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in rows.iter().filter(|r| &r.target == t && r.shots == n) {
                by_method
                    .entry(r.method.to_string())
                    .or_default()
                    .push(r.exact_match);
            }
            let summaries: BTreeMap<String, SampleSummary> = by_method
                .into_iter()
                .map(|(k, v)| Ok((k, SampleSummary::new(v)?)))
                .collect::<Result<_>>()?;
            if summaries.len() >= 2 && summaries.values().all(|s| s.n() >= 2) {
                groups.push(summaries.clone());
                testable.push(out.len());
            }
            out.push(FewShotSummary {
                target: t.clone(),
                shots: n,
                means: summaries.iter().map(|(k, s)| (k.clone(), s.mean)).collect(),
                stds: summaries.iter().map(|(k, s)| (k.clone(), s.std)).collect(),
                significance: None,
            });
        }
    }
    for (i, rep) in testable.into_iter().zip(significance_table(&groups)?) {
        out[i].significance = Some(rep);
    }
    Ok(out)
}
