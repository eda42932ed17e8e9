use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::make_tpv;
use crate::error::{Error, Result};
use crate::experiments::manifest::{parse_task_index, ExperimentManifest};
use crate::experiments::record::{CellRecord, RunRecord};
use crate::lab::seed::derive_seed;
use crate::lab::{init_id_for_seed, make_task_family_with, FamilyConfig, ToyModel, ToyTask};
use crate::prompt::{SoftPrompt, TaskPromptVector};
use crate::store::{load_prompt, write_atomic};

/// A manifest resolved into a model, generated tasks and a worker pool.
pub struct Lab {
    pub manifest: ExperimentManifest,
    pub model: ToyModel,
    tasks: BTreeMap<String, ToyTask>,
    pool: rayon::ThreadPool,
    hash: String,
}

impl Lab {
    /// `jobs = None` uses one worker per core.
    pub fn new(manifest: ExperimentManifest, jobs: Option<usize>) -> Result<Self> {
        manifest.validate()?;
        let model = ToyModel::new(manifest.model.clone())?;
        let ids: Vec<&String> = manifest.tasks.iter().chain(&manifest.targets).collect();
        let size = ids
            .iter()
            .map(|id| parse_task_index(id))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .map_or(0, |k| k + 1);
        let family = make_task_family_with(
            &FamilyConfig {
                base_seed: manifest.seed,
                similarity_knob: manifest.family.similarity_knob,
                task: manifest.family.task.clone(),
                relabel: manifest.family.relabel,
            },
            size,
        )?;
        let tasks = family
            .into_iter()
            .filter(|t| ids.iter().any(|id| **id == t.id))
            .map(|t| (t.id.clone(), t))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        let hash = manifest.hash()?;
        Ok(Self {
            manifest,
            model,
            tasks,
            pool,
            hash,
        })
    }

    pub fn task(&self, id: &str) -> Result<&ToyTask> {
        self.tasks
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown task {id}")))
    }

    pub fn out(&self) -> &Path {
        &self.manifest.output_dir
    }

    pub fn init(&self, seed: u64) -> Result<SoftPrompt> {
        self.model
            .init_prompt(self.manifest.prompt_len, &init_id_for_seed(seed))
    }

    pub fn prompt_path(&self, task: &str, seed: u64) -> PathBuf {
        self.out()
            .join("prompts")
            .join(task)
            .join(format!("{}.tpv", init_id_for_seed(seed)))
    }

    /// A prompt written by `train`.
    pub fn tuned(&self, task: &str, seed: u64) -> Result<SoftPrompt> {
        let path = self.prompt_path(task, seed);
        if !path.exists() {
            return Err(Error::MissingArtifact { path });
        }
        load_prompt(&path)
    }

    pub fn tpv(&self, task: &str, seed: u64) -> Result<TaskPromptVector> {
        make_tpv(&self.init(seed)?, &self.tuned(task, seed)?)
    }

    /// Fails before any work starts if a trained prompt is missing.
    pub fn require_trained(&self, tasks: &[String]) -> Result<()> {
        for t in tasks {
            for &s in &self.manifest.init_seeds {
                let path = self.prompt_path(t, s);
                if !path.exists() {
                    return Err(Error::MissingArtifact { path });
                }
            }
        }
        Ok(())
    }

    pub fn seed_for(&self, parts: &[u64]) -> u64 {
        let mut all = vec![self.manifest.seed];
        all.extend_from_slice(parts);
        derive_seed(&all)
    }

    pub fn task_index(&self, id: &str) -> u64 {
        parse_task_index(id).unwrap_or(usize::MAX) as u64
    }

    /// Runs `f` over `cells` on the pool, keeping input order.
    pub fn run<C, T, F>(&self, cells: &[C], f: F) -> Vec<Result<T>>
    where
        C: Sync,
        T: Send,
        F: Fn(&C) -> Result<T> + Sync,
    {
        self.pool.install(|| cells.par_iter().map(&f).collect())
    }

    pub fn record(
        &self,
        command: &str,
        cells: Vec<CellRecord>,
        outputs: Vec<PathBuf>,
        started: Instant,
    ) -> RunRecord {
        let mut seeds = BTreeMap::from([
            ("manifest".to_string(), self.manifest.seed),
            ("model".to_string(), self.manifest.model.seed),
        ]);
        for &s in &self.manifest.init_seeds {
            seeds.insert(init_id_for_seed(s), s);
        }
        RunRecord {
            command: command.to_string(),
            manifest_hash: self.hash.clone(),
            seeds,
            cells,
            outputs,
            elapsed_secs: started.elapsed().as_secs_f64(),
        }
    }
}

pub(crate) fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    write_atomic(path, &json)
}
