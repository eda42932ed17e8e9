use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{check_lambda, default_lambda_grid, SelectionMetric};
use crate::error::{Error, Result};
use crate::geometry::SelfPairPolicy;
use crate::lab::train::few_shot_batch_size;
use crate::lab::{ModelConfig, TaskSpec, TrainConfig};
use crate::store::write_atomic;

/// Initialization strategies compared by the few-shot recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    SpotSingle,
    SpotMulti,
    TpvCombination,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Random,
        Method::SpotSingle,
        Method::SpotMulti,
        Method::TpvCombination,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::SpotSingle => "spot_single",
            Method::SpotMulti => "spot_multi",
            Method::TpvCombination => "tpv_combination",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shape of the synthetic task family that task ids `t0, t1, ...` index into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilySection {
    pub similarity_knob: f64,
    pub relabel: bool,
    pub task: TaskSpec,
}

impl Default for FamilySection {
    fn default() -> Self {
        Self {
            similarity_knob: 1.0,
            relabel: false,
            task: TaskSpec::default(),
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_shots() -> Vec<usize> {
    std::iter::once(0)
        .chain(crate::lab::train::FEW_SHOT_SCHEDULE.iter().map(|(s, _)| *s))
        .collect()
}

fn default_prompt_len() -> usize {
    8
}

/// Declarative description of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// Source tasks, as `t<k>` ids into the task family.
    pub tasks: Vec<String>,
    /// Held-out tasks for the few-shot recipe.
    #[serde(default)]
    pub targets: Vec<String>,
    pub init_seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_shots")]
    pub shots: Vec<usize>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    pub output_dir: PathBuf,
    /// Base seed for the task family and all training shuffles.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_prompt_len")]
    pub prompt_len: usize,
    #[serde(default)]
    pub family: FamilySection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Batch sizes for shot counts outside the fixed schedule.
    #[serde(default)]
    pub shot_batch_sizes: BTreeMap<usize, usize>,
    /// Task pairs for `combine-eval`; all unordered pairs of `tasks` when absent.
    #[serde(default)]
    pub pairs: Option<Vec<(String, String)>>,
    /// Source for `spot_single`; the first task when absent.
    #[serde(default)]
    pub spot_source: Option<String>,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    #[serde(default)]
    pub aggregation: SelfPairPolicy,
}

pub fn parse_task_index(id: &str) -> Result<usize> {
    id.strip_prefix('t')
        .and_then(|k| k.parse().ok())
        .ok_or_else(|| Error::invalid(format!("task id {id:?} is not of the form t<k>")))
}

impl ExperimentManifest {
    pub fn new(tasks: &[&str], init_seeds: &[u64], output_dir: impl Into<PathBuf>) -> Self {
        Self {
            tasks: tasks.iter().map(|t| t.to_string()).collect(),
            targets: Vec::new(),
            init_seeds: init_seeds.to_vec(),
            methods: default_methods(),
            shots: default_shots(),
            lambda_grid: default_lambda_grid(),
            output_dir: output_dir.into(),
            seed: 0,
            prompt_len: default_prompt_len(),
            family: FamilySection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            shot_batch_sizes: BTreeMap::new(),
            pairs: None,
            spot_source: None,
            selection_metric: SelectionMetric::default(),
            aggregation: SelfPairPolicy::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = match fs::read(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ManifestNotFound {
                    path: path.to_path_buf(),
                })
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        let m: Self = serde_json::from_slice(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::invalid("manifest lists no tasks"));
        }
        if self.init_seeds.is_empty() {
            return Err(Error::invalid("manifest lists no init seeds"));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        if self.prompt_len == 0 {
            return Err(Error::invalid("prompt_len must be positive"));
        }
        for &l in &self.lambda_grid {
            check_lambda(l)?;
        }
        for id in self.tasks.iter().chain(&self.targets) {
            parse_task_index(id)?;
        }
        if let Some(pairs) = &self.pairs {
            for (a, b) in pairs {
                for id in [a, b] {
                    if !self.tasks.contains(id) {
                        return Err(Error::invalid(format!(
                            "pair task {id} is not among the tasks"
                        )));
                    }
                }
            }
        }
        if let Some(s) = &self.spot_source {
            if !self.tasks.contains(s) {
                return Err(Error::invalid(format!(
                    "spot source {s} is not among the tasks"
                )));
            }
        }
        for &s in &self.shots {
            self.shot_batch_size(s)?;
        }
        for (&s, &b) in &self.shot_batch_sizes {
            if b == 0 {
                return Err(Error::invalid(format!(
                    "batch size for {s} shots must be positive"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.family.similarity_knob) {
            return Err(Error::invalid(format!(
                "similarity knob {} outside [0, 1]",
                self.family.similarity_knob
            )));
        }
        self.train.validate()
    }

    /// Batch size for a shot count; `None` for zero shots.
    pub fn shot_batch_size(&self, shots: usize) -> Result<Option<usize>> {
        if shots == 0 {
            return Ok(None);
        }
        self.shot_batch_sizes
            .get(&shots)
            .copied()
            .or_else(|| few_shot_batch_size(shots))
            .map(Some)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "{shots} shots is not on the few-shot schedule and has no batch size"
                ))
            })
    }

    /// Unordered task pairs for the combination recipe.
    pub fn task_pairs(&self) -> Vec<(String, String)> {
        if let Some(p) = &self.pairs {
            return p.clone();
        }
        let mut out = Vec::new();
        for (i, a) in self.tasks.iter().enumerate() {
            for b in &self.tasks[i + 1..] {
                out.push((a.clone(), b.clone()));
            }
        }
        out
    }
}
