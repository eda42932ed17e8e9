//! Task prompt vector arithmetic: creation, rescaled application, negation,
//! combination and rescaling-factor selection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{SoftPrompt, TaskPromptVector};

pub const NEGATED_KEY: &str = "negated";

/// `{0.1, 0.2, ..., 1.0}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::LambdaOutOfRange(lambda))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MakeOptions {
    /// Accept a tuned prompt whose `init_id` differs from the initialization.
    pub allow_cross_init: bool,
}

/// `ft - pre`, element-wise. Both prompts must come from the same initialization.
pub fn make_tpv(pre: &SoftPrompt, ft: &SoftPrompt) -> Result<TaskPromptVector> {
    make_tpv_with(pre, ft, MakeOptions::default())
}

pub fn make_tpv_with(
    pre: &SoftPrompt,
    ft: &SoftPrompt,
    opts: MakeOptions,
) -> Result<TaskPromptVector> {
    if let Some(t) = pre.task_id() {
        return Err(Error::UnexpectedTaskId(t.to_string()));
    }
    let task = ft.task_id().ok_or(Error::MissingTaskId)?;
    pre.shape().ensure_eq(ft.shape(), "make_tpv")?;
    if !opts.allow_cross_init && pre.init_id() != ft.init_id() {
        return Err(Error::InitMismatch {
            pre: pre.init_id().to_string(),
            ft: ft.init_id().to_string(),
        });
    }
    let delta = ft
        .weights()
        .iter()
        .zip(pre.weights())
        .map(|(f, p)| f - p)
        .collect();
    let mut tpv = TaskPromptVector::new(
        pre.prompt_len(),
        pre.embed_dim(),
        delta,
        pre.init_id(),
        vec![task.to_string()],
    )?;
    if pre.init_id() != ft.init_id() {
        tpv.meta
            .insert("tuned_init_id".into(), ft.init_id().to_string());
    }
    Ok(tpv)
}

/// `base + lambda * tpv`, rounded once to f32 per element.
pub fn apply_tpv(base: &SoftPrompt, tpv: &TaskPromptVector, lambda: f64) -> Result<SoftPrompt> {
    check_lambda(lambda)?;
    base.shape().ensure_eq(tpv.shape(), "apply_tpv")?;
    let weights: Vec<f32> = base
        .weights()
        .iter()
        .zip(tpv.delta())
        .map(|(&b, &d)| (b as f64 + lambda * d as f64) as f32)
        .collect();
    let mut out = base
        .clone()
        .with_weights(weights)?
        .with_task(tpv.task_label())
        .with_meta("lambda", lambda.to_string())
        .with_meta("tpv_init_id", tpv.init_id());
    out.meta.remove(NEGATED_KEY);
    if tpv.meta.contains_key(NEGATED_KEY) {
        out.meta.insert(NEGATED_KEY.into(), "true".into());
    }
    Ok(out)
}

fn merged_init_id(a: &str, b: &str) -> String {
    if a == b {
        return a.to_string();
    }
    let mut ids: Vec<&str> = a.split(',').chain(b.split(',')).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.join(",")
}

pub fn add_tpvs(a: &TaskPromptVector, b: &TaskPromptVector) -> Result<TaskPromptVector> {
    a.shape().ensure_eq(b.shape(), "add_tpvs")?;
    let delta = a
        .delta()
        .iter()
        .zip(b.delta())
        .map(|(x, y)| x + y)
        .collect();
    let task_ids = a.task_ids().iter().chain(b.task_ids()).cloned().collect();
    let shape = a.shape();
    TaskPromptVector::new(
        shape.prompt_len,
        shape.embed_dim,
        delta,
        merged_init_id(a.init_id(), b.init_id()),
        task_ids,
    )
}

/// Sign flip. Toggles the `negated` marker so that negating twice is the identity.
pub fn negate_tpv(a: &TaskPromptVector) -> TaskPromptVector {
    let delta: Vec<f32> = a.delta().iter().map(|v| -v).collect();
    let mut out = TaskPromptVector::new(
        a.shape().prompt_len,
        a.shape().embed_dim,
        delta,
        a.init_id(),
        a.task_ids().to_vec(),
    )
    .expect("negation preserves invariants");
    out.scale_history = a.scale_history.clone();
    out.meta = a.meta.clone();
    if out.meta.remove(NEGATED_KEY).is_none() {
        out.meta.insert(NEGATED_KEY.into(), "true".into());
    }
    out
}

/// Multiplies the delta by `lambda` and records it in `scale_history`.
pub fn scale_tpv(a: &TaskPromptVector, lambda: f64) -> Result<TaskPromptVector> {
    check_lambda(lambda)?;
    let delta: Vec<f32> = a
        .delta()
        .iter()
        .map(|v| (*v as f64 * lambda) as f32)
        .collect();
    let mut out = TaskPromptVector::new(
        a.shape().prompt_len,
        a.shape().embed_dim,
        delta,
        a.init_id(),
        a.task_ids().to_vec(),
    )?;
    out.meta = a.meta.clone();
    out.scale_history = a.scale_history.clone();
    out.scale_history.push(lambda);
    Ok(out)
}

/// Left fold of [`add_tpvs`] after a stable sort by task label, so the f32
/// summation order does not depend on the caller's ordering.
pub fn sum_tpvs(vs: &[TaskPromptVector]) -> Result<TaskPromptVector> {
    let mut ordered: Vec<&TaskPromptVector> = vs.iter().collect();
    ordered.sort_by_key(|v| v.task_label());
    let (first, rest) = ordered
        .split_first()
        .ok_or(Error::Empty("sum_tpvs needs at least one vector"))?;
    rest.iter()
        .try_fold((*first).clone(), |acc, v| add_tpvs(&acc, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    MeanScore,
    MinScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub scores: BTreeMap<String, f64>,
}

impl LambdaPoint {
    pub fn metric(&self, metric: SelectionMetric) -> f64 {
        let vals = self.scores.values().copied();
        match metric {
            SelectionMetric::MeanScore => vals.sum::<f64>() / self.scores.len() as f64,
            SelectionMetric::MinScore => vals.fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweepResult {
    pub grid: Vec<LambdaPoint>,
    pub best_lambda: f64,
    pub selection_metric: SelectionMetric,
}

/// Scores a prompt on the validation data of one task.
pub trait Evaluator: Sync {
    fn score(&self, task_id: &str, prompt: &SoftPrompt) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: Fn(&str, &SoftPrompt) -> Result<f64> + Sync,
{
    fn score(&self, task_id: &str, prompt: &SoftPrompt) -> Result<f64> {
        self(task_id, prompt)
    }
}

pub fn lambda_sweep(
    base: &SoftPrompt,
    tpv: &TaskPromptVector,
    grid: &[f64],
    evaluator: &dyn Evaluator,
) -> Result<LambdaSweepResult> {
    lambda_sweep_with(base, tpv, grid, evaluator, SelectionMetric::default())
}

/// Evaluates `apply_tpv(base, tpv, lambda)` on every source task for each grid
/// point and picks the best lambda. Ties go to the larger lambda.
pub fn lambda_sweep_with(
    base: &SoftPrompt,
    tpv: &TaskPromptVector,
    grid: &[f64],
    evaluator: &dyn Evaluator,
    metric: SelectionMetric,
) -> Result<LambdaSweepResult> {
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let mut tasks: Vec<&String> = tpv.task_ids().iter().collect();
    tasks.dedup();
    let points: Vec<LambdaPoint> = grid
        .par_iter()
        .map(|&lambda| {
            let prompt = apply_tpv(base, tpv, lambda)?;
            let mut scores = BTreeMap::new();
            for task in &tasks {
                let s = evaluator
                    .score(task, &prompt)
                    .map_err(|e| Error::Evaluator {
                        lambda,
                        task: task.to_string(),
                        message: e.to_string(),
                    })?;
                if !s.is_finite() {
                    return Err(Error::Evaluator {
                        lambda,
                        task: task.to_string(),
                        message: format!("non-finite score {s}"),
                    });
                }
                scores.insert(task.to_string(), s);
            }
            Ok(LambdaPoint { lambda, scores })
        })
        .collect::<Result<_>>()?;

    let mut best = &points[0];
    for p in &points[1..] {
        let (m, bm) = (p.metric(metric), best.metric(metric));
        if m > bm || (m == bm && p.lambda > best.lambda) {
            best = p;
        }
    }
    Ok(LambdaSweepResult {
        best_lambda: best.lambda,
        grid: points,
        selection_metric: metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prompt(w: Vec<f32>, cols: usize, init: &str) -> SoftPrompt {
        SoftPrompt::new(w.len() / cols, cols, w, init).unwrap()
    }

    fn tpv(w: Vec<f32>, task: &str) -> TaskPromptVector {
        TaskPromptVector::new(1, w.len(), w, "i0", vec![task.into()]).unwrap()
    }

    #[test]
    fn make_is_elementwise_difference() {
        let pre = prompt(vec![0.1, 0.3], 2, "i0");
        let ft = prompt(vec![0.5, -0.2], 2, "i0").with_task("t");
        let v = make_tpv(&pre, &ft).unwrap();
        assert_eq!(v.delta(), &[0.5f32 - 0.1, -0.2f32 - 0.3]);
        approx::assert_abs_diff_eq!(v.delta()[0], 0.4, epsilon = 1e-7);
        approx::assert_abs_diff_eq!(v.delta()[1], -0.5, epsilon = 1e-7);
        assert_eq!(v.task_ids(), &["t".to_string()]);
        assert_eq!(v.init_id(), "i0");
    }

    #[test]
    fn make_identity_and_zero_base() {
        let w = vec![1.5, -2.0, 0.25, 7.0];
        let pre = prompt(w.clone(), 2, "i");
        let v = make_tpv(&pre, &pre.clone().with_task("t")).unwrap();
        assert!(v.is_zero());
        let zero = prompt(vec![0.0; 4], 2, "i");
        let v = make_tpv(&zero, &pre.with_task("t")).unwrap();
        assert_eq!(v.delta(), &w[..]);
    }

    #[test]
    fn make_rejects_bad_pairs() {
        let pre = prompt(vec![0.0; 4], 2, "i0");
        let ft = prompt(vec![1.0; 4], 2, "i1").with_task("t");
        assert!(matches!(
            make_tpv(&pre, &ft),
            Err(Error::InitMismatch { .. })
        ));
        let v = make_tpv_with(
            &pre,
            &ft,
            MakeOptions {
                allow_cross_init: true,
            },
        )
        .unwrap();
        assert_eq!(v.meta.get("tuned_init_id").unwrap(), "i1");

        let untrained = prompt(vec![1.0; 4], 2, "i0");
        assert!(matches!(
            make_tpv(&pre, &untrained),
            Err(Error::MissingTaskId)
        ));
        let wide = prompt(vec![1.0; 4], 4, "i0").with_task("t");
        assert!(matches!(
            make_tpv(&pre, &wide),
            Err(Error::ShapeMismatch { .. })
        ));
        let trained = pre.clone().with_task("x");
        assert!(matches!(
            make_tpv(&trained, &ft),
            Err(Error::UnexpectedTaskId(_))
        ));
    }

    #[test]
    fn apply_examples() {
        let base = prompt(vec![0.0, 0.0], 2, "i0");
        let out = apply_tpv(&base, &tpv(vec![0.4, -0.5], "t"), 0.5).unwrap();
        assert_eq!(out.weights(), &[0.2, -0.25]);
        assert_eq!(out.task_id(), Some("t"));
        assert_eq!(out.meta["lambda"], "0.5");
        assert_eq!(out.init_id(), "i0");

        let b = prompt(vec![3.0, -1.25], 2, "i9");
        for l in [0.1, 0.7, 1.0] {
            let out = apply_tpv(&b, &tpv(vec![0.0, 0.0], "t"), l).unwrap();
            assert_eq!(out.weights(), b.weights());
        }
    }

    #[test]
    fn recovery_of_sign_crossing_entry_is_off_by_one_ulp() {
        // 0.3 -> -0.2 crosses zero, so the f32 subtraction rounds and adding
        // the delta back cannot reproduce -0.2 exactly.
        let pre = prompt(vec![0.1, 0.3], 2, "i0");
        let ft = prompt(vec![0.5, -0.2], 2, "i0").with_task("t");
        let back = apply_tpv(&pre, &make_tpv(&pre, &ft).unwrap(), 1.0).unwrap();
        assert_eq!(back.weights()[0], 0.5);
        assert_ne!(back.weights()[1], -0.2);
        assert_eq!(back.weights()[1].to_bits().abs_diff((-0.2f32).to_bits()), 1);
    }

    #[test]
    fn apply_rejects_lambda_outside_unit_interval() {
        let base = prompt(vec![0.0, 0.0], 2, "i0");
        let t = tpv(vec![1.0, 1.0], "t");
        for l in [0.0, -0.5, 1.0001, f64::NAN] {
            assert!(matches!(
                apply_tpv(&base, &t, l),
                Err(Error::LambdaOutOfRange(_))
            ));
        }
        let wide = prompt(vec![0.0; 3], 3, "i0");
        assert!(matches!(
            apply_tpv(&wide, &t, 1.0),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn add_negate_sum_examples() {
        let a = tpv(vec![1.0, 2.0], "a");
        let b = tpv(vec![-1.0, 3.0], "b");
        let ab = add_tpvs(&a, &b).unwrap();
        assert_eq!(ab.delta(), &[0.0, 5.0]);
        assert_eq!(ab.task_ids(), &["a".to_string(), "b".to_string()]);
        assert_eq!(add_tpvs(&b, &a).unwrap().delta(), ab.delta());
        assert!(add_tpvs(&a, &negate_tpv(&a)).unwrap().is_zero());

        let n = negate_tpv(&tpv(vec![0.4, -0.5], "t"));
        assert_eq!(n.delta(), &[-0.4, 0.5]);
        assert_eq!(n.meta[NEGATED_KEY], "true");
        assert_eq!(negate_tpv(&n), tpv(vec![0.4, -0.5], "t"));
        assert!(negate_tpv(&tpv(vec![0.0, 0.0], "z")).is_zero());

        assert_eq!(sum_tpvs(std::slice::from_ref(&a)).unwrap(), a);
        let z = tpv(vec![0.0, 0.0], "m");
        assert_eq!(
            sum_tpvs(&[a.clone(), z, b.clone()]).unwrap().delta(),
            add_tpvs(&a, &b).unwrap().delta()
        );
        let scalars: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                TaskPromptVector::new(1, 1, vec![*v], "i", vec![format!("t{i}")]).unwrap()
            })
            .collect();
        assert_eq!(sum_tpvs(&scalars).unwrap().delta(), &[6.0]);
        assert!(matches!(sum_tpvs(&[]), Err(Error::Empty(_))));
        let wide = TaskPromptVector::new(1, 3, vec![0.0; 3], "i", vec!["w".into()]).unwrap();
        assert!(sum_tpvs(&[a, wide]).is_err());
    }

    #[test]
    fn scale_records_history() {
        let s = scale_tpv(&tpv(vec![2.0, -4.0], "t"), 0.25).unwrap();
        assert_eq!(s.delta(), &[0.5, -1.0]);
        assert_eq!(s.scale_history, vec![0.25]);
        assert!(scale_tpv(&s, 2.0).is_err());
    }

    #[test]
    fn sweep_singleton_grid() {
        let base = prompt(vec![0.0, 0.0], 2, "i0");
        let eval = |_: &str, p: &SoftPrompt| -> Result<f64> { Ok(p.weights()[0] as f64) };
        let r = lambda_sweep(&base, &tpv(vec![1.0, 1.0], "t"), &[1.0], &eval).unwrap();
        assert_eq!(r.best_lambda, 1.0);
        assert_eq!(r.grid.len(), 1);
    }

    #[test]
    fn sweep_finds_quadratic_optimum() {
        // Optimum at base + 0.5 * delta. Exhaustive check of the grid below.
        let base = prompt(vec![1.0, -1.0], 2, "i0");
        let delta = tpv(vec![2.0, 4.0], "t");
        let target = [2.0f64, 1.0];
        let eval = move |_: &str, p: &SoftPrompt| -> Result<f64> {
            Ok(-p
                .weights()
                .iter()
                .zip(target)
                .map(|(w, t)| (*w as f64 - t).powi(2))
                .sum::<f64>())
        };
        let grid = [0.25, 0.5, 1.0];
        let brute: Vec<f64> = grid
            .iter()
            .map(|l| -((1.0 + 2.0 * l - 2.0f64).powi(2) + (-1.0 + 4.0 * l - 1.0f64).powi(2)))
            .collect();
        assert_eq!(brute, vec![-1.25, 0.0, -5.0]);
        let r = lambda_sweep(&base, &delta, &grid, &eval).unwrap();
        assert_eq!(r.best_lambda, 0.5);
        for (p, b) in r.grid.iter().zip(&brute) {
            approx::assert_abs_diff_eq!(p.scores["t"], *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_ties_prefer_larger_lambda() {
        let base = prompt(vec![0.0, 0.0], 2, "i0");
        let combo = add_tpvs(&tpv(vec![1.0, 0.0], "a"), &tpv(vec![0.0, 1.0], "b")).unwrap();
        let eval = |_: &str, _: &SoftPrompt| -> Result<f64> { Ok(0.7) };
        let r = lambda_sweep(&base, &combo, &default_lambda_grid(), &eval).unwrap();
        assert_eq!(r.best_lambda, 1.0);
        assert_eq!(r.grid[0].scores.len(), 2);
    }

    #[test]
    fn sweep_min_metric_and_errors() {
        let base = prompt(vec![0.0, 0.0], 2, "i0");
        let combo = add_tpvs(&tpv(vec![1.0, 0.0], "a"), &tpv(vec![0.0, 1.0], "b")).unwrap();
        // a prefers large lambda, b prefers lambda near 0.3.
        let eval = |task: &str, p: &SoftPrompt| -> Result<f64> {
            let l = p.weights()[0] as f64;
            Ok(if task == "a" {
                l
            } else {
                1.0 - (l - 0.3).abs() * 2.0
            })
        };
        let grid = [0.3, 0.6, 1.0];
        // mean: 0.65, 0.5, 0.3; min: 0.3, 0.4, -0.4
        let mean = lambda_sweep(&base, &combo, &grid, &eval).unwrap();
        assert_eq!(mean.best_lambda, 0.3);
        let min =
            lambda_sweep_with(&base, &combo, &grid, &eval, SelectionMetric::MinScore).unwrap();
        assert_eq!(min.best_lambda, 0.6);

        assert!(matches!(
            lambda_sweep(&base, &combo, &[], &eval),
            Err(Error::Empty(_))
        ));
        assert!(lambda_sweep(&base, &combo, &[0.0], &eval).is_err());
        let failing = |task: &str, _: &SoftPrompt| -> Result<f64> {
            if task == "b" {
                Err(Error::invalid("no validation data"))
            } else {
                Ok(1.0)
            }
        };
        match lambda_sweep(&base, &combo, &[0.5], &failing).unwrap_err() {
            Error::Evaluator { lambda, task, .. } => {
                assert_eq!(lambda, 0.5);
                assert_eq!(task, "b");
            }
            e => panic!("unexpected {e}"),
        }
    }

    /// Recovery is exact whenever the subtraction is exact, which holds when
    /// both values share a sign and lie within a factor of two of each other.
    fn same_binade_pair() -> impl Strategy<Value = (f32, f32)> {
        (0.5f32..4.0, 0.5f32..=2.0, any::<bool>()).prop_map(|(p, r, neg)| {
            let f = (p * r).clamp(p / 2.0, p * 2.0);
            if neg {
                (-p, -f)
            } else {
                (p, f)
            }
        })
    }

    proptest! {
        #[test]
        fn recovery_exact_when_subtraction_is_exact(pairs in prop::collection::vec(same_binade_pair(), 1..64)) {
            let (pre, ft): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
            let n = pre.len();
            let pre = SoftPrompt::new(1, n, pre, "i").unwrap();
            let ft = SoftPrompt::new(1, n, ft, "i").unwrap().with_task("t");
            let back = apply_tpv(&pre, &make_tpv(&pre, &ft).unwrap(), 1.0).unwrap();
            prop_assert_eq!(back.weights(), ft.weights());
        }

        #[test]
        fn recovery_within_two_ulps_of_larger_operand(
            w in prop::collection::vec((-100.0f32..100.0, -100.0f32..100.0), 1..64)
        ) {
            let (pre, ft): (Vec<f32>, Vec<f32>) = w.into_iter().unzip();
            let n = pre.len();
            let p = SoftPrompt::new(1, n, pre.clone(), "i").unwrap();
            let f = SoftPrompt::new(1, n, ft.clone(), "i").unwrap().with_task("t");
            let back = apply_tpv(&p, &make_tpv(&p, &f).unwrap(), 1.0).unwrap();
            for ((b, x), y) in back.weights().iter().zip(&ft).zip(&pre) {
                let scale = x.abs().max(y.abs()) as f64;
                let ulp = scale * f32::EPSILON as f64;
                prop_assert!((*b as f64 - *x as f64).abs() <= 2.0 * ulp);
            }
        }

        #[test]
        fn application_is_linear_within_one_ulp(
            w in prop::collection::vec((-10.0f32..10.0, -10.0f32..10.0), 1..64),
            lambda in 0.01f64..=1.0,
        ) {
            let (b, d): (Vec<f32>, Vec<f32>) = w.into_iter().unzip();
            let n = b.len();
            let base = SoftPrompt::new(1, n, b.clone(), "i").unwrap();
            let t = TaskPromptVector::new(1, n, d.clone(), "i", vec!["t".into()]).unwrap();
            let out = apply_tpv(&base, &t, lambda).unwrap();
            for ((o, b), d) in out.weights().iter().zip(&b).zip(&d) {
                let diff = *o as f64 - *b as f64;
                let ulp = (o.abs().max(b.abs()) as f64) * f32::EPSILON as f64;
                prop_assert!((diff - lambda * *d as f64).abs() <= ulp);
            }
        }

        #[test]
        fn sum_is_order_independent(
            rows in prop::collection::vec(prop::collection::vec(-1e3f32..1e3, 8), 1..6),
            seed in any::<u64>(),
        ) {
            let vs: Vec<_> = rows.into_iter().enumerate()
                .map(|(i, r)| TaskPromptVector::new(1, 8, r, "i", vec![format!("task{i}")]).unwrap())
                .collect();
            let mut shuffled = vs.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let (x, y) = (sum_tpvs(&vs).unwrap(), sum_tpvs(&shuffled).unwrap());
            prop_assert_eq!(x.delta(), y.delta());
        }

        #[test]
        fn negation_is_involution_and_inverse(w in prop::collection::vec(-1e6f32..1e6, 1..32)) {
            let a = TaskPromptVector::new(1, w.len(), w, "i", vec!["t".into()]).unwrap();
            prop_assert_eq!(negate_tpv(&negate_tpv(&a)), a.clone());
            prop_assert!(add_tpvs(&a, &negate_tpv(&a)).unwrap().is_zero());
        }
    }
}
