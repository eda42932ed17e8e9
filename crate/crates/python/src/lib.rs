//! Python bindings: soft prompts, task prompt vectors, their arithmetic,
//! cosine similarity, TPV1 persistence and the significance tests.

#[pyo3::pymodule]
mod tpvec {
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    use pyo3::exceptions::{PyFileNotFoundError, PyOSError, PyValueError};
    use pyo3::prelude::*;
    use pyo3::types::PyDict;
    use tpv_core::{algebra, geometry, stats, store, Error};

    fn err(e: Error) -> PyErr {
        match e {
            Error::ManifestNotFound { .. } | Error::MissingArtifact { .. } => {
                PyFileNotFoundError::new_err(e.to_string())
            }
            Error::Io { .. } => PyOSError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        }
    }

    #[pyclass(name = "SoftPrompt", module = "tpvec", from_py_object)]
    #[derive(Clone)]
    pub struct PySoftPrompt {
        inner: tpv_core::SoftPrompt,
    }

    #[pymethods]
    impl PySoftPrompt {
        #[new]
        #[pyo3(signature = (prompt_len, embed_dim, weights, init_id, task_id=None, meta=None))]
        fn new(
            prompt_len: usize,
            embed_dim: usize,
            weights: Vec<f32>,
            init_id: String,
            task_id: Option<String>,
            meta: Option<BTreeMap<String, String>>,
        ) -> PyResult<Self> {
            let mut p =
                tpv_core::SoftPrompt::new(prompt_len, embed_dim, weights, init_id).map_err(err)?;
            if let Some(t) = task_id {
                p = p.with_task(t);
            }
            p.meta = meta.unwrap_or_default();
            Ok(Self { inner: p })
        }

        #[staticmethod]
        fn load(path: PathBuf) -> PyResult<Self> {
            Ok(Self {
                inner: store::load_prompt(&path).map_err(err)?,
            })
        }

        fn save(&self, path: PathBuf) -> PyResult<()> {
            store::save_prompt(&self.inner, &path).map_err(err)
        }

        #[getter]
        fn shape(&self) -> (usize, usize) {
            self.inner.shape().as_tuple()
        }

        #[getter]
        fn weights(&self) -> Vec<f32> {
            self.inner.weights().to_vec()
        }

        #[getter]
        fn init_id(&self) -> &str {
            self.inner.init_id()
        }

        #[getter]
        fn task_id(&self) -> Option<&str> {
            self.inner.task_id()
        }

        #[getter]
        fn meta(&self) -> BTreeMap<String, String> {
            self.inner.meta.clone()
        }

        fn __eq__(&self, other: &Self) -> bool {
            self.inner == other.inner
        }

        fn __repr__(&self) -> String {
            let (p, d) = self.shape();
            format!(
                "SoftPrompt({p}x{d}, init_id={:?}, task_id={:?})",
                self.inner.init_id(),
                self.inner.task_id()
            )
        }
    }

    #[pyclass(name = "TaskPromptVector", module = "tpvec", from_py_object)]
    #[derive(Clone)]
    pub struct PyTaskPromptVector {
        inner: tpv_core::TaskPromptVector,
    }

    #[pymethods]
    impl PyTaskPromptVector {
        #[new]
        fn new(
            prompt_len: usize,
            embed_dim: usize,
            delta: Vec<f32>,
            init_id: String,
            task_ids: Vec<String>,
        ) -> PyResult<Self> {
            Ok(Self {
                inner: tpv_core::TaskPromptVector::new(
                    prompt_len, embed_dim, delta, init_id, task_ids,
                )
                .map_err(err)?,
            })
        }

        #[staticmethod]
        fn load(path: PathBuf) -> PyResult<Self> {
            Ok(Self {
                inner: store::load_tpv(&path).map_err(err)?,
            })
        }

        fn save(&self, path: PathBuf) -> PyResult<()> {
            store::save_tpv(&self.inner, &path).map_err(err)
        }

        #[getter]
        fn shape(&self) -> (usize, usize) {
            self.inner.shape().as_tuple()
        }

        #[getter]
        fn delta(&self) -> Vec<f32> {
            self.inner.delta().to_vec()
        }

        #[getter]
        fn init_id(&self) -> &str {
            self.inner.init_id()
        }

        #[getter]
        fn task_ids(&self) -> Vec<String> {
            self.inner.task_ids().to_vec()
        }

        #[getter]
        fn scale_history(&self) -> Vec<f64> {
            self.inner.scale_history.clone()
        }

        #[getter]
        fn meta(&self) -> BTreeMap<String, String> {
            self.inner.meta.clone()
        }

        fn is_zero(&self) -> bool {
            self.inner.is_zero()
        }

        fn __add__(&self, other: &Self) -> PyResult<Self> {
            add_tpvs(self, other)
        }

        fn __neg__(&self) -> Self {
            negate_tpv(self)
        }

        fn __eq__(&self, other: &Self) -> bool {
            self.inner == other.inner
        }

        fn __repr__(&self) -> String {
            let (p, d) = self.shape();
            format!(
                "TaskPromptVector({p}x{d}, init_id={:?}, tasks={:?})",
                self.inner.init_id(),
                self.inner.task_label()
            )
        }
    }

    #[pyfunction]
    #[pyo3(signature = (pre, ft, allow_cross_init=false))]
    fn make_tpv(
        pre: &PySoftPrompt,
        ft: &PySoftPrompt,
        allow_cross_init: bool,
    ) -> PyResult<PyTaskPromptVector> {
        let opts = algebra::MakeOptions { allow_cross_init };
        Ok(PyTaskPromptVector {
            inner: algebra::make_tpv_with(&pre.inner, &ft.inner, opts).map_err(err)?,
        })
    }

    #[pyfunction]
    #[pyo3(signature = (base, tpv, lam=1.0))]
    fn apply_tpv(
        base: &PySoftPrompt,
        tpv: &PyTaskPromptVector,
        lam: f64,
    ) -> PyResult<PySoftPrompt> {
        Ok(PySoftPrompt {
            inner: algebra::apply_tpv(&base.inner, &tpv.inner, lam).map_err(err)?,
        })
    }

    #[pyfunction]
    fn add_tpvs(a: &PyTaskPromptVector, b: &PyTaskPromptVector) -> PyResult<PyTaskPromptVector> {
        Ok(PyTaskPromptVector {
            inner: algebra::add_tpvs(&a.inner, &b.inner).map_err(err)?,
        })
    }

    #[pyfunction]
    fn sum_tpvs(vectors: Vec<PyTaskPromptVector>) -> PyResult<PyTaskPromptVector> {
        let vs: Vec<_> = vectors.into_iter().map(|v| v.inner).collect();
        Ok(PyTaskPromptVector {
            inner: algebra::sum_tpvs(&vs).map_err(err)?,
        })
    }

    #[pyfunction]
    fn negate_tpv(a: &PyTaskPromptVector) -> PyTaskPromptVector {
        PyTaskPromptVector {
            inner: algebra::negate_tpv(&a.inner),
        }
    }

    #[pyfunction]
    fn scale_tpv(a: &PyTaskPromptVector, lam: f64) -> PyResult<PyTaskPromptVector> {
        Ok(PyTaskPromptVector {
            inner: algebra::scale_tpv(&a.inner, lam).map_err(err)?,
        })
    }

    #[pyfunction]
    fn cosine(a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
        geometry::cosine(&a, &b).map_err(err)
    }

    fn test_dict<'py>(py: Python<'py>, t: stats::TTest) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let method = match t.method {
            stats::TestMethod::Student => "student",
            stats::TestMethod::Welch => "welch",
        };
        d.set_item("method", method)?;
        d.set_item("t", t.t)?;
        d.set_item("dof", t.dof)?;
        d.set_item("p", t.p)?;
        Ok(d)
    }

    fn summaries(
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> PyResult<(stats::SampleSummary, stats::SampleSummary)> {
        Ok((
            stats::SampleSummary::new(a).map_err(err)?,
            stats::SampleSummary::new(b).map_err(err)?,
        ))
    }

    /// Two-sided pooled-variance t-test.
    #[pyfunction]
    fn student_t(py: Python<'_>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Bound<'_, PyDict>> {
        let (a, b) = summaries(a, b)?;
        test_dict(py, stats::student_t(&a, &b).map_err(err)?)
    }

    /// Two-sided unequal-variance t-test.
    #[pyfunction]
    fn welch_t(py: Python<'_>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Bound<'_, PyDict>> {
        let (a, b) = summaries(a, b)?;
        test_dict(py, stats::welch_t(&a, &b).map_err(err)?)
    }

    #[pyfunction]
    fn bonferroni(p_values: Vec<f64>) -> PyResult<Vec<f64>> {
        stats::bonferroni(&p_values).map_err(err)
    }
}

pub use tpvec::{PySoftPrompt, PyTaskPromptVector};
