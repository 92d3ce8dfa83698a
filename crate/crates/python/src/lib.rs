//! Python bindings. Images and descriptor matrices cross the boundary as nested
//! lists of floats (row-major).

use std::path::PathBuf;

use ::mffc as core;
use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

pub fn to_array(rows: Vec<Vec<f64>>) -> Result<Array2<f64>, String> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err("rows have different lengths".into());
    }
    Array2::from_shape_vec((h, w), rows.into_iter().flatten().collect()).map_err(|e| e.to_string())
}

pub fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

type Rows = Vec<Vec<f64>>;

fn array(rows: Rows) -> PyResult<Array2<f64>> {
    to_array(rows).map_err(PyValueError::new_err)
}

#[pyclass(name = "Config", module = "mffc")]
struct Config {
    inner: core::PipelineConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (preset = "feret1"))]
    fn new(preset: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::PipelineConfig::preset(preset).map_err(err)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::PipelineConfig::parse(text).map_err(err)?,
        })
    }

    /// Sets one `key=value` option.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(err)?;
        self.inner.validate().map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn wpca_q(&self) -> usize {
        self.inner.wpca_q
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!("Config(preset={:?}, hash={})", self.inner.preset, self.inner.hash())
    }
}

#[pyclass(name = "FilterBank", module = "mffc")]
struct FilterBank {
    inner: core::FilterBank,
}

#[pymethods]
impl FilterBank {
    /// The 8-filter orientation-condensed Gabor bank.
    #[staticmethod]
    #[pyo3(signature = (support = 7))]
    fn gabor_condensed(support: usize) -> PyResult<Self> {
        let p = core::GaborParams::with_support(support);
        Ok(Self {
            inner: core::gabor::condensed_ensemble(&p).map_err(err)?,
        })
    }

    /// The 40-filter Gabor bank, scale-major.
    #[staticmethod]
    #[pyo3(signature = (support = 7))]
    fn gabor_standard(support: usize) -> PyResult<Self> {
        let p = core::GaborParams::with_support(support);
        Ok(Self {
            inner: core::gabor::standard_ensemble(&p).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::io::read_bank(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core::io::write_bank(&path, &self.inner, &[]).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn support(&self) -> usize {
        self.inner.support()
    }

    /// `(real, imaginary)` planes of filter `i`.
    fn filter(&self, i: usize) -> PyResult<(Rows, Rows)> {
        let f = self
            .inner
            .filters()
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("filter index {i} out of range")))?;
        Ok((to_rows(&f.re), to_rows(&f.im)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Extractor", module = "mffc")]
struct Extractor {
    inner: core::Extractor,
}

#[pymethods]
impl Extractor {
    #[new]
    #[pyo3(signature = (config, learned = None))]
    fn new(config: &Config, learned: Option<&FilterBank>) -> PyResult<Self> {
        Ok(Self {
            inner: core::Extractor::new(&config.inner, learned.map(|b| &b.inner)).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> PyResult<usize> {
        self.inner.dim().map_err(err)
    }

    #[getter]
    fn raw_dim(&self) -> usize {
        self.inner.raw_dim()
    }

    #[getter]
    fn offspring_count(&self) -> usize {
        self.inner.offspring_re.len()
    }

    #[getter]
    fn offspring_side(&self) -> usize {
        self.inner.offspring_re.side()
    }

    fn describe(&self, py: Python<'_>, image: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let img = array(image)?;
        let d = py.detach(|| self.inner.describe(&img)).map_err(err)?;
        Ok(d.values)
    }

    fn describe_batch(&self, py: Python<'_>, images: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let imgs = images.into_iter().map(array).collect::<PyResult<Vec<_>>>()?;
        let d = py.detach(|| self.inner.describe_batch(&imgs)).map_err(err)?;
        Ok(to_rows(&d))
    }
}

#[pyclass(name = "Wpca", module = "mffc")]
struct Wpca {
    inner: core::WpcaModel,
}

#[pymethods]
impl Wpca {
    /// Fits on an `n x d` training matrix, keeping `q` components.
    #[staticmethod]
    fn fit(train: Vec<Vec<f64>>, q: usize) -> PyResult<Self> {
        Ok(Self {
            inner: core::wpca::fit_wpca(&array(train)?, q).map_err(err)?,
        })
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.to_vec()
    }

    #[getter]
    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }

    fn project(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.project_rows(&array(rows)?).map_err(err)?))
    }
}

/// Learns the PCA/ICA bank for a learned descriptor kind; `None` for plain Gabor.
#[pyfunction]
fn learn_bank(py: Python<'_>, config: &Config, images: Vec<Vec<Vec<f64>>>) -> PyResult<Option<FilterBank>> {
    let imgs = images.into_iter().map(array).collect::<PyResult<Vec<_>>>()?;
    let bank = py.detach(|| core::pipeline::learn_bank(&config.inner, &imgs)).map_err(err)?;
    Ok(bank.map(|inner| FilterBank { inner }))
}

/// Returns `(images, labels)`.
#[pyfunction]
#[pyo3(signature = (classes, per_class, height, width, seed = 0, noise = 10.0))]
fn synth_corpus(
    classes: usize,
    per_class: usize,
    height: usize,
    width: usize,
    seed: u64,
    noise: f64,
) -> PyResult<(Vec<Rows>, Vec<usize>)> {
    let mut opts = core::synth::SynthOptions::new(classes, per_class, (height, width), seed);
    opts.noise_sigma = noise;
    let c = core::synth::synth_corpus(&opts).map_err(err)?;
    Ok((c.images.iter().map(to_rows).collect(), c.labels))
}

#[pyfunction]
fn hflip(image: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&core::io::hflip(&array(image)?)))
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    core::eval::cosine(a.as_slice().into(), b.as_slice().into()).map_err(err)
}

#[pyfunction]
fn flip_score(a: Vec<f64>, a_flip: Vec<f64>, b: Vec<f64>, b_flip: Vec<f64>) -> PyResult<f64> {
    core::eval::flip_score(
        a.as_slice().into(),
        a_flip.as_slice().into(),
        b.as_slice().into(),
        b_flip.as_slice().into(),
    )
    .map_err(err)
}

/// Returns `(rank1_percent, nearest_gallery_index_per_probe)`.
#[pyfunction]
fn rank1(
    gallery: Vec<Vec<f64>>,
    gallery_labels: Vec<String>,
    probes: Vec<Vec<f64>>,
    probe_labels: Vec<String>,
) -> PyResult<(f64, Vec<usize>)> {
    let id = core::eval::rank1_identify(&array(gallery)?, &gallery_labels, &array(probes)?, &probe_labels)
        .map_err(err)?;
    Ok((id.rank1, id.nearest))
}

/// Returns `(auc_percent, acc_percent, threshold)`.
#[pyfunction]
fn verify_roc(scores: Vec<f64>, same: Vec<bool>) -> PyResult<(f64, f64, f64)> {
    if scores.len() != same.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    let pairs: Vec<(f64, bool)> = scores.into_iter().zip(same).collect();
    let roc = core::eval::verify_roc(&pairs).map_err(err)?;
    Ok((roc.auc, roc.acc, roc.threshold))
}

#[pymodule]
#[pyo3(name = "mffc")]
fn mffc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<FilterBank>()?;
    m.add_class::<Extractor>()?;
    m.add_class::<Wpca>()?;
    m.add_function(wrap_pyfunction!(learn_bank, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(hflip, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(flip_score, m)?)?;
    m.add_function(wrap_pyfunction!(rank1, m)?)?;
    m.add_function(wrap_pyfunction!(verify_roc, m)?)?;
    Ok(())
}
