//! Python bindings: tensors and kernels, networks with weight persistence,
//! datasets, both classifier heads, and the path-driven pipeline stages.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use recyclass::data;
use recyclass::error::Error;
use recyclass::heads;
use recyclass::net;
use recyclass::pipeline;
use recyclass::tensor;

fn to_py_err(err: Error) -> PyErr {
    match &err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn stride(zeta: usize) -> PyResult<tensor::Stride> {
    tensor::Stride::new(zeta).map_err(to_py_err)
}

fn feature_vec(values: Vec<f64>) -> PyResult<heads::FeatureVector> {
    heads::FeatureVector::from_values(values).map_err(to_py_err)
}

fn feature_matrix(rows: Vec<Vec<f64>>) -> PyResult<Vec<heads::FeatureVector>> {
    rows.into_iter().map(feature_vec).collect()
}

/// Dense row-major f64 tensor.
#[pyclass(name = "Tensor", frozen)]
struct PyTensor {
    inner: tensor::Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyTensor {
            inner: tensor::Tensor::new(shape, data).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> Self {
        PyTensor {
            inner: tensor::Tensor::zeros(shape),
        }
    }

    #[staticmethod]
    fn filled(shape: Vec<usize>, value: f64) -> Self {
        PyTensor {
            inner: tensor::Tensor::filled(shape, value),
        }
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

#[pyfunction]
fn conv_valid_1d(x: &PyTensor, u: &PyTensor, zeta: usize) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: tensor::conv_valid_1d(&x.inner, &u.inner, stride(zeta)?).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn conv_valid_2d(
    input: &PyTensor,
    kernels: &PyTensor,
    bias: &PyTensor,
    zeta: usize,
) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: tensor::conv_valid_2d(&input.inner, &kernels.inner, &bias.inner, stride(zeta)?)
            .map_err(to_py_err)?,
    })
}

#[pyfunction]
fn relu(x: &PyTensor) -> PyTensor {
    PyTensor {
        inner: tensor::relu(&x.inner),
    }
}

#[pyfunction]
fn max_pool_2d(input: &PyTensor, window: usize, zeta: usize) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: tensor::max_pool_2d(&input.inner, window, stride(zeta)?).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn matvec(w: &PyTensor, x: &PyTensor) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: tensor::matvec(&w.inner, &x.inner).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn dot(a: &PyTensor, b: &PyTensor) -> PyResult<f64> {
    tensor::dot(&a.inner, &b.inner).map_err(to_py_err)
}

#[pyfunction]
fn softmax_probs(logits: Vec<f64>) -> Vec<f64> {
    heads::softmax_probs_slice(&logits)
}

#[pyfunction]
fn svm_decision(w: Vec<f64>, b: f64, x: Vec<f64>) -> PyResult<f64> {
    heads::svm_decision(&w, b, &x).map_err(to_py_err)
}

#[pyfunction]
fn svm_distance(w: Vec<f64>, b: f64, x: Vec<f64>) -> PyResult<f64> {
    heads::svm_distance(&w, b, &x).map_err(to_py_err)
}

#[pyfunction]
fn svm_margin(w: Vec<f64>, b: f64, samples: Vec<Vec<f64>>, labels: Vec<f64>) -> PyResult<f64> {
    heads::svm_margin(&w, b, &feature_matrix(samples)?, &labels).map_err(to_py_err)
}

#[pyfunction]
fn accuracy(correct: usize, total: usize) -> PyResult<f64> {
    pipeline::accuracy(correct, total).map_err(to_py_err)
}

#[pyfunction]
fn confusion_matrix(
    predictions: Vec<usize>,
    labels: Vec<usize>,
    class_count: usize,
) -> PyResult<Vec<Vec<usize>>> {
    pipeline::confusion_matrix(&predictions, &labels, class_count).map_err(to_py_err)
}

#[pyfunction]
fn preset_names() -> Vec<String> {
    net::PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Class-labeled image dataset.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: data::LabeledDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (per_class=50, image_size=64, noise=0.1, seed=0, class_count=6))]
    fn synthesize(
        per_class: usize,
        image_size: usize,
        noise: f64,
        seed: u64,
        class_count: usize,
    ) -> PyResult<Self> {
        let inner = data::synthesize_dataset(&data::SynthConfig {
            class_count,
            per_class,
            image_size,
            noise_level: noise,
            seed,
        })
        .map_err(to_py_err)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn load_dir(root: String, target_h: usize, target_w: usize) -> PyResult<Self> {
        Ok(PyDataset {
            inner: data::load_dataset(root, target_h, target_w).map_err(to_py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    #[getter]
    fn provenance(&self) -> String {
        self.inner.provenance().to_string()
    }

    fn image(&self, index: usize) -> PyResult<PyTensor> {
        let (img, _) = self
            .inner
            .samples()
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))?;
        Ok(PyTensor { inner: img.clone() })
    }

    fn split_half(&self, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
        let pair = data::split_half(&self.inner, seed).map_err(to_py_err)?;
        Ok((
            PyDataset { inner: pair.train },
            PyDataset { inner: pair.test },
        ))
    }
}

/// A network spec with its parameters: the transferable feature extractor.
#[pyclass(name = "Network")]
struct PyNetwork {
    inner: net::TrainedNetwork,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    #[pyo3(signature = (name, input_size=64, class_count=6, seed=0))]
    fn from_preset(name: String, input_size: usize, class_count: usize, seed: u64) -> PyResult<Self> {
        let spec =
            net::preset(&name, [3, input_size, input_size], class_count).map_err(to_py_err)?;
        Ok(PyNetwork {
            inner: net::init_weights(&spec, seed).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: String) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: net::load_weights(path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: String) -> PyResult<()> {
        net::save_weights(&self.inner, path).map_err(to_py_err)
    }

    #[getter]
    fn provenance(&self) -> String {
        self.inner.provenance.clone()
    }

    #[getter]
    fn cut_index(&self) -> usize {
        self.inner.spec.cut_index
    }

    fn layer_shapes(&self) -> PyResult<Vec<Vec<usize>>> {
        net::infer_shapes(&self.inner.spec).map_err(to_py_err)
    }

    fn extract_features(&self, image: &PyTensor) -> PyResult<Vec<f64>> {
        Ok(net::extract_features(&self.inner, &image.inner)
            .map_err(to_py_err)?
            .into_data())
    }

    /// SGD against softmax cross-entropy through a temporary dense head;
    /// returns the trained network and per-epoch `(loss, accuracy)` pairs.
    #[pyo3(signature = (dataset, learning_rate=0.01, epochs=10, batch_size=16, seed=0, freeze_prefix=0))]
    fn train(
        &self,
        dataset: &PyDataset,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        seed: u64,
        freeze_prefix: usize,
    ) -> PyResult<(PyNetwork, Vec<(f64, f64)>)> {
        let inputs: Vec<tensor::Tensor> = dataset.inner.images().cloned().collect();
        let labels = dataset.inner.labels();
        let config = net::TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            seed,
            freeze_prefix,
        };
        let run = net::sgd_train(
            &self.inner,
            &inputs,
            &labels,
            dataset.inner.class_count(),
            &config,
        )
        .map_err(to_py_err)?;
        let log = run.log.iter().map(|s| (s.mean_loss, s.accuracy)).collect();
        Ok((PyNetwork { inner: run.network }, log))
    }
}

/// Softmax regression head.
#[pyclass(name = "SoftmaxHead", frozen)]
struct PySoftmaxHead {
    inner: heads::SoftmaxHead,
}

#[pymethods]
impl PySoftmaxHead {
    #[staticmethod]
    #[pyo3(signature = (features, labels, class_count, learning_rate=0.1, epochs=200, seed=0))]
    fn train(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_count: usize,
        learning_rate: f64,
        epochs: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let config = heads::HeadTrainConfig {
            learning_rate,
            epochs,
            seed,
            ..heads::HeadTrainConfig::default()
        };
        Ok(PySoftmaxHead {
            inner: heads::train_softmax(&feature_matrix(features)?, &labels, class_count, &config)
                .map_err(to_py_err)?,
        })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        heads::softmax_predict(&self.inner, &feature_vec(x)?).map_err(to_py_err)
    }

    fn probabilities(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let logits = heads::softmax_logits(&self.inner, &feature_vec(x)?).map_err(to_py_err)?;
        Ok(heads::softmax_probs(&logits).map_err(to_py_err)?.into_data())
    }
}

/// One-vs-rest linear SVM head.
#[pyclass(name = "SvmHead", frozen)]
struct PySvmHead {
    inner: heads::SvmHead,
}

#[pymethods]
impl PySvmHead {
    #[staticmethod]
    #[pyo3(signature = (features, labels, class_count, c=10.0, tolerance=1e-3, seed=0, max_passes=None))]
    fn train(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_count: usize,
        c: f64,
        tolerance: f64,
        seed: u64,
        max_passes: Option<usize>,
    ) -> PyResult<Self> {
        let config = heads::HeadTrainConfig {
            c,
            tolerance,
            seed,
            max_passes,
            ..heads::HeadTrainConfig::default()
        };
        Ok(PySvmHead {
            inner: heads::train_multiclass_svm(
                &feature_matrix(features)?,
                &labels,
                class_count,
                &config,
            )
            .map_err(to_py_err)?,
        })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        heads::svm_predict(&self.inner, &feature_vec(x)?).map_err(to_py_err)
    }

    fn decisions(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.decisions(&feature_vec(x)?).map_err(to_py_err)
    }
}

/// Default pipeline configuration as a JSON string.
#[pyfunction]
fn pipeline_defaults() -> PyResult<String> {
    serde_json::to_string_pretty(&pipeline::PipelineConfig::default())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_config(config_json: &str) -> PyResult<pipeline::PipelineConfig> {
    serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Pretrains per the JSON config and writes the weight file; returns the
/// per-epoch `(loss, accuracy)` log.
#[pyfunction]
fn run_pretrain(config_json: &str) -> PyResult<Vec<(f64, f64)>> {
    let summary = pipeline::run_pretrain(&parse_config(config_json)?).map_err(to_py_err)?;
    Ok(summary.log.iter().map(|s| (s.mean_loss, s.accuracy)).collect())
}

/// Runs the fine-tune-and-compare protocol per the JSON config; returns the
/// report as a JSON string (and writes it when the config names an output).
#[pyfunction]
fn run_compare(config_json: &str) -> PyResult<String> {
    let (report, _) =
        pipeline::run_finetune_and_compare(&parse_config(config_json)?).map_err(to_py_err)?;
    report.to_json().map_err(to_py_err)
}

/// Renders a report JSON string as the comparison text table.
#[pyfunction]
fn render_report(report_json: &str) -> PyResult<String> {
    let report = pipeline::EvalReport::from_json(report_json).map_err(to_py_err)?;
    Ok(pipeline::render_table(&report))
}

#[pymodule]
fn recyclass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PySoftmaxHead>()?;
    m.add_class::<PySvmHead>()?;
    m.add_function(wrap_pyfunction!(conv_valid_1d, m)?)?;
    m.add_function(wrap_pyfunction!(conv_valid_2d, m)?)?;
    m.add_function(wrap_pyfunction!(relu, m)?)?;
    m.add_function(wrap_pyfunction!(max_pool_2d, m)?)?;
    m.add_function(wrap_pyfunction!(matvec, m)?)?;
    m.add_function(wrap_pyfunction!(dot, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_probs, m)?)?;
    m.add_function(wrap_pyfunction!(svm_decision, m)?)?;
    m.add_function(wrap_pyfunction!(svm_distance, m)?)?;
    m.add_function(wrap_pyfunction!(svm_margin, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline_defaults, m)?)?;
    m.add_function(wrap_pyfunction!(run_pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(run_compare, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    Ok(())
}
