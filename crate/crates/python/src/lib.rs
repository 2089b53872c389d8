//! Python bindings: tensors, fixture models, interpreters, proximal maps,
//! attacks and metrics.

use moreaugrad::attack::{gaussian_attack as rs_gaussian_attack, topk_attack as rs_topk_attack, AttackConfig};
use moreaugrad::cli::{Method, MethodArgs};
use moreaugrad::envelope::DEFAULT_GROUP_BLOCK;
use moreaugrad::io::{load_tensor, save_tensor};
use moreaugrad::metrics::{self, default_k};
use moreaugrad::model::{load_weights, save_weights, train_toy, Architecture, Dataset, ToyTask};
use moreaugrad::prox;
use moreaugrad::{moreau_grad as rs_moreau_grad, ClassScore, Error, GroupPartition, SeededRng};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(moreaugrad_py, DivergenceError, PyRuntimeError, "The envelope solver diverged.");
create_exception!(moreaugrad_py, PreconditionError, PyRuntimeError, "An attack precondition does not hold.");
create_exception!(moreaugrad_py, TrainingError, PyRuntimeError, "Training missed its accuracy target.");

fn py_err(err: Error) -> PyErr {
    let msg = err.to_string();
    match err {
        Error::InvalidInput(_) | Error::InvalidPartition(_) | Error::DegenerateInput(_) | Error::Format(_) => {
            PyValueError::new_err(msg)
        }
        Error::Divergence { .. } => DivergenceError::new_err(msg),
        Error::Precondition(_) => PreconditionError::new_err(msg),
        Error::TrainingFailed { .. } => TrainingError::new_err(msg),
        Error::Io(_) => PyOSError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for moreaugrad::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Dense row-major float tensor.
#[pyclass(name = "Tensor", frozen)]
struct PyTensor {
    inner: moreaugrad::Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    #[pyo3(signature = (data, shape = None))]
    fn new(data: Vec<f64>, shape: Option<Vec<usize>>) -> PyResult<Self> {
        let shape = shape.unwrap_or_else(|| vec![data.len()]);
        Ok(Self { inner: moreaugrad::Tensor::new(shape, data).py()? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_tensor(path).py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_tensor(&self.inner, path).py()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    fn tolist(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn count_nonzero(&self) -> usize {
        self.inner.count_nonzero()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

fn wrap(t: moreaugrad::Tensor) -> PyTensor {
    PyTensor { inner: t }
}

fn parse_dataset(name: &str) -> PyResult<Dataset> {
    name.parse::<Dataset>().py()
}

/// Softplus classifier with exact input gradients.
#[pyclass(name = "ScoreModel", frozen)]
struct PyScoreModel {
    inner: moreaugrad::ScoreModel,
}

#[pymethods]
impl PyScoreModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_weights(path).py()? })
    }

    /// Trains a fixture network; `arch` is `"mlp"` or `"conv"`.
    #[staticmethod]
    #[pyo3(signature = (dataset, arch, seed = 0, epochs = None))]
    fn train(py: Python<'_>, dataset: &str, arch: &str, seed: u64, epochs: Option<usize>) -> PyResult<Self> {
        let mut task = ToyTask::new(parse_dataset(dataset)?);
        if let Some(e) = epochs {
            task.epochs = e;
        }
        let arch = match arch {
            "mlp" => Architecture::mlp(),
            "conv" => Architecture::conv(),
            other => return Err(PyValueError::new_err(format!("unknown architecture '{other}' (mlp, conv)"))),
        };
        let inner = py.detach(|| train_toy(&task, &arch, &SeededRng::new(seed))).py()?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_weights(&self.inner, path).py()
    }

    #[getter]
    fn input_shape(&self) -> Vec<usize> {
        self.inner.input_shape().to_vec()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes()
    }

    fn forward(&self, x: &PyTensor) -> PyResult<Vec<f64>> {
        self.inner.forward(&x.inner).py()
    }

    fn predict(&self, x: &PyTensor) -> PyResult<usize> {
        Ok(self.inner.predict(&x.inner).py()?.class_index)
    }

    fn grad(&self, x: &PyTensor, class_index: usize) -> PyResult<PyTensor> {
        Ok(wrap(self.inner.grad_input(&x.inner, class_index).py()?))
    }
}

/// One synthetic sample; labels alternate with the index.
#[pyfunction]
#[pyo3(signature = (dataset, index = 0, seed = 0))]
fn sample(dataset: &str, index: u64, seed: u64) -> PyResult<(PyTensor, usize)> {
    let dataset = parse_dataset(dataset)?;
    let label = (index % dataset.classes() as u64) as usize;
    let mut rng = SeededRng::with_stream(seed, index);
    Ok((wrap(dataset.sample(label, &mut rng)), label))
}

fn parse_method(name: &str) -> PyResult<Method> {
    Ok(match name {
        "simple-grad" => Method::SimpleGrad,
        "integrated-grad" => Method::IntegratedGrad,
        "smooth-grad" => Method::SmoothGrad,
        "moreau" => Method::Moreau,
        "sparse-moreau" => Method::SparseMoreau,
        "group-sparse-moreau" => Method::GroupSparseMoreau,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    })
}

/// Interpreter options shared by `interpret` and `topk_attack`.
#[allow(clippy::too_many_arguments)]
fn method_args(
    method: &str,
    class_index: Option<usize>,
    rho: f64,
    eta: Option<f64>,
    gamma: Option<f64>,
    iters: usize,
    tol: Option<f64>,
    sigma: Option<f64>,
    noise_samples: usize,
    regularized: bool,
    group_block: usize,
    ig_steps: usize,
) -> PyResult<MethodArgs> {
    Ok(MethodArgs {
        method: parse_method(method)?,
        rho,
        eta,
        gamma,
        iters,
        tol,
        sigma,
        noise_samples,
        regularized,
        group_block,
        ig_steps,
        class: class_index,
    })
}

/// Saliency map of `x` for `class_index` (default: predicted class).
#[pyfunction]
#[pyo3(signature = (
    model, x, method = "moreau", class_index = None, rho = 1.0, eta = None, gamma = None,
    iters = 200, tol = None, sigma = None, noise_samples = 10, regularized = false,
    group_block = DEFAULT_GROUP_BLOCK, ig_steps = 50, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn interpret(
    py: Python<'_>,
    model: &PyScoreModel,
    x: &PyTensor,
    method: &str,
    class_index: Option<usize>,
    rho: f64,
    eta: Option<f64>,
    gamma: Option<f64>,
    iters: usize,
    tol: Option<f64>,
    sigma: Option<f64>,
    noise_samples: usize,
    regularized: bool,
    group_block: usize,
    ig_steps: usize,
    seed: u64,
) -> PyResult<PyTensor> {
    let args = method_args(
        method, class_index, rho, eta, gamma, iters, tol, sigma, noise_samples, regularized, group_block, ig_steps,
    )?;
    let interpreter = args.interpreter(x.inner.shape()).py()?;
    let class = match class_index {
        Some(c) => c,
        None => model.inner.predict(&x.inner).py()?.class_index,
    };
    let score = ClassScore::new(&model.inner, class).py()?;
    let map = py.detach(|| interpreter.interpret(&score, &x.inner, &mut SeededRng::new(seed)));
    Ok(wrap(map.py()?))
}

/// Full MoreauGrad solve; returns a dict with the saliency map, x̃* and
/// solver diagnostics. `groups` switches to group-sparse mode.
#[pyfunction]
#[pyo3(signature = (model, x, class_index, rho = 1.0, eta = 0.0, groups = None, gamma = None, iters = 200, tol = None))]
#[allow(clippy::too_many_arguments)]
fn moreau_grad<'py>(
    py: Python<'py>,
    model: &PyScoreModel,
    x: &PyTensor,
    class_index: usize,
    rho: f64,
    eta: f64,
    groups: Option<Vec<Vec<usize>>>,
    gamma: Option<f64>,
    iters: usize,
    tol: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = match groups {
        Some(g) => moreaugrad::EnvelopeConfig::group_sparse(rho, eta, GroupPartition::new(g, x.inner.len()).py()?),
        None if eta > 0.0 => moreaugrad::EnvelopeConfig::sparse(rho, eta),
        None => moreaugrad::EnvelopeConfig::vanilla(rho),
    }
    .with_iterations(iters);
    if let Some(g) = gamma {
        cfg = cfg.with_gamma(g);
    }
    cfg.tolerance = tol;
    let score = ClassScore::new(&model.inner, class_index).py()?;
    let sol = py
        .detach(|| rs_moreau_grad(&score, &x.inner, &cfg, &mut SeededRng::new(0)))
        .py()?;
    let out = PyDict::new(py);
    out.set_item("saliency", wrap(sol.saliency))?;
    out.set_item("x_star", wrap(sol.x_star))?;
    out.set_item("envelope_value", sol.envelope_value)?;
    out.set_item("iterations", sol.iterations_used)?;
    out.set_item("converged", sol.converged)?;
    Ok(out)
}

#[pyfunction]
fn soft_threshold(v: &PyTensor, alpha: f64) -> PyResult<PyTensor> {
    Ok(wrap(prox::soft_threshold(&v.inner, alpha).py()?))
}

#[pyfunction]
fn group_soft_threshold(v: &PyTensor, alpha: f64, groups: Vec<Vec<usize>>) -> PyResult<PyTensor> {
    let partition = GroupPartition::new(groups, v.inner.len()).py()?;
    Ok(wrap(prox::group_soft_threshold(&v.inner, alpha, &partition).py()?))
}

/// Square `block`-sized tiles of a CHW image, all channels of a pixel together.
#[pyfunction]
fn grid_partition(height: usize, width: usize, channels: usize, block: usize) -> PyResult<Vec<Vec<usize>>> {
    Ok(prox::grid_partition(height, width, channels, block).py()?.groups().to_vec())
}

#[pyfunction]
fn normalized_l2_distance(a: &PyTensor, b: &PyTensor) -> PyResult<f64> {
    metrics::normalized_l2_distance(&a.inner, &b.inner).py()
}

#[pyfunction]
fn topk_intersection(a: &PyTensor, b: &PyTensor, k: usize) -> PyResult<f64> {
    metrics::topk_intersection(&a.inner, &b.inner, k).py()
}

#[pyfunction]
fn ssim(a: &PyTensor, b: &PyTensor) -> PyResult<f64> {
    metrics::ssim(&a.inner, &b.inner).py()
}

#[pyfunction]
#[pyo3(signature = (x, epsilon, seed = 0))]
fn gaussian_attack(x: &PyTensor, epsilon: f64, seed: u64) -> PyResult<PyTensor> {
    Ok(wrap(rs_gaussian_attack(&x.inner, epsilon, &mut SeededRng::new(seed)).py()?))
}

/// Top-k interpretation attack against `method`; returns a dict with the
/// perturbed input and attack diagnostics.
#[pyfunction]
#[pyo3(signature = (model, x, label, epsilon = 0.5, k = None, method = "simple-grad", rho = 1.0, eta = None, steps = 20, directions = 20, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn topk_attack<'py>(
    py: Python<'py>,
    model: &PyScoreModel,
    x: &PyTensor,
    label: usize,
    epsilon: f64,
    k: Option<usize>,
    method: &str,
    rho: f64,
    eta: Option<f64>,
    steps: usize,
    directions: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let args = method_args(method, None, rho, eta, None, 200, None, None, 10, false, DEFAULT_GROUP_BLOCK, 50)?;
    let interpreter = args.interpreter(x.inner.shape()).py()?;
    let mut cfg = AttackConfig::new(epsilon, k.unwrap_or_else(|| default_k(&x.inner)));
    cfg.steps = steps;
    cfg.directions = directions;
    let res = py
        .detach(|| rs_topk_attack(&model.inner, &interpreter, &x.inner, label, &cfg, &mut SeededRng::new(seed)))
        .py()?;
    let out = PyDict::new(py);
    out.set_item("x_adv", wrap(res.x_adv))?;
    out.set_item("delta_norm", res.delta_norm)?;
    out.set_item("prediction_preserved", res.prediction_preserved)?;
    out.set_item("initial_objective", res.initial_objective)?;
    out.set_item("final_objective", res.final_objective)?;
    Ok(out)
}

#[pymodule]
fn moreaugrad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyScoreModel>()?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add("PreconditionError", m.py().get_type::<PreconditionError>())?;
    m.add("TrainingError", m.py().get_type::<TrainingError>())?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(interpret, m)?)?;
    m.add_function(wrap_pyfunction!(moreau_grad, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(group_soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(grid_partition, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_l2_distance, m)?)?;
    m.add_function(wrap_pyfunction!(topk_intersection, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_attack, m)?)?;
    m.add_function(wrap_pyfunction!(topk_attack, m)?)?;
    Ok(())
}
