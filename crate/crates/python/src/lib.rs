//! Python bindings: box types, losses and gradients, rotated IoU, DOTA line
//! parsing and gradient-descent fitting.

use obbkit::annotations::parse_dota_line as parse_line;
use obbkit::geometry::{self, Point2, Quad};
use obbkit::losses::{self, LossConfig, LossVariant, Normalization, WidthTerm};
use obbkit::optim::{self, FitConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Xy = (f64, f64);

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pt(p: Xy) -> Point2 {
    Point2::new(p.0, p.1)
}

fn xy(p: Point2) -> Xy {
    (p.x, p.y)
}

/// Oriented box as (cx, cy, length, width, theta). Stored canonically:
/// length ≥ width and theta in [0, π).
#[pyclass(name = "ObbParams", module = "obbkit", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyObb(geometry::ObbParams);

#[pymethods]
impl PyObb {
    #[new]
    fn new(cx: f64, cy: f64, length: f64, width: f64, theta: f64) -> PyResult<Self> {
        geometry::ObbParams::new(cx, cy, length, width, theta).map(Self).map_err(value_err)
    }

    /// Box from four corners, in either winding.
    #[staticmethod]
    fn from_quad(corners: [Xy; 4]) -> PyResult<Self> {
        let q = Quad::new(corners.map(pt)).map_err(value_err)?;
        geometry::quad_to_obb(&q).map(Self).map_err(value_err)
    }

    #[getter]
    fn cx(&self) -> f64 {
        self.0.cx
    }

    #[getter]
    fn cy(&self) -> f64 {
        self.0.cy
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn contains(&self, point: Xy) -> bool {
        self.0.contains(pt(point))
    }

    /// Counter-clockwise corners.
    fn to_quad(&self) -> [Xy; 4] {
        self.0.to_quad().corners().map(xy)
    }

    fn to_keypoints(&self) -> PyKeypoints {
        PyKeypoints(self.0.to_keypoints())
    }

    fn as_tuple(&self) -> (f64, f64, f64, f64, f64) {
        let b = &self.0;
        (b.cx, b.cy, b.length, b.width, b.theta)
    }

    fn __repr__(&self) -> String {
        let b = &self.0;
        format!("ObbParams(cx={}, cy={}, length={}, width={}, theta={})", b.cx, b.cy, b.length, b.width, b.theta)
    }
}

/// Keypoint box: center, head and width. The tail is the reflection of the
/// head through the center.
#[pyclass(name = "KeypointBox", module = "obbkit", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyKeypoints(geometry::KeypointBox);

#[pymethods]
impl PyKeypoints {
    #[new]
    fn new(center: Xy, head: Xy, width: f64) -> PyResult<Self> {
        geometry::KeypointBox::new(pt(center), pt(head), width).map(Self).map_err(value_err)
    }

    #[getter]
    fn center(&self) -> Xy {
        xy(self.0.center)
    }

    #[getter]
    fn head(&self) -> Xy {
        xy(self.0.head)
    }

    #[getter]
    fn tail(&self) -> Xy {
        xy(self.0.tail())
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }

    /// Same box with head and tail swapped.
    fn flipped(&self) -> Self {
        Self(self.0.flipped())
    }

    fn to_obb(&self) -> PyResult<PyObb> {
        self.0.to_obb().map(PyObb).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        let k = &self.0;
        format!("KeypointBox(center={:?}, head={:?}, width={})", xy(k.center), xy(k.head), k.width)
    }
}

#[pyclass(name = "ImageSize", module = "obbkit", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyImageSize(geometry::ImageSize);

#[pymethods]
impl PyImageSize {
    #[new]
    fn new(width: u32, height: u32) -> PyResult<Self> {
        geometry::ImageSize::new(width, height).map(Self).map_err(value_err)
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width_px
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height_px
    }

    fn __repr__(&self) -> String {
        format!("ImageSize({}, {})", self.0.width_px, self.0.height_px)
    }
}

/// Loss value with the branch that achieved the minimum.
#[pyclass(name = "LossValue", module = "obbkit", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyLossValue {
    value: f64,
    active_branch: &'static str,
    center: f64,
    extremity: f64,
    width: f64,
    branch_gap: f64,
}

#[pymethods]
impl PyLossValue {
    fn __float__(&self) -> f64 {
        self.value
    }

    fn __repr__(&self) -> String {
        format!("LossValue(value={}, active_branch={:?})", self.value, self.active_branch)
    }
}

impl From<losses::LossValue> for PyLossValue {
    fn from(v: losses::LossValue) -> Self {
        Self {
            value: v.value,
            active_branch: v.active_branch.as_str(),
            center: v.components.center,
            extremity: v.components.extremity,
            width: v.components.width,
            branch_gap: v.branch_gap,
        }
    }
}

fn loss_config(width_term: &str, normalization: &str) -> PyResult<LossConfig> {
    let width_term = match width_term {
        "none" => WidthTerm::None,
        "absolute" => WidthTerm::Absolute,
        "squared" => WidthTerm::Squared,
        other => {
            return Err(PyValueError::new_err(format!("width_term must be none, absolute or squared, got {other:?}")))
        }
    };
    let normalization = match normalization {
        "pixels" => Normalization::PixelCount,
        "diagonal" => Normalization::PixelDiagSq,
        other => return Err(PyValueError::new_err(format!("normalization must be pixels or diagonal, got {other:?}"))),
    };
    Ok(LossConfig::default().with_width_term(width_term).with_normalization(normalization))
}

fn loss_variant(name: &str) -> PyResult<LossVariant> {
    match name {
        "ht" => Ok(LossVariant::HeadTail),
        "ht4" => Ok(LossVariant::FourPoint),
        other => Err(PyValueError::new_err(format!("variant must be ht or ht4, got {other:?}"))),
    }
}

fn gradient_dict<'py>(py: Python<'py>, g: losses::LossGradient) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("d_center", xy(g.d_center))?;
    d.set_item("d_head", xy(g.d_head))?;
    d.set_item("d_width", g.d_width)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, image, width_term = "none", normalization = "pixels"))]
fn head_tail_loss(
    pred: &PyKeypoints,
    gt: &PyKeypoints,
    image: &PyImageSize,
    width_term: &str,
    normalization: &str,
) -> PyResult<PyLossValue> {
    let cfg = loss_config(width_term, normalization)?;
    Ok(losses::head_tail_loss(&pred.0, &gt.0, &image.0, &cfg).into())
}

/// Gradient with respect to the prediction, as a dict with `d_center`,
/// `d_head` and `d_width`.
#[pyfunction]
#[pyo3(signature = (pred, gt, image, width_term = "none", normalization = "pixels"))]
fn head_tail_loss_grad<'py>(
    py: Python<'py>,
    pred: &PyKeypoints,
    gt: &PyKeypoints,
    image: &PyImageSize,
    width_term: &str,
    normalization: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = loss_config(width_term, normalization)?;
    gradient_dict(py, losses::head_tail_loss_grad(&pred.0, &gt.0, &image.0, &cfg))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, image, width_term = "none", normalization = "pixels"))]
fn four_point_loss(
    pred: &PyKeypoints,
    gt: &PyKeypoints,
    image: &PyImageSize,
    width_term: &str,
    normalization: &str,
) -> PyResult<PyLossValue> {
    let cfg = loss_config(width_term, normalization)?;
    Ok(losses::four_point_loss(&pred.0, &gt.0, &image.0, &cfg).into())
}

#[pyfunction]
#[pyo3(signature = (pred, gt, image, width_term = "none", normalization = "pixels"))]
fn four_point_loss_grad<'py>(
    py: Python<'py>,
    pred: &PyKeypoints,
    gt: &PyKeypoints,
    image: &PyImageSize,
    width_term: &str,
    normalization: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = loss_config(width_term, normalization)?;
    gradient_dict(py, losses::four_point_loss_grad(&pred.0, &gt.0, &image.0, &cfg))
}

#[pyfunction]
fn rotated_iou(a: &PyObb, b: &PyObb) -> f64 {
    geometry::rotated_iou(&a.0, &b.0)
}

#[pyfunction]
fn obb_to_quad(b: &PyObb) -> [Xy; 4] {
    b.to_quad()
}

#[pyfunction]
fn quad_to_obb(corners: [Xy; 4]) -> PyResult<PyObb> {
    PyObb::from_quad(corners)
}

/// Parses one DOTA label line into a dict with `quad`, `category` and
/// `difficult`.
#[pyfunction]
#[pyo3(signature = (line, line_no = 1))]
fn parse_dota_line<'py>(py: Python<'py>, line: &str, line_no: usize) -> PyResult<Bound<'py, PyDict>> {
    let obj = parse_line(line, line_no).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("quad", obj.quad.corners().map(xy))?;
    d.set_item("category", obj.category)?;
    d.set_item("difficult", obj.difficult)?;
    Ok(d)
}

/// Acute angle between the axes of two boxes, in radians.
#[pyfunction]
fn direction_error(pred: &PyKeypoints, gt: &PyKeypoints) -> PyResult<f64> {
    optim::direction_error(&pred.0, &gt.0).map_err(value_err)
}

/// Gradient descent from `init` towards `target`. Returns a dict with
/// `losses`, `final_box`, `converged`, `iterations` and `direction_error`.
#[pyfunction]
#[pyo3(signature = (init, target, image, variant = "ht", width_term = "none", max_iters = 5000, tol = 1e-10, lr = None))]
#[allow(clippy::too_many_arguments)]
fn fit_obb<'py>(
    py: Python<'py>,
    init: &PyKeypoints,
    target: &PyKeypoints,
    image: &PyImageSize,
    variant: &str,
    width_term: &str,
    max_iters: usize,
    tol: f64,
    lr: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = FitConfig {
        learning_rate: lr,
        max_iters,
        tol,
        variant: loss_variant(variant)?,
        loss: loss_config(width_term, "pixels")?,
    };
    let trace = py.detach(|| optim::fit_obb(&init.0, &target.0, &image.0, &cfg)).map_err(|e| match e {
        optim::OptimError::Diverged { .. } => PyRuntimeError::new_err(e.to_string()),
        other => value_err(other),
    })?;
    let d = PyDict::new(py);
    d.set_item("losses", trace.losses)?;
    d.set_item("final_box", PyKeypoints(trace.final_box))?;
    d.set_item("converged", trace.converged)?;
    d.set_item("iterations", trace.iterations)?;
    d.set_item("direction_error", trace.direction_error)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "obbkit")]
fn obbkit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObb>()?;
    m.add_class::<PyKeypoints>()?;
    m.add_class::<PyImageSize>()?;
    m.add_class::<PyLossValue>()?;
    m.add_function(wrap_pyfunction!(head_tail_loss, m)?)?;
    m.add_function(wrap_pyfunction!(head_tail_loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(four_point_loss, m)?)?;
    m.add_function(wrap_pyfunction!(four_point_loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(rotated_iou, m)?)?;
    m.add_function(wrap_pyfunction!(obb_to_quad, m)?)?;
    m.add_function(wrap_pyfunction!(quad_to_obb, m)?)?;
    m.add_function(wrap_pyfunction!(parse_dota_line, m)?)?;
    m.add_function(wrap_pyfunction!(direction_error, m)?)?;
    m.add_function(wrap_pyfunction!(fit_obb, m)?)?;
    Ok(())
}
