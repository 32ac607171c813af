//! Python bindings for the levitation simulator: configuration, meshing,
//! the coupled full/reduced runs and trajectory comparison.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use levipod::config::{self, Mode, Movement, SimConfig};
use levipod::mesh;
use levipod::report;
use levipod::sim;

fn config_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Simulation configuration; starts from the benchmark defaults.
#[pyclass(name = "Config")]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        PyConfig {
            inner: SimConfig::default(),
        }
    }

    /// Parse a `key = value` configuration file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: config::parse_config(&path).map_err(config_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_file(&path).map_err(config_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(config_err)
    }

    #[getter]
    fn get_mode(&self) -> &'static str {
        self.inner.mode.as_str()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.mode = match mode {
            "full" => Mode::Full,
            "rom-deform" => Mode::RomDeform,
            "rom-remesh" => Mode::RomRemesh,
            other => return Err(config_err(format!("unknown mode `{other}`"))),
        };
        Ok(())
    }

    #[getter]
    fn get_movement(&self) -> &'static str {
        self.inner.movement.as_str()
    }

    #[setter]
    fn set_movement(&mut self, movement: &str) -> PyResult<()> {
        self.inner.movement = match movement {
            "deform" => Movement::Deform,
            "remesh" => Movement::Remesh,
            other => return Err(config_err(format!("unknown movement `{other}`"))),
        };
        Ok(())
    }

    #[getter]
    fn get_density(&self) -> f64 {
        self.inner.density
    }

    #[setter]
    fn set_density(&mut self, density: f64) {
        self.inner.density = density;
    }

    #[getter]
    fn get_periods(&self) -> usize {
        self.inner.time.periods
    }

    #[setter]
    fn set_periods(&mut self, periods: usize) {
        self.inner.time.periods = periods;
    }

    #[getter]
    fn get_amplitude(&self) -> f64 {
        self.inner.amplitude
    }

    #[setter]
    fn set_amplitude(&mut self, amplitude: f64) {
        self.inner.amplitude = amplitude;
    }

    #[getter]
    fn get_eps(&self) -> Option<f64> {
        self.inner.eps
    }

    #[setter]
    fn set_eps(&mut self, eps: Option<f64>) {
        self.inner.eps = eps;
    }

    #[getter]
    fn get_rank(&self) -> Option<usize> {
        self.inner.rank
    }

    #[setter]
    fn set_rank(&mut self, rank: Option<usize>) {
        self.inner.rank = rank;
    }

    #[getter]
    fn get_window(&self) -> (usize, usize) {
        (self.inner.window_start, self.inner.window_end)
    }

    #[setter]
    fn set_window(&mut self, window: (usize, usize)) {
        self.inner.window_start = window.0;
        self.inner.window_end = window.1;
    }

    #[getter]
    fn get_box_width(&self) -> f64 {
        self.inner.deform_box.x_extent
    }

    #[setter]
    fn set_box_width(&mut self, width: f64) {
        self.inner.deform_box.x_extent = width;
    }

    #[getter]
    fn get_initial_clearance(&self) -> f64 {
        self.inner.geometry.plate_initial_clearance
    }

    #[setter]
    fn set_initial_clearance(&mut self, clearance: f64) {
        self.inner.geometry.plate_initial_clearance = clearance;
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(mode='{}', movement='{}', density={}, periods={})",
            self.inner.mode.as_str(),
            self.inner.movement.as_str(),
            self.inner.density,
            self.inner.time.periods
        )
    }
}

/// Result of a run: per-step time, position, velocity, force, system sizes
/// and wall-clock cost.
#[pyclass(name = "Trajectory")]
#[derive(Clone)]
struct PyTrajectory {
    inner: sim::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.t).collect()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.y).collect()
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.v).collect()
    }

    #[getter]
    fn f_em(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.f_em).collect()
    }

    #[getter]
    fn dofs(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.dofs).collect()
    }

    #[getter]
    fn rank(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.r).collect()
    }

    #[getter]
    fn wall_ms(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.wall_ms).collect()
    }

    fn total_wall_ms(&self) -> f64 {
        self.inner.total_wall_ms()
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv_file(&path).map_err(sim_err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(PyTrajectory {
            inner: sim::Trajectory::read_csv_file(&path).map_err(sim_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Triangular mesh summary and file output.
#[pyclass(name = "Mesh")]
struct PyMesh {
    inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn tri_count(&self) -> usize {
        self.inner.tri_count()
    }

    #[getter]
    fn dof_count(&self) -> usize {
        self.inner.dof_count
    }

    #[getter]
    fn min_angle_deg(&self) -> f64 {
        mesh::quality(&self.inner).min_angle_deg
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(sim_err)?);
        self.inner.write_to(&mut w).map_err(sim_err)
    }
}

/// Generate the device mesh for a configuration.
#[pyfunction]
fn generate_mesh(cfg: &PyConfig) -> PyResult<PyMesh> {
    let c = &cfg.inner;
    c.validate().map_err(config_err)?;
    Ok(PyMesh {
        inner: mesh::generate_mesh(&c.geometry, &c.deform_box, c.density).map_err(sim_err)?,
    })
}

/// Execute the configured run (full order, or reduced with the offline
/// phase included) and return its trajectory.
#[pyfunction]
fn run(py: Python<'_>, cfg: &PyConfig) -> PyResult<PyTrajectory> {
    cfg.inner.validate().map_err(config_err)?;
    let cfg = cfg.inner.clone();
    let out = py
        .allow_threads(move || report::execute(&cfg))
        .map_err(sim_err)?;
    Ok(PyTrajectory {
        inner: out.trajectory,
    })
}

/// Relative L2 displacement error of `a` against the reference `b`.
#[pyfunction]
fn l2_relative_error(a: &PyTrajectory, b: &PyTrajectory) -> PyResult<f64> {
    report::l2_relative_error(&a.inner, &b.inner).map_err(sim_err)
}

/// Compare a run against a full-order reference; returns the error/timing
/// summary as a dict.
#[pyfunction]
fn compare<'py>(
    py: Python<'py>,
    run: &PyTrajectory,
    reference: &PyTrajectory,
) -> PyResult<Bound<'py, PyDict>> {
    let rep = report::compare_runs(&run.inner, &reference.inner).map_err(sim_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("l2_error", rep.l2_error)?;
    d.set_item("steps", rep.steps)?;
    d.set_item("ref_dofs", rep.ref_dofs)?;
    d.set_item("max_rank", rep.max_rank)?;
    d.set_item("ref_wall_ms", rep.ref_wall_ms)?;
    d.set_item("run_wall_ms", rep.run_wall_ms)?;
    d.set_item("speedup", rep.speedup)?;
    Ok(d)
}

#[pymodule]
fn levipod_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(generate_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(l2_relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
