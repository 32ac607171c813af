//! Transient weak electromechanical coupling: backward-Euler field steps
//! alternated with the 1D mechanical update, in three run modes (full order,
//! reduced order with per-step remeshing, reduced order with sub-domain mesh
//! deformation).
//!
//! Per step k the geometry is taken at y_{k-1}: solve the field, evaluate
//! the Lorentz force from the new field, then advance the mechanics. The
//! field and mechanics are never solved simultaneously.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};

use crate::config::{Movement, SimConfig};
use crate::error::{MeshError, SimError};
use crate::fem::{self, FieldSolution, SourceSpec};
use crate::mesh::{self, Mesh};
use crate::mor::{self, ReducedBasis, SnapshotMatrix, TriLocator};

/// Parameters of the mechanical equation m v' + xi v + k y + m g = F_em.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechParams {
    pub mass: f64,
    /// Viscous friction (kg/s). The benchmark gives xi = 1 without units;
    /// kg/s is the only choice consistent with the equation.
    pub friction: f64,
    /// Elastic constant (N/m); the levitation device has no spring.
    pub stiffness: f64,
    pub gravity: f64,
}

impl Default for MechParams {
    fn default() -> Self {
        MechParams {
            mass: 0.107,
            friction: 1.0,
            stiffness: 0.0,
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechState {
    pub y: f64,
    pub v: f64,
    /// Last position increment y_k - y_{k-1}.
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps_per_period: usize,
    pub periods: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            dt: 2.0e-4,
            steps_per_period: 100,
            periods: 50,
        }
    }
}

impl TimeGrid {
    pub fn total_steps(&self) -> usize {
        self.steps_per_period * self.periods
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub y: f64,
    pub v: f64,
    pub f_em: f64,
    pub dofs: usize,
    /// Reduced basis size used this step; 0 for full-order runs.
    pub r: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn displacement(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.records.iter().map(|r| r.wall_ms).sum()
    }

    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "t,y,v,F_em,dofs,r,wall_ms")?;
        for rec in &self.records {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
                rec.t, rec.y, rec.v, rec.f_em, rec.dofs, rec.r, rec.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)
    }

    pub fn read_csv(r: &mut dyn BufRead) -> std::io::Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, "bad trajectory row");
            if fields.len() != 7 {
                return Err(bad());
            }
            records.push(StepRecord {
                t: fields[0].parse().map_err(|_| bad())?,
                y: fields[1].parse().map_err(|_| bad())?,
                v: fields[2].parse().map_err(|_| bad())?,
                f_em: fields[3].parse().map_err(|_| bad())?,
                dofs: fields[4].parse().map_err(|_| bad())?,
                r: fields[5].parse().map_err(|_| bad())?,
                wall_ms: fields[6].parse().map_err(|_| bad())?,
            });
        }
        Ok(Trajectory { records })
    }

    pub fn read_csv_file(path: &Path) -> std::io::Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        Self::read_csv(&mut r)
    }
}

/// Snapshot of a full-order remeshing run: the solution expanded to nodal
/// values together with the mesh it lives on.
#[derive(Debug, Clone)]
pub struct RemeshSnapshot {
    pub mesh: Mesh,
    pub nodal: Vec<f64>,
    pub time: f64,
}

/// Field solutions captured during a full-order run, in the form needed by
/// the matching reduced model.
#[derive(Debug, Clone)]
pub enum SnapshotStore {
    /// Constant dof layout: raw solution columns on the reference mesh.
    Deform {
        mesh: Mesh,
        solutions: Vec<FieldSolution>,
    },
    /// Varying dof layout: one mesh per snapshot.
    Remesh { items: Vec<RemeshSnapshot> },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub snapshots: Option<SnapshotStore>,
}

/// One backward-Euler step of the full-order system:
/// (A/dt + B) x_k = (A/dt) x_{k-1} + c_k.
pub fn step_full(
    a: &CsrMatrix<f64>,
    b: &CsrMatrix<f64>,
    x_prev: &DVector<f64>,
    dt: f64,
    c_k: &DVector<f64>,
    step: usize,
) -> Result<DVector<f64>, SimError> {
    let a_dt = a * (1.0 / dt);
    let lhs = &a_dt + b;
    let rhs = &a_dt * x_prev + c_k;
    let csc = CscMatrix::from(&lhs);
    let chol = CscCholesky::factor(&csc).map_err(|e| SimError::SolverFailure {
        step,
        reason: format!("{e:?}"),
    })?;
    let rhs_mat = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let sol = chol.solve(&rhs_mat);
    Ok(DVector::from_column_slice(sol.column(0).as_slice()))
}

/// Implicit (backward-Euler) update of the mechanical state.
pub fn step_mechanics(state: &MechState, params: &MechParams, f_em: f64, dt: f64) -> MechState {
    // Discretize m (v_k - v_{k-1})/dt + xi v_k + k y_k + m g = F with
    // y_k = y_{k-1} + dt v_k. Substituting y_k into the elastic term:
    //   v_k (m/dt + xi + k dt) = m v_{k-1}/dt + F - m g - k y_{k-1}.
    let m_dt = params.mass / dt;
    let v = (m_dt * state.v + f_em - params.mass * params.gravity
        - params.stiffness * state.y)
        / (m_dt + params.friction + params.stiffness * dt);
    let y = state.y + dt * v;
    MechState {
        y,
        v,
        dy: y - state.y,
    }
}

fn check_bounds(cfg: &SimConfig, movement: Movement, y: f64, step: usize) -> Result<(), SimError> {
    match movement {
        Movement::Deform => {
            if !cfg.deform_box.admissible(y, cfg.geometry.plate_thickness) {
                return Err(SimError::Mesh {
                    step,
                    source: MeshError::OutOfBounds {
                        y,
                        min: cfg.deform_box.y_min,
                        max: cfg.deform_box.y_max,
                    },
                });
            }
        }
        Movement::Remesh => {
            if y <= cfg.geometry.coil_top() {
                return Err(SimError::Mesh {
                    step,
                    source: MeshError::InvalidGeometry(format!(
                        "plate position {y} m reached the coils"
                    )),
                });
            }
        }
    }
    Ok(())
}

fn in_window(cfg: &SimConfig, k: usize) -> bool {
    k >= cfg.window_start && k <= cfg.window_end && (k - cfg.window_start) % cfg.stride == 0
}

/// Full-order transient run. With `collect_snapshots`, field solutions in
/// the configured window are stored for the offline ROM phase.
pub fn run_full(cfg: &SimConfig, collect_snapshots: bool) -> Result<RunResult, SimError> {
    run_full_steps(cfg, collect_snapshots, cfg.time.total_steps())
}

/// Full-order run truncated at `total_steps`; the offline phase uses this to
/// stop at the end of the snapshot window.
pub fn run_full_steps(
    cfg: &SimConfig,
    collect_snapshots: bool,
    total_steps: usize,
) -> Result<RunResult, SimError> {
    let source = SourceSpec::from_geometry(&cfg.geometry, cfg.amplitude, cfg.frequency);
    let dt = cfg.time.dt;
    let mut state = MechState {
        y: cfg.geometry.plate_initial_clearance,
        v: 0.0,
        dy: 0.0,
    };
    check_bounds(cfg, cfg.movement, state.y, 0)?;

    let reference = match cfg.movement {
        Movement::Deform => mesh::generate_mesh(&cfg.geometry, &cfg.deform_box, cfg.density)
            .map_err(|source| SimError::Mesh { step: 0, source })?,
        Movement::Remesh => mesh::remesh(&cfg.geometry, &cfg.deform_box, state.y, cfg.density)
            .map_err(|source| SimError::Mesh { step: 0, source })?,
    };

    let mut prev_mesh = match cfg.movement {
        Movement::Deform => reference.clone(),
        Movement::Remesh => reference.clone(),
    };
    let mut x_prev = DVector::zeros(prev_mesh.dof_count);

    let mut trajectory = Trajectory::default();
    let mut deform_snaps: Vec<FieldSolution> = Vec::new();
    let mut remesh_snaps: Vec<RemeshSnapshot> = Vec::new();

    for k in 1..=total_steps {
        let started = Instant::now();
        let t = k as f64 * dt;

        let mesh_k = match cfg.movement {
            Movement::Deform => mesh::deform_subdomain(&reference, &cfg.deform_box, state.y)
                .map_err(|source| SimError::Mesh { step: k, source })?,
            Movement::Remesh => mesh::remesh(&cfg.geometry, &cfg.deform_box, state.y, cfg.density)
                .map_err(|source| SimError::Mesh { step: k, source })?,
        };

        // Across a remesh the previous solution changes dof layout; transfer
        // it by interpolation (the plate dofs are the only ones feeding the
        // time-derivative terms).
        let x_prev_k = match cfg.movement {
            Movement::Deform => x_prev,
            Movement::Remesh => {
                if k == 1 {
                    DVector::zeros(mesh_k.dof_count)
                } else {
                    let nodal = prev_mesh.expand(&x_prev);
                    let transferred = mor::project_between_meshes(&nodal, &prev_mesh, &mesh_k)
                        .map_err(|source| SimError::Mor { step: k, source })?;
                    mesh_k.restrict(&transferred)
                }
            }
        };

        let system = fem::assemble_system(&mesh_k, &cfg.materials, &source)
            .map_err(|source| SimError::Fem { step: k, source })?;
        let c_k = system.source_at(t);
        let x_k = step_full(&system.a, &system.b, &x_prev_k, dt, &c_k, k)?;

        let sol_k = FieldSolution {
            values: x_k,
            time: t,
        };
        let sol_prev = FieldSolution {
            values: x_prev_k,
            time: t - dt,
        };
        let f_em = fem::compute_lorentz_force(&mesh_k, &sol_k, &sol_prev, dt, &cfg.materials)
            .map_err(|source| SimError::Fem { step: k, source })?;

        state = step_mechanics(&state, &cfg.mech, f_em, dt);
        check_bounds(cfg, cfg.movement, state.y, k)?;

        if collect_snapshots && in_window(cfg, k) {
            match cfg.movement {
                Movement::Deform => deform_snaps.push(sol_k.clone()),
                Movement::Remesh => remesh_snaps.push(RemeshSnapshot {
                    nodal: mesh_k.expand(&sol_k.values),
                    mesh: mesh_k.clone(),
                    time: t,
                }),
            }
        }

        trajectory.records.push(StepRecord {
            t,
            y: state.y,
            v: state.v,
            f_em,
            dofs: mesh_k.dof_count,
            r: 0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });

        x_prev = sol_k.values;
        prev_mesh = mesh_k;
    }

    let snapshots = if collect_snapshots {
        Some(match cfg.movement {
            Movement::Deform => SnapshotStore::Deform {
                mesh: reference,
                solutions: deform_snaps,
            },
            Movement::Remesh => SnapshotStore::Remesh {
                items: remesh_snaps,
            },
        })
    } else {
        None
    };

    Ok(RunResult {
        trajectory,
        snapshots,
    })
}

/// Reduced-order run with sub-domain mesh deformation: the dof layout is
/// constant, so one basis built offline is reused at every step. Operators
/// are reassembled on the deformed mesh and reduced with the fixed basis.
pub fn run_rom_deform(cfg: &SimConfig, basis: &ReducedBasis) -> Result<RunResult, SimError> {
    let source = SourceSpec::from_geometry(&cfg.geometry, cfg.amplitude, cfg.frequency);
    let dt = cfg.time.dt;
    let reference = mesh::generate_mesh(&cfg.geometry, &cfg.deform_box, cfg.density)
        .map_err(|source| SimError::Mesh { step: 0, source })?;
    if basis.psi.nrows() != reference.dof_count {
        return Err(SimError::Mor {
            step: 0,
            source: crate::error::MorError::DimensionMismatch(format!(
                "basis rows {} vs mesh dofs {}",
                basis.psi.nrows(),
                reference.dof_count
            )),
        });
    }

    let mut state = MechState {
        y: cfg.geometry.plate_initial_clearance,
        v: 0.0,
        dy: 0.0,
    };
    check_bounds(cfg, Movement::Deform, state.y, 0)?;

    let mut x_r_prev = DVector::zeros(basis.rank);
    let mut x_prev_full = DVector::zeros(reference.dof_count);
    let mut trajectory = Trajectory::default();

    for k in 1..=cfg.time.total_steps() {
        let started = Instant::now();
        let t = k as f64 * dt;

        let mesh_k = mesh::deform_subdomain(&reference, &cfg.deform_box, state.y)
            .map_err(|source| SimError::Mesh { step: k, source })?;
        let system = fem::assemble_system(&mesh_k, &cfg.materials, &source)
            .map_err(|source| SimError::Fem { step: k, source })?;
        let ops = mor::reduce_operators(&system.a, &system.b, &system.c_unit, &basis.psi)
            .map_err(|source| SimError::Mor { step: k, source })?;
        let x_r = mor::step_reduced(&ops, &x_r_prev, dt, source.current(t))
            .map_err(|source| SimError::Mor { step: k, source })?;
        let x_full = mor::lift(&x_r, &basis.psi)
            .map_err(|source| SimError::Mor { step: k, source })?;

        let sol_k = FieldSolution {
            values: x_full,
            time: t,
        };
        let sol_prev = FieldSolution {
            values: x_prev_full,
            time: t - dt,
        };
        let f_em = fem::compute_lorentz_force(&mesh_k, &sol_k, &sol_prev, dt, &cfg.materials)
            .map_err(|source| SimError::Fem { step: k, source })?;

        state = step_mechanics(&state, &cfg.mech, f_em, dt);
        check_bounds(cfg, Movement::Deform, state.y, k)?;

        trajectory.records.push(StepRecord {
            t,
            y: state.y,
            v: state.v,
            f_em,
            dofs: mesh_k.dof_count,
            r: basis.rank,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });

        x_prev_full = sol_k.values;
        x_r_prev = x_r;
    }

    Ok(RunResult {
        trajectory,
        snapshots: None,
    })
}

/// Reduced-order run with per-step automatic remeshing: every step projects
/// all stored snapshots onto the fresh mesh, recomputes the SVD basis, and
/// reduces the freshly assembled operators. Deliberately faithful to the
/// per-step projection procedure, whose cost is the point of comparison.
pub fn run_rom_remesh(
    cfg: &SimConfig,
    store: &[RemeshSnapshot],
    epsilon: f64,
) -> Result<RunResult, SimError> {
    if store.is_empty() {
        return Err(SimError::Mor {
            step: 0,
            source: crate::error::MorError::EmptyWindow,
        });
    }
    let source = SourceSpec::from_geometry(&cfg.geometry, cfg.amplitude, cfg.frequency);
    let dt = cfg.time.dt;
    let mut state = MechState {
        y: cfg.geometry.plate_initial_clearance,
        v: 0.0,
        dy: 0.0,
    };
    check_bounds(cfg, Movement::Remesh, state.y, 0)?;

    let locators: Vec<TriLocator> = store.iter().map(|s| TriLocator::new(&s.mesh)).collect();

    let mut prev_mesh = mesh::remesh(&cfg.geometry, &cfg.deform_box, state.y, cfg.density)
        .map_err(|source| SimError::Mesh { step: 0, source })?;
    let mut x_prev_nodal = vec![0.0; prev_mesh.node_count()];
    let mut trajectory = Trajectory::default();

    for k in 1..=cfg.time.total_steps() {
        let started = Instant::now();
        let t = k as f64 * dt;

        let mesh_k = mesh::remesh(&cfg.geometry, &cfg.deform_box, state.y, cfg.density)
            .map_err(|source| SimError::Mesh { step: k, source })?;

        // Project every stored snapshot onto the current mesh and rebuild
        // the basis from scratch.
        let n_k = mesh_k.dof_count;
        let mut s_p = DMatrix::zeros(n_k, store.len());
        for (col, (snap, locator)) in store.iter().zip(&locators).enumerate() {
            let nodal = mor::project_with_locator(&snap.nodal, locator, &mesh_k)
                .map_err(|source| SimError::Mor { step: k, source })?;
            s_p.set_column(col, &mesh_k.restrict(&nodal));
        }
        let snapshots = SnapshotMatrix {
            data: s_p,
            times: store.iter().map(|s| s.time).collect(),
        };
        let basis = mor::compute_basis(&snapshots, epsilon)
            .map_err(|source| SimError::Mor { step: k, source })?;

        let system = fem::assemble_system(&mesh_k, &cfg.materials, &source)
            .map_err(|source| SimError::Fem { step: k, source })?;
        let ops = mor::reduce_operators(&system.a, &system.b, &system.c_unit, &basis.psi)
            .map_err(|source| SimError::Mor { step: k, source })?;

        let x_prev_here = if k == 1 {
            DVector::zeros(n_k)
        } else {
            let transferred =
                mor::project_between_meshes(&x_prev_nodal, &prev_mesh, &mesh_k)
                    .map_err(|source| SimError::Mor { step: k, source })?;
            mesh_k.restrict(&transferred)
        };
        let x_r_prev = basis.psi.transpose() * &x_prev_here;

        let x_r = mor::step_reduced(&ops, &x_r_prev, dt, source.current(t))
            .map_err(|source| SimError::Mor { step: k, source })?;
        let x_full = mor::lift(&x_r, &basis.psi)
            .map_err(|source| SimError::Mor { step: k, source })?;

        let sol_k = FieldSolution {
            values: x_full,
            time: t,
        };
        let sol_prev = FieldSolution {
            values: x_prev_here,
            time: t - dt,
        };
        let f_em = fem::compute_lorentz_force(&mesh_k, &sol_k, &sol_prev, dt, &cfg.materials)
            .map_err(|source| SimError::Fem { step: k, source })?;

        state = step_mechanics(&state, &cfg.mech, f_em, dt);
        check_bounds(cfg, Movement::Remesh, state.y, k)?;

        trajectory.records.push(StepRecord {
            t,
            y: state.y,
            v: state.v,
            f_em,
            dofs: n_k,
            r: basis.rank,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });

        x_prev_nodal = mesh_k.expand(&sol_k.values);
        prev_mesh = mesh_k;
    }

    Ok(RunResult {
        trajectory,
        snapshots: None,
    })
}

/// Closed form of the backward-Euler recurrence for the free mechanics
/// (F_em = 0, k = 0): used as the oracle for the damped free-fall check.
pub fn free_fall_closed_form(
    params: &MechParams,
    y0: f64,
    v0: f64,
    dt: f64,
    steps: usize,
) -> Vec<(f64, f64)> {
    let m_dt = params.mass / dt;
    let alpha = m_dt / (m_dt + params.friction);
    let beta = -params.mass * params.gravity / (m_dt + params.friction);
    let mut out = Vec::with_capacity(steps);
    let mut y = y0;
    let mut v = v0;
    for _ in 0..steps {
        v = alpha * v + beta;
        y += dt * v;
        out.push((y, v));
    }
    out
}
