//! Run orchestration and trajectory comparison: the full/reduced pipelines
//! behind the CLI, plus the displacement error and timing report.

use std::io::Write;
use std::path::Path;

use crate::config::{Mode, Movement, SimConfig};
use crate::error::{MorError, SimError};
use crate::mor::{self, ReducedBasis, SnapshotMatrix};
use crate::sim::{self, RunResult, SnapshotStore, Trajectory};

/// Relative L2 error of the plate displacement against a reference run:
/// ||y_a - y_ref||_2 / ||y_ref||_2, sampled at the shared time steps.
pub fn l2_relative_error(a: &Trajectory, reference: &Trajectory) -> Result<f64, SimError> {
    if a.len() != reference.len() || a.is_empty() {
        return Err(SimError::GridMismatch);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (ra, rr) in a.records.iter().zip(&reference.records) {
        if (ra.t - rr.t).abs() > 1e-12 * rr.t.abs().max(1e-12) {
            return Err(SimError::GridMismatch);
        }
        num += (ra.y - rr.y).powi(2);
        den += rr.y * rr.y;
    }
    if den == 0.0 {
        return Err(SimError::GridMismatch);
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Comparison of a (typically reduced) run against a full-order reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub l2_error: f64,
    pub steps: usize,
    /// Dof count of the reference run (last step).
    pub ref_dofs: usize,
    /// Largest reduced basis size seen in the compared run; 0 if full order.
    pub max_rank: usize,
    pub ref_wall_ms: f64,
    pub run_wall_ms: f64,
    /// Reference wall time over compared wall time.
    pub speedup: f64,
}

impl ErrorReport {
    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "l2_error,steps,ref_dofs,max_rank,ref_wall_ms,run_wall_ms,speedup")?;
        writeln!(
            w,
            "{:.16e},{},{},{},{:.16e},{:.16e},{:.16e}",
            self.l2_error,
            self.steps,
            self.ref_dofs,
            self.max_rank,
            self.ref_wall_ms,
            self.run_wall_ms,
            self.speedup
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "steps: {}\nreference dofs: {}\nmax reduced rank: {}\nrelative L2 displacement error: {:.6e}\nreference wall time: {:.3} ms\ncompared wall time: {:.3} ms\nspeedup: {:.2}x\n",
            self.steps,
            self.ref_dofs,
            self.max_rank,
            self.l2_error,
            self.ref_wall_ms,
            self.run_wall_ms,
            self.speedup
        )
    }
}

/// Compare a run against a full-order reference trajectory. The reference
/// must come from a full-order run (every record has rank 0).
pub fn compare_runs(run: &Trajectory, reference: &Trajectory) -> Result<ErrorReport, SimError> {
    if reference.records.iter().any(|r| r.r != 0) {
        return Err(SimError::GridMismatch);
    }
    let l2_error = l2_relative_error(run, reference)?;
    let ref_wall_ms = reference.total_wall_ms();
    let run_wall_ms = run.total_wall_ms();
    Ok(ErrorReport {
        l2_error,
        steps: reference.len(),
        ref_dofs: reference.records.last().map_or(0, |r| r.dofs),
        max_rank: run.records.iter().map(|r| r.r).max().unwrap_or(0),
        ref_wall_ms,
        run_wall_ms,
        speedup: if run_wall_ms > 0.0 {
            ref_wall_ms / run_wall_ms
        } else {
            f64::INFINITY
        },
    })
}

/// Output of [`execute`]: the trajectory of the requested run, plus the
/// offline artifacts when a reduced mode was requested.
#[derive(Debug, Clone)]
pub struct ExecuteOutput {
    pub trajectory: Trajectory,
    /// Offline (snapshot-window) full-order trajectory, reduced modes only.
    pub offline: Option<Trajectory>,
    /// Basis built offline; only for the fixed-basis deformation mode.
    pub basis: Option<ReducedBasis>,
}

fn offline_config(cfg: &SimConfig, movement: Movement) -> SimConfig {
    let mut off = cfg.clone();
    off.mode = Mode::Full;
    off.movement = movement;
    off
}

/// Build the reduced basis from a deformation-run snapshot store using the
/// configured truncation (tolerance or fixed rank).
pub fn basis_from_config(cfg: &SimConfig, snapshots: &SnapshotMatrix) -> Result<ReducedBasis, SimError> {
    let wrap = |source: MorError| SimError::Mor { step: 0, source };
    match (cfg.rank, cfg.eps) {
        (Some(rank), _) => mor::compute_basis_with_rank(snapshots, rank).map_err(wrap),
        (None, Some(eps)) => mor::compute_basis(snapshots, eps).map_err(wrap),
        (None, None) => Err(wrap(MorError::InvalidTolerance(f64::NAN))),
    }
}

/// Run the configured simulation end to end. Reduced modes first run the
/// full-order model over the snapshot window (offline phase), then the
/// reduced model over the whole horizon (online phase).
pub fn execute(cfg: &SimConfig) -> Result<ExecuteOutput, SimError> {
    match cfg.mode {
        Mode::Full => {
            let result = sim::run_full(cfg, false)?;
            Ok(ExecuteOutput {
                trajectory: result.trajectory,
                offline: None,
                basis: None,
            })
        }
        Mode::RomDeform => {
            let off_cfg = offline_config(cfg, Movement::Deform);
            let offline = sim::run_full_steps(&off_cfg, true, cfg.window_end)?;
            let store = offline.snapshots.as_ref().ok_or(SimError::Mor {
                step: 0,
                source: MorError::EmptyWindow,
            })?;
            let solutions = match store {
                SnapshotStore::Deform { solutions, .. } => solutions,
                SnapshotStore::Remesh { .. } => return Err(SimError::GridMismatch),
            };
            let snapshots = mor::build_snapshots(solutions, 0..solutions.len(), 1)
                .map_err(|source| SimError::Mor { step: 0, source })?;
            let basis = basis_from_config(cfg, &snapshots)?;
            let online = sim::run_rom_deform(cfg, &basis)?;
            Ok(ExecuteOutput {
                trajectory: online.trajectory,
                offline: Some(offline.trajectory),
                basis: Some(basis),
            })
        }
        Mode::RomRemesh => {
            let off_cfg = offline_config(cfg, Movement::Remesh);
            let offline = sim::run_full_steps(&off_cfg, true, cfg.window_end)?;
            let items = match offline.snapshots.as_ref() {
                Some(SnapshotStore::Remesh { items }) => items,
                _ => return Err(SimError::GridMismatch),
            };
            let eps = cfg.eps.ok_or(SimError::Mor {
                step: 0,
                source: MorError::InvalidTolerance(f64::NAN),
            })?;
            let online = sim::run_rom_remesh(cfg, items, eps)?;
            Ok(ExecuteOutput {
                trajectory: online.trajectory,
                offline: Some(offline.trajectory),
                basis: None,
            })
        }
    }
}

/// Run the offline (snapshot-collection) phase only, for the `snapshots`
/// and `basis` CLI subcommands.
pub fn run_offline(cfg: &SimConfig) -> Result<RunResult, SimError> {
    let movement = match cfg.mode {
        Mode::RomRemesh => Movement::Remesh,
        _ => Movement::Deform,
    };
    let off_cfg = offline_config(cfg, movement);
    sim::run_full_steps(&off_cfg, true, cfg.window_end.max(cfg.window_start))
}

pub fn write_report_file(report: &ErrorReport, path: &Path) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    report.write_csv(&mut w)
}
