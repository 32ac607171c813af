//! POD reduced-order layer: snapshot collection, SVD basis with relative
//! singular-value truncation, operator reduction, reduced time stepping and
//! the inter-mesh projection needed when the dof layout changes between
//! steps.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::MorError;
use crate::fem::FieldSolution;
use crate::mesh::Mesh;

/// Dense matrix of solution snapshots, one column per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub data: DMatrix<f64>,
    pub times: Vec<f64>,
}

impl SnapshotMatrix {
    pub fn columns(&self) -> usize {
        self.data.ncols()
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }
}

/// Orthonormal POD basis: the first `rank` left singular vectors of the
/// snapshot matrix, kept while sigma(i)/sigma(1) > epsilon (strictly).
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub psi: DMatrix<f64>,
    /// All singular values of the snapshot matrix, descending.
    pub singular_values: Vec<f64>,
    pub epsilon: f64,
    pub rank: usize,
}

/// Dense reduced operators of the backward-Euler system.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOperators {
    pub a_r: DMatrix<f64>,
    pub b_r: DMatrix<f64>,
    /// Reduced source pattern per unit coil current.
    pub c_r_unit: DVector<f64>,
}

/// Stack raw solution vectors (no centering, no weighting) in time order.
/// `window` selects steps by index into `solutions`; `stride` keeps every
/// stride-th column.
pub fn build_snapshots(
    solutions: &[FieldSolution],
    window: std::ops::Range<usize>,
    stride: usize,
) -> Result<SnapshotMatrix, MorError> {
    let stride = stride.max(1);
    let indices: Vec<usize> = window
        .filter(|i| *i < solutions.len())
        .step_by(stride)
        .collect();
    if indices.is_empty() {
        return Err(MorError::EmptyWindow);
    }
    let n = solutions[indices[0]].values.len();
    for &i in &indices {
        if solutions[i].values.len() != n {
            return Err(MorError::InconsistentLength {
                expected: n,
                got: solutions[i].values.len(),
            });
        }
    }
    let mut data = DMatrix::zeros(n, indices.len());
    let mut times = Vec::with_capacity(indices.len());
    for (col, &i) in indices.iter().enumerate() {
        data.set_column(col, &solutions[i].values);
        times.push(solutions[i].time);
    }
    Ok(SnapshotMatrix { data, times })
}

/// POD basis by thin SVD of the snapshot matrix.
///
/// Columns are sign-fixed so the largest-magnitude entry of each kept mode
/// is positive; the SVD leaves that sign free and tests want reproducible
/// bases.
pub fn compute_basis(snapshots: &SnapshotMatrix, epsilon: f64) -> Result<ReducedBasis, MorError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MorError::InvalidTolerance(epsilon));
    }
    let (u, sigma) = sorted_svd(snapshots)?;
    let rank = sigma
        .iter()
        .filter(|&&s| s / sigma[0] > epsilon)
        .count()
        .max(1);
    Ok(assemble_basis(u, sigma, epsilon, rank))
}

/// POD basis truncated at a fixed size instead of a tolerance.
pub fn compute_basis_with_rank(
    snapshots: &SnapshotMatrix,
    rank: usize,
) -> Result<ReducedBasis, MorError> {
    if rank == 0 {
        return Err(MorError::DimensionMismatch("rank must be >= 1".into()));
    }
    let (u, sigma) = sorted_svd(snapshots)?;
    let rank = rank.min(sigma.len()).min(u.ncols());
    Ok(assemble_basis(u, sigma, 0.0, rank))
}

fn sorted_svd(snapshots: &SnapshotMatrix) -> Result<(DMatrix<f64>, Vec<f64>), MorError> {
    if snapshots.data.norm() == 0.0 {
        return Err(MorError::ZeroSnapshot);
    }
    let svd = snapshots.data.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
    });
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut sorted_u = DMatrix::zeros(u.nrows(), order.len());
    for (col, &src) in order.iter().enumerate() {
        sorted_u.set_column(col, &u.column(src));
    }
    Ok((sorted_u, sigma))
}

fn assemble_basis(u: DMatrix<f64>, sigma: Vec<f64>, epsilon: f64, rank: usize) -> ReducedBasis {
    let mut psi = DMatrix::zeros(u.nrows(), rank);
    for col in 0..rank {
        psi.set_column(col, &u.column(col));
        let mut max_abs = 0.0;
        let mut max_val = 0.0;
        for v in psi.column(col).iter() {
            if v.abs() > max_abs {
                max_abs = v.abs();
                max_val = *v;
            }
        }
        if max_val < 0.0 {
            psi.column_mut(col).neg_mut();
        }
    }
    ReducedBasis {
        psi,
        singular_values: sigma,
        epsilon,
        rank,
    }
}

fn spmm_dense(m: &CsrMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), x.ncols());
    for (row, lane) in m.row_iter().enumerate() {
        for (&col, &v) in lane.col_indices().iter().zip(lane.values()) {
            for c in 0..x.ncols() {
                out[(row, c)] += v * x[(col, c)];
            }
        }
    }
    out
}

/// Galerkin reduction of the assembled operators onto the span of psi.
pub fn reduce_operators(
    a: &CsrMatrix<f64>,
    b: &CsrMatrix<f64>,
    c_unit: &DVector<f64>,
    psi: &DMatrix<f64>,
) -> Result<ReducedOperators, MorError> {
    let n = psi.nrows();
    if a.nrows() != n || a.ncols() != n || b.nrows() != n || b.ncols() != n || c_unit.len() != n {
        return Err(MorError::DimensionMismatch(format!(
            "operators {}x{} / source {} vs basis rows {}",
            a.nrows(),
            a.ncols(),
            c_unit.len(),
            n
        )));
    }
    let psi_t = psi.transpose();
    Ok(ReducedOperators {
        a_r: &psi_t * spmm_dense(a, psi),
        b_r: &psi_t * spmm_dense(b, psi),
        c_r_unit: &psi_t * c_unit,
    })
}

/// One backward-Euler step of the reduced system:
/// (A_r/dt + B_r) x_k = C_r * current + (A_r/dt) x_{k-1}.
pub fn step_reduced(
    ops: &ReducedOperators,
    x_prev: &DVector<f64>,
    dt: f64,
    current: f64,
) -> Result<DVector<f64>, MorError> {
    let r = ops.a_r.nrows();
    if x_prev.len() != r {
        return Err(MorError::DimensionMismatch(format!(
            "state {} vs reduced size {r}",
            x_prev.len()
        )));
    }
    let a_dt = &ops.a_r / dt;
    let lhs = &a_dt + &ops.b_r;
    let rhs = &ops.c_r_unit * current + &a_dt * x_prev;
    lhs.lu().solve(&rhs).ok_or(MorError::SingularReducedSystem)
}

/// Lift a reduced state back to the full space.
pub fn lift(x_r: &DVector<f64>, psi: &DMatrix<f64>) -> Result<DVector<f64>, MorError> {
    if x_r.len() != psi.ncols() {
        return Err(MorError::DimensionMismatch(format!(
            "reduced state {} vs basis columns {}",
            x_r.len(),
            psi.ncols()
        )));
    }
    Ok(psi * x_r)
}

/// Uniform-grid triangle locator over a mesh.
pub struct TriLocator<'a> {
    mesh: &'a Mesh,
    bins: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
    min: [f64; 2],
    inv_cell: [f64; 2],
}

impl<'a> TriLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let n = ((mesh.tri_count() as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (n, n);
        let span = [
            (max[0] - min[0]).max(f64::MIN_POSITIVE),
            (max[1] - min[1]).max(f64::MIN_POSITIVE),
        ];
        let inv_cell = [nx as f64 / span[0], ny as f64 / span[1]];
        let mut bins = vec![Vec::new(); nx * ny];
        for tri in 0..mesh.tri_count() {
            let mut tmin = [f64::INFINITY; 2];
            let mut tmax = [f64::NEG_INFINITY; 2];
            for &node in &mesh.triangles[tri] {
                for d in 0..2 {
                    tmin[d] = tmin[d].min(mesh.nodes[node][d]);
                    tmax[d] = tmax[d].max(mesh.nodes[node][d]);
                }
            }
            let i0 = cell_index(tmin[0], min[0], inv_cell[0], nx);
            let i1 = cell_index(tmax[0], min[0], inv_cell[0], nx);
            let j0 = cell_index(tmin[1], min[1], inv_cell[1], ny);
            let j1 = cell_index(tmax[1], min[1], inv_cell[1], ny);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    bins[i * ny + j].push(tri);
                }
            }
        }
        TriLocator {
            mesh,
            bins,
            nx,
            ny,
            min,
            inv_cell,
        }
    }

    fn candidates(&self, p: [f64; 2]) -> &[usize] {
        let i = cell_index(p[0], self.min[0], self.inv_cell[0], self.nx);
        let j = cell_index(p[1], self.min[1], self.inv_cell[1], self.ny);
        &self.bins[i * self.ny + j]
    }

    /// Containing triangle and barycentric coordinates of `p`.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        let consider = |tri: usize, best: &mut Option<(usize, [f64; 3], f64)>| {
            if let Some(bary) = barycentric(self.mesh, tri, p) {
                let worst = bary[0].min(bary[1]).min(bary[2]);
                if best.as_ref().map_or(true, |(_, _, b)| worst > *b) {
                    *best = Some((tri, bary, worst));
                }
            }
        };
        for &tri in self.candidates(p) {
            consider(tri, &mut best);
        }
        if best.as_ref().map_or(true, |(_, _, w)| *w < -1e-9) {
            // Roundoff can push a point just over a bin edge; fall back to a
            // full scan before giving up.
            for tri in 0..self.mesh.tri_count() {
                consider(tri, &mut best);
            }
        }
        match best {
            Some((tri, bary, worst)) if worst >= -1e-6 => Some((tri, bary)),
            _ => None,
        }
    }
}

fn cell_index(x: f64, min: f64, inv_cell: f64, n: usize) -> usize {
    (((x - min) * inv_cell).floor() as isize).clamp(0, n as isize - 1) as usize
}

fn barycentric(mesh: &Mesh, tri: usize, p: [f64; 2]) -> Option<[f64; 3]> {
    let [a, b, c] = mesh.triangles[tri];
    let pa = mesh.nodes[a];
    let pb = mesh.nodes[b];
    let pc = mesh.nodes[c];
    let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    if det == 0.0 {
        return None;
    }
    let l1 = ((pb[0] - p[0]) * (pc[1] - p[1]) - (pc[0] - p[0]) * (pb[1] - p[1])) / det;
    let l2 = ((pc[0] - p[0]) * (pa[1] - p[1]) - (pa[0] - p[0]) * (pc[1] - p[1])) / det;
    Some([l1, l2, 1.0 - l1 - l2])
}

/// Transfer a nodal field from one mesh to another by evaluating the source
/// finite-element field at the target node locations (linear interpolation
/// inside the containing source triangle). Exact for fields linear in (r, z).
pub fn project_between_meshes(
    values: &[f64],
    mesh_src: &Mesh,
    mesh_tgt: &Mesh,
) -> Result<Vec<f64>, MorError> {
    let locator = TriLocator::new(mesh_src);
    project_with_locator(values, &locator, mesh_tgt)
}

/// Same as [`project_between_meshes`] with a prebuilt source locator, for
/// callers projecting many fields between the same mesh pair.
pub fn project_with_locator(
    values: &[f64],
    locator: &TriLocator<'_>,
    mesh_tgt: &Mesh,
) -> Result<Vec<f64>, MorError> {
    if values.len() != locator.mesh.node_count() {
        return Err(MorError::DimensionMismatch(format!(
            "field length {} vs source nodes {}",
            values.len(),
            locator.mesh.node_count()
        )));
    }
    let mut out = vec![0.0; mesh_tgt.node_count()];
    for (node, p) in mesh_tgt.nodes.iter().enumerate() {
        let (tri, bary) = locator.locate(*p).ok_or(MorError::PointNotLocated {
            node,
            r: p[0],
            z: p[1],
        })?;
        let [a, b, c] = locator.mesh.triangles[tri];
        out[node] = bary[0] * values[a] + bary[1] * values[b] + bary[2] * values[c];
    }
    Ok(out)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"PODSNAP1";

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".times");
    PathBuf::from(os)
}

/// Persist a snapshot matrix: binary column-major f64 (little endian) with a
/// `PODSNAP1` magic and u64 dimensions, plus a text sidecar of time stamps.
pub fn write_snapshots(path: &Path, snapshots: &SnapshotMatrix) -> Result<(), MorError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(snapshots.rows() as u64).to_le_bytes())?;
    w.write_all(&(snapshots.columns() as u64).to_le_bytes())?;
    for col in 0..snapshots.columns() {
        for row in 0..snapshots.rows() {
            w.write_all(&snapshots.data[(row, col)].to_le_bytes())?;
        }
    }
    w.flush()?;
    let mut t = BufWriter::new(std::fs::File::create(sidecar_path(path))?);
    for time in &snapshots.times {
        writeln!(t, "{:.17e}", time)?;
    }
    t.flush()?;
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotMatrix, MorError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(MorError::Format("bad snapshot magic".into()));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let n = u64::from_le_bytes(buf8) as usize;
    r.read_exact(&mut buf8)?;
    let m = u64::from_le_bytes(buf8) as usize;
    let mut data = DMatrix::zeros(n, m);
    for col in 0..m {
        for row in 0..n {
            r.read_exact(&mut buf8)?;
            data[(row, col)] = f64::from_le_bytes(buf8);
        }
    }
    let times_file = BufReader::new(std::fs::File::open(sidecar_path(path))?);
    let mut times = Vec::with_capacity(m);
    for line in times_file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        times.push(
            line.trim()
                .parse()
                .map_err(|_| MorError::Format(format!("bad time stamp `{line}`")))?,
        );
    }
    if times.len() != m {
        return Err(MorError::Format(format!(
            "{} time stamps for {} columns",
            times.len(),
            m
        )));
    }
    Ok(SnapshotMatrix { data, times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{self, DeformBox, Geometry};
    use nalgebra_sparse::CooMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solutions(cols: &[DVector<f64>]) -> Vec<FieldSolution> {
        cols.iter()
            .enumerate()
            .map(|(k, v)| FieldSolution {
                values: v.clone(),
                time: k as f64 * 2.0e-4,
            })
            .collect()
    }

    #[test]
    fn build_snapshots_single_step() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = build_snapshots(&solutions(&[x.clone()]), 0..1, 1).unwrap();
        assert_eq!(s.columns(), 1);
        assert_eq!(s.data.column(0), x.column(0));
    }

    #[test]
    fn build_snapshots_errors() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            build_snapshots(&solutions(&[a.clone(), b]), 0..2, 1),
            Err(MorError::InconsistentLength { .. })
        ));
        assert!(matches!(
            build_snapshots(&solutions(&[a]), 1..1, 1),
            Err(MorError::EmptyWindow)
        ));
    }

    #[test]
    fn basis_of_single_column() {
        let x = DVector::from_vec(vec![3.0, 0.0, -4.0]);
        let s = build_snapshots(&solutions(&[x.clone()]), 0..1, 1).unwrap();
        let basis = compute_basis(&s, 1e-8).unwrap();
        assert_eq!(basis.rank, 1);
        let expected = &x / x.norm();
        // Sign convention: largest-magnitude entry positive.
        for i in 0..3 {
            assert!((basis.psi[(i, 0)] + expected[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_deficient_pair_gives_rank_one() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 4.0]);
        let s = build_snapshots(&solutions(&[x.clone(), 2.0 * &x]), 0..2, 1).unwrap();
        let basis = compute_basis(&s, 1e-5).unwrap();
        assert_eq!(basis.rank, 1);
    }

    #[test]
    fn zero_snapshot_and_bad_tolerance_rejected() {
        let s = SnapshotMatrix {
            data: DMatrix::zeros(4, 2),
            times: vec![0.0, 1.0],
        };
        assert!(matches!(compute_basis(&s, 1e-5), Err(MorError::ZeroSnapshot)));
        let s2 = SnapshotMatrix {
            data: DMatrix::identity(3, 3),
            times: vec![0.0, 1.0, 2.0],
        };
        assert!(matches!(
            compute_basis(&s2, 1.5),
            Err(MorError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn reconstruction_identity_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data = DMatrix::from_fn(200, 20, |_, _| rng.gen_range(-1.0..1.0));
        let s = SnapshotMatrix {
            data,
            times: (0..20).map(|k| k as f64).collect(),
        };
        let basis = compute_basis(&s, 1e-1).unwrap();
        let projected = &basis.psi * (basis.psi.transpose() * &s.data);
        let residual = (&s.data - projected).norm();
        let tail: f64 = basis.singular_values[basis.rank..]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(
            (residual - tail).abs() <= 1e-9 * s.data.norm(),
            "residual {residual} vs tail {tail}"
        );
        let gram = basis.psi.transpose() * &basis.psi;
        let eye = DMatrix::identity(basis.rank, basis.rank);
        assert!((gram - eye).amax() <= 1e-10);
    }

    #[test]
    fn truncation_monotone_in_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = DMatrix::from_fn(60, 12, |_, _| rng.gen_range(-1.0..1.0));
        let s = SnapshotMatrix {
            data,
            times: (0..12).map(|k| k as f64).collect(),
        };
        let mut prev_rank = usize::MAX;
        for eps in [1e-12, 1e-6, 1e-3, 1e-1, 0.5] {
            let basis = compute_basis(&s, eps).unwrap();
            assert!(basis.rank <= prev_rank, "rank not monotone at eps {eps}");
            prev_rank = basis.rank;
        }
    }

    fn sparse_from_dense(d: &DMatrix<f64>) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(d.nrows(), d.ncols());
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if d[(i, j)] != 0.0 {
                    coo.push(i, j, d[(i, j)]);
                }
            }
        }
        CsrMatrix::from(&coo)
    }

    #[test]
    fn reduce_with_identity_basis_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let a = &a * a.transpose();
        let c = DVector::from_fn(5, |i, _| i as f64);
        let ops = reduce_operators(
            &sparse_from_dense(&a),
            &sparse_from_dense(&a),
            &c,
            &DMatrix::identity(5, 5),
        )
        .unwrap();
        assert!((ops.a_r.clone() - &a).amax() < 1e-14);
        assert!((ops.c_r_unit.clone() - &c).amax() < 1e-14);

        let e1 = DMatrix::from_fn(5, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let ops1 = reduce_operators(&sparse_from_dense(&a), &sparse_from_dense(&a), &c, &e1).unwrap();
        assert!((ops1.a_r[(0, 0)] - a[(0, 0)]).abs() < 1e-14);

        // Congruence preserves symmetry.
        let psi = DMatrix::from_fn(5, 2, |i, j| ((i + 2 * j + 1) as f64).sin());
        let ops2 = reduce_operators(&sparse_from_dense(&a), &sparse_from_dense(&a), &c, &psi).unwrap();
        assert!((ops2.a_r.clone() - ops2.a_r.transpose()).amax() <= 1e-12 * ops2.a_r.amax());
    }

    #[test]
    fn step_reduced_matches_scalar_recurrence() {
        let (a, b, c, dt) = (1.0, 1.0, 1.0, 1.0);
        let ops = ReducedOperators {
            a_r: DMatrix::from_element(1, 1, a),
            b_r: DMatrix::from_element(1, 1, b),
            c_r_unit: DVector::from_element(1, c),
        };
        let mut x = DVector::from_element(1, 0.0);
        for _ in 0..20 {
            let expected = (c + (a / dt) * x[0]) / (a / dt + b);
            x = step_reduced(&ops, &x, dt, 1.0).unwrap();
            assert!((x[0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn step_reduced_dissipative_without_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(3, 3);
        let k = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let b = &k * k.transpose();
        let ops = ReducedOperators {
            a_r: a.clone(),
            b_r: b,
            c_r_unit: DVector::zeros(3),
        };
        let mut x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a_norm = |v: &DVector<f64>| (v.transpose() * &a * v)[(0, 0)];
        let mut prev = a_norm(&x);
        for _ in 0..50 {
            x = step_reduced(&ops, &x, 0.1, 0.0).unwrap();
            let cur = a_norm(&x);
            assert!(cur <= prev * (1.0 + 1e-12));
            prev = cur;
        }
    }

    #[test]
    fn lift_and_projection_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DMatrix::from_fn(30, 4, |_, _| rng.gen_range(-1.0..1.0));
        let qr = raw.qr();
        let psi = qr.q();
        assert_eq!(lift(&DVector::zeros(4), &psi).unwrap().amax(), 0.0);

        let x_r = DVector::from_vec(vec![1.0, -0.5, 2.0, 0.25]);
        let x = lift(&x_r, &psi).unwrap();
        let back = psi.transpose() * &x;
        assert!((back - &x_r).amax() < 1e-12);

        // Distance to span(psi) matches an independent QR-based computation.
        let y = DVector::from_fn(30, |i, _| ((i * i) as f64).sin());
        let resid = (&y - &psi * (psi.transpose() * &y)).norm();
        let mut wide = DMatrix::zeros(30, 5);
        wide.view_mut((0, 0), (30, 4)).copy_from(&psi);
        wide.set_column(4, &y);
        let r_mat = wide.qr().r();
        let oracle = r_mat[(4, 4)].abs();
        assert!((resid - oracle).abs() < 1e-10, "{resid} vs {oracle}");

        assert!(matches!(
            lift(&DVector::zeros(3), &psi),
            Err(MorError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn projection_identity_and_linear_exactness() {
        let geom = Geometry::default();
        let dbox = DeformBox::default();
        let m0 = mesh::generate_mesh(&geom, &dbox, 10.0e-3).unwrap();

        let field: Vec<f64> = m0.nodes.iter().map(|p| 2.0 * p[0] + 3.0 * p[1]).collect();
        let same = project_between_meshes(&field, &m0, &m0).unwrap();
        for (a, b) in field.iter().zip(&same) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }

        let constant: Vec<f64> = vec![4.2; m0.node_count()];
        let deformed = mesh::deform_subdomain(&m0, &dbox, 20.0e-3).unwrap();
        let moved = project_between_meshes(&constant, &m0, &deformed).unwrap();
        for v in &moved {
            assert!((v - 4.2).abs() < 1e-12);
        }

        let remeshed = mesh::remesh(&geom, &dbox, 7.3e-3, 9.0e-3).unwrap();
        let projected = project_between_meshes(&field, &m0, &remeshed).unwrap();
        for (node, v) in projected.iter().enumerate() {
            let p = remeshed.nodes[node];
            let expected = 2.0 * p[0] + 3.0 * p[1];
            assert!(
                (v - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
                "node {node}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn snapshot_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snaps.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = SnapshotMatrix {
            data: DMatrix::from_fn(17, 5, |_, _| rng.gen_range(-1.0..1.0)),
            times: (0..5).map(|k| k as f64 * 2.0e-4).collect(),
        };
        write_snapshots(&path, &s).unwrap();
        let back = read_snapshots(&path).unwrap();
        assert_eq!(s.data, back.data);
        for (a, b) in s.times.iter().zip(&back.times) {
            assert_eq!(a, b);
        }
    }
}
