//! Axisymmetric first-order finite elements for the magnetodynamic problem.
//!
//! The unknown is the modified potential u = r * A_theta, which gives
//! b_r = -(1/r) du/dz and b_z = (1/r) du/dr. With this choice the stiffness
//! operator has the constant field in its null space and all element
//! integrals carry a 1/r weight evaluated at quadrature points strictly
//! inside each triangle, so elements touching the axis need no special
//! treatment.

use std::f64::consts::PI;

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::FemError;
use crate::mesh::{Geometry, Mesh, RegionTag};

pub const MU0: f64 = 4.0e-7 * PI;

/// 3-point symmetric Gauss rule on the reference triangle, degree 2 exact.
/// All points are interior (barycentric 2/3, 1/6, 1/6).
const QUAD: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

/// Material coefficients per region. Only the plate conducts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialMap {
    /// Conductivity of the plate region (S/m).
    pub plate_conductivity: f64,
    /// Reluctivity everywhere (1/(H/m)); air and aluminium share 1/mu0.
    pub reluctivity: f64,
}

impl Default for MaterialMap {
    fn default() -> Self {
        MaterialMap {
            plate_conductivity: 3.47e7,
            reluctivity: 1.0 / MU0,
        }
    }
}

impl MaterialMap {
    pub fn sigma(&self, region: RegionTag) -> f64 {
        match region {
            RegionTag::Plate => self.plate_conductivity,
            _ => 0.0,
        }
    }

    pub fn nu(&self, _region: RegionTag) -> f64 {
        self.reluctivity
    }
}

/// Stranded-conductor coil drive: sinusoidal current, uniform source current
/// density sign*turns*i(t)/cross_section in each coil region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub inner_turns: u32,
    pub outer_turns: u32,
    /// Current direction per coil; the benchmark drives them oppositely.
    pub inner_sign: f64,
    pub outer_sign: f64,
    pub inner_area: f64,
    pub outer_area: f64,
}

impl SourceSpec {
    pub fn from_geometry(geometry: &Geometry, amplitude: f64, frequency: f64) -> Self {
        SourceSpec {
            amplitude,
            frequency,
            inner_turns: geometry.coil_inner.turns,
            outer_turns: geometry.coil_outer.turns,
            inner_sign: 1.0,
            outer_sign: -1.0,
            inner_area: geometry.coil_inner.cross_section(),
            outer_area: geometry.coil_outer.cross_section(),
        }
    }

    pub fn current(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * t).sin()
    }

    /// Source current density per unit drive current.
    fn density_per_amp(&self, region: RegionTag) -> f64 {
        match region {
            RegionTag::CoilInner => self.inner_sign * self.inner_turns as f64 / self.inner_area,
            RegionTag::CoilOuter => self.outer_sign * self.outer_turns as f64 / self.outer_area,
            _ => 0.0,
        }
    }
}

/// Nodal solution vector on the free dofs of one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub values: DVector<f64>,
    pub time: f64,
}

/// Sparse operators of the semi-discrete system A dx/dt + B x = C(t),
/// reduced to the free dofs. C(t) is exactly sinusoidal, so it is stored as
/// a per-unit-current pattern.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// sigma-weighted mass matrix, supported on plate dofs.
    pub a: CsrMatrix<f64>,
    /// nu-weighted stiffness matrix.
    pub b: CsrMatrix<f64>,
    /// Source pattern per unit coil current.
    pub c_unit: DVector<f64>,
    pub source: SourceSpec,
    pub dof_count: usize,
}

impl AssembledSystem {
    pub fn source_at(&self, t: f64) -> DVector<f64> {
        &self.c_unit * self.source.current(t)
    }
}

struct TriGeom {
    area: f64,
    /// Gradients of the three shape functions, constant per element.
    grad: [[f64; 2]; 3],
    /// Quadrature radii and shape values.
    quad_r: [f64; 3],
    quad_n: [[f64; 3]; 3],
}

fn tri_geom(mesh: &Mesh, tri: usize) -> Result<TriGeom, FemError> {
    let [a, b, c] = mesh.triangles[tri];
    let p = [mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]];
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    if area2 <= 0.0 {
        return Err(FemError::DegenerateElement {
            element: tri,
            area: 0.5 * area2,
        });
    }
    let grad = [
        [(p[1][1] - p[2][1]) / area2, (p[2][0] - p[1][0]) / area2],
        [(p[2][1] - p[0][1]) / area2, (p[0][0] - p[2][0]) / area2],
        [(p[0][1] - p[1][1]) / area2, (p[1][0] - p[0][0]) / area2],
    ];
    let mut quad_r = [0.0; 3];
    let mut quad_n = [[0.0; 3]; 3];
    for (q, (bary, _)) in QUAD.iter().enumerate() {
        quad_r[q] = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
        quad_n[q] = *bary;
    }
    Ok(TriGeom {
        area: 0.5 * area2,
        grad,
        quad_r,
        quad_n,
    })
}

fn assemble_nodal<F>(mesh: &Mesh, elemental: F) -> Result<CooMatrix<f64>, FemError>
where
    F: Fn(usize, &TriGeom) -> Option<[[f64; 3]; 3]>,
{
    let n = mesh.node_count();
    let mut coo = CooMatrix::new(n, n);
    for tri in 0..mesh.tri_count() {
        let geom = tri_geom(mesh, tri)?;
        if let Some(ke) = elemental(tri, &geom) {
            let nodes = mesh.triangles[tri];
            for i in 0..3 {
                for j in 0..3 {
                    coo.push(nodes[i], nodes[j], ke[i][j]);
                }
            }
        }
    }
    Ok(coo)
}

fn stiffness_elemental(nu: f64, geom: &TriGeom) -> [[f64; 3]; 3] {
    // 2*pi*nu * (grad Ni . grad Nj) * integral of 1/r over the element.
    let mut inv_r = 0.0;
    for (q, (_, w)) in QUAD.iter().enumerate() {
        inv_r += w / geom.quad_r[q];
    }
    let factor = 2.0 * PI * nu * geom.area * inv_r;
    let mut ke = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = factor
                * (geom.grad[i][0] * geom.grad[j][0] + geom.grad[i][1] * geom.grad[j][1]);
        }
    }
    ke
}

fn mass_elemental(sigma: f64, geom: &TriGeom) -> [[f64; 3]; 3] {
    let mut me = [[0.0; 3]; 3];
    for (q, (_, w)) in QUAD.iter().enumerate() {
        let c = 2.0 * PI * sigma * geom.area * w / geom.quad_r[q];
        for i in 0..3 {
            for j in 0..3 {
                me[i][j] += c * geom.quad_n[q][i] * geom.quad_n[q][j];
            }
        }
    }
    me
}

/// Stiffness over all nodes, Dirichlet rows/columns included. Used by tests
/// checking the constant null space before constraint elimination.
pub fn assemble_stiffness_unreduced(
    mesh: &Mesh,
    materials: &MaterialMap,
) -> Result<CsrMatrix<f64>, FemError> {
    let coo = assemble_nodal(mesh, |tri, geom| {
        Some(stiffness_elemental(materials.nu(mesh.region[tri]), geom))
    })?;
    Ok(CsrMatrix::from(&coo))
}

pub fn assemble_mass_unreduced(
    mesh: &Mesh,
    materials: &MaterialMap,
) -> Result<CsrMatrix<f64>, FemError> {
    let coo = assemble_nodal(mesh, |tri, geom| {
        let sigma = materials.sigma(mesh.region[tri]);
        (sigma != 0.0).then(|| mass_elemental(sigma, geom))
    })?;
    Ok(CsrMatrix::from(&coo))
}

fn reduce_to_free(mesh: &Mesh, full: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let n = mesh.dof_count;
    let mut coo = CooMatrix::new(n, n);
    for (row, col, &v) in full.triplet_iter() {
        if let (Some(i), Some(j)) = (mesh.dof_map[row], mesh.dof_map[col]) {
            coo.push(i, j, v);
        }
    }
    CsrMatrix::from(&coo)
}

/// nu-weighted stiffness on the free dofs.
pub fn assemble_stiffness(mesh: &Mesh, materials: &MaterialMap) -> Result<CsrMatrix<f64>, FemError> {
    Ok(reduce_to_free(mesh, &assemble_stiffness_unreduced(mesh, materials)?))
}

/// sigma-weighted mass on the free dofs; nonzero only on plate dofs.
pub fn assemble_mass(mesh: &Mesh, materials: &MaterialMap) -> Result<CsrMatrix<f64>, FemError> {
    Ok(reduce_to_free(mesh, &assemble_mass_unreduced(mesh, materials)?))
}

/// Source vector on the free dofs at time t.
pub fn assemble_source(
    mesh: &Mesh,
    source: &SourceSpec,
    t: f64,
) -> Result<DVector<f64>, FemError> {
    Ok(assemble_source_unit(mesh, source)? * source.current(t))
}

/// Source pattern per unit drive current.
pub fn assemble_source_unit(mesh: &Mesh, source: &SourceSpec) -> Result<DVector<f64>, FemError> {
    let mut c = DVector::zeros(mesh.dof_count);
    for tri in 0..mesh.tri_count() {
        let j_unit = source.density_per_amp(mesh.region[tri]);
        if j_unit == 0.0 {
            continue;
        }
        let geom = tri_geom(mesh, tri)?;
        let nodes = mesh.triangles[tri];
        for (q, (_, w)) in QUAD.iter().enumerate() {
            let f = 2.0 * PI * j_unit * geom.area * w;
            for i in 0..3 {
                if let Some(dof) = mesh.dof_map[nodes[i]] {
                    c[dof] += f * geom.quad_n[q][i];
                }
            }
        }
    }
    Ok(c)
}

pub fn assemble_system(
    mesh: &Mesh,
    materials: &MaterialMap,
    source: &SourceSpec,
) -> Result<AssembledSystem, FemError> {
    Ok(AssembledSystem {
        a: assemble_mass(mesh, materials)?,
        b: assemble_stiffness(mesh, materials)?,
        c_unit: assemble_source_unit(mesh, source)?,
        source: *source,
        dof_count: mesh.dof_count,
    })
}

/// Vertical Lorentz force on the plate from the backward-difference eddy
/// current density:
///   F_z = -2*pi * integral over the plate of sigma * d_t(u) * d_z(u) / r.
pub fn compute_lorentz_force(
    mesh: &Mesh,
    x_k: &FieldSolution,
    x_km1: &FieldSolution,
    dt: f64,
    materials: &MaterialMap,
) -> Result<f64, FemError> {
    if x_k.values.len() != mesh.dof_count {
        return Err(FemError::MeshMismatch {
            a: x_k.values.len(),
            b: mesh.dof_count,
        });
    }
    if x_km1.values.len() != x_k.values.len() {
        return Err(FemError::MeshMismatch {
            a: x_k.values.len(),
            b: x_km1.values.len(),
        });
    }
    let u_k = mesh.expand(&x_k.values);
    let u_km1 = mesh.expand(&x_km1.values);

    let mut force = 0.0;
    for tri in 0..mesh.tri_count() {
        let sigma = materials.sigma(mesh.region[tri]);
        if sigma == 0.0 {
            continue;
        }
        let geom = tri_geom(mesh, tri)?;
        let nodes = mesh.triangles[tri];
        let mut du_dz = 0.0;
        for i in 0..3 {
            du_dz += u_k[nodes[i]] * geom.grad[i][1];
        }
        for (q, (_, w)) in QUAD.iter().enumerate() {
            let mut du_dt = 0.0;
            for i in 0..3 {
                du_dt += geom.quad_n[q][i] * (u_k[nodes[i]] - u_km1[nodes[i]]) / dt;
            }
            force -= 2.0 * PI * sigma * geom.area * w * du_dt * du_dz / geom.quad_r[q];
        }
    }
    Ok(force)
}

/// Piecewise-constant flux density (and eddy current magnitude, when a
/// previous solution is supplied) per element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementField {
    pub b_r: f64,
    pub b_z: f64,
    pub j_mag: f64,
}

pub fn post_fields(
    mesh: &Mesh,
    x: &FieldSolution,
    previous: Option<(&FieldSolution, f64)>,
    materials: &MaterialMap,
) -> Result<Vec<ElementField>, FemError> {
    let u = mesh.expand(&x.values);
    let u_prev = previous.map(|(p, _)| mesh.expand(&p.values));
    let mut fields = Vec::with_capacity(mesh.tri_count());
    for tri in 0..mesh.tri_count() {
        let geom = tri_geom(mesh, tri)?;
        let nodes = mesh.triangles[tri];
        let c = mesh.centroid(tri);
        let mut du_dr = 0.0;
        let mut du_dz = 0.0;
        for i in 0..3 {
            du_dr += u[nodes[i]] * geom.grad[i][0];
            du_dz += u[nodes[i]] * geom.grad[i][1];
        }
        let sigma = materials.sigma(mesh.region[tri]);
        let j_mag = match (&u_prev, previous) {
            (Some(up), Some((_, dt))) if sigma > 0.0 => {
                // |j| = sigma * |d_t A_theta| at the centroid.
                let mut du_dt = 0.0;
                for i in 0..3 {
                    du_dt += (u[nodes[i]] - up[nodes[i]]) / (3.0 * dt);
                }
                sigma * (du_dt / c[0]).abs()
            }
            _ => 0.0,
        };
        fields.push(ElementField {
            b_r: -du_dz / c[0],
            b_z: du_dr / c[0],
            j_mag,
        });
    }
    Ok(fields)
}

/// Largest asymmetry |M - M^T| relative to the largest entry magnitude.
pub fn relative_asymmetry(m: &CsrMatrix<f64>) -> f64 {
    let mt = m.transpose();
    let mut max_entry = 0.0_f64;
    for (_, _, v) in m.triplet_iter() {
        max_entry = max_entry.max(v.abs());
    }
    if max_entry == 0.0 {
        return 0.0;
    }
    let diff = m - &mt;
    let mut max_diff = 0.0_f64;
    for (_, _, v) in diff.triplet_iter() {
        max_diff = max_diff.max(v.abs());
    }
    max_diff / max_entry
}

/// True when every structurally nonzero entry of `a` couples plate nodes only.
pub fn supported_on_plate(mesh: &Mesh, a_unreduced: &CsrMatrix<f64>) -> bool {
    let mut plate_node = vec![false; mesh.node_count()];
    for (tri, region) in mesh.triangles.iter().zip(&mesh.region) {
        if *region == RegionTag::Plate {
            for &n in tri {
                plate_node[n] = true;
            }
        }
    }
    a_unreduced
        .triplet_iter()
        .all(|(i, j, &v)| v == 0.0 || (plate_node[i] && plate_node[j]))
}
