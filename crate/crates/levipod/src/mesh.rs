//! Triangular axisymmetric meshes of the levitation device geometry: a
//! conducting plate above two concentric coils in the (r, z) half-plane.
//!
//! Movement of the plate is supported two ways: full regeneration of the
//! mesh at a new plate position ([`remesh`]), or vertical stretching of the
//! nodes inside a fixed sub-domain box ([`deform_subdomain`]). Deformation
//! preserves node count and connectivity; only z-coordinates change.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::MeshError;

/// Signed-area floor below which a triangle counts as degenerate (m^2).
pub const DEFAULT_AREA_FLOOR: f64 = 1e-12;

const GEOM_TOL: f64 = 1e-12;

/// Rectangular coil cross-section in the (r, z) plane plus its turn count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilSpec {
    pub r_inner: f64,
    pub r_outer: f64,
    pub z_bottom: f64,
    pub z_top: f64,
    pub turns: u32,
}

impl CoilSpec {
    pub fn cross_section(&self) -> f64 {
        (self.r_outer - self.r_inner) * (self.z_top - self.z_bottom)
    }
}

/// Geometry of the levitation device. Lengths in meters.
///
/// The coil and plate dimensions are not restated in every benchmark
/// description; the defaults here follow the TEAM workshop problem 28
/// device (aluminium plate of 65 mm radius above a 960-turn inner and a
/// 576-turn outer coil) and are plain config inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub plate_radius: f64,
    pub plate_thickness: f64,
    /// Plate clearance above the coil top at t = 0.
    pub plate_initial_clearance: f64,
    /// Clearance at which the undeformed reference mesh is built.
    pub mesh_reference_clearance: f64,
    pub coil_inner: CoilSpec,
    pub coil_outer: CoilSpec,
    /// Radius of the truncated far-field boundary where u = 0 is imposed.
    pub domain_truncation_radius: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            plate_radius: 0.065,
            // 3 mm thickness reproduces the 0.107 kg plate mass at the
            // density of aluminium.
            plate_thickness: 3.0e-3,
            plate_initial_clearance: 3.8e-3,
            mesh_reference_clearance: 12.8e-3,
            coil_inner: CoilSpec {
                r_inner: 20.0e-3,
                r_outer: 40.0e-3,
                z_bottom: -20.0e-3,
                z_top: 0.0,
                turns: 960,
            },
            coil_outer: CoilSpec {
                r_inner: 60.0e-3,
                r_outer: 80.0e-3,
                z_bottom: -20.0e-3,
                z_top: 0.0,
                turns: 576,
            },
            domain_truncation_radius: 0.4,
        }
    }
}

impl Geometry {
    pub fn coil_top(&self) -> f64 {
        self.coil_inner.z_top.max(self.coil_outer.z_top)
    }

    pub fn coil_bottom(&self) -> f64 {
        self.coil_inner.z_bottom.min(self.coil_outer.z_bottom)
    }

    pub fn domain_z_bottom(&self) -> f64 {
        -self.domain_truncation_radius
    }

    pub fn domain_z_top(&self) -> f64 {
        self.domain_truncation_radius
    }

    pub fn validate(&self, deform_box: &DeformBox) -> Result<(), MeshError> {
        let lengths = [
            ("plate_radius", self.plate_radius),
            ("plate_thickness", self.plate_thickness),
            ("plate_initial_clearance", self.plate_initial_clearance),
            ("mesh_reference_clearance", self.mesh_reference_clearance),
            ("domain_truncation_radius", self.domain_truncation_radius),
        ];
        for (name, v) in lengths {
            if v <= 0.0 {
                return Err(MeshError::InvalidGeometry(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        for (name, c) in [("coil_inner", &self.coil_inner), ("coil_outer", &self.coil_outer)] {
            if c.r_inner < 0.0 || c.r_outer <= c.r_inner || c.z_top <= c.z_bottom {
                return Err(MeshError::InvalidGeometry(format!(
                    "{name} extents are not a proper rectangle"
                )));
            }
            if c.turns == 0 {
                return Err(MeshError::InvalidGeometry(format!("{name} has zero turns")));
            }
        }
        if self.coil_outer.r_inner < self.coil_inner.r_outer {
            return Err(MeshError::InvalidGeometry(
                "inner and outer coils overlap radially".into(),
            ));
        }
        // Coils must stay below the plate at every admissible clearance.
        if deform_box.y_min <= self.coil_top() {
            return Err(MeshError::InvalidGeometry(
                "deform box reaches into the coils".into(),
            ));
        }
        deform_box.validate(self)?;
        if self.plate_initial_clearance < deform_box.y_min
            || self.plate_initial_clearance > deform_box.y_max
        {
            return Err(MeshError::InvalidGeometry(
                "plate_initial_clearance outside deform box".into(),
            ));
        }
        let max_feature_r = self.plate_radius.max(self.coil_outer.r_outer).max(deform_box.x_extent);
        if self.domain_truncation_radius <= max_feature_r {
            return Err(MeshError::InvalidGeometry(
                "domain truncation radius inside the device".into(),
            ));
        }
        Ok(())
    }
}

/// Vertical sub-domain box around the moving plate. z-range [y_min, y_max]
/// measured from the coil top, radial extent [0, x_extent].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformBox {
    pub y_min: f64,
    pub y_max: f64,
    pub x_extent: f64,
    /// Plate position at which the undeformed mesh was built.
    pub reference_position: f64,
    /// Safety margin kept between the plate faces and the box boundary.
    pub margin: f64,
}

impl Default for DeformBox {
    fn default() -> Self {
        DeformBox {
            y_min: 1.3e-3,
            y_max: 29.3e-3,
            x_extent: 0.195,
            reference_position: 12.8e-3,
            margin: 0.5e-3,
        }
    }
}

impl DeformBox {
    pub fn validate(&self, geometry: &Geometry) -> Result<(), MeshError> {
        if !(self.y_min < self.reference_position && self.reference_position < self.y_max) {
            return Err(MeshError::InvalidGeometry(
                "deform box requires y_min < reference_position < y_max".into(),
            ));
        }
        if self.x_extent < geometry.plate_radius {
            return Err(MeshError::InvalidGeometry(
                "deform box x_extent must cover the plate radius".into(),
            ));
        }
        if self.margin < 0.0 {
            return Err(MeshError::InvalidGeometry("negative deform margin".into()));
        }
        Ok(())
    }

    /// Admissible plate positions: the whole plate stays inside the box with
    /// the safety margin on both faces.
    pub fn admissible(&self, y: f64, plate_thickness: f64) -> bool {
        y >= self.y_min + self.margin && y + plate_thickness <= self.y_max - self.margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTag {
    Plate,
    CoilInner,
    CoilOuter,
    Air,
    BoxAir,
}

impl RegionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionTag::Plate => "plate",
            RegionTag::CoilInner => "coil_inner",
            RegionTag::CoilOuter => "coil_outer",
            RegionTag::Air => "air",
            RegionTag::BoxAir => "box_air",
        }
    }

    pub fn parse(s: &str) -> Result<Self, MeshError> {
        Ok(match s {
            "plate" => RegionTag::Plate,
            "coil_inner" => RegionTag::CoilInner,
            "coil_outer" => RegionTag::CoilOuter,
            "air" => RegionTag::Air,
            "box_air" => RegionTag::BoxAir,
            other => return Err(MeshError::Format(format!("unknown region tag `{other}`"))),
        })
    }
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    OuterDirichlet,
    Axis,
    BoxBoundary,
    Free,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::OuterDirichlet => "outer_dirichlet",
            BoundaryTag::Axis => "axis",
            BoundaryTag::BoxBoundary => "box_boundary",
            BoundaryTag::Free => "free",
        }
    }

    pub fn parse(s: &str) -> Result<Self, MeshError> {
        Ok(match s {
            "outer_dirichlet" => BoundaryTag::OuterDirichlet,
            "axis" => BoundaryTag::Axis,
            "box_boundary" => BoundaryTag::BoxBoundary,
            "free" => BoundaryTag::Free,
            other => return Err(MeshError::Format(format!("unknown boundary tag `{other}`"))),
        })
    }
}

/// Conforming triangulation with region and boundary tags.
///
/// `ref_z` keeps the z-coordinates of the undeformed configuration so that
/// sub-domain deformation is always evaluated from the reference mesh; this
/// makes deform-then-restore bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub ref_z: Vec<f64>,
    pub triangles: Vec<[usize; 3]>,
    pub region: Vec<RegionTag>,
    pub boundary: Vec<BoundaryTag>,
    /// node index -> unknown index, or None for Dirichlet-fixed nodes.
    pub dof_map: Vec<Option<usize>>,
    pub dof_count: usize,
    /// Current plate bottom position (clearance above the coil top).
    pub plate_position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQualityReport {
    pub min_area: f64,
    pub min_angle_deg: f64,
    pub worst_aspect_ratio: f64,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tri_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri];
        let pa = self.nodes[a];
        let pb = self.nodes[b];
        let pc = self.nodes[c];
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn centroid(&self, tri: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[tri];
        [
            (self.nodes[a][0] + self.nodes[b][0] + self.nodes[c][0]) / 3.0,
            (self.nodes[a][1] + self.nodes[b][1] + self.nodes[c][1]) / 3.0,
        ]
    }

    /// Expand a free-dof vector to one value per node (fixed nodes get 0).
    pub fn expand(&self, free: &DVector<f64>) -> Vec<f64> {
        assert_eq!(free.len(), self.dof_count, "dof vector length mismatch");
        let mut nodal = vec![0.0; self.node_count()];
        for (node, dof) in self.dof_map.iter().enumerate() {
            if let Some(i) = dof {
                nodal[node] = free[*i];
            }
        }
        nodal
    }

    /// Restrict a nodal vector to the free dofs.
    pub fn restrict(&self, nodal: &[f64]) -> DVector<f64> {
        assert_eq!(nodal.len(), self.node_count(), "nodal vector length mismatch");
        let mut free = DVector::zeros(self.dof_count);
        for (node, dof) in self.dof_map.iter().enumerate() {
            if let Some(i) = dof {
                free[*i] = nodal[node];
            }
        }
        free
    }

    fn rebuild_dof_map(&mut self) {
        let mut next = 0;
        self.dof_map = self
            .boundary
            .iter()
            .map(|b| match b {
                BoundaryTag::OuterDirichlet | BoundaryTag::Axis => None,
                _ => {
                    let i = next;
                    next += 1;
                    Some(i)
                }
            })
            .collect();
        self.dof_count = next;
    }

    pub fn write_to(&self, w: &mut dyn Write) -> Result<(), MeshError> {
        writeln!(w, "nodes {}", self.node_count())?;
        for (p, b) in self.nodes.iter().zip(&self.boundary) {
            writeln!(w, "{:.17e} {:.17e} {}", p[0], p[1], b.as_str())?;
        }
        writeln!(w, "triangles {}", self.tri_count())?;
        for (t, r) in self.triangles.iter().zip(&self.region) {
            writeln!(w, "{} {} {} {}", t[0], t[1], t[2], r.as_str())?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), MeshError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)
    }

    pub fn read_from(r: &mut dyn BufRead) -> Result<Self, MeshError> {
        let mut lines = r.lines();
        let mut next_line = || -> Result<String, MeshError> {
            lines
                .next()
                .ok_or_else(|| MeshError::Format("unexpected end of file".into()))?
                .map_err(MeshError::Io)
        };

        let header = next_line()?;
        let n_nodes: usize = parse_header(&header, "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut boundary = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = next_line()?;
            let mut it = line.split_whitespace();
            let r: f64 = parse_field(it.next(), "node r")?;
            let z: f64 = parse_field(it.next(), "node z")?;
            let tag = BoundaryTag::parse(
                it.next()
                    .ok_or_else(|| MeshError::Format("missing boundary tag".into()))?,
            )?;
            nodes.push([r, z]);
            boundary.push(tag);
        }

        let header = next_line()?;
        let n_tris: usize = parse_header(&header, "triangles")?;
        let mut triangles = Vec::with_capacity(n_tris);
        let mut region = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let line = next_line()?;
            let mut it = line.split_whitespace();
            let i: usize = parse_field(it.next(), "triangle index")?;
            let j: usize = parse_field(it.next(), "triangle index")?;
            let k: usize = parse_field(it.next(), "triangle index")?;
            let tag = RegionTag::parse(
                it.next()
                    .ok_or_else(|| MeshError::Format("missing region tag".into()))?,
            )?;
            if i >= n_nodes || j >= n_nodes || k >= n_nodes {
                return Err(MeshError::Format("triangle index out of range".into()));
            }
            triangles.push([i, j, k]);
            region.push(tag);
        }

        let ref_z = nodes.iter().map(|p| p[1]).collect();
        let mut mesh = Mesh {
            nodes,
            ref_z,
            triangles,
            region,
            boundary,
            dof_map: Vec::new(),
            dof_count: 0,
            plate_position: 0.0,
        };
        mesh.rebuild_dof_map();
        mesh.plate_position = plate_bottom(&mesh).unwrap_or(0.0);
        Ok(mesh)
    }

    pub fn read_file(path: &Path) -> Result<Self, MeshError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn parse_header(line: &str, keyword: &str) -> Result<usize, MeshError> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next()) {
        (Some(k), Some(n)) if k == keyword => n
            .parse()
            .map_err(|_| MeshError::Format(format!("bad {keyword} count `{n}`"))),
        _ => Err(MeshError::Format(format!("expected `{keyword} <count>` header"))),
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T, MeshError> {
    field
        .ok_or_else(|| MeshError::Format(format!("missing {what}")))?
        .parse()
        .map_err(|_| MeshError::Format(format!("bad {what}")))
}

fn plate_bottom(mesh: &Mesh) -> Option<f64> {
    mesh.triangles
        .iter()
        .zip(&mesh.region)
        .filter(|(_, r)| **r == RegionTag::Plate)
        .flat_map(|(t, _)| t.iter().map(|&n| mesh.nodes[n][1]))
        .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |a| a.min(z))))
}

/// Tensor-product grid lines with triangulated cells. Split along the
/// (i, j)-(i+1, j+1) diagonal; both triangles come out counter-clockwise.
pub fn structured_rectangle(r_lines: &[f64], z_lines: &[f64]) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let nr = r_lines.len();
    let nz = z_lines.len();
    let mut nodes = Vec::with_capacity(nr * nz);
    for &r in r_lines {
        for &z in z_lines {
            nodes.push([r, z]);
        }
    }
    let idx = |i: usize, j: usize| i * nz + j;
    let mut triangles = Vec::with_capacity(2 * (nr - 1) * (nz - 1));
    for i in 0..nr - 1 {
        for j in 0..nz - 1 {
            let n00 = idx(i, j);
            let n10 = idx(i + 1, j);
            let n11 = idx(i + 1, j + 1);
            let n01 = idx(i, j + 1);
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }
    (nodes, triangles)
}

/// Subdivide the span between consecutive feature coordinates, using the
/// fine spacing inside [fine_lo, fine_hi] and a coarser one outside.
fn grid_lines(features: &[f64], fine_lo: f64, fine_hi: f64, h: f64, min_div: &[(f64, f64, usize)]) -> Vec<f64> {
    let mut feats: Vec<f64> = features.to_vec();
    feats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    feats.dedup_by(|a, b| (*a - *b).abs() <= GEOM_TOL);

    let coarse = 4.0 * h;
    let mut lines = Vec::new();
    for w in feats.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside = a >= fine_lo - GEOM_TOL && b <= fine_hi + GEOM_TOL;
        let s = if inside { h } else { coarse };
        let mut n = ((b - a) / s).ceil().max(1.0) as usize;
        for &(lo, hi, nmin) in min_div {
            if (a - lo).abs() <= GEOM_TOL && (b - hi).abs() <= GEOM_TOL {
                n = n.max(nmin);
            }
        }
        lines.push(a);
        for i in 1..n {
            lines.push(a + (b - a) * (i as f64) / (n as f64));
        }
    }
    lines.push(*feats.last().unwrap());
    lines
}

fn build_device_mesh(
    geometry: &Geometry,
    deform_box: &DeformBox,
    plate_at: f64,
    density: f64,
) -> Result<Mesh, MeshError> {
    geometry.validate(deform_box)?;
    if density <= 0.0 {
        return Err(MeshError::InvalidGeometry("density must be positive".into()));
    }
    let t = geometry.plate_thickness;
    if plate_at <= geometry.coil_top() {
        return Err(MeshError::InvalidGeometry(format!(
            "plate position {plate_at} m overlaps the coils"
        )));
    }
    let rt = geometry.domain_truncation_radius;

    let r_features = [
        0.0,
        geometry.coil_inner.r_inner,
        geometry.coil_inner.r_outer,
        geometry.coil_outer.r_inner,
        geometry.coil_outer.r_outer,
        geometry.plate_radius,
        deform_box.x_extent,
        rt,
    ];
    let z_features = [
        geometry.domain_z_bottom(),
        geometry.coil_inner.z_bottom,
        geometry.coil_inner.z_top,
        geometry.coil_outer.z_bottom,
        geometry.coil_outer.z_top,
        deform_box.y_min,
        plate_at,
        plate_at + t,
        deform_box.y_max,
        geometry.domain_z_top(),
    ];

    let fine_r_hi = deform_box.x_extent.max(geometry.coil_outer.r_outer);
    let fine_z_lo = geometry.coil_bottom();
    let fine_z_hi = deform_box.y_max.max(plate_at + t);

    let r_lines = grid_lines(&r_features, 0.0, fine_r_hi, density, &[]);
    // The plate must carry at least two element layers through its thickness.
    let z_lines = grid_lines(
        &z_features,
        fine_z_lo,
        fine_z_hi,
        density,
        &[(plate_at, plate_at + t, 2)],
    );

    let (nodes, triangles) = structured_rectangle(&r_lines, &z_lines);

    let in_rect = |c: [f64; 2], r0: f64, r1: f64, z0: f64, z1: f64| {
        c[0] > r0 && c[0] < r1 && c[1] > z0 && c[1] < z1
    };
    let ci = &geometry.coil_inner;
    let co = &geometry.coil_outer;
    let mut region = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let c = [
            (nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0,
            (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0,
        ];
        let tag = if in_rect(c, 0.0, geometry.plate_radius, plate_at, plate_at + t)
            || (c[0] < geometry.plate_radius && c[1] > plate_at && c[1] < plate_at + t)
        {
            RegionTag::Plate
        } else if in_rect(c, ci.r_inner, ci.r_outer, ci.z_bottom, ci.z_top) {
            RegionTag::CoilInner
        } else if in_rect(c, co.r_inner, co.r_outer, co.z_bottom, co.z_top) {
            RegionTag::CoilOuter
        } else if c[0] < deform_box.x_extent && c[1] > deform_box.y_min && c[1] < deform_box.y_max
        {
            RegionTag::BoxAir
        } else {
            RegionTag::Air
        };
        region.push(tag);
    }

    let mut boundary = Vec::with_capacity(nodes.len());
    for p in &nodes {
        let (r, z) = (p[0], p[1]);
        let tag = if r >= rt - GEOM_TOL
            || z <= geometry.domain_z_bottom() + GEOM_TOL
            || z >= geometry.domain_z_top() - GEOM_TOL
        {
            BoundaryTag::OuterDirichlet
        } else if r <= GEOM_TOL {
            BoundaryTag::Axis
        } else if ((r - deform_box.x_extent).abs() <= GEOM_TOL
            && z >= deform_box.y_min - GEOM_TOL
            && z <= deform_box.y_max + GEOM_TOL)
            || (r <= deform_box.x_extent + GEOM_TOL
                && ((z - deform_box.y_min).abs() <= GEOM_TOL
                    || (z - deform_box.y_max).abs() <= GEOM_TOL))
        {
            BoundaryTag::BoxBoundary
        } else {
            BoundaryTag::Free
        };
        boundary.push(tag);
    }

    let ref_z = nodes.iter().map(|p| p[1]).collect();
    let mut mesh = Mesh {
        nodes,
        ref_z,
        triangles,
        region,
        boundary,
        dof_map: Vec::new(),
        dof_count: 0,
        plate_position: plate_at,
    };
    mesh.rebuild_dof_map();

    let report = quality(&mesh);
    if report.min_area <= DEFAULT_AREA_FLOOR {
        return Err(MeshError::MeshGenFailure(format!(
            "triangulation degenerated (min area {})",
            report.min_area
        )));
    }
    if !mesh.region.contains(&RegionTag::Plate) {
        return Err(MeshError::MeshGenFailure("no plate elements generated".into()));
    }
    Ok(mesh)
}

/// Generate the undeformed reference mesh with the plate at
/// `deform_box.reference_position`.
pub fn generate_mesh(
    geometry: &Geometry,
    deform_box: &DeformBox,
    density: f64,
) -> Result<Mesh, MeshError> {
    build_device_mesh(geometry, deform_box, deform_box.reference_position, density)
}

/// Regenerate the full mesh with the plate at position `y`. Node and dof
/// counts vary with `y`.
pub fn remesh(
    geometry: &Geometry,
    deform_box: &DeformBox,
    y: f64,
    density: f64,
) -> Result<Mesh, MeshError> {
    build_device_mesh(geometry, deform_box, y, density)
}

/// Move the plate to position `y` by stretching the sub-domain mesh in z.
///
/// The map is piecewise linear in the reference z-coordinate with
/// breakpoints at the plate's bottom and top faces: the plate translates
/// rigidly, the air bands below and above it stretch or shrink. Nodes on the
/// box boundary and outside the box keep their coordinates; axis nodes slide
/// vertically.
pub fn deform_subdomain(mesh: &Mesh, deform_box: &DeformBox, y: f64) -> Result<Mesh, MeshError> {
    deform_subdomain_with_floor(mesh, deform_box, y, DEFAULT_AREA_FLOOR)
}

pub fn deform_subdomain_with_floor(
    mesh: &Mesh,
    deform_box: &DeformBox,
    y: f64,
    area_floor: f64,
) -> Result<Mesh, MeshError> {
    let t = plate_thickness_of(mesh, deform_box)?;
    if !deform_box.admissible(y, t) {
        return Err(MeshError::OutOfBounds {
            y,
            min: deform_box.y_min,
            max: deform_box.y_max,
        });
    }
    let p0 = deform_box.reference_position;
    let mut out = mesh.clone();
    out.plate_position = y;

    if y == p0 {
        // Restoring the reference position is exact by construction.
        for (node, z) in out.nodes.iter_mut().zip(&out.ref_z) {
            node[1] = *z;
        }
    } else {
        let below = (y - deform_box.y_min) / (p0 - deform_box.y_min);
        let above = (deform_box.y_max - (y + t)) / (deform_box.y_max - (p0 + t));
        for (i, node) in out.nodes.iter_mut().enumerate() {
            if mesh.boundary[i] == BoundaryTag::BoxBoundary {
                continue;
            }
            let z = out.ref_z[i];
            let inside = node[0] < deform_box.x_extent - GEOM_TOL
                && z > deform_box.y_min + GEOM_TOL
                && z < deform_box.y_max - GEOM_TOL;
            if !inside {
                continue;
            }
            node[1] = if z <= p0 {
                deform_box.y_min + (z - deform_box.y_min) * below
            } else if z <= p0 + t {
                z + (y - p0)
            } else {
                deform_box.y_max - (deform_box.y_max - z) * above
            };
        }
    }

    for tri in 0..out.tri_count() {
        let area = out.signed_area(tri);
        if area <= area_floor {
            return Err(MeshError::DegenerateElement {
                element: tri,
                area,
                floor: area_floor,
            });
        }
    }
    Ok(out)
}

fn plate_thickness_of(mesh: &Mesh, deform_box: &DeformBox) -> Result<f64, MeshError> {
    let mut zmin = f64::INFINITY;
    let mut zmax = f64::NEG_INFINITY;
    for (tri, region) in mesh.triangles.iter().zip(&mesh.region) {
        if *region == RegionTag::Plate {
            for &n in tri {
                zmin = zmin.min(mesh.ref_z[n]);
                zmax = zmax.max(mesh.ref_z[n]);
            }
        }
    }
    if !zmin.is_finite() {
        return Err(MeshError::InvalidGeometry("mesh has no plate region".into()));
    }
    if (zmin - deform_box.reference_position).abs() > 1e-9 {
        return Err(MeshError::InvalidGeometry(
            "mesh reference plate position does not match the deform box".into(),
        ));
    }
    Ok(zmax - zmin)
}

/// Scan all triangles for area, minimum angle and aspect ratio.
pub fn quality(mesh: &Mesh) -> MeshQualityReport {
    let mut min_area = f64::INFINITY;
    let mut min_angle = f64::INFINITY;
    let mut worst_aspect = 0.0_f64;
    for tri in 0..mesh.tri_count() {
        let area = mesh.signed_area(tri);
        min_area = min_area.min(area);
        let [a, b, c] = mesh.triangles[tri];
        let pa = mesh.nodes[a];
        let pb = mesh.nodes[b];
        let pc = mesh.nodes[c];
        let la = dist(pb, pc);
        let lb = dist(pa, pc);
        let lc = dist(pa, pb);
        for (opp, s1, s2) in [(la, lb, lc), (lb, la, lc), (lc, la, lb)] {
            let cos = ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cos.acos().to_degrees());
        }
        let lmax = la.max(lb).max(lc);
        if area > 0.0 {
            // Normalized so an equilateral triangle scores 1.
            worst_aspect = worst_aspect.max(lmax * lmax * 3.0_f64.sqrt() / (4.0 * area));
        } else {
            worst_aspect = f64::INFINITY;
        }
    }
    MeshQualityReport {
        min_area,
        min_angle_deg: min_angle,
        worst_aspect_ratio: worst_aspect,
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
