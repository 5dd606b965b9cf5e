//! Capped-ellipsoid fingertip: an elliptic cylinder along the finger x-axis
//! (`-L <= x <= 0`) closed by a half-ellipsoid cap (`x >= 0`). With equal
//! semi-axes this is a hemisphere on a circular cylinder.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;

use super::projection::{closest_on_ellipse, closest_on_ellipsoid};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::geodesy::SparseGraph;

/// Points farther than this (in implicit-equation residual) from the surface
/// are rejected by the geodesic oracle.
pub const ON_SURFACE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceParams {
    /// Cap semi-axis along the finger x-axis (m).
    pub cap_length: f64,
    pub radius_y: f64,
    pub radius_z: f64,
    pub cylinder_length: f64,
    /// Sensing patch in chart coordinates: meridian arc length `s` (negative
    /// on the cylinder, positive on the cap) and azimuth `phi` about x.
    pub patch_s_min: f64,
    pub patch_s_max: f64,
    pub patch_phi_min: f64,
    pub patch_phi_max: f64,
    pub electrodes: usize,
    /// Width of the geodesic Gaussian kernel on electrodes (m).
    pub kernel_width: f64,
    /// Pressure per metre of penetration.
    pub pressure_gain: f64,
    /// Additive Gaussian electrode noise (activation units); 0 disables.
    pub noise_std: f64,
    pub mesh_spacing: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        let pressure_gain = 10.0;
        Self {
            cap_length: 0.007,
            radius_y: 0.007,
            radius_z: 0.007,
            cylinder_length: 0.02,
            patch_s_min: -0.0145,
            patch_s_max: 0.0045,
            patch_phi_min: -1.1,
            patch_phi_max: 1.1,
            electrodes: 19,
            kernel_width: 0.0035,
            pressure_gain,
            // 1% of the activation at the deepest scripted press (~1.7 mm).
            noise_std: 0.01 * pressure_gain * 0.0017,
            mesh_spacing: 0.0004,
        }
    }
}

impl SurfaceParams {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            cap_length: kv.get_or("surface.cap_length", d.cap_length)?,
            radius_y: kv.get_or("surface.radius_y", d.radius_y)?,
            radius_z: kv.get_or("surface.radius_z", d.radius_z)?,
            cylinder_length: kv.get_or("surface.cylinder_length", d.cylinder_length)?,
            patch_s_min: kv.get_or("surface.patch_s_min", d.patch_s_min)?,
            patch_s_max: kv.get_or("surface.patch_s_max", d.patch_s_max)?,
            patch_phi_min: kv.get_or("surface.patch_phi_min", d.patch_phi_min)?,
            patch_phi_max: kv.get_or("surface.patch_phi_max", d.patch_phi_max)?,
            electrodes: kv.get_or("surface.electrodes", d.electrodes)?,
            kernel_width: kv.get_or("surface.kernel_width", d.kernel_width)?,
            pressure_gain: kv.get_or("surface.pressure_gain", d.pressure_gain)?,
            noise_std: kv.get_or("surface.noise_std", d.noise_std)?,
            mesh_spacing: kv.get_or("surface.mesh_spacing", d.mesh_spacing)?,
        })
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("surface.cap_length", self.cap_length);
        kv.set("surface.radius_y", self.radius_y);
        kv.set("surface.radius_z", self.radius_z);
        kv.set("surface.cylinder_length", self.cylinder_length);
        kv.set("surface.patch_s_min", self.patch_s_min);
        kv.set("surface.patch_s_max", self.patch_s_max);
        kv.set("surface.patch_phi_min", self.patch_phi_min);
        kv.set("surface.patch_phi_max", self.patch_phi_max);
        kv.set("surface.electrodes", self.electrodes);
        kv.set("surface.kernel_width", self.kernel_width);
        kv.set("surface.pressure_gain", self.pressure_gain);
        kv.set("surface.noise_std", self.noise_std);
        kv.set("surface.mesh_spacing", self.mesh_spacing);
        kv
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("cap_length", self.cap_length),
            ("radius_y", self.radius_y),
            ("radius_z", self.radius_z),
            ("cylinder_length", self.cylinder_length),
            ("kernel_width", self.kernel_width),
            ("pressure_gain", self.pressure_gain),
            ("mesh_spacing", self.mesh_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("surface.{name} must be positive, got {v}")));
            }
        }
        if self.electrodes < 3 {
            return Err(Error::Config(format!(
                "surface.electrodes must be at least 3, got {}",
                self.electrodes
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("surface.noise_std must be nonnegative".into()));
        }
        let cap_arc = self.cap_length * PI / 2.0;
        if !(self.patch_s_min < self.patch_s_max
            && self.patch_s_min > -self.cylinder_length
            && self.patch_s_max < cap_arc
            && self.patch_phi_min < self.patch_phi_max
            && self.patch_phi_max - self.patch_phi_min <= 2.0 * PI)
        {
            return Err(Error::Config("sensing patch lies outside the surface".into()));
        }
        Ok(())
    }
}

/// Nearest surface point to a query, with penetration information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: Vector3<f64>,
    pub distance: f64,
    pub inside: bool,
}

/// Uniform hash grid for fixed-radius neighbour queries.
#[derive(Debug, Clone)]
struct SpatialGrid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl SpatialGrid {
    fn new(points: &[Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Indices within `radius` of `p`, in ascending index order.
    fn within(&self, points: &[Vector3<f64>], p: &Vector3<f64>, radius: f64) -> Vec<(usize, f64)> {
        let reach = (radius / self.cell).ceil() as i64;
        let k = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(list) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &i in list {
                            let d = (points[i] - p).norm();
                            if d <= radius {
                                out.push((i, d));
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }
}

/// Dense evaluation mesh: near-uniform vertices linked to every vertex within
/// `link_radius`. Query points attach to vertices within half that radius,
/// which keeps graph distances between attached points a metric.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Vector3<f64>>,
    graph: SparseGraph,
    grid: SpatialGrid,
    link_radius: f64,
}

impl SurfaceMesh {
    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }

    pub fn link_radius(&self) -> f64 {
        self.link_radius
    }

    pub fn attach_radius(&self) -> f64 {
        0.5 * self.link_radius
    }

    fn attachments(&self, p: &Vector3<f64>) -> Vec<(usize, f64)> {
        self.grid.within(&self.vertices, p, self.attach_radius())
    }
}

/// Shortest-path distances over the mesh from one surface point.
#[derive(Debug, Clone)]
pub struct GeodesicField {
    source: Vector3<f64>,
    dist: Vec<f64>,
}

impl GeodesicField {
    pub fn source(&self) -> Vector3<f64> {
        self.source
    }

    pub fn distance_to(&self, mesh: &SurfaceMesh, p: &Vector3<f64>) -> f64 {
        if *p == self.source {
            return 0.0;
        }
        mesh.attachments(p)
            .into_iter()
            .map(|(i, d)| d + self.dist[i])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct SkinSurface {
    params: SurfaceParams,
    electrodes: Vec<Vector3<f64>>,
    mesh: SurfaceMesh,
    electrode_fields: Vec<GeodesicField>,
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

impl SkinSurface {
    pub fn new(params: SurfaceParams) -> Result<Self> {
        params.validate()?;
        let mut surface = Self {
            electrodes: Vec::new(),
            mesh: build_mesh(&params),
            electrode_fields: Vec::new(),
            params,
        };
        let sizes = surface.mesh.graph.component_sizes();
        if sizes.len() != 1 {
            return Err(Error::DisconnectedGraph { sizes });
        }
        surface.electrodes = surface.fibonacci_patch(surface.params.electrodes);
        surface.electrode_fields = surface
            .electrodes
            .iter()
            .map(|e| surface.field_from(e))
            .collect::<Result<_>>()?;
        Ok(surface)
    }

    pub fn params(&self) -> &SurfaceParams {
        &self.params
    }

    pub fn electrodes(&self) -> &[Vector3<f64>] {
        &self.electrodes
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn electrode_fields(&self) -> &[GeodesicField] {
        &self.electrode_fields
    }

    fn rim_radius(&self, phi: f64) -> (f64, f64) {
        (self.params.radius_y * phi.cos(), self.params.radius_z * phi.sin())
    }

    /// Surface point at chart coordinates `(s, phi)`.
    pub fn point_at(&self, s: f64, phi: f64) -> Vector3<f64> {
        let (y, z) = self.rim_radius(phi);
        if s <= 0.0 {
            Vector3::new(s, y, z)
        } else {
            let theta = (s / self.params.cap_length).min(PI / 2.0);
            Vector3::new(
                self.params.cap_length * theta.sin(),
                y * theta.cos(),
                z * theta.cos(),
            )
        }
    }

    /// Chart coordinates `(s, phi)` of a surface point.
    pub fn chart_of(&self, p: &Vector3<f64>) -> (f64, f64) {
        let ny = p.y / self.params.radius_y;
        let nz = p.z / self.params.radius_z;
        let phi = nz.atan2(ny);
        if p.x <= 0.0 {
            (p.x, phi)
        } else {
            let theta = (p.x / self.params.cap_length).atan2(ny.hypot(nz));
            (self.params.cap_length * theta, phi)
        }
    }

    /// Implicit-equation residual; zero on the surface.
    pub fn residual(&self, p: &Vector3<f64>) -> f64 {
        let q = &self.params;
        let lateral = (p.y / q.radius_y).powi(2) + (p.z / q.radius_z).powi(2);
        if p.x > 0.0 {
            lateral + (p.x / q.cap_length).powi(2) - 1.0
        } else if p.x >= -q.cylinder_length {
            lateral - 1.0
        } else {
            f64::INFINITY
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.residual(p) < 0.0
    }

    /// Outward unit normal at (or near) a surface point.
    pub fn normal_at(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let q = &self.params;
        let gx = if p.x > 0.0 { p.x / (q.cap_length * q.cap_length) } else { 0.0 };
        Vector3::new(gx, p.y / (q.radius_y * q.radius_y), p.z / (q.radius_z * q.radius_z))
            .normalize()
    }

    /// Nearest surface point to `q` (finger frame).
    pub fn project(&self, q: &Vector3<f64>) -> Projection {
        let prm = &self.params;
        let (cy, cz) = closest_on_ellipse(prm.radius_y, prm.radius_z, q.y, q.z);
        let cyl = Vector3::new(q.x.clamp(-prm.cylinder_length, 0.0), cy, cz);
        let mut best = cyl;
        let mut best_d = (q - cyl).norm();
        let cap = closest_on_ellipsoid([prm.cap_length, prm.radius_y, prm.radius_z], [q.x, q.y, q.z]);
        if cap[0] >= 0.0 {
            let cap = Vector3::new(cap[0], cap[1], cap[2]);
            let d = (q - cap).norm();
            if d < best_d {
                best = cap;
                best_d = d;
            }
        }
        Projection {
            point: best,
            distance: best_d,
            inside: self.contains(q),
        }
    }

    /// Near-uniform Fibonacci lattice over the sensing patch.
    pub fn fibonacci_patch(&self, n: usize) -> Vec<Vector3<f64>> {
        let p = &self.params;
        let golden = GOLDEN_ANGLE / (2.0 * PI);
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                let v = (i as f64 * golden).fract();
                let s = p.patch_s_min + u * (p.patch_s_max - p.patch_s_min);
                let phi = p.patch_phi_min + v * (p.patch_phi_max - p.patch_phi_min);
                self.point_at(s, phi)
            })
            .collect()
    }

    pub fn check_on_surface(&self, p: &Vector3<f64>) -> Result<()> {
        let r = self.residual(p);
        if r.abs() > ON_SURFACE_TOL {
            return Err(Error::OffSurface { residual: r });
        }
        Ok(())
    }

    /// Shortest-path distance field from a surface point over the mesh.
    pub fn field_from(&self, p: &Vector3<f64>) -> Result<GeodesicField> {
        self.check_on_surface(p)?;
        let seeds = self.mesh.attachments(p);
        if seeds.is_empty() {
            return Err(Error::InvalidArgument("mesh too coarse around query point".into()));
        }
        Ok(GeodesicField {
            source: *p,
            dist: self.mesh.graph.dijkstra_seeded(&seeds),
        })
    }

    /// Mesh geodesic distance between two surface points.
    pub fn geodesic(&self, p1: &Vector3<f64>, p2: &Vector3<f64>) -> Result<f64> {
        self.check_on_surface(p2)?;
        Ok(self.field_from(p1)?.distance_to(&self.mesh, p2))
    }
}

fn build_mesh(params: &SurfaceParams) -> SurfaceMesh {
    let h = params.mesh_spacing;
    let (a, ry, rz) = (params.cap_length, params.radius_y, params.radius_z);
    let mut vertices = Vec::new();

    // Cap: Fibonacci lattice on the unit hemisphere (uniform in x is
    // area-uniform on a sphere), stretched onto the ellipsoid.
    let mean_r = (a + ry + rz) / 3.0;
    let cap_area = 2.0 * PI * mean_r * mean_r;
    let n_cap = ((cap_area / (h * h)).ceil() as usize).max(16);
    for i in 0..n_cap {
        let x = (i as f64 + 0.5) / n_cap as f64;
        let rho = (1.0 - x * x).max(0.0).sqrt();
        let ang = i as f64 * GOLDEN_ANGLE;
        vertices.push(Vector3::new(a * x, ry * rho * ang.cos(), rz * rho * ang.sin()));
    }

    // Cylinder: staggered rings.
    let perimeter = PI * (3.0 * (ry + rz) - ((3.0 * ry + rz) * (ry + 3.0 * rz)).sqrt());
    let n_phi = ((perimeter / h).round() as usize).max(8);
    let n_x = ((params.cylinder_length / h).round() as usize).max(1);
    let dx = params.cylinder_length / n_x as f64;
    for j in 0..=n_x {
        let x = -(j as f64) * dx;
        let offset = if j % 2 == 0 { 0.0 } else { 0.5 };
        for k in 0..n_phi {
            let phi = 2.0 * PI * (k as f64 + offset) / n_phi as f64;
            vertices.push(Vector3::new(x, ry * phi.cos(), rz * phi.sin()));
        }
    }

    let link_radius = 5.0 * h;
    let link_grid = SpatialGrid::new(&vertices, link_radius);
    let mut graph = SparseGraph::with_nodes(vertices.len());
    for i in 0..vertices.len() {
        for (j, d) in link_grid.within(&vertices, &vertices[i], link_radius) {
            if j > i {
                graph.add_edge(i, j, d);
            }
        }
    }
    let grid = SpatialGrid::new(&vertices, 0.5 * link_radius);
    SurfaceMesh {
        vertices,
        graph,
        grid,
        link_radius,
    }
}
