//! Nonlinear "contracting chamber": a closed planar ring of point masses
//! joined by Green-strain springs that carry an active fiber stress, held by
//! nodal spring-dashpot supports and loaded by the cavity pressure acting on
//! the current (deformed) wall.
//!
//! Degrees of freedom are the nodal displacements `[ux_0, uy_0, ux_1, ...]`
//! in mm. Forces are in mN (kPa * mm^2), masses in g and time in s; inertial
//! forces carry the factor `1e-3` that converts g*mm/s^2 to mN. The chamber
//! has unit depth (1 mm), so the enclosed area in mm^2 is the cavity volume
//! in mm^3.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::activation::ActiveStressState;
use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::scalar::Real;

/// Converts g*mm/s^2 into mN.
const INERTIA_UNIT: f64 = 1e-3;

/// Geometry of the default ring, as read from the `mesh` config block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct MeshSpec<T> {
    pub node_count: usize,
    /// Reference radius (mm).
    pub radius: T,
    /// Mass per node (g).
    pub node_mass: T,
    /// Wall cross-section per unit depth (mm), multiplies all wall stresses.
    pub wall_thickness: T,
    /// Number of nodes nearest the top of the ring used for the plane-displacement metric.
    pub marked_count: usize,
    /// Number of adjacent nodes at the bottom of the ring held fixed.
    pub pinned_count: usize,
}

impl<T: Real> Default for MeshSpec<T> {
    fn default() -> Self {
        MeshSpec {
            node_count: 100,
            radius: T::lit(25.0),
            node_mass: T::lit(0.02),
            wall_thickness: T::lit(1.0),
            marked_count: 10,
            pinned_count: 2,
        }
    }
}

/// Constitutive and support constants, read from the `material` config block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(default)]
pub struct ChamberMaterial<T> {
    /// Linear Green-strain modulus (kPa).
    pub k_lin: T,
    /// Cubic Green-strain modulus (kPa).
    pub k_cub: T,
    /// Strain-rate viscosity (kPa*s).
    pub c_visc: T,
    /// Bending stiffness on second differences of nodal displacements (mN/mm).
    pub k_bend: T,
    /// Nodal support stiffness (mN/mm).
    pub k_v: T,
    /// Nodal support viscosity (mN*s/mm).
    pub c_v: T,
    /// Density scaling applied to every nodal mass.
    pub rho_scale: T,
}

impl<T: Real> Default for ChamberMaterial<T> {
    fn default() -> Self {
        ChamberMaterial {
            k_lin: T::lit(60.0),
            k_cub: T::lit(400.0),
            c_visc: T::lit(1.0),
            k_bend: T::lit(50.0),
            k_v: T::lit(0.2),
            c_v: T::lit(0.02),
            rho_scale: T::one(),
        }
    }
}

impl<T: Real> ChamberMaterial<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if self.k_lin > z
            && self.k_cub >= z
            && self.c_visc >= z
            && self.k_bend >= z
            && self.k_v >= z
            && self.c_v >= z
            && self.rho_scale > z
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "material requires k_lin > 0, rho_scale > 0 and non-negative k_cub, c_visc, k_bend, k_v, c_v: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChamberMesh<T: Real> {
    pub reference: Vec<Vector2<T>>,
    pub rest_lengths: Vec<T>,
    pub masses: Vec<T>,
    pub marked_nodes: Vec<usize>,
    pub pinned_nodes: Vec<usize>,
    pub wall_thickness: T,
    pub reference_volume: T,
    pinned_dof: Vec<bool>,
}

impl<T: Real> ChamberMesh<T> {
    /// Regular counter-clockwise polygon; nodes `0` and `N-1` straddle the
    /// bottom of the ring, so pinned nodes sit at the "apex" and marked nodes
    /// at the "base".
    pub fn ring(spec: &MeshSpec<T>) -> Result<Self> {
        let n = spec.node_count;
        if n < 8 {
            return Err(Error::InvalidConfig(format!("mesh needs at least 8 nodes, got {n}")));
        }
        if !(spec.radius > T::zero() && spec.node_mass > T::zero() && spec.wall_thickness > T::zero()) {
            return Err(Error::InvalidConfig("mesh radius, node_mass and wall_thickness must be positive".into()));
        }
        if spec.marked_count == 0 || spec.marked_count > n || spec.pinned_count > n / 2 {
            return Err(Error::InvalidConfig(format!(
                "marked_count must be in 1..={n} and pinned_count at most {}",
                n / 2
            )));
        }
        let two_pi = T::two_pi();
        let nn = T::from_usize_lossy(n);
        let angle = |i: usize| -T::frac_pi_2() + two_pi * (T::from_usize_lossy(i) + T::lit(0.5)) / nn;
        let reference: Vec<Vector2<T>> = (0..n)
            .map(|i| {
                let a = angle(i);
                Vector2::new(spec.radius * a.cos(), spec.radius * a.sin())
            })
            .collect();

        let by_distance = |target: Vector2<T>, count: usize| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                (reference[a] - target)
                    .norm()
                    .partial_cmp(&(reference[b] - target).norm())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut sel: Vec<usize> = idx.into_iter().take(count).collect();
            sel.sort_unstable();
            sel
        };
        let marked_nodes = by_distance(Vector2::new(T::zero(), spec.radius), spec.marked_count);
        let pinned_nodes = by_distance(Vector2::new(T::zero(), -spec.radius), spec.pinned_count);

        ChamberMesh::from_parts(reference, vec![spec.node_mass; n], marked_nodes, pinned_nodes, spec.wall_thickness)
    }

    pub fn from_parts(
        reference: Vec<Vector2<T>>,
        masses: Vec<T>,
        marked_nodes: Vec<usize>,
        pinned_nodes: Vec<usize>,
        wall_thickness: T,
    ) -> Result<Self> {
        let n = reference.len();
        if masses.len() != n || masses.iter().any(|&m| m <= T::zero()) {
            return Err(Error::InvalidConfig("one positive mass per node required".into()));
        }
        if marked_nodes.iter().chain(&pinned_nodes).any(|&i| i >= n) {
            return Err(Error::InvalidConfig("node index out of range".into()));
        }
        if !is_simple_polygon(&reference) {
            return Err(Error::DegenerateGeometry("reference polygon self-intersects".into()));
        }
        let rest_lengths = (0..n).map(|i| (reference[(i + 1) % n] - reference[i]).norm()).collect();
        let mut pinned_dof = vec![false; 2 * n];
        for &i in &pinned_nodes {
            pinned_dof[2 * i] = true;
            pinned_dof[2 * i + 1] = true;
        }
        let reference_volume = shoelace(&reference);
        Ok(ChamberMesh {
            reference,
            rest_lengths,
            masses,
            marked_nodes,
            pinned_nodes,
            wall_thickness,
            reference_volume,
            pinned_dof,
        })
    }

    pub fn node_count(&self) -> usize {
        self.reference.len()
    }

    pub fn ndof(&self) -> usize {
        2 * self.reference.len()
    }

    pub fn is_pinned_dof(&self, dof: usize) -> bool {
        self.pinned_dof[dof]
    }

    pub fn current_positions(&self, d: &DVector<T>) -> Vec<Vector2<T>> {
        self.reference
            .iter()
            .enumerate()
            .map(|(i, x)| Vector2::new(x.x + d[2 * i], x.y + d[2 * i + 1]))
            .collect()
    }

    /// Unit vectors pointing from each reference node toward the ring centre.
    pub fn inward_directions(&self) -> Vec<Vector2<T>> {
        let c = self.reference.iter().fold(Vector2::zeros(), |acc, x| acc + x)
            / T::from_usize_lossy(self.node_count());
        self.reference.iter().map(|x| (c - x).normalize()).collect()
    }
}

fn shoelace<T: Real>(x: &[Vector2<T>]) -> T {
    let n = x.len();
    let mut a = T::zero();
    for i in 0..n {
        let j = (i + 1) % n;
        a += x[i].x * x[j].y - x[j].x * x[i].y;
    }
    a * T::lit(0.5)
}

fn segments_cross<T: Real>(p1: Vector2<T>, p2: Vector2<T>, q1: Vector2<T>, q2: Vector2<T>) -> bool {
    let orient = |a: Vector2<T>, b: Vector2<T>, c: Vector2<T>| (b - a).perp(&(c - a));
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let z = T::zero();
    ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z))
}

/// True when no two non-adjacent edges of the closed polygon intersect.
pub fn is_simple_polygon<T: Real>(x: &[Vector2<T>]) -> bool {
    let n = x.len();
    for i in 0..n {
        let (a, b) = (x[i], x[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(a, b, x[j], x[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Structural state at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StructState<T: Real> {
    pub d: DVector<T>,
    pub v: DVector<T>,
    pub a: DVector<T>,
    /// Active stress per wall segment.
    pub tau: Vec<ActiveStressState<T>>,
}

impl<T: Real> StructState<T> {
    pub fn at_rest(mesh: &ChamberMesh<T>) -> Self {
        let n = mesh.ndof();
        StructState {
            d: DVector::zeros(n),
            v: DVector::zeros(n),
            a: DVector::zeros(n),
            tau: vec![ActiveStressState::default(); mesh.node_count()],
        }
    }
}

/// Weights of the mass, stiffness, damping and pressure contributions in an
/// assembled tangent. The coupled solver supplies the time-integrator chain
/// factors here; `(0, 1, 0, 1)` gives the plain `dF/dd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianFactors<T> {
    pub mass: T,
    pub stiffness: T,
    pub damping: T,
    pub pressure: T,
}

impl<T: Real> JacobianFactors<T> {
    pub fn stiffness_only() -> Self {
        JacobianFactors {
            mass: T::zero(),
            stiffness: T::one(),
            damping: T::zero(),
            pressure: T::one(),
        }
    }
}

/// Residual and (optionally) tangent of the structural equations.
#[derive(Debug, Clone)]
pub struct StructAssembly<T: Real> {
    pub residual: DVector<T>,
    /// `mass * M + stiffness * dF/dd + damping * dF/dv`.
    pub jacobian: Option<Csr<T>>,
    /// `pressure * dR/dp_v`.
    pub dr_dpv: DVector<T>,
}

#[derive(Debug, Clone)]
pub struct ChamberModel<T: Real> {
    pub mesh: ChamberMesh<T>,
    pub material: ChamberMaterial<T>,
    /// Cavity pressure balanced by a dead load in the reference configuration.
    pub prestress: T,
}

impl<T: Real> ChamberModel<T> {
    pub fn new(mesh: ChamberMesh<T>, material: ChamberMaterial<T>) -> Result<Self> {
        material.validate()?;
        Ok(ChamberModel {
            mesh,
            material,
            prestress: T::zero(),
        })
    }

    /// Makes the reference configuration an equilibrium at cavity pressure `p`.
    pub fn with_prestress(mut self, p: T) -> Self {
        self.prestress = p;
        self
    }

    pub fn ndof(&self) -> usize {
        self.mesh.ndof()
    }

    /// Lumped mass of a degree of freedom in the force units of the residual.
    pub fn dof_mass(&self, dof: usize) -> T {
        self.mesh.masses[dof / 2] * T::lit(INERTIA_UNIT) * self.material.rho_scale
    }

    /// Cavity volume (mm^3) and its exact gradient with respect to `d`.
    pub fn cavity_volume(&self, d: &DVector<T>) -> Result<(T, DVector<T>)> {
        let x = self.mesh.current_positions(d);
        if !is_simple_polygon(&x) {
            return Err(Error::DegenerateGeometry("chamber wall self-intersects".into()));
        }
        Ok(volume_and_gradient(&x))
    }

    /// `V(d_new) - V(d_old)` evaluated from the increment, avoiding the
    /// cancellation of subtracting two nearly equal volumes.
    pub fn volume_change(&self, d_old: &DVector<T>, d_new: &DVector<T>) -> T {
        let x = self.mesh.current_positions(d_old);
        let n = x.len();
        let delta = |i: usize| Vector2::new(d_new[2 * i] - d_old[2 * i], d_new[2 * i + 1] - d_old[2 * i + 1]);
        let mut acc = T::zero();
        for i in 0..n {
            let j = (i + 1) % n;
            let (di, dj) = (delta(i), delta(j));
            // (x_i + di) x (x_j + dj) - x_i x x_j
            acc += x[i].perp(&dj) + di.perp(&x[j]) + di.perp(&dj);
        }
        acc * T::lit(0.5)
    }

    /// `M a + F_int + F_damp + F_support + F_pressure` at the given state.
    pub fn structural_residual(&self, s: &StructState<T>, p_v: T) -> Result<DVector<T>> {
        Ok(self.assemble(s, p_v, None)?.residual)
    }

    /// Tangent blocks `(dR/dd, dR/dp_v)` weighted by `factors`.
    pub fn structural_jacobian(
        &self,
        s: &StructState<T>,
        p_v: T,
        factors: JacobianFactors<T>,
    ) -> Result<(Csr<T>, DVector<T>)> {
        let asm = self.assemble(s, p_v, Some(factors))?;
        Ok((asm.jacobian.expect("tangent requested"), asm.dr_dpv))
    }

    /// Residual plus, if `factors` is given, the weighted tangent.
    pub fn assemble(
        &self,
        s: &StructState<T>,
        p_v: T,
        factors: Option<JacobianFactors<T>>,
    ) -> Result<StructAssembly<T>> {
        let mesh = &self.mesh;
        let mat = &self.material;
        let n_nodes = mesh.node_count();
        let ndof = mesh.ndof();
        let x = mesh.current_positions(&s.d);
        let mut r = DVector::<T>::zeros(ndof);
        let mut trip: Vec<(usize, usize, T)> = Vec::new();
        if factors.is_some() {
            trip.reserve(n_nodes * 48);
        }
        let area = mesh.wall_thickness;
        let mass_unit = T::lit(INERTIA_UNIT) * mat.rho_scale;

        // Wall segments.
        for seg in 0..n_nodes {
            let (ia, ib) = (seg, (seg + 1) % n_nodes);
            let big_l = mesh.rest_lengths[seg];
            let e = x[ib] - x[ia];
            let len = e.norm();
            if len < T::lit(1e-9) * big_l {
                return Err(Error::DegenerateGeometry(format!("segment {seg} collapsed")));
            }
            let l2 = big_l * big_l;
            let strain = (e.norm_squared() - l2) / (T::lit(2.0) * l2);
            let dv = Vector2::new(
                s.v[2 * ib] - s.v[2 * ia],
                s.v[2 * ib + 1] - s.v[2 * ia + 1],
            );
            let strain_rate = e.dot(&dv) / l2;
            let tau = s.tau[seg].tau;
            let stress = mat.k_lin * strain
                + mat.k_cub * strain * strain * strain
                + tau
                + mat.c_visc * strain_rate;
            let f = e * (area * stress / big_l);
            for c in 0..2 {
                r[2 * ib + c] += f[c];
                r[2 * ia + c] -= f[c];
            }

            if let Some(fac) = factors {
                let tangent_mod = mat.k_lin + T::lit(3.0) * mat.k_cub * strain * strain;
                let scale = area / big_l;
                // d f_b / d x_b
                let mut kbb = [[T::zero(); 2]; 2];
                // d f_b / d v_b
                let mut cbb = [[T::zero(); 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        let mut k = (tangent_mod * e[i] * e[j] + mat.c_visc * e[i] * dv[j]) / l2;
                        if i == j {
                            k += stress;
                        }
                        kbb[i][j] = scale * k;
                        cbb[i][j] = scale * mat.c_visc * e[i] * e[j] / l2;
                    }
                }
                for i in 0..2 {
                    for j in 0..2 {
                        let val = fac.stiffness * kbb[i][j] + fac.damping * cbb[i][j];
                        trip.push((2 * ib + i, 2 * ib + j, val));
                        trip.push((2 * ia + i, 2 * ia + j, val));
                        trip.push((2 * ib + i, 2 * ia + j, -val));
                        trip.push((2 * ia + i, 2 * ib + j, -val));
                    }
                }
            }
        }

        // Bending: E = k_bend/2 * sum_i |d_{i-1} - 2 d_i + d_{i+1}|^2, stencil (1, -4, 6, -4, 1).
        if mat.k_bend > T::zero() {
            let stencil = [T::one(), T::lit(-4.0), T::lit(6.0), T::lit(-4.0), T::one()];
            for i in 0..n_nodes {
                for (o, w) in stencil.iter().enumerate() {
                    let j = (i + n_nodes + o - 2) % n_nodes;
                    let kw = mat.k_bend * *w;
                    for c in 0..2 {
                        r[2 * i + c] += kw * s.d[2 * j + c];
                        if let Some(fac) = factors {
                            trip.push((2 * i + c, 2 * j + c, fac.stiffness * kw));
                        }
                    }
                }
            }
        }

        // Follower pressure: F_p = -p_v * dV/dd, tangent -p_v * d2V/dd2.
        let (_, grad_v) = volume_and_gradient(&x);
        r.axpy(-p_v, &grad_v, T::one());
        if self.prestress != T::zero() {
            let (_, grad_ref) = volume_and_gradient(&mesh.reference);
            r.axpy(self.prestress, &grad_ref, T::one());
        }
        if let Some(fac) = factors {
            let h = T::lit(0.5) * p_v * fac.stiffness;
            for i in 0..n_nodes {
                let next = (i + 1) % n_nodes;
                let prev = (i + n_nodes - 1) % n_nodes;
                // dV/dx_i = (y_next - y_prev)/2, dV/dy_i = (x_prev - x_next)/2
                trip.push((2 * i, 2 * next + 1, -h));
                trip.push((2 * i, 2 * prev + 1, h));
                trip.push((2 * i + 1, 2 * prev, -h));
                trip.push((2 * i + 1, 2 * next, h));
            }
        }

        // Inertia and supports.
        for i in 0..n_nodes {
            let m = mesh.masses[i] * mass_unit;
            for c in 0..2 {
                let k = 2 * i + c;
                r[k] += m * s.a[k] + mat.k_v * s.d[k] + mat.c_v * s.v[k];
                if let Some(fac) = factors {
                    trip.push((k, k, fac.mass * m + fac.stiffness * mat.k_v + fac.damping * mat.c_v));
                }
            }
        }

        // Dirichlet rows: R_k = d_k.
        let mut dr_dpv = -grad_v;
        for k in 0..ndof {
            if mesh.is_pinned_dof(k) {
                r[k] = s.d[k];
                dr_dpv[k] = T::zero();
            }
        }
        let jacobian = factors.map(|fac| {
            trip.retain(|&(row, _, _)| !mesh.is_pinned_dof(row));
            for k in (0..ndof).filter(|&k| mesh.is_pinned_dof(k)) {
                trip.push((k, k, fac.stiffness));
            }
            Csr::from_triplets(ndof, ndof, trip)
        });
        if let Some(fac) = factors {
            dr_dpv *= fac.pressure;
        }
        Ok(StructAssembly {
            residual: r,
            jacobian,
            dr_dpv,
        })
    }
}

fn volume_and_gradient<T: Real>(x: &[Vector2<T>]) -> (T, DVector<T>) {
    let n = x.len();
    let mut g = DVector::zeros(2 * n);
    let half = T::lit(0.5);
    for i in 0..n {
        let next = x[(i + 1) % n];
        let prev = x[(i + n - 1) % n];
        g[2 * i] = half * (next.y - prev.y);
        g[2 * i + 1] = half * (prev.x - next.x);
    }
    (shoelace(x), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> ChamberModel<f64> {
        let mesh = ChamberMesh::ring(&MeshSpec {
            node_count: 24,
            ..MeshSpec::default()
        })
        .unwrap();
        ChamberModel::new(mesh, ChamberMaterial::default()).unwrap()
    }

    fn random_state(m: &ChamberModel<f64>, seed: u64) -> StructState<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = StructState::at_rest(&m.mesh);
        for k in 0..m.ndof() {
            if !m.mesh.is_pinned_dof(k) {
                s.d[k] = rng.random_range(-1.5..1.5);
                s.v[k] = rng.random_range(-20.0..20.0);
                s.a[k] = rng.random_range(-500.0..500.0);
            }
        }
        for t in &mut s.tau {
            t.tau = 120.0;
        }
        s
    }

    #[test]
    fn reference_equilibrium() {
        let m = model();
        let s = StructState::at_rest(&m.mesh);
        assert!(m.structural_residual(&s, 0.0).unwrap().amax() < 1e-12);
        let pre = model().with_prestress(1.3);
        assert!(pre.structural_residual(&s, 1.3).unwrap().amax() < 1e-12);
        assert!(pre.structural_residual(&s, 0.0).unwrap().amax() > 1e-3);
    }

    #[test]
    fn regular_polygon_volume() {
        let m = model();
        let n = 24.0f64;
        let (v, _) = m.cavity_volume(&DVector::zeros(m.ndof())).unwrap();
        let exact = 0.5 * n * 25.0f64.powi(2) * (2.0 * std::f64::consts::PI / n).sin();
        assert!((v - exact).abs() < 1e-10 * exact);
        assert!((m.mesh.reference_volume - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn uniform_inflation_is_radial_and_symmetric() {
        let mesh = ChamberMesh::<f64>::ring(&MeshSpec {
            node_count: 16,
            pinned_count: 0,
            ..MeshSpec::default()
        })
        .unwrap();
        let m = ChamberModel::new(mesh, ChamberMaterial::default()).unwrap();
        let mut s = StructState::at_rest(&m.mesh);
        for (i, x) in m.mesh.reference.iter().enumerate() {
            s.d[2 * i] = 0.1 * x.x;
            s.d[2 * i + 1] = 0.1 * x.y;
        }
        let r = m.structural_residual(&s, 0.0).unwrap();
        let mags: Vec<f64> = (0..16).map(|i| (r[2 * i].powi(2) + r[2 * i + 1].powi(2)).sqrt()).collect();
        for (i, x) in m.mesh.reference.iter().enumerate() {
            let ri = Vector2::new(r[2 * i], r[2 * i + 1]);
            assert!(ri.perp(x).abs() < 1e-10 * ri.norm() * x.norm(), "non-radial force at {i}");
            assert!((mags[i] - mags[0]).abs() < 1e-10 * mags[0]);
        }
    }

    #[test]
    fn pressure_forces_sum_to_zero() {
        let m = model();
        let s = random_state(&m, 3);
        let s = StructState { v: DVector::zeros(m.ndof()), a: DVector::zeros(m.ndof()), ..s };
        let free = m.structural_residual(&s, 0.0).unwrap();
        let loaded = m.structural_residual(&s, 2.5).unwrap();
        // Sum over all nodes, re-inserting the pinned-node pressure forces.
        let (_, g) = m.cavity_volume(&s.d).unwrap();
        let mut sum = Vector2::zeros();
        let mut perimeter = 0.0;
        let x = m.mesh.current_positions(&s.d);
        for i in 0..m.mesh.node_count() {
            perimeter += (x[(i + 1) % x.len()] - x[i]).norm();
            let f = if m.mesh.pinned_nodes.contains(&i) {
                Vector2::new(-2.5 * g[2 * i], -2.5 * g[2 * i + 1])
            } else {
                Vector2::new(loaded[2 * i] - free[2 * i], loaded[2 * i + 1] - free[2 * i + 1])
            };
            sum += f;
        }
        assert!(sum.norm() < 1e-12 * 2.5 * perimeter);
    }

    #[test]
    fn pressure_derivative_is_edge_normal_distribution() {
        let m = model();
        let s = StructState::at_rest(&m.mesh);
        let (_, dp) = m.structural_jacobian(&s, 1.0, JacobianFactors::stiffness_only()).unwrap();
        let x = &m.mesh.reference;
        let n = x.len();
        let mut oracle = DVector::<f64>::zeros(2 * n);
        for i in 0..n {
            let j = (i + 1) % n;
            let e = x[j] - x[i];
            let normal_len = Vector2::new(e.y, -e.x); // outward normal times edge length
            for node in [i, j] {
                oracle[2 * node] -= 0.5 * normal_len.x;
                oracle[2 * node + 1] -= 0.5 * normal_len.y;
            }
        }
        for &p in &m.mesh.pinned_nodes {
            oracle[2 * p] = 0.0;
            oracle[2 * p + 1] = 0.0;
        }
        assert!((dp - oracle).amax() < 1e-12);
    }

    fn fd_check(m: &ChamberModel<f64>, s: &StructState<f64>, p_v: f64, which: usize) -> f64 {
        let factors = match which {
            0 => JacobianFactors { mass: 0.0, stiffness: 1.0, damping: 0.0, pressure: 1.0 },
            1 => JacobianFactors { mass: 0.0, stiffness: 0.0, damping: 1.0, pressure: 1.0 },
            _ => JacobianFactors { mass: 1.0, stiffness: 0.0, damping: 0.0, pressure: 1.0 },
        };
        let (jac, _) = m.structural_jacobian(s, p_v, factors).unwrap();
        let jac = jac.to_dense();
        let n = m.ndof();
        // The residual is affine in v and a, so those blocks take a large step.
        let h = if which == 0 { 1e-6 } else { 1.0 };
        let mut fd = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let mut sp = s.clone();
            let mut sm = s.clone();
            let (vp, vm) = match which {
                0 => (&mut sp.d, &mut sm.d),
                1 => (&mut sp.v, &mut sm.v),
                _ => (&mut sp.a, &mut sm.a),
            };
            vp[k] += h;
            vm[k] -= h;
            let col = (m.structural_residual(&sp, p_v).unwrap() - m.structural_residual(&sm, p_v).unwrap()) / (2.0 * h);
            fd.set_column(k, &col);
        }
        if which != 0 {
            // Pinned rows depend on d only.
            for k in 0..n {
                if m.mesh.is_pinned_dof(k) {
                    fd[(k, k)] = 0.0;
                }
            }
        }
        let scale = fd.amax().max(1e-30);
        (jac - fd).amax() / scale
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = model();
        for seed in 0..3 {
            let s = random_state(&m, seed);
            for which in 0..3 {
                let err = fd_check(&m, &s, 1.7, which);
                assert!(err < 1e-5, "block {which} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn zero_stiffness_limit_keeps_mass_damping_support() {
        let mesh = ChamberMesh::<f64>::ring(&MeshSpec { node_count: 12, ..MeshSpec::default() }).unwrap();
        let mat = ChamberMaterial {
            k_lin: 1e-300,
            k_cub: 0.0,
            c_visc: 0.0,
            k_bend: 0.0,
            ..ChamberMaterial::default()
        };
        let m = ChamberModel::new(mesh, mat).unwrap();
        let s = StructState::at_rest(&m.mesh);
        let fac = JacobianFactors { mass: 2.0, stiffness: 1.0, damping: 3.0, pressure: 1.0 };
        let (jac, _) = m.structural_jacobian(&s, 0.0, fac).unwrap();
        let jac = jac.to_dense();
        let mut expected = DMatrix::<f64>::zeros(24, 24);
        for k in 0..24 {
            expected[(k, k)] = if m.mesh.is_pinned_dof(k) {
                1.0
            } else {
                2.0 * m.mesh.masses[k / 2] * INERTIA_UNIT + mat.k_v + 3.0 * mat.c_v
            };
        }
        assert!((jac - expected).amax() < 1e-12);
    }

    #[test]
    fn elastic_tangent_is_symmetric_at_rest_velocity() {
        let m = model();
        let s = random_state(&m, 9);
        let s = StructState { v: DVector::zeros(m.ndof()), ..s };
        let (jac, _) = m.structural_jacobian(&s, 0.0, JacobianFactors::stiffness_only()).unwrap();
        let mut k = jac.to_dense();
        for dof in 0..m.ndof() {
            if m.mesh.is_pinned_dof(dof) {
                k.row_mut(dof).fill(0.0);
                k.column_mut(dof).fill(0.0);
            }
        }
        assert!((&k - k.transpose()).amax() < 1e-10 * k.amax());
    }

    #[test]
    fn volume_gradient_matches_fd() {
        let m = model();
        let s = random_state(&m, 5);
        let (_, g) = m.cavity_volume(&s.d).unwrap();
        // Quadratic in d: central differences are exact up to roundoff.
        let h = 1e-2;
        for k in 0..m.ndof() {
            let mut dp = s.d.clone();
            let mut dm = s.d.clone();
            dp[k] += h;
            dm[k] -= h;
            let fd = (m.cavity_volume(&dp).unwrap().0 - m.cavity_volume(&dm).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-8 * g.amax());
        }
    }

    #[test]
    fn volume_change_matches_difference() {
        let m = model();
        let a = random_state(&m, 1).d;
        let b = random_state(&m, 2).d;
        let direct = m.cavity_volume(&b).unwrap().0 - m.cavity_volume(&a).unwrap().0;
        assert!((m.volume_change(&a, &b) - direct).abs() < 1e-10 * m.mesh.reference_volume);
        assert_eq!(m.volume_change(&a, &a), 0.0);
    }

    #[test]
    fn degenerate_geometry_detected() {
        let m = model();
        let mut d = DVector::zeros(m.ndof());
        // Fold node 5 across the ring.
        d[10] = -2.0 * m.mesh.reference[5].x;
        d[11] = -2.0 * m.mesh.reference[5].y;
        assert!(matches!(m.cavity_volume(&d), Err(Error::DegenerateGeometry(_))));

        let mut s = StructState::at_rest(&m.mesh);
        s.d[6] = m.mesh.reference[4].x - m.mesh.reference[3].x;
        s.d[7] = m.mesh.reference[4].y - m.mesh.reference[3].y;
        assert!(matches!(m.structural_residual(&s, 0.0), Err(Error::DegenerateGeometry(_))));
    }
}
