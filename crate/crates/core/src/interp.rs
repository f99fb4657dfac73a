//! Subspace interpolation of projection bases at an unsampled parameter.
//!
//! Four constructions are provided: weighted concatenation of bases (CoB) or
//! of snapshots (CoS), direct interpolation of sign-adjusted, MAC-paired basis
//! vectors, and interpolation on the tangent space of the Grassmann manifold.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{left_singular, orthonormality_defect, solve_dense, thin_svd};
use crate::params::{distance, ParameterSet};
use crate::pod::{pod_basis, BasisOrigin, ProjectionBasis, SnapshotMatrix};
use crate::scalar::Real;

/// One precomputed sample: parameter, snapshots and local POD basis.
#[derive(Debug, Clone)]
pub struct Sample<T: Real> {
    pub mu: ParameterSet<T>,
    pub snapshots: SnapshotMatrix<T>,
    pub basis: ProjectionBasis<T>,
}

impl<T: Real> Sample<T> {
    /// POD of `snapshots` truncated to order `q`.
    pub fn from_snapshots(mu: ParameterSet<T>, snapshots: SnapshotMatrix<T>, q: usize) -> Result<Self> {
        let basis = pod_basis(&snapshots, q)?;
        Ok(Sample { mu, snapshots, basis })
    }
}

/// Immutable set of samples sharing `n` and `q`.
#[derive(Debug, Clone)]
pub struct SampleLibrary<T: Real> {
    samples: Vec<Sample<T>>,
}

impl<T: Real> SampleLibrary<T> {
    pub fn new(samples: Vec<Sample<T>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("sample library is empty".into()))?;
        let (n, q, np) = (first.basis.n(), first.basis.q(), first.mu.len());
        for (k, s) in samples.iter().enumerate() {
            if s.basis.n() != n || s.basis.q() != q || s.snapshots.nrows() != n || s.mu.len() != np {
                return Err(Error::InvalidInput(format!("sample {k} does not match n = {n}, q = {q}, n_p = {np}")));
            }
            if !(orthonormality_defect(&s.basis.v) < T::lit(1e-10)) {
                return Err(Error::InvalidInput(format!("basis of sample {k} is not orthonormal")));
            }
            for (l, other) in samples[..k].iter().enumerate() {
                if s.mu.distance(&other.mu) == T::zero() {
                    return Err(Error::InvalidInput(format!("samples {l} and {k} share the same parameter")));
                }
            }
        }
        Ok(SampleLibrary { samples })
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n(&self) -> usize {
        self.samples[0].basis.n()
    }

    pub fn q(&self) -> usize {
        self.samples[0].basis.q()
    }

    /// Index of the sample closest to `mu` in normalized parameter space.
    pub fn nearest(&self, mu: &ParameterSet<T>) -> usize {
        let mut best = (0, mu.distance(&self.samples[0].mu));
        for (k, s) in self.samples.iter().enumerate().skip(1) {
            let d = mu.distance(&s.mu);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    /// Default weights: piecewise linear for one parameter, inverse distance otherwise.
    pub fn weights(&self, mu: &ParameterSet<T>) -> Result<Vec<T>> {
        if mu.len() != self.samples[0].mu.len() {
            return Err(Error::InvalidInput(format!(
                "query has {} parameters, library has {}",
                mu.len(),
                self.samples[0].mu.len()
            )));
        }
        if mu.len() == 1 {
            let points: Vec<T> = self.samples.iter().map(|s| s.mu.values[0]).collect();
            piecewise_linear_weights(mu.values[0], &points)
        } else {
            let points: Vec<Vec<T>> = self.samples.iter().map(|s| s.mu.values.clone()).collect();
            inverse_distance_weights(&mu.values, &points)
        }
    }
}

/// `(w, 1 - w)` with `w = (mu* - mu_2)/(mu_1 - mu_2)`; queries outside
/// `[mu_1, mu_2]` are rejected.
pub fn linear_weights<T: Real>(mu_star: T, mu_1: T, mu_2: T) -> Result<(T, T)> {
    if mu_1 == mu_2 {
        return Err(Error::InvalidInput("linear weights need two distinct sample points".into()));
    }
    let (lo, hi) = if mu_1 < mu_2 { (mu_1, mu_2) } else { (mu_2, mu_1) };
    if !(mu_star >= lo && mu_star <= hi) {
        return Err(Error::Extrapolation {
            mu: mu_star.as_f64(),
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let w = (mu_star - mu_2) / (mu_1 - mu_2);
    Ok((w, T::one() - w))
}

/// Linear weights on the two samples bracketing `mu_star`, zero elsewhere.
pub fn piecewise_linear_weights<T: Real>(mu_star: T, points: &[T]) -> Result<Vec<T>> {
    let mut w = vec![T::zero(); points.len()];
    if let Some(k) = points.iter().position(|p| *p == mu_star) {
        w[k] = T::one();
        return Ok(w);
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no sample points".into()));
    }
    let lo = points.iter().copied().fold(points[0], |a, b| a.min(b));
    let hi = points.iter().copied().fold(points[0], |a, b| a.max(b));
    let below = (0..points.len()).filter(|&k| points[k] < mu_star).max_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
    let above = (0..points.len()).filter(|&k| points[k] > mu_star).min_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
    match (below, above) {
        (Some(a), Some(b)) => {
            let (wa, wb) = linear_weights(mu_star, points[a], points[b])?;
            w[a] = wa;
            w[b] = wb;
            Ok(w)
        }
        _ => Err(Error::Extrapolation {
            mu: mu_star.as_f64(),
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        }),
    }
}

/// `w_k = (1/d_k) / sum_l (1/d_l)`; a query on a sample gets that sample only.
pub fn inverse_distance_weights<T: Real>(mu_star: &[T], points: &[Vec<T>]) -> Result<Vec<T>> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points for distance weighting".into()));
    }
    let d: Vec<T> = points.iter().map(|p| distance(mu_star, p)).collect();
    if let Some(k) = d.iter().position(|x| *x == T::zero()) {
        let mut w = vec![T::zero(); points.len()];
        w[k] = T::one();
        return Ok(w);
    }
    let inv: Vec<T> = d.iter().map(|x| T::one() / *x).collect();
    let total = inv.iter().fold(T::zero(), |a, b| a + *b);
    Ok(inv.into_iter().map(|x| x / total).collect())
}

fn check_weights<T: Real>(lib: &SampleLibrary<T>, w: &[T], convex: bool) -> Result<()> {
    if w.len() != lib.len() {
        return Err(Error::InvalidWeights(format!("{} weights for {} samples", w.len(), lib.len())));
    }
    if w.iter().any(|x| !x.is_finite() || *x < T::zero()) {
        return Err(Error::InvalidWeights("weights must be finite and non-negative".into()));
    }
    let total = w.iter().fold(T::zero(), |a, b| a + *b);
    if total == T::zero() {
        return Err(Error::InvalidWeights("all weights are zero".into()));
    }
    if convex && (total - T::one()).abs() > T::lit(1e-10) {
        return Err(Error::InvalidWeights(format!("weights must sum to one, got {:e}", total)));
    }
    Ok(())
}

fn interpolated<T: Real>(v: DMatrix<T>, singular_values: Vec<T>, method: &str) -> ProjectionBasis<T> {
    ProjectionBasis {
        v,
        singular_values,
        origin: BasisOrigin::Interpolated {
            query: ParameterSet {
                names: Vec::new(),
                values: Vec::new(),
                initial_physical: Vec::new(),
            },
            method: method.to_string(),
        },
        warnings: Vec::new(),
    }
}

fn concatenate<T: Real>(blocks: impl Iterator<Item = DMatrix<T>>) -> DMatrix<T> {
    let blocks: Vec<DMatrix<T>> = blocks.collect();
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in &blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Leading `q` left singular vectors of `[w_1 V_1, ..., w_K V_K]`.
pub fn interp_cob<T: Real>(lib: &SampleLibrary<T>, w: &[T]) -> Result<ProjectionBasis<T>> {
    check_weights(lib, w, false)?;
    let stacked = concatenate(lib.samples.iter().zip(w).map(|(s, wk)| &s.basis.v * *wk));
    let (v, sv) = left_singular(&stacked, lib.q())?;
    Ok(interpolated(v, sv, "cob"))
}

/// Leading `q` left singular vectors of `[w_1 V_1 S_1, ..., w_K V_K S_K]`, where
/// `S_k` holds the first `q` singular values of sample `k`.
pub fn interp_cob_sv_weighted<T: Real>(lib: &SampleLibrary<T>, w: &[T]) -> Result<ProjectionBasis<T>> {
    check_weights(lib, w, false)?;
    let q = lib.q();
    let stacked = concatenate(lib.samples.iter().zip(w).map(|(s, wk)| {
        let mut b = s.basis.v.clone();
        for j in 0..q {
            let scale = *wk * s.basis.singular_values[j];
            b.column_mut(j).scale_mut(scale);
        }
        b
    }));
    let (v, sv) = left_singular(&stacked, q)?;
    Ok(interpolated(v, sv, "cob-sv"))
}

/// Leading `q` left singular vectors of `[w_1 D_1, ..., w_K D_K]`.
pub fn interp_cos<T: Real>(lib: &SampleLibrary<T>, w: &[T]) -> Result<ProjectionBasis<T>> {
    check_weights(lib, w, false)?;
    let blocks: Vec<(&DMatrix<T>, T)> = lib.samples.iter().zip(w).map(|(s, wk)| (&s.snapshots.data, *wk)).collect();
    let (v, sv) = weighted_snapshot_basis(&blocks, lib.q())?;
    Ok(interpolated(v, sv, "cos"))
}

/// SVD truncation of the weighted concatenation of snapshot blocks; blocks
/// with zero weight are skipped.
pub fn weighted_snapshot_basis<T: Real>(blocks: &[(&DMatrix<T>, T)], q: usize) -> Result<(DMatrix<T>, Vec<T>)> {
    let kept: Vec<DMatrix<T>> = blocks.iter().filter(|(_, w)| *w != T::zero()).map(|(d, w)| *d * *w).collect();
    if kept.is_empty() {
        return Err(Error::InvalidWeights("all weights are zero".into()));
    }
    if kept.iter().any(|d| d.nrows() != kept[0].nrows()) {
        return Err(Error::InvalidInput("snapshot blocks differ in row count".into()));
    }
    let stacked = concatenate(kept.into_iter());
    let max = stacked.nrows().min(stacked.ncols());
    if q == 0 || q > max {
        return Err(Error::InvalidOrder { q, max });
    }
    left_singular(&stacked, q)
}

/// Modal assurance criterion `|a^T b|^2 / (|a|^2 |b|^2)`.
pub fn mac<T: Real>(a: &DVector<T>, b: &DVector<T>) -> Result<T> {
    let (na, nb) = (a.norm_squared(), b.norm_squared());
    if na == T::zero() || nb == T::zero() {
        return Err(Error::InvalidInput("MAC of a zero vector".into()));
    }
    let d = a.dot(b);
    Ok(d * d / (na * nb))
}

/// Reference basis the sample vectors are paired against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacReference {
    /// The basis of one sample.
    Sample(usize),
    /// CoB of the weighted bases.
    WeightedCob,
    /// CoB of the weighted bases scaled by their singular values.
    SvWeightedCob,
}

/// Direct interpolation of MAC-paired, sign-adjusted basis vectors:
/// `v_j = sum_k w_k s_jk v_{i*(j,k)}(mu_k)`, then orthonormalized by SVD.
pub fn interp_direct_adjusted<T: Real>(
    lib: &SampleLibrary<T>,
    w: &[T],
    reference: MacReference,
) -> Result<ProjectionBasis<T>> {
    check_weights(lib, w, true)?;
    let q = lib.q();
    let r = match reference {
        MacReference::Sample(k0) => {
            lib.samples
                .get(k0)
                .ok_or_else(|| Error::InvalidInput(format!("reference sample {k0} out of range")))?
                .basis
                .v
                .clone()
        }
        MacReference::WeightedCob => interp_cob(lib, w)?.v,
        MacReference::SvWeightedCob => interp_cob_sv_weighted(lib, w)?.v,
    };
    let mut warnings = Vec::new();
    let mut vbar = DMatrix::zeros(lib.n(), q);
    for (k, (s, wk)) in lib.samples.iter().zip(w).enumerate() {
        if *wk == T::zero() {
            continue;
        }
        let v = &s.basis.v;
        let mut used = vec![None; q];
        for j in 0..q {
            let rj = r.column(j).into_owned();
            let mut best = (0, T::lit(-1.0));
            for i in 0..q {
                let m = mac(&v.column(i).into_owned(), &rj)?;
                if m > best.1 {
                    best = (i, m);
                }
            }
            let i_star = best.0;
            if let Some(prev) = used[i_star] {
                warnings.push(format!(
                    "sample {k}: vector {i_star} paired with reference vectors {prev} and {j}"
                ));
            }
            used[i_star] = Some(j);
            let col = v.column(i_star);
            let sign = if col.dot(&r.column(j)) < T::zero() { -T::one() } else { T::one() };
            let mut target = vbar.column_mut(j);
            target.axpy(*wk * sign, &col, T::one());
        }
    }
    let (v, sv) = left_singular(&vbar, q)?;
    let mut basis = interpolated(v, sv, "direct");
    basis.warnings = warnings;
    Ok(basis)
}

/// Tangent vector `Log_{V0}(V) = U atan(S) T^T` from the thin SVD of
/// `(I - V0 V0^T) V (V0^T V)^{-1} = U S T^T`.
pub fn grassmann_log<T: Real>(v0: &DMatrix<T>, v: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = v0.transpose() * v;
    let sigma_min = m.clone().svd(false, false).singular_values.min();
    if !(sigma_min > T::lit(1e-10)) {
        return Err(Error::TangentMap {
            sample: usize::MAX,
            sigma_min: sigma_min.as_f64(),
        });
    }
    let y = v - v0 * &m;
    // X = Y M^{-1}, i.e. M^T X^T = Y^T.
    let mt = m.transpose();
    let mut x = DMatrix::zeros(y.nrows(), y.ncols());
    for r in 0..y.nrows() {
        let row = solve_dense(&mt, &y.row(r).transpose())?;
        x.set_row(r, &row.transpose());
    }
    let svd = thin_svd(&x)?;
    let atan: Vec<T> = svd.singular_values.iter().map(|s| s.atan()).collect();
    Ok(scale_columns(&svd.left, &atan) * svd.right.transpose())
}

/// `Exp_{V0}(G) = V0 T cos(S) + U sin(S)` from the thin SVD `G = U S T^T`.
pub fn grassmann_exp<T: Real>(v0: &DMatrix<T>, gamma: &DMatrix<T>) -> Result<DMatrix<T>> {
    let svd = thin_svd(gamma)?;
    let cos: Vec<T> = svd.singular_values.iter().map(|s| s.cos()).collect();
    let sin: Vec<T> = svd.singular_values.iter().map(|s| s.sin()).collect();
    Ok(scale_columns(&(v0 * &svd.right), &cos) + scale_columns(&svd.left, &sin))
}

fn scale_columns<T: Real>(a: &DMatrix<T>, s: &[T]) -> DMatrix<T> {
    let mut out = a.clone();
    for (j, sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(*sj);
    }
    out
}

/// Weighted mean of the tangent vectors of all samples at `V_{k0}`, mapped back.
pub fn interp_grassmann<T: Real>(lib: &SampleLibrary<T>, w: &[T], k0: usize) -> Result<ProjectionBasis<T>> {
    check_weights(lib, w, true)?;
    let v0 = &lib
        .samples
        .get(k0)
        .ok_or_else(|| Error::InvalidInput(format!("reference sample {k0} out of range")))?
        .basis
        .v;
    let mut gamma = DMatrix::zeros(lib.n(), lib.q());
    for (k, (s, wk)) in lib.samples.iter().zip(w).enumerate() {
        if *wk == T::zero() || k == k0 {
            continue;
        }
        let g = grassmann_log(v0, &s.basis.v).map_err(|e| match e {
            Error::TangentMap { sigma_min, .. } => Error::TangentMap { sample: k, sigma_min },
            other => other,
        })?;
        gamma += g * *wk;
    }
    let v = grassmann_exp(v0, &gamma)?;
    let sv = thin_svd(&gamma)?.singular_values;
    Ok(interpolated(v, sv, "grassmann"))
}

/// The four interpolation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethod {
    Cob,
    Cos,
    Direct,
    Grassmann,
}

impl InterpMethod {
    pub const ALL: [InterpMethod; 4] = [InterpMethod::Cob, InterpMethod::Cos, InterpMethod::Direct, InterpMethod::Grassmann];
}

impl fmt::Display for InterpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterpMethod::Cob => "cob",
            InterpMethod::Cos => "cos",
            InterpMethod::Direct => "direct",
            InterpMethod::Grassmann => "grassmann",
        })
    }
}

impl FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cob" => Ok(InterpMethod::Cob),
            "cos" => Ok(InterpMethod::Cos),
            "direct" => Ok(InterpMethod::Direct),
            "grassmann" => Ok(InterpMethod::Grassmann),
            other => Err(Error::InvalidConfig(format!(
                "unknown interpolation method '{other}' (expected cob, cos, direct or grassmann)"
            ))),
        }
    }
}

/// Basis at `mu` with the default weights, MAC reference and `k0` (nearest sample).
pub fn interpolate<T: Real>(lib: &SampleLibrary<T>, mu: &ParameterSet<T>, method: InterpMethod) -> Result<ProjectionBasis<T>> {
    let w = lib.weights(mu)?;
    let mut basis = match method {
        InterpMethod::Cob => interp_cob(lib, &w),
        InterpMethod::Cos => interp_cos(lib, &w),
        InterpMethod::Direct => interp_direct_adjusted(lib, &w, MacReference::SvWeightedCob),
        InterpMethod::Grassmann => interp_grassmann(lib, &w, lib.nearest(mu)),
    }?;
    basis.origin = BasisOrigin::Interpolated {
        query: mu.clone(),
        method: method.to_string(),
    };
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormalize, subspace_angle};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Snapshots of rank `rank` with a decaying spectrum.
    fn snapshots(rng: &mut ChaCha8Rng, n: usize, ns: usize, rank: usize) -> DMatrix<f64> {
        let u = orthonormalize(&random(rng, n, rank)).unwrap();
        let t = orthonormalize(&random(rng, ns, rank)).unwrap();
        let s = DMatrix::from_fn(rank, rank, |i, j| if i == j { 10.0 * 0.5f64.powi(i as i32) } else { 0.0 });
        u * s * t.transpose()
    }

    fn sample(mu: f64, d: DMatrix<f64>, q: usize) -> Sample<f64> {
        let p = ParameterSet::scalar("sigma", 1.0, mu).unwrap();
        Sample::from_snapshots(p.clone(), SnapshotMatrix::new(d, Some(p), 1e-3).unwrap(), q).unwrap()
    }

    /// Two samples whose snapshots are small perturbations of each other.
    fn library(seed: u64, q: usize, rank: usize) -> SampleLibrary<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d1 = snapshots(&mut rng, 30, 20, rank);
        let d2 = &d1 + random(&mut rng, 30, 20) * 0.05;
        SampleLibrary::new(vec![sample(1.0, d1, q), sample(1.5, d2, q)]).unwrap()
    }

    #[test]
    fn linear_weight_examples() {
        assert_eq!(linear_weights(1.0, 1.0, 2.0).unwrap(), (1.0, 0.0));
        assert_eq!(linear_weights(2.0, 1.0, 2.0).unwrap(), (0.0, 1.0));
        assert_eq!(linear_weights(1.5, 1.0, 2.0).unwrap(), (0.5, 0.5));
        assert!(matches!(linear_weights(2.1, 1.0, 2.0), Err(Error::Extrapolation { .. })));
        assert!(linear_weights(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn piecewise_and_distance_weights() {
        let w = piecewise_linear_weights(1.25, &[1.0, 1.5, 2.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5, 0.0]);
        assert!(piecewise_linear_weights(0.5, &[1.0, 2.0]).is_err());
        let w = inverse_distance_weights(&[0.0f64, 0.0], &[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        assert_eq!(inverse_distance_weights(&[1.0], &[vec![2.0], vec![1.0]]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn mac_examples() {
        let v = DVector::from_vec(vec![1.0f64, 2.0, -1.0]);
        assert!((mac(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((mac(&v, &(-&v)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mac(&v, &DVector::from_vec(vec![2.0, -1.0, 0.0])).unwrap(), 0.0);
        assert!(mac(&v, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn sample_point_consistency_all_methods() {
        let lib = library(1, 4, 8);
        for k in 0..2 {
            let mut w = vec![0.0; 2];
            w[k] = 1.0;
            let local = &lib.samples()[k].basis.v;
            let cob = interp_cob(&lib, &w).unwrap();
            let cos = interp_cos(&lib, &w).unwrap();
            let dir = interp_direct_adjusted(&lib, &w, MacReference::SvWeightedCob).unwrap();
            let gr = interp_grassmann(&lib, &w, 1 - k).unwrap();
            for b in [&cob, &cos, &dir, &gr] {
                assert!(orthonormality_defect(&b.v) < 1e-10);
                assert!(subspace_angle(&b.v, local).unwrap() < 1e-8, "{:?}", b.origin);
            }
        }
    }

    #[test]
    fn cob_of_orthogonal_subspaces_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = orthonormalize(&random(&mut rng, 12, 4)).unwrap();
        let (a, b) = (q.columns(0, 2).into_owned(), q.columns(2, 2).into_owned());
        let mk = |mu: f64, v: DMatrix<f64>| Sample {
            mu: ParameterSet::scalar("sigma", 1.0, mu).unwrap(),
            snapshots: SnapshotMatrix::new(v.clone(), None, 1.0).unwrap(),
            basis: ProjectionBasis { v, singular_values: vec![1.0, 1.0], origin: BasisOrigin::Unknown, warnings: vec![] },
        };
        let lib = SampleLibrary::new(vec![mk(1.0, a.clone()), mk(2.0, b.clone())]).unwrap();
        // Unequal weights make the dominant subspace unique.
        let out = interp_cob(&lib, &[0.7, 0.3]).unwrap();
        assert!(subspace_angle(&out.v, &a).unwrap() < 1e-10);
        let stacked = concatenate([a * 0.7, b * 0.3].into_iter());
        let oracle = stacked.clone().svd(true, false).u.unwrap().columns(0, 2).into_owned();
        assert!(subspace_angle(&out.v, &oracle).unwrap() < 1e-10);
    }

    #[test]
    fn cos_single_sample_is_pod() {
        let lib = library(2, 3, 6);
        let out = interp_cos(&lib, &[1.0, 0.0]).unwrap();
        assert!(subspace_angle(&out.v, &lib.samples()[0].basis.v).unwrap() < 1e-10);
        let scaled = interp_cos(&lib, &[0.3 * 7.0, 0.7 * 7.0]).unwrap();
        let plain = interp_cos(&lib, &[0.3, 0.7]).unwrap();
        assert!(subspace_angle(&scaled.v, &plain.v).unwrap() < 1e-10);
    }

    #[test]
    fn cos_equals_sv_weighted_cob_at_full_rank() {
        // q equals the snapshot rank, so V_k S_k carries all of D_k D_k^T.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d1 = snapshots(&mut rng, 25, 15, 3);
        let d2 = snapshots(&mut rng, 25, 15, 3);
        let lib = SampleLibrary::new(vec![sample(1.0, d1, 3), sample(2.0, d2, 3)]).unwrap();
        for w in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let a = interp_cos(&lib, &[w, 1.0 - w]).unwrap();
            let b = interp_cob_sv_weighted(&lib, &[w, 1.0 - w]).unwrap();
            assert!(subspace_angle(&a.v, &b.v).unwrap() < 1e-6);
        }
    }

    #[test]
    fn direct_sign_adjustment_prevents_cancellation() {
        let lib = library(3, 4, 8);
        let s0 = &lib.samples()[0];
        let mut flipped = s0.basis.v.clone();
        flipped.column_mut(1).neg_mut();
        let twin = Sample {
            mu: ParameterSet::scalar("sigma", 1.0, 3.0).unwrap(),
            snapshots: s0.snapshots.clone(),
            basis: ProjectionBasis { v: flipped, ..s0.basis.clone() },
        };
        let lib2 = SampleLibrary::new(vec![s0.clone(), twin]).unwrap();
        let out = interp_direct_adjusted(&lib2, &[0.5, 0.5], MacReference::Sample(0)).unwrap();
        assert!(subspace_angle(&out.v, &s0.basis.v).unwrap() < 1e-10);
        assert!(out.warnings.is_empty());
        let same = interp_direct_adjusted(&lib2, &[0.5, 0.5], MacReference::SvWeightedCob).unwrap();
        assert!(subspace_angle(&same.v, &s0.basis.v).unwrap() < 1e-10);
    }

    #[test]
    fn direct_two_sample_formula() {
        // Reference = sample 2, so v_j = w (+-v_{i*(j)}(mu_1)) + (1 - w) v_j(mu_2).
        let lib = library(5, 3, 6);
        let w = 0.3;
        let out = interp_direct_adjusted(&lib, &[w, 1.0 - w], MacReference::Sample(1)).unwrap();
        let (v1, v2) = (&lib.samples()[0].basis.v, &lib.samples()[1].basis.v);
        let mut manual = DMatrix::zeros(v1.nrows(), 3);
        for j in 0..3 {
            let rj = v2.column(j).into_owned();
            let i = (0..3)
                .max_by(|&a, &b| {
                    mac(&v1.column(a).into_owned(), &rj).unwrap().partial_cmp(&mac(&v1.column(b).into_owned(), &rj).unwrap()).unwrap()
                })
                .unwrap();
            let s = v1.column(i).dot(&rj).signum();
            manual.set_column(j, &(v1.column(i) * (w * s) + v2.column(j) * (1.0 - w)));
        }
        assert!(subspace_angle(&out.v, &manual).unwrap() < 1e-10);
    }

    #[test]
    fn identical_samples_give_identical_span() {
        let lib = library(6, 3, 6);
        let s0 = lib.samples()[0].clone();
        let twin = Sample { mu: ParameterSet::scalar("sigma", 1.0, 9.0).unwrap(), ..s0.clone() };
        let lib2 = SampleLibrary::new(vec![s0.clone(), twin]).unwrap();
        for m in InterpMethod::ALL {
            let mu = ParameterSet::scalar("sigma", 1.0, 4.0).unwrap();
            let out = interpolate(&lib2, &mu, m).unwrap();
            assert!(subspace_angle(&out.v, &s0.basis.v).unwrap() < 1e-8, "{m}");
        }
    }

    #[test]
    fn grassmann_roundtrip_and_reference_query() {
        let lib = library(7, 4, 8);
        let v0 = &lib.samples()[0].basis.v;
        for s in lib.samples() {
            let g = grassmann_log(v0, &s.basis.v).unwrap();
            let back = grassmann_exp(v0, &g).unwrap();
            assert!(orthonormality_defect(&back) < 1e-10);
            assert!(subspace_angle(&back, &s.basis.v).unwrap() < 1e-8);
        }
        let at_ref = interp_grassmann(&lib, &[1.0, 0.0], 0).unwrap();
        assert!(subspace_angle(&at_ref.v, v0).unwrap() < 1e-12);
    }

    #[test]
    fn grassmann_rejects_orthogonal_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = orthonormalize(&random(&mut rng, 10, 4)).unwrap();
        let mk = |mu: f64, v: DMatrix<f64>| Sample {
            mu: ParameterSet::scalar("sigma", 1.0, mu).unwrap(),
            snapshots: SnapshotMatrix::new(v.clone(), None, 1.0).unwrap(),
            basis: ProjectionBasis { v, singular_values: vec![1.0, 1.0], origin: BasisOrigin::Unknown, warnings: vec![] },
        };
        let lib = SampleLibrary::new(vec![mk(1.0, q.columns(0, 2).into_owned()), mk(2.0, q.columns(2, 2).into_owned())]).unwrap();
        assert!(matches!(interp_grassmann(&lib, &[0.5, 0.5], 0), Err(Error::TangentMap { sample: 1, .. })));
    }

    #[test]
    fn weights_are_validated() {
        let lib = library(10, 2, 4);
        assert!(matches!(interp_cob(&lib, &[0.0, 0.0]), Err(Error::InvalidWeights(_))));
        assert!(interp_cob(&lib, &[1.0]).is_err());
        assert!(interp_grassmann(&lib, &[0.7, 0.7], 0).is_err());
        assert!(interp_cos(&lib, &[-0.1, 1.1]).is_err());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in InterpMethod::ALL {
            assert_eq!(m.to_string().parse::<InterpMethod>().unwrap(), m);
        }
        assert!("rbf".parse::<InterpMethod>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn every_method_is_orthonormal(seed in 0u64..500, w in 0.0f64..=1.0) {
            let lib = library(seed, 3, 6);
            let ws = [w, 1.0 - w];
            for b in [
                interp_cob(&lib, &ws).unwrap(),
                interp_cos(&lib, &ws).unwrap(),
                interp_direct_adjusted(&lib, &ws, MacReference::SvWeightedCob).unwrap(),
                interp_grassmann(&lib, &ws, 0).unwrap(),
            ] {
                prop_assert!(orthonormality_defect(&b.v) < 1e-10);
                prop_assert_eq!(b.q(), 3);
            }
        }

        #[test]
        fn mac_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-1.0f64..1.0, 5),
            b in proptest::collection::vec(-1.0f64..1.0, 5),
            s in 0.1f64..10.0,
        ) {
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
            let m = mac(&a, &b).unwrap();
            prop_assert!((m - mac(&b, &a).unwrap()).abs() < 1e-14);
            prop_assert!((m - mac(&(&a * -s), &b).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&m));
        }
    }
}
