//! Dense linear algebra on top of `nalgebra`: thin SVD with a deterministic
//! sign convention, direct solves, orthonormalization, principal angles and a
//! minimal compressed-row matrix for the structural Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Thin singular value decomposition `a = left * diag(singular_values) * right^T`.
#[derive(Debug, Clone)]
pub struct Svd<T: Real> {
    pub left: DMatrix<T>,
    pub singular_values: Vec<T>,
    pub right: DMatrix<T>,
}

fn check_finite<T: Real>(a: &DMatrix<T>, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{what}: empty matrix")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what}: non-finite entry")));
    }
    Ok(())
}

/// Thin SVD with singular values sorted descending.
///
/// Each left singular vector is oriented so that its largest-magnitude entry
/// is positive (the matching right vector is flipped with it), which makes the
/// factors reproducible across platforms.
pub fn thin_svd<T: Real>(a: &DMatrix<T>) -> Result<Svd<T>> {
    svd_impl(a, true).map(|(u, s, v)| Svd {
        left: u,
        singular_values: s,
        right: v.expect("right vectors requested"),
    })
}

/// Leading `q` left singular vectors and all singular values of `a`.
pub fn left_singular<T: Real>(a: &DMatrix<T>, q: usize) -> Result<(DMatrix<T>, Vec<T>)> {
    let (u, s, _) = svd_impl(a, false)?;
    if q == 0 || q > u.ncols() {
        return Err(Error::InvalidOrder { q, max: u.ncols() });
    }
    Ok((u.columns(0, q).into_owned(), s))
}

#[allow(clippy::type_complexity)]
fn svd_impl<T: Real>(
    a: &DMatrix<T>,
    want_right: bool,
) -> Result<(DMatrix<T>, Vec<T>, Option<DMatrix<T>>)> {
    check_finite(a, "thin_svd")?;
    let svd = a.clone().svd(true, want_right);
    let u = svd.u.expect("left vectors requested");
    let sv = svd.singular_values;
    let r = sv.len();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| {
        sv[j]
            .partial_cmp(&sv[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut left = DMatrix::<T>::zeros(a.nrows(), r);
    let mut right = want_right.then(|| DMatrix::<T>::zeros(a.ncols(), r));
    let mut values = Vec::with_capacity(r);
    for (k, &i) in order.iter().enumerate() {
        let col = u.column(i);
        let pivot = col.iter().fold(T::zero(), |best, &x| {
            if x.abs() > best.abs() {
                x
            } else {
                best
            }
        });
        let sign = if pivot < T::zero() { -T::one() } else { T::one() };
        left.set_column(k, &(col * sign));
        if let (Some(right), Some(v_t)) = (right.as_mut(), svd.v_t.as_ref()) {
            right.set_column(k, &(v_t.row(i).transpose() * sign));
        }
        values.push(sv[i].max(T::zero()));
    }
    Ok((left, values, right))
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve_dense<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::InvalidInput(format!(
            "solve_dense: {}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    check_finite(a, "solve_dense")?;
    let n = a.nrows();
    let scale = a.amax();
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut pmin, mut pmax) = (T::max_value().unwrap(), T::zero());
    for i in 0..n {
        let p = u[(i, i)].abs();
        pmin = pmin.min(p);
        pmax = pmax.max(p);
    }
    let tiny = T::default_epsilon() * T::from_usize_lossy(n) * scale;
    if scale == T::zero() || pmin <= tiny {
        let cond = if pmin > T::zero() {
            (pmax / pmin).as_f64()
        } else {
            f64::INFINITY
        };
        return Err(Error::Singular {
            cond_estimate: cond,
        });
    }
    lu.solve(b).ok_or(Error::Singular {
        cond_estimate: (pmax / pmin).as_f64(),
    })
}

/// Number of singular values above `s_max * max(rows, cols) * eps`, the usual
/// floating-point rank tolerance.
pub fn numerical_rank<T: Real>(singular_values: &[T], rows: usize, cols: usize) -> usize {
    let Some(&s0) = singular_values.first() else {
        return 0;
    };
    let tol = s0 * T::from_usize_lossy(rows.max(cols)) * T::default_epsilon();
    singular_values.iter().filter(|&&s| s > tol && s > T::zero()).count()
}

/// Orthonormal basis of the column span of `a` (same number of columns).
pub fn orthonormalize<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let svd = thin_svd(a)?;
    let cols = a.ncols();
    let rank = numerical_rank(&svd.singular_values, a.nrows(), cols);
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    Ok(svd.left.columns(0, cols).into_owned())
}

/// `max |a^T a - I|`.
pub fn orthonormality_defect<T: Real>(a: &DMatrix<T>) -> T {
    let g = a.transpose() * a;
    let mut worst = T::zero();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Principal angles (ascending, radians) between the column spans of `a` and `b`.
///
/// Small angles come from the sines (`(I - QaQa^T) Qb`) and large ones from
/// the cosines (`Qa^T Qb`), so both ends are resolved to machine precision.
pub fn principal_angles<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<Vec<T>> {
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidInput(format!(
            "principal_angles: row mismatch {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormalize(a)?;
    let qb = orthonormalize(b)?;
    let (qa, qb) = if qa.ncols() >= qb.ncols() {
        (qa, qb)
    } else {
        (qb, qa)
    };
    let k = qb.ncols();
    let cross = qa.transpose() * &qb;
    let cosines = cross.clone().svd(false, false).singular_values;
    let mut cos: Vec<T> = cosines.iter().map(|c| c.min(T::one())).collect();
    cos.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let resid = &qb - &qa * cross;
    let mut sin: Vec<T> = resid
        .svd(false, false)
        .singular_values
        .iter()
        .map(|s| s.min(T::one()))
        .collect();
    sin.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let half = T::lit(0.5);
    Ok((0..k)
        .map(|i| {
            if cos[i] * cos[i] >= half {
                sin[i].asin()
            } else {
                cos[i].acos()
            }
        })
        .collect())
}

/// Largest principal angle between two column spans.
pub fn subspace_angle<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<T> {
    Ok(principal_angles(a, b)?
        .into_iter()
        .fold(T::zero(), |m, x| m.max(x)))
}

/// Compressed sparse row matrix; just enough for assembling the structural
/// tangent and projecting it onto a reduced basis.
#[derive(Debug, Clone)]
pub struct Csr<T: Real> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_fn(self.nrows, |r, _| {
            self.row(r).fold(T::zero(), |acc, (c, v)| acc + v * x[c])
        })
    }

    /// `self * b` for a dense right-hand matrix.
    pub fn mul_dense(&self, b: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(self.ncols, b.nrows());
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let bj = b.column(j);
            for r in 0..self.nrows {
                out[(r, j)] = self.row(r).fold(T::zero(), |acc, (c, v)| acc + v * bj[c]);
            }
        }
        out
    }
}
