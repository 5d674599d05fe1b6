//! Dense eigen-solvers for the small matrices produced by window spaces.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{cabs, r, C, Real};

/// Eigenvalues of a complex matrix sorted by decreasing modulus.
pub fn eigenvalues<T: Real>(m: &DMatrix<C<T>>) -> Vec<C<T>> {
    let n = m.nrows();
    let mut ev: Vec<C<T>> = if n == 1 {
        vec![m[(0, 0)]]
    } else {
        match m.clone().try_schur(T::EPSILON, 10_000) {
            Some(s) => {
                let (_, t) = s.unpack();
                (0..n).map(|i| t[(i, i)]).collect()
            }
            None => m.clone().schur().unpack().1.diagonal().iter().copied().collect(),
        }
    };
    ev.sort_by(|a, b| cabs(*b).partial_cmp(&cabs(*a)).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Eigenvalues of a real matrix sorted by decreasing modulus.
pub fn real_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<C<T>> {
    eigenvalues(&m.map(|x| C::new(x, T::zero())))
}

/// Eigenvector of `m` for the eigenvalue `lambda` by shifted inverse
/// iteration, normalized to unit Euclidean norm.
pub fn eigenvector<N>(m: &DMatrix<N>, lambda: N) -> Result<DVector<N>>
where
    N: ComplexField + Copy,
    N::RealField: Real,
{
    let n = m.nrows();
    let floor = r::<N::RealField>(1e-300);
    let scale = if lambda.modulus() > floor { lambda.modulus() } else { floor };
    let mut x = DVector::from_element(n, N::one());
    for (k, bump) in [1e-10, 1e-8, 1e-6].iter().enumerate() {
        let shift = lambda + N::from_real(scale * r::<N::RealField>(*bump));
        let a = m - DMatrix::identity(n, n) * shift;
        let lu = a.lu();
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&x) {
                Some(y) => {
                    let norm = y.norm();
                    if !(norm > <N::RealField as num_traits::Zero>::zero()) || !norm.is_finite() {
                        ok = false;
                        break;
                    }
                    x = y.unscale(norm);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(x);
        }
        if k == 2 {
            break;
        }
        x = DVector::from_element(n, N::one());
    }
    Err(Error::NoConvergence("inverse iteration failed".into()))
}

/// Perron data of a nonnegative primitive matrix: spectral radius, right and
/// left positive eigenvectors (each normalized to sum 1).
#[derive(Clone, Debug)]
pub struct Perron<T: Real> {
    /// Spectral radius.
    pub rho: T,
    /// Right eigenvector, `M r = ρ r`.
    pub right: DVector<T>,
    /// Left eigenvector, `l M = ρ l`.
    pub left: DVector<T>,
    /// Modulus of the second eigenvalue.
    pub second: T,
}

/// Computes [`Perron`] data of a nonnegative matrix.
pub fn perron<T: Real>(m: &DMatrix<T>) -> Result<Perron<T>> {
    let ev = real_eigenvalues(m);
    let rho = ev
        .iter()
        .filter(|z| z.im.abs() <= r::<T>(1e-9) * cabs(**z).max(T::one()))
        .map(|z| z.re)
        .fold(T::zero(), |a, b| a.max(b));
    let second = ev
        .iter()
        .map(|z| cabs(*z))
        .filter(|&a| (a - rho).abs() > r::<T>(1e-12) * rho)
        .fold(T::zero(), |a, b| a.max(b));
    let right = positive(eigenvector(m, rho)?)?;
    let left = positive(eigenvector(&m.transpose(), rho)?)?;
    Ok(Perron { rho, right, left, second })
}

fn positive<T: Real>(v: DVector<T>) -> Result<DVector<T>> {
    let s = v.sum();
    let v = v / s;
    let floor = -r::<T>(1e-12) * v.amax();
    if v.iter().any(|&x| x < floor) {
        return Err(Error::NegativeEigenfunction);
    }
    Ok(v.map(|x| x.max(T::zero())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perron_of_golden_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0_f64, 1.0, 1.0, 0.0]);
        let p = perron(&m).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p.rho - phi).abs() < 1e-14);
        assert!((p.second - 1.0 / phi).abs() < 1e-12);
        let res = &m * &p.right - &p.right * p.rho;
        assert!(res.norm() < 1e-14);
    }

    #[test]
    fn complex_eigenvalues_sorted() {
        let m = DMatrix::from_row_slice(2, 2, &[C::new(0.0_f64, 1.0), C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.5, 0.0)]);
        let ev = eigenvalues(&m);
        assert!((ev[0] - C::new(0.0, 1.0)).norm() < 1e-14);
        assert!((ev[1] - C::new(0.5, 0.0)).norm() < 1e-14);
        let v = eigenvector(&m, ev[0]).unwrap();
        assert!((&m * &v - &v * ev[0]).norm() < 1e-12);
    }
}
