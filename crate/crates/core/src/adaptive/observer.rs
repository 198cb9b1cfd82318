use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Reduced-order observer for `x_2..x_n` from `y = x_1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverConfig {
    pub kappa: Vec<f64>,
    pub b: f64,
    /// `A_e`: first column `-kappa`, ones on the superdiagonal.
    #[serde(skip)]
    pub a_e: DMatrix<f64>,
    /// Solution of `A_e^T P + P A_e + b I = 0`.
    #[serde(skip)]
    pub p: DMatrix<f64>,
    /// `lambda_max(P)`.
    pub sigma_max: f64,
    /// `||P||_F`.
    pub p_frobenius: f64,
    /// `||A_e^T P + P A_e + b I||_max`.
    pub residual: f64,
}

/// The observer error matrix for gains `kappa`.
pub fn observer_matrix(kappa: &[f64]) -> DMatrix<f64> {
    let m = kappa.len();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, 0)] = -kappa[i];
        if i + 1 < m {
            a[(i, i + 1)] += 1.0;
        }
    }
    a
}

/// Solves `A^T P + P A + b I = 0` for symmetric `P` through the vectorized
/// system in the `m(m+1)/2` upper-triangular unknowns.
pub fn solve_lyapunov(a: &DMatrix<f64>, b: f64) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let idx = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * m - i * (i + 1) / 2 + j
    };
    let nu = m * (m + 1) / 2;
    let mut lhs = DMatrix::zeros(nu, nu);
    let mut rhs = DVector::zeros(nu);
    for i in 0..m {
        for j in i..m {
            let row = idx(i, j);
            // (A^T P)_ij = sum_k A_ki P_kj ; (P A)_ij = sum_k P_ik A_kj
            for k in 0..m {
                lhs[(row, idx(k, j))] += a[(k, i)];
                lhs[(row, idx(i, k))] += a[(k, j)];
            }
            if i == j {
                rhs[row] = -b;
            }
        }
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov system".into()))?;
    Ok(DMatrix::from_fn(m, m, |i, j| sol[idx(i, j)]))
}

pub fn design_observer(n: usize, kappa: &[f64], b: f64) -> Result<ObserverConfig> {
    if n < 2 {
        return Err(Error::param("n", "observer needs order >= 2"));
    }
    if kappa.len() != n - 1 {
        return Err(Error::param(
            "kappa",
            format!("expected {} gain(s), got {}", n - 1, kappa.len()),
        ));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("b", format!("must be > 0, got {b}")));
    }
    let a_e = observer_matrix(kappa);
    let eig = a_e.complex_eigenvalues();
    if let Some(l) = eig.iter().find(|l| !(l.re < 0.0)) {
        return Err(Error::Design(format!(
            "observer matrix is not Hurwitz (eigenvalue {l}) for kappa = {kappa:?}"
        )));
    }
    let p = solve_lyapunov(&a_e, b)?;
    let m = n - 1;
    let res = a_e.transpose() * &p + &p * &a_e + DMatrix::identity(m, m) * b;
    let residual = res.amax();
    if p.clone().cholesky().is_none() {
        return Err(Error::Numerical("Lyapunov solution is not positive definite".into()));
    }
    let sigma_max = p.clone().symmetric_eigen().eigenvalues.max();
    let p_frobenius = p.norm();
    Ok(ObserverConfig {
        kappa: kappa.to_vec(),
        b,
        a_e,
        p,
        sigma_max,
        p_frobenius,
        residual,
    })
}

/// Right-hand side of the observer,
/// `xhat_i' = xhat_{i+1} + kappa_{i+1} y - kappa_i (xhat_1 + kappa_1 y)` and
/// `xhat_{n-1}' = u - kappa_{n-1} (xhat_1 + kappa_1 y)`.
pub fn observer_rhs(kappa: &[f64], xhat: &[f64], y: f64, u: f64, out: &mut [f64]) {
    let m = kappa.len();
    let o = xhat[0] + kappa[0] * y;
    for i in 0..m {
        let next = if i + 1 < m { xhat[i + 1] + kappa[i + 1] * y } else { u };
        out[i] = next - kappa[i] * o;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_design() {
        let c = design_observer(2, &[1.0], 2.0).unwrap();
        assert_eq!(c.a_e[(0, 0)], -1.0);
        assert_eq!(c.p[(0, 0)], 1.0);
        assert_eq!(c.sigma_max, 1.0);
    }

    #[test]
    fn unstable_gain_is_rejected() {
        assert!(matches!(design_observer(2, &[-1.0], 2.0), Err(Error::Design(_))));
        assert!(design_observer(2, &[1.0], 0.0).is_err());
        assert!(design_observer(3, &[1.0], 1.0).is_err());
    }

    #[test]
    fn third_order_residual() {
        let c = design_observer(3, &[3.0, 2.0], 2.0).unwrap();
        assert!(c.residual <= 1e-10);
        assert!((c.p[(0, 1)] - c.p[(1, 0)]).abs() == 0.0);
    }

    #[test]
    fn rhs_values() {
        let mut out = [0.0];
        observer_rhs(&[1.0], &[0.1], 0.01, 0.0, &mut out);
        assert!((out[0] + 0.11).abs() < 1e-15);
        let mut out = [0.0; 2];
        observer_rhs(&[3.0, 2.0], &[0.0, 0.0], 0.0, 0.0, &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }
}
