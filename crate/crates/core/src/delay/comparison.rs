use crate::error::{Error, Result};

/// Right-hand side of the comparison lemma
/// `y(t) <= y0 e^{int k} + int e^{int_s^t k} w(s) ds`
/// at every grid time, by trapezoidal quadrature.
///
/// The integral term is accumulated recursively,
/// `I_{i+1} = e^{dK} I_i + h/2 (e^{dK} w_i + w_{i+1})`, which stays bounded
/// for strongly negative `k`.
pub fn comparison_bound(y0: f64, k: &[f64], w: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if k.len() != grid.len() || w.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "grid has {} points, k has {}, w has {}",
            grid.len(),
            k.len(),
            w.len()
        )));
    }
    if grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::GridMismatch("grid must be strictly increasing".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    if grid.is_empty() {
        return Ok(out);
    }
    let (mut big_k, mut integral) = (0.0, 0.0);
    out.push(y0);
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        let dk = 0.5 * h * (k[i] + k[i + 1]);
        let e = dk.exp();
        big_k += dk;
        integral = e * integral + 0.5 * h * (e * w[i] + w[i + 1]);
        out.push(y0 * big_k.exp() + integral);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 * h).collect()
    }

    #[test]
    fn trivial_coefficients() {
        let g = grid(0.01, 100);
        let z = vec![0.0; g.len()];
        let one = vec![1.0; g.len()];
        assert!(comparison_bound(2.5, &z, &z, &g).unwrap().iter().all(|&v| v == 2.5));
        let t = comparison_bound(0.0, &z, &one, &g).unwrap();
        for (a, b) in t.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_coefficients_match_closed_form() {
        let (c, b, y0, h) = (1.5, 0.7, 2.0, 1e-3);
        let g = grid(h, 5000);
        let k = vec![-c; g.len()];
        let w = vec![b; g.len()];
        let y = comparison_bound(y0, &k, &w, &g).unwrap();
        for (v, &t) in y.iter().zip(&g) {
            let exact = y0 * (-c * t).exp() + b / c * (1.0 - (-c * t).exp());
            assert!((v - exact).abs() < 1e-6, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let g = grid(0.1, 10);
        assert!(matches!(
            comparison_bound(0.0, &[0.0; 3], &vec![0.0; g.len()], &g),
            Err(Error::GridMismatch(_))
        ));
    }
}
