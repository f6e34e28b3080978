use std::f64::consts::PI;

use num_complex::Complex64;

use super::matrix::CMatrix;

/// Chebyshev-Lobatto points of degree `n` on `[a, b]`, ascending.
pub fn lobatto_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    (0..=n)
        .map(|j| {
            if j == 0 {
                a
            } else if j == n {
                b
            } else {
                mid - half * (PI * j as f64 / n as f64).cos()
            }
        })
        .collect()
}

/// Chebyshev coefficients of the degree-`n` interpolant through values at
/// [`lobatto_nodes`].
pub fn cheb_coefficients(values: &[CMatrix]) -> Vec<CMatrix> {
    let n = values.len() - 1;
    let (rows, cols) = (values[0].rows(), values[0].cols());
    (0..=n)
        .map(|k| {
            let mut acc = CMatrix::zeros(rows, cols);
            for (j, v) in values.iter().enumerate() {
                // Nodes are ascending, i.e. x_j = -cos(pi j / n).
                let mut w = (PI * (k * j) as f64 / n as f64).cos();
                if k % 2 == 1 {
                    w = -w;
                }
                if j == 0 || j == n {
                    w *= 0.5;
                }
                acc = &acc + &v.scale(Complex64::new(w, 0.0));
            }
            let mut s = 2.0 / n as f64;
            if k == 0 || k == n {
                s *= 0.5;
            }
            acc.scale(Complex64::new(s, 0.0))
        })
        .collect()
}

/// Coefficients of the derivative on an interval of length `len`.
pub fn cheb_derivative(coeffs: &[CMatrix], len: f64) -> Vec<CMatrix> {
    let n = coeffs.len() - 1;
    let (rows, cols) = (coeffs[0].rows(), coeffs[0].cols());
    let mut d = vec![CMatrix::zeros(rows, cols); n + 1];
    if n == 0 {
        return d;
    }
    for k in (0..n).rev() {
        let next = if k + 2 <= n { d[k + 2].clone() } else { CMatrix::zeros(rows, cols) };
        d[k] = &next + &coeffs[k + 1].scale(Complex64::new(2.0 * (k + 1) as f64, 0.0));
    }
    d[0] = d[0].scale(Complex64::new(0.5, 0.0));
    let s = Complex64::new(2.0 / len, 0.0);
    d.iter().map(|c| c.scale(s)).collect()
}

/// Clenshaw evaluation of a Chebyshev series on `[a, b]`.
pub fn cheb_eval(coeffs: &[CMatrix], a: f64, b: f64, x: f64) -> CMatrix {
    let t = (2.0 * x - a - b) / (b - a);
    let (rows, cols) = (coeffs[0].rows(), coeffs[0].cols());
    let mut b1 = CMatrix::zeros(rows, cols);
    let mut b2 = CMatrix::zeros(rows, cols);
    for c in coeffs.iter().skip(1).rev() {
        let next = &(&b1.scale(Complex64::new(2.0 * t, 0.0)) - &b2) + c;
        b2 = b1;
        b1 = next;
    }
    &(&b1.scale(Complex64::new(t, 0.0)) - &b2) + &coeffs[0]
}

/// Largest entry of the last two coefficients relative to the largest overall.
pub fn cheb_tail(coeffs: &[CMatrix]) -> f64 {
    let scale = coeffs.iter().map(|c| c.max_abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let n = coeffs.len();
    coeffs[n.saturating_sub(2)..].iter().map(|c| c.max_abs()).fold(0.0, f64::max) / scale
}

/// Barycentric interpolant through matrix values at [`lobatto_nodes`].
#[derive(Clone, Debug)]
pub struct MatrixInterpolant {
    nodes: Vec<f64>,
    values: Vec<CMatrix>,
}

impl MatrixInterpolant {
    pub fn new(nodes: Vec<f64>, values: Vec<CMatrix>) -> Self {
        Self { nodes, values }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> CMatrix {
        let n = self.nodes.len() - 1;
        let (rows, cols) = (self.values[0].rows(), self.values[0].cols());
        let mut num = CMatrix::zeros(rows, cols);
        let mut den = 0.0;
        for (j, (&xj, v)) in self.nodes.iter().zip(&self.values).enumerate() {
            let dx = x - xj;
            if dx == 0.0 {
                return v.clone();
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                w *= 0.5;
            }
            let w = w / dx;
            num = &num + &v.scale(Complex64::new(w, 0.0));
            den += w;
        }
        num.scale(Complex64::new(1.0 / den, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<CMatrix>) {
        let nodes = lobatto_nodes(a, b, n);
        let vals = nodes.iter().map(|&x| CMatrix::scalar(Complex64::new(f(x), 0.0))).collect();
        (nodes, vals)
    }

    #[test]
    fn series_and_derivative_of_exponential() {
        let (a, b) = (0.5, 2.0);
        let (_, vals) = sample(|x| (1.5 * x).exp(), a, b, 24);
        let c = cheb_coefficients(&vals);
        assert!(cheb_tail(&c) < 1e-13);
        for x in [0.5, 0.9, 1.7, 2.0] {
            let v = cheb_eval(&c, a, b, x)[(0, 0)].re;
            assert!((v - (1.5 * x).exp()).abs() < 1e-12);
            let d = cheb_eval(&cheb_derivative(&c, b - a), a, b, x)[(0, 0)].re;
            assert!((d - 1.5 * (1.5 * x).exp()).abs() < 1e-10, "{d}");
        }
    }

    #[test]
    fn barycentric_matches_function() {
        let (nodes, vals) = sample(|x| (3.0 * x).sin(), -1.0, 1.0, 30);
        let p = MatrixInterpolant::new(nodes, vals);
        for x in [-0.93, 0.0, 0.41, 1.0] {
            assert!((p.eval(x)[(0, 0)].re - (3.0 * x).sin()).abs() < 1e-13);
        }
    }
}
