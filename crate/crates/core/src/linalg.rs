//! Small numerical kernels shared across modules: Hermitian eigensolves,
//! PSD square roots, Uhlmann fidelity, Gauss-Legendre nodes and the
//! orthogonal-polynomial recurrences used by the Fock-basis kernels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Returns `(m + m†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of the Hermitian part of `m`; eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitian_eigen(m).0[0]
}

pub fn max_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (values, _) = hermitian_eigen(m);
    values[values.len() - 1]
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let s = f(v);
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * vectors.adjoint()
}

/// Square root of a PSD matrix; small negative eigenvalues are clipped to 0.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_map(m, |v| v.max(0.0).sqrt())
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))^2` for PSD `a`, `b`.
pub fn uhlmann_fidelity(a: &CMatrix, b: &CMatrix) -> f64 {
    // Rank-one inputs reduce to an expectation value, which avoids square
    // roots of round-off eigenvalues.
    for (p, q) in [(a, b), (b, a)] {
        let (values, vectors) = hermitian_eigen(p);
        let n = values.len();
        let top = values[n - 1];
        let rest: f64 = values.iter().take(n - 1).map(|v| v.abs()).sum();
        if rest <= 1e-13 * top.abs() {
            let v = vectors.column(n - 1);
            return top * (v.adjoint() * q * v)[(0, 0)].re;
        }
    }
    let sa = psd_sqrt(a);
    let inner = &sa * b * &sa;
    let (values, _) = hermitian_eigen(&inner);
    let root_sum: f64 = values.iter().map(|&v| v.max(0.0).sqrt()).sum();
    root_sum * root_sum
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(order, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Normalized Hermite functions `psi_0(x) ..= psi_{n_max}(x)` in the
/// convention `x = (a + a†)/sqrt(2)`.
pub fn hermite_functions(x: f64, n_max: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n_max + 1);
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    psi.push(psi0);
    if n_max >= 1 {
        psi.push(std::f64::consts::SQRT_2 * x * psi0);
    }
    for n in 1..n_max {
        let nf = n as f64;
        let next = (std::f64::consts::SQRT_2 * x * psi[n] - nf.sqrt() * psi[n - 1]) / (nf + 1.0).sqrt();
        psi.push(next);
    }
    psi
}

/// Generalized Laguerre polynomial `L_n^{(alpha)}(x)`.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut l0 = 1.0;
    let mut l1 = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let l2 = ((2.0 * kf + 1.0 + alpha - x) * l1 - (kf + alpha) * l0) / (kf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}
