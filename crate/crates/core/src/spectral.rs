//! Hermite eigenbasis of the harmonic oscillator `-d²/dx² + x²` truncated at order `N`.
//!
//! Fields are stored as coefficient vectors in the orthonormal Hermite functions
//! `h_0, …, h_N`. Nonlinear functionals are evaluated on a Gauss–Hermite grid whose
//! abscissae are scaled by `1/√2`: quartic products `h_i h_j h_k h_l` carry the weight
//! `e^{-2x²}`, so under this scaling they are integrated exactly once the rule has at
//! least `2N + 1` points. Quadratic products (the Gram matrix) are not polynomial in
//! the scaled variable and converge spectrally instead; the default rule size
//! `⌊5N/2⌋ + 48` keeps them orthonormal to well below `1e-8`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param_err, Error, Result};

/// Largest deviation from the identity tolerated in the quadrature Gram matrix.
pub const GRAM_TOLERANCE: f64 = 1e-8;

/// Truncated Hermite eigenbasis together with its quadrature grid.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    order: usize,
    eigenvalues: Vec<f64>,
    quad_nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    /// Row-major `(order + 1) × n_nodes` table of `h_n(x_j)`.
    basis_table: Vec<f64>,
}

/// Values of a field on the quadrature nodes of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Default quadrature size for a basis of order `n`.
pub fn default_quad_size(n: usize) -> usize {
    5 * n / 2 + 48
}

/// Orthonormal Hermite functions `h_0(x), …, h_{n_max}(x)` by the three-term recurrence
/// `h_{n+1} = x √(2/(n+1)) h_n − √(n/(n+1)) h_{n−1}`.
pub fn hermite_functions(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let h0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(h0);
    if n_max == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * x * h0);
    for n in 1..n_max {
        let nf = n as f64;
        let next = x * (2.0 / (nf + 1.0)).sqrt() * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// Orthonormal Hermite polynomials (no Gaussian factor) `p_0 … p_n` at `y`.
fn hermite_polys(n: usize, y: f64) -> (f64, f64) {
    // returns (p_n(y), p_{n-1}(y))
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let kf = k as f64;
        let next = y * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Gauss–Hermite rule for the weight `e^{-y²}` with `m` points.
///
/// Nodes are the eigenvalues of the Jacobi matrix (off-diagonal `√(k/2)`), polished by
/// Newton steps on the orthonormal polynomial. Returns the nodes in increasing order
/// together with the *function* weights `ω_j e^{y_j²}`, i.e. weights for `∫ f(y) dy`
/// when `f` decays like a Gaussian.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    if m == 0 {
        return (Vec::new(), Vec::new());
    }
    let mf = m as f64;
    let jacobi = nalgebra::DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().cloned().collect();
    nodes.sort_by(f64::total_cmp);
    for z in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, pm1) = hermite_polys(m, *z);
            let dz = p / ((2.0 * mf).sqrt() * pm1);
            if !dz.is_finite() {
                break;
            }
            *z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
    }
    // symmetrize; the middle node of an odd rule is exactly zero
    for i in 0..m / 2 {
        let r = 0.5 * (nodes[m - 1 - i] - nodes[i]);
        nodes[i] = -r;
        nodes[m - 1 - i] = r;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    // weight for ∫ f dy: 1 / (m · h_{m-1}(y)²) with the Hermite *function* h_{m-1}
    let fweights = nodes
        .iter()
        .map(|&y| {
            let hm1 = hermite_functions(m - 1, y)[m - 1];
            1.0 / (mf * hm1 * hm1)
        })
        .collect();
    (nodes, fweights)
}

/// Build the basis of order `n` with a quadrature rule of `quad_size` points.
pub fn build_basis(n: usize, quad_size: usize) -> Result<HermiteBasis> {
    if quad_size < 2 * n + 2 {
        return param_err(format!(
            "quad_size {quad_size} too small for order {n} (need at least {})",
            2 * n + 2
        ));
    }
    let (y, fw) = gauss_hermite(quad_size);
    let quad_nodes: Vec<f64> = y.iter().map(|v| v / std::f64::consts::SQRT_2).collect();
    let quad_weights: Vec<f64> = fw.iter().map(|w| w / std::f64::consts::SQRT_2).collect();
    let mut basis_table = vec![0.0; (n + 1) * quad_size];
    for (j, &x) in quad_nodes.iter().enumerate() {
        for (k, v) in hermite_functions(n, x).into_iter().enumerate() {
            basis_table[k * quad_size + j] = v;
        }
    }
    let eigenvalues = (0..=n).map(|k| (1.0 + 2.0 * k as f64).sqrt()).collect();
    let basis = HermiteBasis {
        order: n,
        eigenvalues,
        quad_nodes,
        quad_weights,
        basis_table,
    };
    let dev = basis.gram_deviation();
    if !(dev <= GRAM_TOLERANCE) {
        return param_err(format!(
            "quadrature of {quad_size} points leaves Gram deviation {dev:.2e} at order {n}"
        ));
    }
    Ok(basis)
}

impl HermiteBasis {
    /// Basis of order `n` with the default quadrature size.
    pub fn new(n: usize) -> Result<Self> {
        build_basis(n, default_quad_size(n))
    }

    /// Highest retained mode index `N`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of modes `N + 1`.
    pub fn dim(&self) -> usize {
        self.order + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.quad_nodes.len()
    }

    /// `λ_n = √(1 + 2n)`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `λ_n²`.
    pub fn eigenvalue_sq(&self, n: usize) -> f64 {
        1.0 + 2.0 * n as f64
    }

    pub fn quad_nodes(&self) -> &[f64] {
        &self.quad_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Row `n` of the basis table: `h_n` on the quadrature nodes.
    pub fn basis_row(&self, n: usize) -> &[f64] {
        let j = self.n_nodes();
        &self.basis_table[n * j..(n + 1) * j]
    }

    /// `B[n][j] = h_n(x_j)`.
    pub fn basis_value(&self, n: usize, j: usize) -> f64 {
        self.basis_table[n * self.n_nodes() + j]
    }

    /// Largest entrywise deviation of the quadrature Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in 0..self.dim() {
            let rm = self.basis_row(m);
            for n in m..self.dim() {
                let rn = self.basis_row(n);
                let g: f64 = self
                    .quad_weights
                    .iter()
                    .zip(rm.iter().zip(rn))
                    .map(|(w, (a, b))| w * a * b)
                    .sum();
                let target = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    fn check_len(&self, coeffs: &[Complex64]) -> Result<()> {
        if coeffs.len() != self.dim() {
            return param_err(format!(
                "coefficient vector has length {}, basis expects {}",
                coeffs.len(),
                self.dim()
            ));
        }
        Ok(())
    }

    /// Writes `Σ_n c_n h_n(x_j)` into `out`. Lengths are not checked.
    pub fn synthesize_into(&self, coeffs: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (n, c) in coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(self.basis_row(n)) {
                o.re += c.re * b;
                o.im += c.im * b;
            }
        }
    }

    /// Writes `Σ_j w_j h_n(x_j) g_j` into `out`. Lengths are not checked.
    pub fn analyze_into(&self, values: &[Complex64], out: &mut [Complex64]) {
        for (n, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for ((w, b), g) in self.quad_weights.iter().zip(self.basis_row(n)).zip(values) {
                acc += g * (w * b);
            }
            *o = acc;
        }
    }

    /// `∫ |φ|^p dx` on the grid, from grid values.
    pub fn grid_lp_power(&self, values: &[Complex64], p: f64) -> f64 {
        if p == 4.0 {
            return self
                .quad_weights
                .iter()
                .zip(values)
                .map(|(w, v)| {
                    let a = v.norm_sqr();
                    w * a * a
                })
                .sum();
        }
        if p == 2.0 {
            return self
                .quad_weights
                .iter()
                .zip(values)
                .map(|(w, v)| w * v.norm_sqr())
                .sum();
        }
        self.quad_weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v.norm().powf(p))
            .sum()
    }

    /// `‖φ‖⁴_{L⁴}` (exact on `E_N`).
    pub fn quartic(&self, coeffs: &[Complex64]) -> f64 {
        let mut grid = vec![Complex64::new(0.0, 0.0); self.n_nodes()];
        self.synthesize_into(coeffs, &mut grid);
        self.grid_lp_power(&grid, 4.0)
    }
}

/// Grid values `Σ_n c_n h_n(x_j)`.
pub fn synthesize(basis: &HermiteBasis, coeffs: &[Complex64]) -> Result<GridFunction> {
    basis.check_len(coeffs)?;
    let mut g = GridFunction::zeros(basis.n_nodes());
    basis.synthesize_into(coeffs, &mut g.values);
    Ok(g)
}

/// Coefficients `Σ_j w_j h_n(x_j) g(x_j)`; the left inverse of [`synthesize`] on `E_N`.
pub fn analyze(basis: &HermiteBasis, g: &GridFunction) -> Result<Vec<Complex64>> {
    if g.len() != basis.n_nodes() {
        return param_err(format!(
            "grid function has {} values, basis has {} nodes",
            g.len(),
            basis.n_nodes()
        ));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); basis.dim()];
    basis.analyze_into(&g.values, &mut out);
    Ok(out)
}

/// Harmonic Sobolev norm `(Σ λ_n^{2s} |c_n|²)^{1/2}`.
pub fn norm_sobolev(basis: &HermiteBasis, coeffs: &[Complex64], s: f64) -> Result<f64> {
    basis.check_len(coeffs)?;
    let sum: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let l2 = basis.eigenvalue_sq(n);
            let weight = if s == 1.0 {
                l2
            } else if s == 0.0 {
                1.0
            } else {
                l2.powf(s)
            };
            weight * c.norm_sqr()
        })
        .sum();
    Ok(sum.sqrt())
}

/// `L^p` norm on the refined grid.
///
/// `p = 4` is exact on `E_N`; `p = 2` agrees with the coefficient norm to the Gram
/// tolerance. Other exponents are quadrature approximations.
pub fn norm_lp(basis: &HermiteBasis, coeffs: &[Complex64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return param_err(format!("L^p norm needs p >= 1, got {p}"));
    }
    let g = synthesize(basis, coeffs)?;
    Ok(basis.grid_lp_power(&g.values, p).powf(1.0 / p))
}

/// `‖φ‖⁴_{L⁴} / (‖φ‖_{ℋ¹} ‖φ‖³_{L²})`, the quartic Gagliardo–Nirenberg ratio.
pub fn gns_ratio(basis: &HermiteBasis, coeffs: &[Complex64]) -> Result<f64> {
    basis.check_len(coeffs)?;
    let l2 = norm_sobolev(basis, coeffs, 0.0)?;
    if l2 == 0.0 {
        return Err(Error::Domain("GNS ratio of the zero field".into()));
    }
    let h1 = norm_sobolev(basis, coeffs, 1.0)?;
    Ok(basis.quartic(coeffs) / (h1 * l2.powi(3)))
}

/// Empirical GNS constant: the largest ratio over `probes` random fields, refined
/// by gradient ascent from the best few of them.
pub fn gns_constant<R: Rng + ?Sized>(basis: &HermiteBasis, probes: usize, rng: &mut R) -> f64 {
    let dim = basis.dim();
    let mut scored: Vec<(f64, Vec<Complex64>)> = Vec::with_capacity(probes);
    for k in 0..probes {
        let c = random_probe(basis, k, rng);
        if let Ok(r) = gns_ratio(basis, &c) {
            scored.push((r, c));
        }
    }
    // h_0 is always a candidate
    let mut e0 = vec![Complex64::new(0.0, 0.0); dim];
    e0[0] = Complex64::new(1.0, 0.0);
    scored.push((gns_ratio(basis, &e0).unwrap_or(0.0), e0));
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored.first().map(|s| s.0).unwrap_or(0.0);
    for (_, start) in scored.iter().take(4) {
        best = best.max(ascend_gns(basis, start.clone(), 400));
    }
    best
}

/// Random field with a randomly chosen spectral decay `λ_n^{-s}`, `s ∈ {0, 1, 2}`.
pub(crate) fn random_probe<R: Rng + ?Sized>(
    basis: &HermiteBasis,
    k: usize,
    rng: &mut R,
) -> Vec<Complex64> {
    let s = (k % 3) as f64;
    let real_only = k % 2 == 0;
    (0..basis.dim())
        .map(|n| {
            let scale = basis.eigenvalue_sq(n).powf(-0.5 * s);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = if real_only { 0.0 } else { rng.sample(StandardNormal) };
            Complex64::new(re, im) * scale
        })
        .collect()
}

/// Gradient ascent of `log R` on the unit `L²` sphere with backtracking.
pub(crate) fn ascend_gns(basis: &HermiteBasis, mut c: Vec<Complex64>, iters: usize) -> f64 {
    let dim = basis.dim();
    let mut grid = vec![Complex64::new(0.0, 0.0); basis.n_nodes()];
    let mut nl = vec![Complex64::new(0.0, 0.0); dim];
    normalize(&mut c);
    let mut value = gns_ratio(basis, &c).unwrap_or(0.0);
    let mut step = 0.1;
    for _ in 0..iters {
        basis.synthesize_into(&c, &mut grid);
        let l4 = basis.grid_lp_power(&grid, 4.0);
        grid.iter_mut().for_each(|v| *v *= v.norm_sqr());
        basis.analyze_into(&grid, &mut nl);
        let a: f64 = c
            .iter()
            .enumerate()
            .map(|(n, v)| basis.eigenvalue_sq(n) * v.norm_sqr())
            .sum();
        let grad: Vec<Complex64> = c
            .iter()
            .enumerate()
            .map(|(n, v)| nl[n] * (4.0 / l4) - v * (basis.eigenvalue_sq(n) / a) - v * 3.0)
            .collect();
        let gnorm = grad.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            break;
        }
        let mut improved = false;
        while step > 1e-10 {
            let mut trial: Vec<Complex64> =
                c.iter().zip(&grad).map(|(v, g)| v + g * (step / gnorm)).collect();
            normalize(&mut trial);
            let r = gns_ratio(basis, &trial).unwrap_or(0.0);
            if r > value {
                c = trial;
                value = r;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    value
}

fn normalize(c: &mut [Complex64]) {
    let n = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        c.iter_mut().for_each(|v| *v /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, k: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[k] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn eigenvalues_of_order_two() {
        let b = HermiteBasis::new(2).unwrap();
        let ev = b.eigenvalues();
        assert_eq!(ev[0], 1.0);
        assert!((ev[1] - 3f64.sqrt()).abs() < 1e-15);
        assert!((ev[2] - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn order_zero_has_single_mode() {
        let b = HermiteBasis::new(0).unwrap();
        assert_eq!(b.dim(), 1);
        assert_eq!(b.eigenvalues(), &[1.0]);
    }

    #[test]
    fn undersized_quadrature_is_rejected() {
        assert!(matches!(build_basis(10, 21), Err(Error::Parameter(_))));
    }

    #[test]
    fn gauss_hermite_small_rule() {
        // 2-point rule: nodes ±1/√2, ω = √π/2
        let (y, fw) = gauss_hermite(2);
        assert!((y[1] - 0.5f64.sqrt()).abs() < 1e-14);
        let w = fw[1] * (-y[1] * y[1]).exp();
        assert!((w - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn weights_positive_nodes_increasing() {
        let b = HermiteBasis::new(20).unwrap();
        assert!(b.quad_weights().iter().all(|&w| w > 0.0));
        assert!(b.quad_nodes().windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn h0_at_origin() {
        let b = HermiteBasis::new(4).unwrap();
        assert!((hermite_functions(0, 0.0)[0] - 0.7511255444649425).abs() < 1e-15);
        let g = synthesize(&b, &unit(5, 0)).unwrap();
        for (j, x) in b.quad_nodes().iter().enumerate() {
            let exact = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
            assert!((g.values[j].re - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn sobolev_examples() {
        let b = HermiteBasis::new(1).unwrap();
        let c = vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!((norm_sobolev(&b, &c, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let b = HermiteBasis::new(6).unwrap();
        for n in 0..=6 {
            let v = norm_sobolev(&b, &unit(7, n), 0.7).unwrap();
            assert!((v - b.eigenvalues()[n].powf(0.7)).abs() < 1e-13);
        }
    }

    #[test]
    fn lp_rejects_small_exponent() {
        let b = HermiteBasis::new(3).unwrap();
        assert!(norm_lp(&b, &unit(4, 0), 0.5).is_err());
    }

    #[test]
    fn quartic_norm_of_h0() {
        let b = HermiteBasis::new(8).unwrap();
        let q = norm_lp(&b, &unit(9, 0), 4.0).unwrap().powi(4);
        let exact = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((q - exact).abs() < 1e-13);
        assert!((gns_ratio(&b, &unit(9, 0)).unwrap() - exact).abs() < 1e-13);
    }

    #[test]
    fn gns_of_zero_field_is_domain_error() {
        let b = HermiteBasis::new(3).unwrap();
        let z = vec![Complex64::new(0.0, 0.0); 4];
        assert!(matches!(gns_ratio(&b, &z), Err(Error::Domain(_))));
    }

    #[test]
    fn length_mismatch_is_parameter_error() {
        let b = HermiteBasis::new(3).unwrap();
        assert!(synthesize(&b, &unit(3, 0)).is_err());
        assert!(analyze(&b, &GridFunction::zeros(3)).is_err());
    }
}
