//! Linear drift matrices for the weak-pinning regime, their exponentially
//! weighted Gram forms, the centre-of-mass corrector and the force
//! surrogate `G_eps`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cutoff, ModelParams, Potential, Smoothing, State4};

/// `A`, `B` act on `y = (q, p0, p1)` with `q = (q0 - q1)/2`; `A_tilde`,
/// `B_tilde` act on `(q0, q1, p0, p1)` for the harmonic case.
#[derive(Clone, Debug)]
pub struct DriftMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
}

pub fn build_matrices(params: &ModelParams) -> DriftMatrices {
    let (al, g) = (params.alpha, params.gamma);
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, -0.5, -2.0 * al, -g, 0.0, 2.0 * al, 0.0, 0.0]);
    let s = (2.0 * g).sqrt();
    let b = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, s * params.t_cold.sqrt(), 0.0, 0.0, s * params.t_hot.sqrt()]);
    // the unit pinning force is kept in the linear part; without it the
    // translation q0 = q1 is a zero mode
    #[rustfmt::skip]
    let a_tilde = DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        -1.0 - al, al, -g, 0.0,
        al, -1.0 - al, 0.0, 0.0,
    ]);
    #[rustfmt::skip]
    let b_tilde = DMatrix::from_row_slice(4, 2, &[
        0.0, 0.0,
        0.0, 0.0,
        s * params.t_cold.sqrt(), 0.0,
        0.0, s * params.t_hot.sqrt(),
    ]);
    DriftMatrices { a, b, a_tilde, b_tilde }
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// `S` with `A^T S + S A + gamma_tilde S = -I`, i.e.
/// `<y, S y> = int_0^inf exp(gamma_tilde t) |exp(At) y|^2 dt`.
#[derive(Clone, Debug)]
pub struct GramForm {
    pub s: DMatrix<f64>,
    pub gamma_tilde: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GramExport {
    pub s: Vec<Vec<f64>>,
    pub gamma_tilde: f64,
    pub residual: f64,
    pub min_eigenvalue: f64,
}

fn sym_index(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            v.push((i, j));
        }
    }
    v
}

fn solve_gram(a: &DMatrix<f64>, gamma_tilde: f64, order: &[usize]) -> Result<GramForm> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParams("drift matrix must be square".into()));
    }
    if !(gamma_tilde > 0.0) {
        return Err(Error::InvalidParams(format!("gamma_tilde must be positive, got {gamma_tilde}")));
    }
    let abscissa = spectral_abscissa(a);
    if !(abscissa < -0.5 * gamma_tilde) {
        return Err(Error::UnstableMatrix(abscissa));
    }
    let base = sym_index(n);
    let m = base.len();
    if order.len() != m {
        return Err(Error::InvalidParams(format!("unknown ordering needs {m} entries")));
    }
    let unknowns: Vec<(usize, usize)> = order.iter().map(|&o| base[o]).collect();
    let col = |i: usize, j: usize| -> usize {
        let key = if i <= j { (i, j) } else { (j, i) };
        unknowns.iter().position(|&u| u == key).unwrap()
    };
    let mut lhs = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (row, &(i, j)) in unknowns.iter().enumerate() {
        for k in 0..n {
            lhs[(row, col(k, j))] += a[(k, i)];
            lhs[(row, col(i, k))] += a[(k, j)];
        }
        lhs[(row, col(i, j))] += gamma_tilde;
        if i == j {
            rhs[row] = -1.0;
        }
    }
    let sol = lhs.lu().solve(&rhs).ok_or_else(|| Error::InvalidParams("singular Lyapunov system".into()))?;
    let mut s = DMatrix::<f64>::zeros(n, n);
    for (idx, &(i, j)) in unknowns.iter().enumerate() {
        s[(i, j)] = sol[idx];
        s[(j, i)] = sol[idx];
    }
    Ok(GramForm { s, gamma_tilde })
}

pub fn build_gram(a: &DMatrix<f64>, gamma_tilde: f64) -> Result<GramForm> {
    let m = a.nrows() * (a.nrows() + 1) / 2;
    solve_gram(a, gamma_tilde, &(0..m).collect::<Vec<_>>())
}

/// Same solve with the symmetric unknowns listed in another order.
pub fn build_gram_permuted(a: &DMatrix<f64>, gamma_tilde: f64, order: &[usize]) -> Result<GramForm> {
    solve_gram(a, gamma_tilde, order)
}

/// `0.9 * 2 |abscissa|`.
pub fn default_gamma_tilde(a: &DMatrix<f64>) -> f64 {
    0.9 * 2.0 * spectral_abscissa(a).abs()
}

impl GramForm {
    pub fn quadratic(&self, y: &[f64]) -> f64 {
        let v = DVector::from_column_slice(y);
        v.dot(&(&self.s * &v))
    }

    /// Frobenius norm of `A^T S + S A + gamma_tilde S + I`.
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        (a.transpose() * &self.s + &self.s * a + &self.s * self.gamma_tilde + DMatrix::<f64>::identity(n, n)).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.s.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn export(&self, a: &DMatrix<f64>) -> GramExport {
        GramExport {
            s: self.s.row_iter().map(|r| r.iter().cloned().collect()).collect(),
            gamma_tilde: self.gamma_tilde,
            residual: self.residual(a),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }
}

/// `y = (q, p0, p1)`.
pub fn displacement_coords(x: &State4) -> [f64; 3] {
    [0.5 * (x.q0 - x.q1), x.p0, x.p1]
}

/// Centre of mass `Q`, fast variables `y` and `Q_hat = Q + <a, y>` with
/// `a = (1, 1/gamma, 1/gamma)`.
pub fn corrector(x: &State4, params: &ModelParams) -> (f64, [f64; 3]) {
    let y = displacement_coords(x);
    let big_q = 0.5 * (x.q0 + x.q1);
    let a = corrector_weights(params);
    (big_q + a[0] * y[0] + a[1] * y[1] + a[2] * y[2], y)
}

pub fn corrector_weights(params: &ModelParams) -> [f64; 3] {
    [1.0, 1.0 / params.gamma, 1.0 / params.gamma]
}

/// Force surrogate: `-q R^{2k-2}` for `|q| <= R`, `-V1'(q)` for `|q| >= 2R`,
/// joined by the quintic cutoff.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GEps {
    pub k: f64,
    pub eps: f64,
    pub r: f64,
    /// Realised constant in `G V1' <= C - V1'^2` and `G^2 <= C + V1'^2`.
    pub c_eps: f64,
    pub sup_derivative: f64,
}

const G_GRID: usize = 20_000;
const G_MAX_DOUBLINGS: u32 = 80;

fn g_raw(q: f64, r: f64, pot: &Potential) -> [f64; 2] {
    // slope -R^{2k-2}: the sign that joins -V1' continuously at |q| = R
    let inner = -r.powf(2.0 * pot.k - 2.0);
    let a = q.abs();
    if a <= r {
        return [q * inner, inner];
    }
    let outer = -pot.dv(q);
    let douter = -pot.d2v(q);
    if a >= 2.0 * r {
        return [outer, douter];
    }
    let [w, dw, _] = cutoff(a / r);
    let dw = dw / r * q.signum();
    let lin = q * inner;
    [w * lin + (1.0 - w) * outer, dw * lin + w * inner - dw * outer + (1.0 - w) * douter]
}

impl GEps {
    /// Smallest power-of-two `R` with `sup |G'| <= eps` on a dense grid.
    pub fn new(eps: f64, k: f64) -> Result<Self> {
        if !(k > 0.5 && k < 1.0) {
            return Err(Error::InvalidParams(format!("G_eps needs 1/2 < k < 1, got {k}")));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
        }
        let pot = Potential::new(k, Smoothing::Regularized)?;
        let mut r = 1.0;
        let mut best = f64::INFINITY;
        for _ in 0..G_MAX_DOUBLINGS {
            let sup = Self::scan(r, &pot).0;
            best = best.min(sup);
            if sup <= eps {
                let c_eps = Self::scan(r, &pot).1;
                return Ok(GEps { k, eps, r, c_eps, sup_derivative: sup });
            }
            r *= 2.0;
        }
        Err(Error::InvalidParams(format!(
            "no R up to 2^{G_MAX_DOUBLINGS} reaches sup|G'| <= {eps} (best {best:.3e})"
        )))
    }

    // (sup |G'|, realised C_eps) over [0, 3R]; both quantities are even in q
    // and the inequalities are exact beyond 2R
    fn scan(r: f64, pot: &Potential) -> (f64, f64) {
        let excess = |q: f64| {
            let [g, _] = g_raw(q, r, pot);
            let v = pot.dv(q);
            (g * v + v * v).max(g * g - v * v)
        };
        let h = 3.0 * r / G_GRID as f64;
        let mut sup: f64 = 0.0;
        let mut c = f64::NEG_INFINITY;
        let mut at = 0.0;
        for i in 0..=G_GRID {
            let q = h * i as f64;
            sup = sup.max(g_raw(q, r, pot)[1].abs());
            let e = excess(q);
            if e > c {
                c = e;
                at = q;
            }
        }
        // the grid maximum sits within one cell of the true one
        let (mut a, mut b) = ((at - h).max(0.0), at + h);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let x = b - gr * (b - a);
            let y = a + gr * (b - a);
            if excess(x) > excess(y) {
                b = y;
            } else {
                a = x;
            }
        }
        (sup, c.max(excess(0.5 * (a + b))).max(0.0))
    }

    fn potential(&self) -> Potential {
        Potential { k: self.k, smoothing: Smoothing::Regularized }
    }

    /// `[G, G']`.
    pub fn eval(&self, q: f64) -> [f64; 2] {
        g_raw(q, self.r, &self.potential())
    }

    /// Largest violation of the two defining inequalities on a grid of
    /// `n` points over `[-4R, 4R]`, given the reported constant.
    pub fn check_inequalities(&self, n: usize) -> f64 {
        let pot = self.potential();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            let q = -4.0 * self.r + 8.0 * self.r * i as f64 / (n - 1) as f64;
            let [g, _] = self.eval(q);
            let v = pot.dv(q);
            worst = worst.max(g * v + v * v - self.c_eps).max(g * g - v * v - self.c_eps);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_drift_gives_identity_gram() {
        let a = -DMatrix::<f64>::identity(3, 3);
        let g = build_gram(&a, 1.0).unwrap();
        assert!((g.s - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn rejects_slow_matrix() {
        let a = -DMatrix::<f64>::identity(2, 2) * 0.1;
        assert!(matches!(build_gram(&a, 1.0), Err(Error::UnstableMatrix(_))));
    }

    #[test]
    fn surrogate_matches_force_far_out() {
        let g = GEps::new(0.1, 0.75).unwrap();
        let pot = Potential::new(0.75, Smoothing::Regularized).unwrap();
        for q in [2.0 * g.r, 3.3 * g.r, -5.0 * g.r] {
            assert_eq!(g.eval(q)[0], -pot.dv(q));
        }
    }
}
