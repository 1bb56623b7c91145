//! Dense complex matrix helpers shared by the propagation code.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(d: usize) -> CMat {
    CMat::zeros(d, d)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

/// Annihilation operator on the Fock levels 0..=cutoff.
pub fn annihilation(cutoff: usize) -> CMat {
    let d = cutoff + 1;
    let mut a = zeros(d);
    for k in 1..d {
        a[(k - 1, k)] = c((k as f64).sqrt(), 0.0);
    }
    a
}

pub fn expm(a: &CMat) -> CMat {
    a.exp()
}

/// `U = exp(-i H dt)` for a (not necessarily Hermitian) generator.
pub fn step_unitary(h: &CMat, dt: f64) -> CMat {
    expm(&(h * c(0.0, -dt)))
}

/// `exp(a) v` by a Taylor series on `s` equal substeps, each of 1-norm at
/// most one.
pub fn expm_action(a: &CMat, v: &CMat) -> CMat {
    let norm = (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = norm.ceil().max(1.0) as usize;
    let scale = 1.0 / s as f64;
    let mut out = v.clone();
    for _ in 0..s {
        let mut term = out.clone();
        let mut acc = out.clone();
        for m in 1..60 {
            term = a * &term * c(scale / m as f64, 0.0);
            acc += &term;
            if max_abs(&term) <= 1e-17 * max_abs(&acc) {
                break;
            }
        }
        out = acc;
    }
    out
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl Csr {
    pub fn from_dense(m: &CMat) -> Self {
        let n = m.nrows();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..n {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.indices[self.indptr[i]..self.indptr[i + 1]].iter().all(|&j| j == i))
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.n)
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1])
                    .find(|&p| self.indices[p] == i)
                    .map_or(C64::new(0.0, 0.0), |p| self.data[p])
            })
            .collect()
    }

    /// `y += w A x`.
    pub fn mul_add(&self, w: C64, x: &CMat, y: &mut CMat) {
        for col in 0..x.ncols() {
            for i in 0..self.n {
                let mut acc = C64::new(0.0, 0.0);
                for p in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.data[p] * x[(self.indices[p], col)];
                }
                y[(i, col)] += w * acc;
            }
        }
    }

    pub fn mul_dense(&self, b: &CMat) -> CMat {
        let mut y = CMat::zeros(self.n, b.ncols());
        self.mul_add(C64::new(1.0, 0.0), b, &mut y);
        y
    }

    /// Adds `|w| * (column sums of |A|)` to `acc`.
    fn add_col_abs(&self, w: f64, acc: &mut [f64]) {
        for (p, &j) in self.indices.iter().enumerate() {
            acc[j] += w * self.data[p].norm();
        }
    }
}

// Largest 1-norm for which the degree-m Taylor polynomial reaches double
// precision, for m = 5, 10, ..., 55.
const TAYLOR_THETA: [f64; 11] = [2.4e-3, 1.4e-1, 6.4e-1, 1.44, 2.42, 3.54, 4.73, 5.97, 7.25, 8.55, 9.87];

/// `exp(A) v` for `A = sum w_p M_p` with sparse parts. A diagonal `A` is
/// applied exactly; otherwise a scaled Taylor series is used.
pub fn expm_action_sparse(parts: &[(C64, &Csr)], v: &CMat) -> CMat {
    let n = v.nrows();
    if parts.iter().all(|(_, m)| m.is_diagonal()) {
        let mut d = vec![C64::new(0.0, 0.0); n];
        for (w, m) in parts {
            for (di, x) in d.iter_mut().zip(m.diagonal()) {
                *di += w * x;
            }
        }
        let mut out = v.clone();
        for i in 0..n {
            let e = d[i].exp();
            for j in 0..v.ncols() {
                out[(i, j)] *= e;
            }
        }
        return out;
    }
    let mut cols = vec![0.0; n];
    for (w, m) in parts {
        m.add_col_abs(w.norm(), &mut cols);
    }
    let norm = cols.iter().cloned().fold(0.0, f64::max);
    let (m, s) = TAYLOR_THETA
        .iter()
        .enumerate()
        .map(|(i, th)| (5 * (i + 1), ((norm / th).ceil() as usize).max(1)))
        .min_by_key(|&(m, s)| m * s)
        .unwrap_or((55, 1));
    let scale = 1.0 / s as f64;
    let mut out = v.clone();
    for _ in 0..s {
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..=m {
            let mut next = CMat::zeros(n, v.ncols());
            for (w, mat) in parts {
                mat.mul_add(w * (scale / k as f64), &term, &mut next);
            }
            term = next;
            acc += &term;
            if max_abs(&term) <= 1e-17 * max_abs(&acc) {
                break;
            }
        }
        out = acc;
    }
    out
}

pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

/// Tr(A B) without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// `m^p` by repeated squaring.
pub fn matrix_power(m: &CMat, mut p: usize) -> CMat {
    let mut result = eye(m.nrows());
    let mut base = m.clone();
    while p > 0 {
        if p & 1 == 1 {
            result = &result * &base;
        }
        p >>= 1;
        if p > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Thermal state of a truncated oscillator with mean occupation `nbar`.
pub fn thermal_state(cutoff: usize, nbar: f64) -> CMat {
    let d = cutoff + 1;
    let mut rho = zeros(d);
    if nbar <= 0.0 {
        rho[(0, 0)] = c(1.0, 0.0);
        return rho;
    }
    let q = nbar / (1.0 + nbar);
    let norm: f64 = (0..d).map(|k| q.powi(k as i32)).sum();
    for k in 0..d {
        rho[(k, k)] = c(q.powi(k as i32) / norm, 0.0);
    }
    rho
}

pub fn projector(d: usize, k: usize) -> CMat {
    let mut p = zeros(d);
    p[(k, k)] = c(1.0, 0.0);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutator_of_ladder_ops_is_unit_below_top_level() {
        let a = annihilation(5);
        let comm = &a * a.adjoint() - a.adjoint() * &a;
        for k in 0..5 {
            assert!((comm[(k, k)] - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn power_matches_repeated_product() {
        let h = CMat::from_fn(3, 3, |i, j| c((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        let u = step_unitary(&(&h + h.adjoint()), 0.3);
        let mut direct = eye(3);
        for _ in 0..13 {
            direct = &direct * &u;
        }
        assert!(max_abs(&(direct - matrix_power(&u, 13))) < 1e-12);
    }

    #[test]
    fn expm_action_matches_dense_exponential() {
        let h = CMat::from_fn(6, 6, |i, j| c(((i * 7 + j * 3) % 5) as f64 * 0.4, (i as f64 - 2.0 * j as f64) * 0.3));
        let v = CMat::from_fn(6, 2, |i, j| c(i as f64 - j as f64, 0.5));
        let a = &h * c(0.0, -0.7);
        assert!(max_abs(&(expm(&a) * &v - expm_action(&a, &v))) < 1e-12);
    }

    #[test]
    fn sparse_action_matches_dense_exponential() {
        let h = CMat::from_fn(8, 8, |i, j| if (i + j) % 3 == 0 { c((i + j) as f64 * 0.3, i as f64 * 0.1) } else { c(0.0, 0.0) });
        let k = CMat::from_fn(8, 8, |i, j| if i == j { c(i as f64, 0.0) } else { c(0.0, 0.0) });
        let v = CMat::from_fn(8, 1, |i, _| c(1.0 / (1.0 + i as f64), 0.2));
        let (hs, ks) = (Csr::from_dense(&h), Csr::from_dense(&k));
        let (w1, w2) = (c(0.0, -2.1), c(0.3, -0.4));
        let dense = expm(&(&h * w1 + &k * w2)) * &v;
        assert!(max_abs(&(dense - expm_action_sparse(&[(w1, &hs), (w2, &ks)], &v))) < 1e-11);
        let diag = expm(&(&k * w2)) * &v;
        assert!(max_abs(&(diag - expm_action_sparse(&[(w2, &ks)], &v))) < 1e-12);
    }

    #[test]
    fn thermal_state_has_unit_trace() {
        let rho = thermal_state(8, 0.7);
        assert!((trace(&rho) - c(1.0, 0.0)).norm() < 1e-14);
    }
}
