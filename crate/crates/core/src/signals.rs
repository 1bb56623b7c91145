//! Uniform time grids, multi-site complex signals, two-time kernels and the
//! frequency split `f = f^(+) + f^(-)`.
//!
//! Sign convention: `f_w = sum_t e^{i w t} f(t) dt`, so a component
//! `e^{-i w t}` with `w > 0` is frequency-positive. On the periodic DFT grid
//! those components live in bins `k > n/2`. The zero bin (and the Nyquist bin
//! for even `n`) is shared half-and-half between the two parts.

use std::io::Write;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::linalg::{c, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

pub fn make_grid(t0: f64, dt: f64, n: usize) -> Result<TimeGrid> {
    ensure(dt > 0.0 && dt.is_finite(), || format!("time step must be positive, got {dt}"))?;
    ensure(n >= 2, || format!("grid needs at least 2 samples, got {n}"))?;
    ensure(t0.is_finite(), || "non-finite time origin".into())?;
    Ok(TimeGrid { t0, dt, n })
}

impl TimeGrid {
    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.t(k)).collect()
    }

    /// Window length `n dt` (the period of the DFT extension).
    pub fn period(&self) -> f64 {
        self.n as f64 * self.dt
    }

    /// Sample index of time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let k = x.round();
        if (x - k).abs() < 1e-6 && k >= 0.0 && (k as usize) < self.n {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n == other.n
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
    }

    /// Nearest frequency whose period divides the window, never the zero bin.
    pub fn commensurate(&self, omega: f64) -> f64 {
        let p = self.period();
        let m = (p * omega / (2.0 * std::f64::consts::PI)).round().max(1.0);
        2.0 * std::f64::consts::PI * m / p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub grid: TimeGrid,
    pub sites: usize,
    /// Row-major `(site, sample)`.
    pub values: Vec<C64>,
}

impl Signal {
    pub fn zeros(grid: TimeGrid, sites: usize) -> Self {
        Signal { grid, sites, values: vec![c(0.0, 0.0); sites * grid.n] }
    }

    pub fn from_fn(grid: TimeGrid, sites: usize, f: impl Fn(usize, f64) -> C64) -> Self {
        let mut values = Vec::with_capacity(sites * grid.n);
        for x in 0..sites {
            for k in 0..grid.n {
                values.push(f(x, grid.t(k)));
            }
        }
        Signal { grid, sites, values }
    }

    pub fn from_real(grid: TimeGrid, sites: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        Self::from_fn(grid, sites, |x, t| c(f(x, t), 0.0))
    }

    pub fn from_samples(grid: TimeGrid, samples: Vec<C64>) -> Result<Self> {
        ensure(samples.len().is_multiple_of(grid.n) && !samples.is_empty(), || {
            format!("{} samples do not fill sites x {}", samples.len(), grid.n)
        })?;
        Ok(Signal { grid, sites: samples.len() / grid.n, values: samples })
    }

    pub fn site(&self, x: usize) -> &[C64] {
        &self.values[x * self.grid.n..(x + 1) * self.grid.n]
    }

    pub fn site_mut(&mut self, x: usize) -> &mut [C64] {
        let n = self.grid.n;
        &mut self.values[x * n..(x + 1) * n]
    }

    pub fn at(&self, x: usize, k: usize) -> C64 {
        self.values[x * self.grid.n + k]
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|z| z.im.abs() <= tol)
    }

    pub fn conj(&self) -> Signal {
        Signal { values: self.values.iter().map(|z| z.conj()).collect(), ..self.clone() }
    }

    pub fn scale(&self, s: C64) -> Signal {
        Signal { values: self.values.iter().map(|z| z * s).collect(), ..self.clone() }
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        check_compatible(self, other)?;
        Ok(Signal {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.add(&other.scale(c(-1.0, 0.0)))
    }

    pub fn max_abs_diff(&self, other: &Signal) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "site,t,re,im")?;
        for x in 0..self.sites {
            for k in 0..self.grid.n {
                let z = self.at(x, k);
                writeln!(w, "{},{:.12e},{:.15e},{:.15e}", x, self.grid.t(k), z.re, z.im)?;
            }
        }
        Ok(())
    }
}

fn check_compatible(a: &Signal, b: &Signal) -> Result<()> {
    ensure(a.grid.same_as(&b.grid), || "signals live on different grids".into())?;
    ensure(a.sites == b.sites, || format!("site counts differ: {} vs {}", a.sites, b.sites))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Kernel `K(x, x', t - t')` tabulated on lags `-(n-1) ..= n-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeKernel {
    pub grid: TimeGrid,
    pub sites: usize,
    /// Index `((x * sites + x2) * (2n - 1)) + lag + n - 1`.
    pub values: Vec<C64>,
    pub retarded: bool,
}

impl TwoTimeKernel {
    pub fn from_fn(
        grid: TimeGrid,
        sites: usize,
        retarded: bool,
        f: impl Fn(usize, usize, i64) -> C64,
    ) -> Self {
        let n = grid.n as i64;
        let mut values = Vec::with_capacity(sites * sites * (2 * grid.n - 1));
        for x in 0..sites {
            for x2 in 0..sites {
                for lag in -(n - 1)..n {
                    values.push(f(x, x2, lag));
                }
            }
        }
        TwoTimeKernel { grid, sites, values, retarded }
    }

    pub fn lags(&self) -> usize {
        2 * self.grid.n - 1
    }

    pub fn get(&self, x: usize, x2: usize, lag: i64) -> C64 {
        let n = self.grid.n as i64;
        if lag <= -n || lag >= n {
            return c(0.0, 0.0);
        }
        self.values[(x * self.sites + x2) * self.lags() + (lag + n - 1) as usize]
    }

    fn row(&self, x: usize, x2: usize) -> &[C64] {
        let l = self.lags();
        let s = (x * self.sites + x2) * l;
        &self.values[s..s + l]
    }

    /// `delta(t - t')` on the grid: weight `1/dt` at lag zero.
    pub fn identity(grid: TimeGrid, sites: usize) -> Self {
        let w = 1.0 / grid.dt;
        Self::from_fn(grid, sites, false, |x, x2, lag| {
            if x == x2 && lag == 0 {
                c(w, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    /// Largest magnitude found at negative lags.
    pub fn acausal_mass(&self) -> f64 {
        let n = self.grid.n as i64;
        let mut m: f64 = 0.0;
        for x in 0..self.sites {
            for x2 in 0..self.sites {
                for lag in -(n - 1)..0 {
                    m = m.max(self.get(x, x2, lag).norm());
                }
            }
        }
        m
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "site,site2,lag,re,im")?;
        let n = self.grid.n as i64;
        for x in 0..self.sites {
            for x2 in 0..self.sites {
                for lag in -(n - 1)..n {
                    let z = self.get(x, x2, lag);
                    writeln!(w, "{},{},{},{:.15e},{:.15e}", x, x2, lag, z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// DFT-bin mask selecting one frequency part. Bins `k > n/2` carry
/// positive physical frequency.
pub fn freq_mask(n: usize, sign: Sign) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                0.5
            } else {
                let positive = k > n / 2;
                match (sign, positive) {
                    (Sign::Plus, true) | (Sign::Minus, false) => 1.0,
                    _ => 0.0,
                }
            }
        })
        .collect()
}

pub fn fft_inplace(buf: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    plan.process(buf);
    if inverse {
        let s = 1.0 / buf.len() as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }
}

/// Applies a bin mask to one periodic sample row.
pub(crate) fn mask_row(row: &[C64], mask: &[f64]) -> Vec<C64> {
    let mut buf = row.to_vec();
    fft_inplace(&mut buf, false);
    for (z, m) in buf.iter_mut().zip(mask) {
        *z *= *m;
    }
    fft_inplace(&mut buf, true);
    buf
}

pub fn freq_split(f: &Signal) -> (Signal, Signal) {
    let n = f.grid.n;
    let mp = freq_mask(n, Sign::Plus);
    let mut plus = f.clone();
    let mut neg = f.clone();
    for x in 0..f.sites {
        let p = mask_row(f.site(x), &mp);
        for k in 0..n {
            plus.site_mut(x)[k] = p[k];
            // completeness holds exactly at the mask level; the remainder
            // keeps f = f+ + f- free of rounding drift
            neg.site_mut(x)[k] = f.at(x, k) - p[k];
        }
    }
    (plus, neg)
}

/// Periodic split kernel `p(l)`, `l = 0..n`, such that
/// `f^(sign)(t_k) = sum_l p(k - l mod n) f(t_l)` (no `dt` folded in).
pub fn split_weights(n: usize, sign: Sign) -> Vec<C64> {
    let mut buf: Vec<C64> = freq_mask(n, sign).into_iter().map(|m| c(m, 0.0)).collect();
    fft_inplace(&mut buf, true);
    buf
}

/// `delta^(sign)` tabulated on all lags, including the `1/dt` density factor.
pub fn freq_kernel(grid: TimeGrid, sign: Sign) -> TwoTimeKernel {
    let n = grid.n as i64;
    let p = split_weights(grid.n, sign);
    let inv = 1.0 / grid.dt;
    TwoTimeKernel::from_fn(grid, 1, false, |_, _, lag| p[lag.rem_euclid(n) as usize] * inv)
}

pub fn pair(f: &Signal, g: &Signal) -> Result<C64> {
    check_compatible(f, g)?;
    let s: C64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(s * f.grid.dt)
}

pub fn pair_kernel(f: &Signal, k: &TwoTimeKernel, g: &Signal) -> Result<C64> {
    let kg = kernel_apply(k, g, Side::Left)?;
    pair(f, &kg)
}

/// Linear (non-periodic) convolution `out[t] = sum_s row[t - s + n - 1] g[s]`
/// where `row` holds a lag table of length `2n - 1`.
fn lag_convolve(row: &[C64], g: &[C64]) -> Vec<C64> {
    let n = g.len();
    let len = (3 * n - 2).next_power_of_two();
    let mut a = vec![c(0.0, 0.0); len];
    let mut b = vec![c(0.0, 0.0); len];
    a[..row.len()].copy_from_slice(row);
    b[..n].copy_from_slice(g);
    fft_inplace(&mut a, false);
    fft_inplace(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    fft_inplace(&mut a, true);
    a[n - 1..2 * n - 1].to_vec()
}

/// `Kg` (left) or `gK` (right) with `dt` weighting.
pub fn kernel_apply(k: &TwoTimeKernel, g: &Signal, side: Side) -> Result<Signal> {
    ensure(k.grid.same_as(&g.grid), || "kernel and signal grids differ".into())?;
    ensure(k.sites == g.sites, || format!("kernel has {} sites, signal {}", k.sites, g.sites))?;
    let n = g.grid.n;
    let dt = g.grid.dt;
    let mut out = Signal::zeros(g.grid, g.sites);
    for x in 0..g.sites {
        for x2 in 0..g.sites {
            let (row, src) = match side {
                Side::Left => (k.row(x, x2).to_vec(), g.site(x2)),
                Side::Right => {
                    let mut r = k.row(x2, x).to_vec();
                    r.reverse();
                    (r, g.site(x2))
                }
            };
            let conv = lag_convolve(&row, src);
            let dst = out.site_mut(x);
            for t in 0..n {
                dst[t] += conv[t] * dt;
            }
        }
    }
    if k.retarded {
        enforce_causal_support(g, &mut out, side);
    }
    Ok(out)
}

/// FFT round-off leaves ~1e-17 noise before the source support; a retarded
/// kernel must propagate nothing backward, so those samples are zeroed.
fn enforce_causal_support(g: &Signal, out: &mut Signal, side: Side) {
    let n = g.grid.n;
    let first = (0..n).find(|&t| (0..g.sites).any(|x| g.at(x, t) != c(0.0, 0.0)));
    let last = (0..n).rev().find(|&t| (0..g.sites).any(|x| g.at(x, t) != c(0.0, 0.0)));
    for x in 0..out.sites {
        let row = out.site_mut(x);
        match (side, first, last) {
            (_, None, _) => row.iter_mut().for_each(|z| *z = c(0.0, 0.0)),
            (Side::Left, Some(f), _) => row[..f].iter_mut().for_each(|z| *z = c(0.0, 0.0)),
            (Side::Right, _, Some(l)) => row[l + 1..].iter_mut().for_each(|z| *z = c(0.0, 0.0)),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        make_grid(0.0, 0.1, n).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = make_grid(0.0, 0.1, 10).unwrap();
        assert!((g.t(9) - 0.9).abs() < 1e-15);
        let g = make_grid(-1.0, 0.5, 4).unwrap();
        assert_eq!(g.times(), vec![-1.0, -0.5, 0.0, 0.5]);
        assert!(make_grid(0.0, 0.0, 10).is_err());
        assert!(make_grid(0.0, 0.1, 1).is_err());
    }

    #[test]
    fn positive_exponential_is_all_plus() {
        let g = grid(64);
        let w = 2.0 * std::f64::consts::PI * 3.0 / g.period();
        let f = Signal::from_fn(g, 1, |_, t| C64::from_polar(1.0, -w * t));
        let (p, m) = freq_split(&f);
        assert!(p.max_abs_diff(&f) < 1e-12);
        assert!(m.values.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn cosine_splits_into_halves() {
        let g = grid(64);
        let w = 2.0 * std::f64::consts::PI * 5.0 / g.period();
        let f = Signal::from_real(g, 1, |_, t| (w * t).cos());
        let (p, m) = freq_split(&f);
        let ep = Signal::from_fn(g, 1, |_, t| C64::from_polar(0.5, -w * t));
        let em = Signal::from_fn(g, 1, |_, t| C64::from_polar(0.5, w * t));
        assert!(p.max_abs_diff(&ep) < 1e-12);
        assert!(m.max_abs_diff(&em) < 1e-12);
    }

    #[test]
    fn constant_splits_half_half() {
        let g = grid(33);
        let f = Signal::from_fn(g, 1, |_, _| c(2.0, -1.0));
        let (p, m) = freq_split(&f);
        assert!(p.values.iter().all(|z| (z - c(1.0, -0.5)).norm() < 1e-12));
        assert!(m.values.iter().all(|z| (z - c(1.0, -0.5)).norm() < 1e-12));
    }

    #[test]
    fn identity_kernel_examples() {
        let g = make_grid(0.0, 0.1, 10).unwrap();
        let one = Signal::from_real(g, 1, |_, _| 1.0);
        assert!((pair(&one, &one).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        let f = Signal::from_real(g, 1, |_, t| t.sin());
        let h = Signal::from_real(g, 1, |_, t| 1.0 + t * t);
        let id = TwoTimeKernel::identity(g, 1);
        let a = pair_kernel(&f, &id, &h).unwrap();
        let b = pair(&f, &h).unwrap();
        assert!((a - b).norm() < 1e-12);
        assert!(kernel_apply(&id, &h, Side::Left).unwrap().max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn retarded_kernel_has_no_backward_support() {
        let g = grid(40);
        let k = TwoTimeKernel::from_fn(g, 1, true, |_, _, lag| {
            if lag >= 0 {
                c((lag as f64 * 0.3).sin(), 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let mut s = Signal::zeros(g, 1);
        s.site_mut(0)[17] = c(1.0, 0.0);
        let out = kernel_apply(&k, &s, Side::Left).unwrap();
        assert!(out.site(0)[..17].iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn right_application_matches_definition() {
        let g = grid(12);
        let k = TwoTimeKernel::from_fn(g, 2, false, |x, y, lag| {
            c((x + 2 * y) as f64 + 0.1 * lag as f64, 0.05 * (lag * lag) as f64)
        });
        let f = Signal::from_fn(g, 2, |x, t| c(t + x as f64, 1.0 - t));
        let out = kernel_apply(&k, &f, Side::Right).unwrap();
        for x in 0..2 {
            for t in 0..12 {
                let mut s = c(0.0, 0.0);
                for x2 in 0..2 {
                    for t2 in 0..12 {
                        s += f.at(x2, t2) * k.get(x2, x, t2 as i64 - t as i64) * g.dt;
                    }
                }
                assert!((s - out.at(x, t)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn plus_kernel_reproduces_split() {
        let g = grid(50);
        let f = Signal::from_fn(g, 1, |_, t| c((1.3 * t).sin() + t * 0.2, (0.7 * t).cos()));
        let k = freq_kernel(g, Sign::Plus);
        let a = kernel_apply(&k, &f, Side::Left).unwrap();
        assert!(a.max_abs_diff(&freq_split(&f).0) < 1e-12);
    }
}
