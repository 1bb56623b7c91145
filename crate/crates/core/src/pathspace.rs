//! Path lattices, distributions over them and their characteristic
//! functionals.
//!
//! A lattice has one axis per slice and component. Axis `a` carries values
//! `offset_a + j step_a`, `j < B`; its dual axis carries
//! `zeta_k = 2 pi (k - B/2) / (B step_a dt)`, so `zeta = 0` sits at `k = B/2`.
//! Tables are row-major with axis 0 slowest. Distributions are densities:
//! probability mass is `value * prod step`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::hilbert::{generating_from_branches, BranchSources, OpId, SystemModel, Term};
use crate::linalg::{c, C64};
use crate::signals::{freq_split, Signal};

pub const DEFAULT_MAX_POINTS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub offset: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub slices: usize,
    /// Lattice points per axis (power of two).
    pub count: usize,
    /// Slice width entering the pairing `dt sum zeta_t J_t`.
    pub dt: f64,
    pub axes: Vec<Axis>,
}

impl PathGrid {
    pub fn new(slices: usize, count: usize, dt: f64, axes: Vec<Axis>) -> Result<Self> {
        ensure(slices >= 1, || "need at least one slice".into())?;
        ensure(count >= 2 && count.is_power_of_two(), || format!("lattice count {count} must be a power of two >= 2"))?;
        ensure(dt > 0.0, || "slice width must be positive".into())?;
        ensure(!axes.is_empty() && axes.len().is_multiple_of(slices), || "axis count must be a multiple of the slice count".into())?;
        ensure(axes.iter().all(|a| a.step > 0.0), || "lattice steps must be positive".into())?;
        let total = (count as f64).powi(axes.len() as i32);
        ensure(total <= DEFAULT_MAX_POINTS as f64, || format!("lattice of {total} points exceeds bound"))?;
        Ok(PathGrid { slices, count, dt, axes })
    }

    /// Same lattice `offset + j step` on every one of `slices` axes.
    pub fn uniform(slices: usize, count: usize, dt: f64, offset: f64, step: f64) -> Result<Self> {
        Self::new(slices, count, dt, vec![Axis { offset, step }; slices])
    }

    /// Lattice centred on zero with half-width `half`.
    pub fn centred(slices: usize, count: usize, dt: f64, half: f64) -> Result<Self> {
        let step = 2.0 * half / count as f64;
        Self::uniform(slices, count, dt, -half, step)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.count.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }

    pub fn value(&self, axis: usize, j: usize) -> f64 {
        self.axes[axis].offset + j as f64 * self.axes[axis].step
    }

    pub fn zeta(&self, axis: usize, k: usize) -> f64 {
        let b = self.count as f64;
        std::f64::consts::TAU * (k as f64 - b / 2.0) / (b * self.axes[axis].step * self.dt)
    }

    /// Multi-index of a flat position.
    pub fn unflatten(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            idx[a] = i % self.count;
            i /= self.count;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &j| acc * self.count + j)
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.unflatten(i).iter().enumerate().map(|(a, &j)| self.value(a, j)).collect()
    }

    pub fn zeta_point(&self, i: usize) -> Vec<f64> {
        self.unflatten(i).iter().enumerate().map(|(a, &k)| self.zeta(a, k)).collect()
    }

    /// Flat position of the dual-lattice origin.
    pub fn zeta_origin(&self) -> usize {
        self.flatten(&vec![self.count / 2; self.dims()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Probability,
    Quasiprobability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathDistribution {
    pub grid: PathGrid,
    pub values: Vec<f64>,
    /// Description of the conditioning fields.
    pub context: String,
    pub kind: DistKind,
    /// Set when more than `1e-6` of the mass lies within two bins of an edge.
    pub aliased: bool,
}

impl PathDistribution {
    pub fn from_fn(grid: PathGrid, kind: DistKind, context: &str, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        let mut p = PathDistribution { grid, values, context: context.into(), kind, aliased: false };
        p.aliased = p.edge_mass() > 1e-6;
        p
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell()
    }

    /// Absolute mass within two bins of any lattice edge.
    pub fn edge_mass(&self) -> f64 {
        let b = self.grid.count;
        let cell = self.grid.cell();
        (0..self.values.len())
            .filter(|&i| self.grid.unflatten(i).iter().any(|&j| j < 2 || j + 2 >= b))
            .map(|i| self.values[i].abs() * cell)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.values.len() == self.grid.len(), || "table size differs from lattice".into())?;
        if self.kind == DistKind::Probability {
            ensure(self.values.iter().all(|&v| v >= -1e-12), || "negative probability".into())?;
            let m = self.total_mass();
            ensure((m - 1.0).abs() <= 1e-8, || format!("probability mass {m} is not 1"))?;
        }
        Ok(())
    }

    /// Sums out the given axes.
    pub fn marginal(&self, keep: &[usize]) -> Result<PathDistribution> {
        ensure(keep.iter().all(|&a| a < self.grid.dims()), || "axis out of range".into())?;
        let axes: Vec<Axis> = keep.iter().map(|&a| self.grid.axes[a]).collect();
        let per = axes.len().max(1);
        let slices = if per.is_multiple_of(self.grid.slices) { self.grid.slices } else { per };
        let g = PathGrid::new(slices, self.grid.count, self.grid.dt, axes)?;
        let mut vals = vec![0.0; g.len()];
        let dropped: f64 = (0..self.grid.dims())
            .filter(|a| !keep.contains(a))
            .map(|a| self.grid.axes[a].step)
            .product();
        for i in 0..self.values.len() {
            let idx = self.grid.unflatten(i);
            let sub: Vec<usize> = keep.iter().map(|&a| idx[a]).collect();
            vals[g.flatten(&sub)] += self.values[i] * dropped;
        }
        Ok(PathDistribution { grid: g, values: vals, context: self.context.clone(), kind: self.kind, aliased: self.aliased })
    }

    pub fn mean(&self, axis: usize) -> f64 {
        let cell = self.grid.cell();
        (0..self.values.len())
            .map(|i| self.values[i] * cell * self.grid.value(axis, self.grid.unflatten(i)[axis]))
            .sum()
    }

    pub fn covariance(&self, a: usize, b: usize) -> f64 {
        let cell = self.grid.cell();
        let (ma, mb) = (self.mean(a), self.mean(b));
        (0..self.values.len())
            .map(|i| {
                let idx = self.grid.unflatten(i);
                self.values[i] * cell * (self.grid.value(a, idx[a]) - ma) * (self.grid.value(b, idx[b]) - mb)
            })
            .sum()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut head: Vec<String> = (0..self.grid.dims()).map(|a| format!("v{a}")).collect();
        head.push("p".into());
        writeln!(w, "{}", head.join(","))?;
        for i in 0..self.values.len() {
            let mut row: Vec<String> = self.grid.point(i).iter().map(|v| format!("{v}")).collect();
            row.push(format!("{:.15e}", self.values[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharFunctional {
    pub grid: PathGrid,
    pub values: Vec<C64>,
}

impl CharFunctional {
    pub fn at_origin(&self) -> C64 {
        self.values[self.grid.zeta_origin()]
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut head: Vec<String> = (0..self.grid.dims()).map(|a| format!("zeta{a}")).collect();
        head.extend(["re".to_string(), "im".to_string()]);
        writeln!(w, "{}", head.join(","))?;
        for i in 0..self.values.len() {
            let mut row: Vec<String> = self.grid.zeta_point(i).iter().map(|v| format!("{v}")).collect();
            row.push(format!("{:.15e}", self.values[i].re));
            row.push(format!("{:.15e}", self.values[i].im));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Applies `f` to every line of the table along `axis`.
fn for_each_line(data: &mut [C64], dims: usize, b: usize, axis: usize, mut f: impl FnMut(&mut [C64])) {
    let stride = b.pow((dims - 1 - axis) as u32);
    let block = stride * b;
    let mut line = vec![c(0.0, 0.0); b];
    for start in (0..data.len()).step_by(block) {
        for off in 0..stride {
            for j in 0..b {
                line[j] = data[start + off + j * stride];
            }
            f(&mut line);
            for j in 0..b {
                data[start + off + j * stride] = line[j];
            }
        }
    }
}

/// `Phi(zeta) = sum_J p(J) cell exp(i dt sum zeta J)`.
pub fn char_from_dist(p: &PathDistribution) -> CharFunctional {
    let g = &p.grid;
    let b = g.count;
    let mut data: Vec<C64> = p.values.iter().map(|&v| c(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(b);
    for a in 0..g.dims() {
        let ax = g.axes[a];
        let phase: Vec<C64> = (0..b).map(|k| C64::from_polar(1.0, g.dt * g.zeta(a, k) * ax.offset)).collect();
        for_each_line(&mut data, g.dims(), b, a, |line| {
            for (j, z) in line.iter_mut().enumerate() {
                *z *= if j % 2 == 0 { ax.step } else { -ax.step };
            }
            ifft.process(line);
            for (z, ph) in line.iter_mut().zip(&phase) {
                *z *= ph;
            }
        });
    }
    CharFunctional { grid: g.clone(), values: data }
}

/// Inverse transform with measure `prod (dt / 2 pi) d zeta`. The result is
/// tagged as a quasiprobability. The unpaired Nyquist rows (`k = 0`) break
/// Hermitian symmetry, so the imaginary residue may reach their magnitude;
/// anything beyond that plus `1e-10` is an error.
pub fn dist_from_char(phi: &CharFunctional, context: &str) -> Result<PathDistribution> {
    let g = &phi.grid;
    let b = g.count;
    let mut data = phi.values.clone();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(b);
    for a in 0..g.dims() {
        let ax = g.axes[a];
        let phase: Vec<C64> = (0..b).map(|k| C64::from_polar(1.0, -g.dt * g.zeta(a, k) * ax.offset)).collect();
        let norm = 1.0 / (b as f64 * ax.step);
        for_each_line(&mut data, g.dims(), b, a, |line| {
            for (z, ph) in line.iter_mut().zip(&phase) {
                *z *= ph;
            }
            fft.process(line);
            for (j, z) in line.iter_mut().enumerate() {
                *z *= if j % 2 == 0 { norm } else { -norm };
            }
        });
    }
    let scale = data.iter().map(|z| z.re.abs()).fold(0.0, f64::max).max(1.0);
    let worst = data.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let nyquist = (0..phi.values.len())
        .filter(|&i| g.unflatten(i).contains(&0))
        .map(|i| phi.values[i].norm())
        .sum::<f64>()
        * g.axes.iter().map(|a| 1.0 / (b as f64 * a.step)).product::<f64>();
    if worst > 1e-10 * scale + nyquist {
        return Err(Error::Numerical(format!("inverted distribution has imaginary part {worst:.3e}")));
    }
    let values = data.iter().map(|z| z.re).collect();
    let mut p = PathDistribution { grid: g.clone(), values, context: context.into(), kind: DistKind::Quasiprobability, aliased: false };
    p.aliased = p.edge_mass() > 1e-6;
    Ok(p)
}

/// How a quantum model's samples map onto lattice slices: slice `s` covers
/// samples `first + s * stride .. first + s * stride + per_slice`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceMap {
    pub first: usize,
    pub per_slice: usize,
    pub stride: usize,
}

impl SliceMap {
    /// Adjacent slices.
    pub fn contiguous(first: usize, per_slice: usize) -> Self {
        SliceMap { first, per_slice, stride: per_slice }
    }

    pub fn samples(&self, s: usize) -> std::ops::Range<usize> {
        let a = self.first + s * self.stride;
        a..a + self.per_slice
    }
}

/// Which operators the lattice axes describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpSet {
    /// One axis per slice: the slice-averaged current.
    Current,
    /// Three axes per slice: current, then real and imaginary dipole.
    CurrentDipole,
}

/// Piecewise-constant test function on the model grid from per-slice values.
fn slice_signal(model: &SystemModel, map: SliceMap, per_slice: &[f64]) -> Signal {
    let grid = model.grid();
    let mut s = Signal::zeros(grid, model.spec.sites);
    for (i, &v) in per_slice.iter().enumerate() {
        for k in map.samples(i) {
            s.site_mut(0)[k] = c(v, 0.0);
        }
    }
    s
}

/// Branch couplings for the time-normal characteristic value at one dual
/// point: `zeta^(-)` on `J_+`, `zeta^(+)` on `J_-`, `nu^*` on `D_+`, `nu` on
/// `D^†_-`.
fn lattice_branches(model: &SystemModel, map: SliceMap, zeta: &[f64], nu: Option<(&[f64], &[f64])>) -> BranchSources {
    let n = model.grid().n;
    let z = slice_signal(model, map, zeta);
    let (zp, zm) = freq_split(&z);
    let mut bs = BranchSources::default();
    for (ops, env) in &model.currents {
        bs.plus.push(Term { coeff: (0..n).map(|k| zm.at(0, k) * env[k]).collect(), mat: ops[0].clone() });
        bs.minus.push(Term { coeff: (0..n).map(|k| -zp.at(0, k) * env[k]).collect(), mat: ops[0].clone() });
    }
    if let Some((re, im)) = nu {
        // c-number phase alpha Re D + beta Im D = 2 Re(nu^* D), nu = (alpha + i beta)/2
        let a = slice_signal(model, map, re);
        let b = slice_signal(model, map, im);
        let nu: Vec<C64> = (0..n).map(|k| c(a.at(0, k).re / 2.0, b.at(0, k).re / 2.0)).collect();
        let d = &model.d_ops[0];
        bs.plus.push(Term { coeff: nu.iter().map(|v| v.conj()).collect(), mat: d.clone() });
        bs.minus.push(Term { coeff: nu.iter().map(|v| -v).collect(), mat: d.adjoint() });
    }
    bs.plus.retain(|t| t.coeff.iter().any(|z| z.norm() > 0.0));
    bs.minus.retain(|t| t.coeff.iter().any(|z| z.norm() > 0.0));
    bs
}

/// Time-normal characteristic value of the slice-averaged current at one
/// per-slice `zeta`, paired as `zeta_s * mean_s(J) * slice width`.
pub fn slice_char(model: &SystemModel, map: SliceMap, zeta: &[f64]) -> C64 {
    generating_from_branches(model, &lattice_branches(model, map, zeta, None))
}

/// Characteristic functional of slice-integrated device operators on the
/// dual lattice, each point evaluated by two-branch propagation.
pub fn quantum_char(model: &SystemModel, grid: &PathGrid, map: SliceMap, ops: OpSet) -> Result<CharFunctional> {
    let mg = model.grid();
    ensure(model.spec.sites == 1, || "path lattices are defined for one site".into())?;
    ensure(map.per_slice >= 1 && map.stride >= map.per_slice, || "slices must be nonempty and disjoint".into())?;
    ensure(grid.slices >= 1 && map.samples(grid.slices - 1).end <= mg.n, || "slices exceed the model grid".into())?;
    ensure((grid.dt - map.per_slice as f64 * mg.dt).abs() <= 1e-12 * grid.dt.max(1.0), || {
        "lattice slice width must equal per_slice * dt".into()
    })?;
    let per = match ops {
        OpSet::Current => 1,
        OpSet::CurrentDipole => 3,
    };
    ensure(grid.dims() == per * grid.slices, || "axis count does not match the operator set".into())?;
    let l = grid.slices;
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let zp = grid.zeta_point(i);
        let zeta: Vec<f64> = (0..l).map(|s| zp[s * per]).collect();
        let bs = if per == 3 {
            let re: Vec<f64> = (0..l).map(|s| zp[s * per + 1]).collect();
            let im: Vec<f64> = (0..l).map(|s| zp[s * per + 2]).collect();
            lattice_branches(model, map, &zeta, Some((&re, &im)))
        } else {
            lattice_branches(model, map, &zeta, None)
        };
        values.push(generating_from_branches(model, &bs));
    }
    Ok(CharFunctional { grid: grid.clone(), values })
}

/// Conditional P-functional of the slice-averaged current (and dipole).
pub fn pfunctional_from_quantum(model: &SystemModel, grid: &PathGrid, map: SliceMap, ops: OpSet) -> Result<PathDistribution> {
    let phi = quantum_char(model, grid, map, ops)?;
    let op = match ops {
        OpSet::Current => OpId::J(0),
        OpSet::CurrentDipole => OpId::D(0),
    };
    dist_from_char(&phi, &format!("{op:?}"))
}

/// Wiener path on the lattice's slices: `J_0 = 0` plus independent
/// increments of variance `dt`.
pub fn wiener_sample(grid: &PathGrid, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, grid.dt.sqrt()).expect("positive variance");
    let mut path = Vec::with_capacity(grid.slices + 1);
    let mut j = 0.0;
    path.push(j);
    for _ in 0..grid.slices {
        j += normal.sample(&mut rng);
        path.push(j);
    }
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerStats {
    pub dt: f64,
    pub samples: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    /// Covariance of consecutive increments.
    pub lag_covariance: f64,
    pub lag_covariance_stderr: f64,
}

/// Increment statistics over `samples` independent two-step paths.
pub fn wiener_check(dt: f64, samples: usize, seed: u64) -> Result<WienerStats> {
    ensure(samples >= 2, || "need at least two samples".into())?;
    let grid = PathGrid::uniform(2, 2, dt, 0.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d1 = Vec::with_capacity(samples);
    let mut d2 = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sub: u64 = rand::Rng::random(&mut rng);
        let p = wiener_sample(&grid, sub);
        d1.push(p[1] - p[0]);
        d2.push(p[2] - p[1]);
    }
    let nf = samples as f64;
    let mean = d1.iter().sum::<f64>() / nf;
    let sq: Vec<f64> = d1.iter().map(|x| (x - mean).powi(2)).collect();
    let variance = sq.iter().sum::<f64>() / (nf - 1.0);
    let var_of_sq = sq.iter().map(|s| (s - variance).powi(2)).sum::<f64>() / (nf - 1.0);
    let m2 = d2.iter().sum::<f64>() / nf;
    let prods: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| (a - mean) * (b - m2)).collect();
    let lag = prods.iter().sum::<f64>() / nf;
    let lag_var = prods.iter().map(|p| (p - lag).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(WienerStats {
        dt,
        samples,
        mean,
        mean_stderr: (variance / nf).sqrt(),
        variance,
        variance_stderr: (var_of_sq / nf).sqrt(),
        lag_covariance: lag,
        lag_covariance_stderr: (lag_var / nf).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(sigma: f64) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| {
            x.iter()
                .map(|v| (-v * v / (2.0 * sigma * sigma)).exp() / (sigma * std::f64::consts::TAU.sqrt()))
                .product()
        }
    }

    #[test]
    fn point_mass_at_zero_has_unit_char() {
        let g = PathGrid::uniform(2, 8, 0.5, -4.0, 1.0).unwrap();
        let mut p = PathDistribution::from_fn(g.clone(), DistKind::Probability, "", |_| 0.0);
        p.values[g.flatten(&[4, 4])] = 1.0 / g.cell();
        let phi = char_from_dist(&p);
        assert!(phi.values.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn shifted_point_mass_gives_phase() {
        let g = PathGrid::uniform(2, 8, 0.5, -4.0, 1.0).unwrap();
        let mut p = PathDistribution::from_fn(g.clone(), DistKind::Probability, "", |_| 0.0);
        let at = [6usize, 1];
        p.values[g.flatten(&at)] = 1.0 / g.cell();
        let phi = char_from_dist(&p);
        for i in 0..g.len() {
            let z = g.zeta_point(i);
            let expect = C64::from_polar(1.0, 0.5 * (z[0] * g.value(0, 6) + z[1] * g.value(1, 1)));
            assert!((phi.values[i] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_char_matches_closed_form() {
        let sigma = 1.0;
        let dt = 0.5;
        let g = PathGrid::centred(2, 64, dt, 8.0).unwrap();
        let p = PathDistribution::from_fn(g.clone(), DistKind::Probability, "", gaussian(sigma));
        let phi = char_from_dist(&p);
        for i in 0..g.len() {
            let z = g.zeta_point(i);
            let s: f64 = z.iter().map(|v| v * v).sum();
            let expect = (-sigma * sigma * dt * dt * s / 2.0).exp();
            assert!((phi.values[i] - c(expect, 0.0)).norm() < 1e-9, "{i}");
        }
    }

    #[test]
    fn unit_char_inverts_to_point_mass() {
        let g = PathGrid::uniform(1, 16, 1.0, -4.0, 0.5).unwrap();
        let phi = CharFunctional { grid: g.clone(), values: vec![c(1.0, 0.0); 16] };
        let p = dist_from_char(&phi, "").unwrap();
        for (j, v) in p.values.iter().enumerate() {
            let expect = if j == 8 { 1.0 / 0.5 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_mass_sets_alias_flag() {
        let g = PathGrid::uniform(1, 16, 1.0, 0.0, 1.0).unwrap();
        let p = PathDistribution::from_fn(g, DistKind::Probability, "", |_| 1.0 / 16.0);
        assert!(p.aliased);
        let g = PathGrid::centred(1, 32, 1.0, 10.0).unwrap();
        let p = PathDistribution::from_fn(g, DistKind::Probability, "", gaussian(1.0));
        assert!(!p.aliased);
    }

    #[test]
    fn wiener_paths_are_seed_deterministic() {
        let g = PathGrid::uniform(5, 2, 0.01, 0.0, 1.0).unwrap();
        assert_eq!(wiener_sample(&g, 7), wiener_sample(&g, 7));
        assert_ne!(wiener_sample(&g, 7), wiener_sample(&g, 8));
    }

    #[test]
    fn marginal_of_product_is_factor() {
        let g = PathGrid::centred(2, 16, 1.0, 8.0).unwrap();
        let p = PathDistribution::from_fn(g, DistKind::Probability, "", gaussian(1.5));
        let m = p.marginal(&[1]).unwrap();
        let g1 = PathGrid::centred(1, 16, 1.0, 8.0).unwrap();
        let q = PathDistribution::from_fn(g1, DistKind::Probability, "", gaussian(1.5));
        let scale = p.total_mass();
        for (a, b) in m.values.iter().zip(&q.values) {
            assert!((a - b * scale / q.total_mass()).abs() < 1e-10);
        }
    }
}
