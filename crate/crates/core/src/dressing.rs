//! Self-action on path lattices: a bare conditional distribution evaluated
//! at the local field `A_ext + kappa J`, the equivalent shift form of the
//! characteristic functional, the closed-form Gaussian toys, and the
//! quantum two-slice tie-in.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::hilbert::build_system;
use crate::linalg::{c, C64};
use crate::models::DressingParams;
use crate::pathspace::{pfunctional_from_quantum, slice_char, Axis, CharFunctional, DistKind, OpSet, PathDistribution, PathGrid};
use crate::response::kubo_delta_r;
use crate::signals::Signal;

/// Slice-level response: the local field on slice `s` gains
/// `sum_s' kappa[s][s'] J_s'`, where `J_s'` is the first axis of slice `s'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceKernel {
    pub slices: usize,
    /// Row-major `slices x slices`.
    pub values: Vec<f64>,
}

impl SliceKernel {
    pub fn zero(slices: usize) -> Self {
        SliceKernel { slices, values: vec![0.0; slices * slices] }
    }

    pub fn new(slices: usize, values: Vec<f64>) -> Result<Self> {
        ensure(values.len() == slices * slices, || "kernel must be square over the slices".into())?;
        Ok(SliceKernel { slices, values })
    }

    pub fn get(&self, s: usize, s2: usize) -> f64 {
        self.values[s * self.slices + s2]
    }

    pub fn set(&mut self, s: usize, s2: usize, v: f64) {
        self.values[s * self.slices + s2] = v;
    }

    /// Zero at every lag `<= 0`: no same-slice or backward action.
    pub fn is_strictly_retarded(&self) -> bool {
        (0..self.slices).all(|s| (s..self.slices).all(|s2| self.get(s, s2) == 0.0))
    }

    /// `ext + kappa J` for a lattice point with `per` axes per slice.
    pub fn local_field(&self, ext: &[f64], point: &[f64], per: usize) -> Vec<f64> {
        (0..self.slices)
            .map(|s| ext[s] + (0..self.slices).map(|s2| self.get(s, s2) * point[s2 * per]).sum::<f64>())
            .collect()
    }
}

/// A bare conditional distribution `p^I(J | A)` on a fixed lattice, with the
/// conditioning field given per slice.
pub trait ConditionalFamily {
    fn grid(&self) -> &PathGrid;
    fn density(&self, index: usize, field: &[f64]) -> Result<f64>;
    fn kind(&self) -> DistKind {
        DistKind::Quasiprobability
    }
}

/// Slicewise independent Gaussians `N(J_s; chi A_s, J0^2)`.
#[derive(Debug, Clone)]
pub struct GaussianFamily {
    pub grid: PathGrid,
    pub chi: f64,
    pub j0: f64,
}

impl ConditionalFamily for GaussianFamily {
    fn grid(&self) -> &PathGrid {
        &self.grid
    }

    fn density(&self, index: usize, field: &[f64]) -> Result<f64> {
        let x = self.grid.point(index);
        Ok((0..self.grid.slices).map(|s| gauss(x[s], self.chi * field[s], self.j0)).product())
    }

    fn kind(&self) -> DistKind {
        DistKind::Probability
    }
}

fn gauss(x: f64, mu: f64, sd: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * sd * sd)).exp() / (sd * std::f64::consts::TAU.sqrt())
}

/// Precomputed lattice distributions along one line of conditioning fields
/// `base + h direction`, linearly interpolated in `h`.
#[derive(Debug, Clone)]
pub struct InterpolatedFamily {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    /// Increasing.
    pub params: Vec<f64>,
    pub dists: Vec<PathDistribution>,
}

impl InterpolatedFamily {
    pub fn new(base: Vec<f64>, direction: Vec<f64>, params: Vec<f64>, dists: Vec<PathDistribution>) -> Result<Self> {
        ensure(!dists.is_empty() && params.len() == dists.len(), || "one distribution per context".into())?;
        ensure(params.windows(2).all(|w| w[0] < w[1]), || "contexts must increase".into())?;
        ensure(base.len() == direction.len(), || "base and direction differ in length".into())?;
        let g = &dists[0].grid;
        ensure(dists.iter().all(|d| d.grid == *g), || "contexts must share a lattice".into())?;
        Ok(InterpolatedFamily { base, direction, params, dists })
    }

    fn param(&self, field: &[f64]) -> Result<f64> {
        let nn: f64 = self.direction.iter().map(|d| d * d).sum();
        ensure(nn > 0.0, || "zero interpolation direction".into())?;
        let diff: Vec<f64> = field.iter().zip(&self.base).map(|(f, b)| f - b).collect();
        let h = diff.iter().zip(&self.direction).map(|(a, b)| a * b).sum::<f64>() / nn;
        let off = diff.iter().zip(&self.direction).map(|(a, d)| (a - h * d).abs()).fold(0.0, f64::max);
        let scale = diff.iter().map(|a| a.abs()).fold(1.0, f64::max);
        ensure(off <= 1e-12 * scale, || "conditioning field leaves the precomputed line".into())?;
        Ok(h)
    }
}

impl ConditionalFamily for InterpolatedFamily {
    fn grid(&self) -> &PathGrid {
        &self.dists[0].grid
    }

    fn density(&self, index: usize, field: &[f64]) -> Result<f64> {
        let h = self.param(field)?;
        let p = &self.params;
        let last = p.len() - 1;
        let tol = 1e-12 * p[last].abs().max(p[0].abs()).max(1.0);
        ensure(h >= p[0] - tol && h <= p[last] + tol, || format!("context {h} outside [{}, {}]", p[0], p[last]))?;
        let i = p.partition_point(|&v| v <= h).clamp(1, last.max(1)) - 1;
        if last == 0 {
            return Ok(self.dists[0].values[index]);
        }
        let t = ((h - p[i]) / (p[i + 1] - p[i])).clamp(0.0, 1.0);
        Ok((1.0 - t) * self.dists[i].values[index] + t * self.dists[i + 1].values[index])
    }
}

fn dress_raw(family: &dyn ConditionalFamily, kernel: &SliceKernel, ext: &[f64]) -> Result<PathDistribution> {
    let g = family.grid();
    ensure(kernel.slices == g.slices && ext.len() == g.slices, || "kernel and field must cover every slice".into())?;
    let per = g.dims() / g.slices;
    let mut values = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let x = g.point(i);
        values.push(family.density(i, &kernel.local_field(ext, &x, per))?);
    }
    let mut p = PathDistribution { grid: g.clone(), values, context: format!("dressed A_ext={ext:?}"), kind: family.kind(), aliased: false };
    p.aliased = p.edge_mass() > 1e-6;
    Ok(p)
}

/// `p(J | A_ext) = p^I(J | A_ext + kappa J)` at every lattice point.
pub fn dress_distribution(family: &dyn ConditionalFamily, kernel: &SliceKernel, ext: &[f64]) -> Result<PathDistribution> {
    if !kernel.is_strictly_retarded() {
        return Err(Error::validation("self-action kernel must vanish at lag <= 0"));
    }
    dress_raw(family, kernel, ext)
}

/// Characteristic functional of the dressed family by the shift form
/// `sum_J cell exp(i dt zeta J) p^I(J | A_ext + kappa J)`, summed directly.
pub fn dress_via_shift_functional(family: &dyn ConditionalFamily, kernel: &SliceKernel, ext: &[f64]) -> Result<CharFunctional> {
    if !kernel.is_strictly_retarded() {
        return Err(Error::validation("self-action kernel must vanish at lag <= 0"));
    }
    let g = family.grid();
    ensure(kernel.slices == g.slices && ext.len() == g.slices, || "kernel and field must cover every slice".into())?;
    let per = g.dims() / g.slices;
    let cell = g.cell();
    let shifted: Vec<(Vec<f64>, f64)> = (0..g.len())
        .map(|i| {
            let x = g.point(i);
            let p = family.density(i, &kernel.local_field(ext, &x, per))?;
            Ok((x, p))
        })
        .collect::<Result<_>>()?;
    let values = (0..g.len())
        .map(|k| {
            let z = g.zeta_point(k);
            shifted
                .iter()
                .map(|(x, p)| {
                    let ph: f64 = z.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() * g.dt;
                    C64::from_polar(p * cell, ph)
                })
                .sum()
        })
        .collect();
    Ok(CharFunctional { grid: g.clone(), values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyParams {
    pub chi: f64,
    pub delta_r: f64,
    pub j0: f64,
    pub a_e: f64,
    pub a_e_prime: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams { chi: 1.0, delta_r: 0.5, j0: 1.0, a_e: 0.3, a_e_prime: -0.2 }
    }
}

impl ToyParams {
    fn validate(&self) -> Result<()> {
        ensure(self.j0 > 0.0 && self.j0.is_finite(), || "J0 must be positive".into())?;
        ensure([self.chi, self.delta_r, self.a_e, self.a_e_prime].iter().all(|v| v.is_finite()), || "toy parameters must be finite".into())
    }
}

#[derive(Debug, Clone)]
pub struct SameTimeToy {
    pub params: ToyParams,
    pub normalization: f64,
    pub expected: f64,
    pub singular: bool,
    pub dist: Option<PathDistribution>,
}

/// One current acting on itself at the same time. The dressed Gaussian is
/// integrated on a 256-point lattice spanning 14 standard deviations either
/// side of its centre; the target is `1/|1 - chi Delta_R|`.
pub fn toy_same_time(params: ToyParams) -> Result<SameTimeToy> {
    params.validate()?;
    let gain = 1.0 - params.chi * params.delta_r;
    if gain.abs() < 1e-12 {
        return Ok(SameTimeToy { params, normalization: f64::INFINITY, expected: f64::INFINITY, singular: true, dist: None });
    }
    let centre = params.chi * params.a_e / gain;
    let sd = params.j0 / gain.abs();
    let b = 256;
    let step = 28.0 * sd / (b - 1) as f64;
    let g = PathGrid::new(1, b, 1.0, vec![Axis { offset: centre - 14.0 * sd, step }])?;
    let fam = GaussianFamily { grid: g, chi: params.chi, j0: params.j0 };
    let kernel = SliceKernel::new(1, vec![params.delta_r])?;
    let mut dist = dress_raw(&fam, &kernel, &[params.a_e])?;
    dist.kind = DistKind::Quasiprobability;
    Ok(SameTimeToy { params, normalization: dist.total_mass(), expected: 1.0 / gain.abs(), singular: false, dist: Some(dist) })
}

#[derive(Debug, Clone)]
pub struct TwoCurrentToy {
    pub params: ToyParams,
    pub normalization: f64,
    /// Largest pointwise `|p(J, J') - p(J | A_e, J') p'(J' | A_e')|`.
    pub factorization_residual: f64,
    /// Axis 0 is the earlier current `J'`, axis 1 the later `J`.
    pub dist: PathDistribution,
}

/// Earlier current `J'` acting on the later `J` through `Delta_R`, on a
/// 128 x 128 lattice wide enough to hold the conditional shift.
pub fn toy_two_current(params: ToyParams) -> Result<TwoCurrentToy> {
    params.validate()?;
    let b = 128;
    let mu0 = params.chi * params.a_e_prime;
    let h0 = 12.0 * params.j0;
    let k = params.chi * params.delta_r;
    let mu1 = k * mu0 + params.chi * params.a_e;
    let h1 = 12.0 * params.j0 * (1.0 + k.abs());
    let axes = vec![
        Axis { offset: mu0 - h0, step: 2.0 * h0 / (b - 1) as f64 },
        Axis { offset: mu1 - h1, step: 2.0 * h1 / (b - 1) as f64 },
    ];
    let g = PathGrid::new(2, b, 1.0, axes)?;
    let fam = GaussianFamily { grid: g.clone(), chi: params.chi, j0: params.j0 };
    let mut kernel = SliceKernel::zero(2);
    kernel.set(1, 0, params.delta_r);
    let dist = dress_distribution(&fam, &kernel, &[params.a_e_prime, params.a_e])?;
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let x = g.point(i);
        let cond = gauss(x[1], params.chi * params.delta_r * x[0] + params.chi * params.a_e, params.j0);
        let prior = gauss(x[0], mu0, params.j0);
        worst = worst.max((dist.values[i] - cond * prior).abs());
    }
    Ok(TwoCurrentToy { params, normalization: dist.total_mass(), factorization_residual: worst, dist })
}

/// Rows `chi,deltaR,J0,A_e,normalization,expected`.
pub fn write_toy_csv(rows: &[(ToyParams, f64, f64)], mut w: impl Write) -> Result<()> {
    writeln!(w, "chi,deltaR,J0,A_e,normalization,expected")?;
    for (p, norm, exp) in rows {
        writeln!(w, "{},{},{},{},{:.15e},{:.15e}", p.chi, p.delta_r, p.j0, p.a_e, norm, exp)?;
    }
    Ok(())
}

/// Outcome of the quantum two-slice comparison. Differences are per-cell
/// probability masses.
#[derive(Debug, Clone)]
pub struct DressingComparison {
    pub hbar: f64,
    pub kappa: f64,
    pub full: PathDistribution,
    pub dressed: PathDistribution,
    pub undressed: PathDistribution,
    /// `max |full - dressed|`.
    pub residual: f64,
    /// `max |full - undressed|`: the size of the dressing effect itself.
    pub signal: f64,
    /// Interpolated vs directly computed bare distribution at a midpoint
    /// context.
    pub interpolation_error: f64,
}

fn max_cell_diff(a: &PathDistribution, b: &PathDistribution) -> f64 {
    let cell = a.grid.cell();
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs() * cell).fold(0.0, f64::max)
}

/// Mean and variance of each slice-averaged current from the log of the
/// characteristic value at `zeta = ±eps / (width sqrt(hbar))`.
fn slice_stats(model: &crate::hilbert::SystemModel, p: &DressingParams, slices: usize) -> Vec<(f64, f64)> {
    let map = p.slice_map();
    let sq = model.hbar().sqrt();
    let w = map.per_slice as f64 * p.dt * sq;
    let eps = 1e-3;
    (0..slices)
        .map(|s| {
            let mut z = vec![0.0; slices];
            z[s] = eps / w;
            let lp = slice_char(model, map, &z).ln();
            z[s] = -eps / w;
            let lm = slice_char(model, map, &z).ln();
            let mean = sq * ((lp - lm) / c(0.0, 2.0 * eps)).re;
            let var = -sq * sq * ((lp + lm) / (eps * eps)).re;
            (mean, var)
        })
        .collect()
}

/// Compares the interacting model's two-slice P-functional with the bare
/// device P-functional dressed by the retarded self-field of slice 1 on
/// slice 2. The bare family is computed at one context per lattice value of
/// the slice-1 current, each with `A_e` raised on slice 2 by that current's
/// radiated field.
pub fn quantum_dressing(p: &DressingParams, hbar: f64) -> Result<DressingComparison> {
    let full_spec = p.spec(hbar, true, None)?;
    let grid = full_spec.grid;
    let map = p.slice_map();
    ensure(map.stride > map.per_slice, || "slices must be separated".into())?;
    let full = build_system(full_spec.clone())?;

    let dr = kubo_delta_r(&full_spec.modes, grid, 1)?;
    // radiated field per unit slice-1 mean current, on slice 2
    let s1 = map.samples(0);
    let mut profile = Signal::zeros(grid, 1);
    for k in map.samples(1) {
        let f: f64 = s1.clone().map(|s| dr.get(0, 0, k as i64 - s as i64).re * grid.dt).sum();
        profile.site_mut(0)[k] = c(f, 0.0);
    }
    let kappa = map.samples(1).map(|k| profile.at(0, k).re).sum::<f64>() / map.per_slice as f64;
    ensure(kappa != 0.0, || "slice separation gives no self-field".into())?;

    let stats = slice_stats(&full, p, 2);
    let axes = stats
        .iter()
        .map(|&(m, v)| {
            ensure(v > 0.0, || format!("slice variance {v} is not positive"))?;
            let step = v.sqrt() * p.step_per_sd;
            Ok(Axis { offset: m - step * (p.count / 2) as f64, step })
        })
        .collect::<Result<Vec<_>>>()?;
    let lattice = PathGrid::new(2, p.count, map.per_slice as f64 * p.dt, axes)?;
    let full_p = pfunctional_from_quantum(&full, &lattice, map, OpSet::Current)?;

    let bare_at = |h: f64| -> Result<PathDistribution> {
        let extra = profile.scale(c(h / kappa, 0.0));
        let m = build_system(p.spec(hbar, false, Some(&extra))?)?;
        pfunctional_from_quantum(&m, &lattice, map, OpSet::Current)
    };
    let mut hs: Vec<f64> = (0..p.count).map(|j| kappa * lattice.value(0, j)).collect();
    if kappa < 0.0 {
        hs.reverse();
    }
    let dists = hs.iter().map(|&h| bare_at(h)).collect::<Result<Vec<_>>>()?;
    let family = InterpolatedFamily::new(vec![0.0, 0.0], vec![0.0, 1.0], hs.clone(), dists)?;
    let mut kernel = SliceKernel::zero(2);
    kernel.set(1, 0, kappa);
    let dressed = dress_distribution(&family, &kernel, &[0.0, 0.0])?;
    let undressed = bare_at(0.0)?;

    let mid = p.count / 2;
    let hm = 0.5 * (hs[mid - 1] + hs[mid]);
    let direct = bare_at(hm)?;
    let interp = PathDistribution {
        values: (0..lattice.len()).map(|i| family.density(i, &[0.0, hm])).collect::<Result<_>>()?,
        ..direct.clone()
    };
    Ok(DressingComparison {
        hbar,
        kappa,
        residual: max_cell_diff(&full_p, &dressed),
        signal: max_cell_diff(&full_p, &undressed),
        interpolation_error: max_cell_diff(&interp, &direct),
        full: full_p,
        dressed,
        undressed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::char_from_dist;

    fn two_slice_gaussian(chi: f64) -> GaussianFamily {
        GaussianFamily { grid: PathGrid::centred(2, 32, 0.5, 9.0).unwrap(), chi, j0: 1.0 }
    }

    #[test]
    fn zero_kernel_leaves_family_unchanged() {
        let fam = two_slice_gaussian(0.8);
        let p = dress_distribution(&fam, &SliceKernel::zero(2), &[0.3, -0.1]).unwrap();
        for i in 0..fam.grid.len() {
            assert_eq!(p.values[i], fam.density(i, &[0.3, -0.1]).unwrap());
        }
    }

    #[test]
    fn same_time_kernel_is_rejected() {
        let fam = two_slice_gaussian(0.8);
        let k = SliceKernel::new(2, vec![0.1, 0.0, 0.5, 0.0]).unwrap();
        assert!(matches!(dress_distribution(&fam, &k, &[0.0, 0.0]), Err(Error::Validation(_))));
        let k = SliceKernel::new(2, vec![0.0, 0.5, 0.0, 0.0]).unwrap();
        assert!(dress_via_shift_functional(&fam, &k, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn shift_route_matches_transform_of_dressed() {
        let fam = GaussianFamily { grid: PathGrid::centred(2, 16, 0.5, 7.0).unwrap(), chi: 0.7, j0: 1.1 };
        let mut k = SliceKernel::zero(2);
        k.set(1, 0, 0.6);
        let a = dress_via_shift_functional(&fam, &k, &[0.2, -0.4]).unwrap();
        let b = char_from_dist(&dress_distribution(&fam, &k, &[0.2, -0.4]).unwrap());
        let worst = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn same_time_toy_hits_pole_formula() {
        let t = toy_same_time(ToyParams { chi: 1.0, delta_r: 0.5, ..Default::default() }).unwrap();
        assert!((t.normalization - 2.0).abs() < 1e-8, "{}", t.normalization);
        let t = toy_same_time(ToyParams { chi: 2.0, delta_r: 0.5, ..Default::default() }).unwrap();
        assert!(t.singular);
        let t = toy_same_time(ToyParams { chi: 0.0, ..Default::default() }).unwrap();
        assert!((t.normalization - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_current_toy_is_normalised_and_factorises() {
        let t = toy_two_current(ToyParams { chi: 1.3, delta_r: 0.9, j0: 0.7, a_e: 0.4, a_e_prime: -1.0 }).unwrap();
        assert!((t.normalization - 1.0).abs() < 1e-8, "{}", t.normalization);
        assert!(t.factorization_residual <= 1e-12);
        assert!(t.dist.validate().is_ok());
    }

    #[test]
    fn interpolated_family_is_exact_at_nodes() {
        let g = PathGrid::centred(1, 8, 1.0, 4.0).unwrap();
        let d = |s: f64| PathDistribution::from_fn(g.clone(), DistKind::Probability, "", move |x| gauss(x[0], s, 1.0));
        let fam = InterpolatedFamily::new(vec![0.0], vec![1.0], vec![-1.0, 0.0, 2.0], vec![d(-1.0), d(0.0), d(2.0)]).unwrap();
        assert_eq!(fam.density(3, &[0.0]).unwrap(), d(0.0).values[3]);
        let v = fam.density(3, &[1.0]).unwrap();
        assert!((v - 0.5 * (d(0.0).values[3] + d(2.0).values[3])).abs() < 1e-15);
        assert!(fam.density(3, &[2.5]).is_err());
    }
}
