//! Classical Monte Carlo twins: random current paths scattered into a total
//! field `A_tot = A_ext + Delta_R J`, characteristic-functional estimates
//! with jackknife errors, and the comparison of a linear quantum model with
//! its classical counterpart.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::hilbert::{build_system, Band, OpId, SystemSpec};
use crate::linalg::{self, c, C64};
use crate::response::kubo_delta_r;
use crate::signals::{kernel_apply, Side, Signal, TimeGrid, TwoTimeKernel};
use crate::timenormal::{weighted_tc, Slot};

/// Harmonic device `hbar Omega b^† b` with current `g(t) sqrt(hbar) k (b + b^†)`,
/// started in a thermal state of mean occupation `nbar`. Its classical
/// amplitude obeys `beta' = -i Omega beta + i g(t) k A_loc / sqrt(hbar)`, with
/// `beta(0)` drawn from the Glauber P distribution of the thermal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorDevice {
    pub hbar: f64,
    pub omega: f64,
    pub coupling: f64,
    pub nbar: f64,
    /// Real envelope `g(t_k)`; `None` means one.
    pub envelope: Option<Vec<f64>>,
}

/// Zero-mean Gaussian fluctuation `L xi` around a fixed mean path, with
/// `L L^T` the covariance over the flattened `(site, sample)` index.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCurrent {
    pub mean: Signal,
    pub chol: DMatrix<f64>,
}

impl GaussianCurrent {
    pub fn new(mean: Signal, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.sites * mean.grid.n;
        ensure(mean.is_real(0.0), || "mean current must be real".into())?;
        ensure(cov.nrows() == m && cov.ncols() == m, || format!("covariance must be {m} x {m}"))?;
        ensure((&cov - cov.transpose()).abs().max() <= 1e-12 * cov.abs().max().max(1.0), || "covariance is not symmetric".into())?;
        // a small ridge lets exactly singular covariances through
        let ridge = 1e-14 * cov.diagonal().abs().max().max(1e-300);
        let chol = (cov + DMatrix::identity(m, m) * ridge)
            .cholesky()
            .ok_or_else(|| Error::validation("covariance is not positive semidefinite"))?
            .l();
        Ok(GaussianCurrent { mean, chol })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }
}

/// Sampler of current paths given the field seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassicalDevice {
    /// The same path on every draw.
    Deterministic(Signal),
    /// Field-independent Gaussian currents.
    Gaussian(GaussianCurrent),
    /// Linear device responding to its local field, including its own
    /// retarded radiation.
    Oscillator(OscillatorDevice),
}

impl ClassicalDevice {
    pub fn descriptor(&self) -> String {
        match self {
            ClassicalDevice::Deterministic(_) => "deterministic J".into(),
            ClassicalDevice::Gaussian(_) => "Gaussian J, field independent".into(),
            ClassicalDevice::Oscillator(o) => {
                format!("oscillator Omega={} k={} nbar={} hbar={}", o.omega, o.coupling, o.nbar, o.hbar)
            }
        }
    }

    /// Closed-form mean current under `a_ext`.
    pub fn mean_current(&self, a_ext: &Signal, dr: &TwoTimeKernel) -> Result<Signal> {
        match self {
            ClassicalDevice::Deterministic(j) => Ok(j.clone()),
            ClassicalDevice::Gaussian(g) => Ok(g.mean.clone()),
            ClassicalDevice::Oscillator(o) => {
                let (jd, _, _) = o.responses(a_ext, dr)?;
                Ok(jd)
            }
        }
    }

    /// Closed-form covariance of the current over the flattened
    /// `(site, sample)` index.
    pub fn current_covariance(&self, a_ext: &Signal, dr: &TwoTimeKernel) -> Result<DMatrix<f64>> {
        match self {
            ClassicalDevice::Deterministic(j) => {
                let m = j.sites * j.grid.n;
                Ok(DMatrix::zeros(m, m))
            }
            ClassicalDevice::Gaussian(g) => Ok(g.covariance()),
            ClassicalDevice::Oscillator(o) => {
                let (_, h1, hi) = o.responses(a_ext, dr)?;
                let col = |s: &Signal| DMatrix::from_iterator(s.grid.n, 1, s.site(0).iter().map(|z| z.re));
                let (a, b) = (col(&h1), col(&hi));
                Ok((&a * a.transpose() + &b * b.transpose()) * (0.5 * o.nbar))
            }
        }
    }

    fn check(&self, a_ext: &Signal) -> Result<()> {
        let (grid, sites) = (a_ext.grid, a_ext.sites);
        match self {
            ClassicalDevice::Deterministic(j) => {
                ensure(j.grid.same_as(&grid) && j.sites == sites, || "current path and field differ in shape".into())?;
                ensure(j.is_real(0.0), || "current path must be real".into())
            }
            ClassicalDevice::Gaussian(g) => {
                ensure(g.mean.grid.same_as(&grid) && g.mean.sites == sites, || "mean current and field differ in shape".into())
            }
            ClassicalDevice::Oscillator(o) => {
                ensure(sites == 1, || "oscillator device has one site".into())?;
                ensure(o.hbar > 0.0 && o.omega.is_finite() && o.coupling.is_finite(), || "bad oscillator parameters".into())?;
                ensure(o.nbar >= 0.0, || "nbar must be non-negative".into())?;
                if let Some(e) = &o.envelope {
                    ensure(e.len() == grid.n, || "envelope length differs from grid".into())?;
                }
                Ok(())
            }
        }
    }
}

impl OscillatorDevice {
    fn env(&self, k: usize) -> f64 {
        self.envelope.as_ref().map_or(1.0, |e| e[k])
    }

    /// Current path for initial amplitude `beta0` under drive `a_ext`, with
    /// the local field `a_ext + Delta_R J` built up step by step.
    fn closed_loop(&self, beta0: C64, a_ext: &[C64], dr: &TwoTimeKernel) -> Vec<f64> {
        let n = a_ext.len();
        let dt = dr.grid.dt;
        let sq = self.hbar.sqrt();
        let rot = C64::from_polar(1.0, -self.omega * dt);
        let kick = c(0.0, 0.5 * dt * self.coupling / sq);
        let lag: Vec<f64> = (0..n).map(|l| dr.get(0, 0, l as i64).re * dt).collect();
        let mut j = vec![0.0; n];
        let mut beta = beta0;
        let local = |k: usize, j: &[f64]| -> f64 { a_ext[k].re + (0..k).map(|s| lag[k - s] * j[s]).sum::<f64>() };
        let mut f_prev = 0.0;
        for k in 0..n {
            if k > 0 {
                let f = self.env(k) * local(k, &j);
                beta = rot * beta + kick * (rot * f_prev + f);
                f_prev = f;
            } else {
                f_prev = self.env(0) * local(0, &j);
            }
            j[k] = self.env(k) * sq * self.coupling * 2.0 * beta.re;
        }
        j
    }

    /// Driven path at `beta0 = 0` and the undriven responses to `beta0 = 1`
    /// and `beta0 = i`.
    fn responses(&self, a_ext: &Signal, dr: &TwoTimeKernel) -> Result<(Signal, Signal, Signal)> {
        ensure(dr.get(0, 0, 0).norm() == 0.0, || "kernel has same-time self-action".into())?;
        let grid = a_ext.grid;
        let zero = vec![c(0.0, 0.0); grid.n];
        let wrap = |v: Vec<f64>| Signal::from_samples(grid, v.into_iter().map(|x| c(x, 0.0)).collect());
        Ok((
            wrap(self.closed_loop(c(0.0, 0.0), a_ext.site(0), dr))?,
            wrap(self.closed_loop(c(1.0, 0.0), &zero, dr))?,
            wrap(self.closed_loop(c(0.0, 1.0), &zero, dr))?,
        ))
    }
}

/// Draws of current paths and the total field each one produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub grid: TimeGrid,
    pub sites: usize,
    /// One real path per draw, flattened as `site * n + k`.
    pub j: Vec<Vec<f64>>,
    pub a_tot: Vec<Vec<f64>>,
    pub a_ext: Signal,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }

    fn signal(&self, v: &[f64]) -> Signal {
        Signal::from_samples(self.grid, v.iter().map(|&x| c(x, 0.0)).collect()).expect("shape fixed at construction")
    }

    pub fn current(&self, i: usize) -> Signal {
        self.signal(&self.j[i])
    }

    pub fn total_field(&self, i: usize) -> Signal {
        self.signal(&self.a_tot[i])
    }

    /// Rows `draw,site,t,J,A_tot`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "draw,site,t,J,A_tot")?;
        let n = self.grid.n;
        for (i, (j, a)) in self.j.iter().zip(&self.a_tot).enumerate() {
            for x in 0..self.sites {
                for k in 0..n {
                    writeln!(w, "{},{},{},{:.15e},{:.15e}", i, x, self.grid.t(k), j[x * n + k], a[x * n + k])?;
                }
            }
        }
        Ok(())
    }
}

/// Samples `n_samples` current paths from `device` and scatters each into
/// `A_tot = A_ext + Delta_R J`.
pub fn simulate_scattering(device: &ClassicalDevice, a_ext: &Signal, dr: &TwoTimeKernel, n_samples: usize, seed: u64) -> Result<Ensemble> {
    ensure(n_samples >= 1, || "n_samples must be at least 1".into())?;
    ensure(a_ext.is_real(0.0), || "external field must be real".into())?;
    ensure(dr.grid.same_as(&a_ext.grid) && dr.sites == a_ext.sites, || "kernel and field differ in shape".into())?;
    device.check(a_ext)?;
    let grid = a_ext.grid;
    let m = grid.n * a_ext.sites;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = |s: &Signal| -> Vec<f64> { s.values.iter().map(|z| z.re).collect() };
    let mut js: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
    match device {
        ClassicalDevice::Deterministic(j) => js.resize(n_samples, flat(j)),
        ClassicalDevice::Gaussian(g) => {
            let mu = flat(&g.mean);
            for _ in 0..n_samples {
                let xi = DMatrix::from_fn(m, 1, |_, _| StandardNormal.sample(&mut rng));
                let f = &g.chol * xi;
                js.push(mu.iter().zip(f.iter()).map(|(a, b)| a + b).collect());
            }
        }
        ClassicalDevice::Oscillator(o) => {
            let (jd, h1, hi) = o.responses(a_ext, dr)?;
            let (jd, h1, hi) = (flat(&jd), flat(&h1), flat(&hi));
            let s = (0.5 * o.nbar).sqrt();
            for _ in 0..n_samples {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                let (a, b) = (s * a, s * b);
                js.push((0..m).map(|k| jd[k] + a * h1[k] + b * hi[k]).collect());
            }
        }
    }
    let mut a_tot = Vec::with_capacity(n_samples);
    for j in &js {
        let sig = Signal::from_samples(grid, j.iter().map(|&x| c(x, 0.0)).collect())?;
        let rad = kernel_apply(dr, &sig, Side::Left)?;
        a_tot.push(a_ext.values.iter().zip(&rad.values).map(|(e, r)| e.re + r.re).collect());
    }
    Ok(Ensemble { grid, sites: a_ext.sites, j: js, a_tot, a_ext: a_ext.clone() })
}

/// Mean of `v[0] + sum (v_i - v[0]) / n`; exact when all entries agree.
fn anchored_mean<T>(v: &[T]) -> T
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Div<f64, Output = T> + std::iter::Sum,
{
    let x0 = v[0];
    x0 + v.iter().map(|&x| x - x0).sum::<T>() / v.len() as f64
}

/// Mean and delete-a-group jackknife standard error. Groups hold 100
/// consecutive values, or one value each when fewer than 200 are given.
pub fn jackknife<T>(values: &[T], norm: impl Fn(T) -> f64) -> (T, f64)
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Div<f64, Output = T> + std::ops::Mul<f64, Output = T> + std::iter::Sum,
{
    let n = values.len();
    let groups = if n >= 200 { n / 100 } else { n };
    let theta = anchored_mean(values);
    if groups < 2 {
        return (theta, 0.0);
    }
    let (base, extra) = (n / groups, n % groups);
    let mut start = 0;
    let mut loo = Vec::with_capacity(groups);
    for g in 0..groups {
        let len = base + usize::from(g < extra);
        let m = anchored_mean(&values[start..start + len]);
        // leave-group-out mean written as a correction to the full mean
        loo.push(theta + (theta - m) * (len as f64 / (n - len) as f64));
        start += len;
    }
    let centre = anchored_mean(&loo);
    let gf = groups as f64;
    let ss: f64 = loo.iter().map(|&t| norm(t - centre).powi(2)).sum();
    (theta, ((gf - 1.0) / gf * ss).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: C64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `E exp(i <eta, A_tot> + i <zeta, J>)`.
pub fn conditional_char_estimate(ens: &Ensemble, eta: &Signal, zeta: &Signal) -> Result<Estimate> {
    ensure(!ens.is_empty(), || "ensemble is empty".into())?;
    for s in [eta, zeta] {
        ensure(s.grid.same_as(&ens.grid) && s.sites == ens.sites, || "test function differs in shape from the ensemble".into())?;
    }
    let dt = ens.grid.dt;
    let dotr = |f: &Signal, v: &[f64]| -> C64 { f.values.iter().zip(v).map(|(z, x)| z * *x).sum::<C64>() * dt };
    let phases: Vec<C64> = (0..ens.len())
        .map(|i| (linalg::I * (dotr(eta, &ens.a_tot[i]) + dotr(zeta, &ens.j[i]))).exp())
        .collect();
    let (value, stderr) = jackknife(&phases, |z| z.norm());
    Ok(Estimate { value, stderr })
}

/// One compared moment: the quantum time-normal value against the Monte
/// Carlo average and against the twin's closed-form value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentComparison {
    pub moment: String,
    pub quantum: f64,
    pub quantum_imag: f64,
    pub classical: f64,
    pub stderr: f64,
    pub closed_form: f64,
}

impl MomentComparison {
    pub fn diff(&self) -> f64 {
        (self.quantum - self.classical).hypot(self.quantum_imag)
    }

    pub fn closed_form_diff(&self) -> f64 {
        (self.quantum - self.closed_form).hypot(self.quantum_imag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub samples: usize,
    pub times: Vec<usize>,
    pub entries: Vec<MomentComparison>,
}

impl CorrespondenceReport {
    /// Largest `|quantum - classical| - n_se * stderr`, floored at zero.
    pub fn excess(&self, n_se: f64) -> f64 {
        self.entries.iter().map(|e| (e.diff() - n_se * e.stderr).max(0.0)).fold(0.0, f64::max)
    }

    /// Largest `|quantum - closed form|`.
    pub fn closed_form_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.closed_form_diff()).fold(0.0, f64::max)
    }

    pub fn get(&self, moment: &str) -> Option<&MomentComparison> {
        self.entries.iter().find(|e| e.moment == moment)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "moment,quantum_re,quantum_im,classical,stderr,closed_form,abs_diff")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                e.moment,
                e.quantum,
                e.quantum_imag,
                e.classical,
                e.stderr,
                e.closed_form,
                e.diff()
            )?;
        }
        Ok(())
    }
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

/// Classical twin of a linear quantum model: a harmonic device with a current
/// linear in its ladder operators, a thermal initial state, nonresonant
/// field modes only and sources `A_e`, `J_e` only. Anything else is
/// rejected.
pub fn linear_twin(spec: &SystemSpec) -> Result<ClassicalDevice> {
    let dev = &spec.device;
    let nonlinear = |why: &str| Error::validation(format!("model is not linear: {why}"));
    if spec.sites != 1 {
        return Err(nonlinear("more than one site"));
    }
    if spec.modes.iter().any(|m| m.band == Band::Resonant) {
        return Err(nonlinear("resonant modes"));
    }
    if dev.d_ops.iter().any(|d| linalg::max_abs(d) > 0.0) || !dev.extra_currents.is_empty() {
        return Err(nonlinear("dipole or extra current terms"));
    }
    let s = &spec.sources;
    if s.e_e.is_some() || s.d_e.is_some() || s.aux_a.is_some() || s.aux_j.is_some() || s.aux_e.is_some() || s.aux_d.is_some() {
        return Err(nonlinear("sources other than A_e and J_e"));
    }
    let d = dev.dim;
    if d < 3 {
        return Err(nonlinear("device has fewer than three levels"));
    }
    let hbar = spec.hbar;
    let h = &dev.h_dev;
    let scale = linalg::max_abs(h);
    let omega = (h[(1, 1)] - h[(0, 0)]).re / hbar;
    for r in 0..d {
        for col in 0..d {
            let want = if r == col { h[(0, 0)].re + hbar * omega * r as f64 } else { 0.0 };
            if !close(h[(r, col)].re, want, scale) || !close(h[(r, col)].im, 0.0, scale) {
                return Err(nonlinear("device Hamiltonian is not hbar Omega b^† b"));
            }
        }
    }
    let j = &dev.j_ops[0];
    let lam = j[(0, 1)];
    let scale = linalg::max_abs(j);
    if !close(lam.im, 0.0, scale) {
        return Err(nonlinear("current has a complex ladder coefficient"));
    }
    let b = linalg::annihilation(d - 1);
    let want = (&b + b.adjoint()) * lam;
    if linalg::max_abs(&(j - want)) > 1e-9 * scale.max(1.0) {
        return Err(nonlinear("current is not linear in b, b^†"));
    }
    let rho = &dev.rho;
    let p0 = rho[(0, 0)].re;
    let p1 = rho[(1, 1)].re;
    let q = if p0 > 0.0 { p1 / p0 } else { -1.0 };
    ensure((0.0..1.0).contains(&q), || "initial state is not thermal".into())?;
    let nbar = q / (1.0 - q);
    let th = linalg::thermal_state(d - 1, nbar);
    if linalg::max_abs(&(rho - th)) > 1e-9 {
        return Err(nonlinear("initial state is not thermal"));
    }
    Ok(ClassicalDevice::Oscillator(OscillatorDevice {
        hbar,
        omega,
        coupling: lam.re / hbar.sqrt(),
        nbar,
        envelope: dev.current_envelope.clone(),
    }))
}

/// Time-normal moments of `(A + A_e, J)` at `times` on the linear model
/// against Monte Carlo averages of `(A_tot, J)` from `device`. Orders one
/// and two, all time pairs.
pub fn quantum_classical_compare(spec: &SystemSpec, device: &ClassicalDevice, times: &[usize], n_samples: usize, seed: u64) -> Result<CorrespondenceReport> {
    linear_twin(spec)?;
    let ClassicalDevice::Oscillator(osc) = device else {
        return Err(Error::validation("a linear model needs an oscillator twin"));
    };
    let grid = spec.grid;
    ensure(!times.is_empty() && times.iter().all(|&t| t < grid.n), || "moment times must lie on the grid".into())?;
    let row = |s: &Option<Signal>| s.clone().unwrap_or_else(|| Signal::zeros(grid, 1));
    let (a_e, j_e) = (row(&spec.sources.a_e), row(&spec.sources.j_e));
    let dr = kubo_delta_r(&spec.modes, grid, 1)?;
    let a_ext = a_e.add(&kernel_apply(&dr, &j_e, Side::Left)?)?;
    let ens = simulate_scattering(device, &a_ext, &dr, n_samples, seed)?;

    // closed form: J = jd + a h1 + b hi with a, b independent of variance nbar/2
    let (jd, h1, hi) = osc.responses(&a_ext, &dr)?;
    let field = |j: &Signal, base: &Signal| -> Result<Vec<f64>> {
        let r = kernel_apply(&dr, j, Side::Left)?;
        Ok((0..grid.n).map(|k| base.at(0, k).re + r.at(0, k).re).collect())
    };
    let zero = Signal::zeros(grid, 1);
    let re = |s: &Signal| -> Vec<f64> { s.site(0).iter().map(|z| z.re).collect() };
    let jpaths = [re(&jd), re(&h1), re(&hi)];
    let apaths = [field(&jd, &a_ext)?, field(&h1, &zero)?, field(&hi, &zero)?];
    let half = 0.5 * osc.nbar;
    let mean = |p: &[Vec<f64>; 3], t: usize| p[0][t];
    let second = |p: &[Vec<f64>; 3], t: usize, q: &[Vec<f64>; 3], t2: usize| {
        p[0][t] * q[0][t2] + half * (p[1][t] * q[1][t2] + p[2][t] * q[2][t2])
    };

    let model = build_system(spec.clone())?;
    let a = |k: usize| Slot::broad(OpId::A(0), &grid, k);
    let j = |k: usize| Slot::broad(OpId::J(0), &grid, k);
    let ae = |k: usize| a_e.at(0, k);
    let mut entries = Vec::new();
    let mut push = |moment: String, q: C64, samples: Vec<f64>, closed: f64| {
        let (m, se) = jackknife(&samples, f64::abs);
        entries.push(MomentComparison { moment, quantum: q.re, quantum_imag: q.im, classical: m, stderr: se, closed_form: closed });
    };
    let mut a1 = Vec::new();
    let mut j1 = Vec::new();
    for &t in times {
        let qa = weighted_tc(&model, &[a(t)])?;
        let qj = weighted_tc(&model, &[j(t)])?;
        a1.push(qa);
        j1.push(qj);
        push(format!("A({t})"), qa + ae(t), ens.a_tot.iter().map(|v| v[t]).collect(), mean(&apaths, t));
        push(format!("J({t})"), qj, ens.j.iter().map(|v| v[t]).collect(), mean(&jpaths, t));
    }
    for (i1, &t1) in times.iter().enumerate() {
        for (i2, &t2) in times.iter().enumerate() {
            if i2 >= i1 {
                let q = weighted_tc(&model, &[a(t1), a(t2)])? + ae(t1) * a1[i2] + ae(t2) * a1[i1] + ae(t1) * ae(t2);
                let samples = ens.a_tot.iter().map(|v| v[t1] * v[t2]).collect();
                push(format!("AA({t1},{t2})"), q, samples, second(&apaths, t1, &apaths, t2));
                let q = weighted_tc(&model, &[j(t1), j(t2)])?;
                let samples = ens.j.iter().map(|v| v[t1] * v[t2]).collect();
                push(format!("JJ({t1},{t2})"), q, samples, second(&jpaths, t1, &jpaths, t2));
            }
            let q = weighted_tc(&model, &[a(t1), j(t2)])? + ae(t1) * j1[i2];
            let samples = ens.a_tot.iter().zip(&ens.j).map(|(a, j)| a[t1] * j[t2]).collect();
            push(format!("AJ({t1},{t2})"), q, samples, second(&apaths, t1, &jpaths, t2));
        }
    }
    Ok(CorrespondenceReport { samples: n_samples, times: times.to_vec(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DeviceSpec, ModeSpec, SourceSet, DEFAULT_MAX_DIM};
    use crate::signals::make_grid;

    fn grid() -> TimeGrid {
        make_grid(0.0, 0.1, 64).unwrap()
    }

    fn kernel(g: TimeGrid) -> TwoTimeKernel {
        kubo_delta_r(&[ModeSpec::nonresonant(1.3, vec![c(1.0, 0.0)])], g, 1).unwrap()
    }

    fn bump(g: TimeGrid, centre: f64, amp: f64) -> Signal {
        Signal::from_real(g, 1, |_, t| amp * (-(t - centre).powi(2)).exp())
    }

    fn ou_cov(n: usize, dt: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |a, b| 0.4 * (-((a as f64 - b as f64).abs() * dt) / 0.7).exp())
    }

    #[test]
    fn deterministic_device_scatters_exactly() {
        let g = grid();
        let dr = kernel(g);
        let j = bump(g, 2.0, 0.8);
        let a_ext = bump(g, 3.0, 0.5);
        let ens = simulate_scattering(&ClassicalDevice::Deterministic(j.clone()), &a_ext, &dr, 5, 1).unwrap();
        let rad = kernel_apply(&dr, &j, Side::Left).unwrap();
        let want: Vec<f64> = (0..g.n).map(|k| a_ext.at(0, k).re + rad.at(0, k).re).collect();
        for i in 0..5 {
            assert_eq!(ens.a_tot[i], want);
            assert_eq!(ens.current(i), j);
        }
    }

    #[test]
    fn fixed_seed_gives_identical_ensembles() {
        let g = grid();
        let dev = ClassicalDevice::Gaussian(GaussianCurrent::new(bump(g, 2.0, 0.3), ou_cov(g.n, g.dt)).unwrap());
        let a = simulate_scattering(&dev, &bump(g, 3.0, 0.5), &kernel(g), 20, 9).unwrap();
        let b = simulate_scattering(&dev, &bump(g, 3.0, 0.5), &kernel(g), 20, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_samples_is_rejected() {
        let g = grid();
        assert!(simulate_scattering(&ClassicalDevice::Deterministic(Signal::zeros(g, 1)), &Signal::zeros(g, 1), &kernel(g), 0, 1).is_err());
    }

    #[test]
    fn trivial_test_functions_give_one() {
        let g = grid();
        let dev = ClassicalDevice::Gaussian(GaussianCurrent::new(bump(g, 2.0, 0.3), ou_cov(g.n, g.dt)).unwrap());
        let ens = simulate_scattering(&dev, &bump(g, 3.0, 0.5), &kernel(g), 300, 2).unwrap();
        let e = conditional_char_estimate(&ens, &Signal::zeros(g, 1), &Signal::zeros(g, 1)).unwrap();
        assert_eq!(e.value, c(1.0, 0.0));
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn deterministic_char_is_exact_phase() {
        let g = grid();
        let dr = kernel(g);
        let j = bump(g, 2.0, 0.8);
        let a_ext = bump(g, 3.0, 0.5);
        let ens = simulate_scattering(&ClassicalDevice::Deterministic(j.clone()), &a_ext, &dr, 250, 3).unwrap();
        let eta = bump(g, 4.0, 0.7);
        let zeta = bump(g, 1.5, -0.4);
        let e = conditional_char_estimate(&ens, &eta, &zeta).unwrap();
        let dotr = |f: &Signal, v: &[f64]| -> C64 { f.values.iter().zip(v).map(|(z, x)| z * *x).sum::<C64>() * g.dt };
        let want = (linalg::I * (dotr(&eta, &ens.a_tot[0]) + dotr(&zeta, &ens.j[0]))).exp();
        assert_eq!(e.value, want);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn jackknife_of_constant_is_exact() {
        let v = vec![0.1f64; 1234];
        assert_eq!(jackknife(&v, f64::abs), (0.1, 0.0));
    }

    #[test]
    fn nonlinear_model_is_rejected() {
        let g = make_grid(0.0, 0.05, 40).unwrap();
        let sx = crate::models::sigma_x();
        let spec = SystemSpec {
            hbar: 1.0,
            grid: g,
            sites: 1,
            modes: vec![ModeSpec::nonresonant(2.0, vec![c(1.0, 0.0)])],
            fock_cutoff: 3,
            device: DeviceSpec {
                dim: 2,
                h_dev: crate::models::sigma_z(),
                j_ops: vec![sx],
                d_ops: vec![linalg::zeros(2)],
                rho: crate::models::reference_rho(),
                current_envelope: None,
                extra_ops: vec![],
                extra_currents: vec![],
            },
            sources: SourceSet::default(),
            max_dim: DEFAULT_MAX_DIM,
        };
        assert!(matches!(linear_twin(&spec), Err(Error::Validation(_))));
        let dev = ClassicalDevice::Deterministic(Signal::zeros(g, 1));
        assert!(matches!(quantum_classical_compare(&spec, &dev, &[10], 10, 1), Err(Error::Validation(_))));
    }

    #[test]
    fn twin_recovers_oscillator_parameters() {
        let spec = crate::models::linear_reference(&crate::models::LinearParams::default(), 0.05, 2.0).unwrap();
        let ClassicalDevice::Oscillator(o) = linear_twin(&spec).unwrap() else { panic!("oscillator expected") };
        let p = crate::models::LinearParams::default();
        assert!((o.omega - p.device_omega).abs() < 1e-12);
        assert!((o.coupling - p.coupling).abs() < 1e-12);
        assert!((o.nbar - p.nbar).abs() < 1e-12);
        assert_eq!(o.hbar, 2.0);
    }

    #[test]
    fn gaussian_char_matches_closed_form() {
        let g = grid();
        let dr = kernel(g);
        let mean = bump(g, 2.0, 0.3);
        let cov = ou_cov(g.n, g.dt);
        let a_ext = bump(g, 3.0, 0.5);
        let dev = ClassicalDevice::Gaussian(GaussianCurrent::new(mean.clone(), cov.clone()).unwrap());
        let ens = simulate_scattering(&dev, &a_ext, &dr, 20000, 11).unwrap();
        let eta = bump(g, 4.0, 0.9);
        let zeta = bump(g, 1.5, -0.6);
        let est = conditional_char_estimate(&ens, &eta, &zeta).unwrap();
        // <eta, Delta_R J> = <zeta_eff - zeta, J> by explicit double sum
        let n = g.n;
        let zeff: Vec<f64> = (0..n)
            .map(|s| zeta.at(0, s).re + (0..n).map(|t| eta.at(0, t).re * dr.get(0, 0, t as i64 - s as i64).re * g.dt).sum::<f64>())
            .collect();
        let lin: f64 = (0..n).map(|t| eta.at(0, t).re * a_ext.at(0, t).re + zeff[t] * mean.at(0, t).re).sum::<f64>() * g.dt;
        let mut quad = 0.0;
        for a in 0..n {
            for b in 0..n {
                quad += zeff[a] * cov[(a, b)] * zeff[b];
            }
        }
        let want = C64::from_polar((-0.5 * quad * g.dt * g.dt).exp(), lin);
        assert!((est.value - want).norm() <= 3.0 * est.stderr, "{} vs {want}, se {}", est.value, est.stderr);
        assert!(est.stderr < 0.02);
    }

    #[test]
    fn gaussian_mean_is_recovered_within_three_se() {
        let g = grid();
        let mean = bump(g, 2.0, 0.3);
        let dev = ClassicalDevice::Gaussian(GaussianCurrent::new(mean.clone(), ou_cov(g.n, g.dt)).unwrap());
        let ens = simulate_scattering(&dev, &Signal::zeros(g, 1), &kernel(g), 5000, 5).unwrap();
        for k in [0, 20, 40, 63] {
            let v: Vec<f64> = ens.j.iter().map(|p| p[k]).collect();
            let (m, se) = jackknife(&v, f64::abs);
            assert!((m - mean.at(0, k).re).abs() <= 3.0 * se, "k {k}: {m} se {se}");
        }
    }

    #[test]
    fn stderr_halves_with_four_times_the_samples() {
        let g = grid();
        let dev = ClassicalDevice::Gaussian(GaussianCurrent::new(bump(g, 2.0, 0.3), ou_cov(g.n, g.dt)).unwrap());
        let se = |n: usize| {
            let ens = simulate_scattering(&dev, &Signal::zeros(g, 1), &kernel(g), n, 21).unwrap();
            let v: Vec<f64> = ens.j.iter().map(|p| p[30]).collect();
            jackknife(&v, f64::abs).1
        };
        let r = se(8000) / se(32000);
        assert!((r - 2.0).abs() < 0.3, "{r}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn char_estimate_is_bounded(ea in -3.0f64..3.0, za in -3.0f64..3.0, seed in 0u64..1000) {
            let g = grid();
            let dev = ClassicalDevice::Gaussian(GaussianCurrent::new(bump(g, 2.0, 0.3), ou_cov(g.n, g.dt)).unwrap());
            let ens = simulate_scattering(&dev, &bump(g, 3.0, 0.5), &kernel(g), 50, seed).unwrap();
            let e = conditional_char_estimate(&ens, &bump(g, 4.0, ea), &bump(g, 1.0, za)).unwrap();
            proptest::prop_assert!(e.value.norm() <= 1.0 + 1e-12);
            proptest::prop_assert!(e.stderr >= 0.0 && e.stderr.is_finite());
        }

        #[test]
        fn jackknife_of_any_constant_has_zero_error(x in -1e6f64..1e6, n in 1usize..2000) {
            let v = vec![x; n];
            proptest::prop_assert_eq!(jackknife(&v, f64::abs), (x, 0.0));
        }
    }
}
