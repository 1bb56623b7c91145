//! Finite quantum model: Fock-truncated field modes coupled to a
//! finite-dimensional device, propagated on a uniform grid.
//!
//! The Schrödinger picture is used throughout. Field operators are the
//! static `t = 0` forms, the free-mode energy is carried by the Hamiltonian,
//! and resonant modes evolve in the frame rotating at their carrier.
//! Step `k` runs from `t_k` to `t_{k+1}` with c-number coefficients averaged
//! over its two end samples (the last step wraps to sample 0).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::signals::{freq_split, Signal, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Resonant,
    Nonresonant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub omega: f64,
    pub u: Vec<C64>,
    pub band: Band,
    /// Carrier of the rotating frame; only read for resonant modes.
    pub carrier: f64,
}

impl ModeSpec {
    pub fn nonresonant(omega: f64, u: Vec<C64>) -> Self {
        ModeSpec { omega, u, band: Band::Nonresonant, carrier: 0.0 }
    }

    pub fn resonant(omega: f64, carrier: f64, u: Vec<C64>) -> Self {
        ModeSpec { omega, u, band: Band::Resonant, carrier }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub dim: usize,
    pub h_dev: CMat,
    /// Current operator per site.
    pub j_ops: Vec<CMat>,
    /// Dipole lowering operator per site.
    pub d_ops: Vec<CMat>,
    pub rho: CMat,
    /// Optional real envelope `g(t_k)` making the current `g(t) J`.
    pub current_envelope: Option<Vec<f64>>,
    /// Additional named device operators (e.g. factor operators of a dipole).
    pub extra_ops: Vec<(String, CMat)>,
    /// Further current contributions `g_p(t) J_p`, added to `g(t) J`.
    pub extra_currents: Vec<CurrentPart>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentPart {
    /// Operator per site.
    pub ops: Vec<CMat>,
    pub envelope: Vec<f64>,
}

impl DeviceSpec {
    pub fn trivial(sites: usize) -> Self {
        DeviceSpec {
            dim: 1,
            h_dev: linalg::zeros(1),
            j_ops: vec![linalg::zeros(1); sites],
            d_ops: vec![linalg::zeros(1); sites],
            rho: linalg::eye(1),
            current_envelope: None,
            extra_ops: Vec::new(),
            extra_currents: Vec::new(),
        }
    }
}

/// External and auxiliary c-number sources. `None` means identically zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceSet {
    pub a_e: Option<Signal>,
    pub j_e: Option<Signal>,
    pub e_e: Option<Signal>,
    pub d_e: Option<Signal>,
    pub aux_a: Option<Signal>,
    pub aux_j: Option<Signal>,
    pub aux_e: Option<Signal>,
    pub aux_d: Option<Signal>,
}

impl SourceSet {
    fn all(&self) -> [(&'static str, &Option<Signal>); 8] {
        [
            ("A_e", &self.a_e),
            ("J_e", &self.j_e),
            ("E_e", &self.e_e),
            ("D_e", &self.d_e),
            ("a_e", &self.aux_a),
            ("j_e", &self.aux_j),
            ("e_e", &self.aux_e),
            ("d_e", &self.aux_d),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub hbar: f64,
    pub grid: TimeGrid,
    pub sites: usize,
    pub modes: Vec<ModeSpec>,
    pub fock_cutoff: usize,
    pub device: DeviceSpec,
    pub sources: SourceSet,
    pub max_dim: usize,
}

pub const DEFAULT_MAX_DIM: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum OpId {
    J(usize),
    D(usize),
    Ddag(usize),
    A(usize),
    E(usize),
    Edag(usize),
    /// Field-mode annihilator by mode index.
    Mode(usize),
    /// Named device operator from `DeviceSpec::extra_ops`.
    Device(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchInsertion {
    pub op: OpId,
    pub k: usize,
    pub branch: Branch,
}

/// A generator term `coeff(t_k) * mat`; coefficients are per grid sample.
#[derive(Debug, Clone)]
pub struct Term {
    pub coeff: Vec<C64>,
    pub mat: CMat,
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub spec: SystemSpec,
    pub dim: usize,
    pub a_ops: Vec<CMat>,
    pub field_a: Vec<CMat>,
    pub field_e: Vec<CMat>,
    /// Current contributions as (operator per site, envelope); the current
    /// at sample `k` is the envelope-weighted sum.
    pub currents: Vec<(Vec<CMat>, Vec<f64>)>,
    pub d_ops: Vec<CMat>,
    pub extra_ops: Vec<(String, CMat)>,
    pub h_static: CMat,
    pub terms: Vec<Term>,
    pub rho: CMat,
    /// Columns `sqrt(p_i) v_i` over the non-negligible eigenpairs of `rho`.
    pub rho_factor: CMat,
    sparse_static: linalg::Csr,
    sparse_terms: Vec<linalg::Csr>,
    run_cache: Arc<Mutex<HashMap<RunKey, CMat>>>,
}

type RunKey = (bool, Vec<(u64, u64)>, usize);

fn check_hermitian(m: &CMat, what: &str) -> Result<()> {
    let d = linalg::hermiticity_defect(m);
    ensure(d <= 1e-12, || format!("{what} is not Hermitian (defect {d:.3e})"))
}

fn check_signal(s: &Option<Signal>, name: &str, grid: &TimeGrid, sites: usize, real: bool) -> Result<()> {
    if let Some(s) = s {
        ensure(s.grid.same_as(grid), || format!("source {name} is on a different grid"))?;
        ensure(s.sites == sites, || format!("source {name} has {} sites, expected {sites}", s.sites))?;
        if real {
            ensure(s.is_real(1e-12), || format!("source {name} must be real"))?;
        }
    }
    Ok(())
}

fn validate(spec: &SystemSpec) -> Result<usize> {
    ensure(spec.hbar > 0.0, || "hbar must be positive".into())?;
    ensure(spec.sites >= 1, || "need at least one site".into())?;
    let dev = &spec.device;
    ensure(dev.dim >= 1, || "device dimension must be positive".into())?;
    ensure(dev.h_dev.shape() == (dev.dim, dev.dim), || "H_dev has wrong shape".into())?;
    check_hermitian(&dev.h_dev, "H_dev")?;
    ensure(dev.rho.shape() == (dev.dim, dev.dim), || "rho_dev has wrong shape".into())?;
    check_hermitian(&dev.rho, "rho_dev")?;
    let tr = dev.rho.trace();
    ensure((tr - c(1.0, 0.0)).norm() <= 1e-12, || format!("rho_dev trace is {tr}, not 1"))?;
    let ev = dev.rho.clone().symmetric_eigenvalues();
    ensure(ev.iter().all(|&e| e >= -1e-12), || "rho_dev is not positive semidefinite".into())?;
    ensure(dev.j_ops.len() == spec.sites && dev.d_ops.len() == spec.sites, || {
        "one current and one dipole operator per site are required".into()
    })?;
    for (x, j) in dev.j_ops.iter().enumerate() {
        ensure(j.shape() == (dev.dim, dev.dim), || format!("J({x}) has wrong shape"))?;
        check_hermitian(j, &format!("J({x})"))?;
    }
    for (x, d) in dev.d_ops.iter().enumerate() {
        ensure(d.shape() == (dev.dim, dev.dim), || format!("D({x}) has wrong shape"))?;
    }
    for (name, m) in &dev.extra_ops {
        ensure(m.shape() == (dev.dim, dev.dim), || format!("device op {name} has wrong shape"))?;
    }
    if let Some(env) = &dev.current_envelope {
        ensure(env.len() == spec.grid.n, || "current envelope length differs from grid".into())?;
    }
    for (p, part) in dev.extra_currents.iter().enumerate() {
        ensure(part.envelope.len() == spec.grid.n, || format!("envelope of current part {p} has wrong length"))?;
        ensure(part.ops.len() == spec.sites, || format!("current part {p} needs one operator per site"))?;
        for j in &part.ops {
            ensure(j.shape() == (dev.dim, dev.dim), || format!("current part {p} has wrong shape"))?;
            check_hermitian(j, &format!("current part {p}"))?;
        }
    }
    for m in &spec.modes {
        ensure(m.omega > 0.0, || format!("mode frequency must be positive, got {}", m.omega))?;
        ensure(m.u.len() == spec.sites, || "mode vector length differs from site count".into())?;
    }
    for (name, s) in spec.sources.all() {
        let real = matches!(name, "A_e" | "J_e" | "a_e" | "j_e");
        check_signal(s, name, &spec.grid, spec.sites, real)?;
    }
    let levels = spec.fock_cutoff + 1;
    let mut dim = dev.dim;
    for _ in &spec.modes {
        dim = dim.checked_mul(levels).ok_or_else(|| Error::validation("dimension overflow"))?;
    }
    ensure(dim <= spec.max_dim, || format!("Hilbert dimension {dim} exceeds bound {}", spec.max_dim))?;
    Ok(dim)
}

/// Embeds a device operator and optionally one mode operator into the
/// product space `device ⊗ mode_0 ⊗ mode_1 ⊗ ...`.
fn embed(dev: &CMat, mode_op: Option<(usize, &CMat)>, n_modes: usize, levels: usize) -> CMat {
    let mut out = dev.clone();
    for m in 0..n_modes {
        let f = match mode_op {
            Some((k, op)) if k == m => op.clone(),
            _ => linalg::eye(levels),
        };
        out = linalg::kron(&out, &f);
    }
    out
}

fn sig_row(s: &Option<Signal>, x: usize, n: usize) -> Vec<C64> {
    match s {
        Some(s) => s.site(x).to_vec(),
        None => vec![c(0.0, 0.0); n],
    }
}

/// Columns `sqrt(p_i) v_i` over eigenpairs with `p_i > 1e-15`.
fn factor_state(rho: &CMat) -> CMat {
    let dim = rho.nrows();
    let diagonal = (0..dim).all(|i| (0..dim).all(|j| i == j || rho[(i, j)] == c(0.0, 0.0)));
    let (vals, vecs) = if diagonal {
        ((0..dim).map(|i| rho[(i, i)].re).collect::<Vec<_>>(), linalg::eye(dim))
    } else {
        let eig = rho.clone().symmetric_eigen();
        (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors)
    };
    let keep: Vec<usize> = (0..dim).filter(|&i| vals[i] > 1e-15).collect();
    CMat::from_fn(dim, keep.len(), |r, j| vecs[(r, keep[j])] * vals[keep[j]].sqrt())
}

pub fn build_system(spec: SystemSpec) -> Result<SystemModel> {
    let dim = validate(&spec)?;
    let hbar = spec.hbar;
    let levels = spec.fock_cutoff + 1;
    let nm = spec.modes.len();
    let dd = spec.device.dim;
    let n = spec.grid.n;
    let dev_id = linalg::eye(dd);
    let a1 = linalg::annihilation(spec.fock_cutoff);
    let a_ops: Vec<CMat> = (0..nm).map(|k| embed(&dev_id, Some((k, &a1)), nm, levels)).collect();

    let mut field_a = vec![linalg::zeros(dim); spec.sites];
    let mut field_e = vec![linalg::zeros(dim); spec.sites];
    let mut h_static = embed(&spec.device.h_dev, None, nm, levels);
    for (k, m) in spec.modes.iter().enumerate() {
        let a = &a_ops[k];
        let ad = a.adjoint();
        let number = linalg::Csr::from_dense(&ad).mul_dense(a);
        match m.band {
            Band::Nonresonant => {
                h_static += &number * c(hbar * m.omega, 0.0);
                let s = (hbar / (2.0 * m.omega)).sqrt();
                for x in 0..spec.sites {
                    field_a[x] += a * (m.u[x] * s) + &ad * (m.u[x].conj() * s);
                }
            }
            Band::Resonant => {
                h_static += &number * c(hbar * (m.omega - m.carrier), 0.0);
                let s = (hbar * m.omega / 2.0).sqrt();
                for x in 0..spec.sites {
                    field_e[x] += a * (linalg::I * m.u[x] * s);
                }
            }
        }
    }
    let embed_all = |ops: &[CMat]| -> Vec<CMat> { ops.iter().map(|j| embed(j, None, nm, levels)).collect() };
    let d_ops: Vec<CMat> = spec.device.d_ops.iter().map(|d| embed(d, None, nm, levels)).collect();
    let extra_ops = spec
        .device
        .extra_ops
        .iter()
        .map(|(name, m)| (name.clone(), embed(m, None, nm, levels)))
        .collect();
    let mut currents = vec![(
        embed_all(&spec.device.j_ops),
        spec.device.current_envelope.clone().unwrap_or_else(|| vec![1.0; n]),
    )];
    for part in &spec.device.extra_currents {
        currents.push((embed_all(&part.ops), part.envelope.clone()));
    }

    let mut vac = linalg::zeros(levels);
    vac[(0, 0)] = c(1.0, 0.0);
    let mut rho = spec.device.rho.clone();
    for _ in 0..nm {
        rho = linalg::kron(&rho, &vac);
    }

    // H_I with sources, as a list of coefficient x matrix terms.
    let mut terms = Vec::new();
    let minus_one = c(-1.0, 0.0);
    let src = &spec.sources;
    let has_nonres = spec.modes.iter().any(|m| m.band == Band::Nonresonant);
    let has_res = spec.modes.iter().any(|m| m.band == Band::Resonant);
    for x in 0..spec.sites {
        for (ops, envelope) in &currents {
            let env: Vec<C64> = envelope.iter().map(|&g| c(g, 0.0)).collect();
            if has_nonres {
                terms.push(Term { coeff: env.iter().map(|g| g * minus_one).collect(), mat: linalg::Csr::from_dense(&ops[x]).mul_dense(&field_a[x]) });
            }
            if src.a_e.is_some() {
                let ae = sig_row(&src.a_e, x, n);
                terms.push(Term { coeff: ae.iter().zip(&env).map(|(a, g)| -a * g).collect(), mat: ops[x].clone() });
            }
        }
        if src.j_e.is_some() && has_nonres {
            terms.push(Term { coeff: sig_row(&src.j_e, x, n).iter().map(|v| -v).collect(), mat: field_a[x].clone() });
        }
        if has_res {
            let de = &d_ops[x] * field_e[x].adjoint();
            terms.push(Term { coeff: vec![minus_one; n], mat: &de + de.adjoint() });
        }
        if src.e_e.is_some() {
            let ee = sig_row(&src.e_e, x, n);
            terms.push(Term { coeff: ee.iter().map(|e| -e.conj()).collect(), mat: d_ops[x].clone() });
            terms.push(Term { coeff: ee.iter().map(|e| -e).collect(), mat: d_ops[x].adjoint() });
        }
        if src.d_e.is_some() && has_res {
            let de = sig_row(&src.d_e, x, n);
            terms.push(Term { coeff: de.iter().map(|d| -d).collect(), mat: field_e[x].adjoint() });
            terms.push(Term { coeff: de.iter().map(|d| -d.conj()).collect(), mat: field_e[x].clone() });
        }
    }
    terms.retain(|t| t.coeff.iter().any(|z| z.norm() > 0.0) && linalg::max_abs(&t.mat) > 0.0);

    let rho_factor = factor_state(&rho);
    let sparse_static = linalg::Csr::from_dense(&h_static);
    let sparse_terms = terms.iter().map(|t| linalg::Csr::from_dense(&t.mat)).collect();

    Ok(SystemModel {
        dim,
        a_ops,
        field_a,
        field_e,
        currents,
        d_ops,
        extra_ops,
        h_static,
        terms,
        rho,
        rho_factor,
        sparse_static,
        sparse_terms,
        run_cache: Arc::default(),
        spec,
    })
}

impl SystemModel {
    pub fn grid(&self) -> TimeGrid {
        self.spec.grid
    }

    pub fn hbar(&self) -> f64 {
        self.spec.hbar
    }

    /// Schrödinger-picture matrix of `op` at sample `k` (the current carries
    /// its envelope).
    pub fn op_matrix(&self, op: &OpId, k: usize) -> Result<CMat> {
        let sites = self.spec.sites;
        let site = |x: usize| -> Result<usize> {
            ensure(x < sites, || format!("site {x} out of range"))?;
            Ok(x)
        };
        Ok(match op {
            OpId::J(x) => {
                let x = site(*x)?;
                let mut m = linalg::zeros(self.dim);
                for (ops, env) in &self.currents {
                    if env[k] != 0.0 {
                        m += &ops[x] * c(env[k], 0.0);
                    }
                }
                m
            }
            OpId::D(x) => self.d_ops[site(*x)?].clone(),
            OpId::Ddag(x) => self.d_ops[site(*x)?].adjoint(),
            OpId::A(x) => self.field_a[site(*x)?].clone(),
            OpId::E(x) => self.field_e[site(*x)?].clone(),
            OpId::Edag(x) => self.field_e[site(*x)?].adjoint(),
            OpId::Mode(m) => {
                ensure(*m < self.a_ops.len(), || format!("mode {m} out of range"))?;
                self.a_ops[*m].clone()
            }
            OpId::Device(name) => self
                .extra_ops
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| Error::validation(format!("unknown device operator {name}")))?,
        })
    }

    /// Hamiltonian on step `k` with step-averaged sources.
    pub fn step_hamiltonian(&self, k: usize) -> CMat {
        let n = self.spec.grid.n;
        let k1 = (k + 1) % n;
        let mut h = self.h_static.clone();
        for t in &self.terms {
            let w = (t.coeff[k] + t.coeff[k1]) * 0.5;
            if w != c(0.0, 0.0) {
                h += &t.mat * w;
            }
        }
        h
    }
}

/// Branch coefficients of the test-function couplings, per grid sample.
/// The + branch carries `exp(i sum c O)`, the − branch `exp(-i sum c O)`.
#[derive(Debug, Clone, Default)]
pub struct BranchSources {
    pub plus: Vec<Term>,
    pub minus: Vec<Term>,
}

/// Physical test functions `eta` (A), `zeta` (J), `mu` (E), `nu` (D).
#[derive(Debug, Clone, Default)]
pub struct TestFunctionSet {
    pub eta: Option<Signal>,
    pub zeta: Option<Signal>,
    pub mu: Option<Signal>,
    pub nu: Option<Signal>,
}

impl TestFunctionSet {
    pub fn zeta(z: Signal) -> Self {
        TestFunctionSet { zeta: Some(z), ..Default::default() }
    }
}

fn split_rows(s: &Option<Signal>, x: usize, n: usize) -> (Vec<C64>, Vec<C64>) {
    match s {
        Some(s) => {
            let (p, m) = freq_split(s);
            (p.site(x).to_vec(), m.site(x).to_vec())
        }
        None => (vec![c(0.0, 0.0); n], vec![c(0.0, 0.0); n]),
    }
}

/// Applies the response substitutions to produce branch couplings.
pub fn response_substitutions(model: &SystemModel, tf: &TestFunctionSet) -> Result<BranchSources> {
    let spec = &model.spec;
    let n = spec.grid.n;
    let hb = spec.hbar;
    for (name, s) in [("eta", &tf.eta), ("zeta", &tf.zeta), ("mu", &tf.mu), ("nu", &tf.nu)] {
        check_signal(s, name, &spec.grid, spec.sites, false)?;
    }
    let src = &spec.sources;
    let mut out = BranchSources::default();
    let push = |v: &mut Vec<Term>, coeff: Vec<C64>, mat: CMat| {
        if coeff.iter().any(|z| z.norm() > 0.0) && linalg::max_abs(&mat) > 0.0 {
            v.push(Term { coeff, mat });
        }
    };
    let zero = || vec![c(0.0, 0.0); n];
    for x in 0..spec.sites {
        // eta_± = j_e/hbar ± eta^(∓)
        let (ep, em) = split_rows(&tf.eta, x, n);
        let je = sig_row(&src.aux_j, x, n);
        let eta_p: Vec<C64> = (0..n).map(|k| je[k] / hb + em[k]).collect();
        let eta_m: Vec<C64> = (0..n).map(|k| je[k] / hb - ep[k]).collect();
        push(&mut out.plus, eta_p, model.field_a[x].clone());
        push(&mut out.minus, eta_m, model.field_a[x].clone());
        // zeta_± = a_e/hbar ± zeta^(∓), acting on g(t) J
        let (zp, zm) = split_rows(&tf.zeta, x, n);
        let ae = sig_row(&src.aux_a, x, n);
        for (ops, env) in &model.currents {
            let z_p: Vec<C64> = (0..n).map(|k| (ae[k] / hb + zm[k]) * env[k]).collect();
            let z_m: Vec<C64> = (0..n).map(|k| (ae[k] / hb - zp[k]) * env[k]).collect();
            push(&mut out.plus, z_p, ops[x].clone());
            push(&mut out.minus, z_m, ops[x].clone());
        }
        // resonant field: mu_+ = d_e/hbar, mubar_+ = mu* + d_e*/hbar,
        // mubar_- = d_e*/hbar, mu_- = mu + d_e/hbar
        let mu = tf.mu.as_ref().map(|s| s.site(x).to_vec()).unwrap_or_else(zero);
        let de = sig_row(&src.aux_d, x, n);
        let e = &model.field_e[x];
        let ed = e.adjoint();
        push(&mut out.plus, (0..n).map(|k| mu[k].conj() + de[k].conj() / hb).collect(), e.clone());
        push(&mut out.plus, (0..n).map(|k| de[k] / hb).collect(), ed.clone());
        push(&mut out.minus, (0..n).map(|k| de[k].conj() / hb).collect(), e.clone());
        push(&mut out.minus, (0..n).map(|k| mu[k] + de[k] / hb).collect(), ed);
        // dipoles: same pattern with nu and e_e
        let nu = tf.nu.as_ref().map(|s| s.site(x).to_vec()).unwrap_or_else(zero);
        let ee = sig_row(&src.aux_e, x, n);
        let d = &model.d_ops[x];
        let dd = d.adjoint();
        push(&mut out.plus, (0..n).map(|k| nu[k].conj() + ee[k].conj() / hb).collect(), d.clone());
        push(&mut out.plus, (0..n).map(|k| ee[k] / hb).collect(), dd.clone());
        push(&mut out.minus, (0..n).map(|k| ee[k].conj() / hb).collect(), d.clone());
        push(&mut out.minus, (0..n).map(|k| nu[k] + ee[k] / hb).collect(), dd);
    }
    Ok(out)
}

/// Per-step generator of one branch: `H_k - hbar X_k` on +, `H_k - hbar X_k^†`
/// on −, where `X_k = sum c O` is step-averaged.
fn branch_generator(model: &SystemModel, extra: &[Term], branch: Branch, k: usize) -> CMat {
    let n = model.spec.grid.n;
    let k1 = (k + 1) % n;
    let mut h = model.step_hamiltonian(k);
    let hb = model.spec.hbar;
    for t in extra {
        let w = (t.coeff[k] + t.coeff[k1]) * 0.5;
        if w == c(0.0, 0.0) {
            continue;
        }
        match branch {
            Branch::Plus => h -= &t.mat * (w * hb),
            Branch::Minus => h -= t.mat.adjoint() * (w.conj() * hb),
        }
    }
    h
}

fn step_key(model: &SystemModel, extra: &[Term], k: usize) -> Vec<C64> {
    let n = model.spec.grid.n;
    let k1 = (k + 1) % n;
    model
        .terms
        .iter()
        .chain(extra.iter())
        .map(|t| (t.coeff[k] + t.coeff[k1]) * 0.5)
        .collect()
}

/// Ordered step propagators `exp(-i G_k dt / hbar)`, `k = 0..n`.
#[derive(Debug, Clone)]
pub struct PropagatorChain {
    pub branch: Branch,
    pub steps: Vec<CMat>,
}

impl PropagatorChain {
    /// Time-ordered product of all steps (latest on the left).
    pub fn product(&self) -> CMat {
        let d = self.steps.first().map(|s| s.nrows()).unwrap_or(1);
        self.steps.iter().fold(linalg::eye(d), |acc, s| s * acc)
    }
}

/// Calls `f(k, U_step)` for every step, reusing exponentials over runs of
/// identical generators.
fn for_each_step(
    model: &SystemModel,
    extra: &[Term],
    branch: Branch,
    steps: usize,
    mut f: impl FnMut(usize, &CMat),
) {
    let dt = model.spec.grid.dt / model.spec.hbar;
    let mut last_key: Option<Vec<C64>> = None;
    let mut u = linalg::eye(model.dim);
    for k in 0..steps {
        let key = step_key(model, extra, k);
        if last_key.as_ref() != Some(&key) {
            u = linalg::step_unitary(&branch_generator(model, extra, branch, k), dt);
            last_key = Some(key);
        }
        f(k, &u);
    }
}

pub fn propagate_branch(model: &SystemModel, branch: Branch, tf: &TestFunctionSet) -> Result<PropagatorChain> {
    let bs = response_substitutions(model, tf)?;
    let extra = match branch {
        Branch::Plus => &bs.plus,
        Branch::Minus => &bs.minus,
    };
    let mut steps = Vec::with_capacity(model.spec.grid.n);
    for_each_step(model, extra, branch, model.spec.grid.n, |_, u| steps.push(u.clone()));
    Ok(PropagatorChain { branch, steps })
}

/// Full-window product of one branch, folding runs of identical steps into
/// matrix powers.
fn branch_product(model: &SystemModel, extra: &[Term], branch: Branch) -> CMat {
    let n = model.spec.grid.n;
    let dt = model.spec.grid.dt / model.spec.hbar;
    let mut total = linalg::eye(model.dim);
    let mut k = 0;
    while k < n {
        let key = step_key(model, extra, k);
        let mut r = 1;
        while k + r < n && step_key(model, extra, k + r) == key {
            r += 1;
        }
        let u = linalg::step_unitary(&branch_generator(model, extra, branch, k), dt);
        let block = if r == 1 { u } else { linalg::matrix_power(&u, r) };
        total = block * total;
        k += r;
    }
    total
}

/// Closed-time-loop generating value `Tr[rho U_-^† U_+]`.
pub fn tc_generating(model: &SystemModel, tf: &TestFunctionSet) -> Result<C64> {
    let bs = response_substitutions(model, tf)?;
    Ok(generating_from_branches(model, &bs))
}

pub fn generating_from_branches(model: &SystemModel, bs: &BranchSources) -> C64 {
    if 4 * model.rho_factor.ncols() <= model.dim {
        let wp = branch_action(model, &bs.plus, Branch::Plus);
        let wm = branch_action(model, &bs.minus, Branch::Minus);
        return wm.iter().zip(wp.iter()).map(|(a, b)| a.conj() * b).sum();
    }
    let up = branch_product(model, &bs.plus, Branch::Plus);
    let um = branch_product(model, &bs.minus, Branch::Minus);
    linalg::trace_prod(&model.rho, &(um.adjoint() * up))
}

/// One branch applied to the columns of `rho_factor` with sparse
/// generators. Long non-diagonal runs fall back to a cached matrix power.
fn branch_action(model: &SystemModel, extra: &[Term], branch: Branch) -> CMat {
    let n = model.spec.grid.n;
    let dt = model.spec.grid.dt / model.spec.hbar;
    let hb = model.spec.hbar;
    let extra_sparse: Vec<linalg::Csr> = extra
        .iter()
        .map(|t| match branch {
            Branch::Plus => linalg::Csr::from_dense(&t.mat),
            Branch::Minus => linalg::Csr::from_dense(&t.mat.adjoint()),
        })
        .collect();
    let mut w = model.rho_factor.clone();
    let mut k = 0;
    while k < n {
        let key = step_key(model, extra, k);
        let mut r = 1;
        while k + r < n && step_key(model, extra, k + r) == key {
            r += 1;
        }
        let k1 = (k + 1) % n;
        let f = c(0.0, -dt * r as f64);
        let mut parts: Vec<(C64, &linalg::Csr)> = vec![(f, &model.sparse_static)];
        for (t, m) in model.terms.iter().zip(&model.sparse_terms) {
            let v = (t.coeff[k] + t.coeff[k1]) * 0.5;
            if v != c(0.0, 0.0) {
                parts.push((f * v, m));
            }
        }
        for (t, m) in extra.iter().zip(&extra_sparse) {
            let v = (t.coeff[k] + t.coeff[k1]) * 0.5;
            if v != c(0.0, 0.0) {
                let v = match branch {
                    Branch::Plus => v,
                    Branch::Minus => v.conj(),
                };
                parts.push((-f * v * hb, m));
            }
        }
        if r >= 8 && !parts.iter().all(|(_, m)| m.is_diagonal()) {
            let bits = key.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
            let ck = (branch == Branch::Plus, bits, r);
            let mut cache = model.run_cache.lock().unwrap_or_else(|e| e.into_inner());
            if cache.len() > 256 {
                cache.clear();
            }
            let u = cache.entry(ck).or_insert_with(|| {
                let a = branch_generator(model, extra, branch, k) * c(0.0, -dt);
                linalg::matrix_power(&linalg::expm(&a), r)
            });
            w = &*u * w;
        } else {
            w = linalg::expm_action_sparse(&parts, &w);
        }
        k += r;
    }
    w
}

/// `U_step(k) w` for the sources-only generator, by sparse expm-action.
pub fn step_action(model: &SystemModel, k: usize, w: &CMat) -> CMat {
    let n = model.spec.grid.n;
    let k1 = (k + 1) % n;
    let f = c(0.0, -model.spec.grid.dt / model.spec.hbar);
    let mut parts: Vec<(C64, &linalg::Csr)> = vec![(f, &model.sparse_static)];
    for (t, m) in model.terms.iter().zip(&model.sparse_terms) {
        let v = (t.coeff[k] + t.coeff[k1]) * 0.5;
        if v != c(0.0, 0.0) {
            parts.push((f * v, m));
        }
    }
    linalg::expm_action_sparse(&parts, w)
}

/// Forward propagators `U(t_k)` for the sources only, streamed in time order.
pub fn for_each_unitary(model: &SystemModel, mut f: impl FnMut(usize, &CMat)) {
    let n = model.spec.grid.n;
    let mut u = linalg::eye(model.dim);
    f(0, &u);
    for_each_step(model, &[], Branch::Plus, n - 1, |k, s| {
        u = s * &u;
        f(k + 1, &u);
    });
}

pub fn heisenberg_op(model: &SystemModel, op: &OpId, k: usize) -> Result<CMat> {
    ensure(k < model.spec.grid.n, || format!("sample {k} is off the grid"))?;
    let o = model.op_matrix(op, k)?;
    let mut out = None;
    let mut u_k = None;
    for_each_unitary(model, |j, u| {
        if j == k {
            u_k = Some(u.clone());
        }
    });
    if let Some(u) = u_k {
        out = Some(u.adjoint() * &o * u);
    }
    Ok(out.expect("sample reached"))
}

/// Heisenberg operators at several samples in one pass.
pub fn heisenberg_ops(model: &SystemModel, requests: &[(OpId, usize)]) -> Result<Vec<CMat>> {
    for (op, k) in requests {
        ensure(*k < model.spec.grid.n, || format!("sample {k} is off the grid"))?;
        model.op_matrix(op, *k)?;
    }
    let mut out: Vec<Option<CMat>> = vec![None; requests.len()];
    let last = requests.iter().map(|r| r.1).max().unwrap_or(0);
    let mut stop = false;
    for_each_unitary(model, |j, u| {
        if stop {
            return;
        }
        for (i, (op, k)) in requests.iter().enumerate() {
            if *k == j {
                let o = model.op_matrix(op, j).expect("validated");
                out[i] = Some(u.adjoint() * o * u);
            }
        }
        if j >= last {
            stop = true;
        }
    });
    Ok(out.into_iter().map(|m| m.expect("sample reached")).collect())
}

/// `<T_C prod O_branch(t)>`: − branch operators stand left in increasing
/// time, + branch operators right in decreasing time; equal times keep the
/// input order on + and reverse it on −.
pub fn tc_moment(model: &SystemModel, insertions: &[BranchInsertion]) -> Result<C64> {
    let reqs: Vec<(OpId, usize)> = insertions.iter().map(|i| (i.op.clone(), i.k)).collect();
    let ops = heisenberg_ops(model, &reqs)?;
    let mut plus: Vec<usize> = (0..insertions.len()).filter(|&i| insertions[i].branch == Branch::Plus).collect();
    let mut minus: Vec<usize> = (0..insertions.len()).filter(|&i| insertions[i].branch == Branch::Minus).collect();
    plus.sort_by(|&a, &b| insertions[b].k.cmp(&insertions[a].k).then(a.cmp(&b)));
    minus.sort_by(|&a, &b| insertions[a].k.cmp(&insertions[b].k).then(b.cmp(&a)));
    let mut prod = linalg::eye(model.dim);
    for &i in minus.iter().chain(plus.iter()) {
        prod *= &ops[i];
    }
    Ok(linalg::trace_prod(&model.rho, &prod))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::make_grid;

    fn free_mode(cut: usize, omega: f64, n: usize, dt: f64) -> SystemModel {
        let grid = make_grid(0.0, dt, n).unwrap();
        build_system(SystemSpec {
            hbar: 1.0,
            grid,
            sites: 1,
            modes: vec![ModeSpec::nonresonant(omega, vec![c(1.0, 0.0)])],
            fock_cutoff: cut,
            device: DeviceSpec::trivial(1),
            sources: SourceSet::default(),
            max_dim: DEFAULT_MAX_DIM,
        })
        .unwrap()
    }

    #[test]
    fn field_operator_at_zero() {
        let m = free_mode(3, 1.0, 4, 0.1);
        let a = linalg::annihilation(3);
        let expect = (&a + a.adjoint()) * c((0.5f64).sqrt(), 0.0);
        assert!(linalg::max_abs(&(&m.field_a[0] - expect)) < 1e-14);
    }

    #[test]
    fn resonant_field_operator_at_zero() {
        let grid = make_grid(0.0, 0.1, 4).unwrap();
        let m = build_system(SystemSpec {
            hbar: 1.0,
            grid,
            sites: 1,
            modes: vec![ModeSpec::resonant(2.0, 2.0, vec![c(1.0, 0.0)])],
            fock_cutoff: 2,
            device: DeviceSpec::trivial(1),
            sources: SourceSet::default(),
            max_dim: DEFAULT_MAX_DIM,
        })
        .unwrap();
        let a = linalg::annihilation(2);
        let expect = a * (linalg::I * 1.0);
        assert!(linalg::max_abs(&(&m.field_e[0] - expect)) < 1e-14);
    }

    #[test]
    fn bad_density_matrix_is_rejected() {
        let grid = make_grid(0.0, 0.1, 4).unwrap();
        let mut dev = DeviceSpec::trivial(1);
        dev.rho = linalg::eye(1) * c(0.9, 0.0);
        let r = build_system(SystemSpec {
            hbar: 1.0,
            grid,
            sites: 1,
            modes: vec![],
            fock_cutoff: 0,
            device: dev,
            sources: SourceSet::default(),
            max_dim: DEFAULT_MAX_DIM,
        });
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn dimension_bound_is_enforced() {
        let grid = make_grid(0.0, 0.1, 4).unwrap();
        let r = build_system(SystemSpec {
            hbar: 1.0,
            grid,
            sites: 1,
            modes: vec![ModeSpec::nonresonant(1.0, vec![c(1.0, 0.0)]); 3],
            fock_cutoff: 20,
            device: DeviceSpec::trivial(1),
            sources: SourceSet::default(),
            max_dim: 4096,
        });
        assert!(r.is_err());
    }

    fn both_routes(m: &SystemModel, tf: &TestFunctionSet) -> (C64, C64) {
        let bs = response_substitutions(m, tf).unwrap();
        let up = branch_product(m, &bs.plus, Branch::Plus);
        let um = branch_product(m, &bs.minus, Branch::Minus);
        let dense = linalg::trace_prod(&m.rho, &(um.adjoint() * up));
        let wp = branch_action(m, &bs.plus, Branch::Plus);
        let wm = branch_action(m, &bs.minus, Branch::Minus);
        (dense, wm.iter().zip(wp.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    #[test]
    fn state_route_matches_matrix_route() {
        let p = crate::models::RadiatedParams { window: 6.0, fock_cutoff: 5, ..Default::default() };
        let m = build_system(crate::models::radiated_reference(&p, 0.05, 1.0).unwrap()).unwrap();
        let z = Signal::from_real(m.grid(), 1, |_, t| 0.7 * (-(t - 3.0).powi(2)).exp());
        let (a, b) = both_routes(&m, &TestFunctionSet::zeta(z));
        assert!((a - b).norm() < 1e-11, "{a} vs {b}");

        let mut d = crate::models::DressingParams { device_cutoff: 2, fock_cutoff: 3, dt: 0.05, ..Default::default() };
        d.nbar = 0.4;
        let m = build_system(d.spec(1.0, true, None).unwrap()).unwrap();
        let z = Signal::from_real(m.grid(), 1, |_, t| 0.3 * (-(t - 45.0).powi(2) / 50.0).exp());
        let (a, b) = both_routes(&m, &TestFunctionSet::zeta(z));
        assert!((a - b).norm() < 1e-11, "{a} vs {b}");
    }

    #[test]
    fn free_chain_is_exponential_and_unitary() {
        let m = free_mode(4, 1.3, 25, 0.04);
        let plus = propagate_branch(&m, Branch::Plus, &TestFunctionSet::default()).unwrap();
        let minus = propagate_branch(&m, Branch::Minus, &TestFunctionSet::default()).unwrap();
        let t = 25.0 * 0.04;
        let exact = linalg::step_unitary(&m.h_static, t);
        assert!(linalg::max_abs(&(plus.product() - &exact)) < 1e-10);
        let loop_ = minus.product().adjoint() * plus.product();
        assert!(linalg::max_abs(&(loop_ - linalg::eye(m.dim))) < 1e-10);
    }

    #[test]
    fn heisenberg_annihilator_rotates() {
        let m = free_mode(4, 1.3, 30, 0.05);
        let a = m.op_matrix(&OpId::Mode(0), 0).unwrap();
        for k in [0usize, 7, 29] {
            let t = m.grid().t(k);
            let ah = heisenberg_op(&m, &OpId::Mode(0), k).unwrap();
            assert!(linalg::max_abs(&(ah - &a * C64::from_polar(1.0, -1.3 * t))) < 1e-10);
        }
    }

    #[test]
    fn generating_value_is_one_at_zero() {
        let m = free_mode(3, 1.0, 20, 0.1);
        let v = tc_generating(&m, &TestFunctionSet::default()).unwrap();
        assert!((v - c(1.0, 0.0)).norm() < 1e-10);
    }
}
