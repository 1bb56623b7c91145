//! The experiments the runner knows, one function per [`Kind`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use tnlab::dressing::{toy_same_time, toy_two_current, write_toy_csv, quantum_dressing, ToyParams};
use tnlab::hilbert::{build_system, for_each_unitary, DeviceSpec, ModeSpec, SourceSet, SystemSpec, DEFAULT_MAX_DIM};
use tnlab::linalg::{self, c, C64};
use tnlab::models::{
    causality_reference, commensurate, linear_reference, radiated_reference, radiated_times, reference_rho,
    resonant_reference, sigma_minus, CausalityParams, DressingParams, LinearParams, RadiatedParams,
};
use tnlab::pathspace::{char_from_dist, dist_from_char, quantum_char, wiener_check, DistKind, OpSet, PathDistribution, PathGrid, SliceMap};
use tnlab::response::{consistency_probe, expectation_series, kubo_delta_r, kubo_g_r, model_kernels, radiated_identity_check, Report};
use tnlab::signals::{fft_inplace, freq_kernel, freq_split, kernel_apply, make_grid, Side, Sign, Signal, TimeGrid};
use tnlab::stochastic::{linear_twin, quantum_classical_compare};
use tnlab::timenormal::{causality_probe, causality_probe_future, free_field_leakage, leakage_bound, tn_broad, tn_narrow};
use tnlab::{Band, Error, OpId, Result};

use crate::config::{Config, Kind};
use crate::report::{csv, Check, Outcome, Summary};

pub fn run(cfg: &Config) -> Result<Outcome> {
    match cfg.experiment {
        Kind::Split => split(cfg),
        Kind::Kubo => kubo(cfg),
        Kind::TnMoments => tn_moments(cfg),
        Kind::Causality => causality(cfg),
        Kind::RadiatedCheck => radiated_check(cfg),
        Kind::Consistency => consistency(cfg),
        Kind::Pfunctional => pfunctional(cfg),
        Kind::DressToy => dress_toy(cfg),
        Kind::DressE2e => dress_e2e(cfg),
        Kind::Wiener => wiener(cfg),
        Kind::HbarInvariance => hbar_invariance(cfg),
        Kind::ScatterMc => scatter_mc(cfg),
    }
}

/// Parses the experiment parameters without running anything.
pub fn check_params(cfg: &Config) -> Result<()> {
    match cfg.experiment {
        Kind::Split => cfg.params::<SplitParams>().map(drop),
        Kind::Kubo => cfg.params::<KuboParams>().map(drop),
        Kind::TnMoments => cfg.params::<TnParams>().map(drop),
        Kind::Causality => cfg.params::<CausalityConfig>().map(drop),
        Kind::RadiatedCheck => cfg.params::<RadiatedConfig>().map(drop),
        Kind::Consistency => cfg.params::<ConsistencyConfig>().map(drop),
        Kind::Pfunctional => cfg.params::<PfunctionalParams>().map(drop),
        Kind::DressToy => cfg.params::<DressToyParams>().map(drop),
        Kind::DressE2e => cfg.params::<DressE2eParams>().map(drop),
        Kind::Wiener => cfg.params::<WienerParams>().map(drop),
        Kind::HbarInvariance => cfg.params::<HbarParams>().map(drop),
        Kind::ScatterMc => cfg.params::<ScatterParams>().map(drop),
    }
}

fn outcome<P: Serialize>(cfg: &Config, params: &P, checks: Vec<Check>, tables: Vec<(String, String)>) -> Result<Outcome> {
    let params = serde_json::to_value(params).map_err(|e| Error::Io(e.to_string()))?;
    Ok(Outcome { summary: Summary { experiment: cfg.experiment.name(), seed: cfg.seed, params, checks }, tables })
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::validation(msg))
    }
}

/// Gaussian bump `height exp(-((t - centre * t_end) / width)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub height: f64,
    pub centre: f64,
    pub width: f64,
}

impl Bump {
    fn signal(&self, grid: TimeGrid) -> Signal {
        let t_end = grid.t(grid.n - 1);
        Signal::from_real(grid, 1, |_, t| self.height * (-((t - self.centre * t_end) / self.width).powi(2)).exp())
    }
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

// ---------------------------------------------------------------- split

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitParams {
    pub n: usize,
    pub signals: usize,
    pub dt: f64,
    /// Highest occupied DFT bin on either side of zero.
    pub band: usize,
    pub tol: f64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams { n: 256, signals: 20, dt: 0.1, band: 32, tol: 1e-12 }
    }
}

fn split(cfg: &Config) -> Result<Outcome> {
    let p: SplitParams = cfg.params()?;
    require(p.n >= 4 && p.band >= 1 && 2 * p.band < p.n, "band must fit below the Nyquist bin")?;
    require(p.signals >= 1, "need at least one signal")?;
    let grid = make_grid(0.0, p.dt, p.n)?;
    let n = p.n;
    let kp = freq_kernel(grid, Sign::Plus);
    let km = freq_kernel(grid, Sign::Minus);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = n as f64 / ((2 * p.band + 1) as f64).sqrt();
    let mut rows = String::from("signal,completeness,kernel_route,conjugation\n");
    let (mut comp, mut route, mut conj): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..p.signals {
        let mut buf = vec![c(0.0, 0.0); n];
        for k in (0..=p.band).chain(n - p.band..n) {
            let (re, im): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            buf[k] = c(re, im) * scale;
        }
        fft_inplace(&mut buf, true);
        let f = Signal::from_samples(grid, buf)?;
        let (fp, fm) = freq_split(&f);
        let fp_k = kernel_apply(&kp, &f, Side::Left)?;
        let fm_k = kernel_apply(&km, &f, Side::Left)?;
        // negative part taken through its own kernel, not as the remainder
        let ci = max_of((0..n).map(|k| (f.at(0, k) - fp.at(0, k) - fm_k.at(0, k)).norm()));
        let ri = fp.max_abs_diff(&fp_k).max(fm.max_abs_diff(&fm_k));
        let (_, cfm) = freq_split(&f.conj());
        let ji = fp.conj().max_abs_diff(&cfm);
        rows.push_str(&format!("{i},{ci:.6e},{ri:.6e},{ji:.6e}\n"));
        comp = comp.max(ci);
        route = route.max(ri);
        conj = conj.max(ji);
    }
    // kernel table symmetry in dimensionless weights (kernel times dt)
    let nn = n as i64;
    let mut sym: f64 = 0.0;
    for lag in -(nn - 1)..nn {
        let a = kp.get(0, 0, lag) * p.dt;
        sym = sym.max((a - km.get(0, 0, -lag) * p.dt).norm()).max((a - (km.get(0, 0, lag) * p.dt).conj()).norm());
    }
    let checks = vec![
        Check::at_most("completeness", comp, p.tol),
        Check::at_most("kernel_symmetry", sym, p.tol),
        Check::at_most("kernel_route", route, p.tol),
        Check::at_most("conjugation_swaps_parts", conj, p.tol),
    ];
    outcome(cfg, &p, checks, vec![("split.csv".into(), rows)])
}

// ---------------------------------------------------------------- kubo

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KuboParams {
    pub n: usize,
    pub dt: f64,
    pub omega: f64,
    pub resonant_omega: f64,
    pub carrier: f64,
    pub hbar: f64,
    pub tol: f64,
}

impl Default for KuboParams {
    fn default() -> Self {
        KuboParams { n: 400, dt: 0.05, omega: 1.3, resonant_omega: 5.0, carrier: 4.8, hbar: 1.0, tol: 1e-10 }
    }
}

fn theta(lag: i64) -> f64 {
    match lag {
        l if l > 0 => 1.0,
        0 => 0.5,
        _ => 0.0,
    }
}

fn qubit_device(rho: tnlab::CMat, hbar: f64) -> DeviceSpec {
    let sq = hbar.sqrt();
    DeviceSpec {
        dim: 2,
        h_dev: tnlab::models::sigma_z() * c(0.5 * hbar * 1.3, 0.0),
        j_ops: vec![tnlab::models::sigma_x() * c(0.5 * sq, 0.0)],
        d_ops: vec![sigma_minus() * c(0.5 * sq, 0.0)],
        rho,
        current_envelope: None,
        extra_ops: vec![],
        extra_currents: vec![],
    }
}

fn kubo(cfg: &Config) -> Result<Outcome> {
    let p: KuboParams = cfg.params()?;
    require(p.n >= 2 && p.omega > 0.0 && p.hbar > 0.0, "need n >= 2, omega > 0 and hbar > 0")?;
    let grid = make_grid(0.0, p.dt, p.n)?;
    let nn = p.n as i64;
    let nonres = ModeSpec::nonresonant(p.omega, vec![c(1.0, 0.0)]);
    let res = ModeSpec::resonant(p.resonant_omega, p.carrier, vec![c(1.0, 0.0)]);
    let dr = kubo_delta_r(std::slice::from_ref(&nonres), grid, 1)?;
    let gr = kubo_g_r(std::slice::from_ref(&res), grid, 1)?;
    let mut e_dr: f64 = 0.0;
    let mut e_gr: f64 = 0.0;
    for lag in -(nn - 1)..nn {
        let tau = lag as f64 * p.dt;
        let want = theta(lag) * (p.omega * tau).sin() / p.omega;
        e_dr = e_dr.max((dr.get(0, 0, lag) - c(want, 0.0)).norm());
        let want = c(0.0, p.resonant_omega / 2.0) * C64::from_polar(theta(lag), -(p.resonant_omega - p.carrier) * tau);
        e_gr = e_gr.max((gr.get(0, 0, lag) - want).norm());
    }

    // Delta_R from the vacuum commutator of the Heisenberg field
    let free = build_system(SystemSpec {
        hbar: p.hbar,
        grid,
        sites: 1,
        modes: vec![nonres.clone()],
        fock_cutoff: 1,
        device: DeviceSpec::trivial(1),
        sources: SourceSet::default(),
        max_dim: DEFAULT_MAX_DIM,
    })?;
    let a = free.op_matrix(&OpId::A(0), 0)?;
    let mut a_h = Vec::with_capacity(p.n);
    for_each_unitary(&free, |_, u| a_h.push(u.adjoint() * &a * u));
    let mut e_comm: f64 = 0.0;
    for (k, ak) in a_h.iter().enumerate().skip(1) {
        let v = -2.0 * linalg::trace_prod(&free.rho, &(ak * &a_h[0])).im / p.hbar;
        e_comm = e_comm.max((dr.get(0, 0, k as i64) - c(v, 0.0)).norm());
    }

    let model = |rho| {
        build_system(SystemSpec {
            hbar: p.hbar,
            grid,
            sites: 1,
            modes: vec![nonres.clone(), res.clone()],
            fock_cutoff: 2,
            device: qubit_device(rho, p.hbar),
            sources: SourceSet::default(),
            max_dim: DEFAULT_MAX_DIM,
        })
    };
    let (d1, g1) = model_kernels(&model(reference_rho())?)?;
    let excited = linalg::projector(2, 0);
    let (d2, g2) = model_kernels(&model(excited)?)?;
    let state_dep = max_of(d1.values.iter().zip(&d2.values).chain(g1.values.iter().zip(&g2.values)).map(|(x, y)| (x - y).norm()));

    let checks = vec![
        Check::at_most("delta_r_closed_form", e_dr, p.tol),
        Check::at_most("g_r_closed_form", e_gr, p.tol),
        Check::at_most("delta_r_vacuum_commutator", e_comm, p.tol),
        Check::at_most("state_independence", state_dep, 0.0),
    ];
    let tables = vec![
        ("delta_r.csv".into(), csv(|w| dr.write_csv(w))?),
        ("g_r.csv".into(), csv(|w| gr.write_csv(w))?),
    ];
    outcome(cfg, &p, checks, tables)
}

// ---------------------------------------------------------------- tn-moments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TnCase {
    Basics,
    InField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TnParams {
    pub case: TnCase,
    /// Interacting model of the basics case.
    pub model: CausalityParams,
    /// Moment times of the basics case, in samples.
    pub times: Vec<usize>,
    /// Free-field frequency of the in-field case (made grid-commensurate).
    pub omega: f64,
    /// Separation `t1 - t2` of the in-field case.
    pub separation: f64,
    pub hbar: f64,
    pub tol: f64,
    pub conjugation_tol: f64,
}

impl Default for TnParams {
    fn default() -> Self {
        TnParams {
            case: TnCase::Basics,
            model: CausalityParams::default(),
            times: vec![400, 340, 300],
            omega: 1.0,
            separation: 3.0,
            hbar: 1.0,
            tol: 1e-10,
            conjugation_tol: 1e-12,
        }
    }
}

fn tn_moments(cfg: &Config) -> Result<Outcome> {
    let p: TnParams = cfg.params()?;
    require(p.hbar > 0.0, "hbar must be positive")?;
    match p.case {
        TnCase::Basics => tn_basics(cfg, &p),
        TnCase::InField => tn_in_field(cfg, &p),
    }
}

fn tn_basics(cfg: &Config, p: &TnParams) -> Result<Outcome> {
    require(p.times.len() == 3, "basics case takes three times")?;
    let mut spec = causality_reference(&p.model, p.hbar)?;
    spec.device.d_ops = vec![sigma_minus() * c(p.hbar.sqrt(), 0.0)];
    let model = build_system(spec)?;
    require(model.dim <= 64, "basics case is meant for Hilbert dimension <= 64")?;
    let [t0, t1, t2] = [p.times[0], p.times[1], p.times[2]];
    let mut rows = String::from("quantity,times,re,im\n");
    let mut collapse: f64 = 0.0;
    for (name, op) in [("J", OpId::J(0)), ("A", OpId::A(0))] {
        let series = expectation_series(&model, &op)?;
        for &t in &p.times {
            let v = tn_broad(&model, &[t], &op)?;
            collapse = collapse.max((v - series[t]).norm());
            rows.push_str(&format!("tn_{name},{t},{:.15e},{:.15e}\n", v.re, v.im));
        }
    }
    let mut imag: f64 = 0.0;
    for (name, op, ts) in [
        ("J", OpId::J(0), vec![t0, t1]),
        ("J", OpId::J(0), vec![t0, t0]),
        ("J", OpId::J(0), vec![t0, t1, t2]),
        ("A", OpId::A(0), vec![t0, t1]),
    ] {
        let v = tn_broad(&model, &ts, &op)?;
        imag = imag.max(v.im.abs());
        let t: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
        rows.push_str(&format!("tn_{name},{},{:.15e},{:.15e}\n", t.join(" "), v.re, v.im));
    }
    let mut conj: f64 = 0.0;
    for (dag, nodag) in [(vec![t0], vec![t1]), (vec![t0, t2], vec![t1]), (vec![t2], vec![t0, t1])] {
        let lhs = tn_narrow(&model, &dag, &nodag, &OpId::D(0))?.conj();
        // conjugation swaps the daggered and plain time lists
        let rhs = tn_narrow(&model, &nodag, &dag, &OpId::D(0))?;
        conj = conj.max((lhs - rhs).norm());
    }
    let checks = vec![
        Check::at_most("first_moment_collapse", collapse, p.tol),
        Check::at_most("hermitian_moment_imag", imag, p.tol),
        Check::at_most("dipole_conjugation", conj, p.conjugation_tol),
    ];
    outcome(cfg, p, checks, vec![("tn_moments.csv".into(), rows)])
}

fn tn_in_field(cfg: &Config, p: &TnParams) -> Result<Outcome> {
    let grid = make_grid(0.0, p.model.dt, p.model.n)?;
    let omega = commensurate(&grid, p.omega);
    let t1 = grid.n / 2;
    let sep = (p.separation / grid.dt).round() as usize;
    require(sep <= t1, "separation exceeds half the window")?;
    let t2 = t1 - sep;
    let model = build_system(SystemSpec {
        hbar: p.hbar,
        grid,
        sites: 1,
        modes: vec![ModeSpec::nonresonant(omega, vec![c(1.0, 0.0)])],
        fock_cutoff: 2,
        device: DeviceSpec::trivial(1),
        sources: SourceSet::default(),
        max_dim: DEFAULT_MAX_DIM,
    })?;
    let tn = tn_broad(&model, &[t1, t2], &OpId::A(0))?;
    let leak = free_field_leakage(&grid, omega, p.hbar, t1, t2);
    let bound = leakage_bound(&grid, omega, p.hbar, &[t1, t2]);
    let ops = tnlab::hilbert::heisenberg_ops(&model, &[(OpId::A(0), t1), (OpId::A(0), t2)])?;
    let plain = linalg::trace_prod(&model.rho, &(&ops[0] * &ops[1]));
    let want = C64::from_polar(p.hbar / (2.0 * omega), -omega * (t1 - t2) as f64 * grid.dt);
    let rows = format!(
        "quantity,re,im\ntn_AA,{:.15e},{:.15e}\nplain_AA,{:.15e},{:.15e}\nfree_contraction,{:.15e},{:.15e}\nleakage_closed_form,{leak:.15e},0\n",
        tn.re, tn.im, plain.re, plain.im, want.re, want.im
    );
    let checks = vec![
        Check::at_most("in_field_tn_magnitude", tn.norm(), bound),
        Check::within("tn_matches_leakage_closed_form", tn.norm(), leak, p.tol),
        Check::at_most("unordered_two_point", (plain - want).norm(), p.tol),
    ];
    outcome(cfg, p, checks, vec![("in_field.csv".into(), rows)])
}

// ---------------------------------------------------------------- causality

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalityConfig {
    pub model: CausalityParams,
    pub hbar: f64,
    pub times: Vec<usize>,
    pub bump_time: usize,
    pub amplitude: f64,
    /// Past bump reported alongside for contrast.
    pub past_bump_time: usize,
    pub gkk_min: f64,
}

impl Default for CausalityConfig {
    fn default() -> Self {
        CausalityConfig {
            model: CausalityParams::default(),
            hbar: 1.0,
            times: vec![300, 340],
            bump_time: 360,
            amplitude: 10.0,
            past_bump_time: 200,
            gkk_min: 1e-3,
        }
    }
}

fn causality(cfg: &Config) -> Result<Outcome> {
    let p: CausalityConfig = cfg.params()?;
    require(p.hbar > 0.0 && !p.times.is_empty(), "need hbar > 0 and at least one time")?;
    let spec = causality_reference(&p.model, p.hbar)?;
    let omega = spec.modes[0].omega;
    let bound = leakage_bound(&spec.grid, omega, p.hbar, &p.times);
    let amp = p.amplitude * p.hbar.sqrt();
    let fut = causality_probe_future(&spec, &p.times, &OpId::J(0), p.bump_time, amp)?;
    let past = causality_probe(&spec, &p.times, &OpId::J(0), p.past_bump_time, amp)?;
    let rows = format!(
        "bump,t_p,amplitude,broad_change,gkk_change\nfuture,{},{},{:.15e},{:.15e}\npast,{},{},{:.15e},{:.15e}\n",
        p.bump_time, amp, fut.broad, fut.gkk, p.past_bump_time, amp, past.broad, past.gkk
    );
    let checks = vec![
        Check::at_most("future_bump_broad_change", fut.broad, bound),
        Check::at_least("future_bump_gkk_change", fut.gkk, p.gkk_min),
    ];
    outcome(cfg, &p, checks, vec![("causality.csv".into(), rows)])
}

// ---------------------------------------------------------------- radiated-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiatedConfig {
    pub model: RadiatedParams,
    pub dt: f64,
    pub hbar: f64,
    /// Also run the resonant (dipole) reference.
    pub resonant: bool,
    pub resonant_window: f64,
    pub tol: f64,
    pub ratio_min: f64,
}

impl Default for RadiatedConfig {
    fn default() -> Self {
        RadiatedConfig {
            model: RadiatedParams::default(),
            dt: 0.02,
            hbar: 1.0,
            resonant: true,
            resonant_window: 40.0,
            tol: 1e-3,
            ratio_min: 3.0,
        }
    }
}

/// Nonresonant and (optionally) resonant identity reports at one step.
pub fn radiated_reports(p: &RadiatedConfig, dt: f64, hbar: f64) -> Result<(Report, Option<Report>)> {
    let spec = radiated_reference(&p.model, dt, hbar)?;
    let (t1, t2) = radiated_times(&p.model, &spec.grid);
    let nonres = radiated_identity_check(&build_system(spec)?, t1, t2, Band::Nonresonant)?;
    let res = if p.resonant {
        let spec = resonant_reference(dt, p.resonant_window, hbar)?;
        let t1 = spec.grid.n / 2;
        let t2 = t1 - (p.model.separation / dt).round() as usize;
        Some(radiated_identity_check(&build_system(spec)?, t1, t2, Band::Resonant)?)
    } else {
        None
    };
    Ok((nonres, res))
}

fn merged(parts: &[&Report]) -> Report {
    Report { entries: parts.iter().flat_map(|r| r.entries.clone()).collect() }
}

fn radiated_check(cfg: &Config) -> Result<Outcome> {
    let p: RadiatedConfig = cfg.params()?;
    require(p.dt > 0.0 && p.hbar > 0.0, "dt and hbar must be positive")?;
    let k = cfg.dt_refine.unwrap_or(2);
    let (n1, r1) = radiated_reports(&p, p.dt, p.hbar)?;
    let (n2, r2) = radiated_reports(&p, p.dt / k as f64, p.hbar)?;
    let (a, b) = (n1.max_diff("radiated"), n2.max_diff("radiated"));
    let contrast = n1.get("contrast", "AA_plain").map(|e| e.abs_diff()).unwrap_or(0.0);
    let mut checks = vec![
        Check::at_most("nonresonant_residual", a, p.tol),
        Check::at_most("nonresonant_residual_refined", b, p.tol),
        Check::at_least("nonresonant_refinement_ratio", a / b, p.ratio_min),
        Check::at_least("hilbert_product_contrast", contrast, p.tol),
    ];
    let mut parts = vec![&n1, &n2];
    if let (Some(r1), Some(r2)) = (&r1, &r2) {
        let (a, b) = (r1.max_diff("radiated"), r2.max_diff("radiated"));
        checks.push(Check::at_most("resonant_residual", a, p.tol));
        checks.push(Check::at_most("resonant_residual_refined", b, p.tol));
        checks.push(Check::at_least("resonant_refinement_ratio", a / b, p.ratio_min));
        parts.extend([r1, r2]);
    }
    let table = csv(|w| merged(&parts).write_csv(w))?;
    let mut out = outcome(cfg, &p, checks, vec![("radiated.csv".into(), table)])?;
    out.summary.params["dt_refine"] = k.into();
    Ok(out)
}

// ---------------------------------------------------------------- consistency

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub model: RadiatedParams,
    pub dt: f64,
    pub hbar: f64,
    pub eps: f64,
    pub shift: Bump,
    pub zeta: Bump,
    pub resonant: bool,
    pub resonant_window: f64,
    pub tol: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            model: RadiatedParams::default(),
            dt: 0.02,
            hbar: 1.0,
            eps: 0.05,
            shift: Bump { height: 0.3, centre: 0.45, width: 1.0 },
            zeta: Bump { height: 0.5, centre: 0.5, width: 0.2 },
            resonant: true,
            resonant_window: 40.0,
            tol: 1e-3,
        }
    }
}

fn consistency_at(p: &ConsistencyConfig, dt: f64) -> Result<Report> {
    let sq = p.hbar.sqrt();
    let mut specs = vec![radiated_reference(&p.model, dt, p.hbar)?];
    if p.resonant {
        specs.push(resonant_reference(dt, p.resonant_window, p.hbar)?);
    }
    let mut parts = Vec::new();
    for spec in specs {
        let shift = p.shift.signal(spec.grid).scale(c(sq, 0.0));
        let zeta = p.zeta.signal(spec.grid).scale(c(1.0 / sq, 0.0));
        parts.push(consistency_probe(&spec, &shift, &zeta, p.eps)?);
    }
    Ok(merged(&parts.iter().collect::<Vec<_>>()))
}

fn consistency(cfg: &Config) -> Result<Outcome> {
    let p: ConsistencyConfig = cfg.params()?;
    require(p.dt > 0.0 && p.hbar > 0.0 && p.eps > 0.0, "dt, hbar and eps must be positive")?;
    let rep = consistency_at(&p, p.dt)?;
    let mut checks = vec![
        Check::at_most("aux_vs_ext", rep.max_diff("aux_vs_ext"), p.tol),
        Check::at_most("primed_vs_substitution", rep.max_diff("primed_vs_substitution"), p.tol),
    ];
    let mut all = vec![rep];
    if let Some(k) = cfg.dt_refine {
        let fine = consistency_at(&p, p.dt / k as f64)?;
        checks.push(Check::at_most("aux_vs_ext_refined", fine.max_diff("aux_vs_ext"), p.tol));
        checks.push(Check::at_most("primed_vs_substitution_refined", fine.max_diff("primed_vs_substitution"), p.tol));
        all.push(fine);
    }
    let table = csv(|w| merged(&all.iter().collect::<Vec<_>>()).write_csv(w))?;
    outcome(cfg, &p, checks, vec![("consistency.csv".into(), table)])
}

// ---------------------------------------------------------------- pfunctional

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfunctionalParams {
    pub slices: usize,
    pub count: usize,
    pub half_width: f64,
    /// Model step of the quantum characteristic functional.
    pub model_dt: f64,
    pub per_slice: usize,
    pub hbar: f64,
    pub tol: f64,
}

impl Default for PfunctionalParams {
    fn default() -> Self {
        PfunctionalParams { slices: 3, count: 16, half_width: 4.0, model_dt: 0.05, per_slice: 10, hbar: 1.0, tol: 1e-10 }
    }
}

fn pfunctional(cfg: &Config) -> Result<Outcome> {
    let p: PfunctionalParams = cfg.params()?;
    require(p.per_slice >= 1 && p.hbar > 0.0, "need per_slice >= 1 and hbar > 0")?;
    let w = p.per_slice as f64 * p.model_dt;
    let lattice = PathGrid::centred(p.slices, p.count, w, p.half_width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let raw: Vec<f64> = (0..lattice.len()).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
    let total: f64 = raw.iter().sum::<f64>() * lattice.cell();
    let dist = PathDistribution::from_fn(lattice.clone(), DistKind::Probability, "random", |_| 0.0);
    let dist = PathDistribution { values: raw.iter().map(|v| v / total).collect(), ..dist };
    let phi = char_from_dist(&dist);
    let back = dist_from_char(&phi, "round trip")?;
    let round_trip = max_of(dist.values.iter().zip(&back.values).map(|(a, b)| (a - b).abs()));
    let origin = phi.at_origin();

    // field-free two-level device sampled over the lattice slices
    let n = p.per_slice * (p.slices + 1);
    let grid = make_grid(0.0, p.model_dt, n)?;
    let model = build_system(SystemSpec {
        hbar: p.hbar,
        grid,
        sites: 1,
        modes: vec![],
        fock_cutoff: 0,
        device: qubit_device(reference_rho(), p.hbar),
        sources: SourceSet::default(),
        max_dim: DEFAULT_MAX_DIM,
    })?;
    let map = SliceMap::contiguous(p.per_slice / 2, p.per_slice);
    let qphi = quantum_char(&model, &lattice, map, OpSet::Current)?;
    let qorigin = qphi.at_origin();
    let qdist = dist_from_char(&qphi, "J")?;
    let rows = format!(
        "quantity,value\nround_trip,{round_trip:.6e}\nphi_origin_re,{:.15e}\nphi_origin_im,{:.15e}\nquantum_phi_origin_re,{:.15e}\nquantum_phi_origin_im,{:.15e}\nquantum_mass,{:.15e}\n",
        origin.re,
        origin.im,
        qorigin.re,
        qorigin.im,
        qdist.total_mass()
    );
    let checks = vec![
        Check::at_most("round_trip", round_trip, p.tol),
        Check::at_most("phi_origin", (origin - c(1.0, 0.0)).norm(), p.tol),
        Check::at_most("quantum_phi_origin", (qorigin - c(1.0, 0.0)).norm(), p.tol),
        Check::within("quantum_normalization", qdist.total_mass(), 1.0, p.tol),
    ];
    outcome(cfg, &p, checks, vec![("pfunctional.csv".into(), rows)])
}

// ---------------------------------------------------------------- dress-toy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DressToyParams {
    pub chi_delta: Vec<f64>,
    pub chi: f64,
    pub j0: f64,
    pub a_e: f64,
    pub two_current: ToyParams,
    pub hbar: f64,
    pub norm_tol: f64,
    pub factorization_tol: f64,
}

impl Default for DressToyParams {
    fn default() -> Self {
        DressToyParams {
            chi_delta: vec![-0.5, 0.25, 0.5, 0.9],
            chi: 1.0,
            j0: 1.0,
            a_e: 0.3,
            two_current: ToyParams { chi: 1.3, delta_r: 0.9, j0: 0.7, a_e: 0.4, a_e_prime: -1.0 },
            hbar: 1.0,
            norm_tol: 1e-8,
            factorization_tol: 1e-12,
        }
    }
}

/// Toy normalizations: same-time per `chi_delta` (`None` when singular), then
/// the two-current normalization and factorization residual.
pub fn toy_values(p: &DressToyParams) -> Result<(Vec<(ToyParams, Option<f64>)>, f64, f64)> {
    require(p.chi != 0.0 && p.hbar > 0.0, "chi must be nonzero and hbar positive")?;
    let sq = p.hbar.sqrt();
    let mut same = Vec::new();
    for &cd in &p.chi_delta {
        let tp = ToyParams { chi: p.chi, delta_r: cd / p.chi, j0: p.j0 * sq, a_e: p.a_e * sq, a_e_prime: 0.0 };
        let t = toy_same_time(tp)?;
        same.push((tp, if t.singular { None } else { Some(t.normalization) }));
    }
    let two = p.two_current;
    let t = toy_two_current(ToyParams { j0: two.j0 * sq, a_e: two.a_e * sq, a_e_prime: two.a_e_prime * sq, ..two })?;
    Ok((same, t.normalization, t.factorization_residual))
}

fn dress_toy(cfg: &Config) -> Result<Outcome> {
    let p: DressToyParams = cfg.params()?;
    let (same, norm2, fact) = toy_values(&p)?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (tp, v) in &same {
        let cd = tp.chi * tp.delta_r;
        match v {
            Some(v) => {
                checks.push(Check::within(format!("same_time_norm[{cd}]"), *v, 1.0 / (1.0 - cd), p.norm_tol));
                rows.push((*tp, *v, 1.0 / (1.0 - cd)));
            }
            None => {
                checks.push(Check::flag(format!("singular[{cd}]"), true));
                rows.push((*tp, f64::INFINITY, f64::INFINITY));
            }
        }
    }
    checks.push(Check::within("two_current_norm", norm2, 1.0, p.norm_tol));
    checks.push(Check::at_most("factorization_residual", fact, p.factorization_tol));
    let table = csv(|w| write_toy_csv(&rows, w))?;
    outcome(cfg, &p, checks, vec![("dress_toy.csv".into(), table)])
}

// ---------------------------------------------------------------- dress-e2e

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DressE2eParams {
    pub model: DressingParams,
    pub hbar: f64,
    pub tol: f64,
    /// Lower bound on the size of the dressing effect itself.
    pub signal_min: f64,
    /// Aliasing threshold on the mass within two bins of a lattice edge.
    pub edge_tol: f64,
}

impl Default for DressE2eParams {
    fn default() -> Self {
        DressE2eParams { model: DressingParams::default(), hbar: 1.0, tol: 1e-3, signal_min: 1e-3, edge_tol: 1e-6 }
    }
}

fn dress_e2e(cfg: &Config) -> Result<Outcome> {
    let p: DressE2eParams = cfg.params()?;
    require(p.hbar > 0.0, "hbar must be positive")?;
    let r = quantum_dressing(&p.model, p.hbar)?;
    let rows = format!(
        "quantity,value\nresidual,{:.15e}\nsignal,{:.15e}\ninterpolation_error,{:.15e}\nkappa,{:.15e}\nedge_mass_full,{:.15e}\nedge_mass_dressed,{:.15e}\n",
        r.residual,
        r.signal,
        r.interpolation_error,
        r.kappa,
        r.full.edge_mass(),
        r.dressed.edge_mass()
    );
    let checks = vec![
        Check::at_most("dressing_residual", r.residual, p.tol),
        Check::at_least("dressing_signal", r.signal, p.signal_min),
        Check::at_most("edge_mass_full", r.full.edge_mass(), p.edge_tol),
        Check::at_most("edge_mass_dressed", r.dressed.edge_mass(), p.edge_tol),
    ];
    let tables = vec![
        ("dress_e2e.csv".into(), rows),
        ("p_full.csv".into(), csv(|w| r.full.write_csv(w))?),
        ("p_dressed.csv".into(), csv(|w| r.dressed.write_csv(w))?),
        ("p_undressed.csv".into(), csv(|w| r.undressed.write_csv(w))?),
    ];
    outcome(cfg, &p, checks, tables)
}

// ---------------------------------------------------------------- wiener

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WienerParams {
    pub dt: f64,
    pub samples: usize,
    pub n_se: f64,
}

impl Default for WienerParams {
    fn default() -> Self {
        WienerParams { dt: 0.01, samples: 100_000, n_se: 3.0 }
    }
}

fn wiener(cfg: &Config) -> Result<Outcome> {
    let p: WienerParams = cfg.params()?;
    let s = wiener_check(p.dt, p.samples, cfg.seed)?;
    let rows = format!(
        "quantity,value,stderr\nmean,{:.15e},{:.15e}\nvariance,{:.15e},{:.15e}\nlag_covariance,{:.15e},{:.15e}\n",
        s.mean, s.mean_stderr, s.variance, s.variance_stderr, s.lag_covariance, s.lag_covariance_stderr
    );
    let checks = vec![
        Check::within("increment_variance", s.variance, p.dt, p.n_se * s.variance_stderr),
        Check::within("increment_mean", s.mean, 0.0, p.n_se * s.mean_stderr),
        Check::within("increment_lag_covariance", s.lag_covariance, 0.0, p.n_se * s.lag_covariance_stderr),
    ];
    outcome(cfg, &p, checks, vec![("wiener.csv".into(), rows)])
}

// ---------------------------------------------------------------- hbar-invariance

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbarParams {
    pub hbars: Vec<f64>,
    pub tol: f64,
    pub radiated: RadiatedConfig,
    pub toys: DressToyParams,
    pub dressing: DressingParams,
    pub include_dressing: bool,
}

impl Default for HbarParams {
    fn default() -> Self {
        HbarParams {
            hbars: vec![0.5, 1.0, 2.0],
            tol: 1e-8,
            radiated: RadiatedConfig::default(),
            toys: DressToyParams::default(),
            dressing: DressingParams::default(),
            include_dressing: true,
        }
    }
}

/// Moment order of a radiated-identity entry, for the `hbar^(m/2)` scale.
fn moment_order(name: &str) -> i32 {
    if name.ends_with('1') {
        1
    } else {
        2
    }
}

fn scaled_residuals(p: &RadiatedConfig, hbar: f64) -> Result<Vec<(String, f64)>> {
    let (n, r) = radiated_reports(p, p.dt, hbar)?;
    let parts: Vec<&Report> = std::iter::once(&n).chain(r.as_ref()).collect();
    Ok(merged(&parts)
        .entries
        .iter()
        .filter(|e| e.check == "radiated")
        .map(|e| (e.moment.clone(), e.abs_diff() / hbar.powf(moment_order(&e.moment) as f64 / 2.0)))
        .collect())
}

fn hbar_invariance(cfg: &Config) -> Result<Outcome> {
    let p: HbarParams = cfg.params()?;
    require(p.hbars.iter().all(|&h| h > 0.0 && h.is_finite()), "hbar values must be positive")?;
    let mut rows = String::from("hbar,quantity,value\n");
    let ref_rad = scaled_residuals(&p.radiated, 1.0)?;
    let toy = |h: f64| -> Result<Vec<f64>> {
        let (same, norm2, _) = toy_values(&DressToyParams { hbar: h, ..p.toys.clone() })?;
        let mut v: Vec<f64> = same.iter().map(|(_, n)| n.unwrap_or(f64::INFINITY)).collect();
        v.push(norm2);
        Ok(v)
    };
    let ref_toy = toy(1.0)?;
    let ref_dress = if p.include_dressing { Some(quantum_dressing(&p.dressing, 1.0)?.residual) } else { None };
    let (mut d_rad, mut d_toy, mut d_dress): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for &h in &p.hbars {
        let rad = if h == 1.0 { ref_rad.clone() } else { scaled_residuals(&p.radiated, h)? };
        for ((name, v), (_, v0)) in rad.iter().zip(&ref_rad) {
            d_rad = d_rad.max((v - v0).abs());
            rows.push_str(&format!("{h},radiated_{name},{v:.15e}\n"));
        }
        let t = toy(h)?;
        for (i, (v, v0)) in t.iter().zip(&ref_toy).enumerate() {
            d_toy = d_toy.max((v - v0).abs());
            rows.push_str(&format!("{h},toy_norm_{i},{v:.15e}\n"));
        }
        if let Some(r0) = ref_dress {
            let r = if h == 1.0 { r0 } else { quantum_dressing(&p.dressing, h)?.residual };
            d_dress = d_dress.max((r - r0).abs());
            rows.push_str(&format!("{h},dressing_residual,{r:.15e}\n"));
        }
    }
    let mut checks = vec![
        Check::at_most("radiated_residual_shift", d_rad, p.tol),
        Check::at_most("toy_normalization_shift", d_toy, p.tol),
    ];
    if p.include_dressing {
        checks.push(Check::at_most("dressing_residual_shift", d_dress, p.tol));
    }
    outcome(cfg, &p, checks, vec![("hbar_invariance.csv".into(), rows)])
}

// ---------------------------------------------------------------- scatter-mc

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterParams {
    pub model: LinearParams,
    pub dt: f64,
    pub hbar: f64,
    pub samples: usize,
    /// Second check time, this far before the window middle.
    pub separation: f64,
    pub n_se: f64,
    pub trotter_tol: f64,
    pub reality_tol: f64,
}

impl Default for ScatterParams {
    fn default() -> Self {
        ScatterParams {
            model: LinearParams::default(),
            dt: 0.02,
            hbar: 1.0,
            samples: 4000,
            separation: 0.3,
            n_se: 3.0,
            trotter_tol: 1e-3,
            reality_tol: 1e-10,
        }
    }
}

fn scatter_mc(cfg: &Config) -> Result<Outcome> {
    let p: ScatterParams = cfg.params()?;
    require(p.dt > 0.0 && p.hbar > 0.0, "dt and hbar must be positive")?;
    let spec = linear_reference(&p.model, p.dt, p.hbar)?;
    let device = linear_twin(&spec)?;
    let t1 = spec.grid.n / 2;
    let sep = (p.separation / p.dt).round() as usize;
    require(sep <= t1, "separation exceeds half the window")?;
    let rep = quantum_classical_compare(&spec, &device, &[t1, t1 - sep], p.samples, cfg.seed)?;
    let imag = max_of(rep.entries.iter().map(|e| e.quantum_imag.abs()));
    let checks = vec![
        Check::at_most("mc_excess_over_n_se", rep.excess(p.n_se), p.trotter_tol),
        Check::at_most("closed_form_residual", rep.closed_form_residual(), p.trotter_tol),
        Check::at_most("quantum_reality", imag, p.reality_tol),
    ];
    let table = csv(|w| rep.write_csv(w))?;
    outcome(cfg, &p, checks, vec![("scatter_mc.csv".into(), table)])
}
