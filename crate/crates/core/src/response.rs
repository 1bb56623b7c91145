//! Retarded response kernels of the free fields and numerical checks of the
//! identities that tie field statistics to current statistics.

use std::io::Write;

use crate::error::{ensure, Error, Result};
use crate::hilbert::{
    build_system, for_each_unitary, generating_from_branches, response_substitutions, tc_generating, Band, ModeSpec,
    OpId, SourceSet, SystemModel, SystemSpec, TestFunctionSet,
};
use crate::linalg::{self, c, CMat, C64};
use crate::signals::{fft_inplace, freq_split, kernel_apply, split_weights, Side, Sign, Signal, TimeGrid, TwoTimeKernel};
use crate::timenormal::{weighted_tc, Slot};

fn theta(lag: i64) -> f64 {
    match lag {
        l if l > 0 => 1.0,
        0 => 0.5,
        _ => 0.0,
    }
}

/// `Delta_R(x, x', tau) = theta(tau) sum (1/w) Im[u*(x) u(x') e^{i w tau}]`.
pub fn kubo_delta_r(modes: &[ModeSpec], grid: TimeGrid, sites: usize) -> Result<TwoTimeKernel> {
    for m in modes {
        ensure(m.band == Band::Nonresonant, || "Delta_R takes nonresonant modes only".into())?;
        ensure(m.u.len() == sites, || "mode vector length differs from site count".into())?;
    }
    let dt = grid.dt;
    Ok(TwoTimeKernel::from_fn(grid, sites, true, |x, x2, lag| {
        let th = theta(lag);
        if th == 0.0 {
            return c(0.0, 0.0);
        }
        let tau = lag as f64 * dt;
        let s: f64 = modes
            .iter()
            .map(|m| (m.u[x].conj() * m.u[x2] * C64::from_polar(1.0, m.omega * tau)).im / m.omega)
            .sum();
        c(th * s, 0.0)
    }))
}

/// `G_R(x, x', tau) = theta(tau) sum (i w/2) u(x) u*(x') e^{-i (w - w0) tau}`.
pub fn kubo_g_r(modes: &[ModeSpec], grid: TimeGrid, sites: usize) -> Result<TwoTimeKernel> {
    for m in modes {
        ensure(m.band == Band::Resonant, || "G_R takes resonant modes only".into())?;
        ensure(m.u.len() == sites, || "mode vector length differs from site count".into())?;
    }
    let dt = grid.dt;
    Ok(TwoTimeKernel::from_fn(grid, sites, true, |x, x2, lag| {
        let th = theta(lag);
        if th == 0.0 {
            return c(0.0, 0.0);
        }
        let tau = lag as f64 * dt;
        let s: C64 = modes
            .iter()
            .map(|m| {
                c(0.0, m.omega / 2.0) * m.u[x] * m.u[x2].conj() * C64::from_polar(1.0, -(m.omega - m.carrier) * tau)
            })
            .sum();
        s * th
    }))
}

/// Kernels of the model's nonresonant and resonant mode sets.
pub fn model_kernels(model: &SystemModel) -> Result<(TwoTimeKernel, TwoTimeKernel)> {
    let spec = &model.spec;
    let (nr, r): (Vec<ModeSpec>, Vec<ModeSpec>) = spec.modes.iter().cloned().partition(|m| m.band == Band::Nonresonant);
    Ok((kubo_delta_r(&nr, spec.grid, spec.sites)?, kubo_g_r(&r, spec.grid, spec.sites)?))
}

/// `A_ext = A_e + Delta_R J_e`, `E_ext = E_e + G_R D_e`.
pub fn external_fields(sources: &SourceSet, delta_r: &TwoTimeKernel, g_r: &TwoTimeKernel) -> Result<(Signal, Signal)> {
    ensure(delta_r.grid.same_as(&g_r.grid) && delta_r.sites == g_r.sites, || "kernels disagree on grid".into())?;
    let grid = delta_r.grid;
    let sites = delta_r.sites;
    let zero = Signal::zeros(grid, sites);
    let get = |s: &Option<Signal>| -> Result<Signal> {
        let s = s.clone().unwrap_or_else(|| zero.clone());
        ensure(s.grid.same_as(&grid) && s.sites == sites, || "source grid mismatch".into())?;
        Ok(s)
    };
    let a = get(&sources.a_e)?.add(&kernel_apply(delta_r, &get(&sources.j_e)?, Side::Left)?)?;
    let e = get(&sources.e_e)?.add(&kernel_apply(g_r, &get(&sources.d_e)?, Side::Left)?)?;
    Ok((a, e))
}

/// Quadrature weights `K(x, x2, t_l - s) ds` of the radiated field at `t_l`
/// from sources on site `x2`; trapezoid end weight at the window start.
pub fn radiation_weights(kernel: &TwoTimeKernel, x: usize, x2: usize, k_l: usize) -> Vec<C64> {
    let n = kernel.grid.n;
    let dt = kernel.grid.dt;
    let mut w = vec![c(0.0, 0.0); n];
    for (s, ws) in w.iter_mut().enumerate().take(k_l + 1) {
        *ws = kernel.get(x, x2, k_l as i64 - s as i64) * dt;
    }
    if k_l > 0 {
        w[0] *= 0.5;
    }
    w
}

/// Branch weights on `t'` of a composite slot `sum_s rad(s) delta^(±)(s - t') dt`.
pub fn composite_weights(rad: &[C64], sign: Sign) -> Vec<C64> {
    let n = rad.len();
    let p = split_weights(n, sign);
    let mut a = rad.to_vec();
    let mut q: Vec<C64> = (0..n).map(|j| p[(n - j) % n]).collect();
    fft_inplace(&mut a, false);
    fft_inplace(&mut q, false);
    for (x, y) in a.iter_mut().zip(&q) {
        *x *= y;
    }
    fft_inplace(&mut a, true);
    a
}

fn composite_slot(op: OpId, rad: &[C64]) -> Slot {
    Slot { op, w_plus: composite_weights(rad, Sign::Plus), w_minus: composite_weights(rad, Sign::Minus) }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub check: String,
    pub moment: String,
    pub lhs: C64,
    pub rhs: C64,
    pub dt: f64,
}

impl ReportEntry {
    pub fn abs_diff(&self) -> f64 {
        (self.lhs - self.rhs).norm()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
}

impl Report {
    pub fn push(&mut self, check: &str, moment: &str, lhs: C64, rhs: C64, dt: f64) {
        self.entries.push(ReportEntry { check: check.into(), moment: moment.into(), lhs, rhs, dt });
    }

    pub fn max_diff(&self, check: &str) -> f64 {
        self.entries.iter().filter(|e| e.check == check).map(|e| e.abs_diff()).fold(0.0, f64::max)
    }

    pub fn get(&self, check: &str, moment: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.check == check && e.moment == moment)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "check,moment,lhs_re,lhs_im,rhs_re,rhs_im,abs_diff,dt")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{}",
                e.check,
                e.moment,
                e.lhs.re,
                e.lhs.im,
                e.rhs.re,
                e.rhs.im,
                e.abs_diff(),
                e.dt
            )?;
        }
        Ok(())
    }
}

/// Heisenberg expectation of `op` at every grid sample.
pub fn expectation_series(model: &SystemModel, op: &OpId) -> Result<Vec<C64>> {
    model.op_matrix(op, 0)?;
    let mut out = Vec::with_capacity(model.spec.grid.n);
    for_each_unitary(model, |k, u| {
        let o = model.op_matrix(op, k).expect("validated");
        out.push(linalg::trace_prod(&model.rho, &(u.adjoint() * o * u)));
    });
    Ok(out)
}

fn source_row(s: &Option<Signal>, x: usize, n: usize) -> Vec<C64> {
    s.as_ref().map(|s| s.site(x).to_vec()).unwrap_or_else(|| vec![c(0.0, 0.0); n])
}

/// Field moments at `(t1, t2)` on site 0 against their radiation-law
/// counterparts built from current (or dipole) moments.
pub fn radiated_identity_check(model: &SystemModel, t1: usize, t2: usize, band: Band) -> Result<Report> {
    let grid = model.grid();
    ensure(t1 < grid.n && t2 < grid.n, || "check times are off the grid".into())?;
    ensure(model.spec.sites == 1, || "radiated check is defined for one site".into())?;
    let (dr, gr) = model_kernels(model)?;
    let n = grid.n;
    let dt = grid.dt;
    let mut rep = Report::default();
    match band {
        Band::Nonresonant => {
            ensure(model.spec.modes.iter().any(|m| m.band == Band::Nonresonant), || "no nonresonant mode".into())?;
            let je = source_row(&model.spec.sources.j_e, 0, n);
            let jm = expectation_series(model, &OpId::J(0))?;
            let w1 = radiation_weights(&dr, 0, 0, t1);
            let w2 = radiation_weights(&dr, 0, 0, t2);
            let dje1 = dot(&w1, &je);
            let dje2 = dot(&w2, &je);
            let djm1 = dot(&w1, &jm);
            let djm2 = dot(&w2, &jm);
            let a = |k| Slot::broad(OpId::A(0), &grid, k);
            let j = |k| Slot::broad(OpId::J(0), &grid, k);
            let lhs = weighted_tc(model, &[a(t1)])?;
            rep.push("radiated", "A1", lhs, djm1 + dje1, dt);
            let lhs = weighted_tc(model, &[a(t1), j(t2)])?;
            let rhs = weighted_tc(model, &[composite_slot(OpId::J(0), &w1), j(t2)])? + dje1 * jm[t2];
            rep.push("radiated", "AJ", lhs, rhs, dt);
            for (name, ka, kb, wa, wb, djea, djeb, djma, djmb) in [
                ("AA", t1, t2, &w1, &w2, dje1, dje2, djm1, djm2),
                ("AA0", t1, t1, &w1, &w1, dje1, dje1, djm1, djm1),
            ] {
                let lhs = weighted_tc(model, &[a(ka), a(kb)])?;
                let rhs = weighted_tc(model, &[composite_slot(OpId::J(0), wa), composite_slot(OpId::J(0), wb)])?
                    + djea * djmb
                    + djeb * djma
                    + djea * djeb;
                rep.push("radiated", name, lhs, rhs, dt);
            }
            // plain Hilbert-space product keeps the free contraction
            let ops = crate::hilbert::heisenberg_ops(model, &[(OpId::A(0), t1), (OpId::A(0), t2)])?;
            let plain = linalg::trace_prod(&model.rho, &(&ops[0] * &ops[1]));
            let tn = rep.get("radiated", "AA").map(|e| e.rhs).unwrap_or_default();
            rep.push("contrast", "AA_plain", plain, tn, dt);
        }
        Band::Resonant => {
            ensure(model.spec.modes.iter().any(|m| m.band == Band::Resonant), || "no resonant mode".into())?;
            let de = source_row(&model.spec.sources.d_e, 0, n);
            let g1 = radiation_weights(&gr, 0, 0, t1);
            let g2 = radiation_weights(&gr, 0, 0, t2);
            let d = model.op_matrix(&OpId::D(0), 0)?;
            let mut x1 = linalg::zeros(model.dim);
            let mut x2 = linalg::zeros(model.dim);
            let mut dm = Vec::with_capacity(n);
            let mut e_ops: Vec<Option<CMat>> = vec![None, None];
            let e = model.op_matrix(&OpId::E(0), 0)?;
            for_each_unitary(model, |k, u| {
                let dh = u.adjoint() * &d * u;
                dm.push(linalg::trace_prod(&model.rho, &dh));
                x1 += &dh * g1[k];
                x2 += &dh * g2[k];
                if k == t1 {
                    e_ops[0] = Some(u.adjoint() * &e * u);
                }
                if k == t2 {
                    e_ops[1] = Some(u.adjoint() * &e * u);
                }
            });
            let (e1, e2) = (e_ops[0].take().expect("reached"), e_ops[1].take().expect("reached"));
            let gde1 = dot(&g1, &de);
            let gde2 = dot(&g2, &de);
            let gdm1 = dot(&g1, &dm);
            let gdm2 = dot(&g2, &dm);
            rep.push("radiated", "E1", linalg::trace_prod(&model.rho, &e1), gdm1 + gde1, dt);
            let lhs = linalg::trace_prod(&model.rho, &(e1.adjoint() * &e2));
            let rhs = linalg::trace_prod(&model.rho, &(x1.adjoint() * &x2))
                + gde1.conj() * gdm2
                + gdm1.conj() * gde2
                + gde1.conj() * gde2;
            rep.push("radiated", "EdagE", lhs, rhs, dt);
        }
    }
    Ok(rep)
}

/// Central finite differences of `eps -> Phi(eps * tf)`: first and second
/// derivatives at zero.
pub fn phi_derivatives(model: &SystemModel, tf: &TestFunctionSet, eps: f64) -> Result<(C64, C64)> {
    let scale = |s: &Option<Signal>, f: f64| s.as_ref().map(|s| s.scale(c(f, 0.0)));
    let at = |f: f64| -> Result<C64> {
        let t = TestFunctionSet { eta: scale(&tf.eta, f), zeta: scale(&tf.zeta, f), mu: scale(&tf.mu, f), nu: scale(&tf.nu, f) };
        tc_generating(model, &t)
    };
    let p = at(eps)?;
    let m = at(-eps)?;
    let z = at(0.0)?;
    Ok(((p - m) / (2.0 * eps), (p - 2.0 * z + m) / (eps * eps)))
}

/// Slot weights of a `zeta` test function paired with the current:
/// `zeta^(-)` on the + branch and `zeta^(+)` on the − branch.
pub fn zeta_slot(op: OpId, zeta: &Signal, x: usize) -> Slot {
    let (p, m) = freq_split(zeta);
    let dt = zeta.grid.dt;
    Slot {
        op,
        w_plus: m.site(x).iter().map(|z| z * dt).collect(),
        w_minus: p.site(x).iter().map(|z| z * dt).collect(),
    }
}

/// Consistency of the generating functional under trading external for
/// auxiliary sources, and of the substitution form of the device functional
/// against primed (field-free) Heisenberg operators.
pub fn consistency_probe(spec: &SystemSpec, shift: &Signal, zeta: &Signal, eps: f64) -> Result<Report> {
    let grid = spec.grid;
    ensure(shift.grid.same_as(&grid) && zeta.grid.same_as(&grid), || "signals must share the model grid".into())?;
    ensure(shift.is_real(1e-12), || "shift must be real".into())?;
    let dt = grid.dt;
    let mut rep = Report::default();
    let base_ae = spec.sources.a_e.clone().unwrap_or_else(|| Signal::zeros(grid, spec.sites));
    let base_aux = spec.sources.aux_a.clone().unwrap_or_else(|| Signal::zeros(grid, spec.sites));

    let mut aux = spec.clone();
    aux.sources.aux_a = Some(base_aux.add(shift)?);
    let aux = build_system(aux)?;
    let mut ext = spec.clone();
    ext.sources.a_e = Some(base_ae.add(shift)?);
    let ext = build_system(ext)?;

    let tf = TestFunctionSet::zeta(zeta.clone());
    let pa = tc_generating(&aux, &tf)?;
    let pe = tc_generating(&ext, &tf)?;
    rep.push("aux_vs_ext", "phi", pa, pe, dt);

    let (d1, d2) = phi_derivatives(&aux, &tf, eps)?;
    let slot = zeta_slot(OpId::J(0), zeta, 0);
    let m1 = weighted_tc(&ext, std::slice::from_ref(&slot))?;
    let m2 = weighted_tc(&ext, &[slot.clone(), slot])?;
    rep.push("aux_vs_ext", "M1", d1 / linalg::I, m1, dt);
    rep.push("aux_vs_ext", "M2", -d2, m2, dt);

    // device-only functional: substitution route vs primed operators
    let mut dev = spec.clone();
    dev.modes.clear();
    dev.sources = SourceSet { a_e: spec.sources.a_e.clone(), e_e: spec.sources.e_e.clone(), ..Default::default() };
    let primed = build_system(dev.clone())?;
    let mut sub = dev;
    sub.sources = SourceSet {
        aux_a: spec.sources.a_e.as_ref().map(|s| s.scale(c(1.0, 0.0))),
        aux_e: spec.sources.e_e.clone(),
        ..Default::default()
    };
    let sub = build_system(sub)?;
    let bs = response_substitutions(&sub, &tf)?;
    let phi_sub = generating_from_branches(&sub, &bs);
    let phi_primed = {
        let bs = response_substitutions(&primed, &tf)?;
        generating_from_branches(&primed, &bs)
    };
    rep.push("primed_vs_substitution", "phi_J", phi_sub, phi_primed, dt);

    let has_dipole = spec.device.d_ops.iter().any(|d| linalg::max_abs(d) > 0.0);
    if has_dipole {
        // first moment of D via a nu test function
        let nu = zeta.clone();
        let tfn = TestFunctionSet { nu: Some(nu.clone()), ..Default::default() };
        let (d1, _) = phi_derivatives(&sub, &tfn, eps)?;
        let dm = expectation_series(&primed, &OpId::D(0))?;
        // dPhi/deps = i sum (nu* <D> - nu <D^†>) dt
        let s: C64 = (0..grid.n).map(|k| nu.at(0, k).conj() * dm[k] - nu.at(0, k) * dm[k].conj()).sum::<C64>() * dt;
        rep.push("primed_vs_substitution", "D1", d1 / linalg::I, s, dt);
    }
    Ok(rep)
}

pub fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Numerical(msg.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::make_grid;

    #[test]
    fn single_mode_delta_r_is_retarded_sine() {
        let grid = make_grid(0.0, 0.05, 64).unwrap();
        let k = kubo_delta_r(&[ModeSpec::nonresonant(1.0, vec![c(1.0, 0.0)])], grid, 1).unwrap();
        for lag in -63i64..64 {
            let tau = lag as f64 * 0.05;
            let expect = if lag > 0 { tau.sin() } else { 0.0 };
            assert!((k.get(0, 0, lag) - c(expect, 0.0)).norm() < 1e-14);
        }
        assert_eq!(k.acausal_mass(), 0.0);
    }

    #[test]
    fn g_r_single_mode_on_carrier_is_constant() {
        let grid = make_grid(0.0, 0.05, 32).unwrap();
        let k = kubo_g_r(&[ModeSpec::resonant(3.0, 3.0, vec![c(1.0, 0.0)])], grid, 1).unwrap();
        assert!((k.get(0, 0, 7) - c(0.0, 1.5)).norm() < 1e-14);
        assert!((k.get(0, 0, 0) - c(0.0, 0.75)).norm() < 1e-14);
        assert_eq!(k.get(0, 0, -3), c(0.0, 0.0));
    }

    #[test]
    fn wrong_band_is_rejected() {
        let grid = make_grid(0.0, 0.05, 8).unwrap();
        assert!(kubo_delta_r(&[ModeSpec::resonant(1.0, 1.0, vec![c(1.0, 0.0)])], grid, 1).is_err());
        assert!(kubo_g_r(&[ModeSpec::nonresonant(1.0, vec![c(1.0, 0.0)])], grid, 1).is_err());
    }

    #[test]
    fn impulse_radiates_retarded_field() {
        let grid = make_grid(0.0, 0.1, 50).unwrap();
        let dr = kubo_delta_r(&[ModeSpec::nonresonant(2.0, vec![c(1.0, 0.0)])], grid, 1).unwrap();
        let gr = kubo_g_r(&[], grid, 1).unwrap();
        let mut je = Signal::zeros(grid, 1);
        je.site_mut(0)[20] = c(1.0, 0.0);
        let src = SourceSet { j_e: Some(je), ..Default::default() };
        let (a, e) = external_fields(&src, &dr, &gr).unwrap();
        for k in 0..50 {
            let expect = if k > 20 { ((k - 20) as f64 * 0.2).sin() / 2.0 * 0.1 } else { 0.0 };
            assert!((a.at(0, k).re - expect).abs() < 1e-13, "{k}");
            if k < 20 {
                assert_eq!(a.at(0, k), c(0.0, 0.0));
            }
        }
        assert!(e.values.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn composite_weights_sum_to_radiation_weights() {
        let rad: Vec<C64> = (0..40).map(|k| c((k as f64 * 0.3).sin(), 0.0)).collect();
        let p = composite_weights(&rad, Sign::Plus);
        let m = composite_weights(&rad, Sign::Minus);
        for k in 0..40 {
            assert!((p[k] + m[k] - rad[k]).norm() < 1e-13);
        }
    }
}
