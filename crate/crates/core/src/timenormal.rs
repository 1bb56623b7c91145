//! Time-normal averages: narrow-band (explicit operator sorting), broad-band
//! (frequency-part contraction of closed-time-loop moments) and GKK
//! (frequency-split operators, then ordered).
//!
//! The broad-band engine is generic: every slot carries a weight per grid
//! sample on each branch, and the value is
//! `sum_b sum_t' prod w_{l,b_l}(t'_l) <T_C prod O_{b_l}(t'_l)>`.
//! It streams forward in time once, so memory stays at a few matrices.

use std::io::Write;

use crate::error::{ensure, Error, Result};
use crate::hilbert::{for_each_unitary, heisenberg_ops, step_action, Branch, OpId, SourceSet, SystemModel, SystemSpec};
use crate::linalg::{self, c, CMat, C64};
use crate::signals::{split_weights, Sign, Signal, TimeGrid};

pub const DEFAULT_MAX_ORDER: usize = 3;

/// One operator slot of a weighted closed-time-loop contraction.
#[derive(Debug, Clone)]
pub struct Slot {
    pub op: OpId,
    pub w_plus: Vec<C64>,
    pub w_minus: Vec<C64>,
}

impl Slot {
    /// Kernel weights `delta^(±)(t_l - t') dt` of the broad-band definition.
    pub fn broad(op: OpId, grid: &TimeGrid, k: usize) -> Slot {
        let n = grid.n;
        let pp = split_weights(n, Sign::Plus);
        let pm = split_weights(n, Sign::Minus);
        let w = |p: &[C64]| (0..n).map(|j| p[(k + n - j) % n]).collect::<Vec<_>>();
        Slot { op, w_plus: w(&pp), w_minus: w(&pm) }
    }

    /// Point insertion on a single branch.
    pub fn point(op: OpId, n: usize, k: usize, branch: Branch) -> Slot {
        let mut e = vec![c(0.0, 0.0); n];
        e[k] = c(1.0, 0.0);
        let z = vec![c(0.0, 0.0); n];
        match branch {
            Branch::Plus => Slot { op, w_plus: e, w_minus: z },
            Branch::Minus => Slot { op, w_plus: z, w_minus: e },
        }
    }
}

fn subsets(mask: usize) -> impl Iterator<Item = usize> {
    // nonempty submasks of `mask`
    let mut q = mask;
    let mut done = mask == 0;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = q;
        if q == 0 {
            done = true;
            return None;
        }
        q = (q - 1) & mask;
        if q == 0 {
            done = true;
        }
        Some(out)
    })
}

/// `sum_b sum_t' prod w <T_C prod O>` over all `2^m` branch assignments.
pub fn weighted_tc(model: &SystemModel, slots: &[Slot]) -> Result<C64> {
    let m = slots.len();
    let n = model.spec.grid.n;
    ensure(m <= 4, || format!("moment order {m} exceeds the engine limit 4"))?;
    for s in slots {
        ensure(s.w_plus.len() == n && s.w_minus.len() == n, || "slot weights must cover the grid".into())?;
        model.op_matrix(&s.op, 0)?;
    }
    if 4 * model.rho_factor.ncols() <= model.dim {
        Ok(weighted_tc_thin(model, slots))
    } else {
        Ok(weighted_tc_dense(model, slots))
    }
}

/// Prefix accumulators `P_r` (+ branch, acting on the right) and `M_r`
/// (− branch, acting on the left) kept as full Heisenberg-picture matrices.
fn weighted_tc_dense(model: &SystemModel, slots: &[Slot]) -> C64 {
    let m = slots.len();
    let d = model.dim;
    let full = (1usize << m) - 1;
    let mut plus: Vec<CMat> = (0..=full).map(|_| linalg::zeros(d)).collect();
    let mut minus = plus.clone();
    plus[0] = linalg::eye(d);
    minus[0] = linalg::eye(d);
    let zero = c(0.0, 0.0);
    for_each_unitary(model, |k, u| {
        let active = slots.iter().any(|s| s.w_plus[k] != zero || s.w_minus[k] != zero);
        if !active {
            return;
        }
        let ud = u.adjoint();
        let heis: Vec<CMat> = slots
            .iter()
            .map(|s| {
                if s.w_plus[k] == zero && s.w_minus[k] == zero {
                    linalg::zeros(d)
                } else {
                    &ud * model.op_matrix(&s.op, k).expect("validated") * u
                }
            })
            .collect();
        let xp: Vec<CMat> = heis.iter().zip(slots).map(|(h, s)| h * s.w_plus[k]).collect();
        let xm: Vec<CMat> = heis.iter().zip(slots).map(|(h, s)| h * s.w_minus[k]).collect();
        let old_p = plus.clone();
        let old_m = minus.clone();
        for r in 1..=full {
            for q in subsets(r) {
                // same-time block: input order on +, reversed on −
                let idx: Vec<usize> = (0..m).filter(|l| q >> l & 1 == 1).collect();
                if idx.iter().all(|&l| slots[l].w_plus[k] == zero) && idx.iter().all(|&l| slots[l].w_minus[k] == zero) {
                    continue;
                }
                let mut tp = linalg::eye(d);
                for &l in &idx {
                    tp *= &xp[l];
                }
                let mut tm = linalg::eye(d);
                for &l in idx.iter().rev() {
                    tm *= &xm[l];
                }
                plus[r] += tp * &old_p[r & !q];
                minus[r] += &old_m[r & !q] * tm;
            }
        }
    });
    let mut total = c(0.0, 0.0);
    for s in 0..=full {
        total += linalg::trace_prod(&model.rho, &(&minus[full & !s] * &plus[s]));
    }
    total
}

/// Same contraction on the columns `W` of the state factor: block `r` holds
/// `U(t_k) P_r W` and block `full + 1 + r` holds `U(t_k) M_r^† W`, so one
/// sparse step propagates everything and insertions act in the
/// Schrödinger picture.
fn weighted_tc_thin(model: &SystemModel, slots: &[Slot]) -> C64 {
    let m = slots.len();
    let n = model.spec.grid.n;
    let d = model.dim;
    let w0 = &model.rho_factor;
    let rk = w0.ncols();
    let full = (1usize << m) - 1;
    let blocks = full + 1;
    let mut st = CMat::zeros(d, 2 * blocks * rk);
    st.columns_mut(0, rk).copy_from(w0);
    st.columns_mut(blocks * rk, rk).copy_from(w0);
    let zero = c(0.0, 0.0);
    for k in 0..n {
        if k > 0 {
            st = step_action(model, k - 1, &st);
        }
        if !slots.iter().any(|s| s.w_plus[k] != zero || s.w_minus[k] != zero) {
            continue;
        }
        let ops: Vec<(linalg::Csr, linalg::Csr)> = slots
            .iter()
            .map(|s| {
                let o = model.op_matrix(&s.op, k).expect("validated");
                (linalg::Csr::from_dense(&o), linalg::Csr::from_dense(&o.adjoint()))
            })
            .collect();
        let old = st.clone();
        for r in 1..=full {
            for q in subsets(r) {
                let idx: Vec<usize> = (0..m).filter(|l| q >> l & 1 == 1).collect();
                let src = r & !q;
                if idx.iter().any(|&l| slots[l].w_plus[k] != zero) {
                    let mut v = old.columns(src * rk, rk).into_owned();
                    for &l in idx.iter().rev() {
                        v = ops[l].0.mul_dense(&v) * slots[l].w_plus[k];
                    }
                    let mut dst = st.columns_mut(r * rk, rk);
                    dst += v;
                }
                if idx.iter().any(|&l| slots[l].w_minus[k] != zero) {
                    let mut v = old.columns((blocks + src) * rk, rk).into_owned();
                    for &l in idx.iter().rev() {
                        v = ops[l].1.mul_dense(&v) * slots[l].w_minus[k].conj();
                    }
                    let mut dst = st.columns_mut((blocks + r) * rk, rk);
                    dst += v;
                }
            }
        }
    }
    let mut total = c(0.0, 0.0);
    for s in 0..=full {
        let p = st.columns(s * rk, rk);
        let mm = st.columns((blocks + (full & !s)) * rk, rk);
        total += mm.iter().zip(p.iter()).map(|(a, b)| a.conj() * b).sum::<C64>();
    }
    total
}

fn check_times(grid: &TimeGrid, times: &[usize]) -> Result<()> {
    for &k in times {
        ensure(k < grid.n, || format!("time index {k} is off the grid"))?;
    }
    Ok(())
}

/// Broad-band time-normal average of a Hermitian operator family.
pub fn tn_broad(model: &SystemModel, times: &[usize], op: &OpId) -> Result<C64> {
    let grid = model.grid();
    check_times(&grid, times)?;
    ensure(times.len() <= DEFAULT_MAX_ORDER, || {
        format!("order {} exceeds cap {DEFAULT_MAX_ORDER}", times.len())
    })?;
    let o = model.op_matrix(op, 0)?;
    ensure(linalg::hermiticity_defect(&o) <= 1e-12, || "broad-band ordering needs a Hermitian operator".into())?;
    let slots: Vec<Slot> = times.iter().map(|&k| Slot::broad(op.clone(), &grid, k)).collect();
    weighted_tc(model, &slots)
}

/// `<T_- O^†(dag...) T_+ O(nodag...)>` with explicit sorting.
pub fn tn_narrow(model: &SystemModel, dag_times: &[usize], nodag_times: &[usize], op: &OpId) -> Result<C64> {
    let dag: Vec<(OpId, usize)> = dag_times.iter().map(|&k| (op.clone(), k)).collect();
    let nodag: Vec<(OpId, usize)> = nodag_times.iter().map(|&k| (op.clone(), k)).collect();
    tn_narrow_mixed(model, &dag, &nodag)
}

/// Narrow-band average over arbitrary declared operators: daggered factors
/// `O_i^†(t_i)` anti-time-ordered on the left, plain factors time-ordered on
/// the right.
pub fn tn_narrow_mixed(model: &SystemModel, dag: &[(OpId, usize)], nodag: &[(OpId, usize)]) -> Result<C64> {
    check_times(&model.grid(), &dag.iter().chain(nodag).map(|p| p.1).collect::<Vec<_>>())?;
    let reqs: Vec<(OpId, usize)> = dag.iter().chain(nodag).cloned().collect();
    let ops = heisenberg_ops(model, &reqs)?;
    let nd = dag.len();
    let mut di: Vec<usize> = (0..nd).collect();
    let mut ni: Vec<usize> = (0..nodag.len()).collect();
    di.sort_by(|&a, &b| dag[a].1.cmp(&dag[b].1).then(b.cmp(&a)));
    ni.sort_by(|&a, &b| nodag[b].1.cmp(&nodag[a].1).then(a.cmp(&b)));
    let mut prod = linalg::eye(model.dim);
    for &i in &di {
        prod *= ops[i].adjoint();
    }
    for &i in &ni {
        prod *= &ops[nd + i];
    }
    Ok(linalg::trace_prod(&model.rho, &prod))
}

/// GKK form: each operator is frequency-split first (`O^(+)` on the +
/// branch, `O^(-)` on the − branch) and the split operators are then
/// closed-time-loop ordered at their nominal times. Valid only under RWA.
pub fn tn_gkk(model: &SystemModel, times: &[usize], op: &OpId) -> Result<C64> {
    let grid = model.grid();
    check_times(&grid, times)?;
    ensure(times.len() <= DEFAULT_MAX_ORDER, || {
        format!("order {} exceeds cap {DEFAULT_MAX_ORDER}", times.len())
    })?;
    model.op_matrix(op, 0)?;
    let slots: Vec<Slot> = times.iter().map(|&k| Slot::broad(op.clone(), &grid, k)).collect();
    let d = model.dim;
    let m = slots.len();
    let mut xp = vec![linalg::zeros(d); m];
    let mut xm = vec![linalg::zeros(d); m];
    for_each_unitary(model, |k, u| {
        let o = u.adjoint() * model.op_matrix(op, k).expect("validated") * u;
        for l in 0..m {
            xp[l] += &o * slots[l].w_plus[k];
            xm[l] += &o * slots[l].w_minus[k];
        }
    });
    let mut total = c(0.0, 0.0);
    for bits in 0..(1usize << m) {
        let mut p: Vec<usize> = (0..m).filter(|l| bits >> l & 1 == 1).collect();
        let mut q: Vec<usize> = (0..m).filter(|l| bits >> l & 1 == 0).collect();
        p.sort_by(|&a, &b| times[b].cmp(&times[a]).then(a.cmp(&b)));
        q.sort_by(|&a, &b| times[a].cmp(&times[b]).then(b.cmp(&a)));
        let mut prod = linalg::eye(d);
        for &l in &q {
            prod *= &xm[l];
        }
        for &l in &p {
            prod *= &xp[l];
        }
        total += linalg::trace_prod(&model.rho, &prod);
    }
    Ok(total)
}

/// Closed-form broad-band second moment of a free vacuum field with
/// two-point function `(hbar/2w) e^{-i w tau}`: nonzero only through grid
/// and window leakage of the frequency split.
pub fn free_field_leakage(grid: &TimeGrid, omega: f64, hbar: f64, t1: usize, t2: usize) -> f64 {
    let n = grid.n;
    let s1 = Slot::broad(OpId::A(0), grid, t1);
    let s2 = Slot::broad(OpId::A(0), grid, t2);
    let amp = hbar / (2.0 * omega);
    let corr = |tau: i64| C64::from_polar(amp, -omega * tau as f64 * grid.dt);
    let mut total = c(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            let ab = a as i64 - b as i64;
            let pp = if a >= b { corr(ab) } else { corr(-ab) };
            let mm = if a <= b { corr(ab) } else { corr(-ab) };
            total += s1.w_plus[a] * s2.w_plus[b] * pp
                + s1.w_minus[a] * s2.w_minus[b] * mm
                + s1.w_minus[a] * s2.w_plus[b] * corr(ab)
                + s1.w_plus[a] * s2.w_minus[b] * corr(-ab);
        }
    }
    total.norm()
}

/// Tolerance for causality and in-field checks: the free-field leakage at
/// the requested time pairs, floored at `1e-8`.
pub fn leakage_bound(grid: &TimeGrid, omega: f64, hbar: f64, times: &[usize]) -> f64 {
    let mut b: f64 = 1e-8;
    for &a in times {
        for &bb in times {
            b = b.max(free_field_leakage(grid, omega, hbar, a, bb));
        }
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalityDeltas {
    pub broad: f64,
    pub gkk: f64,
}

/// Changes of the broad and GKK moments under a single-sample `J_e` bump at
/// `t_p` on site 0.
pub fn causality_probe(spec: &SystemSpec, times: &[usize], op: &OpId, t_p: usize, amplitude: f64) -> Result<CausalityDeltas> {
    let grid = spec.grid;
    ensure(t_p < grid.n, || "bump time is off the grid".into())?;
    let base = crate::hilbert::build_system(spec.clone())?;
    if amplitude == 0.0 {
        return Ok(CausalityDeltas { broad: 0.0, gkk: 0.0 });
    }
    let mut bumped = spec.clone();
    let mut je = spec.sources.j_e.clone().unwrap_or_else(|| Signal::zeros(grid, spec.sites));
    je.site_mut(0)[t_p] += c(amplitude, 0.0);
    bumped.sources = SourceSet { j_e: Some(je), ..spec.sources.clone() };
    let bumped = crate::hilbert::build_system(bumped)?;
    let broad = (tn_broad(&bumped, times, op)? - tn_broad(&base, times, op)?).norm();
    let gkk = (tn_gkk(&bumped, times, op)? - tn_gkk(&base, times, op)?).norm();
    Ok(CausalityDeltas { broad, gkk })
}

/// Future-only variant of [`causality_probe`] that rejects bumps not later
/// than every moment time.
pub fn causality_probe_future(spec: &SystemSpec, times: &[usize], op: &OpId, t_p: usize, amplitude: f64) -> Result<CausalityDeltas> {
    let latest = times.iter().copied().max().unwrap_or(0);
    if t_p <= latest {
        return Err(Error::validation("bump must lie after every moment time"));
    }
    causality_probe(spec, times, op, t_p, amplitude)
}

/// `<D^†(t) D(t')>` ordered as a dipole family vs the four-factor
/// expression ordered by its factor operators `D = f1^† f2`.
pub fn ordering_family_contrast(model: &SystemModel, d_op: &OpId, f1: &OpId, f2: &OpId, t: usize, tp: usize) -> Result<(C64, C64)> {
    let dfam = tn_narrow(model, &[t], &[tp], d_op)?;
    // D^†(t) D(t') = f2^†(t) f1(t) f1^†(t') f2(t')
    let psi = tn_narrow_mixed(model, &[(f2.clone(), t), (f1.clone(), tp)], &[(f1.clone(), t), (f2.clone(), tp)])?;
    Ok((dfam, psi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definition {
    Narrow,
    Broad,
    Gkk,
    Tc,
}

impl Definition {
    pub fn tag(&self) -> &'static str {
        match self {
            Definition::Narrow => "narrow",
            Definition::Broad => "broad",
            Definition::Gkk => "gkk",
            Definition::Tc => "tc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEntry {
    pub times: Vec<f64>,
    pub sites: Vec<usize>,
    pub value: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTensor {
    pub order: usize,
    pub definition: Definition,
    pub entries: Vec<MomentEntry>,
}

impl MomentTensor {
    pub fn new(order: usize, definition: Definition) -> Self {
        MomentTensor { order, definition, entries: Vec::new() }
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut head = vec!["definition".to_string(), "m".to_string()];
        head.extend((1..=self.order).map(|i| format!("t{i}")));
        head.extend(["re".to_string(), "im".to_string()]);
        writeln!(w, "{}", head.join(","))?;
        for e in &self.entries {
            let mut row = vec![self.definition.tag().to_string(), self.order.to_string()];
            row.extend(e.times.iter().map(|t| format!("{t}")));
            row.push(format!("{:e}", e.value.re));
            row.push(format!("{:e}", e.value.im));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_system, tc_moment, BranchInsertion, DeviceSpec, ModeSpec, DEFAULT_MAX_DIM};
    use crate::signals::make_grid;

    pub(crate) fn qubit_mode(n: usize, dt: f64, g: f64, omega: f64) -> SystemModel {
        let grid = make_grid(0.0, dt, n).unwrap();
        let sx = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let sz = CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        let rho = CMat::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(0.7, 0.0)]);
        let dev = DeviceSpec {
            dim: 2,
            h_dev: sz * c(1.3, 0.0),
            j_ops: vec![sx.clone() * c(g, 0.0)],
            d_ops: vec![linalg::zeros(2)],
            rho,
            current_envelope: None,
            extra_ops: vec![],
            extra_currents: vec![],
        };
        build_system(crate::hilbert::SystemSpec {
            hbar: 1.0,
            grid,
            sites: 1,
            modes: vec![ModeSpec::nonresonant(omega, vec![c(1.0, 0.0)])],
            fock_cutoff: 3,
            device: dev,
            sources: SourceSet::default(),
            max_dim: DEFAULT_MAX_DIM,
        })
        .unwrap()
    }

    #[test]
    fn point_slots_reproduce_tc_moment() {
        let m = qubit_mode(40, 0.1, 0.4, 1.0);
        let ins = [
            BranchInsertion { op: OpId::J(0), k: 12, branch: Branch::Plus },
            BranchInsertion { op: OpId::A(0), k: 30, branch: Branch::Minus },
            BranchInsertion { op: OpId::J(0), k: 30, branch: Branch::Plus },
        ];
        let direct = tc_moment(&m, &ins).unwrap();
        // the engine sums all branch assignments; a point slot with zero
        // weight on one branch selects the other
        let slots: Vec<Slot> = ins.iter().map(|i| Slot::point(i.op.clone(), 40, i.k, i.branch)).collect();
        let eng = weighted_tc(&m, &slots).unwrap();
        assert!((direct - eng).norm() < 1e-12, "{direct} {eng}");
    }

    #[test]
    fn thin_route_matches_dense_route() {
        let m = qubit_mode(24, 0.1, 0.4, 1.0);
        assert!(4 * m.rho_factor.ncols() <= m.dim);
        let g = m.grid();
        let slots = [
            Slot::broad(OpId::J(0), &g, 5),
            Slot::point(OpId::Mode(0), 24, 9, Branch::Plus),
            Slot { op: OpId::A(0), w_plus: Slot::broad(OpId::A(0), &g, 17).w_plus, w_minus: Slot::broad(OpId::A(0), &g, 3).w_minus },
        ];
        for order in 1..=3 {
            let thin = weighted_tc_thin(&m, &slots[..order]);
            let dense = weighted_tc_dense(&m, &slots[..order]);
            assert!((thin - dense).norm() < 1e-12, "order {order}: {thin} {dense}");
        }
    }

    #[test]
    fn equal_time_ties_follow_input_order() {
        let m = qubit_mode(10, 0.1, 0.4, 1.0);
        let slots = [Slot::point(OpId::J(0), 10, 4, Branch::Plus), Slot::point(OpId::A(0), 10, 4, Branch::Plus)];
        let eng = weighted_tc(&m, &slots).unwrap();
        let ops = heisenberg_ops(&m, &[(OpId::J(0), 4), (OpId::A(0), 4)]).unwrap();
        let direct = linalg::trace_prod(&m.rho, &(&ops[0] * &ops[1]));
        assert!((eng - direct).norm() < 1e-12);
        let slots = [Slot::point(OpId::J(0), 10, 4, Branch::Minus), Slot::point(OpId::A(0), 10, 4, Branch::Minus)];
        let eng = weighted_tc(&m, &slots).unwrap();
        let direct = linalg::trace_prod(&m.rho, &(&ops[1] * &ops[0]));
        assert!((eng - direct).norm() < 1e-12);
    }

    #[test]
    fn first_moment_collapses_to_expectation() {
        let m = qubit_mode(64, 0.1, 0.5, 1.1);
        for k in [0usize, 20, 63] {
            let v = tn_broad(&m, &[k], &OpId::J(0)).unwrap();
            let h = heisenberg_ops(&m, &[(OpId::J(0), k)]).unwrap();
            let e = linalg::trace_prod(&m.rho, &h[0]);
            assert!((v - e).norm() < 1e-10);
        }
    }

    #[test]
    fn narrow_single_pair_has_no_reordering() {
        let m = qubit_mode(30, 0.1, 0.5, 1.0);
        let v = tn_narrow(&m, &[5], &[20], &OpId::Mode(0)).unwrap();
        let h = heisenberg_ops(&m, &[(OpId::Mode(0), 5), (OpId::Mode(0), 20)]).unwrap();
        let e = linalg::trace_prod(&m.rho, &(h[0].adjoint() * &h[1]));
        assert!((v - e).norm() < 1e-14);
        let v = tn_narrow(&m, &[], &[5, 20], &OpId::Mode(0)).unwrap();
        let e = linalg::trace_prod(&m.rho, &(&h[1] * &h[0]));
        assert!((v - e).norm() < 1e-14);
    }

    #[test]
    fn narrow_conjugation_symmetry() {
        let m = qubit_mode(30, 0.1, 0.5, 1.0);
        let a = tn_narrow(&m, &[5], &[20], &OpId::Mode(0)).unwrap();
        let b = tn_narrow(&m, &[20], &[5], &OpId::Mode(0)).unwrap();
        assert!((a.conj() - b).norm() < 1e-14);
    }

    #[test]
    fn broad_moments_of_hermitian_current_are_real() {
        let m = qubit_mode(48, 0.1, 0.5, 1.0);
        let v = tn_broad(&m, &[10, 30], &OpId::J(0)).unwrap();
        assert!(v.im.abs() < 1e-10, "{v}");
        let v = tn_broad(&m, &[10, 10, 25], &OpId::J(0)).unwrap();
        assert!(v.im.abs() < 1e-10, "{v}");
    }

    #[test]
    fn moment_csv_has_header() {
        let mut t = MomentTensor::new(2, Definition::Broad);
        t.entries.push(MomentEntry { times: vec![0.5, 1.0], sites: vec![0, 0], value: c(1.0, -2.0) });
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("definition,m,t1,t2,re,im\nbroad,2,0.5,1,"));
    }
}
