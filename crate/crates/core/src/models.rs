//! Reference model builders shared by the experiment runner and the tests.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hilbert::{CurrentPart, DeviceSpec, ModeSpec, SourceSet, SystemSpec, DEFAULT_MAX_DIM};
use crate::linalg::{self, c, CMat};
use crate::signals::{make_grid, Signal, TimeGrid};

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Lowering operator `|g><e|` with `e = 0`, `g = 1`.
pub fn sigma_minus() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

/// Nearest frequency that completes an integer number of cycles over the
/// grid period.
pub fn commensurate(grid: &TimeGrid, omega: f64) -> f64 {
    let p = grid.period();
    let cycles = (p * omega / std::f64::consts::TAU).round().max(1.0);
    std::f64::consts::TAU * cycles / p
}

/// `sin^2` switch-on and switch-off over `frac` of the window at each end.
pub fn ramp(grid: &TimeGrid, frac: f64) -> Vec<f64> {
    let t_end = grid.t(grid.n - 1) - grid.t(0);
    let w = frac * t_end;
    (0..grid.n)
        .map(|k| {
            let t = grid.t(k) - grid.t(0);
            let s = ((t.min(t_end - t)) / w).clamp(0.0, 1.0);
            (std::f64::consts::FRAC_PI_2 * s).sin().powi(2)
        })
        .collect()
}

/// Parameters of the interacting broad-band reference model: one field mode
/// coupled through `g sigma_x` to a two-level device, driven by a Gaussian
/// current pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiatedParams {
    pub window: f64,
    pub omega: f64,
    pub level_splitting: f64,
    pub coupling: f64,
    pub ramp_fraction: f64,
    pub pulse_amplitude: f64,
    pub pulse_center: f64,
    pub pulse_width: f64,
    pub fock_cutoff: usize,
    pub separation: f64,
}

impl Default for RadiatedParams {
    fn default() -> Self {
        RadiatedParams {
            window: 160.0,
            omega: 6.0,
            level_splitting: 8.0,
            coupling: 1.2,
            ramp_fraction: 0.25,
            pulse_amplitude: 0.5,
            pulse_center: 0.4,
            pulse_width: 0.5,
            fock_cutoff: 8,
            separation: 0.3,
        }
    }
}

pub fn reference_rho() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.2, 0.0), c(0.2, 0.0), c(0.7, 0.0)])
}

/// Reference broad-band model at step `dt`, with `hbar` entering so that
/// `H / hbar` is the same operator for every `hbar`.
pub fn radiated_reference(p: &RadiatedParams, dt: f64, hbar: f64) -> Result<SystemSpec> {
    let n = (p.window / dt).round() as usize + 1;
    let grid = make_grid(0.0, dt, n)?;
    let omega = commensurate(&grid, p.omega);
    let sq = hbar.sqrt();
    let t_end = grid.t(n - 1);
    let je = Signal::from_real(grid, 1, |_, t| {
        sq * p.pulse_amplitude * (-((t - p.pulse_center * t_end) / p.pulse_width).powi(2)).exp()
    });
    let dev = DeviceSpec {
        dim: 2,
        h_dev: sigma_z() * c(0.5 * hbar * p.level_splitting, 0.0),
        j_ops: vec![sigma_x() * c(sq * p.coupling, 0.0)],
        d_ops: vec![linalg::zeros(2)],
        rho: reference_rho(),
        current_envelope: Some(ramp(&grid, p.ramp_fraction)),
        extra_ops: vec![],
        extra_currents: vec![],
    };
    Ok(SystemSpec {
        hbar,
        grid,
        sites: 1,
        modes: vec![ModeSpec::nonresonant(omega, vec![c(1.0, 0.0)])],
        fock_cutoff: p.fock_cutoff,
        device: dev,
        sources: SourceSet { j_e: Some(je), ..Default::default() },
        max_dim: DEFAULT_MAX_DIM,
    })
}

/// Check times of the reference model: the window middle and a point
/// `separation` earlier.
pub fn radiated_times(p: &RadiatedParams, grid: &TimeGrid) -> (usize, usize) {
    let t1 = grid.n / 2;
    (t1, t1 - (p.separation / grid.dt).round() as usize)
}

/// Driven two-level device coupled to one resonant mode in the frame
/// rotating at the carrier.
pub fn resonant_reference(dt: f64, window: f64, hbar: f64) -> Result<SystemSpec> {
    let n = (window / dt).round() as usize + 1;
    let grid = make_grid(0.0, dt, n)?;
    let sq = hbar.sqrt();
    let t_end = grid.t(n - 1);
    let de = Signal::from_fn(grid, 1, |_, t| {
        c(0.3 * sq, 0.1 * sq) * (-((t - 0.35 * t_end) / 1.0).powi(2)).exp()
    });
    let dev = DeviceSpec {
        dim: 2,
        h_dev: sigma_z() * c(0.5 * hbar * 0.4, 0.0),
        j_ops: vec![linalg::zeros(2)],
        d_ops: vec![sigma_minus() * c(0.6 * sq, 0.0)],
        rho: reference_rho(),
        current_envelope: None,
        extra_ops: vec![],
        extra_currents: vec![],
    };
    Ok(SystemSpec {
        hbar,
        grid,
        sites: 1,
        modes: vec![ModeSpec::resonant(5.0, 5.0 - 0.2, vec![c(1.0, 0.0)])],
        fock_cutoff: 12,
        device: dev,
        sources: SourceSet { d_e: Some(de), ..Default::default() },
        max_dim: DEFAULT_MAX_DIM,
    })
}

/// Parameters of the two-slice dressing reference: two thermal harmonic
/// oscillators, the first carrying the current `g (b + b^†)` inside slice 1
/// and the second inside slice 2, both coupled to one slow field mode.
/// Slice 1 is driven by `A_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DressingParams {
    pub window: f64,
    pub dt: f64,
    pub omega: f64,
    pub device_omega: f64,
    pub coupling: f64,
    pub nbar: f64,
    pub slice_width: f64,
    pub first_slice: f64,
    pub separation: f64,
    pub drive: f64,
    pub device_cutoff: usize,
    pub fock_cutoff: usize,
    pub count: usize,
    /// Lattice step in units of the standard deviation of each slice mean.
    pub step_per_sd: f64,
}

impl Default for DressingParams {
    fn default() -> Self {
        DressingParams {
            window: 125.66,
            dt: 0.02,
            omega: 0.05,
            device_omega: 1.0,
            coupling: 5.0,
            nbar: 0.0,
            slice_width: 0.1,
            first_slice: 40.0,
            separation: 31.4,
            drive: 3.0,
            device_cutoff: 10,
            fock_cutoff: 8,
            count: 16,
            step_per_sd: 1.2,
        }
    }
}

impl DressingParams {
    pub fn grid(&self) -> Result<TimeGrid> {
        make_grid(0.0, self.dt, (self.window / self.dt).round() as usize)
    }

    pub fn slice_map(&self) -> crate::pathspace::SliceMap {
        crate::pathspace::SliceMap {
            first: (self.first_slice / self.dt).round() as usize,
            per_slice: ((self.slice_width / self.dt).round() as usize).max(1),
            stride: (self.separation / self.dt).round() as usize,
        }
    }

    /// `sin^2` bump over each slice, zero elsewhere.
    pub fn envelope(&self, n: usize, slices: &[usize]) -> Vec<f64> {
        let map = self.slice_map();
        let mut env = vec![0.0; n];
        for &s in slices {
            for (i, k) in map.samples(s).enumerate() {
                env[k] = (std::f64::consts::PI * i as f64 / map.per_slice as f64).sin().powi(2);
            }
        }
        env
    }

    /// Full model (`with_field`) or the device alone, with `A_e` equal to the
    /// slice-1 drive plus `extra` when given.
    pub fn spec(&self, hbar: f64, with_field: bool, extra: Option<&Signal>) -> Result<SystemSpec> {
        let grid = self.grid()?;
        let n = grid.n;
        let sq = hbar.sqrt();
        let env1 = self.envelope(n, &[0]);
        let mut ae = Signal::from_real(grid, 1, |_, _| 0.0);
        for k in 0..n {
            ae.site_mut(0)[k] = c(sq * self.drive * env1[k], 0.0);
        }
        if let Some(e) = extra {
            ae = ae.add(e)?;
        }
        let d = self.device_cutoff + 1;
        let b = linalg::annihilation(self.device_cutoff);
        let x = (&b + b.adjoint()) * c(sq * self.coupling, 0.0);
        let num = b.adjoint() * &b * c(hbar * self.device_omega, 0.0);
        let id = linalg::eye(d);
        let th = linalg::thermal_state(self.device_cutoff, self.nbar);
        let dev = DeviceSpec {
            dim: d * d,
            h_dev: linalg::kron(&num, &id) + linalg::kron(&id, &num),
            j_ops: vec![linalg::kron(&x, &id)],
            d_ops: vec![linalg::zeros(d * d)],
            rho: linalg::kron(&th, &th),
            current_envelope: Some(env1),
            extra_ops: vec![],
            extra_currents: vec![CurrentPart { ops: vec![linalg::kron(&id, &x)], envelope: self.envelope(n, &[1]) }],
        };
        let modes = if with_field { vec![ModeSpec::nonresonant(commensurate(&grid, self.omega), vec![c(1.0, 0.0)])] } else { vec![] };
        Ok(SystemSpec {
            hbar,
            grid,
            sites: 1,
            modes,
            fock_cutoff: self.fock_cutoff,
            device: dev,
            sources: SourceSet { a_e: Some(ae), ..Default::default() },
            max_dim: DEFAULT_MAX_DIM,
        })
    }
}

/// Parameters of the linear reference: a thermal harmonic device with current
/// `g(t) sqrt(hbar) k (b + b^†)` coupled to one field mode and driven by a
/// Gaussian `A_e` pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub window: f64,
    pub omega: f64,
    pub device_omega: f64,
    pub coupling: f64,
    pub nbar: f64,
    pub ramp_fraction: f64,
    pub drive: f64,
    pub drive_center: f64,
    pub drive_width: f64,
    pub device_cutoff: usize,
    pub fock_cutoff: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            window: 40.0,
            omega: 6.0,
            device_omega: 8.0,
            coupling: 1.0,
            nbar: 0.15,
            ramp_fraction: 0.25,
            drive: 0.4,
            drive_center: 0.4,
            drive_width: 0.5,
            device_cutoff: 5,
            fock_cutoff: 3,
        }
    }
}

pub fn linear_reference(p: &LinearParams, dt: f64, hbar: f64) -> Result<SystemSpec> {
    let n = (p.window / dt).round() as usize + 1;
    let grid = make_grid(0.0, dt, n)?;
    let sq = hbar.sqrt();
    let t_end = grid.t(n - 1);
    let ae = Signal::from_real(grid, 1, |_, t| sq * p.drive * (-((t - p.drive_center * t_end) / p.drive_width).powi(2)).exp());
    let b = linalg::annihilation(p.device_cutoff);
    let dev = DeviceSpec {
        dim: p.device_cutoff + 1,
        h_dev: b.adjoint() * &b * c(hbar * p.device_omega, 0.0),
        j_ops: vec![(&b + b.adjoint()) * c(sq * p.coupling, 0.0)],
        d_ops: vec![linalg::zeros(p.device_cutoff + 1)],
        rho: linalg::thermal_state(p.device_cutoff, p.nbar),
        current_envelope: Some(ramp(&grid, p.ramp_fraction)),
        extra_ops: vec![],
        extra_currents: vec![],
    };
    Ok(SystemSpec {
        hbar,
        grid,
        sites: 1,
        modes: vec![ModeSpec::nonresonant(commensurate(&grid, p.omega), vec![c(1.0, 0.0)])],
        fock_cutoff: p.fock_cutoff,
        device: dev,
        sources: SourceSet { a_e: Some(ae), ..Default::default() },
        max_dim: DEFAULT_MAX_DIM,
    })
}

/// Parameters of the causality reference: a two-level device with current
/// `g sigma_x` coupled to one field mode far from the level splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CausalityParams {
    pub dt: f64,
    pub n: usize,
    pub omega: f64,
    pub level_splitting: f64,
    pub coupling: f64,
    pub fock_cutoff: usize,
}

impl Default for CausalityParams {
    fn default() -> Self {
        CausalityParams { dt: 0.05, n: 800, omega: 3.0, level_splitting: 1.3, coupling: 1.0, fock_cutoff: 5 }
    }
}

pub fn causality_reference(p: &CausalityParams, hbar: f64) -> Result<SystemSpec> {
    let grid = make_grid(0.0, p.dt, p.n)?;
    let sq = hbar.sqrt();
    let rho = CMat::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.2, 0.1), c(0.2, -0.1), c(0.7, 0.0)]);
    let dev = DeviceSpec {
        dim: 2,
        h_dev: sigma_z() * c(0.5 * hbar * p.level_splitting, 0.0),
        j_ops: vec![sigma_x() * c(sq * p.coupling, 0.0)],
        d_ops: vec![linalg::zeros(2)],
        rho,
        current_envelope: None,
        extra_ops: vec![],
        extra_currents: vec![],
    };
    Ok(SystemSpec {
        hbar,
        grid,
        sites: 1,
        modes: vec![ModeSpec::nonresonant(commensurate(&grid, p.omega), vec![c(1.0, 0.0)])],
        fock_cutoff: p.fock_cutoff,
        device: dev,
        sources: SourceSet::default(),
        max_dim: DEFAULT_MAX_DIM,
    })
}
