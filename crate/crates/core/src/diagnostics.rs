//! Energy, dissipation and congestion metrics evaluated on flow states.

use serde::{Deserialize, Serialize};

use crate::domain::{apply_bc, vacuum_threshold, BarrierField, FlowState, Grid};
use crate::error::Result;
use crate::pressure::{FluidParams, PressureModel};
use crate::solver::{for_each_face, padded_velocity, Model};

/// Floor added to the global divergence norm in the LMP ratio.
pub const LMP_FLOOR: f64 = 1e-12;

/// One diagnostics emission. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub singular_potential: f64,
    pub energy: f64,
    pub dissipation_rate: f64,
    /// `∫ dissipation_rate dt` since the start of the run, summed over the
    /// accepted steps with the rate at the start of each step.
    pub dissipated: f64,
    pub max_ratio: f64,
    pub congested_measure: f64,
    pub pi_l1: f64,
    pub complementarity: f64,
    /// L² norm of `div(ρ*u)` over congested cells.
    pub divu_congested: f64,
    /// L² norm of `div(ρ*u)` over the whole domain.
    pub divu_l2: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 14] = [
        "t",
        "mass",
        "kinetic",
        "internal",
        "singular_potential",
        "energy",
        "dissipation_rate",
        "dissipated",
        "max_ratio",
        "congested_measure",
        "pi_l1",
        "complementarity",
        "divu_congested",
        "divu_l2",
    ];
}

/// `(∫½ρ|u|², ∫p_scale ρ^γ/(γ-1), ∫ρΓ(ρ/ρ*))` by the midpoint rule.
pub fn energy(state: &FlowState, pressure: &PressureModel, fluid: &FluidParams, barrier: &BarrierField) -> Result<(f64, f64, f64)> {
    let vac = vacuum_threshold(barrier);
    let (mut kin, mut int, mut pot) = (0.0, 0.0, 0.0);
    for p in state.grid.interior() {
        let rho = state.rho[p];
        if rho > vac {
            kin += 0.5 * (state.mom[0][p].powi(2) + state.mom[1][p].powi(2)) / rho;
        }
        int += fluid.internal_energy_density(rho);
        pot += rho * pressure.gamma(rho / barrier.values[p])?;
    }
    let vol = state.grid.cell_volume();
    Ok((kin * vol, int * vol, pot * vol))
}

/// Derivative of an interior field along `axis`: centred inside, one-sided
/// at the boundary rows.
fn interior_gradient(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let [nx, ny] = grid.cells;
    let n = if axis == 0 { nx } else { ny };
    let h = grid.dx[axis];
    let step = if axis == 0 { 1 } else { nx };
    let mut out = vec![0.0; f.len()];
    if n < 2 || axis >= grid.dim {
        return out;
    }
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let pos = if axis == 0 { i } else { j };
            out[k] = if pos == 0 {
                (f[k + step] - f[k]) / h
            } else if pos == n - 1 {
                (f[k] - f[k - step]) / h
            } else {
                (f[k + step] - f[k - step]) / (2.0 * h)
            };
        }
    }
    out
}

/// `∫ 2μ|D(u)|² + λ(div u)²` with centred velocity gradients.
pub fn dissipation_rate(state: &FlowState, fluid: &FluidParams, vacuum: f64) -> f64 {
    let grid = state.grid;
    let u = [state.velocity(0, vacuum), state.velocity(1, vacuum)];
    let d = grid.dim;
    // g[a][b] = ∂_b u_a
    let g: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|a| (0..d).map(|b| interior_gradient(&grid, &u[a], b)).collect())
        .collect();
    let mut total = 0.0;
    for k in 0..grid.n_cells() {
        let mut dd = 0.0;
        let mut div = 0.0;
        for a in 0..d {
            div += g[a][a][k];
            for b in 0..d {
                let s = 0.5 * (g[a][b][k] + g[b][a][k]);
                dd += s * s;
            }
        }
        total += 2.0 * fluid.mu * dd + fluid.lambda * div * div;
    }
    total * grid.cell_volume()
}

/// Centred `div(ρ*u)` per interior cell, with zero normal flux at walls.
pub fn div_barrier_velocity(state: &FlowState, barrier: &BarrierField) -> Vec<f64> {
    let mut s = state.clone();
    apply_bc(&mut s);
    let grid = s.grid;
    let u = padded_velocity(&s, vacuum_threshold(barrier));
    let mut div = vec![0.0; grid.padded_len()];
    for axis in 0..grid.dim {
        let h = grid.dx[axis];
        let ua = &u[axis];
        for_each_face(&grid, axis, |l, r, l_in, r_in| {
            let flux = 0.5 * (barrier.values[l] * ua[l] + barrier.values[r] * ua[r]) / h;
            if l_in {
                div[l] += flux;
            }
            if r_in {
                div[r] -= flux;
            }
        });
    }
    grid.gather(&div)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionMetrics {
    pub max_ratio: f64,
    pub congested_measure: f64,
    pub pi_l1: f64,
    pub complementarity: f64,
    pub divu_congested: f64,
    pub divu_l2: f64,
}

/// Congested cells are those with `ρ/ρ* ≥ 1 - delta_c`.
pub fn congestion_metrics(
    state: &FlowState,
    pressure: &PressureModel,
    barrier: &BarrierField,
    delta_c: f64,
) -> Result<CongestionMetrics> {
    let grid = state.grid;
    let vol = grid.cell_volume();
    let div = div_barrier_velocity(state, barrier);
    let mut m = CongestionMetrics {
        max_ratio: f64::NEG_INFINITY,
        congested_measure: 0.0,
        pi_l1: 0.0,
        complementarity: 0.0,
        divu_congested: 0.0,
        divu_l2: 0.0,
    };
    for (k, p) in grid.interior().enumerate() {
        let star = barrier.values[p];
        let rho = state.rho[p];
        let r = rho / star;
        let pi = pressure.pi(r)?;
        m.max_ratio = m.max_ratio.max(r);
        m.pi_l1 += pi;
        m.complementarity += (star - rho) * pi;
        m.divu_l2 += div[k] * div[k];
        if r >= 1.0 - delta_c {
            m.congested_measure += 1.0;
            m.divu_congested += div[k] * div[k];
        }
    }
    m.congested_measure *= vol;
    m.pi_l1 *= vol;
    m.complementarity *= vol;
    m.divu_congested = (m.divu_congested * vol).sqrt();
    m.divu_l2 = (m.divu_l2 * vol).sqrt();
    Ok(m)
}

/// Full diagnostics record for `state`; `dissipated` is left at zero for
/// the caller to fill in.
pub fn record(state: &FlowState, model: &Model, delta_c: f64) -> Result<DiagnosticsRecord> {
    let (kinetic, internal, singular_potential) = energy(state, model.pressure, model.fluid, model.barrier)?;
    let c = congestion_metrics(state, model.pressure, model.barrier, delta_c)?;
    Ok(DiagnosticsRecord {
        t: state.t,
        mass: state.total_mass(),
        kinetic,
        internal,
        singular_potential,
        energy: kinetic + internal + singular_potential,
        dissipation_rate: dissipation_rate(state, model.fluid, vacuum_threshold(model.barrier)),
        dissipated: 0.0,
        max_ratio: c.max_ratio,
        congested_measure: c.congested_measure,
        pi_l1: c.pi_l1,
        complementarity: c.complementarity,
        divu_congested: c.divu_congested,
        divu_l2: c.divu_l2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBudget {
    pub e0: f64,
    /// `E(t_{k+1}) - E(t_k) + dissipated(t_{k+1}) - dissipated(t_k)` per
    /// pair of consecutive records.
    pub residuals: Vec<f64>,
    pub max_positive: f64,
    pub cumulative_positive: f64,
}

pub fn energy_budget(records: &[DiagnosticsRecord]) -> EnergyBudget {
    let residuals: Vec<f64> = records
        .windows(2)
        .map(|w| w[1].energy - w[0].energy + w[1].dissipated - w[0].dissipated)
        .collect();
    let positive = residuals.iter().map(|r| r.max(0.0));
    EnergyBudget {
        e0: records.first().map_or(0.0, |r| r.energy),
        max_positive: positive.clone().fold(0.0, f64::max),
        cumulative_positive: positive.sum(),
        residuals,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmpReport {
    /// `divu_congested / (divu_l2 + floor)` per record, 0 without congestion.
    pub ratios: Vec<f64>,
    pub congested_records: usize,
    /// Mean ratio over records that have congested cells (0 if none).
    pub mean_congested: f64,
}

pub fn lmp_crosscheck(records: &[DiagnosticsRecord]) -> LmpReport {
    let ratios: Vec<f64> = records
        .iter()
        .map(|r| {
            if r.congested_measure > 0.0 {
                r.divu_congested / (r.divu_l2 + LMP_FLOOR)
            } else {
                0.0
            }
        })
        .collect();
    let congested: Vec<f64> = records
        .iter()
        .zip(&ratios)
        .filter(|(r, _)| r.congested_measure > 0.0)
        .map(|(_, &x)| x)
        .collect();
    let mean = if congested.is_empty() {
        0.0
    } else {
        congested.iter().sum::<f64>() / congested.len() as f64
    };
    LmpReport {
        ratios,
        congested_records: congested.len(),
        mean_congested: mean,
    }
}

/// True when `values` is strictly decreasing.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}
