//! Explicit finite-volume update for the approximate congestion system
//!
//! ```text
//! ∂t ρ + div(ρu) = 0
//! ∂t(ρu) + div(ρu⊗u) + ∇p(ρ) + ρ*∇π(ρ/ρ*) - div S(u) = 0
//! ```
//!
//! Mass and momentum are upwinded on face velocities averaged from the two
//! adjacent cells. The pressure force is applied either as `ρ∇(H + Q)`
//! ("potential" form, the default) or as `∇p + ρ*∇π` ("direct" form), with
//! centred gradients built from face differences. Walls are no-slip and
//! impermeable through the ghost layer.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::domain::{apply_bc, vacuum_threshold, BarrierField, FlowState};
use crate::error::{Error, Result};
use crate::pressure::{eval_internal, FluidParams, PressureModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceForm {
    #[default]
    Potential,
    Direct,
}

fn default_cfl() -> f64 {
    0.4
}
fn default_barrier_tol() -> f64 {
    1e-6
}
fn default_max_substeps() -> usize {
    40
}
fn default_delta_c() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Accepted states satisfy `ρ/ρ* ≤ 1 - barrier_tol` for barrier laws.
    #[serde(default = "default_barrier_tol")]
    pub barrier_tol: f64,
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
    pub t_end: f64,
    /// Snapshot interval; `None` keeps only the initial and final states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub force_form: ForceForm,
    /// Diagnostics cadence; `None` means `t_end / 100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics_every: Option<f64>,
    /// Congested cells are those with `ρ/ρ* ≥ 1 - delta_c`.
    #[serde(default = "default_delta_c")]
    pub delta_c: f64,
}

impl SolverConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            cfl: default_cfl(),
            barrier_tol: default_barrier_tol(),
            max_substeps: default_max_substeps(),
            t_end,
            snapshot_every: None,
            force_form: ForceForm::Potential,
            diagnostics_every: None,
            delta_c: default_delta_c(),
        }
    }

    pub fn issues(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            out.push(Error::param("cfl", format!("must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.barrier_tol > 0.0 && self.barrier_tol < 0.1) {
            out.push(Error::param("barrier_tol", format!("must lie in (0, 0.1), got {}", self.barrier_tol)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            out.push(Error::param("t_end", format!("must be finite and >= 0, got {}", self.t_end)));
        }
        for (name, v) in [("snapshot_every", self.snapshot_every), ("diagnostics_every", self.diagnostics_every)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    out.push(Error::param(name, format!("must be > 0, got {v}")));
                }
            }
        }
        if !(self.delta_c > 0.0 && self.delta_c < 1.0) {
            out.push(Error::param("delta_c", format!("must lie in (0, 1), got {}", self.delta_c)));
        }
        out
    }

    pub fn diagnostics_interval(&self, span: f64) -> f64 {
        self.diagnostics_every.unwrap_or(span / 100.0)
    }
}

/// Manufactured forcing added to the mass and momentum equations.
pub trait SourceTerms: Sync {
    /// `(S_ρ, S_m)` at time `t` and point `x`.
    fn eval(&self, t: f64, x: [f64; 2]) -> Result<(f64, [f64; 2])>;
}

/// Everything a step needs besides the state.
#[derive(Clone, Copy)]
pub struct Model<'a> {
    pub pressure: &'a PressureModel,
    pub fluid: &'a FluidParams,
    pub barrier: &'a BarrierField,
    pub source: Option<&'a dyn SourceTerms>,
}

impl<'a> Model<'a> {
    pub fn new(pressure: &'a PressureModel, fluid: &'a FluidParams, barrier: &'a BarrierField) -> Self {
        Self {
            pressure,
            fluid,
            barrier,
            source: None,
        }
    }

    pub fn with_source(mut self, source: &'a dyn SourceTerms) -> Self {
        self.source = Some(source);
        self
    }

    fn ratio(&self, rho: f64, p: usize) -> Result<f64> {
        let r = rho / self.barrier.values[p];
        if let Some(limit) = self.pressure.law().ratio_limit() {
            if r >= limit {
                return Err(Error::BarrierViolation { ratio: r, cell: p });
            }
        }
        Ok(r)
    }
}

/// Per-cell `c = sqrt(p'(ρ) + π'(ρ/ρ*))`, row-major over the interior.
pub fn effective_sound_speed(state: &FlowState, model: &Model) -> Result<Vec<f64>> {
    state
        .grid
        .interior()
        .map(|p| {
            let rho = state.rho[p];
            let r = model.ratio(rho, p)?;
            let c2 = model.fluid.dp(rho) + model.pressure.law().dpi_unchecked(r);
            Ok(c2.max(0.0).sqrt())
        })
        .collect()
}

/// Largest stable explicit step: `cfl·min h/(|u|+c)`, capped by the viscous
/// limit `h²·min ρ / (2d(2μ+λ))` over non-vacuum cells.
pub fn stable_dt(state: &FlowState, model: &Model, cfl: f64) -> Result<f64> {
    let grid = state.grid;
    let h = grid.dx[..grid.dim].iter().copied().fold(f64::INFINITY, f64::min);
    let vac = vacuum_threshold(model.barrier);
    let speeds = effective_sound_speed(state, model)?;
    let mut conv = f64::INFINITY;
    let mut rho_min = f64::INFINITY;
    for (k, p) in grid.interior().enumerate() {
        let rho = state.rho[p];
        if rho <= vac {
            continue;
        }
        rho_min = rho_min.min(rho);
        let speed = (state.mom[0][p].powi(2) + state.mom[1][p].powi(2)).sqrt() / rho + speeds[k];
        if speed > 0.0 {
            conv = conv.min(h / speed);
        }
    }
    let visc = h * h * rho_min / (2.0 * grid.dim as f64 * model.fluid.bulk().max(model.fluid.mu));
    let dt = (cfl * conv).min(visc);
    if dt > 0.0 && dt.is_finite() {
        Ok(dt)
    } else {
        Err(Error::DegenerateState { dt })
    }
}

/// Cell velocities on the padded layout (ghosts included), zero in vacuum.
pub(crate) fn padded_velocity(state: &FlowState, vac: f64) -> [Vec<f64>; 2] {
    let n = state.rho.len();
    let mut u = [vec![0.0; n], vec![0.0; n]];
    for p in 0..n {
        let rho = state.rho[p];
        if rho > vac {
            u[0][p] = state.mom[0][p] / rho;
            u[1][p] = state.mom[1][p] / rho;
        }
    }
    u
}

/// Calls `f(left, right, left_is_interior, right_is_interior)` for every face
/// normal to `axis`, wall faces included.
pub(crate) fn for_each_face(grid: &crate::domain::Grid, axis: usize, mut f: impl FnMut(usize, usize, bool, bool)) {
    let [nx, ny] = grid.cells;
    let s = grid.stride(axis);
    if axis == 0 {
        for j in 0..ny {
            for i in 0..=nx {
                let right = grid.idx(0, j) + i;
                f(right - s, right, i > 0, i < nx);
            }
        }
    } else {
        for j in 0..=ny {
            for i in 0..nx {
                let right = grid.idx(i, 0) + j * s;
                f(right - s, right, j > 0, j < ny);
            }
        }
    }
}

#[inline]
fn upwind(uf: f64, left: f64, right: f64) -> f64 {
    if uf > 0.0 {
        uf * left
    } else if uf < 0.0 {
        uf * right
    } else {
        0.0
    }
}

/// Smallest fraction of the distance to the barrier a cell may keep in one
/// step; faster approaches are rejected like crossings.
pub const GAP_SHRINK: f64 = 0.5;

/// One forward-Euler update of the conservative variables.
pub fn step(state: &FlowState, dt: f64, model: &Model, cfg: &SolverConfig) -> Result<FlowState> {
    let mut s = state.clone();
    apply_bc(&mut s);
    let grid = s.grid;
    let n = grid.padded_len();
    let vac = vacuum_threshold(model.barrier);
    let u = padded_velocity(&s, vac);

    // Scalar potentials on the padded layout; ghosts mirror the interior.
    let (pot_a, pot_b) = match cfg.force_form {
        ForceForm::Potential => {
            let mut phi = vec![0.0; n];
            for p in 0..n {
                let rho = s.rho[p];
                let r = model.ratio(rho, p)?;
                phi[p] = eval_internal(model.fluid, rho).1 + model.pressure.q(r)?;
            }
            (phi, Vec::new())
        }
        ForceForm::Direct => {
            let mut pint = vec![0.0; n];
            let mut pi = vec![0.0; n];
            for p in 0..n {
                let rho = s.rho[p];
                let r = model.ratio(rho, p)?;
                pint[p] = eval_internal(model.fluid, rho).0;
                pi[p] = model.pressure.law().pi_unchecked(r);
            }
            (pint, pi)
        }
    };

    let mut drho = vec![0.0; n];
    let mut dmom = [vec![0.0; n], vec![0.0; n]];
    let mut grad_a = [vec![0.0; n], vec![0.0; n]];
    let mut grad_b = [vec![0.0; n], vec![0.0; n]];
    let direct = cfg.force_form == ForceForm::Direct;

    for axis in 0..grid.dim {
        let h = grid.dx[axis];
        let ua = &u[axis];
        for_each_face(&grid, axis, |l, r, l_in, r_in| {
            let uf = 0.5 * (ua[l] + ua[r]);
            let mass = upwind(uf, s.rho[l], s.rho[r]) / h;
            let mx = if uf > 0.0 { mass * u[0][l] } else { mass * u[0][r] };
            let my = if uf > 0.0 { mass * u[1][l] } else { mass * u[1][r] };
            let ga = 0.5 * (pot_a[r] - pot_a[l]) / h;
            let gb = if direct { 0.5 * (pot_b[r] - pot_b[l]) / h } else { 0.0 };
            if l_in {
                drho[l] -= mass;
                dmom[0][l] -= mx;
                dmom[1][l] -= my;
                grad_a[axis][l] += ga;
                grad_b[axis][l] += gb;
            }
            if r_in {
                drho[r] += mass;
                dmom[0][r] += mx;
                dmom[1][r] += my;
                grad_a[axis][r] += ga;
                grad_b[axis][r] += gb;
            }
        });
    }

    let (mu, lam) = (model.fluid.mu, model.fluid.lambda);
    let bulk = 2.0 * mu + lam;
    let [hx, hy] = grid.dx;
    let px = grid.px();
    let mut out = s.clone();
    for (k, p) in grid.interior().enumerate() {
        let rho = s.rho[p];
        let mut force = [0.0; 2];
        for a in 0..grid.dim {
            force[a] = if direct {
                -grad_a[a][p] - model.barrier.values[p] * grad_b[a][p]
            } else {
                -rho * grad_a[a][p]
            };
        }
        let (ux, uy) = (&u[0], &u[1]);
        let visc = if grid.dim == 1 {
            [bulk * (ux[p + 1] - 2.0 * ux[p] + ux[p - 1]) / (hx * hx), 0.0]
        } else {
            let lap_x = |v: &Vec<f64>| (v[p + 1] - 2.0 * v[p] + v[p - 1]) / (hx * hx);
            let lap_y = |v: &Vec<f64>| (v[p + px] - 2.0 * v[p] + v[p - px]) / (hy * hy);
            let cross =
                |v: &Vec<f64>| (v[p + 1 + px] - v[p + 1 - px] - v[p - 1 + px] + v[p - 1 - px]) / (4.0 * hx * hy);
            [
                bulk * lap_x(ux) + mu * lap_y(ux) + (mu + lam) * cross(uy),
                mu * lap_x(uy) + bulk * lap_y(uy) + (mu + lam) * cross(ux),
            ]
        };
        let (src_rho, src_m) = match model.source {
            Some(src) => src.eval(s.t, grid.center_flat(k))?,
            None => (0.0, [0.0; 2]),
        };
        out.rho[p] = rho + dt * (drho[p] + src_rho);
        for a in 0..grid.dim {
            out.mom[a][p] = s.mom[a][p] + dt * (dmom[a][p] + force[a] + visc[a] + src_m[a]);
        }
    }

    let limit = model.pressure.law().ratio_limit().map(|l| l * (1.0 - cfg.barrier_tol));
    for (k, p) in grid.interior().enumerate() {
        let rho = out.rho[p];
        if !rho.is_finite() {
            return Err(Error::NonFinite { field: "rho", cell: k });
        }
        if !out.mom[0][p].is_finite() || !out.mom[1][p].is_finite() {
            return Err(Error::NonFinite { field: "mom", cell: k });
        }
        let ratio = rho / model.barrier.values[p];
        if rho < 0.0 || limit.is_some_and(|l| ratio > l) {
            return Err(Error::BarrierViolation { ratio, cell: k });
        }
        if let Some(l) = limit {
            let before = s.rho[p] / model.barrier.values[p];
            if l - ratio < GAP_SHRINK * (l - before) {
                return Err(Error::BarrierViolation { ratio, cell: k });
            }
        }
    }
    apply_bc(&mut out);
    out.t = s.t + dt;
    Ok(out)
}

/// Receives diagnostics and snapshots while [`advance`] runs.
pub trait DiagnosticsSink {
    fn emit(&mut self, record: &DiagnosticsRecord, state: &FlowState) -> Result<()>;

    fn snapshot(&mut self, _state: &FlowState) -> Result<()> {
        Ok(())
    }

    /// Called after every accepted step.
    fn accepted(&mut self, _before: &FlowState, _after: &FlowState) -> Result<()> {
        Ok(())
    }
}

impl DiagnosticsSink for Vec<DiagnosticsRecord> {
    fn emit(&mut self, record: &DiagnosticsRecord, _state: &FlowState) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl DiagnosticsSink for NullSink {
    fn emit(&mut self, _record: &DiagnosticsRecord, _state: &FlowState) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdvanceStats {
    pub steps: usize,
    pub halvings: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Largest `ρ/ρ*` over every accepted state.
    pub max_ratio: f64,
    pub min_density: f64,
}

impl AdvanceStats {
    fn new(state: &FlowState, barrier: &BarrierField) -> Self {
        Self {
            steps: 0,
            halvings: 0,
            min_dt: f64::INFINITY,
            max_dt: 0.0,
            max_ratio: state.max_ratio(barrier).0,
            min_density: state.density().into_iter().fold(f64::INFINITY, f64::min),
        }
    }

    fn observe(&mut self, state: &FlowState, barrier: &BarrierField, dt: f64) {
        self.steps += 1;
        self.min_dt = self.min_dt.min(dt);
        self.max_dt = self.max_dt.max(dt);
        self.max_ratio = self.max_ratio.max(state.max_ratio(barrier).0);
        self.min_density = self.min_density.min(state.density().into_iter().fold(f64::INFINITY, f64::min));
    }
}

struct Schedule {
    start: f64,
    every: f64,
    k: u64,
}

impl Schedule {
    fn next(&self) -> f64 {
        self.start + self.k as f64 * self.every
    }
}

/// Advances `state` to `t_target` with adaptive steps, halving the step on
/// barrier violations. Emits a diagnostics record at the start, at every
/// multiple of the cadence, and at the end.
pub fn advance(
    state: &FlowState,
    t_target: f64,
    model: &Model,
    cfg: &SolverConfig,
    sink: &mut dyn DiagnosticsSink,
) -> Result<(FlowState, AdvanceStats)> {
    let mut cur = state.clone();
    apply_bc(&mut cur);
    let t0 = cur.t;
    let span = (t_target - t0).max(0.0);
    let mut stats = AdvanceStats::new(&cur, model.barrier);
    let vac = vacuum_threshold(model.barrier);
    let mut dissipated = 0.0;
    sink.emit(&diagnostics::record(&cur, model, cfg.delta_c)?, &cur)?;
    sink.snapshot(&cur)?;
    if span == 0.0 {
        return Ok((cur, stats));
    }
    let tiny = 1e-12 * t_target.abs().max(span);
    let min_dt = 1e-14 * cfg.t_end.max(span);
    let mut diag = Schedule {
        start: t0,
        every: cfg.diagnostics_interval(span),
        k: 1,
    };
    let mut snap = Schedule {
        start: t0,
        every: cfg.snapshot_every.unwrap_or(f64::INFINITY),
        k: 1,
    };

    while cur.t < t_target - tiny {
        let next_event = t_target.min(diag.next()).min(snap.next());
        let remaining = next_event - cur.t;
        let stable = stable_dt(&cur, model, cfg.cfl)?;
        // Split the last stretch before an event evenly instead of leaving a
        // sliver.
        let mut dt = if remaining <= stable {
            remaining
        } else if remaining < 2.0 * stable {
            0.5 * remaining
        } else {
            stable
        };
        if dt < min_dt {
            return Err(Error::DegenerateState { dt });
        }
        let mut halvings = 0;
        let mut next = loop {
            match step(&cur, dt, model, cfg) {
                Ok(s) => break s,
                Err(e @ Error::BarrierViolation { .. }) => {
                    if halvings >= cfg.max_substeps || 0.5 * dt < min_dt {
                        return Err(Error::StepFailure {
                            t: cur.t,
                            halvings,
                            last: Box::new(e),
                        });
                    }
                    halvings += 1;
                    stats.halvings += 1;
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        if (next.t - next_event).abs() <= tiny {
            next.t = next_event;
        }
        dissipated += dt * diagnostics::dissipation_rate(&cur, model.fluid, vac);
        stats.observe(&next, model.barrier, dt);
        sink.accepted(&cur, &next)?;
        cur = next;
        let at_end = cur.t >= t_target - tiny;
        if cur.t >= diag.next() - tiny || at_end {
            while diag.next() <= cur.t + tiny {
                diag.k += 1;
            }
            let mut rec = diagnostics::record(&cur, model, cfg.delta_c)?;
            rec.dissipated = dissipated;
            sink.emit(&rec, &cur)?;
        }
        if cur.t >= snap.next() - tiny || at_end {
            while snap.next() <= cur.t + tiny {
                snap.k += 1;
            }
            sink.snapshot(&cur)?;
        }
    }
    Ok((cur, stats))
}

/// One upwind step of `∂t R + div(R u) + R u·∇log ρ* = 0` with `u` frozen.
///
/// `ratio` and `velocity` are row-major over interior cells; walls carry no
/// flux.
pub fn step_ratio(ratio: &[f64], velocity: &[Vec<f64>; 2], dt: f64, barrier: &BarrierField) -> Result<Vec<f64>> {
    let grid = barrier.grid;
    let n = grid.n_cells();
    let r_pad = grid.scatter(ratio);
    let u_pad = [grid.scatter(&velocity[0]), {
        if grid.dim == 2 {
            grid.scatter(&velocity[1])
        } else {
            vec![0.0; grid.padded_len()]
        }
    }];
    let mut div = vec![0.0; grid.padded_len()];
    for axis in 0..grid.dim {
        let h = grid.dx[axis];
        let ua = &u_pad[axis];
        for_each_face(&grid, axis, |l, r, l_in, r_in| {
            if !(l_in && r_in) {
                return;
            }
            let flux = upwind(0.5 * (ua[l] + ua[r]), r_pad[l], r_pad[r]) / h;
            div[l] += flux;
            div[r] -= flux;
        });
    }
    let mut out = Vec::with_capacity(n);
    for (k, p) in grid.interior().enumerate() {
        let mut geo = 0.0;
        for a in 0..grid.dim {
            geo += u_pad[a][p] * barrier.log_grad[a][p];
        }
        let v = r_pad[p] - dt * (div[p] + r_pad[p] * geo);
        if !v.is_finite() {
            return Err(Error::NonFinite { field: "ratio", cell: k });
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_barrier, BarrierSpec, Grid, InitialData};
    use crate::pressure::PressureLaw;
    use approx::assert_relative_eq;

    const SING: PressureLaw = PressureLaw::Singular {
        eps: 1e-3,
        alpha: 2.0,
        beta: 4.0,
    };

    fn setup(n: usize, spec: BarrierSpec) -> (Grid, BarrierField) {
        let g = Grid::uniform_1d(1.0, n).unwrap();
        let b = build_barrier(&spec, &g).unwrap();
        (g, b)
    }

    fn state(g: &Grid, rho: Vec<f64>, mom: Vec<f64>) -> FlowState {
        let n = rho.len();
        FlowState::from_initial(
            g,
            &InitialData {
                rho0: rho,
                mom0: [mom, vec![0.0; n]],
            },
        )
        .unwrap()
    }

    #[test]
    fn sound_speed_examples() {
        let (g, b) = setup(4, BarrierSpec::Constant { value: 1.0 });
        let pm = PressureModel::new(PressureLaw::Barotropic { a: 1.0, gamma_n: 2.0 }).unwrap();
        let fluid = FluidParams::new(0.1, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        let s = state(&g, vec![0.5; 4], vec![0.0; 4]);
        for c in effective_sound_speed(&s, &m).unwrap() {
            assert_relative_eq!(c * c, 2.0, max_relative = 1e-14);
        }
        let sing = PressureModel::new(SING).unwrap();
        let m = Model::new(&sing, &fluid, &b);
        let vac = state(&g, vec![0.0; 4], vec![0.0; 4]);
        assert!(effective_sound_speed(&vac, &m).unwrap().iter().all(|&c| c == 0.0));
        let over = state(&g, vec![1.0; 4], vec![0.0; 4]);
        assert!(matches!(effective_sound_speed(&over, &m), Err(Error::BarrierViolation { .. })));
    }

    #[test]
    fn sound_speed_diverges_near_barrier() {
        // c² ~ εβ(1-r)^{-(β+1)} as r → 1.
        let (g, b) = setup(1, BarrierSpec::Constant { value: 1.0 });
        let pm = PressureModel::new(SING).unwrap();
        let fluid = FluidParams::new(0.1, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        let c_at = |gap: f64| effective_sound_speed(&state(&g, vec![1.0 - gap], vec![0.0]), &m).unwrap()[0];
        let ratio = c_at(1e-4) / c_at(1e-3);
        assert_relative_eq!(ratio, 10f64.powf(2.5), max_relative = 1e-2);
    }

    #[test]
    fn stable_dt_rest_state_and_refinement() {
        let fluid = FluidParams::new(1e-3, 0.0, 2.0);
        let pm = PressureModel::new(SING).unwrap();
        let dts: Vec<f64> = [100, 200]
            .iter()
            .map(|&n| {
                let (g, b) = setup(n, BarrierSpec::Constant { value: 1.0 });
                let m = Model::new(&pm, &fluid, &b);
                let s = state(&g, vec![0.5; n], vec![0.0; n]);
                let c = effective_sound_speed(&s, &m).unwrap()[0];
                let dt = stable_dt(&s, &m, 0.4).unwrap();
                let conv = 0.4 * g.dx[0] / c;
                let visc = g.dx[0] * g.dx[0] * 0.5 / (2.0 * fluid.bulk());
                assert_relative_eq!(dt, conv.min(visc), max_relative = 1e-14);
                conv
            })
            .collect();
        assert_relative_eq!(dts[1], 0.5 * dts[0], max_relative = 1e-14);
    }

    #[test]
    fn stable_dt_shrinks_near_congestion() {
        let fluid = FluidParams::new(1e-6, 0.0, 2.0);
        let pm = PressureModel::new(SING).unwrap();
        let (g, b) = setup(10, BarrierSpec::Constant { value: 1.0 });
        let m = Model::new(&pm, &fluid, &b);
        let mut last = f64::INFINITY;
        for gap in [1e-1, 1e-2, 1e-3, 1e-4] {
            let mut rho = vec![0.5; 10];
            rho[4] = 1.0 - gap;
            let dt = stable_dt(&state(&g, rho, vec![0.0; 10]), &m, 0.4).unwrap();
            assert!(dt < last);
            last = dt;
        }
    }

    #[test]
    fn uniform_rest_state_is_fixed_point() {
        let (g, b) = setup(32, BarrierSpec::Constant { value: 1.0 });
        let pm = PressureModel::new(SING).unwrap();
        let fluid = FluidParams::new(0.01, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        let s = state(&g, vec![0.6; 32], vec![0.0; 32]);
        for form in [ForceForm::Potential, ForceForm::Direct] {
            let mut cfg = SolverConfig::new(1.0);
            cfg.force_form = form;
            let next = step(&s, 1e-3, &m, &cfg).unwrap();
            assert_eq!(next.rho, s.rho);
            assert_eq!(next.mom, s.mom);
        }
    }

    #[test]
    fn two_cell_imbalance_pushes_downhill() {
        let (g, b) = setup(2, BarrierSpec::Constant { value: 1.0 });
        let pm = PressureModel::new(SING).unwrap();
        let fluid = FluidParams::new(0.01, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        let s = state(&g, vec![0.8, 0.4], vec![0.0, 0.0]);
        let next = step(&s, 1e-4, &m, &SolverConfig::new(1.0)).unwrap();
        let phi = |rho: f64| eval_internal(&fluid, rho).1 + pm.q(rho).unwrap();
        let grad = phi(0.4) - phi(0.8);
        assert!(grad < 0.0);
        let (m0, m1) = (next.mom[0][1], next.mom[0][2]);
        assert!(m0 > 0.0 && m1 > 0.0, "momentum {m0} {m1}");
        // Each cell sees half the face gradient: dm = -dt ρ (Δφ/2h).
        assert_relative_eq!(m0, -1e-4 * 0.8 * 0.5 * grad / g.dx[0], max_relative = 1e-12);
        assert_relative_eq!(m1, -1e-4 * 0.4 * 0.5 * grad / g.dx[0], max_relative = 1e-12);
    }

    #[test]
    fn step_conserves_mass() {
        let n = 64;
        let (g, b) = setup(
            n,
            BarrierSpec::TanhStep {
                left: 1.0,
                right: 0.6,
                center: 0.5,
                width: 0.05,
            },
        );
        let pm = PressureModel::new(SING).unwrap();
        let fluid = FluidParams::new(0.01, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        let rho: Vec<f64> = (0..n).map(|k| 0.3 + 0.2 * (k as f64 * 0.3).sin().abs()).collect();
        let mom: Vec<f64> = (0..n).map(|k| 0.1 * (k as f64 * 0.7).cos()).collect();
        let s = state(&g, rho, mom);
        let dt = stable_dt(&s, &m, 0.4).unwrap();
        let next = step(&s, dt, &m, &SolverConfig::new(1.0)).unwrap();
        assert_relative_eq!(next.total_mass(), s.total_mass(), max_relative = 1e-14);
    }

    #[test]
    fn step_detects_barrier_crossing() {
        let (g, b) = setup(2, BarrierSpec::Constant { value: 1.0 });
        let pm = PressureModel::new(SING).unwrap();
        let fluid = FluidParams::new(0.01, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        // Strong inflow into the right cell with an oversized step.
        let s = state(&g, vec![0.9, 0.9], vec![5.0, 0.0]);
        assert!(matches!(step(&s, 0.05, &m, &SolverConfig::new(1.0)), Err(Error::BarrierViolation { .. })));
    }

    #[test]
    fn advance_zero_span_returns_initial() {
        let (g, b) = setup(8, BarrierSpec::Constant { value: 1.0 });
        let pm = PressureModel::new(SING).unwrap();
        let fluid = FluidParams::new(0.01, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        let s = state(&g, vec![0.5; 8], vec![0.1; 8]);
        let mut recs = Vec::new();
        let (out, stats) = advance(&s, 0.0, &m, &SolverConfig::new(0.0), &mut recs).unwrap();
        assert_eq!(out, s);
        assert_eq!(stats.steps, 0);
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn advance_hits_cadence_exactly() {
        let (g, b) = setup(20, BarrierSpec::Constant { value: 1.0 });
        let pm = PressureModel::new(SING).unwrap();
        let fluid = FluidParams::new(0.01, 0.0, 2.0);
        let m = Model::new(&pm, &fluid, &b);
        let s = state(&g, vec![0.5; 20], vec![0.1; 20]);
        let mut cfg = SolverConfig::new(0.1);
        cfg.diagnostics_every = Some(0.025);
        let mut recs = Vec::new();
        let (out, _) = advance(&s, 0.1, &m, &cfg, &mut recs).unwrap();
        assert_eq!(out.t, 0.1);
        let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
        assert_eq!(times.len(), 5);
        for (k, t) in times.iter().enumerate() {
            assert_relative_eq!(*t, 0.025 * k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn ratio_step_without_source_is_plain_transport() {
        let (_g, b) = setup(10, BarrierSpec::Constant { value: 1.0 });
        let r: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
        let u = [vec![0.2; 10], vec![0.0; 10]];
        let next = step_ratio(&r, &u, 0.01, &b).unwrap();
        let h = 0.1;
        // interior cell 5: upwind from the left
        assert_relative_eq!(next[5], r[5] - 0.01 * 0.2 * (r[5] - r[4]) / h, max_relative = 1e-14);
        let total: f64 = next.iter().sum();
        assert_relative_eq!(total, r.iter().sum::<f64>(), max_relative = 1e-14);
    }

    #[test]
    fn ratio_step_constant_at_rest() {
        let (_g, b) = setup(
            10,
            BarrierSpec::TanhStep {
                left: 1.0,
                right: 0.6,
                center: 0.5,
                width: 0.1,
            },
        );
        let r = vec![0.4; 10];
        let u = [vec![0.0; 10], vec![0.0; 10]];
        assert_eq!(step_ratio(&r, &u, 0.1, &b).unwrap(), r);
    }
}
