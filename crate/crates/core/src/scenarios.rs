//! Built-in experiments and the manufactured-solution oracle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{BarrierField, BarrierSpec, Grid, GridSpec, InitialData};
use crate::error::{Error, Result};
use crate::pressure::{FluidParams, PressureLaw};
use crate::solver::SourceTerms;

pub const SCENARIOS: [&str; 5] = [
    "traffic_1d",
    "lane_narrowing_1d",
    "pipe_1d",
    "crowd_blob_2d",
    "manufactured_1d",
];

/// Smooth trigonometric fields on `[0, 1]`:
/// `ρ̂ = mean + amp·sin(2πx)·cos t`, `û = u_amp·sin(2πx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigManufactured {
    pub mean: f64,
    pub amp: f64,
    pub u_amp: f64,
}

/// Manufactured fields and the derivatives the sources need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub rho: f64,
    pub rho_t: f64,
    pub rho_x: f64,
    pub u: f64,
    pub u_t: f64,
    pub u_x: f64,
    pub u_xx: f64,
}

impl TrigManufactured {
    pub fn jet(&self, t: f64, x: f64) -> FieldJet {
        let k = 2.0 * PI;
        let (s, c) = (k * x).sin_cos();
        FieldJet {
            rho: self.mean + self.amp * s * t.cos(),
            rho_t: -self.amp * s * t.sin(),
            rho_x: self.amp * k * c * t.cos(),
            u: self.u_amp * s,
            u_t: 0.0,
            u_x: self.u_amp * k * c,
            u_xx: -self.u_amp * k * k * s,
        }
    }

    pub fn density(&self, t: f64, x: f64) -> f64 {
        self.jet(t, x).rho
    }

    pub fn momentum(&self, t: f64, x: f64) -> f64 {
        let j = self.jet(t, x);
        j.rho * j.u
    }
}

/// Mass and momentum sources that make `(ρ̂, û)` an exact solution of the
/// one-dimensional system.
pub fn manufactured_sources(
    jet: &FieldJet,
    law: &PressureLaw,
    fluid: &FluidParams,
    barrier: &BarrierSpec,
    x: f64,
) -> Result<(f64, f64)> {
    let (star, grad) = barrier.eval([x, 0.0]);
    let r = jet.rho / star;
    if r > 0.8 || law.ratio_limit().is_some_and(|l| r >= l) {
        return Err(Error::BarrierViolation { ratio: r, cell: 0 });
    }
    let FieldJet {
        rho,
        rho_t,
        rho_x,
        u,
        u_t,
        u_x,
        u_xx,
    } = *jet;
    let s_rho = rho_t + rho_x * u + rho * u_x;
    let congestion = law.dpi_unchecked(r) * (rho_x - r * grad[0]);
    let s_m = rho_t * u + rho * u_t + rho_x * u * u + 2.0 * rho * u * u_x + fluid.dp(rho) * rho_x + congestion
        - fluid.bulk() * u_xx;
    Ok((s_rho, s_m))
}

/// Forcing for a manufactured run.
#[derive(Debug, Clone)]
pub struct ManufacturedSource {
    pub fields: TrigManufactured,
    pub law: PressureLaw,
    pub fluid: FluidParams,
    pub barrier: BarrierSpec,
}

impl SourceTerms for ManufacturedSource {
    fn eval(&self, t: f64, x: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let jet = self.fields.jet(t, x[0]);
        let (s_rho, s_m) = manufactured_sources(&jet, &self.law, &self.fluid, &self.barrier, x[0])?;
        Ok((s_rho, [s_m, 0.0]))
    }
}

/// Initial density and velocity generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// `ρ = base + amp·exp(-|x-center|²/width²)` with constant velocity.
    Bump {
        base: f64,
        amp: f64,
        center: Vec<f64>,
        width: f64,
        velocity: Vec<f64>,
    },
    Uniform {
        density: f64,
        velocity: Vec<f64>,
    },
    /// `ρ = fraction·ρ*(x)` with constant velocity.
    BarrierFraction {
        fraction: f64,
        velocity: Vec<f64>,
    },
    /// Manufactured fields at `t = 0`; also switches on their sources.
    Manufactured(TrigManufactured),
}

impl InitialProfile {
    fn velocity(&self) -> &[f64] {
        match self {
            InitialProfile::Bump { velocity, .. }
            | InitialProfile::Uniform { velocity, .. }
            | InitialProfile::BarrierFraction { velocity, .. } => velocity,
            InitialProfile::Manufactured(_) => &[],
        }
    }

    /// Samples the profile at cell centres.
    pub fn generate(&self, grid: &Grid, barrier: &BarrierField) -> Result<InitialData> {
        let v = self.velocity();
        if !matches!(self, InitialProfile::Manufactured(_)) && v.len() != grid.dim {
            return Err(Error::param(
                "initial.velocity",
                format!("expected {} components, got {}", grid.dim, v.len()),
            ));
        }
        if let InitialProfile::Bump { center, .. } = self {
            if center.len() != grid.dim {
                return Err(Error::param(
                    "initial.center",
                    format!("expected {} components, got {}", grid.dim, center.len()),
                ));
            }
        }
        if matches!(self, InitialProfile::Manufactured(_)) && grid.dim != 1 {
            return Err(Error::param("initial.kind", "manufactured fields are one-dimensional"));
        }
        let n = grid.n_cells();
        let mut rho0 = Vec::with_capacity(n);
        let mut mom0 = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for k in 0..n {
            let x = grid.center_flat(k);
            let (rho, u) = match self {
                InitialProfile::Bump {
                    base,
                    amp,
                    center,
                    width,
                    ..
                } => {
                    let d2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c).powi(2)).sum();
                    (base + amp * (-d2 / (width * width)).exp(), [v[0], v.get(1).copied().unwrap_or(0.0)])
                }
                InitialProfile::Uniform { density, .. } => (*density, [v[0], v.get(1).copied().unwrap_or(0.0)]),
                InitialProfile::BarrierFraction { fraction, .. } => (
                    fraction * barrier.values[grid.idx_flat(k)],
                    [v[0], v.get(1).copied().unwrap_or(0.0)],
                ),
                InitialProfile::Manufactured(m) => {
                    let j = m.jet(0.0, x[0]);
                    (j.rho, [j.u, 0.0])
                }
            };
            rho0.push(rho);
            mom0[0].push(rho * u[0]);
            mom0[1].push(rho * u[1]);
        }
        Ok(InitialData { rho0, mom0 })
    }
}

/// A fully specified experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub grid: GridSpec,
    pub barrier: BarrierSpec,
    pub initial: InitialProfile,
    pub fluid: FluidParams,
    pub law: PressureLaw,
    pub t_end: f64,
}

fn grid_1d(n: usize) -> GridSpec {
    GridSpec {
        dim: 1,
        extents: vec![1.0],
        cells: vec![n],
    }
}

fn traffic_fluid() -> FluidParams {
    FluidParams {
        mu: 0.01,
        lambda: 0.0,
        gamma: 1.2,
        p_scale: 0.02,
    }
}

fn traffic_law() -> PressureLaw {
    PressureLaw::Singular {
        eps: 1e-3,
        alpha: 2.0,
        beta: 1.0,
    }
}

fn barrier_law() -> PressureLaw {
    PressureLaw::Singular {
        eps: 1e-3,
        alpha: 2.0,
        beta: 2.0,
    }
}

pub fn make_scenario(name: &str) -> Result<Scenario> {
    let s = match name {
        "traffic_1d" => Scenario {
            name: "traffic_1d",
            grid: grid_1d(200),
            barrier: BarrierSpec::Constant { value: 1.0 },
            initial: InitialProfile::Bump {
                base: 0.3,
                amp: 0.4,
                center: vec![0.3],
                width: 0.1,
                velocity: vec![0.5],
            },
            fluid: traffic_fluid(),
            law: traffic_law(),
            t_end: 0.5,
        },
        "lane_narrowing_1d" => Scenario {
            name: "lane_narrowing_1d",
            grid: grid_1d(200),
            barrier: BarrierSpec::TanhStep {
                left: 1.0,
                right: 0.6,
                center: 0.5,
                width: 0.05,
            },
            initial: InitialProfile::Uniform {
                density: 0.5,
                velocity: vec![0.3],
            },
            fluid: traffic_fluid(),
            law: barrier_law(),
            t_end: 0.5,
        },
        "pipe_1d" => Scenario {
            name: "pipe_1d",
            grid: grid_1d(200),
            barrier: BarrierSpec::PipeProfile {
                base: 1.0,
                depth: 0.15,
                center: 0.5,
                width: 0.2,
            },
            initial: InitialProfile::BarrierFraction {
                fraction: 0.8,
                velocity: vec![0.3],
            },
            fluid: traffic_fluid(),
            law: barrier_law(),
            t_end: 0.5,
        },
        "crowd_blob_2d" => Scenario {
            name: "crowd_blob_2d",
            grid: GridSpec {
                dim: 2,
                extents: vec![1.0, 1.0],
                cells: vec![96, 96],
            },
            barrier: BarrierSpec::GaussianBump {
                base: 1.0,
                amp: -0.6,
                center: vec![0.6, 0.5],
                width: 0.1,
            },
            initial: InitialProfile::Bump {
                base: 0.2,
                amp: 0.5,
                center: vec![0.25, 0.5],
                width: 0.1,
                velocity: vec![0.5, 0.0],
            },
            fluid: traffic_fluid(),
            law: barrier_law(),
            t_end: 0.3,
        },
        "manufactured_1d" => Scenario {
            name: "manufactured_1d",
            grid: grid_1d(200),
            barrier: BarrierSpec::TanhStep {
                left: 1.0,
                right: 0.9,
                center: 0.5,
                width: 0.2,
            },
            initial: InitialProfile::Manufactured(TrigManufactured {
                mean: 0.5,
                amp: 0.2,
                u_amp: 0.1,
            }),
            fluid: FluidParams {
                mu: 0.05,
                lambda: 0.0,
                gamma: 2.0,
                p_scale: 1.0,
            },
            law: PressureLaw::Singular {
                eps: 1e-2,
                alpha: 2.0,
                beta: 2.0,
            },
            t_end: 0.2,
        },
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_barrier, validate_initial};
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;

    #[test]
    fn every_scenario_passes_validation() {
        for name in SCENARIOS {
            let s = make_scenario(name).unwrap();
            let g = s.grid.build().unwrap();
            let b = build_barrier(&s.barrier, &g).unwrap();
            let data = s.initial.generate(&g, &b).unwrap();
            let report = validate_initial(&data, &b);
            assert!(report.valid, "{name}: {:?}", report.violations);
            s.law.validate().unwrap();
            s.fluid.validate().unwrap();
        }
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(make_scenario("nope"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn traffic_initial_mass() {
        let s = make_scenario("traffic_1d").unwrap();
        let g = s.grid.build().unwrap();
        let b = build_barrier(&s.barrier, &g).unwrap();
        let data = s.initial.generate(&g, &b).unwrap();
        let mean = data.rho0.iter().sum::<f64>() / data.rho0.len() as f64;
        let exact = integrate(|x| 0.3 + 0.4 * (-(x - 0.3f64).powi(2) / 0.01).exp(), 0.0, 1.0, 1e-13, 0.0).unwrap();
        assert_relative_eq!(mean, exact, max_relative = 1e-6);
        assert!(mean < 1.0);
    }

    #[test]
    fn lane_narrowing_mean_below_infimum() {
        let s = make_scenario("lane_narrowing_1d").unwrap();
        let g = s.grid.build().unwrap();
        let b = build_barrier(&s.barrier, &g).unwrap();
        let r = validate_initial(&s.initial.generate(&g, &b).unwrap(), &b);
        assert_relative_eq!(r.mean_density, 0.5, max_relative = 1e-14);
        assert!(r.inf_barrier > 0.6 - 1e-6 && r.inf_barrier < 0.6 + 1e-3);
    }

    fn fd_sources(m: &TrigManufactured, law: &PressureLaw, fluid: &FluidParams, barrier: &BarrierSpec, t: f64, x: f64) -> (f64, f64) {
        // Independent oracle: residuals of the conservative equations by
        // central differences of the analytic fields.
        let h = 1e-4;
        let rho = |t: f64, x: f64| m.density(t, x);
        let mom = |t: f64, x: f64| m.momentum(t, x);
        let u = |x: f64| m.jet(0.0, x).u;
        let pressure = |x: f64| {
            let r = rho(t, x);
            fluid.p_scale * r.powf(fluid.gamma)
        };
        let pi = |x: f64| law.pi_unchecked(rho(t, x) / barrier.value([x, 0.0]));
        let dt = |f: &dyn Fn(f64) -> f64| (f(t + h) - f(t - h)) / (2.0 * h);
        let dx = |f: &dyn Fn(f64) -> f64| (f(x + h) - f(x - h)) / (2.0 * h);
        let s_rho = dt(&|s| rho(s, x)) + dx(&|y| mom(t, y));
        let conv = dx(&|y| mom(t, y) * u(y));
        let visc = fluid.bulk() * (u(x + h) - 2.0 * u(x) + u(x - h)) / (h * h);
        let s_m = dt(&|s| mom(s, x)) + conv + dx(&pressure) + barrier.value([x, 0.0]) * dx(&pi) - visc;
        (s_rho, s_m)
    }

    #[test]
    fn sources_match_finite_differences() {
        let s = make_scenario("manufactured_1d").unwrap();
        let InitialProfile::Manufactured(m) = s.initial else {
            panic!("manufactured profile expected")
        };
        for barrier in [s.barrier.clone(), BarrierSpec::Constant { value: 1.0 }] {
            let (t, x) = (0.3, 0.25);
            let (a_rho, a_m) = manufactured_sources(&m.jet(t, x), &s.law, &s.fluid, &barrier, x).unwrap();
            let (f_rho, f_m) = fd_sources(&m, &s.law, &s.fluid, &barrier, t, x);
            assert!((a_rho - f_rho).abs() <= 1e-6 * a_rho.abs().max(1.0), "{a_rho} vs {f_rho}");
            assert!((a_m - f_m).abs() <= 1e-6 * a_m.abs().max(1.0), "{a_m} vs {f_m}");
        }
    }

    #[test]
    fn constant_fields_have_zero_sources() {
        let m = TrigManufactured {
            mean: 0.4,
            amp: 0.0,
            u_amp: 0.0,
        };
        let law = PressureLaw::Singular {
            eps: 1e-2,
            alpha: 2.0,
            beta: 2.0,
        };
        let b = BarrierSpec::Constant { value: 1.0 };
        let (sr, sm) = manufactured_sources(&m.jet(0.7, 0.3), &law, &FluidParams::new(0.1, 0.0, 2.0), &b, 0.3).unwrap();
        assert_eq!((sr, sm), (0.0, 0.0));
    }

    #[test]
    fn dropping_singular_term_removes_only_its_contribution() {
        let s = make_scenario("manufactured_1d").unwrap();
        let InitialProfile::Manufactured(m) = s.initial else {
            panic!("manufactured profile expected")
        };
        let (t, x) = (0.3, 0.25);
        let jet = m.jet(t, x);
        let weak = PressureLaw::Singular {
            eps: 1e-300,
            alpha: 2.0,
            beta: 2.0,
        };
        let (r_full, m_full) = manufactured_sources(&jet, &s.law, &s.fluid, &s.barrier, x).unwrap();
        let (r_none, m_none) = manufactured_sources(&jet, &weak, &s.fluid, &s.barrier, x).unwrap();
        assert_eq!(r_full, r_none);
        let (star, grad) = s.barrier.eval([x, 0.0]);
        let r = jet.rho / star;
        let term = s.law.dpi_unchecked(r) * (jet.rho_x - r * grad[0]);
        assert_relative_eq!(m_full - m_none, term, max_relative = 1e-12);
    }

    #[test]
    fn manufactured_ratio_bound_enforced() {
        let m = TrigManufactured {
            mean: 0.85,
            amp: 0.0,
            u_amp: 0.0,
        };
        let law = PressureLaw::Singular {
            eps: 1e-2,
            alpha: 2.0,
            beta: 2.0,
        };
        let r = manufactured_sources(&m.jet(0.0, 0.5), &law, &FluidParams::new(0.1, 0.0, 2.0), &BarrierSpec::Constant { value: 1.0 }, 0.5);
        assert!(matches!(r, Err(Error::BarrierViolation { .. })));
    }
}
