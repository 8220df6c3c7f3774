//! Grid geometry, the barrier field `ρ*(x)`, flow states and wall conditions.
//!
//! Cell-centred arrays carry one ghost layer on every active axis. The padded
//! layout is row-major with `x` fastest; in one dimension there are no ghost
//! rows in `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform Cartesian grid on `[0, Lx] (× [0, Ly])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub extents: [f64; 2],
    pub cells: [usize; 2],
    pub dx: [f64; 2],
}

/// Serializable grid description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.extents, &self.cells)
    }
}

impl Grid {
    pub fn new(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("grid.dim", format!("must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || cells.len() != dim {
            return Err(Error::param(
                "grid",
                format!("expected {dim} extents and cell counts, got {} and {}", extents.len(), cells.len()),
            ));
        }
        let mut e = [1.0; 2];
        let mut n = [1usize; 2];
        for a in 0..dim {
            if !(extents[a].is_finite() && extents[a] > 0.0) {
                return Err(Error::param("grid.extents", format!("must be > 0, got {}", extents[a])));
            }
            if cells[a] == 0 {
                return Err(Error::param("grid.cells", "must be > 0"));
            }
            e[a] = extents[a];
            n[a] = cells[a];
        }
        Ok(Self {
            dim,
            extents: e,
            cells: n,
            dx: [e[0] / n[0] as f64, e[1] / n[1] as f64],
        })
    }

    pub fn uniform_1d(length: f64, n: usize) -> Result<Self> {
        Self::new(1, &[length], &[n])
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            extents: self.extents[..self.dim].to_vec(),
            cells: self.cells[..self.dim].to_vec(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx[0] * self.dx[1]
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1]
    }

    /// Padded row length.
    pub fn px(&self) -> usize {
        self.cells[0] + 2
    }

    /// Padded number of rows.
    pub fn py(&self) -> usize {
        if self.dim == 2 {
            self.cells[1] + 2
        } else {
            1
        }
    }

    pub fn padded_len(&self) -> usize {
        self.px() * self.py()
    }

    /// Stride between neighbours along `axis` in the padded layout.
    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.px()
        }
    }

    /// Padded index of interior cell `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        let oy = usize::from(self.dim == 2);
        (j + oy) * self.px() + i + 1
    }

    /// Padded index of the `k`-th interior cell in row-major order.
    #[inline]
    pub fn idx_flat(&self, k: usize) -> usize {
        self.idx(k % self.cells[0], k / self.cells[0])
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cells()).map(move |k| self.idx_flat(k))
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.dx[0], (j as f64 + 0.5) * self.dx[1]]
    }

    pub fn center_flat(&self, k: usize) -> [f64; 2] {
        self.center(k % self.cells[0], k / self.cells[0])
    }

    /// Copies the interior of a padded array into row-major order.
    pub fn gather(&self, padded: &[f64]) -> Vec<f64> {
        self.interior().map(|p| padded[p]).collect()
    }

    /// Expands a row-major interior array into a zeroed padded array.
    pub fn scatter(&self, interior: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.padded_len()];
        for (k, v) in interior.iter().enumerate() {
            out[self.idx_flat(k)] = *v;
        }
        out
    }

    /// Fills ghost cells of `a` by reflection, multiplied by `sign`.
    pub fn fill_ghosts(&self, a: &mut [f64], sign: f64) {
        let (nx, px) = (self.cells[0], self.px());
        for row in 0..self.py() {
            let base = row * px;
            a[base] = sign * a[base + 1];
            a[base + nx + 1] = sign * a[base + nx];
        }
        if self.dim == 2 {
            let ny = self.cells[1];
            for col in 0..px {
                a[col] = sign * a[px + col];
                a[(ny + 1) * px + col] = sign * a[ny * px + col];
            }
        }
    }
}

/// Analytic description of the maximal density `ρ*(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierSpec {
    Constant {
        value: f64,
    },
    /// `left + (right-left)·½(1 + tanh((x-center)/width))`, varying in `x`.
    TanhStep {
        left: f64,
        right: f64,
        center: f64,
        width: f64,
    },
    /// `base + amp·exp(-|x-center|²/width²)`; `center` has one entry per axis.
    GaussianBump {
        base: f64,
        amp: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Pipe height `base - depth·½(1 + cos(π(x-center)/width))` for
    /// `|x-center| < width`, `base` elsewhere.
    PipeProfile {
        base: f64,
        depth: f64,
        center: f64,
        width: f64,
    },
}

impl BarrierSpec {
    /// Value and gradient at a point.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        match self {
            BarrierSpec::Constant { value } => (*value, [0.0, 0.0]),
            BarrierSpec::TanhStep {
                left,
                right,
                center,
                width,
            } => {
                let z = (x[0] - center) / width;
                let th = z.tanh();
                let v = left + (right - left) * 0.5 * (1.0 + th);
                let g = (right - left) * 0.5 * (1.0 - th * th) / width;
                (v, [g, 0.0])
            }
            BarrierSpec::GaussianBump {
                base,
                amp,
                center,
                width,
            } => {
                let cx = center.first().copied().unwrap_or(0.0);
                let cy = center.get(1).copied();
                let dx = x[0] - cx;
                let dy = cy.map_or(0.0, |c| x[1] - c);
                let w2 = width * width;
                let e = (-(dx * dx + dy * dy) / w2).exp();
                let v = base + amp * e;
                let gx = -2.0 * amp * dx / w2 * e;
                let gy = -2.0 * amp * dy / w2 * e;
                (v, [gx, gy])
            }
            BarrierSpec::PipeProfile {
                base,
                depth,
                center,
                width,
            } => {
                let d = x[0] - center;
                if d.abs() >= *width {
                    (*base, [0.0, 0.0])
                } else {
                    let arg = std::f64::consts::PI * d / width;
                    let v = base - depth * 0.5 * (1.0 + arg.cos());
                    let g = depth * 0.5 * arg.sin() * std::f64::consts::PI / width;
                    (v, [g, 0.0])
                }
            }
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.eval(x).0
    }
}

/// `ρ*` sampled on a grid.
#[derive(Debug, Clone)]
pub struct BarrierField {
    pub grid: Grid,
    /// Cell-centre values, padded with mirrored ghosts.
    pub values: Vec<f64>,
    /// Face values per axis; `faces[0]` has `(nx+1)·ny` entries, `faces[1]`
    /// has `nx·(ny+1)`, both row-major.
    pub face_values: [Vec<f64>; 2],
    /// `∇ρ*` at cell centres (padded layout, ghosts zero).
    pub grad: [Vec<f64>; 2],
    /// `∇ log ρ*` at cell centres (padded layout, ghosts zero).
    pub log_grad: [Vec<f64>; 2],
    pub inf: f64,
    pub sup: f64,
}

impl BarrierField {
    pub fn value_at(&self, p: usize) -> f64 {
        self.values[p]
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.gather(&self.values)
    }
}

/// Samples a barrier specification at cell centres and faces.
pub fn build_barrier(spec: &BarrierSpec, grid: &Grid) -> Result<BarrierField> {
    match spec {
        BarrierSpec::TanhStep { width, .. } | BarrierSpec::GaussianBump { width, .. } | BarrierSpec::PipeProfile { width, .. }
            if !(*width > 0.0) =>
        {
            return Err(Error::Spec(format!("width must be > 0, got {width}")));
        }
        BarrierSpec::GaussianBump { center, .. } if center.len() != grid.dim => {
            return Err(Error::Spec(format!(
                "gaussian_bump center has {} entries for a {}-D grid",
                center.len(),
                grid.dim
            )));
        }
        _ => {}
    }
    let n = grid.padded_len();
    let mut values = vec![0.0; n];
    let mut grad = [vec![0.0; n], vec![0.0; n]];
    let mut log_grad = [vec![0.0; n], vec![0.0; n]];
    let (mut inf, mut sup) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..grid.n_cells() {
        let x = grid.center_flat(k);
        let (v, g) = spec.eval(x);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Spec(format!("barrier value {v} <= 0 at x = {:?}", &x[..grid.dim])));
        }
        let p = grid.idx_flat(k);
        values[p] = v;
        for a in 0..grid.dim {
            grad[a][p] = g[a];
            log_grad[a][p] = g[a] / v;
        }
        inf = inf.min(v);
        sup = sup.max(v);
    }
    grid.fill_ghosts(&mut values, 1.0);

    let [nx, ny] = grid.cells;
    let mut fx = Vec::with_capacity((nx + 1) * ny);
    for j in 0..ny {
        for i in 0..=nx {
            fx.push([i as f64 * grid.dx[0], (j as f64 + 0.5) * grid.dx[1]]);
        }
    }
    let mut fy = Vec::new();
    if grid.dim == 2 {
        for j in 0..=ny {
            for i in 0..nx {
                fy.push([(i as f64 + 0.5) * grid.dx[0], j as f64 * grid.dx[1]]);
            }
        }
    }
    let sample = |pts: Vec<[f64; 2]>| -> Result<Vec<f64>> {
        pts.into_iter()
            .map(|x| {
                let v = spec.value(x);
                if v > 0.0 && v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Spec(format!("barrier face value {v} <= 0 at x = {x:?}")))
                }
            })
            .collect()
    };
    Ok(BarrierField {
        grid: *grid,
        values,
        face_values: [sample(fx)?, sample(fy)?],
        grad,
        log_grad,
        inf,
        sup,
    })
}

/// Conservative variables at one instant. Arrays use the padded layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub grid: Grid,
    pub t: f64,
    pub rho: Vec<f64>,
    /// Momentum components; the `y` component stays zero in one dimension.
    pub mom: [Vec<f64>; 2],
}

impl FlowState {
    pub fn from_initial(grid: &Grid, data: &InitialData) -> Result<Self> {
        let n = grid.n_cells();
        if data.rho0.len() != n || data.mom0.iter().any(|m| m.len() != n) {
            return Err(Error::param("initial", format!("expected {n} cells per field")));
        }
        let mut s = Self {
            grid: *grid,
            t: 0.0,
            rho: grid.scatter(&data.rho0),
            mom: [grid.scatter(&data.mom0[0]), grid.scatter(&data.mom0[1])],
        };
        apply_bc(&mut s);
        Ok(s)
    }

    /// Interior density in row-major order.
    pub fn density(&self) -> Vec<f64> {
        self.grid.gather(&self.rho)
    }

    pub fn momentum(&self, axis: usize) -> Vec<f64> {
        self.grid.gather(&self.mom[axis])
    }

    /// Interior velocity component, zero in vacuum cells.
    pub fn velocity(&self, axis: usize, vacuum: f64) -> Vec<f64> {
        self.grid
            .interior()
            .map(|p| if self.rho[p] > vacuum { self.mom[axis][p] / self.rho[p] } else { 0.0 })
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.interior().map(|p| self.rho[p]).sum::<f64>() * self.grid.cell_volume()
    }

    /// Largest `ρ/ρ*` over interior cells, with its row-major cell index.
    pub fn max_ratio(&self, barrier: &BarrierField) -> (f64, usize) {
        self.grid
            .interior()
            .enumerate()
            .map(|(k, p)| (self.rho[p] / barrier.values[p], k))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

/// Density threshold below which a cell is treated as vacuum.
pub fn vacuum_threshold(barrier: &BarrierField) -> f64 {
    1e-12 * barrier.sup
}

/// Initial density and momentum, row-major over interior cells.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub rho0: Vec<f64>,
    pub mom0: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NegativeDensity { cell: usize, rho: f64 },
    AboveBarrier { cell: usize, ratio: f64 },
    MomentumInVacuum { cell: usize },
    NonFinite { cell: usize },
    MeanAboveInfimum { mean: f64, inf: f64 },
    ShapeMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub mean_density: f64,
    pub inf_barrier: f64,
    pub violations: Vec<Violation>,
}

/// Checks `0 ≤ ρ₀ < ρ*`, zero momentum in vacuum, and `mean ρ₀ < inf ρ*`.
pub fn validate_initial(data: &InitialData, barrier: &BarrierField) -> ValidationReport {
    let grid = &barrier.grid;
    let n = grid.n_cells();
    let mut violations = Vec::new();
    let found = data.rho0.len().max(data.mom0[0].len()).max(data.mom0[1].len());
    if data.rho0.len() != n || data.mom0.iter().any(|m| m.len() != n) {
        violations.push(Violation::ShapeMismatch { expected: n, found });
        return ValidationReport {
            valid: false,
            mean_density: f64::NAN,
            inf_barrier: barrier.inf,
            violations,
        };
    }
    let mut sum = 0.0;
    for k in 0..n {
        let rho = data.rho0[k];
        let (mx, my) = (data.mom0[0][k], data.mom0[1][k]);
        if !rho.is_finite() || !mx.is_finite() || !my.is_finite() {
            violations.push(Violation::NonFinite { cell: k });
            continue;
        }
        sum += rho;
        let star = barrier.values[grid.idx_flat(k)];
        if rho < 0.0 {
            violations.push(Violation::NegativeDensity { cell: k, rho });
        } else if rho >= star {
            violations.push(Violation::AboveBarrier { cell: k, ratio: rho / star });
        }
        if rho == 0.0 && (mx != 0.0 || my != 0.0) {
            violations.push(Violation::MomentumInVacuum { cell: k });
        }
    }
    let mean = sum / n as f64;
    if !(mean < barrier.inf) {
        violations.push(Violation::MeanAboveInfimum {
            mean,
            inf: barrier.inf,
        });
    }
    ValidationReport {
        valid: violations.is_empty(),
        mean_density: mean,
        inf_barrier: barrier.inf,
        violations,
    }
}

/// Enforces no-slip walls: ghost momentum is the negated mirror image, so
/// every wall-face average of momentum vanishes; ghost density is mirrored
/// so no mass crosses a wall.
pub fn apply_bc(state: &mut FlowState) {
    let grid = state.grid;
    grid.fill_ghosts(&mut state.rho, 1.0);
    for m in state.mom.iter_mut() {
        grid.fill_ghosts(m, -1.0);
    }
    if grid.dim == 1 {
        state.mom[1].iter_mut().for_each(|v| *v = 0.0);
    }
}

pub fn apply_velocity_bc(state: &FlowState) -> FlowState {
    let mut out = state.clone();
    apply_bc(&mut out);
    out
}
