//! Run configuration: TOML parsing with scenario defaults, overrides and
//! line-numbered diagnostics.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::domain::{build_barrier, validate_initial, BarrierSpec, GridSpec, Violation};
use crate::error::{ConfigIssue, Error, Result};
use crate::pressure::{FluidParams, PressureLaw};
use crate::scenarios::{make_scenario, InitialProfile, Scenario};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Parameter sequence for a sweep: either `eps` values or `(kappa, delta)`
/// pairs for the truncated law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_delta: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMember {
    Eps(f64),
    KappaDelta(f64, f64),
}

impl SweepMember {
    /// The value rows are ordered by (`eps` or `delta`).
    pub fn key(&self) -> f64 {
        match *self {
            SweepMember::Eps(e) => e,
            SweepMember::KappaDelta(_, d) => d,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SweepMember::Eps(e) => format!("eps_{e:e}"),
            SweepMember::KappaDelta(k, d) => format!("kappa_{k:e}_delta_{d:e}"),
        }
    }
}

impl SweepPlan {
    pub fn members(&self) -> Vec<SweepMember> {
        let mut out: Vec<SweepMember> = match (&self.eps, &self.kappa_delta) {
            (Some(e), _) => e.iter().map(|&v| SweepMember::Eps(v)).collect(),
            (None, Some(kd)) => kd.iter().map(|&[k, d]| SweepMember::KappaDelta(k, d)).collect(),
            (None, None) => Vec::new(),
        };
        out.sort_by(|a, b| b.key().total_cmp(&a.key()));
        out
    }
}

/// Fully resolved configuration of a run or sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Reserved; the solver is deterministic.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub barrier: BarrierSpec,
    pub initial: InitialProfile,
    pub pressure: PressureLaw,
    pub fluid: FluidParams,
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepPlan>,
}

impl RunConfig {
    /// Configuration reproducing a built-in scenario.
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            scenario: Some(s.name.to_string()),
            seed: 0,
            grid: s.grid.clone(),
            barrier: s.barrier.clone(),
            initial: s.initial.clone(),
            pressure: s.law,
            fluid: s.fluid,
            solver: SolverConfig::new(s.t_end),
            output: OutputConfig::default(),
            sweep: None,
        }
    }

    pub fn scenario(name: &str) -> Result<Self> {
        Ok(Self::from_scenario(&make_scenario(name)?))
    }

    /// Copy with the sweep member's parameters substituted.
    pub fn with_member(&self, member: SweepMember) -> Self {
        let mut c = self.clone();
        c.sweep = None;
        match (member, &mut c.pressure) {
            (SweepMember::Eps(e), PressureLaw::Singular { eps, .. } | PressureLaw::Truncated { eps, .. }) => *eps = e,
            (SweepMember::KappaDelta(k, d), PressureLaw::Truncated { kappa, delta, .. }) => {
                *kappa = k;
                *delta = d;
            }
            _ => {}
        }
        c
    }

    /// Semantic checks beyond the schema, including the initial data.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut push = |section: &str, e: Error| {
            let key = match &e {
                Error::Parameter { name, .. } if name.starts_with(section) => name.clone(),
                Error::Parameter { name, .. } => format!("{section}.{name}"),
                _ => section.to_string(),
            };
            let reason = match e {
                Error::Parameter { reason, .. } => reason,
                other => other.to_string(),
            };
            out.push(ConfigIssue { key, line: None, reason });
        };
        for e in self.pressure.issues() {
            push("pressure", e);
        }
        for e in self.fluid.issues() {
            push("fluid", e);
        }
        for e in self.solver.issues() {
            push("solver", e);
        }
        if let Some(plan) = &self.sweep {
            for issue in sweep_issues(plan, &self.pressure) {
                push("sweep", issue);
            }
        }
        let grid = match self.grid.build() {
            Ok(g) => g,
            Err(e) => {
                push("grid", e);
                return out;
            }
        };
        let barrier = match build_barrier(&self.barrier, &grid) {
            Ok(b) => b,
            Err(e) => {
                push("barrier", e);
                return out;
            }
        };
        let data = match self.initial.generate(&grid, &barrier) {
            Ok(d) => d,
            Err(e) => {
                push("initial", e);
                return out;
            }
        };
        let report = validate_initial(&data, &barrier);
        for v in report.violations.iter().take(8) {
            let reason = match v {
                Violation::NegativeDensity { cell, rho } => format!("negative initial density {rho} at cell {cell}"),
                Violation::AboveBarrier { cell, ratio } => {
                    format!("initial density reaches the barrier (ratio {ratio}) at cell {cell}")
                }
                Violation::MomentumInVacuum { cell } => format!("nonzero momentum in vacuum at cell {cell}"),
                Violation::NonFinite { cell } => format!("non-finite initial value at cell {cell}"),
                Violation::MeanAboveInfimum { mean, inf } => {
                    format!("mean initial density {mean} is not below inf rho* = {inf}")
                }
                Violation::ShapeMismatch { expected, found } => format!("expected {expected} cells, found {found}"),
            };
            out.push(ConfigIssue {
                key: "initial".into(),
                line: None,
                reason,
            });
        }
        if report.violations.len() > 8 {
            out.push(ConfigIssue {
                key: "initial".into(),
                line: None,
                reason: format!("{} further violations", report.violations.len() - 8),
            });
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }
}

fn sweep_issues(plan: &SweepPlan, law: &PressureLaw) -> Vec<Error> {
    let mut out = Vec::new();
    let values: Vec<f64> = match (&plan.eps, &plan.kappa_delta) {
        (Some(_), Some(_)) => {
            out.push(Error::param("kappa_delta", "give either eps or kappa_delta, not both"));
            return out;
        }
        (None, None) => {
            out.push(Error::param("eps", "sweep needs eps or kappa_delta values"));
            return out;
        }
        (Some(e), None) => {
            if !matches!(law, PressureLaw::Singular { .. } | PressureLaw::Truncated { .. }) {
                out.push(Error::param("eps", format!("{} law has no eps", law.kind())));
            }
            e.clone()
        }
        (None, Some(kd)) => {
            if !matches!(law, PressureLaw::Truncated { .. }) {
                out.push(Error::param("kappa_delta", "requires the truncated law"));
            }
            if kd.iter().any(|&[k, d]| !(k > 0.0) || !(d > 0.0 && d < 1.0)) {
                out.push(Error::param("kappa_delta", "kappa must be > 0 and delta in (0, 1)"));
            }
            kd.iter().map(|p| p[1]).collect()
        }
    };
    let name = if plan.eps.is_some() { "eps" } else { "kappa_delta" };
    if values.is_empty() {
        out.push(Error::param(name, "sweep plan is empty"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        out.push(Error::param(name, "values must be finite and > 0"));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        out.push(Error::param(name, "values must be distinct"));
    }
    out
}

const SECTIONS: [&str; 8] = ["grid", "barrier", "initial", "pressure", "fluid", "solver", "output", "sweep"];
const TOP_KEYS: [&str; 2] = ["scenario", "seed"];

/// Maps `section.key` (and bare section names) to 1-based source lines.
fn key_lines(text: &str) -> HashMap<String, usize> {
    let mut map = HashMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            section = rest.trim_end_matches(']').trim().to_string();
            map.entry(section.clone()).or_insert(i + 1);
            continue;
        }
        if let Some((key, _)) = line.split_once('=') {
            let key = key.trim().trim_matches('"');
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            map.entry(full).or_insert(i + 1);
        }
    }
    map
}

fn line_of(offset: usize, text: &str) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Sets `path` (dotted) in `table` to the TOML value in `raw`; bare words
/// that do not parse as TOML become strings.
pub fn apply_override(table: &mut Table, path: &str, raw: &str) -> Result<()> {
    let bad = |reason: String| {
        Error::Parse(vec![ConfigIssue {
            key: path.to_string(),
            line: None,
            reason,
        }])
    };
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) || parts.len() > 2 {
        return Err(bad("override keys look like `section.key` or `key`".into()));
    }
    if parts.len() == 1 {
        table.insert(parts[0].to_string(), value);
        return Ok(());
    }
    let section = table
        .entry(parts[0].to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    match section {
        Value::Table(t) => {
            t.insert(parts[1].to_string(), value);
            Ok(())
        }
        _ => Err(bad(format!("`{}` is not a section", parts[0]))),
    }
}

/// Parses `key=value` override strings.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Parse(vec![ConfigIssue {
            key: s.to_string(),
            line: None,
            reason: "override must look like key=value".into(),
        }])),
    }
}

fn to_table<T: Serialize>(v: &T) -> Table {
    Table::try_from(v).expect("config types serialize to TOML tables")
}

fn merge_section(default: Option<&Value>, user: Value) -> Value {
    match (default, user) {
        (Some(Value::Table(d)), Value::Table(u)) => {
            let kind_changed = u.get("kind").is_some_and(|k| Some(k) != d.get("kind"));
            if kind_changed {
                return Value::Table(u);
            }
            let mut merged = d.clone();
            for (k, v) in u {
                merged.insert(k, v);
            }
            Value::Table(merged)
        }
        (_, user) => user,
    }
}

/// Extracts the first backquoted word of a serde message (the offending
/// field in unknown/missing field errors).
fn quoted_field(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

/// Parses configuration text, applying `overrides` before scenario defaults
/// are merged in, then validates the result.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut user: Table = text.parse().map_err(|e: toml::de::Error| {
        Error::Parse(vec![ConfigIssue {
            key: "<syntax>".into(),
            line: e.span().map(|s| line_of(s.start, text)),
            reason: e.message().to_string(),
        }])
    })?;
    for (k, v) in overrides {
        apply_override(&mut user, k, v)?;
    }
    let lines = key_lines(text);
    let issue = |key: String, reason: String| {
        let line = lines
            .get(&key)
            .or_else(|| key.split_once('.').and_then(|(s, _)| lines.get(s)))
            .copied();
        ConfigIssue { key, line, reason }
    };

    let mut issues = Vec::new();
    for (k, v) in &user {
        if TOP_KEYS.contains(&k.as_str()) {
            continue;
        }
        if !SECTIONS.contains(&k.as_str()) {
            issues.push(issue(k.clone(), "unknown key or section".into()));
        } else if !v.is_table() {
            issues.push(issue(k.clone(), "expected a section".into()));
        }
    }
    if !issues.is_empty() {
        return Err(Error::Parse(issues));
    }

    let defaults = match user.get("scenario") {
        Some(Value::String(name)) => match RunConfig::scenario(name) {
            Ok(c) => Some(to_table(&c)),
            Err(e) => return Err(Error::Validation(vec![issue("scenario".into(), e.to_string())])),
        },
        Some(_) => return Err(Error::Parse(vec![issue("scenario".into(), "expected a string".into())])),
        None => None,
    };

    let mut merged = Table::new();
    for (k, v) in user {
        let d = defaults.as_ref().and_then(|t| t.get(&k));
        merged.insert(k.clone(), merge_section(d, v));
    }
    if let Some(d) = defaults {
        for (k, v) in d {
            merged.entry(k).or_insert(v);
        }
    }

    // Deserialize section by section so errors can name their key.
    let mut whole = Table::new();
    for (k, v) in &merged {
        if SECTIONS.contains(&k.as_str()) {
            let check: std::result::Result<(), toml::de::Error> = match k.as_str() {
                "grid" => v.clone().try_into::<GridSpec>().map(drop),
                "barrier" => v.clone().try_into::<BarrierSpec>().map(drop),
                "initial" => v.clone().try_into::<InitialProfile>().map(drop),
                "pressure" => v.clone().try_into::<PressureLaw>().map(drop),
                "fluid" => v.clone().try_into::<FluidParams>().map(drop),
                "solver" => v.clone().try_into::<SolverConfig>().map(drop),
                "output" => v.clone().try_into::<OutputConfig>().map(drop),
                _ => v.clone().try_into::<SweepPlan>().map(drop),
            };
            if let Err(e) = check {
                let msg = e.message().to_string();
                let key = match quoted_field(&msg) {
                    Some(f) if msg.contains("field") => format!("{k}.{f}"),
                    _ => k.clone(),
                };
                issues.push(issue(key, msg));
            }
        }
        whole.insert(k.clone(), v.clone());
    }
    for s in ["grid", "barrier", "initial", "pressure", "fluid", "solver"] {
        if !whole.contains_key(s) {
            issues.push(issue(s.into(), "missing section (no scenario to supply defaults)".into()));
        }
    }
    if !issues.is_empty() {
        return Err(Error::Parse(issues));
    }
    let cfg: RunConfig = Value::Table(whole)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(vec![issue("<config>".into(), e.message().to_string())]))?;

    let issues: Vec<ConfigIssue> = cfg
        .issues()
        .into_iter()
        .map(|i| issue(i.key, i.reason))
        .collect();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(issues))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

/// Writes every resolved parameter explicitly.
pub fn serialize_config(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config types serialize to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::SCENARIOS;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_uses_scenario_defaults() {
        let cfg = parse_config("scenario = \"traffic_1d\"\n").unwrap();
        assert_eq!(cfg, RunConfig::scenario("traffic_1d").unwrap());
        assert_eq!(cfg.solver.cfl, 0.4);
        assert_eq!(cfg.solver.delta_c, 0.05);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn negative_beta_names_key_and_line() {
        let text = "scenario = \"traffic_1d\"\n\n[pressure]\nbeta = -1.0\n";
        match parse_config(text) {
            Err(Error::Validation(issues)) => {
                assert_eq!(issues[0].key, "pressure.beta");
                assert_eq!(issues[0].line, Some(4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_reported() {
        let text = "scenario = \"traffic_1d\"\n[fluid]\nmuu = 0.1\n";
        match parse_config(text) {
            Err(Error::Parse(issues)) => {
                assert_eq!(issues[0].key, "fluid.muu");
                assert_eq!(issues[0].line, Some(3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_config("[nope]\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn syntax_error_has_line() {
        match parse_config("scenario = \"traffic_1d\"\n[grid\n") {
            Err(Error::Parse(issues)) => assert_eq!(issues[0].line, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_scenario_is_validation_error() {
        assert!(matches!(parse_config("scenario = \"warp\"\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_sections_without_scenario() {
        match parse_config("[fluid]\nmu = 0.1\nlambda = 0.0\ngamma = 2.0\n") {
            Err(Error::Parse(issues)) => assert!(issues.iter().any(|i| i.key == "grid")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kind_change_replaces_section() {
        let text = "scenario = \"traffic_1d\"\n[pressure]\nkind = \"barotropic\"\na = 1.0\ngamma_n = 3.0\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.pressure, PressureLaw::Barotropic { a: 1.0, gamma_n: 3.0 });
    }

    #[test]
    fn overrides_apply() {
        let cfg = parse_config_with(
            "scenario = \"traffic_1d\"\n",
            &[
                ("pressure.eps".into(), "1e-4".into()),
                ("grid.cells".into(), "[50]".into()),
                ("output.dir".into(), "elsewhere".into()),
            ],
        )
        .unwrap();
        assert!(matches!(cfg.pressure, PressureLaw::Singular { eps, .. } if eps == 1e-4));
        assert_eq!(cfg.grid.cells, vec![50]);
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
        assert!(parse_override("novalue").is_err());
        assert_eq!(parse_override("a.b = 3").unwrap(), ("a.b".into(), "3".into()));
    }

    #[test]
    fn invalid_initial_data_rejected() {
        let text = "scenario = \"lane_narrowing_1d\"\n[initial]\ndensity = 0.7\n";
        match parse_config(text) {
            Err(Error::Validation(issues)) => assert!(issues.iter().all(|i| i.key == "initial")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_plan_checks() {
        let ok = parse_config("scenario = \"traffic_1d\"\n[sweep]\neps = [1e-3, 1e-2, 1e-4]\n").unwrap();
        let m = ok.sweep.unwrap().members();
        assert_eq!(m, vec![SweepMember::Eps(1e-2), SweepMember::Eps(1e-3), SweepMember::Eps(1e-4)]);
        for bad in ["eps = []", "eps = [1e-2, 1e-2]", "eps = [-1.0]", "kappa_delta = [[1.0, 0.1]]"] {
            let text = format!("scenario = \"traffic_1d\"\n[sweep]\n{bad}\n");
            assert!(matches!(parse_config(&text), Err(Error::Validation(_))), "{bad}");
        }
    }

    #[test]
    fn scenarios_round_trip() {
        for name in SCENARIOS {
            let cfg = RunConfig::scenario(name).unwrap();
            assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg, "{name}");
        }
    }

    fn arb_law() -> impl Strategy<Value = PressureLaw> {
        prop_oneof![
            (1e-5f64..1.0, 1.5f64..5.0, 0.5f64..5.0).prop_map(|(eps, alpha, beta)| PressureLaw::Singular {
                eps,
                alpha,
                beta
            }),
            (0.1f64..3.0, 1.1f64..4.0).prop_map(|(a, gamma_n)| PressureLaw::Barotropic { a, gamma_n }),
            (1e-4f64..1.0, 2.0f64..4.0, 2.0f64..4.0, 0.1f64..2.0, 4.5f64..8.0, 0.01f64..0.5).prop_map(
                |(eps, alpha, beta, kappa, cap_k, delta)| PressureLaw::Truncated {
                    eps,
                    alpha,
                    beta,
                    kappa,
                    cap_k,
                    delta
                }
            ),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn generated_configs_round_trip(
            idx in 0usize..4,
            law in arb_law(),
            mu in 0.001f64..0.5,
            gamma in 1.05f64..3.0,
            t_end in 0.0f64..2.0,
            cfl in 0.05f64..1.0,
            every in proptest::option::of(0.01f64..0.5),
            n in 4usize..300,
            eps in proptest::option::of(proptest::collection::vec(1e-6f64..1.0, 1..4)),
        ) {
            let mut cfg = RunConfig::scenario(SCENARIOS[idx]).unwrap();
            cfg.pressure = law;
            cfg.fluid.mu = mu;
            cfg.fluid.gamma = gamma;
            cfg.solver.t_end = t_end;
            cfg.solver.cfl = cfl;
            cfg.solver.snapshot_every = every;
            cfg.grid.cells[0] = n;
            cfg.sweep = eps.map(|e| SweepPlan { eps: Some(e), kappa_delta: None });
            let text = serialize_config(&cfg);
            let table: Table = text.parse().unwrap();
            let back: RunConfig = Value::Table(table).try_into().unwrap();
            prop_assert_eq!(&back, &cfg);
            // Full parse (defaults + validation) is also the identity when valid.
            if cfg.issues().is_empty() {
                prop_assert_eq!(parse_config(&text).unwrap(), cfg);
            }
        }
    }
}
