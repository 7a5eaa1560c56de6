//! Built-in application scenarios and the scenario config file.
//!
//! | kind        | agent payoff                  | outsider payoff              |
//! |-------------|-------------------------------|------------------------------|
//! | `cournot`   | `a (1 + c - a - r) - c a`     | `r (1 + c - a - r) - c r`    |
//! | `networked` | `(1 + a)(bO r - r^2) - a^2/2` | `r (bA a - a^2) - r^2`       |
//! | `boycott`   | `a (1 - a - g r)`             | `r a - r^2 / 2`              |
//! | `wave`      | `a r - a^2 / 2`               | `-(r - phi(a))^2 / 2`        |

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PayoffModel, SharedModel, ZeroPrincipal};
use crate::numerics::{Interval, ToleranceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CournotObjective {
    /// Total surplus `int_0^{a+r} (1 - q) dq`.
    Efficiency,
    /// Emission damage `-k (a + r)`.
    Emission,
}

#[derive(Debug, Clone)]
pub struct Cournot {
    pub cost: f64,
    pub objective: CournotObjective,
    pub emission_weight: f64,
    actions: Interval,
    decisions: Interval,
    outside: f64,
}

impl Cournot {
    pub const NASH: f64 = 1.0 / 3.0;

    fn price(&self, a: f64, r: f64) -> f64 {
        1.0 + self.cost - a - r
    }
}

/// Cournot duopoly with linear demand `1 + c - a - r` and unit cost `c`.
/// Actions default to `[1/3, 1]` with the outside option at the Nash point.
pub fn make_cournot(c: f64) -> Result<Cournot> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::param("c", format!("must be finite and nonnegative, got {c}")));
    }
    Ok(Cournot {
        cost: c,
        objective: CournotObjective::Efficiency,
        emission_weight: 1.0,
        actions: Interval { lo: Cournot::NASH, hi: 1.0 },
        decisions: Interval { lo: 0.0, hi: 1.0 },
        outside: Cournot::NASH,
    })
}

impl Cournot {
    pub fn with_objective(mut self, objective: CournotObjective) -> Self {
        self.objective = objective;
        self
    }

    /// Replaces the action range and outside option.
    pub fn with_actions(mut self, actions: Interval, outside: f64) -> Result<Self> {
        if !actions.contains(outside) {
            return Err(Error::param("outside_option", "must lie inside the action range"));
        }
        if actions.lo < 0.0 || actions.hi > 1.0 {
            return Err(Error::param("actions", "Cournot actions must stay within [0, 1]"));
        }
        self.actions = actions;
        self.outside = outside;
        Ok(self)
    }
}

impl PayoffModel for Cournot {
    fn name(&self) -> &str {
        "cournot"
    }
    fn actions(&self) -> Interval {
        self.actions
    }
    fn decisions(&self) -> Interval {
        self.decisions
    }
    fn outside_option(&self) -> f64 {
        self.outside
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        a * self.price(a, r) - self.cost * a
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        r * self.price(a, r) - self.cost * r
    }
    fn principal(&self, a: f64, r: f64) -> f64 {
        let q = a + r;
        match self.objective {
            CournotObjective::Efficiency => q - 0.5 * q * q,
            CournotObjective::Emission => -self.emission_weight * q,
        }
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(1.0 - 2.0 * a - r)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(1.0 - a - 2.0 * r)
    }
}

/// Networked competition with the reference forms `g_A(a) = 1 + a`,
/// `g_O(r) = r`, `c_A(a) = a^2/2`, `c_O(r) = r^2`.
#[derive(Debug, Clone)]
pub struct Networked {
    pub beta_a: f64,
    pub beta_o: f64,
    pub weight_action: f64,
    pub weight_spillover: f64,
    actions: Interval,
    decisions: Interval,
}

#[derive(Debug, Clone, Copy)]
pub struct NetworkedParams {
    pub beta_a: f64,
    pub beta_o: f64,
    pub weight_action: f64,
    pub weight_spillover: f64,
    pub action_hi: f64,
}

impl Default for NetworkedParams {
    fn default() -> Self {
        Self { beta_a: 4.0, beta_o: 1.0, weight_action: 1.0, weight_spillover: 1.0, action_hi: 1.0 }
    }
}

pub fn make_networked(p: NetworkedParams) -> Result<Networked> {
    if !(p.beta_o.is_finite() && p.beta_o > 0.0) {
        return Err(Error::param("beta_o", "must be positive"));
    }
    if !(p.beta_a.is_finite() && p.beta_a >= 2.0 * p.beta_o) {
        return Err(Error::param("beta_a", format!("must be at least 2 * beta_o = {}", 2.0 * p.beta_o)));
    }
    if !(p.action_hi.is_finite() && p.action_hi > 0.0) {
        return Err(Error::param("action_hi", "must be positive"));
    }
    if !(p.weight_action.is_finite() && p.weight_spillover.is_finite()) {
        return Err(Error::param("weights", "must be finite"));
    }
    // r(a) = (bA a - a^2) / 2 peaks at a = bA / 2.
    let a_peak = (0.5 * p.beta_a).min(p.action_hi);
    let r_max = 0.5 * (p.beta_a * a_peak - a_peak * a_peak);
    let r_hi = (r_max + 0.25).max(1.0);
    Ok(Networked {
        beta_a: p.beta_a,
        beta_o: p.beta_o,
        weight_action: p.weight_action,
        weight_spillover: p.weight_spillover,
        actions: Interval { lo: 0.0, hi: p.action_hi },
        decisions: Interval { lo: 0.0, hi: r_hi },
    })
}

impl Networked {
    fn spill(&self, r: f64) -> f64 {
        self.beta_o * r - r * r
    }
}

impl PayoffModel for Networked {
    fn name(&self) -> &str {
        "networked"
    }
    fn actions(&self) -> Interval {
        self.actions
    }
    fn decisions(&self) -> Interval {
        self.decisions
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        (1.0 + a) * self.spill(r) - 0.5 * a * a
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        r * (self.beta_a * a - a * a) - r * r
    }
    fn principal(&self, a: f64, r: f64) -> f64 {
        self.weight_action * a + self.weight_spillover * self.spill(r)
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(self.spill(r) - a)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(self.beta_a * a - a * a - 2.0 * r)
    }
}

/// Regulation with boycott: asymmetric strategic dependence. The outsider
/// reply is `r(a) = a` and agent incentives fall in `r`.
#[derive(Debug, Clone)]
pub struct Boycott {
    pub gamma: f64,
    pub emission: f64,
    actions: Interval,
    decisions: Interval,
}

pub fn make_boycott(gamma: f64, emission: f64) -> Result<Boycott> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", "must be positive"));
    }
    if !emission.is_finite() {
        return Err(Error::param("emission", "must be finite"));
    }
    Ok(Boycott {
        gamma,
        emission,
        actions: Interval { lo: 0.0, hi: 1.0 },
        decisions: Interval { lo: 0.0, hi: 1.0 },
    })
}

impl PayoffModel for Boycott {
    fn name(&self) -> &str {
        "boycott"
    }
    fn actions(&self) -> Interval {
        self.actions
    }
    fn decisions(&self) -> Interval {
        self.decisions
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        a * (1.0 - a - self.gamma * r)
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        r * a - 0.5 * r * r
    }
    fn principal(&self, a: f64, _r: f64) -> f64 {
        a - 0.5 * a * a - self.emission * a
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(1.0 - 2.0 * a - self.gamma * r)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(a - r)
    }
}

/// Mixed externalities: agent incentives rise in `r`, while the outsider
/// tracks the oscillating target `phi(a) = intercept + slope a + amp sin(freq pi a)`.
#[derive(Debug, Clone)]
pub struct Wave {
    pub intercept: f64,
    pub slope: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub weight_action: f64,
    actions: Interval,
    decisions: Interval,
}

#[derive(Debug, Clone, Copy)]
pub struct WaveParams {
    pub intercept: f64,
    pub slope: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub weight_action: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self { intercept: 0.2, slope: 0.5, amplitude: 0.12, frequency: 3.0, weight_action: 1.0 }
    }
}

pub fn make_wave(p: WaveParams) -> Result<Wave> {
    for (name, v) in [
        ("intercept", p.intercept),
        ("slope", p.slope),
        ("amplitude", p.amplitude),
        ("frequency", p.frequency),
        ("weight_action", p.weight_action),
    ] {
        if !v.is_finite() {
            return Err(Error::param(name, "must be finite"));
        }
    }
    let lo = p.intercept - p.amplitude.abs() + p.slope.min(0.0);
    let hi = p.intercept + p.amplitude.abs() + p.slope.max(0.0);
    Ok(Wave {
        intercept: p.intercept,
        slope: p.slope,
        amplitude: p.amplitude,
        frequency: p.frequency,
        weight_action: p.weight_action,
        actions: Interval { lo: 0.0, hi: 1.0 },
        decisions: Interval { lo: lo.min(0.0), hi: hi.max(1.0) },
    })
}

impl Wave {
    pub fn target(&self, a: f64) -> f64 {
        self.intercept + self.slope * a + self.amplitude * (self.frequency * std::f64::consts::PI * a).sin()
    }
}

impl PayoffModel for Wave {
    fn name(&self) -> &str {
        "wave"
    }
    fn actions(&self) -> Interval {
        self.actions
    }
    fn decisions(&self) -> Interval {
        self.decisions
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        a * r - 0.5 * a * a
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        let d = r - self.target(a);
        -0.5 * d * d
    }
    fn principal(&self, a: f64, _r: f64) -> f64 {
        self.weight_action * a
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(r - a)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        Some(self.target(a) - r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Cournot,
    Networked,
    Boycott,
    Wave,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cournot" => Ok(Self::Cournot),
            "networked" => Ok(Self::Networked),
            "boycott" => Ok(Self::Boycott),
            "wave" | "custom-mixed" | "mixed" => Ok(Self::Wave),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// Scenario parameters. Fields not used by the chosen kind must be absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emission_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outside_option: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_o: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_action: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_spillover: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emission: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_a: usize,
    pub n_r: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_a: 2001, n_r: 2001 }
    }
}

/// Tolerances as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolConfig {
    pub opt: f64,
    pub integ: f64,
    pub eq: f64,
}

impl Default for TolConfig {
    fn default() -> Self {
        let t = ToleranceSet::default();
        Self { opt: t.opt, integ: t.integ, eq: t.eq }
    }
}

/// Scenario config file:
///
/// ```toml
/// kind = "cournot"
/// [params]
/// c = 0.0
/// objective = "efficiency"
/// [grid]
/// n_a = 2001
/// n_r = 2001
/// [tol]
/// opt = 1e-9
/// integ = 1e-8
/// eq = 1e-6
/// ```
///
/// JSON with the same shape is accepted for `.json` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tol: TolConfig,
    /// Replace the principal's objective with zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_principal: bool,
}

pub const MIN_GRID: usize = 11;

impl ScenarioConfig {
    pub fn builtin(kind: ScenarioKind) -> Self {
        Self {
            kind,
            params: ScenarioParams::default(),
            grid: GridConfig::default(),
            tol: TolConfig::default(),
            zero_principal: false,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    /// A builtin name (`cournot`, ...) or a path to a config file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec.parse::<ScenarioKind>() {
            Ok(kind) => Ok(Self::builtin(kind)),
            Err(_) if Path::new(spec).exists() => Self::from_path(Path::new(spec)),
            Err(e) => Err(e),
        }
    }

    pub fn tolerances(&self) -> ToleranceSet {
        ToleranceSet { opt: self.tol.opt, integ: self.tol.integ, eq: self.tol.eq, ..ToleranceSet::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.n_a < MIN_GRID || self.grid.n_r < MIN_GRID {
            return Err(Error::param("grid", format!("resolution must be at least {MIN_GRID}")));
        }
        self.tolerances().validate()?;
        self.check_params()
    }

    fn check_params(&self) -> Result<()> {
        let p = &self.params;
        let allowed: &[&str] = match self.kind {
            ScenarioKind::Cournot => &["c", "objective", "emission_weight", "action_lo", "action_hi", "outside_option"],
            ScenarioKind::Networked => &["beta_a", "beta_o", "weight_action", "weight_spillover", "action_hi"],
            ScenarioKind::Boycott => &["gamma", "emission"],
            ScenarioKind::Wave => &["intercept", "slope", "amplitude", "frequency", "weight_action"],
        };
        let present = [
            ("c", p.c.is_some()),
            ("objective", p.objective.is_some()),
            ("emission_weight", p.emission_weight.is_some()),
            ("action_lo", p.action_lo.is_some()),
            ("action_hi", p.action_hi.is_some()),
            ("outside_option", p.outside_option.is_some()),
            ("beta_a", p.beta_a.is_some()),
            ("beta_o", p.beta_o.is_some()),
            ("weight_action", p.weight_action.is_some()),
            ("weight_spillover", p.weight_spillover.is_some()),
            ("gamma", p.gamma.is_some()),
            ("emission", p.emission.is_some()),
            ("intercept", p.intercept.is_some()),
            ("slope", p.slope.is_some()),
            ("amplitude", p.amplitude.is_some()),
            ("frequency", p.frequency.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(Error::Config(format!("parameter `{name}` does not apply to scenario {:?}", self.kind)));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<SharedModel> {
        self.validate()?;
        let p = &self.params;
        let model: SharedModel = match self.kind {
            ScenarioKind::Cournot => {
                let objective = match p.objective.as_deref() {
                    None | Some("efficiency") => CournotObjective::Efficiency,
                    Some("emission") => CournotObjective::Emission,
                    Some(other) => {
                        return Err(Error::param("objective", format!("unknown Cournot objective `{other}`")))
                    }
                };
                let mut m = make_cournot(p.c.unwrap_or(0.0))?.with_objective(objective);
                if let Some(k) = p.emission_weight {
                    if !(k.is_finite() && k > 0.0) {
                        return Err(Error::param("emission_weight", "must be positive"));
                    }
                    m.emission_weight = k;
                }
                if p.action_lo.is_some() || p.action_hi.is_some() || p.outside_option.is_some() {
                    let lo = p.action_lo.unwrap_or(Cournot::NASH);
                    let hi = p.action_hi.unwrap_or(1.0);
                    let outside = p.outside_option.unwrap_or(lo.max(Cournot::NASH).min(hi));
                    m = m.with_actions(Interval::new(lo, hi)?, outside)?;
                }
                Arc::new(m)
            }
            ScenarioKind::Networked => {
                let d = NetworkedParams::default();
                Arc::new(make_networked(NetworkedParams {
                    beta_a: p.beta_a.unwrap_or(d.beta_a),
                    beta_o: p.beta_o.unwrap_or(d.beta_o),
                    weight_action: p.weight_action.unwrap_or(d.weight_action),
                    weight_spillover: p.weight_spillover.unwrap_or(d.weight_spillover),
                    action_hi: p.action_hi.unwrap_or(d.action_hi),
                })?)
            }
            ScenarioKind::Boycott => Arc::new(make_boycott(p.gamma.unwrap_or(1.0), p.emission.unwrap_or(0.2))?),
            ScenarioKind::Wave => {
                let d = WaveParams::default();
                Arc::new(make_wave(WaveParams {
                    intercept: p.intercept.unwrap_or(d.intercept),
                    slope: p.slope.unwrap_or(d.slope),
                    amplitude: p.amplitude.unwrap_or(d.amplitude),
                    frequency: p.frequency.unwrap_or(d.frequency),
                    weight_action: p.weight_action.unwrap_or(d.weight_action),
                })?)
            }
        };
        Ok(if self.zero_principal { Arc::new(ZeroPrincipal(model)) } else { model })
    }
}
