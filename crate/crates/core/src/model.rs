//! The payoff-model interface and the evaluation helpers every other module
//! builds on.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{find_root_1d, maximize_concave_1d, Interval};

/// A principal-agent-outsider payoff model on the rectangle `A x R`.
///
/// Implementations must be pure: evaluation may happen concurrently from
/// several threads.
pub trait PayoffModel: Send + Sync {
    fn name(&self) -> &str;

    /// Agent action range. The outside option sits inside it.
    fn actions(&self) -> Interval;

    /// Outsider decision range.
    fn decisions(&self) -> Interval;

    /// Outside-option action `a0`.
    fn outside_option(&self) -> f64 {
        self.actions().lo
    }

    fn agent(&self, a: f64, r: f64) -> f64;
    fn outsider(&self, a: f64, r: f64) -> f64;
    fn principal(&self, a: f64, r: f64) -> f64;

    /// Analytic `du_A/da`, if the model has one.
    fn agent_marginal(&self, _a: f64, _r: f64) -> Option<f64> {
        None
    }

    /// Analytic `du_O/dr`, if the model has one.
    fn outsider_marginal(&self, _a: f64, _r: f64) -> Option<f64> {
        None
    }
}

pub type SharedModel = Arc<dyn PayoffModel>;

/// Which route produced a partial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialSource {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Partials {
    pub agent_da: f64,
    pub outsider_dr: f64,
    pub agent_source: PartialSource,
    pub outsider_source: PartialSource,
}

/// Relative finite-difference step (times the interval width).
pub const FD_STEP: f64 = 1e-5;

fn check_domain(model: &dyn PayoffModel, a: f64, r: f64) -> Result<()> {
    if model.actions().contains_approx(a) && model.decisions().contains_approx(r) {
        Ok(())
    } else {
        Err(Error::OutsideDomain { a, r })
    }
}

/// Central difference of `f` at `x` inside `dom`, falling back to a one-sided
/// stencil of the same width at the boundary.
pub(crate) fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, dom: Interval) -> f64 {
    let h = FD_STEP * dom.width().max(f64::MIN_POSITIVE);
    let lo = (x - h).max(dom.lo);
    let hi = (x + h).min(dom.hi);
    if hi <= lo {
        return 0.0;
    }
    (f(hi) - f(lo)) / (hi - lo)
}

/// `(du_A/da, du_O/dr)` at `(a, r)`: analytic when the model provides it,
/// otherwise a central finite difference with step `1e-5 * width`.
pub fn partials(model: &dyn PayoffModel, a: f64, r: f64) -> Result<Partials> {
    check_domain(model, a, r)?;
    let (agent_da, agent_source) = match model.agent_marginal(a, r) {
        Some(v) => (v, PartialSource::Analytic),
        None => (agent_marginal_fd(model, a, r), PartialSource::FiniteDifference),
    };
    let (outsider_dr, outsider_source) = match model.outsider_marginal(a, r) {
        Some(v) => (v, PartialSource::Analytic),
        None => (outsider_marginal_fd(model, a, r), PartialSource::FiniteDifference),
    };
    Ok(Partials { agent_da, outsider_dr, agent_source, outsider_source })
}

pub fn agent_marginal_fd(model: &dyn PayoffModel, a: f64, r: f64) -> f64 {
    central_difference(|x| model.agent(x, r), a, model.actions())
}

pub fn outsider_marginal_fd(model: &dyn PayoffModel, a: f64, r: f64) -> f64 {
    central_difference(|y| model.outsider(a, y), r, model.decisions())
}

/// `du_A/da` without domain checks (hot path).
#[inline]
pub fn agent_marginal(model: &dyn PayoffModel, a: f64, r: f64) -> f64 {
    model.agent_marginal(a, r).unwrap_or_else(|| agent_marginal_fd(model, a, r))
}

/// `du_O/dr` without domain checks (hot path).
#[inline]
pub fn outsider_marginal(model: &dyn PayoffModel, a: f64, r: f64) -> f64 {
    model.outsider_marginal(a, r).unwrap_or_else(|| outsider_marginal_fd(model, a, r))
}

/// Outsider best response to a finite mixture `(action, weight)` of agent
/// actions. Golden section on the averaged `u_O`, then a bisection polish on
/// the analytic first-order condition when the model provides one.
pub fn best_reply(model: &dyn PayoffModel, mix: &[(f64, f64)], tol_opt: f64) -> Result<f64> {
    if mix.is_empty() {
        return Err(Error::InvalidTarget("empty mixture".into()));
    }
    let dom = model.decisions();
    let objective = |r: f64| mix.iter().map(|&(a, w)| w * model.outsider(a, r)).sum::<f64>();
    let (r, _) = maximize_concave_1d(objective, dom, tol_opt)?;
    if r <= dom.lo || r >= dom.hi {
        return Ok(r);
    }
    let Some(_) = model.outsider_marginal(mix[0].0, r) else {
        return Ok(r);
    };
    let foc = |y: f64| {
        mix.iter().map(|&(a, w)| w * model.outsider_marginal(a, y).unwrap_or(0.0)).sum::<f64>()
    };
    let half = (1e3 * tol_opt).max(1e-12 * dom.width());
    let lo = (r - half).max(dom.lo);
    let hi = (r + half).min(dom.hi);
    let (flo, fhi) = (foc(lo), foc(hi));
    if flo > 0.0 && fhi < 0.0 {
        find_root_1d(foc, lo, hi, 1e-15 * dom.width().max(1.0))
    } else {
        Ok(r)
    }
}

/// Best response to the pure action `a`.
pub fn pure_reply(model: &dyn PayoffModel, a: f64, tol_opt: f64) -> Result<f64> {
    best_reply(model, &[(a, 1.0)], tol_opt)
}

/// Relabels the agent's action as `-a`. Used for full-access targets below
/// the outside option.
pub struct Mirrored {
    inner: SharedModel,
    name: String,
}

impl Mirrored {
    pub fn new(inner: SharedModel) -> Self {
        let name = format!("{}-mirrored", inner.name());
        Self { inner, name }
    }
}

impl PayoffModel for Mirrored {
    fn name(&self) -> &str {
        &self.name
    }
    fn actions(&self) -> Interval {
        let a = self.inner.actions();
        Interval { lo: -a.hi, hi: -a.lo }
    }
    fn decisions(&self) -> Interval {
        self.inner.decisions()
    }
    fn outside_option(&self) -> f64 {
        -self.inner.outside_option()
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        self.inner.agent(-a, r)
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        self.inner.outsider(-a, r)
    }
    fn principal(&self, a: f64, r: f64) -> f64 {
        self.inner.principal(-a, r)
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.inner.agent_marginal(-a, r).map(|v| -v)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.inner.outsider_marginal(-a, r)
    }
}

/// Restricts the action range to `[a0, a_hi]` so that the outside option is
/// the lowest action.
pub struct Restricted {
    inner: SharedModel,
    actions: Interval,
}

impl Restricted {
    pub fn from_outside_option(inner: SharedModel) -> Self {
        let a = inner.actions();
        let actions = Interval { lo: inner.outside_option(), hi: a.hi };
        Self { inner, actions }
    }
}

impl PayoffModel for Restricted {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn actions(&self) -> Interval {
        self.actions
    }
    fn decisions(&self) -> Interval {
        self.inner.decisions()
    }
    fn outside_option(&self) -> f64 {
        self.actions.lo
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        self.inner.agent(a, r)
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        self.inner.outsider(a, r)
    }
    fn principal(&self, a: f64, r: f64) -> f64 {
        self.inner.principal(a, r)
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.inner.agent_marginal(a, r)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.inner.outsider_marginal(a, r)
    }
}

/// Replaces the principal's objective with zero.
pub struct ZeroPrincipal(pub SharedModel);

impl PayoffModel for ZeroPrincipal {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn actions(&self) -> Interval {
        self.0.actions()
    }
    fn decisions(&self) -> Interval {
        self.0.decisions()
    }
    fn outside_option(&self) -> f64 {
        self.0.outside_option()
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        self.0.agent(a, r)
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        self.0.outsider(a, r)
    }
    fn principal(&self, _a: f64, _r: f64) -> f64 {
        0.0
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.0.agent_marginal(a, r)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.0.outsider_marginal(a, r)
    }
}

/// Principal objective `scale * u_P + action * a + reply * r`; the agent
/// and outsider are untouched.
pub struct Reweighted {
    pub inner: SharedModel,
    pub scale: f64,
    pub action: f64,
    pub reply: f64,
}

impl PayoffModel for Reweighted {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn actions(&self) -> Interval {
        self.inner.actions()
    }
    fn decisions(&self) -> Interval {
        self.inner.decisions()
    }
    fn outside_option(&self) -> f64 {
        self.inner.outside_option()
    }
    fn agent(&self, a: f64, r: f64) -> f64 {
        self.inner.agent(a, r)
    }
    fn outsider(&self, a: f64, r: f64) -> f64 {
        self.inner.outsider(a, r)
    }
    fn principal(&self, a: f64, r: f64) -> f64 {
        self.scale * self.inner.principal(a, r) + self.action * a + self.reply * r
    }
    fn agent_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.inner.agent_marginal(a, r)
    }
    fn outsider_marginal(&self, a: f64, r: f64) -> Option<f64> {
        self.inner.outsider_marginal(a, r)
    }
}
