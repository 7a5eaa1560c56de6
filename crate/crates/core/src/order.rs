//! The agent-incentive order over outsider decisions, the pure-action
//! response curve `r(a)`, the cumulative optimal reply `r_bar(a)` and the
//! assumption checks.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{agent_marginal, outsider_marginal, pure_reply, SharedModel};
use crate::numerics::{floor_index, maximize_concave_1d, Interval, ToleranceSet};
use crate::scenarios::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AiCmp {
    Less,
    Equiv,
    Greater,
}

/// Numeric representation `h(r) = du_A/da(a_ref, r)` of the incentive order.
#[derive(Clone)]
pub struct AiOrder {
    model: SharedModel,
    pub a_ref: f64,
    pub tol: f64,
}

impl AiOrder {
    /// Reference action is the outside option.
    pub fn new(model: SharedModel, tol_eq: f64) -> Self {
        let a_ref = model.outside_option();
        Self { model, a_ref, tol: tol_eq }
    }

    #[inline]
    pub fn h(&self, r: f64) -> f64 {
        agent_marginal(self.model.as_ref(), self.a_ref, r)
    }

    pub fn compare(&self, r1: f64, r2: f64) -> AiCmp {
        let d = self.h(r1) - self.h(r2);
        if d.abs() <= self.tol {
            AiCmp::Equiv
        } else if d > 0.0 {
            AiCmp::Greater
        } else {
            AiCmp::Less
        }
    }
}

pub fn ai_compare(order: &AiOrder, r1: f64, r2: f64) -> AiCmp {
    order.compare(r1, r2)
}

/// Refined interior local maximum of `h(r(a))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub a: f64,
    pub r: f64,
    pub h: f64,
}

/// `r_bar(a)` together with the action that rationalizes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarReply {
    pub source: f64,
    pub r: f64,
    pub h: f64,
}

/// Pure-action best responses sampled on an action grid.
#[derive(Debug, Clone)]
pub struct ResponseCurve {
    pub a: Vec<f64>,
    pub r: Vec<f64>,
    pub h: Vec<f64>,
    /// Index of the running `h`-maximizer over `a[0..=i]`, earliest on ties.
    pub bar: Vec<usize>,
    pub peaks: Vec<Peak>,
}

pub fn build_response_curve(model: &SharedModel, order: &AiOrder, n: usize, tol_opt: f64) -> Result<ResponseCurve> {
    let a = model.actions().grid(n);
    let r: Vec<f64> = a.par_iter().map(|&x| pure_reply(model.as_ref(), x, tol_opt)).collect::<Result<_>>()?;
    let h: Vec<f64> = r.iter().map(|&y| order.h(y)).collect();
    for (i, v) in h.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { at: a[i] });
        }
    }
    let mut bar = Vec::with_capacity(n);
    for i in 0..n {
        let best = if i == 0 || h[i] > h[bar[i - 1]] { i } else { bar[i - 1] };
        bar.push(best);
    }
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if h[i] > h[i - 1] && h[i] >= h[i + 1] {
            let cell = Interval { lo: a[i - 1], hi: a[i + 1] };
            let f = |x: f64| pure_reply(model.as_ref(), x, tol_opt).map(|y| order.h(y)).unwrap_or(f64::NEG_INFINITY);
            let (x, _) = maximize_concave_1d(f, cell, tol_opt)?;
            let y = pure_reply(model.as_ref(), x, tol_opt)?;
            let hy = order.h(y);
            if hy >= h[i] {
                peaks.push(Peak { a: x, r: y, h: hy });
            } else {
                peaks.push(Peak { a: a[i], r: r[i], h: h[i] });
            }
        }
    }
    Ok(ResponseCurve { a, r, h, bar, peaks })
}

impl ResponseCurve {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `h(r_bar(a_i))` on the grid.
    pub fn bar_h(&self, i: usize) -> f64 {
        self.h[self.bar[i]]
    }

    /// Whether `h(r(a))` is monotone along the grid (either direction) within `tol`.
    pub fn monotone(&self, tol: f64) -> bool {
        let w = self.h.windows(2);
        let up = w.clone().all(|p| p[1] >= p[0] - tol);
        let down = w.into_iter().all(|p| p[1] <= p[0] + tol);
        up || down
    }

    /// CSV columns `a, r, h_r, h_rbar`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "r", "h_r", "h_rbar"]).map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record([fmt(self.a[i]), fmt(self.r[i]), fmt(self.h[i]), fmt(self.bar_h(i))])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Running maximum of `h(r(a'))` over `a'` in `[a0, a]`, ties toward the
/// earliest action.
pub fn cumulative_optimal_reply(setting: &Setting, a: f64) -> Result<BarReply> {
    setting.bar(a)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn ok() -> Self {
        Self { pass: true, detail: None }
    }
    fn fail(detail: String) -> Self {
        Self { pass: false, detail: Some(detail) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Externalities {
    /// Both cross partials nonnegative.
    Complements,
    /// Both cross partials nonpositive.
    Substitutes,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub ranked_incentives: Check,
    pub intuitive_mixture: Check,
    pub outsider_concavity: Check,
    pub externalities: Externalities,
    pub monotone_response: bool,
}

impl AssumptionReport {
    /// Ranked incentives, intuitive mixture and strict concavity all hold.
    pub fn passed(&self) -> bool {
        self.ranked_incentives.pass && self.intuitive_mixture.pass && self.outsider_concavity.pass
    }

    pub fn pure(&self) -> bool {
        self.externalities != Externalities::Mixed
    }
}

const CHECK_GRID: usize = 41;

pub fn validate_assumptions(model: &SharedModel, order: &AiOrder, curve: &ResponseCurve, n_r: usize) -> AssumptionReport {
    let m = model.as_ref();
    let (adom, rdom) = (m.actions(), m.decisions());
    let ag = adom.grid(CHECK_GRID);
    let rg = rdom.grid(CHECK_GRID);
    let tol = order.tol;

    let mut ranked = Check::ok();
    'pairs: for (i, &r1) in rg.iter().enumerate() {
        for &r2 in &rg[i + 1..] {
            let (mut pos, mut neg) = (None, None);
            for &a in &ag {
                let d = agent_marginal(m, a, r1) - agent_marginal(m, a, r2);
                if d > tol {
                    pos = Some(a);
                } else if d < -tol {
                    neg = Some(a);
                }
            }
            if let (Some(p), Some(q)) = (pos, neg) {
                ranked = Check::fail(format!(
                    "incentive ranking of r = {r1} and r = {r2} flips between a = {p} and a = {q}"
                ));
                break 'pairs;
            }
        }
    }

    let hs: Vec<f64> = rdom.grid(n_r.max(CHECK_GRID)).iter().map(|&r| order.h(r)).collect();
    let mut prefix = vec![f64::NEG_INFINITY; hs.len()];
    let mut suffix = vec![f64::NEG_INFINITY; hs.len()];
    for j in 1..hs.len() {
        prefix[j] = prefix[j - 1].max(hs[j - 1]);
    }
    for j in (0..hs.len() - 1).rev() {
        suffix[j] = suffix[j + 1].max(hs[j + 1]);
    }
    let dip = (1..hs.len() - 1).find(|&j| hs[j] < prefix[j].min(suffix[j]) - tol);
    let intuitive = match dip {
        Some(j) => {
            let r = rdom.grid(hs.len())[j];
            Check::fail(format!("h has an interior dip near r = {r}"))
        }
        None => Check::ok(),
    };

    let mut concave = Check::ok();
    'outer: for &a in &ag {
        let mut prev = f64::INFINITY;
        for &r in &rdom.grid(n_r.max(CHECK_GRID)) {
            let v = outsider_marginal(m, a, r);
            if v >= prev {
                concave = Check::fail(format!("du_O/dr is not strictly decreasing at a = {a}, r = {r}"));
                break 'outer;
            }
            prev = v;
        }
    }

    let externalities = classify_externalities(model, &ag, &rg, tol);

    AssumptionReport {
        ranked_incentives: ranked,
        intuitive_mixture: intuitive,
        outsider_concavity: concave,
        externalities,
        monotone_response: curve.monotone(tol),
    }
}

fn classify_externalities(model: &SharedModel, ag: &[f64], rg: &[f64], tol: f64) -> Externalities {
    let m = model.as_ref();
    let (adom, rdom) = (m.actions(), m.decisions());
    let (mut a_pos, mut a_neg, mut o_pos, mut o_neg) = (false, false, false, false);
    for &a in ag {
        for &r in rg {
            let ca = crate::model::central_difference(|y| agent_marginal(m, a, y), r, rdom);
            let co = crate::model::central_difference(|x| outsider_marginal(m, x, r), a, adom);
            a_pos |= ca > tol;
            a_neg |= ca < -tol;
            o_pos |= co > tol;
            o_neg |= co < -tol;
        }
    }
    match (a_pos, a_neg, o_pos, o_neg) {
        (true, false, true, false) => Externalities::Complements,
        (false, true, false, true) => Externalities::Substitutes,
        _ => Externalities::Mixed,
    }
}

/// Everything the builders need about one model: the order, the response
/// curve on the action grid and the assumption verdict.
#[derive(Clone)]
pub struct Setting {
    pub model: SharedModel,
    pub tol: ToleranceSet,
    pub order: AiOrder,
    pub curve: ResponseCurve,
    pub assumptions: AssumptionReport,
    pub n_r: usize,
}

impl Setting {
    pub fn new(model: SharedModel, n_a: usize, n_r: usize, tol: ToleranceSet) -> Result<Self> {
        tol.validate()?;
        if n_a < crate::scenarios::MIN_GRID || n_r < crate::scenarios::MIN_GRID {
            return Err(Error::param("grid", format!("resolution must be at least {}", crate::scenarios::MIN_GRID)));
        }
        check_finite(&model)?;
        let order = AiOrder::new(model.clone(), tol.eq);
        let curve = build_response_curve(&model, &order, n_a, tol.opt)?;
        let assumptions = validate_assumptions(&model, &order, &curve, n_r);
        Ok(Self { model, tol, order, curve, assumptions, n_r })
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let model = cfg.build_model()?;
        Self::new(model, cfg.grid.n_a, cfg.grid.n_r, cfg.tolerances())
    }

    /// Same model on a different action grid.
    pub fn with_grid(&self, n_a: usize) -> Result<Self> {
        Self::new(self.model.clone(), n_a, self.n_r, self.tol)
    }

    pub fn a0(&self) -> f64 {
        self.model.outside_option()
    }

    pub fn h(&self, r: f64) -> f64 {
        self.order.h(r)
    }

    pub fn reply(&self, a: f64) -> Result<f64> {
        pure_reply(self.model.as_ref(), a, self.tol.opt)
    }

    pub fn mixed_reply(&self, mix: &[(f64, f64)]) -> Result<f64> {
        crate::model::best_reply(self.model.as_ref(), mix, self.tol.opt)
    }

    /// `r_bar(a)` at an arbitrary action: grid running max, refined peaks up
    /// to `a`, and the exact reply at `a` itself.
    pub fn bar(&self, a: f64) -> Result<BarReply> {
        let c = &self.curve;
        let a0 = self.a0();
        let i = floor_index(&c.a, a);
        let j = c.bar[i];
        let mut best = if c.a[j] <= a {
            BarReply { source: c.a[j], r: c.r[j], h: c.h[j] }
        } else {
            BarReply { source: a0, r: self.reply(a0)?, h: self.h(self.reply(a0)?) }
        };
        for p in &c.peaks {
            if p.a <= a && p.h > best.h {
                best = BarReply { source: p.a, r: p.r, h: p.h };
            }
        }
        let r = self.reply(a)?;
        let h = self.h(r);
        if h > best.h {
            best = BarReply { source: a, r, h };
        }
        Ok(best)
    }
}

fn check_finite(model: &SharedModel) -> Result<()> {
    let m = model.as_ref();
    for &a in &m.actions().grid(21) {
        for &r in &m.decisions().grid(21) {
            for v in [m.agent(a, r), m.outsider(a, r), m.principal(a, r)] {
                if !v.is_finite() {
                    return Err(Error::NonFinite { at: a });
                }
            }
        }
    }
    Ok(())
}
