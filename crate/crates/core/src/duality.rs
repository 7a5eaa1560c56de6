//! Contracts and their dual objects: the agent value `V(r; M)`, the dual
//! transfer `T(a; M)` and the dual reply set `R(a; M)`, plus the invariant
//! checks that a fully implementing contract must pass.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{agent_marginal, central_difference, PayoffModel};
use crate::numerics::{floor_index, maximize_concave_1d, Interval};
use crate::order::{csv_err, fmt, Setting};
use crate::synthesis::TargetOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub action: f64,
    pub transfer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Optimal,
    Partial,
    FullAccess,
    Custom,
}

/// A finite menu of plans sorted by action. Always contains `(a0, 0)`.
#[derive(Debug, Clone, Serialize)]
pub struct Contract {
    plans: Vec<Plan>,
    pub generator: Generator,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

const SAME_ACTION: f64 = 1e-12;

impl Contract {
    pub fn new(model: &dyn PayoffModel, plans: impl IntoIterator<Item = Plan>, generator: Generator) -> Result<Self> {
        let dom = model.actions();
        let a0 = model.outside_option();
        let mut v: Vec<Plan> = Vec::new();
        for p in plans {
            if !p.action.is_finite() || !p.transfer.is_finite() {
                return Err(Error::InvalidContract(format!("non-finite plan ({}, {})", p.action, p.transfer)));
            }
            if !dom.contains_approx(p.action) {
                return Err(Error::InvalidContract(format!(
                    "action {} outside [{}, {}]",
                    p.action, dom.lo, dom.hi
                )));
            }
            v.push(Plan { action: dom.clamp(p.action), transfer: p.transfer });
        }
        v.push(Plan { action: a0, transfer: 0.0 });
        v.sort_by(|x, y| x.action.total_cmp(&y.action).then(x.transfer.total_cmp(&y.transfer)));
        let scale = dom.width().max(1.0);
        v.dedup_by(|later, kept| (later.action - kept.action).abs() <= SAME_ACTION * scale);
        let null = v.iter().find(|p| (p.action - a0).abs() <= SAME_ACTION * scale).copied();
        match null {
            Some(p) if p.transfer == 0.0 => {}
            Some(p) => {
                return Err(Error::InvalidContract(format!(
                    "the plan at the outside option must carry zero transfer, got {}",
                    p.transfer
                )))
            }
            None => unreachable!("null plan inserted above"),
        }
        for p in v.iter_mut() {
            if (p.action - a0).abs() <= SAME_ACTION * scale {
                p.action = a0;
            }
        }
        Ok(Self { plans: v, generator, params: None })
    }

    pub fn null(model: &dyn PayoffModel) -> Self {
        Self::new(model, [], Generator::Custom).expect("null contract is valid")
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = Some(params);
        self
    }

    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    /// Index of the plan whose action is closest to `a`.
    pub fn nearest(&self, a: f64) -> usize {
        let acts: Vec<f64> = self.plans.iter().map(|p| p.action).collect();
        let i = floor_index(&acts, a);
        if i + 1 < acts.len() && (acts[i + 1] - a).abs() < (a - acts[i]).abs() {
            i + 1
        } else {
            i
        }
    }

    /// Agent payoff from plan `j` against decision `r`.
    #[inline]
    pub fn payoff(&self, model: &dyn PayoffModel, j: usize, r: f64) -> f64 {
        let p = self.plans[j];
        model.agent(p.action, r) - p.transfer
    }

    /// CSV columns `action, transfer`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["action", "transfer"]).map_err(csv_err)?;
        for p in &self.plans {
            w.write_record([fmt(p.action), fmt(p.transfer)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(model: &dyn PayoffModel, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut plans = Vec::new();
        for rec in rdr.deserialize::<Plan>() {
            plans.push(rec.map_err(|e| Error::InvalidContract(e.to_string()))?);
        }
        Self::new(model, plans, Generator::Custom)
    }
}

/// `V(r; M)` and the plans attaining it within `tol`.
pub fn agent_value(model: &dyn PayoffModel, contract: &Contract, r: f64, tol: f64) -> (f64, Vec<usize>) {
    let vals: Vec<f64> = (0..contract.len()).map(|j| contract.payoff(model, j, r)).collect();
    let v = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let arg = (0..vals.len()).filter(|&j| vals[j] >= v - tol).collect();
    (v, arg)
}

fn value(model: &dyn PayoffModel, contract: &Contract, r: f64) -> f64 {
    (0..contract.len()).map(|j| contract.payoff(model, j, r)).fold(f64::NEG_INFINITY, f64::max)
}

/// `T(a; M)` with the dual reply set summarized by its extreme members in
/// the incentive order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualPoint {
    pub a: f64,
    pub t: f64,
    pub h_lo: f64,
    pub h_hi: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

impl DualPoint {
    pub fn width(&self) -> f64 {
        self.h_hi - self.h_lo
    }
}

/// Precomputed `V(.; M)` on the decision grid.
pub struct Dual<'a> {
    setting: &'a Setting,
    contract: &'a Contract,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
}

impl<'a> Dual<'a> {
    pub fn new(setting: &'a Setting, contract: &'a Contract) -> Self {
        let m = setting.model.as_ref();
        let r = m.decisions().grid(setting.n_r);
        let v = r.par_iter().map(|&y| value(m, contract, y)).collect();
        Self { setting, contract, r, v }
    }

    pub fn value(&self, r: f64) -> f64 {
        value(self.setting.model.as_ref(), self.contract, r)
    }

    pub fn transfer(&self, a: f64) -> Result<DualPoint> {
        let m = self.setting.model.as_ref();
        let obj_grid: Vec<f64> = self.r.iter().zip(&self.v).map(|(&y, &v)| m.agent(a, y) - v).collect();
        let k = (0..obj_grid.len()).fold(0, |b, i| if obj_grid[i] > obj_grid[b] { i } else { b });
        let obj = |y: f64| m.agent(a, y) - self.value(y);
        let lo = self.r[k.saturating_sub(1)];
        let hi = self.r[(k + 1).min(self.r.len() - 1)];
        let (mut r_star, mut t) = maximize_concave_1d(obj, Interval { lo, hi }, self.setting.tol.opt * 1e-3)?;
        if obj_grid[k] > t {
            r_star = self.r[k];
            t = obj_grid[k];
        }

        let band = t - self.setting.tol.reply;
        let inside = |y: f64| obj(y) >= band;
        let mut cands = vec![r_star];
        let mut i = 0;
        while i < obj_grid.len() {
            if obj_grid[i] < band {
                i += 1;
                continue;
            }
            let start = i;
            while i + 1 < obj_grid.len() && obj_grid[i + 1] >= band {
                i += 1;
            }
            cands.push(self.r[start]);
            cands.push(self.r[i]);
            if start > 0 {
                cands.push(edge(&inside, self.r[start], self.r[start - 1]));
            }
            if i + 1 < obj_grid.len() {
                cands.push(edge(&inside, self.r[i], self.r[i + 1]));
            }
            i += 1;
        }
        // The polished maximizer may sit in a band too thin for the grid.
        let step = self.r[1] - self.r[0];
        let left = (r_star - step).max(self.r[0]);
        let right = (r_star + step).min(self.r[self.r.len() - 1]);
        if !inside(left) {
            cands.push(edge(&inside, r_star, left));
        }
        if !inside(right) {
            cands.push(edge(&inside, r_star, right));
        }

        let mut lo = (f64::INFINITY, r_star);
        let mut hi = (f64::NEG_INFINITY, r_star);
        for &y in &cands {
            let h = self.setting.h(y);
            if h < lo.0 {
                lo = (h, y);
            }
            if h > hi.0 {
                hi = (h, y);
            }
        }
        Ok(DualPoint { a, t, h_lo: lo.0, h_hi: hi.0, r_lo: lo.1, r_hi: hi.1 })
    }
}

/// Boundary between a member `inner` and a non-member `outer` of a
/// superlevel set, by bisection.
fn edge<F: Fn(f64) -> bool>(inside: &F, mut inner: f64, mut outer: f64) -> f64 {
    for _ in 0..60 {
        let m = 0.5 * (inner + outer);
        if inside(m) {
            inner = m;
        } else {
            outer = m;
        }
    }
    inner
}

pub fn dual_transfer(setting: &Setting, contract: &Contract, a: f64) -> Result<DualPoint> {
    Dual::new(setting, contract).transfer(a)
}

#[derive(Debug, Clone, Serialize)]
pub struct DualProfile {
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    pub points: Vec<DualPoint>,
}

pub fn dual_profile(setting: &Setting, contract: &Contract, a_grid: &[f64]) -> Result<DualProfile> {
    let dual = Dual::new(setting, contract);
    let points = a_grid.par_iter().map(|&a| dual.transfer(a)).collect::<Result<Vec<_>>>()?;
    Ok(DualProfile { r: dual.r, v: dual.v, points })
}

impl DualProfile {
    /// CSV columns `a, T, h_lo, h_hi`.
    pub fn write_transfer_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "T", "h_lo", "h_hi"]).map_err(csv_err)?;
        for p in &self.points {
            w.write_record([fmt(p.a), fmt(p.t), fmt(p.h_lo), fmt(p.h_hi)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV columns `r, V`.
    pub fn write_value_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "V"]).map_err(csv_err)?;
        for (r, v) in self.r.iter().zip(&self.v) {
            w.write_record([fmt(*r), fmt(*v)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimCheck {
    pub pass: bool,
    pub checked: usize,
    pub failures: usize,
    /// Largest violation seen.
    pub worst: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<f64>,
}

impl ClaimCheck {
    fn new() -> Self {
        Self { pass: true, checked: 0, failures: 0, worst: 0.0, first_failure: None }
    }

    fn record(&mut self, at: f64, violation: f64, tol: f64) {
        self.checked += 1;
        if violation > tol {
            self.failures += 1;
            self.pass = false;
            self.first_failure.get_or_insert(at);
        }
        self.worst = self.worst.max(violation);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimReport {
    /// False when the contract was not certified to fully implement the target.
    pub certified: bool,
    pub on_path_transfers: ClaimCheck,
    pub envelope: ClaimCheck,
    pub envelope_share: f64,
    pub below_target_reply: ClaimCheck,
    pub below_cumulative_reply: ClaimCheck,
    pub monotone_replies: ClaimCheck,
    pub plan_bound: ClaimCheck,
    pub value_lipschitz: ClaimCheck,
    pub transfer_lipschitz: ClaimCheck,
}

impl ClaimReport {
    pub fn all_pass(&self) -> bool {
        self.on_path_transfers.pass
            && self.envelope.pass
            && self.below_target_reply.pass
            && self.below_cumulative_reply.pass
            && self.monotone_replies.pass
            && self.plan_bound.pass
            && self.value_lipschitz.pass
            && self.transfer_lipschitz.pass
    }
}

/// Required share of envelope matches among checked points.
pub const ENVELOPE_SHARE: f64 = 0.99;

/// Runs the dual-side invariants on an action grid of `n_a` points.
///
/// The reply bounds are checked strictly below the top (resp. bottom)
/// on-path action: at those actions themselves the top plan's optimal
/// plateau may include replies below `r(alpha)` in the incentive order.
pub fn verify_duality_claims(
    setting: &Setting,
    contract: &Contract,
    target: &TargetOutcome,
    n_a: usize,
    tol: f64,
    certified: bool,
) -> Result<ClaimReport> {
    let m = setting.model.as_ref();
    let grid = m.actions().grid(n_a);
    let profile = dual_profile(setting, contract, &grid)?;
    let pts = &profile.points;
    let h_alpha = setting.h(target.reply);
    let width_scale = m.actions().width();

    let mut c1 = ClaimCheck::new();
    let dual = Dual::new(setting, contract);
    for &(a, _) in &target.support {
        let j = contract.nearest(a);
        let p = contract.plans()[j];
        let d = dual.transfer(p.action)?;
        c1.record(p.action, (d.t - p.transfer).abs(), tol);
    }

    let mut c2 = ClaimCheck::new();
    let delta = 1e-6 * width_scale;
    let interior: Vec<&DualPoint> = pts[1..pts.len() - 1].iter().collect();
    let slopes: Vec<Option<(f64, f64)>> = interior
        .par_iter()
        .map(|p| {
            if p.width() > tol {
                return Ok(None);
            }
            let up = dual.transfer(p.a + delta)?.t;
            let down = dual.transfer(p.a - delta)?.t;
            let slope = (up - down) / (2.0 * delta);
            let m_lo = agent_marginal(m, p.a, p.r_lo);
            let m_hi = agent_marginal(m, p.a, p.r_hi);
            let violation = (m_lo.min(m_hi) - slope).max(slope - m_lo.max(m_hi)).max(0.0);
            Ok(Some((p.a, violation)))
        })
        .collect::<Result<_>>()?;
    for (a, violation) in slopes.into_iter().flatten() {
        c2.record(a, violation, 1e-4);
    }
    let share = if c2.checked == 0 { 1.0 } else { 1.0 - c2.failures as f64 / c2.checked as f64 };
    c2.pass = share >= ENVELOPE_SHARE;

    let mut c3 = ClaimCheck::new();
    let mut c4 = ClaimCheck::new();
    for p in pts {
        if p.a < target.a_hi() {
            c3.record(p.a, p.h_hi - h_alpha, tol);
        }
        if p.a < target.a_lo() {
            let bar = setting.bar(p.a)?;
            c4.record(p.a, p.h_hi - bar.h, tol);
        }
    }

    let mut l2 = ClaimCheck::new();
    for w in pts.windows(2) {
        l2.record(w[1].a, w[0].h_hi - w[1].h_lo, tol);
    }

    let mut bound = ClaimCheck::new();
    let plan_pts: Vec<(Plan, f64)> = contract
        .plans()
        .par_iter()
        .map(|p| dual.transfer(p.action).map(|d| (*p, d.t)))
        .collect::<Result<_>>()?;
    for (p, t) in plan_pts {
        bound.record(p.action, t - p.transfer, tol);
    }

    let (l_a, l_r) = lipschitz_constants(m);
    let mut lv = ClaimCheck::new();
    for i in 1..profile.r.len() {
        let s = (profile.v[i] - profile.v[i - 1]).abs() / (profile.r[i] - profile.r[i - 1]);
        lv.record(profile.r[i], s - l_r, tol + 1e-3 * l_r);
    }
    let mut lt = ClaimCheck::new();
    for w in pts.windows(2) {
        let s = (w[1].t - w[0].t).abs() / (w[1].a - w[0].a);
        lt.record(w[1].a, s - l_a, tol + 1e-3 * l_a);
    }

    Ok(ClaimReport {
        certified,
        on_path_transfers: c1,
        envelope: c2,
        envelope_share: share,
        below_target_reply: c3,
        below_cumulative_reply: c4,
        monotone_replies: l2,
        plan_bound: bound,
        value_lipschitz: lv,
        transfer_lipschitz: lt,
    })
}

/// Grid estimates of `max |du_A/da|` and `max |du_A/dr|` over the rectangle.
pub fn lipschitz_constants(model: &dyn PayoffModel) -> (f64, f64) {
    let (adom, rdom) = (model.actions(), model.decisions());
    let mut la: f64 = 0.0;
    let mut lr: f64 = 0.0;
    for &a in &adom.grid(101) {
        for &r in &rdom.grid(101) {
            la = la.max(agent_marginal(model, a, r).abs());
            lr = lr.max(central_difference(|y| model.agent(a, y), r, rdom).abs());
        }
    }
    (la, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{ScenarioConfig, ScenarioKind};
    use crate::synthesis::{build_optimal_contract, build_partial_contract, discretize_menu, TargetOutcome};

    fn cournot(n: usize) -> Setting {
        let mut cfg = ScenarioConfig::builtin(ScenarioKind::Cournot);
        cfg.grid.n_a = n;
        Setting::from_config(&cfg).unwrap()
    }

    #[test]
    fn agent_value_examples() {
        let s = cournot(101);
        let m = s.model.as_ref();
        let c = Contract::null(m);
        let (v, idx) = agent_value(m, &c, 1.0 / 3.0, 1e-12);
        assert!((v - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(idx, vec![0]);

        let t = TargetOutcome::pure(&s, 0.5).unwrap();
        let c = build_partial_contract(&s, &t).unwrap();
        let (_, idx) = agent_value(m, &c, 0.25, 1e-12);
        let j = c.nearest(0.5);
        assert!(idx.contains(&j), "{idx:?}");
    }

    #[test]
    fn null_contract_dual() {
        let s = cournot(101);
        let c = Contract::null(s.model.as_ref());
        assert!(dual_transfer(&s, &c, s.a0()).unwrap().t.abs() < 1e-10);
        let d = dual_transfer(&s, &c, 0.5).unwrap();
        assert!((d.t - 1.0 / 36.0).abs() < 1e-8, "{d:?}");
    }

    #[test]
    fn claims_on_robust_and_partial_menus() {
        let s = cournot(201);
        let t = TargetOutcome::pure(&s, 0.5).unwrap();
        let res = build_optimal_contract(&s, &t).unwrap();
        let menu = discretize_menu(&res, 1, 1e-3, 501).unwrap();
        let rep = verify_duality_claims(&s, &menu, &t, 201, 1e-6, true).unwrap();
        assert!(rep.all_pass(), "{rep:#?}");

        let partial = build_partial_contract(&s, &t).unwrap();
        let rep = verify_duality_claims(&s, &partial, &t, 201, 1e-6, false).unwrap();
        assert!(!rep.below_cumulative_reply.pass, "{rep:#?}");
    }

    #[test]
    fn csv_roundtrip() {
        let s = cournot(101);
        let m = s.model.as_ref();
        let c = Contract::new(m, [Plan { action: 0.5, transfer: -0.02 }, Plan { action: 0.4, transfer: -0.01 }], Generator::Custom).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = Contract::read_csv(m, buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (x, y) in c.plans().iter().zip(back.plans()) {
            assert!((x.action - y.action).abs() < 1e-12 && (x.transfer - y.transfer).abs() < 1e-12);
        }
    }
}
