//! Exhaustive equilibrium enumeration of the game a finite menu induces
//! between the agent and the outsider, and the implementability tests.

use rayon::prelude::*;
use serde::Serialize;

use crate::duality::Contract;
use crate::error::{Error, Result};
use crate::model::{best_reply, outsider_marginal, pure_reply, PayoffModel};
use crate::numerics::{find_root_1d, linspace};
use crate::order::Setting;
use crate::synthesis::TargetOutcome;

/// Outsider best response to a mixture of agent actions.
pub fn outsider_best_response(setting: &Setting, mix: &[(f64, f64)]) -> Result<f64> {
    setting.mixed_reply(mix)
}

#[derive(Debug, Clone, Copy)]
pub struct EnumOptions {
    /// Largest support searched (1 to 3).
    pub support_cap: usize,
    /// Resolution of the decision grid used to trace the upper envelope.
    pub r_grid: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        Self { support_cap: 2, r_grid: 4001 }
    }
}

pub const MAX_PLANS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportPoint {
    pub plan: usize,
    pub action: f64,
    pub transfer: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumRecord {
    pub support: Vec<SupportPoint>,
    pub r: f64,
    /// Best off-support payoff minus the support payoff. Negative is strict.
    pub gap: f64,
    /// `|r - r(beta)|` with `r(beta)` recomputed from scratch.
    pub residual: f64,
    /// Payoff spread across the support.
    pub indifference: f64,
    pub principal_payoff: f64,
    /// Gap within the equivalence band of zero.
    pub knife_edge: bool,
}

impl EquilibriumRecord {
    pub fn actions(&self) -> Vec<f64> {
        self.support.iter().map(|p| p.action).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Enumeration {
    pub records: Vec<EquilibriumRecord>,
    pub plans: usize,
    pub support_cap: usize,
    pub warnings: Vec<String>,
}

impl Enumeration {
    pub fn count(&self) -> usize {
        self.records.len()
    }

    pub fn knife_edges(&self) -> usize {
        self.records.iter().filter(|r| r.knife_edge).count()
    }

    /// Records as `{support, weights, r, principal_payoff, gap}` rows.
    pub fn report(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .records
            .iter()
            .map(|r| {
                serde_json::json!({
                    "support": r.actions(),
                    "weights": r.support.iter().map(|p| p.weight).collect::<Vec<_>>(),
                    "r": r.r,
                    "principal_payoff": r.principal_payoff,
                    "gap": r.gap,
                    "knife_edge": r.knife_edge,
                })
            })
            .collect();
        serde_json::json!({ "equilibria": rows, "warnings": self.warnings })
    }
}

fn payoffs(model: &dyn PayoffModel, contract: &Contract, r: f64) -> Vec<f64> {
    (0..contract.len()).map(|j| contract.payoff(model, j, r)).collect()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

/// Builds the record for support `(plan, weight)` at decision `r`.
fn record(setting: &Setting, contract: &Contract, support: &[(usize, f64)], r: f64) -> Result<EquilibriumRecord> {
    let m = setting.model.as_ref();
    let plans = contract.plans();
    let vals = payoffs(m, contract, r);
    let on: Vec<f64> = support.iter().map(|&(j, _)| vals[j]).collect();
    let lo = on.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = on.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let off = (0..vals.len())
        .filter(|j| !support.iter().any(|s| s.0 == *j))
        .map(|j| vals[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let mix: Vec<(f64, f64)> = support.iter().map(|&(j, w)| (plans[j].action, w)).collect();
    let fresh = best_reply(m, &mix, setting.tol.opt)?;
    let principal = support
        .iter()
        .map(|&(j, w)| w * (m.principal(plans[j].action, r) + plans[j].transfer))
        .sum();
    let gap = off - lo;
    Ok(EquilibriumRecord {
        support: support
            .iter()
            .map(|&(j, w)| SupportPoint { plan: j, action: plans[j].action, transfer: plans[j].transfer, weight: w })
            .collect(),
        r,
        gap,
        residual: (fresh - r).abs(),
        indifference: hi - lo,
        principal_payoff: principal,
        knife_edge: gap > -setting.tol.eq,
    })
}

/// A switch of the upper envelope of plan payoffs between `j` and `k` at `r`.
#[derive(Debug, Clone, Copy)]
struct Switch {
    r: f64,
    j: usize,
    k: usize,
}

fn trace_switches(
    model: &dyn PayoffModel,
    contract: &Contract,
    lo: f64,
    hi: f64,
    j_lo: usize,
    j_hi: usize,
    depth: u32,
    out: &mut Vec<Switch>,
) {
    if j_lo == j_hi {
        return;
    }
    let g = |y: f64| contract.payoff(model, j_lo, y) - contract.payoff(model, j_hi, y);
    if depth == 0 || hi - lo <= 1e-13 * hi.abs().max(1.0) {
        let r = find_root_1d(g, lo, hi, 0.0).unwrap_or(0.5 * (lo + hi));
        out.push(Switch { r, j: j_lo, k: j_hi });
        return;
    }
    let mid = 0.5 * (lo + hi);
    let j_mid = argmax(&payoffs(model, contract, mid));
    if j_mid == j_lo || j_mid == j_hi {
        // Accept the pairwise crossing unless a third plan is on top there.
        let (g_lo, g_hi) = (g(lo), g(hi));
        if g_lo.signum() != g_hi.signum() || g_lo == 0.0 || g_hi == 0.0 {
            if let Ok(r) = find_root_1d(g, lo, hi, 0.0) {
                let vals = payoffs(model, contract, r);
                let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if top <= vals[j_lo].max(vals[j_hi]) {
                    out.push(Switch { r, j: j_lo, k: j_hi });
                    return;
                }
            }
        }
    }
    trace_switches(model, contract, lo, mid, j_lo, j_mid, depth - 1, out);
    trace_switches(model, contract, mid, hi, j_mid, j_hi, depth - 1, out);
}

/// Weight on `k` making the `(j, k)` mixture's best reply equal `r`, from
/// the outsider's first-order condition.
fn fo_weight(model: &dyn PayoffModel, a_j: f64, a_k: f64, r: f64) -> Option<f64> {
    let fj = outsider_marginal(model, a_j, r);
    let fk = outsider_marginal(model, a_k, r);
    if fj == fk || fj.signum() == fk.signum() {
        return None;
    }
    Some(fj / (fj - fk))
}

pub fn enumerate_equilibria(setting: &Setting, contract: &Contract, opts: EnumOptions) -> Result<Enumeration> {
    if contract.len() > MAX_PLANS {
        return Err(Error::InvalidContract(format!("{} plans exceed the limit of {MAX_PLANS}", contract.len())));
    }
    if !(1..=3).contains(&opts.support_cap) {
        return Err(Error::param("support_cap", "must be 1, 2 or 3"));
    }
    let m = setting.model.as_ref();
    let plans = contract.plans();
    let tol = setting.tol;
    let mut warnings = Vec::new();

    let replies: Vec<f64> =
        plans.par_iter().map(|p| pure_reply(m, p.action, tol.opt)).collect::<Result<_>>()?;
    let pure: Vec<Option<EquilibriumRecord>> = (0..plans.len())
        .into_par_iter()
        .map(|j| {
            let vals = payoffs(m, contract, replies[j]);
            let best_other = (0..vals.len()).filter(|&k| k != j).map(|k| vals[k]).fold(f64::NEG_INFINITY, f64::max);
            if best_other - vals[j] <= tol.gap {
                record(setting, contract, &[(j, 1.0)], replies[j]).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<EquilibriumRecord> = pure.into_iter().flatten().collect();

    if opts.support_cap >= 2 && plans.len() >= 2 {
        let r_lo = replies.iter().copied().fold(f64::INFINITY, f64::min);
        let r_hi = replies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut switches = Vec::new();
        if r_hi > r_lo {
            let grid = linspace(r_lo, r_hi, opts.r_grid.max(3));
            let tops: Vec<usize> = grid.par_iter().map(|&y| argmax(&payoffs(m, contract, y))).collect();
            let cells: Vec<Vec<Switch>> = (0..grid.len() - 1)
                .into_par_iter()
                .map(|i| {
                    let mut out = Vec::new();
                    trace_switches(m, contract, grid[i], grid[i + 1], tops[i], tops[i + 1], 60, &mut out);
                    out
                })
                .collect();
            switches = cells.into_iter().flatten().collect();
            // A tie exactly on a grid node shows up as a change of argmax
            // between neighbours; plateaus of exact ties are caught here too.
            for (i, &y) in grid.iter().enumerate() {
                let vals = payoffs(m, contract, y);
                let top = tops[i];
                for k in 0..vals.len() {
                    if k != top && vals[k] >= vals[top] - tol.gap {
                        switches.push(Switch { r: y, j: top.min(k), k: top.max(k) });
                    }
                }
            }
        }

        let mixed: Vec<Vec<EquilibriumRecord>> = switches
            .par_iter()
            .map(|sw| mixed_at_switch(setting, contract, sw, opts.support_cap))
            .collect::<Result<_>>()?;
        records.extend(mixed.into_iter().flatten());
    }

    records.retain(|r| r.gap <= tol.gap && r.residual <= 1e3 * tol.opt.max(tol.root));
    records.sort_by(|x, y| {
        let (a, b) = (x.actions(), y.actions());
        a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal).then(x.support.len().cmp(&y.support.len()))
    });
    records.dedup_by(|x, y| {
        x.support.len() == y.support.len()
            && x.support.iter().zip(&y.support).all(|(p, q)| p.plan == q.plan && (p.weight - q.weight).abs() < 1e-9)
    });
    if opts.support_cap < 3 && records.iter().any(|r| r.support.len() == 2 && r.knife_edge) {
        warnings.push("knife-edge mixed equilibria found; larger supports were not searched".into());
    }
    Ok(Enumeration { records, plans: plans.len(), support_cap: opts.support_cap, warnings })
}

fn mixed_at_switch(setting: &Setting, contract: &Contract, sw: &Switch, cap: usize) -> Result<Vec<EquilibriumRecord>> {
    let m = setting.model.as_ref();
    let plans = contract.plans();
    let (j, k) = if plans[sw.j].action < plans[sw.k].action { (sw.j, sw.k) } else { (sw.k, sw.j) };
    let (a_j, a_k) = (plans[j].action, plans[k].action);
    let mut out = Vec::new();
    let Some(w0) = fo_weight(m, a_j, a_k, sw.r) else {
        return Ok(out);
    };
    if !(w0 > 1e-12 && w0 < 1.0 - 1e-12) {
        return Ok(out);
    }
    // Polish: indifference as a function of the weight.
    let g = |w: f64| match best_reply(m, &[(a_j, 1.0 - w), (a_k, w)], setting.tol.opt) {
        Ok(r) => contract.payoff(m, j, r) - contract.payoff(m, k, r),
        Err(_) => f64::NAN,
    };
    let span = 1e-6_f64.max(1e-3 * w0.min(1.0 - w0));
    let (lo, hi) = ((w0 - span).max(0.0), (w0 + span).min(1.0));
    let w = match find_root_1d(g, lo, hi, 1e-15) {
        Ok(w) => w,
        Err(_) => w0,
    };
    let r = best_reply(m, &[(a_j, 1.0 - w), (a_k, w)], setting.tol.opt)?;
    let rec = record(setting, contract, &[(j, 1.0 - w), (k, w)], r)?;
    if rec.indifference <= 1e3 * setting.tol.gap {
        out.push(rec);
    }

    if cap >= 3 {
        let vals = payoffs(m, contract, sw.r);
        let top = vals[j].max(vals[k]);
        let tied: Vec<usize> = (0..vals.len()).filter(|&l| l != j && l != k && vals[l] >= top - setting.tol.gap).collect();
        for &l in tied.iter().take(8) {
            let idx = [j, k, l];
            let f: Vec<f64> = idx.iter().map(|&i| outsider_marginal(m, plans[i].action, sw.r)).collect();
            let pos: Vec<usize> = (0..3).filter(|&i| f[i] > 0.0).collect();
            let neg: Vec<usize> = (0..3).filter(|&i| f[i] < 0.0).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let (lp, ln) = (1.0 / pos.len() as f64, 1.0 / neg.len() as f64);
            let mut ws = [0.0; 3];
            for &i in &pos {
                ws[i] = lp / f[i].abs();
            }
            for &i in &neg {
                ws[i] = ln / f[i].abs();
            }
            let total: f64 = ws.iter().sum();
            let support: Vec<(usize, f64)> = (0..3).filter(|&i| ws[i] > 0.0).map(|i| (idx[i], ws[i] / total)).collect();
            if support.len() < 3 {
                continue;
            }
            let mix: Vec<(f64, f64)> = support.iter().map(|&(i, w)| (plans[i].action, w)).collect();
            let r3 = best_reply(m, &mix, setting.tol.opt)?;
            let mut rec = record(setting, contract, &support, r3)?;
            if rec.indifference <= 1e3 * setting.tol.gap {
                rec.knife_edge = true;
                out.push(rec);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Certification {
    pub unique: bool,
    pub count: usize,
    pub matches_target: bool,
    pub cell: f64,
    pub enumeration: Enumeration,
}

/// True iff the menu has exactly one equilibrium and it plays `target`
/// within one grid cell in actions and `1e-3` in weights.
pub fn certify_unique_implementation(
    setting: &Setting,
    contract: &Contract,
    target: &TargetOutcome,
    opts: EnumOptions,
) -> Result<Certification> {
    let e = enumerate_equilibria(setting, contract, opts)?;
    let cell = grid_cell(setting, contract);
    let matches = e.count() == 1 && {
        let rec = &e.records[0];
        rec.support.len() == target.support.len()
            && rec
                .support
                .iter()
                .zip(&target.support)
                .all(|(p, &(a, w))| (p.action - a).abs() <= cell && (p.weight - w).abs() <= 1e-3)
    };
    Ok(Certification { unique: matches, count: e.count(), matches_target: matches, cell, enumeration: e })
}

/// Largest gap between neighbouring plan actions, or the action-grid cell
/// if the menu is a single plan.
pub fn grid_cell(setting: &Setting, contract: &Contract) -> f64 {
    let c = &setting.curve.a;
    let base = (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64;
    let p = contract.plans();
    let spacing = p.windows(2).map(|w| w[1].action - w[0].action).fold(0.0, f64::max);
    base.max(if p.len() > 2 { spacing } else { 0.0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct Implementability {
    pub implementable: bool,
    pub failed: Vec<String>,
}

/// Support size at most two, `r(a_lo) >= r(alpha) >= r(a_hi)` in the
/// incentive order, and a unique weight on the support producing `r(alpha)`.
pub fn is_fully_implementable(setting: &Setting, target: &TargetOutcome) -> Result<Implementability> {
    let mut failed = Vec::new();
    if target.support.len() > 2 {
        failed.push("support has more than two actions".to_string());
    }
    let tol = setting.tol.eq;
    let h_alpha = setting.h(target.reply);
    let h_lo = setting.h(setting.reply(target.a_lo())?);
    let h_hi = setting.h(setting.reply(target.a_hi())?);
    if h_lo < h_alpha - tol {
        failed.push(format!(
            "reply to the lowest action ranks below the target reply (h = {h_lo:.6} < {h_alpha:.6})"
        ));
    }
    if h_alpha < h_hi - tol {
        failed.push(format!(
            "target reply ranks below the reply to the highest action (h = {h_alpha:.6} < {h_hi:.6})"
        ));
    }
    if target.support.len() == 2 {
        let (a1, a2) = (target.support[0].0, target.support[1].0);
        let w = target.support[1].1;
        let d = |v: f64| -> f64 {
            best_reply(setting.model.as_ref(), &[(a1, 1.0 - v), (a2, v)], setting.tol.opt)
                .map(|r| r - target.reply)
                .unwrap_or(f64::NAN)
        };
        let ws = linspace(0.0, 1.0, 1001);
        let vals: Vec<f64> = ws.iter().map(|&v| d(v)).collect();
        let near = |v: f64| (v - w).abs() <= 1e-3;
        let flat = 10.0 * setting.tol.opt;
        let other = (0..ws.len()).any(|i| !near(ws[i]) && vals[i].abs() <= flat)
            || ws.windows(2).zip(vals.windows(2)).any(|(x, y)| {
                !near(x[0]) && !near(x[1]) && !(x[0] < w && x[1] > w) && y[0].signum() != y[1].signum()
            });
        if other {
            failed.push("another weight on the same support induces the same reply".into());
        }
    }
    Ok(Implementability { implementable: failed.is_empty(), failed })
}

/// Whether partial implementation is exposed to strategic uncertainty:
/// `h(r(alpha)) > h(r(a0))`.
pub fn needs_robustness(setting: &Setting, target: &TargetOutcome) -> Result<bool> {
    let h0 = setting.h(setting.reply(setting.a0())?);
    Ok(setting.h(target.reply) > h0 + setting.tol.eq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{ScenarioConfig, ScenarioKind};
    use crate::synthesis::{build_optimal_contract, build_partial_contract, discretize_menu};

    fn setting(kind: ScenarioKind, n: usize) -> Setting {
        let mut cfg = ScenarioConfig::builtin(kind);
        cfg.grid.n_a = n;
        Setting::from_config(&cfg).unwrap()
    }

    #[test]
    fn mixed_reply_examples() {
        let s = setting(ScenarioKind::Cournot, 51);
        let r = outsider_best_response(&s, &[(0.5, 1.0)]).unwrap();
        assert!((r - 0.25).abs() < 1e-12);
        let r = outsider_best_response(&s, &[(1.0 / 3.0, 0.5), (0.5, 0.5)]).unwrap();
        assert!((r - 7.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn null_contract_has_one_equilibrium() {
        let s = setting(ScenarioKind::Cournot, 51);
        let c = Contract::null(s.model.as_ref());
        let t = TargetOutcome::pure(&s, s.a0()).unwrap();
        let cert = certify_unique_implementation(&s, &c, &t, EnumOptions::default()).unwrap();
        assert!(cert.unique);
        assert!((cert.enumeration.records[0].r - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn partial_menu_has_two_equilibria() {
        let s = setting(ScenarioKind::Cournot, 51);
        let t = TargetOutcome::pure(&s, 0.5).unwrap();
        let c = build_partial_contract(&s, &t).unwrap();
        let e = enumerate_equilibria(&s, &c, EnumOptions::default()).unwrap();
        assert!(e.count() >= 2, "{:?}", e.records);
        assert!(e.records.iter().any(|r| r.support.len() == 1 && (r.support[0].action - 1.0 / 3.0).abs() < 1e-12));
        assert!(e.records.iter().any(|r| r.support.len() == 1 && (r.support[0].action - 0.5).abs() < 1e-12));
        let cert = certify_unique_implementation(&s, &c, &t, EnumOptions::default()).unwrap();
        assert!(!cert.unique);
    }

    #[test]
    fn robust_menu_is_unique() {
        let s = setting(ScenarioKind::Cournot, 501);
        let t = TargetOutcome::pure(&s, 0.5).unwrap();
        let res = build_optimal_contract(&s, &t).unwrap();
        let menu = discretize_menu(&res, 1, 1e-3, 501).unwrap();
        let cert = certify_unique_implementation(&s, &menu, &t, EnumOptions::default()).unwrap();
        assert!(cert.unique, "{:?}", cert.enumeration.records);
        let rec = &cert.enumeration.records[0];
        assert!((rec.r - 0.25).abs() < 1e-9);
    }

    #[test]
    fn exact_schedule_leaves_a_knife_edge_at_the_outside_option() {
        let s = setting(ScenarioKind::Cournot, 501);
        let t = TargetOutcome::pure(&s, 0.5).unwrap();
        let res = build_optimal_contract(&s, &t).unwrap();
        let menu = discretize_menu(&res, 1, 0.0, 501).unwrap();
        let e = enumerate_equilibria(&s, &menu, EnumOptions::default()).unwrap();
        assert!(e.records.iter().any(|r| r.knife_edge && (r.support[0].action - s.a0()).abs() < 1e-12), "{:?}", e.records);
    }

    #[test]
    fn implementability() {
        let s = setting(ScenarioKind::Cournot, 51);
        let t = TargetOutcome::pure(&s, 0.7).unwrap();
        assert!(is_fully_implementable(&s, &t).unwrap().implementable);
        let t = TargetOutcome::new(&s, &[(0.4, 0.5), (0.6, 0.5)]).unwrap();
        let v = is_fully_implementable(&s, &t).unwrap();
        assert!(!v.implementable);
        assert_eq!(v.failed.len(), 2, "{v:?}");

        let b = setting(ScenarioKind::Boycott, 51);
        let t = TargetOutcome::new(&b, &[(0.3, 0.5), (0.7, 0.5)]).unwrap();
        assert!(is_fully_implementable(&b, &t).unwrap().implementable);
    }

    #[test]
    fn robustness_criterion() {
        let s = setting(ScenarioKind::Cournot, 51);
        assert!(needs_robustness(&s, &TargetOutcome::pure(&s, 0.5).unwrap()).unwrap());
        assert!(!needs_robustness(&s, &TargetOutcome::pure(&s, s.a0()).unwrap()).unwrap());
        let b = setting(ScenarioKind::Boycott, 51);
        for a in [0.1, 0.5, 0.9] {
            assert!(!needs_robustness(&b, &TargetOutcome::pure(&b, a).unwrap()).unwrap());
        }
    }

    #[test]
    fn three_point_supports_are_knife_edges() {
        // Three plans tied at one decision with replies on both sides.
        let s = setting(ScenarioKind::Cournot, 51);
        let m = s.model.as_ref();
        let r = 0.3;
        let plans: Vec<_> = [0.45, 0.5]
            .iter()
            .map(|&a| crate::duality::Plan { action: a, transfer: m.agent(a, r) - m.agent(s.a0(), r) })
            .collect();
        let c = Contract::new(m, plans, crate::duality::Generator::Custom).unwrap();
        let e = enumerate_equilibria(&s, &c, EnumOptions { support_cap: 3, ..Default::default() }).unwrap();
        assert!(e.records.iter().any(|x| x.support.len() == 3 && x.knife_edge), "{:?}", e.records);
    }
}
