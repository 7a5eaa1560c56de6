//! Contract synthesis: the robustly optimal transfer schedule, its finite
//! approximating menus, the partial-implementation menu, the full-access
//! variant and the value bound.

use std::sync::Arc;

use serde::Serialize;

use crate::duality::{Contract, Generator, Plan};
use crate::error::{Error, Result};
use crate::model::{agent_marginal, Mirrored, Restricted, SharedModel};
use crate::numerics::{find_root_1d, integrate_1d, linspace};
use crate::order::{AssumptionReport, Setting};

/// Agent mixed action with at most two support points and its induced reply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetOutcome {
    /// `(action, weight)`, sorted by action.
    pub support: Vec<(f64, f64)>,
    pub reply: f64,
}

const WEIGHT_TOL: f64 = 1e-9;

impl TargetOutcome {
    pub fn new(setting: &Setting, support: &[(f64, f64)]) -> Result<Self> {
        if support.is_empty() || support.len() > 2 {
            return Err(Error::InvalidTarget(format!("support must have 1 or 2 points, got {}", support.len())));
        }
        let dom = setting.model.actions();
        let mut s: Vec<(f64, f64)> = Vec::with_capacity(support.len());
        for &(a, w) in support {
            if !dom.contains_approx(a) {
                return Err(Error::InvalidTarget(format!("action {a} outside [{}, {}]", dom.lo, dom.hi)));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidTarget(format!("weight {w} must be positive")));
            }
            s.push((dom.clamp(a), w));
        }
        let total: f64 = s.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidTarget(format!("weights sum to {total}, not 1")));
        }
        s.sort_by(|x, y| x.0.total_cmp(&y.0));
        if s.len() == 2 && s[1].0 - s[0].0 <= 1e-12 * dom.width().max(1.0) {
            return Err(Error::InvalidTarget("support actions must be distinct".into()));
        }
        for p in s.iter_mut() {
            p.1 /= total;
        }
        let reply = setting.mixed_reply(&s)?;
        Ok(Self { support: s, reply })
    }

    pub fn pure(setting: &Setting, a: f64) -> Result<Self> {
        Self::new(setting, &[(a, 1.0)])
    }

    /// Lowest on-path action.
    pub fn a_lo(&self) -> f64 {
        self.support[0].0
    }

    /// Highest on-path action.
    pub fn a_hi(&self) -> f64 {
        self.support[self.support.len() - 1].0
    }

    pub fn is_pure(&self) -> bool {
        self.support.len() == 1
    }

    pub fn contains(&self, a: f64, tol: f64) -> bool {
        self.support.iter().any(|&(x, _)| (x - a).abs() <= tol)
    }
}

/// Closed interval of offered actions below the lowest on-path action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueBound {
    pub u0: f64,
    pub t_bar: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Knot {
    pub a: f64,
    pub transfer: f64,
    pub marginal: f64,
    pub h_star: f64,
    pub member: bool,
    /// Partial-implementation transfer `u_A(a, r(alpha)) - u_A(a0, r(alpha))`.
    pub partial_transfer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Robust,
    Partial,
    FullAccess,
}

#[derive(Clone, Serialize)]
pub struct SynthesisResult {
    pub mode: Mode,
    pub target: TargetOutcome,
    pub a0: f64,
    pub h_target: f64,
    /// Offered actions strictly below the lowest on-path action.
    pub segments: Vec<Segment>,
    /// Isolated offered actions below the lowest on-path action.
    pub isolated: Vec<f64>,
    /// Where `h(r_bar)` first reaches `h(r(alpha))` (gap starts).
    pub crossings: Vec<f64>,
    /// Later actions whose own reply matches `h(r(alpha))`, at or below the
    /// lowest on-path action.
    pub twins: Vec<f64>,
    pub kinks: Vec<f64>,
    pub bound: ValueBound,
    pub knots: Vec<Knot>,
    pub assumptions: AssumptionReport,
    pub diagnostic_only: bool,
    /// Full-access targets below the outside option are solved on `-a`.
    pub mirrored: bool,
    #[serde(skip)]
    inner: Arc<Setting>,
    /// Model the menus are expressed in.
    #[serde(skip)]
    pub user: SharedModel,
    #[serde(skip)]
    clip_peaks: Vec<(f64, f64)>,
}

impl std::fmt::Debug for SynthesisResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SynthesisResult")
            .field("mode", &self.mode)
            .field("target", &self.target)
            .field("segments", &self.segments)
            .field("isolated", &self.isolated)
            .field("bound", &self.bound)
            .finish()
    }
}

/// `r*(a)`: `min_AI{r_bar(a), r(alpha)}` below the lowest on-path action,
/// `r(alpha)` above. Returns `(r, h)`.
fn r_star(s: &Setting, target: &TargetOutcome, h_alpha: f64, a: f64) -> Result<(f64, f64)> {
    if a < target.a_lo() {
        let bar = s.bar(a)?;
        if bar.h <= h_alpha {
            return Ok((bar.r, bar.h));
        }
    }
    Ok((target.reply, h_alpha))
}

fn star_marginal(s: &Setting, target: &TargetOutcome, h_alpha: f64, a: f64) -> f64 {
    match r_star(s, target, h_alpha, a) {
        Ok((r, _)) => agent_marginal(s.model.as_ref(), a, r),
        Err(_) => f64::NAN,
    }
}

struct Structure {
    segments: Vec<Segment>,
    isolated: Vec<f64>,
    crossings: Vec<f64>,
    twins: Vec<f64>,
    kinks: Vec<f64>,
}

fn structure(s: &Setting, target: &TargetOutcome, h_alpha: f64) -> Result<Structure> {
    let c = &s.curve;
    let a0 = s.a0();
    let a_lo = target.a_lo();
    let root_tol = s.tol.root * 1e-2;
    let reply_h = |x: f64| s.reply(x).map(|r| s.h(r)).unwrap_or(f64::NAN);
    let bar_h = |x: f64| s.bar(x).map(|b| b.h).unwrap_or(f64::NAN);

    // Gap start: first action where the running max exceeds h(r(alpha)).
    let mut crossings = Vec::new();
    let mut cut = a_lo;
    if let Some(i) = (0..c.len()).find(|&i| c.a[i] < a_lo && c.bar_h(i) > h_alpha) {
        let hi = c.a[i];
        let lo = if i == 0 { a0 } else { c.a[i - 1] };
        let x = if i == 0 || bar_h(lo) > h_alpha {
            lo
        } else {
            find_root_1d(|x| bar_h(x) - h_alpha, lo, hi, root_tol)?
        };
        crossings.push(x);
        cut = x;
    } else if let Some(p) = c.peaks.iter().find(|p| p.a < a_lo && p.h > h_alpha) {
        let i = crate::numerics::floor_index(&c.a, p.a);
        let x = find_root_1d(|x| bar_h(x) - h_alpha, c.a[i], p.a, root_tol)?;
        crossings.push(x);
        cut = x;
    }

    // Tracking regime switches on [a0, cut].
    let mut kinks = Vec::new();
    let mut segments = Vec::new();
    let mut seg_start: Option<f64> = None;
    let tracking = |i: usize| c.bar[i] == i;
    for i in 0..c.len() {
        let a = c.a[i];
        if a > cut {
            break;
        }
        let tr = tracking(i);
        match (seg_start, tr) {
            (None, true) => {
                let start = if i == 0 {
                    a
                } else {
                    let frozen = c.bar_h(i - 1);
                    let x = find_root_1d(|x| reply_h(x) - frozen, c.a[i - 1], a, root_tol).unwrap_or(a);
                    kinks.push(x);
                    x
                };
                seg_start = Some(start);
            }
            (Some(st), false) => {
                let end = c
                    .peaks
                    .iter()
                    .find(|p| p.a >= c.a[i.saturating_sub(2)] && p.a <= a)
                    .map(|p| p.a)
                    .unwrap_or(c.a[i - 1]);
                let end = end.min(cut);
                kinks.push(end);
                segments.push(Segment { lo: st, hi: end });
                seg_start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = seg_start {
        let end = cut.min(a_lo);
        if end >= st {
            segments.push(Segment { lo: st, hi: end });
        }
    }

    // Beyond the gap start r* is pinned at r(alpha); offered actions are the
    // roots of h(r(a)) = h(r(alpha)).
    let mut twins = Vec::new();
    if !crossings.is_empty() {
        let g = |x: f64| reply_h(x) - h_alpha;
        let pts: Vec<f64> = std::iter::once(cut)
            .chain(c.a.iter().copied().filter(|&x| x > cut && x < a_lo))
            .chain(std::iter::once(a_lo))
            .collect();
        let vals: Vec<f64> = pts.iter().map(|&x| g(x)).collect();
        for k in 0..pts.len() - 1 {
            if vals[k + 1] == 0.0 {
                twins.push(pts[k + 1]);
            } else if vals[k] != 0.0 && vals[k].signum() != vals[k + 1].signum() {
                twins.push(find_root_1d(g, pts[k], pts[k + 1], root_tol)?);
            }
        }
        twins.retain(|&t| t - cut > 1e-9 * s.model.actions().width().max(1.0));
        twins.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        kinks.extend(&crossings);
    }
    let isolated: Vec<f64> = twins.iter().copied().filter(|&t| t < a_lo - 1e-12).collect();
    kinks.push(a_lo);
    kinks.extend(c.peaks.iter().map(|p| p.a).filter(|&x| x < a_lo));
    kinks.retain(|&x| x > a0 && x.is_finite());
    kinks.sort_by(f64::total_cmp);
    kinks.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    Ok(Structure { segments, isolated, crossings, twins, kinks })
}

impl SynthesisResult {
    pub fn setting(&self) -> &Setting {
        &self.inner
    }

    fn internal(&self, a: f64) -> f64 {
        if self.mirrored {
            -a
        } else {
            a
        }
    }

    /// Robust transfer `t*(a)` on the internal action scale.
    fn raw_transfer(&self, a: f64) -> Result<f64> {
        let s = &self.inner;
        let h_alpha = self.h_target;
        let kinks: Vec<f64> = self.kinks.iter().copied().filter(|&k| k > self.a0 && k < a).collect();
        integrate_1d(|x| star_marginal(s, &self.target, h_alpha, x), self.a0, a, &kinks, s.tol.integ)
    }

    fn clip(&self, a: f64, f: f64) -> f64 {
        if self.mode != Mode::FullAccess {
            return f;
        }
        let run = self.clip_peaks.iter().filter(|p| p.0 <= a).map(|p| p.1).fold(0.0f64, f64::max);
        f - run.max(f)
    }

    /// Transfer schedule at action `a` (user scale).
    pub fn transfer(&self, a: f64) -> Result<f64> {
        let x = self.internal(a);
        Ok(self.clip(x, self.raw_transfer(x)?))
    }

    /// Schedule at many actions with one sweep of the quadrature.
    pub fn transfers(&self, actions: &[f64]) -> Result<Vec<f64>> {
        let xs: Vec<f64> = actions.iter().map(|&a| self.internal(a)).collect();
        let raw = self.raw_transfers(&xs)?;
        Ok(xs.iter().zip(raw).map(|(&x, f)| self.clip(x, f)).collect())
    }

    /// Unclipped `t*` at internal-scale actions.
    fn raw_transfers(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let s = &self.inner;
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let total = (xs.iter().copied().fold(self.a0, f64::max) - self.a0).max(f64::MIN_POSITIVE);
        let mut out = vec![0.0; xs.len()];
        let (mut at, mut acc) = (self.a0, 0.0);
        for &i in &idx {
            let x = xs[i];
            if x > at {
                let kinks: Vec<f64> = self.kinks.iter().copied().filter(|&k| k > at && k < x).collect();
                let tol = (s.tol.integ * (x - at) / total).max(1e-15);
                acc += integrate_1d(|y| star_marginal(s, &self.target, self.h_target, y), at, x, &kinks, tol)?;
                at = x;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Membership in the offered set `A*` (user scale), up to `tol` in actions.
    pub fn offered(&self, a: f64, tol: f64) -> bool {
        let x = self.internal(a);
        self.segments.iter().any(|g| x >= g.lo - tol && x <= g.hi + tol)
            || self.isolated.iter().any(|&p| (p - x).abs() <= tol)
            || self.target.contains(x, tol)
    }

    /// On-path actions on the user scale.
    pub fn on_path(&self) -> Vec<(f64, f64)> {
        self.target.support.iter().map(|&(a, w)| (self.internal(a), w)).collect()
    }
}

fn sample_knots(result: &SynthesisResult, n: usize) -> Result<Vec<Knot>> {
    let s = result.inner.clone();
    let hi = result.target.a_hi();
    if hi <= result.a0 {
        return Ok(vec![Knot {
            a: result.internal(result.a0),
            transfer: 0.0,
            marginal: star_marginal(&s, &result.target, result.h_target, result.a0),
            h_star: r_star(&s, &result.target, result.h_target, result.a0)?.1,
            member: true,
            partial_transfer: 0.0,
        }]);
    }
    let xs = linspace(result.a0, hi, n);
    let user: Vec<f64> = xs.iter().map(|&x| result.internal(x)).collect();
    let ts = result.transfers(&user)?;
    let m = s.model.as_ref();
    let r_alpha = result.target.reply;
    xs.iter()
        .zip(ts)
        .map(|(&x, t)| {
            Ok(Knot {
                a: result.internal(x),
                transfer: t,
                marginal: star_marginal(&s, &result.target, result.h_target, x),
                h_star: r_star(&s, &result.target, result.h_target, x)?.1,
                member: result.offered(result.internal(x), 0.0),
                partial_transfer: m.agent(x, r_alpha) - m.agent(result.a0, r_alpha),
            })
        })
        .collect()
}

pub const DEFAULT_KNOTS: usize = 201;

fn synthesize(
    inner: Arc<Setting>,
    user: SharedModel,
    target: TargetOutcome,
    mode: Mode,
    mirrored: bool,
) -> Result<SynthesisResult> {
    let s = inner.as_ref();
    let a0 = s.a0();
    if target.a_lo() < a0 - 1e-12 {
        return Err(Error::InvalidTarget(format!("target action {} below the outside option {a0}", target.a_lo())));
    }
    let h_target = s.h(target.reply);
    let st = structure(s, &target, h_target)?;
    let mut result = SynthesisResult {
        mode,
        target,
        a0,
        h_target,
        segments: st.segments,
        isolated: st.isolated,
        crossings: st.crossings,
        twins: st.twins,
        kinks: st.kinks,
        bound: ValueBound { u0: 0.0, t_bar: 0.0, bound: 0.0 },
        knots: Vec::new(),
        assumptions: s.assumptions.clone(),
        diagnostic_only: !s.assumptions.passed(),
        mirrored,
        inner: inner.clone(),
        user,
        clip_peaks: Vec::new(),
    };
    if mode == Mode::FullAccess {
        result.clip_peaks = transfer_peaks(&result)?;
    }
    result.bound = value_bound(&result)?;
    result.knots = sample_knots(&result, DEFAULT_KNOTS)?;
    Ok(result)
}

/// Local maxima of the unclipped schedule: zeros of the marginal where it
/// turns from positive to negative.
fn transfer_peaks(result: &SynthesisResult) -> Result<Vec<(f64, f64)>> {
    let s = &result.inner;
    let hi = result.target.a_hi();
    if hi <= result.a0 {
        return Ok(Vec::new());
    }
    let g = |x: f64| star_marginal(s, &result.target, result.h_target, x);
    let xs = linspace(result.a0, hi, s.curve.len().max(101));
    let mut peaks = Vec::new();
    for w in xs.windows(2) {
        let (g0, g1) = (g(w[0]), g(w[1]));
        if g0 > 0.0 && g1 <= 0.0 {
            let x = if g1 == 0.0 { w[1] } else { find_root_1d(g, w[0], w[1], s.tol.root * 1e-2)? };
            peaks.push(x);
        }
    }
    if g(hi) > 0.0 {
        peaks.push(hi);
    }
    let vals = result.raw_transfers(&peaks)?;
    Ok(peaks.into_iter().zip(vals).collect())
}

fn check_implementable(s: &Setting, target: &TargetOutcome) -> Result<()> {
    let v = crate::equilibrium::is_fully_implementable(s, target)?;
    if v.implementable {
        Ok(())
    } else {
        Err(Error::NotImplementable(v.failed.join("; ")))
    }
}

/// Robustly optimal schedule for a fully implementable target.
pub fn build_optimal_contract(setting: &Setting, target: &TargetOutcome) -> Result<SynthesisResult> {
    check_implementable(setting, target)?;
    synthesize(Arc::new(setting.clone()), setting.model.clone(), target.clone(), Mode::Robust, false)
}

/// Full-access variant: transfers are clipped to be nonpositive. Targets
/// below the outside option are solved on the relabeled action `-a`.
pub fn build_full_access_contract(setting: &Setting, target: &TargetOutcome) -> Result<SynthesisResult> {
    if !setting.assumptions.pure() {
        return Err(Error::NotPureExternalities);
    }
    if !target.is_pure() {
        return Err(Error::NotImplementable("mixed targets are not fully implementable with pure externalities".into()));
    }
    let a = target.a_lo();
    let a0 = setting.a0();
    let (model, mirrored): (SharedModel, bool) = if a >= a0 {
        (Arc::new(Restricted::from_outside_option(setting.model.clone())), false)
    } else {
        (Arc::new(Restricted::from_outside_option(Arc::new(Mirrored::new(setting.model.clone())))), true)
    };
    let inner = Setting::new(model, setting.curve.len(), setting.n_r, setting.tol)?;
    let t = TargetOutcome::pure(&inner, if mirrored { -a } else { a })?;
    synthesize(Arc::new(inner), setting.model.clone(), t, Mode::FullAccess, mirrored)
}

/// `U_0 + T_bar` for the synthesized target.
pub fn value_bound(result: &SynthesisResult) -> Result<ValueBound> {
    let s = result.inner.as_ref();
    let m = s.model.as_ref();
    let r_alpha = result.target.reply;
    let a_lo = result.target.a_lo();
    let u0 = result
        .target
        .support
        .iter()
        .map(|&(a, w)| w * (m.principal(a, r_alpha) + m.agent(a, r_alpha)))
        .sum::<f64>()
        - m.agent(a_lo, r_alpha);
    let kinks: Vec<f64> = result.kinks.iter().copied().filter(|&k| k < a_lo).collect();
    let t_bar = integrate_1d(
        |x| {
            let bar = s.bar(x).map(|b| b.r).unwrap_or(f64::NAN);
            agent_marginal(m, x, bar).min(agent_marginal(m, x, r_alpha))
        },
        result.a0,
        a_lo,
        &kinks,
        s.tol.integ,
    )?;
    Ok(ValueBound { u0, t_bar, bound: u0 + t_bar })
}

/// Largest `|d^2/da^2 (u_A(a, r(a')) - t*(a))|` at `a = a'` over the offered
/// segments: how fast a deviation to a neighbouring plan loses value.
fn deviation_curvature(result: &SynthesisResult) -> f64 {
    let s = result.inner.as_ref();
    let m = s.model.as_ref();
    let h = 1e-5 * m.actions().width().max(1e-3);
    let star = |x: f64| star_marginal(s, &result.target, result.h_target, x);
    let mut k: f64 = 0.0;
    for g in &result.segments {
        if g.hi - g.lo <= 4.0 * h {
            continue;
        }
        for x in linspace(g.lo + 2.0 * h, g.hi - 2.0 * h, 101) {
            let Ok(r) = s.reply(x) else { continue };
            let own = (agent_marginal(m, x + h, r) - agent_marginal(m, x - h, r)) / (2.0 * h);
            let sched = (star(x + h) - star(x - h)) / (2.0 * h);
            let v = (own - sched).abs();
            if v.is_finite() {
                k = k.max(v);
            }
        }
    }
    k
}

/// Default number of plans sampled from the offered set.
pub const DEFAULT_PLANS: usize = 501;

/// Finite menu approximating the schedule: off-path actions pay
/// `t*(a) - (a - a0) eps/n`, on-path actions `t*(a) - (a_lo - a0) eps/n`.
pub fn discretize_menu(result: &SynthesisResult, n: u32, epsilon: f64, plans: usize) -> Result<Contract> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::param("eps", "must be finite and nonnegative"));
    }
    let a0 = result.a0;
    let a_lo = result.target.a_lo();
    let span = (result.target.a_hi() - a0).max(0.0);
    let mut delta = if plans > 1 && span > 0.0 { span / (plans - 1) as f64 } else { f64::INFINITY };
    // Neighbouring plans on a segment are separated by a payoff step of
    // about `delta eps / n - K delta^2 / 2`; keep it positive with margin.
    let curvature = deviation_curvature(result);
    if epsilon > 0.0 && curvature > 0.0 {
        delta = delta.min(epsilon / (n as f64 * curvature));
    }
    let mut xs: Vec<f64> = Vec::new();
    for g in &result.segments {
        let k = if delta.is_finite() { ((g.hi - g.lo) / delta).ceil() as usize + 1 } else { 2 };
        xs.extend(linspace(g.lo, g.hi, k.max(2)));
    }
    xs.extend(&result.isolated);
    let on: Vec<f64> = result.target.support.iter().map(|p| p.0).collect();
    xs.retain(|&x| x < a_lo && x >= a0);
    xs.extend(&on);
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|x, y| (*x - *y).abs() < 1e-14);

    let user: Vec<f64> = xs.iter().map(|&x| result.internal(x)).collect();
    let ts = result.transfers(&user)?;
    let step = epsilon / n as f64;
    let menu: Vec<Plan> = xs
        .iter()
        .zip(&user)
        .zip(ts)
        .map(|((&x, &u), t)| {
            let shift = if x >= a_lo { (a_lo - a0) * step } else { (x - a0) * step };
            Plan { action: u, transfer: t - shift }
        })
        .collect();
    let generator = match result.mode {
        Mode::Robust => Generator::Optimal,
        Mode::FullAccess => Generator::FullAccess,
        Mode::Partial => Generator::Partial,
    };
    Ok(Contract::new(result.user.as_ref(), menu, generator)?.with_params(serde_json::json!({
        "n": n,
        "epsilon": epsilon,
        "plans": plans,
        "spacing": delta,
        "curvature": curvature,
    })))
}

/// Menu that offers only the on-path actions, each priced at the agent's
/// willingness to pay given `r(alpha)`.
pub fn build_partial_contract(setting: &Setting, target: &TargetOutcome) -> Result<Contract> {
    let m = setting.model.as_ref();
    let a0 = setting.a0();
    let r = target.reply;
    let plans = target
        .support
        .iter()
        .filter(|p| (p.0 - a0).abs() > 1e-14)
        .map(|&(a, _)| Plan { action: a, transfer: m.agent(a, r) - m.agent(a0, r) });
    Contract::new(m, plans, Generator::Partial)
}
