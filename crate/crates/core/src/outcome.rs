//! Second-step analysis over pure targets: what the principal earns from
//! robustly versus partially inducing each action, and the integrated game
//! between the principal and the outsider.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::model::{agent_marginal, Mirrored, PayoffModel, Restricted};
use crate::numerics::{find_root_1d, maximize_concave_1d, Interval};
use crate::order::{csv_err, fmt, AssumptionReport, Setting};

/// Relative band (of the payoff range) used to collect argmax sets.
pub const ARGMAX_BAND: f64 = 1e-8;

/// Values of the two implementation modes on an action grid.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeScan {
    pub a0: f64,
    pub a: Vec<f64>,
    pub reply: Vec<f64>,
    /// `U_P*(a)`: robust implementation.
    pub full: Vec<f64>,
    /// `U_P0(a)`: partial implementation.
    pub partial: Vec<f64>,
    pub h_reply: Vec<f64>,
    pub h_bar: Vec<f64>,
    pub argmax_full: Vec<usize>,
    pub argmax_partial: Vec<usize>,
    /// Largest grid spacing.
    pub cell: f64,
}

impl OutcomeScan {
    pub fn a_full(&self) -> Vec<f64> {
        self.argmax_full.iter().map(|&i| self.a[i]).collect()
    }

    pub fn a_partial(&self) -> Vec<f64> {
        self.argmax_partial.iter().map(|&i| self.a[i]).collect()
    }

    pub fn max_full(&self) -> f64 {
        self.full.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_partial(&self) -> f64 {
        self.partial.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Payoff scale used for relative tolerances (at least 1).
    pub fn scale(&self) -> f64 {
        let lo = self.full.iter().chain(&self.partial).copied().fold(f64::INFINITY, f64::min);
        let hi = self.full.iter().chain(&self.partial).copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo).max(1.0)
    }

    /// Largest `U_P*(a) - U_P0(a)`; nonpositive up to quadrature error.
    pub fn dominance_violation(&self) -> f64 {
        self.full.iter().zip(&self.partial).map(|(f, p)| f - p).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether robustness costs nothing anywhere on the grid.
    pub fn robustness_free(&self, tol: f64) -> bool {
        self.full.iter().zip(&self.partial).all(|(f, p)| (p - f).abs() <= tol)
    }

    /// CSV columns `a, U_P_full, U_P_partial, h_r, h_rbar`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "U_P_full", "U_P_partial", "h_r", "h_rbar"]).map_err(csv_err)?;
        for i in 0..self.a.len() {
            w.write_record([
                fmt(self.a[i]),
                fmt(self.full[i]),
                fmt(self.partial[i]),
                fmt(self.h_reply[i]),
                fmt(self.h_bar[i]),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Half {
    reply: Vec<f64>,
    bar_r: Vec<f64>,
    full: Vec<f64>,
    partial: Vec<f64>,
}

/// Both value curves on `xs` (ascending, `xs[0] = a0`) for a setting whose
/// outside option is its lowest action.
///
/// Each target `a_k` integrates `du_A/da(a', r*(a'))` with
/// `r* = min_AI{r_bar(a'), r(a_k)}`. Cells where `r*` is pinned at `r(a_k)`
/// use the exact payoff difference; the others use the trapezoid rule.
fn half_scan(s: &Setting, xs: &[f64]) -> Result<Half> {
    let m = s.model.as_ref();
    let a0 = xs[0];
    let rows: Vec<(f64, f64, f64, f64)> = xs
        .par_iter()
        .map(|&x| {
            let r = s.reply(x)?;
            let b = s.bar(x)?;
            Ok((r, s.h(r), b.r, b.h))
        })
        .collect::<Result<_>>()?;
    let g_bar: Vec<f64> = xs.iter().zip(&rows).map(|(&x, row)| agent_marginal(m, x, row.2)).collect();

    let full: Vec<f64> = (0..xs.len())
        .into_par_iter()
        .map(|k| {
            let (rk, hk) = (rows[k].0, rows[k].1);
            let pinned = |i: usize| rows[i].3 > hk;
            let g = |i: usize| if pinned(i) { agent_marginal(m, xs[i], rk) } else { g_bar[i] };
            let mut acc = 0.0;
            for i in 1..=k {
                acc += if pinned(i - 1) && pinned(i) {
                    m.agent(xs[i], rk) - m.agent(xs[i - 1], rk)
                } else {
                    0.5 * (g(i - 1) + g(i)) * (xs[i] - xs[i - 1])
                };
            }
            m.principal(xs[k], rk) + acc
        })
        .collect();
    let partial = xs
        .iter()
        .zip(&rows)
        .map(|(&x, row)| m.principal(x, row.0) + m.agent(x, row.0) - m.agent(a0, row.0))
        .collect();
    Ok(Half {
        reply: rows.iter().map(|r| r.0).collect(),
        bar_r: rows.iter().map(|r| r.2).collect(),
        full,
        partial,
    })
}

fn argmax_band(v: &[f64]) -> Vec<usize> {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let band = ARGMAX_BAND * (hi - lo);
    (0..v.len()).filter(|&i| v[i] >= hi - band).collect()
}

fn side_count(len: f64, width: f64, n: usize) -> usize {
    if len <= 0.0 || width <= 0.0 {
        return 1;
    }
    ((len / width * (n - 1) as f64).round() as usize + 1).max(2)
}

/// `U_P*` and `U_P0` on roughly `n` actions spanning the whole action range.
///
/// Actions below the outside option are handled on the mirrored model.
pub fn scan_outcomes(setting: &Setting, n: usize) -> Result<OutcomeScan> {
    let m = setting.model.clone();
    let dom = m.actions();
    let a0 = setting.a0();
    let width = dom.width();
    let n = n.max(crate::scenarios::MIN_GRID);
    let slack = 1e-12 * width.max(1.0);

    let mut a = Vec::new();
    let mut reply = Vec::new();
    let mut full = Vec::new();
    let mut partial = Vec::new();
    let mut h_bar = Vec::new();

    if a0 > dom.lo + slack {
        let mirror: Arc<dyn PayoffModel> = Arc::new(Restricted::from_outside_option(Arc::new(Mirrored::new(m.clone()))));
        let ms = Setting::new(mirror, setting.curve.len(), setting.n_r, setting.tol)?;
        let xs = crate::numerics::linspace(-a0, -dom.lo, side_count(a0 - dom.lo, width, n));
        let left = half_scan(&ms, &xs)?;
        for i in (1..xs.len()).rev() {
            a.push(-xs[i]);
            reply.push(left.reply[i]);
            full.push(left.full[i]);
            partial.push(left.partial[i]);
            h_bar.push(setting.h(left.bar_r[i]));
        }
    }

    let right_setting;
    let rs = if a0 > dom.lo + slack {
        let restricted: Arc<dyn PayoffModel> = Arc::new(Restricted::from_outside_option(m.clone()));
        right_setting = Setting::new(restricted, setting.curve.len(), setting.n_r, setting.tol)?;
        &right_setting
    } else {
        setting
    };
    let xs = crate::numerics::linspace(a0, dom.hi, side_count(dom.hi - a0, width, n));
    let right = half_scan(rs, &xs)?;
    a.extend(&xs);
    reply.extend(&right.reply);
    full.extend(&right.full);
    partial.extend(&right.partial);
    h_bar.extend(right.bar_r.iter().map(|&r| setting.h(r)));

    let h_reply = reply.iter().map(|&r| setting.h(r)).collect();
    let cell = a.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(OutcomeScan {
        a0,
        argmax_full: argmax_band(&full),
        argmax_partial: argmax_band(&partial),
        a,
        reply,
        full,
        partial,
        h_reply,
        h_bar,
        cell,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AttenuationReport {
    pub pass: bool,
    pub pairs: usize,
    /// Largest `h(r(a_F)) - h(r(a_P))` over all pairs.
    pub incentive_gap: f64,
    /// Every `a_F` draws a reply ranked strictly above `r(a0)`.
    pub premise: bool,
    /// Smallest `a_P - a_F` over pairs, oriented so that it is nonnegative
    /// when attenuation shows up in actions (pure externalities only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_pass: Option<bool>,
    pub a_full: Vec<f64>,
    pub a_partial: Vec<f64>,
}

/// Robust optima draw weaker incentives from the outsider than partial ones.
pub fn attenuation_check(setting: &Setting, scan: &OutcomeScan, tol: f64) -> Result<AttenuationReport> {
    let h0 = setting.h(setting.reply(setting.a0())?);
    let mut gap = f64::NEG_INFINITY;
    let mut pairs = 0;
    for &f in &scan.argmax_full {
        for &p in &scan.argmax_partial {
            gap = gap.max(scan.h_reply[f] - scan.h_reply[p]);
            pairs += 1;
        }
    }
    let premise = scan.argmax_full.iter().all(|&f| scan.h_reply[f] > h0 + tol);

    let (action_gap, action_pass) = if setting.assumptions.pure() {
        let c = &setting.curve;
        let dir = if c.h[c.len() - 1] >= c.h[0] { 1.0 } else { -1.0 };
        let mut g = f64::INFINITY;
        for &f in &scan.argmax_full {
            for &p in &scan.argmax_partial {
                g = g.min(dir * (scan.a[p] - scan.a[f]));
            }
        }
        (Some(g), Some(g >= -tol))
    } else {
        (None, None)
    };

    Ok(AttenuationReport {
        pass: gap <= tol && action_pass.unwrap_or(true),
        pairs,
        incentive_gap: gap,
        premise,
        action_gap,
        action_pass,
        a_full: scan.a_full(),
        a_partial: scan.a_partial(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NashPoint {
    pub a: f64,
    pub r: f64,
    /// `u~(a, r(a))`.
    pub value: f64,
    /// Best deviation gain of the principal against `r(a)`.
    pub gain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegratedGame {
    pub stackelberg: Vec<f64>,
    pub stackelberg_value: f64,
    pub nash: Vec<NashPoint>,
    pub principal_preferred: Vec<NashPoint>,
    pub tol: f64,
    /// The Nash characterization is only backed for pure externalities.
    pub guaranteed: bool,
}

/// Integrated-game payoff `u~(a, r) = u_P(a, r(a)) + u_A(a, r) - u_A(a0, r)`.
struct Game<'a> {
    s: &'a Setting,
    xs: &'a [f64],
    /// `u_P(x_i, r(x_i))`.
    own: Vec<f64>,
    dom: Interval,
}

impl Game<'_> {
    fn value(&self, a: f64, r: f64) -> Result<f64> {
        let m = self.s.model.as_ref();
        Ok(m.principal(a, self.s.reply(a)?) + m.agent(a, r) - m.agent(self.s.a0(), r))
    }

    /// Principal's best action against `r`: grid scan, then a golden polish
    /// on the neighbouring cells.
    fn best(&self, r: f64) -> Result<(f64, f64)> {
        let m = self.s.model.as_ref();
        let mut j = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, &x) in self.xs.iter().enumerate() {
            let v = self.own[i] + m.agent(x, r);
            if v > best {
                best = v;
                j = i;
            }
        }
        let lo = self.xs[j.saturating_sub(1)];
        let hi = self.xs[(j + 1).min(self.xs.len() - 1)];
        let f = |x: f64| self.value(x, r).unwrap_or(f64::NEG_INFINITY);
        let (x, v) = maximize_concave_1d(f, Interval { lo, hi }, self.s.tol.opt)?;
        let grid_v = best - m.agent(self.s.a0(), r);
        Ok(if v >= grid_v { (self.dom.clamp(x), v) } else { (self.xs[j], grid_v) })
    }

    fn offset(&self, a: f64) -> Result<f64> {
        let r = self.s.reply(a)?;
        Ok(self.best(r)?.0 - a)
    }

    fn nash_point(&self, a: f64) -> Result<NashPoint> {
        let r = self.s.reply(a)?;
        let value = self.value(a, r)?;
        let (_, top) = self.best(r)?;
        Ok(NashPoint { a, r, value, gain: (top - value).max(0.0) })
    }
}

/// Stackelberg and Nash outcomes of the integrated game on the scan grid.
///
/// Nash outcomes are fixed points of the principal's best-response map
/// `a -> argmax u~(., r(a))`, located by sign changes on the grid and
/// refined by bisection. A bracket across a jump of the map is rejected by
/// the deviation check.
pub fn integrated_game_analysis(setting: &Setting, scan: &OutcomeScan) -> Result<IntegratedGame> {
    let m = setting.model.as_ref();
    let tol = 1e-6 * scan.scale();
    let game = Game {
        s: setting,
        xs: &scan.a,
        own: scan.a.iter().zip(&scan.reply).map(|(&x, &r)| m.principal(x, r)).collect(),
        dom: m.actions(),
    };

    let mut stackelberg = Vec::new();
    let mut stackelberg_value = f64::NEG_INFINITY;
    for &i in &scan.argmax_partial {
        let lo = scan.a[i.saturating_sub(1)];
        let hi = scan.a[(i + 1).min(scan.a.len() - 1)];
        let f = |x: f64| setting.reply(x).and_then(|r| game.value(x, r)).unwrap_or(f64::NEG_INFINITY);
        let (x, v) = maximize_concave_1d(f, Interval { lo, hi }, setting.tol.opt)?;
        let (x, v) = if v >= scan.partial[i] { (x, v) } else { (scan.a[i], scan.partial[i]) };
        stackelberg.push(x);
        stackelberg_value = stackelberg_value.max(v);
    }
    stackelberg.sort_by(f64::total_cmp);
    stackelberg.dedup_by(|x, y| (*x - *y).abs() <= setting.tol.opt);

    let d: Vec<f64> = scan.a.par_iter().map(|&x| game.offset(x)).collect::<Result<_>>()?;
    let zero = 1e-9 * game.dom.width().max(1.0);
    let mut candidates = Vec::new();
    for k in 0..d.len() {
        if d[k].abs() <= zero {
            candidates.push(scan.a[k]);
        } else if k + 1 < d.len() && d[k + 1].abs() > zero && d[k].signum() != d[k + 1].signum() {
            let g = |x: f64| game.offset(x).unwrap_or(f64::NAN);
            candidates.push(find_root_1d(g, scan.a[k], scan.a[k + 1], setting.tol.root)?);
        }
    }
    let mut nash: Vec<NashPoint> = candidates
        .into_iter()
        .map(|a| game.nash_point(a))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.gain <= tol)
        .collect();
    nash.sort_by(|p, q| p.a.total_cmp(&q.a));
    nash.dedup_by(|p, q| (p.a - q.a).abs() <= setting.tol.opt);

    let top = nash.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let band = ARGMAX_BAND * scan.scale();
    let principal_preferred = nash.iter().copied().filter(|p| p.value >= top - band).collect();

    Ok(IntegratedGame {
        stackelberg,
        stackelberg_value,
        nash,
        principal_preferred,
        tol,
        guaranteed: setting.assumptions.pure(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyReport {
    /// `max U_P*`.
    pub public_robust: f64,
    /// `max U_P0`.
    pub public_partial: f64,
    /// `U_P0` at the principal-preferred Nash outcome.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub private: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub private_action: Option<f64>,
    pub private_ge_robust: bool,
    pub private_gt_robust: bool,
    pub partial_ge_private: bool,
    pub guaranteed: bool,
}

/// Public (robust or partial) versus private contracting values.
pub fn privacy_comparison(scan: &OutcomeScan, game: &IntegratedGame) -> PrivacyReport {
    let tol = game.tol;
    let public_robust = scan.max_full();
    let public_partial = scan.max_partial().max(game.stackelberg_value);
    let best = game.principal_preferred.first();
    let private = best.map(|p| p.value);
    PrivacyReport {
        public_robust,
        public_partial,
        private,
        private_action: best.map(|p| p.a),
        private_ge_robust: private.is_some_and(|v| v >= public_robust - tol),
        private_gt_robust: private.is_some_and(|v| v > public_robust + tol),
        partial_ge_private: private.is_none_or(|v| public_partial >= v - tol),
        guaranteed: game.guaranteed,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub scenario: String,
    pub grid: usize,
    pub a0: f64,
    pub a_full: Vec<f64>,
    pub a_partial: Vec<f64>,
    pub max_full: f64,
    pub max_partial: f64,
    pub dominance_violation: f64,
    /// `U_P* = U_P0` on the whole grid: robustness is free.
    pub robustness_free: bool,
    pub attenuation: AttenuationReport,
    pub integrated_game: IntegratedGame,
    pub privacy: PrivacyReport,
    pub assumptions: AssumptionReport,
}

/// Scan plus every report built on it.
pub fn optimize(setting: &Setting, n: usize) -> Result<(OutcomeScan, OptimizeReport)> {
    let scan = scan_outcomes(setting, n)?;
    let tol = 1e-6 * scan.scale();
    let attenuation = attenuation_check(setting, &scan, tol)?;
    let game = integrated_game_analysis(setting, &scan)?;
    let privacy = privacy_comparison(&scan, &game);
    let report = OptimizeReport {
        scenario: setting.model.name().to_string(),
        grid: scan.a.len(),
        a0: scan.a0,
        a_full: scan.a_full(),
        a_partial: scan.a_partial(),
        max_full: scan.max_full(),
        max_partial: scan.max_partial(),
        dominance_violation: scan.dominance_violation(),
        robustness_free: scan.robustness_free(tol),
        attenuation,
        integrated_game: game,
        privacy,
        assumptions: setting.assumptions.clone(),
    };
    Ok((scan, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{ScenarioConfig, ScenarioKind};

    fn setting(cfg: ScenarioConfig, n: usize) -> Setting {
        let mut cfg = cfg;
        cfg.grid.n_a = n;
        Setting::from_config(&cfg).unwrap()
    }

    #[test]
    fn cournot_closed_forms() {
        let s = setting(ScenarioConfig::builtin(ScenarioKind::Cournot), 601);
        let scan = scan_outcomes(&s, 601).unwrap();
        let m = s.model.as_ref();
        for i in 0..scan.a.len() {
            let a = scan.a[i];
            let r = (1.0 - a) / 2.0;
            let t = a / 2.0 - 0.75 * a * a - 1.0 / 12.0;
            assert!((scan.full[i] - (m.principal(a, r) + t)).abs() < 1e-8, "a = {a}");
            assert!(scan.partial[i] >= scan.full[i] - 1e-12);
        }
        assert!((scan.full[0] - scan.partial[0]).abs() < 1e-14);
        let cell = scan.cell;
        assert!(scan.a_full().iter().all(|&a| (a - 3.0 / 7.0).abs() <= cell));
        assert!(scan.a_partial().iter().all(|&a| (a - 7.0 / 15.0).abs() <= cell));

        let (_, rep) = optimize(&s, 601).unwrap();
        assert!(rep.attenuation.pass && rep.attenuation.premise, "{:?}", rep.attenuation);
        assert_eq!(rep.attenuation.action_pass, Some(true));
        assert!(!rep.robustness_free);
        let g = &rep.integrated_game;
        assert_eq!(g.nash.len(), 1, "{g:?}");
        assert!((g.nash[0].a - 3.0 / 7.0).abs() < 1e-7);
        assert!(g.stackelberg.iter().all(|&a| (a - 7.0 / 15.0).abs() < 1e-6), "{g:?}");
        assert!(rep.privacy.private_ge_robust && rep.privacy.private_gt_robust);
        assert!(rep.privacy.partial_ge_private);
    }

    #[test]
    fn boycott_robustness_is_free() {
        let s = setting(ScenarioConfig::builtin(ScenarioKind::Boycott), 401);
        let (scan, rep) = optimize(&s, 401).unwrap();
        for (f, p) in scan.full.iter().zip(&scan.partial) {
            assert!((f - p).abs() < 1e-12);
        }
        assert!(rep.robustness_free);
        assert!(rep.attenuation.pass);
        assert!(rep.privacy.partial_ge_private);
    }

    #[test]
    fn zero_principal_collapses_to_outside_option() {
        let mut cfg = ScenarioConfig::builtin(ScenarioKind::Cournot);
        cfg.zero_principal = true;
        let s = setting(cfg, 301);
        let (scan, rep) = optimize(&s, 301).unwrap();
        assert_eq!(scan.a_full(), vec![s.a0()]);
        assert_eq!(scan.a_partial(), vec![s.a0()]);
        assert!(rep.integrated_game.nash.iter().any(|p| (p.a - s.a0()).abs() < 1e-9));
        assert!(rep.privacy.public_robust.abs() < 1e-12);
        assert!(rep.privacy.public_partial.abs() < 1e-12);
        assert!(rep.privacy.private.unwrap().abs() < 1e-12);
    }

    #[test]
    fn interior_outside_option() {
        let mut cfg = ScenarioConfig::builtin(ScenarioKind::Cournot);
        cfg.params.action_lo = Some(0.0);
        let s = setting(cfg, 301);
        let scan = scan_outcomes(&s, 301).unwrap();
        assert!(scan.a.windows(2).all(|w| w[1] > w[0]));
        assert!(scan.a[0] < s.a0());
        assert!(scan.dominance_violation() < 1e-9);
        let i = scan.a.iter().position(|&a| a == s.a0()).unwrap();
        assert!((scan.full[i] - scan.partial[i]).abs() < 1e-14);
    }
}
