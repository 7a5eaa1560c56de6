//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Reference values come from closed forms
//! and brute-force scans written here, not from the library under test.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use contract_forge::cli::{cmd_figure, Common, FigureArgs};
use contract_forge::duality::{dual_profile, verify_duality_claims, Contract, Generator, Plan};
use contract_forge::equilibrium::{
    certify_unique_implementation, enumerate_equilibria, is_fully_implementable, needs_robustness, EnumOptions,
};
use contract_forge::model::pure_reply;
use contract_forge::numerics::{maximize_concave_1d, Interval};
use contract_forge::order::Setting;
use contract_forge::outcome::{attenuation_check, integrated_game_analysis, scan_outcomes};
use contract_forge::scenarios::{ScenarioConfig, ScenarioKind};
use contract_forge::synthesis::{
    build_optimal_contract, build_partial_contract, discretize_menu, TargetOutcome, DEFAULT_PLANS,
};

type Check = Result<String, String>;

fn setting(kind: ScenarioKind, n: usize) -> Setting {
    let mut cfg = ScenarioConfig::builtin(kind);
    cfg.grid.n_a = n;
    Setting::from_config(&cfg).expect("builtin scenario")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let el = started.elapsed();
    ensure(el < limit, format!("took {:.2?}, limit {limit:?}", el))
}

// Cournot reference forms, written out independently.
mod cournot {
    pub const A0: f64 = 1.0 / 3.0;

    pub fn reply(a: f64) -> f64 {
        (1.0 - a) / 2.0
    }
    pub fn agent(a: f64, r: f64) -> f64 {
        a * (1.0 - a - r)
    }
    pub fn agent_da(a: f64, r: f64) -> f64 {
        1.0 - 2.0 * a - r
    }
    pub fn principal(a: f64, r: f64) -> f64 {
        let q = a + r;
        q - q * q / 2.0
    }
    /// Antiderivative of `1/2 - 3a/2` from `a0`.
    pub fn schedule(a: f64) -> f64 {
        a / 2.0 - 0.75 * a * a - 1.0 / 12.0
    }
    /// `u~(a, r)`.
    pub fn integrated(a: f64, r: f64) -> f64 {
        principal(a, reply(a)) + agent(a, r) - agent(A0, r)
    }
    /// `d/da u~(a, r)`.
    pub fn integrated_da(a: f64, r: f64) -> f64 {
        let q = a + reply(a);
        (1.0 - q) * 0.5 + agent_da(a, r)
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if (f(m) > 0.0) == (flo > 0.0) {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

fn c1_nash_point() -> Check {
    let t0 = Instant::now();
    let s = setting(ScenarioKind::Cournot, 101);
    let m = s.model.as_ref();
    // Best-response iteration of both firms from an off-equilibrium start.
    let wide = Interval { lo: 0.0, hi: 1.0 };
    let mut a: f64 = 0.9;
    for _ in 0..200 {
        let r = pure_reply(m, a, 1e-12).map_err(|e| e.to_string())?;
        let (next, _) = maximize_concave_1d(|x| m.agent(x, r), wide, 1e-12).map_err(|e| e.to_string())?;
        if (next - a).abs() < 1e-14 {
            break;
        }
        a = next;
    }
    let r = pure_reply(m, a, 1e-12).map_err(|e| e.to_string())?;
    ensure((a - 1.0 / 3.0).abs() < 1e-6 && (r - 1.0 / 3.0).abs() < 1e-6, format!("fixed point ({a}, {r})"))?;
    ensure((s.a0() - a).abs() < 1e-6, format!("outside option {} vs fixed point {a}", s.a0()))?;
    within(Duration::from_secs(1), t0)?;
    Ok(format!("a0 = r(a0) = {a:.9}"))
}

fn c2_schedule() -> Check {
    let t0 = Instant::now();
    let s = setting(ScenarioKind::Cournot, 401);
    let mut worst: f64 = 0.0;
    for target in [0.4, 0.5, 0.75, 1.0] {
        let t = TargetOutcome::pure(&s, target).map_err(|e| e.to_string())?;
        let res = build_optimal_contract(&s, &t).map_err(|e| e.to_string())?;
        for k in res.knots.iter().filter(|k| k.a <= target) {
            worst = worst.max((k.marginal - (0.5 - 1.5 * k.a)).abs());
        }
    }
    ensure(worst <= 1e-6, format!("marginal off by {worst:e}"))?;
    let t = TargetOutcome::pure(&s, 0.5).map_err(|e| e.to_string())?;
    let res = build_optimal_contract(&s, &t).map_err(|e| e.to_string())?;
    let v = res.transfer(0.5).map_err(|e| e.to_string())?;
    ensure((v - cournot::schedule(0.5)).abs() <= 1e-8, format!("t*(1/2) = {v}"))?;
    within(Duration::from_secs(1), t0)?;
    Ok(format!("max marginal error {worst:.1e}, t*(1/2) = {v:.12}"))
}

fn c3_uniqueness() -> Check {
    let t0 = Instant::now();
    let s = setting(ScenarioKind::Cournot, 2001);
    let t = TargetOutcome::pure(&s, 0.5).map_err(|e| e.to_string())?;
    let partial = build_partial_contract(&s, &t).map_err(|e| e.to_string())?;
    let e = enumerate_equilibria(&s, &partial, EnumOptions::default()).map_err(|e| e.to_string())?;
    let has_null = e
        .records
        .iter()
        .any(|r| r.support.len() == 1 && (r.support[0].action - cournot::A0).abs() < 1e-9 && (r.r - cournot::reply(cournot::A0)).abs() < 1e-6);
    ensure(e.count() >= 2 && has_null, format!("partial menu: {} equilibria, null present {has_null}", e.count()))?;

    let res = build_optimal_contract(&s, &t).map_err(|e| e.to_string())?;
    let menu = discretize_menu(&res, 1, 1e-3, 501).map_err(|e| e.to_string())?;
    let cert = certify_unique_implementation(&s, &menu, &t, EnumOptions { support_cap: 2, ..EnumOptions::default() })
        .map_err(|e| e.to_string())?;
    ensure(cert.count == 1, format!("robust menu: {} equilibria", cert.count))?;
    let rec = &cert.enumeration.records[0];
    let cell = cert.cell;
    ensure(
        rec.support.len() == 1 && (rec.support[0].action - 0.5).abs() <= cell && (rec.r - 0.25).abs() <= cell,
        format!("robust equilibrium at {:?}, r = {}", rec.actions(), rec.r),
    )?;
    within(Duration::from_secs(30), t0)?;
    Ok(format!("partial: {} equilibria; M_1: unique at ({}, {:.6})", e.count(), rec.support[0].action, rec.r))
}

fn c4_bound() -> Check {
    let s = setting(ScenarioKind::Cournot, 2001);
    let t = TargetOutcome::pure(&s, 0.5).map_err(|e| e.to_string())?;
    let res = build_optimal_contract(&s, &t).map_err(|e| e.to_string())?;
    let bound = cournot::principal(0.5, 0.25) + cournot::schedule(0.5);
    let eps = 1e-3;
    let mut notes = Vec::new();
    for n in [1u32, 4, 16] {
        let menu = discretize_menu(&res, n, eps, DEFAULT_PLANS).map_err(|e| e.to_string())?;
        let cert = certify_unique_implementation(&s, &menu, &t, EnumOptions::default()).map_err(|e| e.to_string())?;
        ensure(cert.unique, format!("M_{n} not certified ({} equilibria)", cert.count))?;
        let rec = &cert.enumeration.records[0];
        let p = &rec.support[0];
        let value = cournot::principal(p.action, rec.r) + p.transfer;
        let slack = (0.5 - cournot::A0) * eps / n as f64 + 1e-6;
        let gap = (value - bound).abs();
        ensure(gap <= slack, format!("n = {n}: |U_P - bound| = {gap:e} > {slack:e}"))?;
        notes.push(format!("n={n}: {gap:.2e}<={slack:.2e}"));
    }
    Ok(notes.join(", "))
}

struct Certified {
    name: String,
    setting: Setting,
    menu: Contract,
    target: TargetOutcome,
}

fn certified_contracts() -> Result<Vec<Certified>, String> {
    let mut out = Vec::new();
    let cases: [(ScenarioKind, f64, u32); 5] = [
        (ScenarioKind::Cournot, 0.5, 1),
        (ScenarioKind::Cournot, 0.5, 4),
        (ScenarioKind::Cournot, 0.8, 1),
        (ScenarioKind::Networked, 0.5, 1),
        (ScenarioKind::Wave, 0.85, 1),
    ];
    for (kind, a, n) in cases {
        let s = setting(kind, 1001);
        let t = TargetOutcome::pure(&s, a).map_err(|e| e.to_string())?;
        let res = build_optimal_contract(&s, &t).map_err(|e| e.to_string())?;
        let menu = discretize_menu(&res, n, 1e-3, DEFAULT_PLANS).map_err(|e| e.to_string())?;
        let cert = certify_unique_implementation(&s, &menu, &t, EnumOptions::default()).map_err(|e| e.to_string())?;
        if cert.unique {
            out.push(Certified { name: format!("{kind:?} {a} M_{n}"), setting: s, menu, target: t });
        }
    }
    Ok(out)
}

fn c5_claims() -> Check {
    let certified = certified_contracts()?;
    ensure(certified.len() >= 3, format!("only {} contracts certified", certified.len()))?;
    let mut names = Vec::new();
    for c in &certified {
        let rep = verify_duality_claims(&c.setting, &c.menu, &c.target, 401, 1e-5, true).map_err(|e| e.to_string())?;
        let checks = [
            ("on-path transfers", rep.on_path_transfers.pass),
            ("envelope", rep.envelope.pass),
            ("below target reply", rep.below_target_reply.pass),
            ("below cumulative reply", rep.below_cumulative_reply.pass),
            ("monotone replies", rep.monotone_replies.pass),
        ];
        if let Some((what, _)) = checks.iter().find(|c| !c.1) {
            return Err(format!("{}: {what} failed: {rep:?}", c.name));
        }
        names.push(c.name.clone());
    }
    let s = setting(ScenarioKind::Cournot, 1001);
    let t = TargetOutcome::pure(&s, 0.5).map_err(|e| e.to_string())?;
    let partial = build_partial_contract(&s, &t).map_err(|e| e.to_string())?;
    let rep = verify_duality_claims(&s, &partial, &t, 401, 1e-5, false).map_err(|e| e.to_string())?;
    ensure(!rep.below_cumulative_reply.pass, "cumulative-reply bound holds on the partial menu")?;
    Ok(format!("all pass on [{}]; partial menu violates the cumulative bound at {} points", names.join("; "), rep.below_cumulative_reply.failures))
}

fn c6_envelope() -> Check {
    let s = setting(ScenarioKind::Cournot, 2001);
    let t = TargetOutcome::pure(&s, 0.5).map_err(|e| e.to_string())?;
    let res = build_optimal_contract(&s, &t).map_err(|e| e.to_string())?;
    let menu = discretize_menu(&res, 1, 1e-3, 501).map_err(|e| e.to_string())?;
    let grid = Interval { lo: cournot::A0, hi: 1.0 }.grid(301);
    let interior = &grid[1..grid.len() - 1];
    let delta = 1e-6;
    let mut pts = Vec::with_capacity(interior.len() * 3);
    for &a in interior {
        pts.extend([a - delta, a, a + delta]);
    }
    let prof = dual_profile(&s, &menu, &pts).map_err(|e| e.to_string())?;
    let mut ok = 0;
    for w in prof.points.chunks(3) {
        let slope = (w[2].t - w[0].t) / (2.0 * delta);
        let p = w[1];
        let m1 = cournot::agent_da(p.a, p.r_lo);
        let m2 = cournot::agent_da(p.a, p.r_hi);
        if slope >= m1.min(m2) - 1e-4 && slope <= m1.max(m2) + 1e-4 {
            ok += 1;
        }
    }
    let share = ok as f64 / interior.len() as f64;
    ensure(share >= 0.99, format!("envelope share {share:.4}"))?;
    Ok(format!("{ok}/{} interior points match ({:.2}%)", interior.len(), 100.0 * share))
}

fn c7_robustness_free() -> Check {
    let b = setting(ScenarioKind::Boycott, 1001);
    let targets = Interval { lo: 0.0, hi: 1.0 }.grid(41);
    for &a in &targets {
        let t = TargetOutcome::pure(&b, a).map_err(|e| e.to_string())?;
        ensure(!needs_robustness(&b, &t).map_err(|e| e.to_string())?, format!("boycott target {a} flagged"))?;
    }
    let mut certified = 0;
    for &a in &[0.0, 0.2, 0.5, 0.8, 1.0] {
        let t = TargetOutcome::pure(&b, a).map_err(|e| e.to_string())?;
        let menu = build_partial_contract(&b, &t).map_err(|e| e.to_string())?;
        let cert = certify_unique_implementation(&b, &menu, &t, EnumOptions::default()).map_err(|e| e.to_string())?;
        ensure(cert.unique, format!("boycott partial menu for {a}: {} equilibria", cert.count))?;
        certified += 1;
    }
    let s = setting(ScenarioKind::Cournot, 401);
    let t = TargetOutcome::pure(&s, 0.5).map_err(|e| e.to_string())?;
    ensure(needs_robustness(&s, &t).map_err(|e| e.to_string())?, "Cournot 1/2 not flagged")?;
    Ok(format!("{} boycott targets robustness-free, {certified} partial menus unique; Cournot 1/2 flagged", targets.len()))
}

fn c8_two_point() -> Check {
    let s = setting(ScenarioKind::Cournot, 401);
    let t = TargetOutcome::new(&s, &[(0.4, 0.5), (0.6, 0.5)]).map_err(|e| e.to_string())?;
    let v = is_fully_implementable(&s, &t).map_err(|e| e.to_string())?;
    ensure(!v.implementable, "two-point target accepted")?;
    let t1 = Interval { lo: -0.1, hi: 0.0 }.grid(20);
    let t2 = Interval { lo: -0.15, hi: -0.05 }.grid(20);
    let m = s.model.as_ref();
    let mut multiple = 0;
    let mut missed = 0;
    for &x in &t1 {
        for &y in &t2 {
            let plans = [Plan { action: 0.4, transfer: x }, Plan { action: 0.6, transfer: y }];
            let c = Contract::new(m, plans, Generator::Custom).map_err(|e| e.to_string())?;
            let e = enumerate_equilibria(&s, &c, EnumOptions::default()).map_err(|e| e.to_string())?;
            let hits = e.records.iter().any(|r| {
                r.support.len() == 2
                    && (r.support[0].action - 0.4).abs() < 1e-9
                    && (r.support[1].action - 0.6).abs() < 1e-9
                    && (r.support[0].weight - 0.5).abs() <= 1e-3
            });
            if e.count() >= 2 {
                multiple += 1;
            } else if !hits {
                missed += 1;
            } else {
                return Err(format!("transfers ({x}, {y}) uniquely implement the target"));
            }
        }
    }
    Ok(format!("rejected ({}); 400 assignments: {multiple} multiple, {missed} miss the target", v.failed.len()))
}

fn scenario(kind: ScenarioKind, edit: impl FnOnce(&mut ScenarioConfig), n: usize) -> Setting {
    let mut cfg = ScenarioConfig::builtin(kind);
    cfg.grid.n_a = n;
    edit(&mut cfg);
    Setting::from_config(&cfg).expect("scenario")
}

fn c9_attenuation() -> Check {
    let n = 1001;
    let cases: Vec<(&str, Setting)> = vec![
        ("cournot efficiency", scenario(ScenarioKind::Cournot, |_| {}, n)),
        ("cournot emission", scenario(ScenarioKind::Cournot, |c| c.params.objective = Some("emission".into()), n)),
        ("networked 1/1", scenario(ScenarioKind::Networked, |_| {}, n)),
        (
            "networked 3/1",
            scenario(ScenarioKind::Networked, |c| {
                c.params.weight_action = Some(3.0);
                c.params.weight_spillover = Some(1.0)
            }, n),
        ),
        (
            "networked 0.2/2",
            scenario(ScenarioKind::Networked, |c| {
                c.params.weight_action = Some(0.2);
                c.params.weight_spillover = Some(2.0)
            }, n),
        ),
        ("boycott", scenario(ScenarioKind::Boycott, |_| {}, n)),
    ];
    let mut notes = Vec::new();
    for (name, s) in &cases {
        let scan = scan_outcomes(s, n).map_err(|e| e.to_string())?;
        let rep = attenuation_check(s, &scan, 1e-6).map_err(|e| e.to_string())?;
        // Recheck the inequality on the raw argmax sets.
        let h0 = |i: usize| scan.h_reply[i];
        let worst = scan
            .argmax_full
            .iter()
            .flat_map(|&f| scan.argmax_partial.iter().map(move |&p| h0(f) - h0(p)))
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(worst <= 1e-6 && rep.pass, format!("{name}: h(r(a_F)) - h(r(a_P)) = {worst:e}"))?;
        notes.push(format!("{name}: a_F={:.4} a_P={:.4}", scan.a_full()[0], scan.a_partial()[0]));
    }
    Ok(notes.join(", "))
}

fn c10_integrated_game() -> Check {
    let s = setting(ScenarioKind::Cournot, 2001);
    let scan = scan_outcomes(&s, 2001).map_err(|e| e.to_string())?;
    let cell = scan.cell;
    // Reference Stackelberg set: dense scan of u~(a, r(a)).
    let dense = Interval { lo: cournot::A0, hi: 1.0 }.grid(200_001);
    let stack = dense
        .iter()
        .copied()
        .max_by(|x, y| cournot::integrated(*x, cournot::reply(*x)).total_cmp(&cournot::integrated(*y, cournot::reply(*y))))
        .unwrap();
    // Reference Nash outcome: u~ is concave in a, so the fixed point solves
    // the first-order condition against r(a).
    let nash = bisect(|a| cournot::integrated_da(a, cournot::reply(a)), cournot::A0, 1.0);
    let a_p = scan.a_partial();
    let a_f = scan.a_full();
    ensure(a_p.iter().all(|&a| (a - stack).abs() <= cell), format!("A_P = {a_p:?}, Stackelberg {stack}"))?;
    ensure(a_f.iter().all(|&a| (a - nash).abs() <= cell), format!("A_F = {a_f:?}, Nash {nash}"))?;
    let game = integrated_game_analysis(&s, &scan).map_err(|e| e.to_string())?;
    ensure(
        game.principal_preferred.len() == 1 && (game.principal_preferred[0].a - nash).abs() <= cell,
        format!("reported Nash set {:?}", game.principal_preferred),
    )?;
    ensure(game.stackelberg.iter().all(|&a| (a - stack).abs() <= cell), format!("reported Stackelberg {:?}", game.stackelberg))?;
    Ok(format!("A_P={:.5} vs {stack:.5}, A_F={:.5} vs {nash:.5}, cell {cell:.1e}", a_p[0], a_f[0]))
}

fn read_panel(panel: &str) -> Result<Vec<(f64, f64, f64, bool)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = FigureArgs {
        common: Common { scenario: None, grid: Some(2001), out: dir.path().to_path_buf() },
        panel: panel.into(),
        target: None,
    };
    cmd_figure(&args, &[]).map_err(|e| e.to_string())?;
    let mut rd = csv::Reader::from_path(dir.path().join(format!("panel_{panel}.csv"))).map_err(|e| e.to_string())?;
    rd.records()
        .map(|r| {
            let r = r.map_err(|e| e.to_string())?;
            let f = |i: usize| r[i].parse::<f64>().map_err(|e| e.to_string());
            Ok((f(0)?, f(1)?, f(2)?, &r[3] == "1"))
        })
        .collect()
}

fn c11_figure() -> Check {
    let a = read_panel("a")?;
    ensure(a.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12), "panel a not monotone")?;

    let c = read_panel("c")?;
    let cell = c[1].0 - c[0].0;
    // Reference: dense scan of the closed-form response for beta_A = 4,
    // beta_O = 1 and target 1/2.
    let reply = |a: f64| 2.0 * a - a * a / 2.0;
    let h = |r: f64| r - r * r;
    let h_alpha = h(reply(0.5));
    let dense = Interval { lo: 0.0, hi: 1.0 }.grid(1_000_001);
    let mut run = f64::NEG_INFINITY;
    let mut gap_start = None;
    let mut twin = None;
    for &x in &dense {
        run = run.max(h(reply(x)));
        if gap_start.is_none() && run > h_alpha {
            gap_start = Some(x);
        } else if gap_start.is_some() && twin.is_none() && h(reply(x)) <= h_alpha && x > 0.3 {
            twin = Some(x);
        }
    }
    let (gap_start, twin) = (gap_start.ok_or("no gap in reference")?, twin.ok_or("no twin in reference")?);
    let first_out = c.iter().find(|p| !p.3).ok_or("panel c has no gap")?.0;
    let back_in = c.iter().find(|p| p.0 > first_out && p.3).ok_or("gap never closes")?.0;
    ensure((first_out - gap_start).abs() <= cell, format!("gap starts at {first_out}, reference {gap_start}"))?;
    ensure((back_in - twin).abs() <= cell, format!("gap ends at {back_in}, reference {twin}"))?;
    Ok(format!("panel a monotone; panel c gap ({first_out:.5}, {back_in:.5}) vs ({gap_start:.5}, {twin:.5})"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("Cournot Nash point", c1_nash_point),
        ("robust schedule", c2_schedule),
        ("uniqueness certification", c3_uniqueness),
        ("value bound attainment", c4_bound),
        ("dual claim suite", c5_claims),
        ("envelope condition", c6_envelope),
        ("robustness-free regime", c7_robustness_free),
        ("two-point implementability", c8_two_point),
        ("incentive attenuation", c9_attenuation),
        ("integrated game", c10_integrated_game),
        ("response-curve regimes", c11_figure),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
