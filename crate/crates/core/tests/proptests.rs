use std::sync::Arc;

use proptest::prelude::*;

use contract_forge::duality::Contract;
use contract_forge::model::{PayoffModel, Reweighted};
use contract_forge::order::Setting;
use contract_forge::outcome::{attenuation_check, scan_outcomes};
use contract_forge::scenarios::{ScenarioConfig, ScenarioKind};
use contract_forge::synthesis::{build_optimal_contract, discretize_menu, TargetOutcome};

fn base(kind: ScenarioKind) -> (ScenarioConfig, Setting) {
    let mut cfg = ScenarioConfig::builtin(kind);
    cfg.grid.n_a = 201;
    let s = Setting::from_config(&cfg).unwrap();
    (cfg, s)
}

fn reweighted(kind: ScenarioKind, scale: f64, action: f64, reply: f64) -> Setting {
    let (cfg, s) = base(kind);
    let model = Arc::new(Reweighted { inner: s.model.clone(), scale, action, reply });
    Setting::new(model, cfg.grid.n_a, cfg.grid.n_r, cfg.tolerances()).unwrap()
}

fn kind() -> impl Strategy<Value = ScenarioKind> {
    prop_oneof![Just(ScenarioKind::Cournot), Just(ScenarioKind::Networked), Just(ScenarioKind::Boycott)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn partial_value_dominates_robust(k in kind(), scale in 0.0..2.0f64, action in -1.0..1.0f64, reply in -1.0..1.0f64) {
        let s = reweighted(k, scale, action, reply);
        let scan = scan_outcomes(&s, 201).unwrap();
        prop_assert!(scan.dominance_violation() <= 1e-9 * scan.scale(), "{}", scan.dominance_violation());
    }

    #[test]
    fn robust_optimum_draws_weaker_incentives(k in kind(), scale in 0.2..2.0f64, action in -0.5..0.5f64, reply in -0.5..0.5f64) {
        let s = reweighted(k, scale, action, reply);
        let scan = scan_outcomes(&s, 201).unwrap();
        let rep = attenuation_check(&s, &scan, 1e-6).unwrap();
        prop_assert!(rep.pass, "gap {:e}", rep.incentive_gap);
    }

    #[test]
    fn cournot_schedule_matches_closed_form(target in 0.36..0.95f64) {
        let (_, s) = base(ScenarioKind::Cournot);
        let res = build_optimal_contract(&s, &TargetOutcome::pure(&s, target).unwrap()).unwrap();
        let a0 = s.a0();
        let on: Vec<_> = res.knots.iter().filter(|k| k.a >= a0 && k.a <= target).collect();
        prop_assert!(on.len() > 2);
        for w in on.windows(2) {
            prop_assert!(w[1].h_star >= w[0].h_star - 1e-9);
        }
        let h_target = s.h(s.reply(target).unwrap());
        for k in &on {
            prop_assert!(k.h_star <= h_target + 1e-9);
            prop_assert!((k.marginal - (0.5 - 1.5 * k.a)).abs() < 1e-6, "{} {}", k.a, k.marginal);
        }
        let t = res.transfer(target).unwrap();
        prop_assert!((t - (target / 2.0 - 0.75 * target * target - 1.0 / 12.0)).abs() < 1e-6);
    }

    #[test]
    fn menu_csv_roundtrip(target in 0.4..0.9f64, n in 1u32..5) {
        let (_, s) = base(ScenarioKind::Cournot);
        let res = build_optimal_contract(&s, &TargetOutcome::pure(&s, target).unwrap()).unwrap();
        let menu = discretize_menu(&res, n, 1e-3, 101).unwrap();
        let mut buf = Vec::new();
        menu.write_csv(&mut buf).unwrap();
        let back = Contract::read_csv(s.model.as_ref() as &dyn PayoffModel, buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), menu.len());
        for (x, y) in back.plans().iter().zip(menu.plans()) {
            prop_assert!((x.action - y.action).abs() <= 1e-12 * x.action.abs().max(1.0));
            prop_assert!((x.transfer - y.transfer).abs() <= 1e-12 * x.transfer.abs().max(1.0));
        }
    }
}
