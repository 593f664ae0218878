use chillplan_core::controllers::{Controller, FixedRule, MdpController, Sampling};
use chillplan_core::ingest::{align, synth_workload, Window};
use chillplan_core::mdp::{
    build_lp, extract_policy, solve_occupancy, CostSpec, MdpProblem, ThetaGrid,
};
use chillplan_core::qfr::{fit_regimes, FourierDesign, RegimeModel};
use chillplan_core::regimes::{estimate, MonthGrouping};
use chillplan_core::scenario::{cycle_profile, DiurnalTemperature, PeakPriceMarket};
use chillplan_core::sim::{local_hour, rollout, summarize, SimSettings, Trajectory};
use chillplan_core::thermal::{cooling_energy, heat_load, Plant};
use proptest::prelude::*;
use std::sync::OnceLock;

struct Fixture {
    model: RegimeModel,
    controller: Controller,
    data: chillplan_core::ingest::AlignedDataset,
    settings: SimSettings,
}

/// One synthetic summer, a 4-regime model fitted on it and a daily plan.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let summer = Window::summer(2020).unwrap();
        let price = PeakPriceMarket::default()
            .generate(1, summer.start, summer.hours())
            .unwrap();
        let temp = DiurnalTemperature::default()
            .generate(2, summer.start, summer.hours())
            .unwrap();
        let work = synth_workload(3, summer.start, summer.hours(), 50_000, 0.4).unwrap();
        let obs: Vec<(i64, f64)> = price.points().collect();
        let model = fit_regimes(&obs, 4, &FourierDesign::new(2, 1)).unwrap();
        let classified: Vec<(i64, usize)> = obs
            .iter()
            .map(|&(h, p)| (h, model.classify(h, p)))
            .collect();
        let chain = estimate(&classified, 4, 0.5, MonthGrouping::Monthly).unwrap();
        let plant = Plant::default();
        let cost = CostSpec::default();
        let grid = ThetaGrid::new(15.0, 32.0, 1.0).unwrap();
        let july = Window::days(
            chrono::NaiveDate::from_ymd_opt(2020, 7, 1).unwrap(),
            chrono::NaiveDate::from_ymd_opt(2020, 7, 31).unwrap(),
        )
        .unwrap();
        let t_out = cycle_profile(&temp.slice(&july).unwrap(), 24).unwrap();
        let q = cycle_profile(&work.slice(&july).unwrap(), 24)
            .unwrap()
            .iter()
            .map(|c| heat_load(&plant.heat_load, *c))
            .collect();
        let problem = MdpProblem::from_models(
            july.start,
            grid,
            cost.tightened(0.5).unwrap(),
            &plant,
            t_out,
            q,
            &model,
            &chain,
        )
        .unwrap();
        let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
        let policy = extract_policy(&problem, &occ).unwrap();
        let controller = Controller::QfrMdp(Box::new(
            MdpController::new(policy, model.clone(), Sampling::Sample).unwrap(),
        ));
        let data = align(&price, &temp, &work, july).unwrap();
        let settings = SimSettings {
            plant,
            cost,
            grid,
            utc_offset_hours: 0,
            regime_model: Some(model.clone()),
        };
        Fixture {
            model,
            controller,
            data,
            settings,
        }
    })
}

#[test]
fn replay_is_bit_for_bit() {
    let f = fixture();
    let a = rollout(&f.controller, &f.data, &f.settings, 22.5, 9).unwrap();
    let b = rollout(&f.controller, &f.data, &f.settings, 22.5, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    let back = Trajectory::from_csv_str(&a.controller, &a.to_csv_string().unwrap()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn accounting_identities_hold() {
    let f = fixture();
    let thermal = f.settings.plant.thermal();
    for c in [
        &f.controller,
        &Controller::Greedy,
        &Controller::FixedRule(FixedRule::default()),
    ] {
        let traj = rollout(c, &f.data, &f.settings, 22.5, 1).unwrap();
        let mut theta = 22.5;
        for r in &traj.records {
            assert_eq!(r.theta, theta);
            let next = thermal.successor(r.theta, r.t_out, r.heat_load, r.action);
            assert_eq!(r.theta_next, next);
            let kwh = cooling_energy(&f.settings.plant.chiller, r.action, r.t_out, 3600.0);
            assert_eq!(r.energy_kwh, kwh);
            assert!((r.energy_cost - kwh * r.price / 1000.0).abs() < 1e-9);
            assert_eq!(r.regime, Some(f.model.classify(r.hour, r.price)));
            theta = next;
        }
        let report = summarize(&traj, &f.settings.cost).unwrap();
        let sum: f64 = traj.records.iter().map(|r| r.energy_cost).sum();
        assert!((report.total_energy_cost - sum).abs() < 1e-6);
        assert_eq!(report.hours, traj.records.len());
    }
}

#[test]
fn planned_and_greedy_stay_in_band_for_july() {
    let f = fixture();
    for c in [&f.controller, &Controller::Greedy] {
        let r = summarize(
            &rollout(c, &f.data, &f.settings, 22.5, 3).unwrap(),
            &f.settings.cost,
        )
        .unwrap();
        assert!(
            r.max_theta <= 27.0 + 1e-9 && r.min_theta >= 18.0 - 1e-9,
            "{}: {r:?}",
            c.name()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fixed_rule_abstains_during_the_local_peak(offset in -12i32..=12, theta0 in 18.0..27.0f64) {
        let f = fixture();
        let settings = SimSettings { utc_offset_hours: offset, ..f.settings.clone() };
        let rule = FixedRule::default();
        let traj = rollout(&Controller::FixedRule(rule), &f.data, &settings, theta0, 0).unwrap();
        for r in &traj.records {
            if rule.in_peak(local_hour(r.hour, offset)) {
                prop_assert_eq!(r.action, 0);
            }
        }
    }

    #[test]
    fn different_seeds_only_move_sampled_actions(seed in any::<u64>()) {
        let f = fixture();
        let g1 = rollout(&Controller::Greedy, &f.data, &f.settings, 22.5, seed).unwrap();
        let g2 = rollout(&Controller::Greedy, &f.data, &f.settings, 22.5, seed.wrapping_add(1)).unwrap();
        prop_assert_eq!(g1, g2);
    }
}
