use chillplan_core::mdp::{
    build_lp, dp_oracle, extract_policy, solve_occupancy, CostSpec, MdpProblem, ThetaGrid,
};
use chillplan_core::regimes::StochasticMatrix;
use chillplan_core::scenario::DeskInstance;
use proptest::prelude::*;

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Band wide enough that toy tables carry no implicit penalties.
fn toy_cost(levels: usize) -> CostSpec {
    CostSpec {
        t_min: 0.0,
        t_max: levels as f64,
        lambda_under: 0.0,
        lambda_over: 0.0,
    }
}

#[test]
fn lp_shape_counts_without_implied_rows() {
    let grid = ThetaGrid::new(0.0, 1.0, 1.0).unwrap();
    // N = 2, two levels, one regime, two actions
    let succ = vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let cost = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let problem = MdpProblem::from_tables(
        grid,
        toy_cost(2),
        1,
        2,
        succ,
        cost,
        vec![StochasticMatrix::identity(1); 2],
    )
    .unwrap();
    let lp = build_lp(&problem).unwrap();
    assert_eq!(lp.program.num_vars(), 8);
    assert_eq!(lp.normalization_rows.len(), 1);
    assert_eq!(lp.flow_rows.len(), 3);
}

#[test]
fn single_state_single_action() {
    let grid = ThetaGrid::with_len(20.0, 1.0, 1).unwrap();
    let problem = MdpProblem::from_tables(
        grid,
        toy_cost(30),
        1,
        1,
        vec![20.0],
        vec![3.25],
        vec![StochasticMatrix::identity(1)],
    )
    .unwrap();
    let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
    assert!((occ.objective - 3.25).abs() < 1e-8);
    assert!((occ.x[0] - 1.0).abs() < 1e-8);
    let dp = dp_oracle(&problem).unwrap();
    assert!((dp.gain - 3.25).abs() < 1e-10);
}

#[test]
fn zero_costs_give_zero_objective() {
    let inst = DeskInstance::default();
    let base = inst.build().unwrap();
    let shape = base.shape();
    let succ: Vec<f64> = (0..shape.horizon)
        .flat_map(|t| {
            (0..shape.temps).flat_map(move |i| (0..shape.actions).map(move |a| (t, i, a)))
        })
        .map(|(t, i, a)| base.successor_temp(t, i, a))
        .collect();
    let transitions = (0..shape.horizon)
        .map(|t| base.transition(t).clone())
        .collect();
    let problem = MdpProblem::from_tables(
        *base.grid(),
        *base.cost_spec(),
        shape.regimes,
        shape.actions,
        succ,
        vec![0.0; shape.vars()],
        transitions,
    )
    .unwrap();
    let lp = build_lp(&problem).unwrap();
    let occ = solve_occupancy(&lp).unwrap();
    assert!(occ.objective.abs() < 1e-9);
    assert!(occ.residuals(&problem).unwrap().within(1e-6));
}

#[test]
fn single_action_gain_is_mean_forced_cost() {
    // One regime, one action: the temperature path is forced.
    let grid = ThetaGrid::new(0.0, 3.0, 1.0).unwrap();
    let n = 3;
    // from every level, step t moves to level (t + 1) % 3, costs t + 1 + i
    let mut succ = Vec::new();
    let mut cost = Vec::new();
    for t in 0..n {
        for i in 0..4 {
            succ.push(((t + 1) % 3) as f64);
            cost.push((t + 1 + i) as f64);
        }
    }
    let problem = MdpProblem::from_tables(
        grid,
        toy_cost(4),
        1,
        1,
        succ,
        cost,
        vec![StochasticMatrix::identity(1); n],
    )
    .unwrap();
    // steady state: at step t the level is t (step 0 is entered from step 2 at level 0)
    let expected = ((1 + 0) + (2 + 1) + (3 + 2)) as f64 / 3.0;
    let dp = dp_oracle(&problem).unwrap();
    assert!((dp.gain - expected).abs() < 1e-9, "{}", dp.gain);
    let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
    assert!((occ.objective - expected).abs() < 1e-7);
}

/// Minimum over deterministic stationary policies of the best reachable
/// cycle mean, for a one-step cycle with one regime.
fn min_mean_cycle(levels: usize, actions: usize, succ: &[usize], cost: &[f64]) -> f64 {
    let total = actions.pow(levels as u32);
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut choice = vec![0; levels];
        let mut c = code;
        for slot in choice.iter_mut() {
            *slot = c % actions;
            c /= actions;
        }
        for start in 0..levels {
            let mut seen = vec![usize::MAX; levels];
            let mut path = Vec::new();
            let mut s = start;
            while seen[s] == usize::MAX {
                seen[s] = path.len();
                path.push(s);
                s = succ[s * actions + choice[s]];
            }
            let cycle = &path[seen[s]..];
            let mean = cycle
                .iter()
                .map(|&k| cost[k * actions + choice[k]])
                .sum::<f64>()
                / cycle.len() as f64;
            best = best.min(mean);
        }
    }
    best
}

fn toy_tables() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    (
        proptest::collection::vec(0usize..4, 16),
        proptest::collection::vec(0.0f64..10.0, 16),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_dp_and_enumeration_agree((succ, cost) in toy_tables()) {
        let grid = ThetaGrid::new(0.0, 3.0, 1.0).unwrap();
        let problem = MdpProblem::from_tables(
            grid,
            toy_cost(4),
            1,
            4,
            succ.iter().map(|&k| k as f64).collect(),
            cost.clone(),
            vec![StochasticMatrix::identity(1)],
        )
        .unwrap();
        let brute = min_mean_cycle(4, 4, &succ, &cost);
        let lp = build_lp(&problem).unwrap();
        let occ = solve_occupancy(&lp).unwrap();
        let res = occ.residuals(&problem).unwrap();
        prop_assert!(res.within(1e-6), "{res:?}");
        prop_assert!((occ.objective - brute).abs() <= 1e-6 * brute.abs().max(1.0), "lp {} brute {brute}", occ.objective);
        let dp = dp_oracle(&problem).unwrap();
        prop_assert!((dp.gain - brute).abs() <= 1e-6 * brute.abs().max(1.0), "dp {} brute {brute}", dp.gain);
    }

    #[test]
    fn stochastic_desk_instances_agree(
        persistence in 0.2f64..0.95,
        regimes in 1usize..4,
        evening_factor in 1.0f64..4.0,
        price_step in 0.0f64..30.0,
    ) {
        let inst = DeskInstance {
            horizon: 12,
            regimes,
            persistence,
            evening_factor,
            price_step,
            evening: (8, 10),
            ..DeskInstance::default()
        };
        let problem = inst.build().unwrap();
        let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
        prop_assert!(occ.residuals(&problem).unwrap().within(1e-6));
        let dp = dp_oracle(&problem).unwrap();
        prop_assert!(rel_diff(occ.objective, dp.gain) < 1e-6, "lp {} dp {}", occ.objective, dp.gain);
    }
}

#[test]
fn cheap_cycle_attracts_all_mass() {
    // Two levels; staying at level 1 is cheap, everything else is dear.
    let grid = ThetaGrid::new(0.0, 1.0, 1.0).unwrap();
    // [i][a]: a=0 stay, a=1 switch
    let succ = vec![0.0, 1.0, 1.0, 0.0];
    let cost = vec![5.0, 4.0, 1.0, 6.0];
    let problem = MdpProblem::from_tables(
        grid,
        toy_cost(2),
        1,
        2,
        succ,
        cost,
        vec![StochasticMatrix::identity(1)],
    )
    .unwrap();
    let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
    assert!((occ.objective - 1.0).abs() < 1e-7);
    assert!((occ.get(0, 1, 0, 0) - 1.0).abs() < 1e-7);
    let policy = extract_policy(&problem, &occ).unwrap();
    assert_eq!(policy.deterministic_action(0, 1, 0), Some(0));
    // Level 0 is never visited: the fallback fills it.
    assert!(policy.is_fallback(0, 0, 0));
    assert!(policy.deterministic_action(0, 0, 0).is_some());
}

#[test]
fn symmetric_actions_split_evenly() {
    let grid = ThetaGrid::with_len(0.0, 1.0, 1).unwrap();
    let problem = MdpProblem::from_tables(
        grid,
        toy_cost(1),
        1,
        2,
        vec![0.0, 0.0],
        vec![2.0, 2.0],
        vec![StochasticMatrix::identity(1)],
    )
    .unwrap();
    let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
    let policy = extract_policy(&problem, &occ).unwrap();
    let probs = policy.probabilities(0, 0, 0);
    assert!(
        (probs[0] - 0.5).abs() < 1e-6 && (probs[1] - 0.5).abs() < 1e-6,
        "{probs:?}"
    );
}

#[test]
fn desk_instance_lp_matches_dp() {
    let problem = DeskInstance::default().build().unwrap();
    let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
    let res = occ.residuals(&problem).unwrap();
    assert!(res.within(1e-6), "{res:?}");
    let dp = dp_oracle(&problem).unwrap();
    assert!(
        rel_diff(occ.objective, dp.gain) < 1e-6,
        "lp {} dp {}",
        occ.objective,
        dp.gain
    );
    assert!(
        (occ.average_cost(&problem) - occ.objective).abs() < 1e-9 * occ.objective.abs().max(1.0)
    );

    let policy = extract_policy(&problem, &occ).unwrap();
    assert_eq!(policy.shape(), problem.shape());
}

#[test]
fn optimum_stays_safe() {
    // Penalties of 1000 $/°C dwarf the largest hourly energy bill here.
    let inst = DeskInstance::default();
    let problem = inst.build().unwrap();
    let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
    let shape = problem.shape();
    let grid = problem.grid();
    let limit = inst.cost.t_max + grid.step();
    let mut unsafe_mass = 0.0;
    for t in 0..shape.horizon {
        for i in 0..shape.temps {
            if grid.value(i) > limit + 1e-9 {
                for p in 0..shape.regimes {
                    unsafe_mass += occ.state_mass(t, i, p);
                }
            }
        }
    }
    assert!(unsafe_mass < 1e-6, "{unsafe_mass}");
}

#[test]
fn pricier_regimes_never_get_more_cooling() {
    // Independent regimes: today's regime says nothing about tomorrow's.
    let inst = DeskInstance {
        persistence: 0.25,
        ..DeskInstance::default()
    };
    let problem = inst.build().unwrap();
    let occ = solve_occupancy(&build_lp(&problem).unwrap()).unwrap();
    let policy = extract_policy(&problem, &occ).unwrap();
    let shape = problem.shape();
    let mut compared = 0;
    for t in 0..shape.horizon {
        for i in 0..shape.temps {
            for p in 1..shape.regimes {
                if policy.is_fallback(t, i, p) || policy.is_fallback(t, i, p - 1) {
                    continue;
                }
                let cheap = policy.expected_action(t, i, p - 1);
                let dear = policy.expected_action(t, i, p);
                assert!(
                    dear <= cheap + 1e-3,
                    "t={t} i={i}: regime {p} takes {dear} > {cheap}"
                );
                compared += 1;
            }
        }
    }
    assert!(compared > 0);
}
