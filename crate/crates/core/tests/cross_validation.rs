use sparse_ppf::simulation::{realization_rng, select_gammas, FilterKind, Study2Config};

const GRID: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0];

fn grid_steps(a: f64, b: f64) -> usize {
    let pos = |v: f64| GRID.iter().position(|&g| g == v).unwrap();
    pos(a).abs_diff(pos(b))
}

#[test]
fn study_two_selects_penalties_near_the_tuned_values() {
    let cfg = Study2Config::default();
    let scenario = cfg.scenario().unwrap();
    let data = scenario.simulate(&mut realization_rng(cfg.seed, 0)).unwrap();
    let kinds = [FilterKind::Ppf1, FilterKind::Ppf0];
    let (suite, cv) = select_gammas(&scenario, &data, &cfg.suite, &kinds, &GRID).unwrap();
    assert_eq!(cv.len(), 2);
    for (kind, res) in &cv {
        assert_eq!(res.grid, GRID);
        assert!(res.scores.iter().all(|s| s.is_finite()));
        let best = res.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let chosen = res.grid.iter().position(|&g| g == res.best).unwrap();
        assert_eq!(res.scores[chosen], best, "{kind:?}");
    }
    assert!(grid_steps(suite.ppf1.gamma, 0.5) <= 1, "{}", suite.ppf1.gamma);
    assert!(grid_steps(suite.ppf0.gamma, 0.1) <= 1, "{}", suite.ppf0.gamma);
}
