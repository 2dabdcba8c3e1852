use entrydyn::game::{GameParams, LearningRule, ProbabilityModel};
use entrydyn::kinetic::{self, DensityGrid, GridSpec, KineticVariant, PdeRun};

fn model() -> ProbabilityModel {
    ProbabilityModel::logistic(1.0, 0.0).unwrap()
}

fn initial_density(cells: usize) -> DensityGrid {
    let spec = GridSpec::new(-12.0, 12.0, cells).unwrap();
    let mean = kinetic::gaussian_mean_for_entry_fraction(&spec, &model(), 1.0, 0.2).unwrap();
    DensityGrid::gaussian(spec, mean, 1.0).unwrap()
}

fn a_at(params: &GameParams, cells: usize, t_end: f64) -> Vec<(f64, f64)> {
    let run = PdeRun::new(KineticVariant::Reinforcement, t_end, 1e-3);
    let out = kinetic::solve(&initial_density(cells), params, &model(), &run).unwrap();
    out.series.records.iter().map(|r| (r.t, r.a)).collect()
}

#[test]
fn halving_the_cell_width_barely_moves_a() {
    let params = GameParams::new(1000, 500, 0.01, 100, LearningRule::BasicReinforcement).unwrap();
    let coarse = a_at(&params, 400, 0.05);
    let medium = a_at(&params, 800, 0.05);
    let fine = a_at(&params, 1600, 0.05);
    let diff = |x: &[(f64, f64)], y: &[(f64, f64)]| {
        x.iter().zip(y).map(|(u, v)| (u.1 - v.1).abs()).fold(0.0, f64::max)
    };
    let d1 = diff(&coarse, &medium);
    let d2 = diff(&medium, &fine);
    assert!(d2 < 0.02, "refinement changed a by {d2}");
    // first order: the change roughly halves with each refinement
    let order = (d1 / d2).log2();
    assert!((0.7..1.5).contains(&order), "observed order {order} ({d1}, {d2})");
}

/// `max mu / (dq max |v|)` along a learning-phase run.
fn diffusion_to_drift(params: &GameParams) -> Vec<(f64, f64, f64)> {
    let f0 = initial_density(800);
    let spec = *f0.spec();
    let mut run = PdeRun::new(KineticVariant::Reinforcement, 0.05, 1e-3);
    run.snapshot_times = vec![0.0, 0.002, 0.005, 0.01, 0.02];
    let out = kinetic::solve(&f0, params, &model(), &run).unwrap();
    out.snapshots
        .iter()
        .map(|snap| {
            let m = kinetic::moments(&snap.density, &model()).unwrap();
            let c = kinetic::coefficients(m, params, &model(), &spec, KineticVariant::Reinforcement).unwrap();
            let mu = c.diffusivity.iter().cloned().fold(0.0, f64::max);
            let v = c.velocity.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let gap = params.kappa() - m.a;
            let h = params.payoff_scale();
            let scale = params.n_agents() as f64 * h * gap + h / gap;
            (snap.t, mu / (spec.dq() * v), scale / spec.dq())
        })
        .collect()
}

#[test]
fn diffusion_tracks_the_asymptotic_drift_ratio() {
    // same r = 1000 and N, payoff scale differing by a factor 10
    let large = GameParams::new(1000, 500, 0.01, 100, LearningRule::BasicReinforcement).unwrap();
    let small = GameParams::new(1000, 500, 0.001, 1000, LearningRule::BasicReinforcement).unwrap();
    let (rows_large, rows_small) = (diffusion_to_drift(&large), diffusion_to_drift(&small));
    for &(t, ratio, scale) in rows_large.iter().chain(&rows_small) {
        let normalized = ratio / scale;
        assert!((0.1..1.0).contains(&normalized), "t = {t}: ratio {ratio}, scale {scale}");
    }
    let shrink = rows_large[0].1 / rows_small[0].1;
    assert!((8.0..12.0).contains(&shrink), "shrink {shrink}");
}
