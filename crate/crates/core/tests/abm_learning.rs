use entrydyn::abm::{self, AbmRun, InitSpec};
use entrydyn::analysis;
use entrydyn::game::{GameParams, LearningRule, ProbabilityModel};

fn setup() -> (GameParams, ProbabilityModel, InitSpec) {
    let model = ProbabilityModel::logistic(1.0, 0.0).unwrap();
    let params = GameParams::new(1000, 500, 0.01, 100, LearningRule::BasicReinforcement).unwrap();
    let q0 = model.as_logistic().unwrap().inverse(0.2).unwrap();
    (params, model, InitSpec::AllEqual { value: q0 })
}

#[test]
fn entry_fraction_rises_to_capacity() {
    let (params, model, init) = setup();
    let out = abm::simulate(&params, &model, &init, &AbmRun::new(0.2, 1, 1)).unwrap();
    let a: Vec<f64> = out.series.records.iter().map(|r| r.a).collect();
    assert!(a[..4].windows(2).all(|w| w[1] > w[0]), "{:?}", &a[..4]);
    let tail = &a[a.len() - 10..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
}

#[test]
fn single_run_learning_rate_matches_prefactor() {
    let (params, model, init) = setup();
    let run = AbmRun::new(0.2, 1, 1);
    let out = abm::simulate(&params, &model, &init, &run).unwrap();
    let state = abm::init_population(&params, &init, run.seed).unwrap();
    let c_p = analysis::learning_prefactor_population(&state, &model).unwrap();
    let gaps: Vec<f64> = out.series.records.iter().take(4).map(|r| 0.5 - r.a).collect();
    let two_round_rate = (gaps[0] / gaps[2]).ln() / (2.0 * params.tau());
    match analysis::aggregate_learning_fit(&out.series, &params, c_p) {
        Ok(fit) => assert!(
            fit.within_factor(2.0),
            "rate {} vs c_p r {} (ratio {})",
            fit.fit.rate,
            fit.predicted_rate,
            fit.ratio
        ),
        Err(e) => panic!(
            "{e}; gaps {gaps:?}, rate over the first two rounds {two_round_rate} vs c_p r {}",
            c_p * params.r()
        ),
    }
}
