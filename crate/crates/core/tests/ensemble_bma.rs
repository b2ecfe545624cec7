//! Averaging behaviour on synthetic ensembles (GEV pipeline, which is cheap
//! enough for many seeds).

use extreme_bma::bma::*;
use extreme_bma::sim::{default_sites, synthetic_ensemble, EnsembleConfig};

fn mean_weights(report: &PipelineReport) -> Vec<f64> {
    let sites = &report.periods[0].sites;
    let k = sites[0].models.len();
    (0..k).map(|m| sites.iter().map(|s| s.models[m].weight).sum::<f64>() / sites.len() as f64).collect()
}

fn cfg(b: usize, seed: u64) -> BmaConfig {
    BmaConfig { b, seed, future_variance: FutureVariance::Point, ..Default::default() }
}

#[test]
fn unperturbed_model_gets_largest_weight() {
    // 30-year return levels carry sampling error comparable to a few times
    // the default perturbation, so "huge" has to be well beyond that.
    let mut wins = 0;
    for seed in 0..10 {
        let ens_cfg = EnsembleConfig {
            n_models: 5,
            model_scales: vec![0.0, 20.0, 20.0, 20.0, 20.0],
            ..Default::default()
        };
        let ens = synthetic_ensemble(&default_sites(), &ens_cfg, seed).unwrap();
        let report = run_pipeline(&ens.reanalysis, &ens.historical, &ens.future, &cfg(200, seed), Pipeline::Gev).unwrap();
        let w = mean_weights(&report);
        wins += w.iter().skip(1).all(|&x| x < w[0]) as usize;
    }
    assert!(wins >= 9, "unperturbed model largest in {wins} of 10 seeds");
}

#[test]
fn exchangeable_models_share_weight() {
    let k = 4;
    let mut totals = vec![0.0; k];
    for seed in 0..10 {
        let ens_cfg = EnsembleConfig {
            n_models: k,
            trend_perturbation: 0.0,
            dependence_perturbation: 0.0,
            ..Default::default()
        };
        let ens = synthetic_ensemble(&default_sites(), &ens_cfg, 40 + seed).unwrap();
        let report = run_pipeline(&ens.reanalysis, &ens.historical, &ens.future, &cfg(200, seed), Pipeline::Gev).unwrap();
        for (t, w) in totals.iter_mut().zip(mean_weights(&report)) {
            *t += w / 10.0;
        }
    }
    assert!(totals.iter().all(|w| (w - 0.25).abs() < 0.1), "{totals:?}");
}

#[test]
fn bootstrap_means_stable_when_doubling_b() {
    let ens = synthetic_ensemble(&default_sites(), &EnsembleConfig { n_models: 2, ..Default::default() }, 1).unwrap();
    let data = &ens.reanalysis;
    let means = |b: usize| {
        let idx = bootstrap_indices(data.n_years(), b, 5).unwrap();
        let e = &intensity_series(data, &idx, 5, &[20.0], &Estimator::Gev).unwrap()[0];
        (0..data.n_sites()).map(|s| e.moments(s).0).collect::<Vec<_>>()
    };
    for (a, b) in means(500).iter().zip(means(1000)) {
        assert!((a / b - 1.0).abs() < 0.02, "{a} vs {b}");
    }
}

#[test]
fn single_model_future_mean_is_its_point_estimate() {
    let ens = synthetic_ensemble(&default_sites(), &EnsembleConfig { n_models: 2, ..Default::default() }, 6).unwrap();
    let report = run_pipeline(&ens.reanalysis, &ens.historical[..1], &ens.future[..1], &cfg(50, 1), Pipeline::Gev).unwrap();
    for s in &report.periods[0].sites {
        assert_eq!(s.future.mean, s.models[0].future_point);
    }
}
