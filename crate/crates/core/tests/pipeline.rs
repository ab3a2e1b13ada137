use dpa_core::covariance::BVariant;
use dpa_core::verify::{run_ensemble, Adjudication, EnsembleConfig, EnsembleReport, VerifyOptions};
use dpa_core::{IndexWindow, ModelParams};

#[test]
fn single_coordinate_clt() {
    let p = ModelParams::reference();
    let cfg = EnsembleConfig::new(20_000, 400, 31, IndexWindow::new(0, 1));
    let run = run_ensemble(&p, &cfg, &VerifyOptions::default()).unwrap();
    let r = &run.report;
    let pred = r.prediction(BVariant::Corrected).unwrap();
    assert!((pred.final_cov[0] - 0.195_918_367_346_938_8).abs() < 1e-12);
    assert!(pred.max_mismatch_se.unwrap() < 5.0);
    assert!(r.ks.as_ref().unwrap()[0].statistic < r.ks_critical_1pct);
    assert!(r.z_mean_max_se.unwrap() < 4.0);
    assert!(matches!(
        r.adjudication,
        Adjudication::Match {
            variant: BVariant::Corrected
        }
    ));
}

#[test]
fn report_json_round_trip() {
    let p = ModelParams::new(0.4, 0.6, 0.7, 1.3).unwrap();
    let cfg = EnsembleConfig::new(5_000, 120, 8, IndexWindow::new(1, 1));
    let report = run_ensemble(&p, &cfg, &VerifyOptions::default())
        .unwrap()
        .report;
    let back: EnsembleReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}
