use spinlock::estimation::{
    estimate_rates, tomography_rms, MeasurementConfig, ProtocolConfig, RateExperiment, Shots, TomographyMethod,
};
use spinlock::quantum::BlochVector;
use spinlock::sync::reference_rates;

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn tomography_error_scales_as_inverse_root_shots() {
    let m = BlochVector::new(0.3, -0.2, 0.5);
    let shots = [1e2, 1e3, 1e4];
    for method in [TomographyMethod::Resonant, TomographyMethod::Detuned { delta: 5.0 * reference_rates().gamma_g() }] {
        let rms: Vec<f64> = shots
            .iter()
            .map(|&n| {
                let cfg = MeasurementConfig::new(Shots::Finite(n as u64), 0.0, 7).unwrap();
                tomography_rms(m, &cfg, 200, method).unwrap()
            })
            .collect();
        let slope = log_slope(&shots, &rms);
        assert!((slope + 0.5).abs() <= 0.1, "{method:?}: {rms:?} slope {slope}");
    }
}

#[test]
fn protocol_recovers_reference_rates() {
    let r = reference_rates();
    let est = estimate_rates(&r, &ProtocolConfig::default()).unwrap();
    assert!((est.gamma_g.value / r.gamma_g() - 1.0).abs() < 0.1);
    assert!((est.gamma_d.value / r.gamma_d() - 1.0).abs() < 0.1);
    let coh = RateExperiment::Coherence.expected_rate(&r);
    assert!((est.gamma_coherence.value / coh - 1.0).abs() < 0.1);
    assert_eq!(est.experiments.len(), 4);
    for e in &est.experiments {
        assert_eq!(e.times.len(), 30);
    }
    let json = serde_json::to_string(&est).unwrap();
    assert!(json.contains("\"gamma_z\""));
}
