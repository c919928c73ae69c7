use gpgibbs::ldp::{
    concentration_experiment, fit_rate, free_energy_experiment, gaussian_shell_probability,
    quadrature_oracle, ConcentrationSettings, GridSpec, Observable, RatePoint,
};
use gpgibbs::mcmc::estimate_partition;
use gpgibbs::rng::stream;
use gpgibbs::{GibbsParams, HermiteBasis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_lines_are_recovered(c in -5.0..5.0f64, b in -3.0..3.0f64, k in 3usize..8) {
        let pts: Vec<RatePoint> = (0..k)
            .map(|i| {
                let eps = 0.5 / (i + 1) as f64;
                RatePoint { epsilon: eps, log_value: -c / eps + b, std_error: 0.0 }
            })
            .collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.slope_c - c).abs() <= 1e-9 * c.abs().max(1.0));
        prop_assert!((fit.intercept_b - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
}

#[test]
fn noisy_fit_within_three_standard_errors() {
    let (c, b, sigma) = (1.3, -0.4, 0.05);
    let mut rng = stream(41, 0);
    let pts: Vec<RatePoint> = [0.4, 0.3, 0.2, 0.15, 0.1, 0.07]
        .iter()
        .map(|&eps| {
            let noise: f64 = rng.sample(StandardNormal);
            RatePoint { epsilon: eps, log_value: -c / eps + b + sigma * noise, std_error: sigma }
        })
        .collect();
    let fit = fit_rate(&pts).unwrap();
    assert!((fit.slope_c - c).abs() <= 3.0 * fit.slope_se, "{} +- {}", fit.slope_c, fit.slope_se);
    assert!(fit_rate(&pts[..2]).is_err());
    let same = vec![pts[0]; 4];
    assert!(fit_rate(&same).is_err());
}

#[test]
fn free_energy_without_interaction_vanishes() {
    let b = HermiteBasis::new(3).unwrap();
    let base = GibbsParams::new(0.5, 0.0, 0.0, 3, 1.0, 0.1).unwrap();
    let rep = free_energy_experiment(&b, &base, &[0.4, 0.2, 0.1], 1000, 3).unwrap();
    for cell in &rep.cells {
        assert_eq!(cell.estimate, 0.0);
    }
    assert!(rep.pass);
}

fn small_concentration(delta: &[f64]) -> gpgibbs::ldp::ExperimentReport {
    let b = HermiteBasis::new(4).unwrap();
    let base = GibbsParams::new(0.3, 1.0, 0.05, 4, 1.0, 0.2).unwrap();
    let settings = ConcentrationSettings {
        n_steps: 3000,
        n_burn: 500,
        thin: 5,
        ..ConcentrationSettings::default()
    };
    concentration_experiment(&b, &base, &[0.4, 0.3, 0.2], delta, &settings, 5).unwrap()
}

#[test]
fn concentration_edge_thresholds() {
    let rep = small_concentration(&[0.0, 1e3]);
    for cell in rep.cells.iter().filter(|c| c.series == "soliton") {
        if cell.r_or_delta == 0.0 {
            assert_eq!(cell.estimate, 1.0);
            assert!(!cell.censored);
        } else {
            assert!(cell.censored);
        }
    }
    let zero = rep
        .fits
        .iter()
        .find(|f| f.r_or_delta == 0.0 && f.fit.is_some())
        .unwrap();
    assert!(zero.fit.as_ref().unwrap().slope_c.abs() <= 1e-12);
    assert!(rep.fits.iter().filter(|f| f.r_or_delta == 1e3).all(|f| f.fit.is_none()));
}

#[test]
fn reports_are_reproducible() {
    let a = small_concentration(&[0.2]).to_json().unwrap();
    let b = small_concentration(&[0.2]).to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_without_interaction() {
    let grid = GridSpec::default();
    for n in [0, 1] {
        let b = HermiteBasis::new(n).unwrap();
        let p = GibbsParams::new(0.3, 0.0, 0.0, n, 1.0, 0.2).unwrap();
        let z = quadrature_oracle(&b, &p, Observable::Partition, &grid).unwrap();
        assert!((z - 1.0).abs() <= 1e-10, "N {n}: {z}");
    }
    let b = HermiteBasis::new(0).unwrap();
    let p = GibbsParams::new(0.3, 0.0, 0.0, 0, 1.0, 0.2).unwrap();
    let s = quadrature_oracle(&b, &p, Observable::ShellProbability, &grid).unwrap();
    assert!((s - gaussian_shell_probability(0.3, 1.0, 0.2)).abs() <= 1e-10);
    let b = HermiteBasis::new(2).unwrap();
    let p = GibbsParams::new(0.3, 0.0, 0.0, 2, 1.0, 0.2).unwrap();
    assert!(quadrature_oracle(&b, &p, Observable::Partition, &grid).is_err());
}

#[test]
fn two_mode_oracle_matches_monte_carlo() {
    let b = HermiteBasis::new(1).unwrap();
    let p = GibbsParams::new(0.5, 1.0, 0.05, 1, 1.0, 0.2).unwrap();
    let z = quadrature_oracle(&b, &p, Observable::Partition, &GridSpec::default()).unwrap();
    let mc = estimate_partition(&b, &p, 100_000, &mut stream(42, 0)).unwrap();
    assert!((mc.value - z.ln()).abs() <= 3.0 * mc.std_error, "{} vs {}", mc.value, z.ln());
}
