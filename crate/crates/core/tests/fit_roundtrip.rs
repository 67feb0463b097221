mod common;

use common::{reference_params, setup};
use ramanmem::dephasing::{canonical_orientation, efficiency_curve};
use ramanmem::fit::{
    fit_dephasing_curve, fit_fluorescence_tail, fit_noise_with_response, DataSet, DephasingFitOptions, FitOptions,
};
use ramanmem::noise::{NoiseEngine, NoiseResponse};
use ramanmem::{MagneticField, NoiseModelParams, PolarizationConfig, PulseShape, SpinSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn jitter(rng: &mut ChaCha8Rng, y: &[f64], rel: f64) -> Vec<f64> {
    let n = Normal::new(0.0, rel).unwrap();
    y.iter().map(|v| v * (1.0 + n.sample(rng))).collect()
}

fn perturb(rng: &mut ChaCha8Rng, v: f64) -> f64 {
    v * (1.0 + rng.gen_range(-0.5..0.5))
}

#[test]
fn noise_fit_recovers_generator() {
    let (_, grid, pulse) = setup(PulseShape::Gaussian, 40, 240);
    let engine = NoiseEngine::new(reference_params(), pulse, grid).unwrap();
    let response = NoiseResponse::build(&engine, NoiseResponse::DEFAULT_NODES).unwrap();
    let truth = NoiseModelParams::reference();
    let p: Vec<f64> = (0..14).map(|k| -840.0 + 80.0 * k as f64).collect();
    let clean: Vec<f64> = p.iter().map(|x| response.observed(*x, &truth).unwrap()).collect();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DataSet::new(p.clone(), jitter(&mut rng, &clean, 0.02)).unwrap();
        let guess = [perturb(&mut rng, truth.p_sat), perturb(&mut rng, truth.kappa)];
        let fit = fit_noise_with_response(&data, &response, true, Some(guess), &FitOptions::default()).unwrap();
        assert!(fit.converged, "seed {seed}: {:?}", fit.diagnostics);
        let (ps, k) = (fit.parameters[0], fit.parameters[1]);
        assert!((ps / truth.p_sat - 1.0).abs() < 0.1, "seed {seed}: P_s = {ps}");
        assert!((k / truth.kappa - 1.0).abs() < 0.1, "seed {seed}: kappa = {k}");
    }
}

#[test]
fn dephasing_fit_recovers_generator_up_to_symmetry() {
    let system = SpinSystem::new(PolarizationConfig::default()).unwrap();
    let pops = system.uniform_populations();
    let truth = MagneticField::from_degrees(0.13, 30.0, 25.0).unwrap();
    let t: Vec<f64> = (0..=40).map(|k| 100.0 * k as f64).collect();
    let clean: Vec<f64> = efficiency_curve(&t, &truth, &system, &pops, 0.3)
        .unwrap()
        .iter()
        .map(|p| p.eta_scaled)
        .collect();
    let (th0, ph0) = canonical_orientation(truth.theta(), truth.phi());
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let data = DataSet::new(t.clone(), jitter(&mut rng, &clean, 0.02)).unwrap();
        let guess = [
            perturb(&mut rng, 0.13),
            perturb(&mut rng, truth.theta()),
            perturb(&mut rng, truth.phi()),
            perturb(&mut rng, 0.3),
        ];
        let opts = DephasingFitOptions {
            guess: Some(guess),
            ..Default::default()
        };
        let fit = fit_dephasing_curve(&data, &system, &pops, &opts).unwrap();
        let q = &fit.parameters;
        let (th, ph) = canonical_orientation(q[1], q[2]);
        assert!((q[0] / 0.13 - 1.0).abs() < 0.1, "seed {seed}: B = {}", q[0]);
        assert!((th / th0 - 1.0).abs() < 0.1, "seed {seed}: theta = {}", th.to_degrees());
        assert!((ph / ph0 - 1.0).abs() < 0.1, "seed {seed}: phi = {}", ph.to_degrees());
        assert!((q[3] / 0.3 - 1.0).abs() < 0.1, "seed {seed}: scale = {}", q[3]);
    }
}

#[test]
fn fluorescence_fit_on_counting_data() {
    // Poisson-distributed counts from a 32 ns decay.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t: Vec<f64> = (0..150).map(|k| k as f64).collect();
    let counts: Vec<f64> = t
        .iter()
        .map(|x| {
            let mean = 5000.0 * (-x / 32.0).exp();
            if mean > 0.0 {
                Poisson::new(mean).unwrap().sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    let sigma: Vec<f64> = counts.iter().map(|c: &f64| c.max(1.0).sqrt()).collect();
    let data = DataSet::with_sigma(t, counts, sigma).unwrap();
    let fit = fit_fluorescence_tail(&data, (5.0, 149.0), None, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let tau = fit.get("lifetime_ns").unwrap();
    let err = fit.uncertainties()[1];
    assert!(
        (tau - 32.0).abs() < 4.0 * err && (tau / 32.0 - 1.0).abs() < 0.05,
        "{tau} ± {err}"
    );
}

#[test]
fn fluorescence_fit_is_exact_on_noiseless_data() {
    let t: Vec<f64> = (0..200).map(|k| 0.5 * k as f64).collect();
    let y: Vec<f64> = t.iter().map(|x| 800.0 * (-x / 30.5).exp()).collect();
    let data = DataSet::new(t, y).unwrap();
    let fit = fit_fluorescence_tail(&data, (0.0, 99.5), None, &FitOptions::default()).unwrap();
    let tau = fit.get("lifetime_ns").unwrap();
    assert!((tau / 30.5 - 1.0).abs() < 1e-6, "{tau}");
}
