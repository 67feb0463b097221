//! Acceptance suite. Prints one `[Cn] PASS|FAIL` line per criterion and
//! exits with a failure status if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ramanmem::dephasing::{canonical_orientation, efficiency_curve, evolution_operator, lifetime_1e, Precession};
use ramanmem::fit::{
    fit_dephasing_curve, fit_fluorescence_tail, fit_noise_with_response, DataSet, DephasingFitOptions, FitOptions,
};
use ramanmem::mbsolver::greens_kernels;
use ramanmem::noise::{pump_populations, snr_estimate, NoiseEngine, NoiseResponse};
use ramanmem::units::Unit;
use ramanmem::{
    EnsembleParams, FrequencyConvention, Grid, MagneticField, NoiseBudget, NoiseModelParams, PolarizationConfig,
    PulseShape, PulseSpec, PumpState, SpinSystem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const CONV: FrequencyConvention = FrequencyConvention::Ordinary;
const P_SAT: f64 = 84.0;
const KAPPA: f64 = 0.12;
const FWHM_NS: f64 = 0.3;
const ENERGY_GHZ: f64 = 30.0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

struct Ctx {
    params: EnsembleParams,
    engine: NoiseEngine,
    build_secs: f64,
}

fn spec(shape: PulseShape) -> PulseSpec {
    let w = CONV.quoted_to_rad_per_ns(ENERGY_GHZ, Unit::GHz).unwrap();
    PulseSpec::new(shape, FWHM_NS, w).unwrap()
}

fn engine_on(shape: PulseShape, params: EnsembleParams, grid: Grid) -> NoiseEngine {
    let pulse = spec(shape).sample(&grid).unwrap();
    NoiseEngine::new(params, pulse, grid).unwrap()
}

fn blue_pump() -> PumpState {
    pump_populations(-10.0 * P_SAT, P_SAT).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1(ctx: &Ctx) -> Outcome {
    let t = Instant::now();
    let model = NoiseModelParams::new(P_SAT, KAPPA, true).unwrap();
    let s = ctx.engine.observed(-10.0 * P_SAT, &model).unwrap();
    let secs = ctx.build_secs + t.elapsed().as_secs_f64();
    let pass = (0.15..=0.35).contains(&s) && secs <= 300.0;
    Outcome::new(
        pass,
        format!("observed noise at P = -10 P_s: {s:.4} photons/pulse (band [0.15, 0.35]); runtime {secs:.1} s (limit 300 s)"),
    )
}

fn c2(ctx: &Ctx) -> Outcome {
    let b = ctx.engine.budget(&blue_pump()).unwrap();
    let (_, as_frac) = b.fractions().unwrap();
    let filtered = KAPPA * b.detected(false);
    let snr = snr_estimate(1.0, filtered).unwrap();
    let pass = (0.50..=0.70).contains(&as_frac) && (0.06..=0.14).contains(&filtered) && (7.0..=14.0).contains(&snr);
    Outcome::new(
        pass,
        format!(
            "anti-Stokes fraction {as_frac:.4} (band [0.50, 0.70]); filtered noise {filtered:.4} (band [0.06, 0.14]); SNR {snr:.2} (band [7, 14])"
        ),
    )
}

fn c3(ctx: &Ctx) -> Outcome {
    let model = NoiseModelParams::new(P_SAT, KAPPA, true).unwrap();
    let p: Vec<f64> = (1..=8).map(|k| 3.0 * P_SAT * k as f64 / 8.0).collect();
    let s: Vec<f64> = p.iter().map(|x| ctx.engine.observed(*x, &model).unwrap()).collect();
    let increasing = s.windows(2).all(|w| w[1] > w[0]);
    let n = p.len() as f64;
    let (mx, my) = (p.iter().sum::<f64>() / n, s.iter().sum::<f64>() / n);
    let sxy: f64 = p.iter().zip(&s).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = p.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = s.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    Outcome::new(
        increasing && r2 > 0.95,
        format!(
            "8 points on (0, 3 P_s]: strictly increasing = {increasing}, from {:.4} to {:.4}; linear R^2 = {r2:.5} (need > 0.95)",
            s[0], s[7]
        ),
    )
}

fn c4() -> Outcome {
    let t = Instant::now();
    let system = SpinSystem::new(PolarizationConfig::default()).unwrap();
    let pops = system.uniform_populations();
    let field = MagneticField::from_degrees(0.13, 30.0, 25.0).unwrap();
    let life = lifetime_1e(&field, &system, &pops, 4000.0).unwrap();
    let at_1us = efficiency_curve(&[1000.0], &field, &system, &pops, 0.30).unwrap()[0].eta_scaled;
    let secs = t.elapsed().as_secs_f64();
    let life_us = life.map(|t| t / 1000.0);
    let pass = life_us.is_some_and(|t| (1.1..=1.9).contains(&t)) && (0.15..=0.25).contains(&at_1us) && secs <= 10.0;
    Outcome::new(
        pass,
        format!(
            "1/e time {} us (band [1.1, 1.9]); 0.30 eta(1 us) = {at_1us:.4} (band [0.15, 0.25]); runtime {secs:.2} s (limit 10 s)",
            life_us.map_or("none".to_string(), |t| format!("{t:.4}"))
        ),
    )
}

fn components(b: &NoiseBudget) -> [f64; 4] {
    [
        b.s_stokes_spont,
        b.s_stokes_fwm,
        b.s_antistokes_spont,
        b.s_antistokes_fwm,
    ]
}

fn c5(ctx: &Ctx) -> Outcome {
    let square = engine_on(PulseShape::Square, ctx.params, spec(PulseShape::Square).default_grid());
    let mut worst: f64 = 0.0;
    let mut at = blue_pump();
    for pump in [
        blue_pump(),
        PumpState::from_p3(0.5).unwrap(),
        pump_populations(3.0 * P_SAT, P_SAT).unwrap(),
    ] {
        let a = components(&ctx.engine.budget(&pump).unwrap());
        let b = components(&square.budget(&pump).unwrap());
        for (x, y) in a.iter().zip(&b) {
            let r = rel(*y, *x);
            if r > worst {
                worst = r;
                at = pump;
            }
        }
    }
    // The square edges make the scheme first order, so the gap at the worst
    // pump state is also shown on the doubled grid and extrapolated.
    let doubled = |shape: PulseShape| {
        let grid = spec(shape).grid_with(2 * Grid::DEFAULT_NZ, 2 * Grid::DEFAULT_NTAU);
        components(&engine_on(shape, ctx.params, grid).budget(&at).unwrap())
    };
    let (g2, s2) = (doubled(PulseShape::Gaussian), doubled(PulseShape::Square));
    let (g1, s1) = (
        components(&ctx.engine.budget(&at).unwrap()),
        components(&square.budget(&at).unwrap()),
    );
    let (fine, extrapolated) = (0..4).fold((0.0f64, 0.0f64), |(f, e), k| {
        let sq = 2.0 * s2[k] - s1[k];
        let ga = g2[k] + (g2[k] - g1[k]) / 3.0;
        (f.max(rel(s2[k], g2[k])), e.max(rel(sq, ga)))
    });
    Outcome::new(
        worst < 0.01,
        format!(
            "largest relative Gaussian/square difference on the default grid {worst:.3e} at p3 = {:.4} (limit 1e-2); same pump state: {fine:.3e} on the doubled grid, {extrapolated:.1e} extrapolated",
            at.p3()
        ),
    )
}

fn commutator_error(params: &EnsembleParams, nz: usize, ntau: usize, target: f64) -> f64 {
    let s = spec(PulseShape::Gaussian);
    let grid = s.grid_with(nz, ntau);
    let pulse = s.sample(&grid).unwrap();
    let k = greens_kernels(params, &pulse, &PumpState::all_in_1(), &grid).unwrap();
    [-0.3, -0.15, 0.0, 0.15, 0.3]
        .iter()
        .map(|tau| {
            let i = ((tau - grid.tau_span.0) / grid.dtau()).round() as usize;
            (k.stokes_commutator(i) - target).abs()
        })
        .fold(0.0, f64::max)
}

fn c6(ctx: &Ctx) -> Outcome {
    let lossless = EnsembleParams {
        gamma: 0.0,
        ..ctx.params
    };
    let e1 = commutator_error(&lossless, Grid::DEFAULT_NZ, Grid::DEFAULT_NTAU, 1.0);
    let e2 = commutator_error(&lossless, 2 * Grid::DEFAULT_NZ, 2 * Grid::DEFAULT_NTAU, 1.0);
    let (g, d) = (ctx.params.gamma, ctx.params.delta_s);
    let transmission = (-2.0 * ctx.params.d * g * g / (g * g + d * d)).exp();
    let lossy = commutator_error(&ctx.params, Grid::DEFAULT_NZ, Grid::DEFAULT_NTAU, transmission);
    Outcome::new(
        e1 < 1e-3 && e2 < 2.5e-4,
        format!(
            "lossless K-G+L at 5 times: max |sum - 1| = {e1:.2e} default grid (limit 1e-3), {e2:.2e} doubled grid (limit 2.5e-4); with loss the sum tracks the transmission {transmission:.5} to {lossy:.2e}"
        ),
    )
}

fn c7() -> Outcome {
    let system = SpinSystem::new(PolarizationConfig::default()).unwrap();
    let pops = system.uniform_populations();
    let field = MagneticField::from_degrees(0.13, 30.0, 25.0).unwrap();
    let doubled = field.with_b(0.26).unwrap();
    let (pr, pr2) = (Precession::new(&system, &field), Precession::new(&system, &doubled));
    let times = [0.0, 137.0, 1000.0, 2500.0, 4000.0];
    let scaling = times
        .iter()
        .map(|t| (pr.eta(*t, &pops) - pr2.eta(t / 2.0, &pops)).abs())
        .fold(0.0, f64::max);

    let mut unitarity: f64 = 0.0;
    for t in times {
        let u = evolution_operator(&field, t, &system);
        let p = u.adjoint() * &u;
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let d = if i == j { 1.0 } else { 0.0 };
                unitarity = unitarity.max((p[(i, j)].re - d).hypot(p[(i, j)].im));
            }
        }
    }

    let zero = Precession::new(&system, &field.with_b(0.0).unwrap());
    let eta0 = zero.eta(0.0, &pops);
    let flat = times
        .iter()
        .map(|t| (zero.eta(*t, &pops) - eta0).abs())
        .fold(0.0, f64::max);

    let p0 = (pump_populations(0.0, P_SAT).unwrap().p3() - 0.5).abs();
    let ps = (pump_populations(P_SAT, P_SAT).unwrap().p3() - 0.75).abs();
    let pump = p0.max(ps);
    Outcome::new(
        scaling < 1e-12 && unitarity < 1e-10 && flat < 1e-12 && pump < 1e-12,
        format!(
            "B t scaling {scaling:.1e} (limit 1e-12); unitarity {unitarity:.1e} (limit 1e-10); B = 0 drift {flat:.1e} (limit 1e-12); pump points {pump:.1e} (limit 1e-12)"
        ),
    )
}

fn jitter(rng: &mut ChaCha8Rng, y: &[f64]) -> Vec<f64> {
    let n = Normal::new(0.0, 0.02).unwrap();
    y.iter().map(|v| v * (1.0 + n.sample(rng))).collect()
}

fn perturb(rng: &mut ChaCha8Rng, v: f64) -> f64 {
    v * (1.0 + rng.gen_range(-0.5..0.5))
}

fn within(got: &[f64], want: &[f64]) -> bool {
    got.iter().zip(want).all(|(g, w)| rel(*g, *w) < 0.1)
}

fn c8(ctx: &Ctx) -> Outcome {
    const SEEDS: u64 = 20;
    let needed = 19;

    let response = NoiseResponse::build(&ctx.engine, NoiseResponse::DEFAULT_NODES).unwrap();
    let truth = NoiseModelParams::reference();
    let p: Vec<f64> = (0..14).map(|k| -840.0 + 80.0 * k as f64).collect();
    let clean: Vec<f64> = p.iter().map(|x| response.observed(*x, &truth).unwrap()).collect();
    let noise_ok = (0..SEEDS)
        .filter(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let data = DataSet::new(p.clone(), jitter(&mut rng, &clean)).unwrap();
            let guess = [perturb(&mut rng, truth.p_sat), perturb(&mut rng, truth.kappa)];
            fit_noise_with_response(&data, &response, true, Some(guess), &FitOptions::default())
                .is_ok_and(|f| f.converged && within(&f.parameters, &[truth.p_sat, truth.kappa]))
        })
        .count();

    let system = SpinSystem::new(PolarizationConfig::default()).unwrap();
    let pops = system.uniform_populations();
    let field = MagneticField::from_degrees(0.13, 30.0, 25.0).unwrap();
    let t: Vec<f64> = (0..=40).map(|k| 100.0 * k as f64).collect();
    let clean: Vec<f64> = efficiency_curve(&t, &field, &system, &pops, 0.3)
        .unwrap()
        .iter()
        .map(|q| q.eta_scaled)
        .collect();
    let (th0, ph0) = canonical_orientation(field.theta(), field.phi());
    let dephasing_ok = (0..SEEDS)
        .filter(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let data = DataSet::new(t.clone(), jitter(&mut rng, &clean)).unwrap();
            let guess = [
                perturb(&mut rng, 0.13),
                perturb(&mut rng, field.theta()),
                perturb(&mut rng, field.phi()),
                perturb(&mut rng, 0.3),
            ];
            let opts = DephasingFitOptions {
                guess: Some(guess),
                ..Default::default()
            };
            fit_dephasing_curve(&data, &system, &pops, &opts).is_ok_and(|f| {
                let q = &f.parameters;
                let (th, ph) = canonical_orientation(q[1], q[2]);
                within(&[q[0], th, ph, q[3]], &[0.13, th0, ph0, 0.3])
            })
        })
        .count();

    let tf: Vec<f64> = (0..150).map(|k| k as f64).collect();
    let clean: Vec<f64> = tf.iter().map(|x| 1000.0 * (-x / 30.5).exp()).collect();
    let fluor_ok = (0..SEEDS)
        .filter(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let data = DataSet::new(tf.clone(), jitter(&mut rng, &clean)).unwrap();
            let guess = [perturb(&mut rng, 1000.0), perturb(&mut rng, 30.5)];
            fit_fluorescence_tail(&data, (0.0, 149.0), Some(guess), &FitOptions::default())
                .is_ok_and(|f| f.converged && within(&f.parameters, &[1000.0, 30.5]))
        })
        .count();

    let exact = DataSet::new(tf.clone(), clean).unwrap();
    let tau = fit_fluorescence_tail(&exact, (0.0, 149.0), None, &FitOptions::default())
        .unwrap()
        .get("lifetime_ns")
        .unwrap();
    let exact_err = rel(tau, 30.5);
    Outcome::new(
        noise_ok >= needed && dephasing_ok >= needed && fluor_ok >= needed && exact_err < 1e-6,
        format!(
            "seeds within 10%: noise {noise_ok}/20, dephasing {dephasing_ok}/20, fluorescence {fluor_ok}/20 (need {needed}); noiseless lifetime error {exact_err:.1e} (limit 1e-6)"
        ),
    )
}

fn c9(ctx: &Ctx) -> Outcome {
    let s = spec(PulseShape::Gaussian);
    let fine = engine_on(
        PulseShape::Gaussian,
        ctx.params,
        s.grid_with(2 * Grid::DEFAULT_NZ, 2 * Grid::DEFAULT_NTAU),
    );
    let pump = blue_pump();
    let a = ctx.engine.budget(&pump).unwrap().s_total;
    let b = fine.budget(&pump).unwrap().s_total;
    let r = rel(a, b);
    Outcome::new(
        r < 0.01,
        format!("S_total {a:.6} on 200x800, {b:.6} on 400x1600: relative change {r:.2e} (limit 1e-2)"),
    )
}

fn ramanmem(dir: &Path, args: &[&str]) -> (Vec<u8>, bool) {
    let out = Command::new(env!("CARGO_BIN_EXE_ramanmem"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    (out.stdout, out.status.success())
}

fn c10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "[grid]\nnz = 40\nntau = 200\n").unwrap();

    // Fit inputs are derived from the simulations themselves.
    ramanmem(
        d,
        &[
            "--config",
            "run.toml",
            "simulate-noise",
            "--pump-range=-840:210:8",
            "--out",
            "seed_noise.csv",
        ],
    );
    ramanmem(
        d,
        &[
            "--config",
            "run.toml",
            "simulate-dephasing",
            "--n-points",
            "41",
            "--out",
            "seed_deph.csv",
        ],
    );
    let pick = |file: &str, header: &str, cols: [usize; 2]| {
        let mut s = format!("{header}\n");
        let text = fs::read_to_string(d.join(file)).unwrap_or_default();
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            s.push_str(&format!("{},{}\n", f[cols[0]], f[cols[1]]));
        }
        s
    };
    fs::write(
        d.join("noise_data.csv"),
        pick("seed_noise.csv", "pump_mw,s_observed", [0, 8]),
    )
    .unwrap();
    fs::write(
        d.join("deph_data.csv"),
        pick("seed_deph.csv", "t_ns,efficiency", [0, 2]),
    )
    .unwrap();
    let mut fl = String::from("t_ns,counts\n");
    for k in 0..120 {
        fl.push_str(&format!("{k},{}\n", (1000.0 * (-(k as f64) / 30.5).exp()).round()));
    }
    fs::write(d.join("fl_data.csv"), fl).unwrap();

    let runs: [(&str, &[&str], &[&str]); 7] = [
        (
            "simulate-noise",
            &[
                "--config",
                "run.toml",
                "simulate-noise",
                "--pump=-840,-84,0,84,252",
                "--dump-kernels",
                "k.csv",
            ],
            &["noise.csv", "noise_fractions.csv", "k.csv"],
        ),
        (
            "simulate-dephasing",
            &["--config", "run.toml", "simulate-dephasing"],
            &["dephasing.csv"],
        ),
        (
            "fit noise",
            &[
                "--config",
                "run.toml",
                "fit",
                "noise",
                "--data",
                "noise_data.csv",
                "--json",
                "fn.json",
            ],
            &["fn.json"],
        ),
        (
            "fit dephasing",
            &[
                "--config",
                "run.toml",
                "fit",
                "dephasing",
                "--data",
                "deph_data.csv",
                "--json",
                "fd.json",
            ],
            &["fd.json"],
        ),
        (
            "fit fluorescence",
            &[
                "--config",
                "run.toml",
                "fit",
                "fluorescence",
                "--data",
                "fl_data.csv",
                "--window",
                "2:110",
                "--json",
                "ff.json",
            ],
            &["ff.json"],
        ),
        (
            "sweep noise",
            &[
                "--config",
                "run.toml",
                "sweep",
                "--set",
                "noise.kappa=0.1:0.2:3",
                "--pump=-840",
                "--out",
                "sn.csv",
            ],
            &["sn.csv"],
        ),
        (
            "sweep dephasing",
            &[
                "--config",
                "run.toml",
                "sweep",
                "--quantity",
                "dephasing",
                "--set",
                "field.b_gauss=0:0.2:5",
                "--out",
                "sd.csv",
            ],
            &["sd.csv"],
        ),
    ];
    let mut bad = Vec::new();
    for (name, args, files) in runs {
        let snapshot = || {
            let (stdout, ok) = ramanmem(d, args);
            let bytes: Vec<Option<Vec<u8>>> = files.iter().map(|f| fs::read(d.join(f)).ok()).collect();
            for f in files {
                let _ = fs::remove_file(d.join(f));
            }
            (stdout, ok, bytes)
        };
        let (s1, ok1, b1) = snapshot();
        let (s2, ok2, b2) = snapshot();
        if !(ok1 && ok2) || b1.iter().any(Option::is_none) {
            bad.push(format!("{name} (did not run cleanly)"));
        } else if s1 != s2 || b1 != b2 {
            bad.push(format!("{name} (outputs differ)"));
        }
    }
    Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            "7 command lines run twice: stdout and every output file byte-identical".into()
        } else {
            format!("not reproducible: {}", bad.join(", "))
        },
    )
}

fn main() {
    let t = Instant::now();
    let params = EnsembleParams::reference(CONV);
    let engine = engine_on(PulseShape::Gaussian, params, spec(PulseShape::Gaussian).default_grid());
    let ctx = Ctx {
        params,
        engine,
        build_secs: t.elapsed().as_secs_f64(),
    };

    let criteria: [(&str, &dyn Fn() -> Outcome); 10] = [
        ("noise plateau", &|| c1(&ctx)),
        ("anti-Stokes fraction and filtering", &|| c2(&ctx)),
        ("red-branch growth", &|| c3(&ctx)),
        ("dephasing lifetime", &c4),
        ("pulse-shape invariance", &|| c5(&ctx)),
        ("canonical commutation", &|| c6(&ctx)),
        ("exact invariants", &c7),
        ("round-trip fits", &|| c8(&ctx)),
        ("grid convergence", &|| c9(&ctx)),
        ("reproducibility", &c10),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "[C{}] {} {name}: {} [{:.1} s]",
            k + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
