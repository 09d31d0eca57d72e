//! Monte Carlo and property checks on the documented behavior of each module.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;

use gqarch_ito::estimation::sandwich_se_free;
use gqarch_ito::model::{derive_coeffs, exp_ratios, g_update, GState};
use gqarch_ito::pipeline::experiment::{quantile, replication_seed, simulate_panel};
use gqarch_ito::pipeline::RunConfig;
use gqarch_ito::rv::{default_k_scale, default_msrv_scales, rv_msrv, rv_naive, rv_tsrv, window_ranges};
use gqarch_ito::simulate::{simulate_jump_diffusion, JumpParams, NoiseParams, TickPanel};
use gqarch_ito::{
    add_noise, fit_qmle, forecast_fraction, quasi_loglik, rv_panel, simulate_gqarch_ito, FitOptions, LowFreqSeries,
    ModelParams, ParamBox, RvConfig, SimConfig, THETA0,
};

fn rms(errs: &[f64]) -> f64 {
    (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn recovery_series(seed: u64) -> LowFreqSeries {
    let cfg = RunConfig::recovery_preset();
    let panel = simulate_panel(&cfg, seed).unwrap();
    let rv = rv_panel(&panel, &cfg.rv, 1).unwrap();
    LowFreqSeries::from_panel(&panel, &rv, 1, true).unwrap()
}

fn clean_panel(params: &ModelParams, n_days: usize, m: usize, seed: u64, sigma0_sq: f64) -> TickPanel {
    simulate_gqarch_ito(
        params,
        &SimConfig {
            n_days,
            ticks_per_day: m,
            seed,
            sigma0_sq,
            ..Default::default()
        },
    )
    .unwrap()
}

fn iv(panel: &TickPanel, day: usize) -> f64 {
    panel.days[day].truth.as_ref().unwrap().iv
}

// -- model ------------------------------------------------------------------

#[test]
fn one_step_from_stationary_level() {
    let c = derive_coeffs(&THETA0, 1).unwrap();
    // independent evaluation of the daily intercept
    let (p, _) = exp_ratios(0.3);
    let omega = (0.3f64.exp() - 1.0) / 0.3 * 0.2;
    assert!((p * 0.2 - omega).abs() < 1e-15);
    let g = g_update(GState::new(0.667).unwrap(), &c, 0.0).unwrap().g;
    assert!((g - (omega + 0.4 * 0.667)).abs() < 1e-12);
    assert!((g - 0.5000392).abs() < 5e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The quasi-likelihood never exceeds its pointwise bound
    /// `log g + RV/g >= log RV + 1`.
    #[test]
    fn loglik_bounded_by_perfect_fit(
        rv in prop::collection::vec(0.01f64..3.0, 10..40),
        z in prop::collection::vec(-0.5f64..0.5, 40),
        omega in 0.01f64..1.0, beta in 0.01f64..0.9, gamma in 0.01f64..0.9, alpha in -0.3f64..0.3,
    ) {
        let n = rv.len();
        let series = LowFreqSeries::new(&z[..n], &rv, false, 1).unwrap();
        let ll = quasi_loglik(&series, &ModelParams::new(omega, beta, gamma, alpha)).unwrap().value;
        let bound = -rv.iter().map(|r| r.ln() + 1.0).sum::<f64>() / (2.0 * n as f64);
        prop_assert!(ll <= bound + 1e-12);
    }

    /// With `alpha_g^2 <= 4 beta_g omega_g` the recursion never needs the floor.
    #[test]
    fn feasible_recursion_stays_positive(
        omega in 0.05f64..1.0, beta in 0.01f64..0.9, gamma in 0.01f64..0.9, alpha in -0.2f64..0.2,
        j in 1u32..=6, z in prop::collection::vec(-1.0f64..1.0, 1..50),
    ) {
        let c = derive_coeffs(&ModelParams::new(omega, beta, gamma, alpha), j).unwrap();
        prop_assume!(c.discriminant_ok());
        let mut s = GState::new(0.5).unwrap();
        for zi in z {
            s = g_update(s, &c, zi).unwrap();
        }
        prop_assert_eq!(s.floor_hits, 0);
        prop_assert!(s.g > 0.0);
    }
}

// -- simulators ---------------------------------------------------------------

#[test]
fn jump_intensity_matches_lambda() {
    let panel = simulate_jump_diffusion(
        &JumpParams::default(),
        &SimConfig {
            n_days: 1000,
            ticks_per_day: 390,
            seed: 21,
            ..Default::default()
        },
    )
    .unwrap();
    let jumps: Vec<f64> = panel.days.iter().map(|d| d.truth.as_ref().unwrap().jumps as f64).collect();
    let (m, se) = mean_se(&jumps);
    assert!((m - 1.0).abs() <= 3.0 * se, "mean jumps {m}, s.e. {se}");
}

// -- realized variance ----------------------------------------------------------

#[test]
fn naive_rv_on_clean_days() {
    let panel = clean_panel(&THETA0, 200, 2160, 31, 0.667);
    let errs: Vec<f64> = (0..200)
        .map(|d| rv_naive(panel.days[d].clean.as_ref().unwrap()).unwrap() / iv(&panel, d) - 1.0)
        .collect();
    assert!(rms(&errs) < 0.05, "RMS {}", rms(&errs));
}

#[test]
fn pure_noise_tsrv_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let noise = Normal::new(0.0, 0.001).unwrap();
    let (mut tsrv, mut naive) = (Vec::new(), Vec::new());
    for _ in 0..500 {
        let y: Vec<f64> = (0..=2160).map(|_| 10.0 + noise.sample(&mut rng)).collect();
        // raw estimate, before flooring at zero
        let n = 2160.0;
        let k = 30;
        let all = rv_naive(&y).unwrap();
        let slow = gqarch_ito::rv::subsampled_rv(&y, k);
        tsrv.push(slow - (n - k as f64 + 1.0) / k as f64 / n * all);
        assert!(rv_tsrv(&y, k).unwrap().value >= 0.0);
        naive.push(all);
    }
    let (m, se) = mean_se(&tsrv);
    assert!(m.abs() <= 3.0 * se, "TSRV mean {m:e}, s.e. {se:e}");
    let (nm, _) = mean_se(&naive);
    assert!((nm / 4.32e-3 - 1.0).abs() < 0.02, "naive mean {nm:e}");
}

fn noisy_recovery_days(seed: u64, n_days: usize) -> TickPanel {
    let clean = clean_panel(&THETA0, n_days, 2160, seed, 0.667);
    add_noise(&clean, &NoiseParams::default(), seed).unwrap()
}

#[test]
fn tsrv_and_msrv_accuracy_on_noisy_days() {
    let panel = noisy_recovery_days(33, 200);
    let mut e_tsrv = Vec::new();
    let mut e_msrv = Vec::new();
    for (d, day) in panel.days.iter().enumerate() {
        let truth = iv(&panel, d);
        e_tsrv.push(rv_tsrv(&day.noisy, 30).unwrap().value / truth - 1.0);
        e_msrv.push(rv_msrv(&day.noisy, default_msrv_scales(2160)).unwrap().value / truth - 1.0);
    }
    let (t, m) = (rms(&e_tsrv), rms(&e_msrv));
    assert!(t < 0.15, "TSRV RMS {t}");
    assert!(m <= t, "MSRV RMS {m} vs TSRV {t}");
}

#[test]
fn tsrv_error_falls_with_sampling_frequency() {
    // one fine panel, thinned to coarser grids so every grid sees the same days
    let fine = clean_panel(&THETA0, 100, 8640, 34, 0.667);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let noise = Normal::new(0.0, 0.001).unwrap();
    let mut prev = f64::INFINITY;
    for stride in [16, 4, 1] {
        let m = 8640 / stride;
        let errs: Vec<f64> = fine
            .days
            .iter()
            .map(|day| {
                let y: Vec<f64> = day
                    .clean
                    .as_ref()
                    .unwrap()
                    .iter()
                    .step_by(stride)
                    .map(|x| x + noise.sample(&mut rng))
                    .collect();
                assert_eq!(y.len(), m + 1);
                rv_tsrv(&y, default_k_scale(m)).unwrap().value / day.truth.as_ref().unwrap().iv - 1.0
            })
            .collect();
        let r = rms(&errs);
        assert!(r < prev, "m={m}: RMS {r} did not fall below {prev}");
        prev = r;
    }
}

#[test]
fn six_windows_at_full_session_sampling() {
    let panel = clean_panel(&THETA0, 2, 23400, 35, 0.667);
    for day in &panel.days {
        for (a, b) in window_ranges(day, 6) {
            assert_eq!(b - a, 3900);
        }
    }
    let rv = rv_panel(&panel, &RvConfig::default(), 6).unwrap();
    assert_eq!(rv.gaps(), 0);
}

#[test]
fn constant_sigma_daily_rv() {
    let flat = ModelParams::new(0.0, 0.0, 1.0, 0.0);
    let panel = clean_panel(&flat, 200, 2160, 36, 0.04);
    let rv = rv_panel(&panel, &RvConfig::naive(), 1).unwrap();
    let errs: Vec<f64> = rv.values(1).iter().map(|v| v.unwrap() / 0.04 - 1.0).collect();
    assert_eq!(errs.len(), 200);
    assert!(rms(&errs) < 0.05, "RMS {}", rms(&errs));
}

// -- estimation -------------------------------------------------------------------

#[test]
fn truth_beats_doubled_omega() {
    let wins: usize = (0..200u64)
        .into_par_iter()
        .map(|rep| {
            let series = recovery_series(replication_seed(41, rep));
            let at_truth = quasi_loglik(&series, &THETA0).unwrap().value;
            let doubled = ModelParams { omega: 0.4, ..THETA0 };
            usize::from(at_truth > quasi_loglik(&series, &doubled).unwrap().value)
        })
        .sum();
    assert!(wins >= 190, "{wins}/200");
}

#[test]
fn iid_rv_gives_no_return_loading() {
    let loadings: Vec<f64> = (0..50u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(42, rep));
            let rv_dist = LogNormal::new(0.5f64.ln(), 0.3).unwrap();
            let z_dist = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
            let rv: Vec<f64> = (0..250).map(|_| rv_dist.sample(&mut rng)).collect();
            let z: Vec<f64> = (0..250).map(|_| z_dist.sample(&mut rng)).collect();
            let series = LowFreqSeries::new(&z, &rv, true, 1).unwrap();
            let opts = FitOptions {
                sandwich: false,
                ..Default::default()
            };
            let fit = fit_qmle(&series, &ParamBox::default(), &opts).unwrap();
            derive_coeffs(&fit.params, 1).unwrap().beta_g.abs()
        })
        .collect();
    let med = quantile(&loadings, 0.5);
    assert!(med < 0.05, "median |beta_g| {med}");
}

#[test]
fn score_vanishes_at_interior_optimum() {
    let bx = ParamBox::default();
    let mut checked = 0;
    for seed in 0..6u64 {
        let series = recovery_series(replication_seed(43, seed));
        let fit = fit_qmle(&series, &bx, &FitOptions::default()).unwrap();
        let theta = fit.params.theta();
        let margin = (0..4).all(|k| {
            let w = bx.upper[k] - bx.lower[k];
            theta[k] > bx.lower[k] + 1e-3 * w && theta[k] < bx.upper[k] - 1e-3 * w
        });
        if !(fit.converged && margin) {
            continue;
        }
        let s = sandwich_se_free(&series, &fit.params, &fit.free_params).unwrap();
        for g in &s.mean_score {
            assert!(g.abs() < 1e-4, "seed {seed}: mean score {:?}", s.mean_score);
        }
        checked += 1;
    }
    assert!(checked >= 3, "only {checked} interior optima");
}

#[test]
fn loglik_ignores_mu_hat() {
    let mut series = recovery_series(44);
    let a = quasi_loglik(&series, &THETA0).unwrap();
    series.mu_hat += 0.37;
    let b = quasi_loglik(&series, &THETA0.with_mu(1.0)).unwrap();
    assert_eq!(a, b);
}

// -- forecasting -------------------------------------------------------------------

#[test]
fn fractional_forecast_examples() {
    let series = recovery_series(45);
    let opts = FitOptions {
        sandwich: false,
        ..Default::default()
    };
    let mut fit = fit_qmle(&series, &ParamBox::default(), &opts).unwrap();

    // j = 1 reproduces the fitted path's next value
    let f1 = forecast_fraction(&fit, &series.returns, fit.g_init, 1).unwrap();
    assert_eq!(f1, fit.g_next);

    // zero returns settle at the fixed point
    let c3 = derive_coeffs(&fit.params, 3).unwrap();
    let f0 = forecast_fraction(&fit, &[0.0; 400], 2.0, 3).unwrap();
    assert!((f0 - c3.fixed_point()).abs() < 1e-12 * c3.fixed_point());

    // one half-day step at the reference parameters, by hand
    fit.params = THETA0;
    let x = 0.15f64;
    let p = x.exp_m1() / x;
    let q = (x.exp_m1() - x) / (x * x);
    let omega2 = p * 0.2 / 4.0;
    let beta2 = x * (-0.6 * q / 2.0 + p);
    let alpha2 = 0.1 * (-0.6 * q / 4.0 + p / 2.0);
    let want = omega2 + 0.7 * 0.3 + beta2 * 0.0025 + alpha2 * 0.05;
    let got = forecast_fraction(&fit, &[0.05], 0.3, 2).unwrap();
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
}
