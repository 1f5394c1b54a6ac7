use dqd_core::dotgeom::{tunnel_coupling, DotGeometry};
use dqd_core::dynamics::{differential_map, occupancy_map, OccupancyMap, PulseSchedule};
use dqd_core::inference::*;
use dqd_core::qubit::QubitParams;
use dqd_core::rate::{ConstantRate, RateCurve, RelaxationRate};
use dqd_core::spectral::{Material, PhenomSpectral, SpectralModel};
use dqd_core::units::{hz_to_per_ns, per_ns_to_hz};

const FREQS: [f64; 4] = [215.0, 989.0, 4085.0, 12943.0];

fn offsets(n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
}

fn template(amp: f64) -> PulseSchedule {
    let mut t = PulseSchedule::experimental(0.0, amp, 215.0);
    t.steps_per_period = 64;
    t
}

fn qubit() -> QubitParams {
    QubitParams::new(1e-3, 0.3).unwrap()
}

fn exact_series<R: RelaxationRate + ?Sized>(rate: &R, amp: f64) -> Series {
    let t = template(amp);
    Series {
        schedule: t,
        occupancy: occupancy_map(&offsets(21, 0.4), &FREQS, rate, &qubit(), &t).unwrap(),
        filters: None,
    }
}

fn knots_for(series: &[Series]) -> Vec<f64> {
    let grids: Vec<GridSpec> = series.iter().map(|s| s.grid()).collect();
    default_knots(&grids, 12)
}

fn constant_fit(hz: f64) -> (Vec<Series>, FitResult) {
    let rate = ConstantRate(hz_to_per_ns(hz));
    let series = vec![exact_series(&rate, 0.21), exact_series(&rate, 0.53)];
    let knots = knots_for(&series);
    let fit = fit_rate_curve(&series, &qubit(), &knots, &FitSettings::default()).unwrap();
    (series, fit)
}

#[test]
fn constant_rate_is_recovered_at_informative_knots() {
    for hz in [1.0e4, 3.0e3] {
        let (_, fit) = constant_fit(hz);
        let truth = vec![hz_to_per_ns(hz); fit.best_fit.knots().len()];
        let info = informative_mask(&truth, &FREQS);
        for (k, &inside) in fit.best_fit.knots().iter().zip(&info) {
            if inside {
                let got = per_ns_to_hz(fit.best_fit.eval(*k));
                assert!((got / hz - 1.0).abs() < 0.05, "{hz} Hz at {k}: {got}");
            }
        }
    }
}

#[test]
fn misfit_never_increases() {
    let (_, fit) = constant_fit(3.0e3);
    assert!(fit.misfit_history.len() > 1);
    for w in fit.misfit_history.windows(2) {
        assert!(w[1] <= w[0], "{w:?}");
    }
    assert!(fit.misfit_min >= 0.0);
}

#[test]
fn series_order_does_not_matter() {
    let rate = RateCurve::new(
        RateCurve::uniform_knots(6, 0.7),
        vec![-11.0, -10.0, -10.5, -11.0, -11.5, -12.0],
    )
    .unwrap();
    let series = vec![exact_series(&rate, 0.21), exact_series(&rate, 0.53)];
    let knots = knots_for(&series);
    let settings = FitSettings::default();
    let a = fit_rate_curve(&series, &qubit(), &knots, &settings).unwrap();
    let reversed: Vec<Series> = series.iter().rev().cloned().collect();
    let b = fit_rate_curve(&reversed, &qubit(), &knots, &settings).unwrap();
    for (x, y) in a.best_fit.log_values().iter().zip(b.best_fit.log_values()) {
        assert!((x - y).abs() <= 1e-6 * x.abs(), "{x} {y}");
    }
}

fn measured(rate: &ConstantRate) -> Vec<MeasuredSet> {
    [0.21, 0.53]
        .iter()
        .map(|&amp| {
            let t = template(amp);
            let s = synth_data(rate, &qubit(), &t, &offsets(41, 0.4), &FREQS, 0.0, 0).unwrap();
            MeasuredSet::new(t, s.differential)
        })
        .collect()
}

#[test]
fn zero_noise_collapses_bands() {
    let rate = ConstantRate(hz_to_per_ns(1.0e4));
    let data = measured(&rate);
    let series: Vec<Series> = data.iter().map(|m| m.smooth(16).unwrap().0).collect();
    let knots = knots_for(&series);
    let fit = fit_rate_curve(&series, &qubit(), &knots, &FitSettings::default()).unwrap();
    let settings = ConfidenceSettings {
        n_modes: 16,
        noise_sigma: Some(0.0),
        ..Default::default()
    };
    let fit = confidence_regions(fit, &data, &qubit(), &settings).unwrap();
    assert_eq!(fit.delta_misfit, Some(0.0));
    for bands in [fit.confidence_68.as_ref().unwrap(), fit.confidence_95.as_ref().unwrap()] {
        for (b, k) in bands.iter().zip(fit.best_fit.knots()) {
            let best = fit.best_fit.eval(*k);
            assert!((b.lower.unwrap() / best - 1.0).abs() < 1e-12);
            assert!((b.upper.unwrap() / best - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn larger_misfit_increment_widens_every_band() {
    let (series, fit) = constant_fit(3.0e3);
    let settings = ConfidenceSettings::default();
    let dm = 1e-4;
    let bands = profile_bands(&fit, &series, &qubit(), &[dm, 2.0 * dm], &settings).unwrap();
    for (narrow, wide) in bands[0].iter().zip(&bands[1]) {
        let lo = |b: &KnotBand| b.lower.unwrap_or(0.0);
        let hi = |b: &KnotBand| b.upper.unwrap_or(f64::INFINITY);
        assert!(lo(wide) <= lo(narrow), "{narrow:?} {wide:?}");
        assert!(hi(wide) >= hi(narrow), "{narrow:?} {wide:?}");
    }
}

#[test]
fn rates_far_above_the_window_leave_bands_open() {
    let rate = ConstantRate(hz_to_per_ns(1.0e7));
    let series = vec![exact_series(&rate, 0.21), exact_series(&rate, 0.53)];
    let knots = knots_for(&series);
    let fit = fit_rate_curve(&series, &qubit(), &knots, &FitSettings::default()).unwrap();
    // an increment typical of δM at percent-level noise
    let bands = profile_bands(&fit, &series, &qubit(), &[1e-3], &ConfidenceSettings::default()).unwrap();
    assert!(bands[0].iter().any(|b| b.upper.is_none()));
}

#[test]
fn exact_model_differential_smooths_back_to_model() {
    let q = qubit();
    let model = SpectralModel::Phenomenological(PhenomSpectral::from_cutoff_energy(1.0, 1e-4, 0.5).unwrap());
    let rate = RateCurve::from_model(RateCurve::uniform_knots(48, 0.9), &q, &model).unwrap();
    let mut t = PulseSchedule::experimental(0.0, 0.21, 215.0);
    t.steps_per_period = 256;
    let n = occupancy_map(&offsets(201, 0.5), &[215.0, 4085.0], &rate, &q, &t).unwrap();
    let d = differential_map(&n).unwrap();
    let (smooth, _) = smooth_to_occupancy(&d, 40).unwrap();
    let worst = smooth
        .values
        .iter()
        .zip(&n.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn micro_objective_is_lowest_at_truth() {
    let material = Material::silicon();
    let geom = DotGeometry::with_thickness(1.7, 3.0, 45.0, 0.0).unwrap();
    let (rate, q) = micro_rate_curve(&geom, &material, 0.3, RateCurve::uniform_knots(48, 0.6)).unwrap();
    assert!((tunnel_coupling(&geom, 0.0).unwrap() - q.delta).abs() < 1e-15);
    let t = template(0.21);
    let series = vec![Series {
        schedule: t,
        occupancy: occupancy_map(&offsets(21, 0.4), &FREQS, &rate, &q, &t).unwrap(),
        filters: None,
    }];
    let at = |e0: f64, l: f64| micro_misfit(&series, 0.3, &material, geom.ez, e0, l, 48).unwrap();
    let truth = at(1.7, 45.0);
    for (e0, l) in [(1.36, 36.0), (1.36, 54.0), (2.04, 36.0), (2.04, 54.0)] {
        assert!(truth <= at(e0, l), "({e0}, {l})");
    }
}

#[test]
fn measured_set_rejects_bad_sigma() {
    let map = OccupancyMap::new(
        offsets(5, 0.2),
        vec![215.0],
        vec![0.0; 5],
        Some(vec![0.1, 0.1, 0.0, 0.1, 0.1]),
    )
    .unwrap();
    assert!(MeasuredSet::new(template(0.21), map).validate().is_err());
}
