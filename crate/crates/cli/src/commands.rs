use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use dqd_core::dynamics::{differential_map, occupancy_map, OccupancyMap, PulseSchedule};
use dqd_core::inference::{
    confidence_regions, default_knots, derive_seed, fit_micro_params, fit_phenom_params, fit_rate_curve,
    relative_noise_sigma, synth_data, GridSpec, MeasuredSet, LEVER_ARM_UNCERTAINTY,
};
use dqd_core::io::{format_float, read_map_csv, write_json, write_map_csv, write_rate_csv, MapEnvelope, MapKind};
use dqd_core::qubit::{energy_gap, QubitParams};
use dqd_core::rate::{PhenomRate, RateCurve, RelaxationRate};
use dqd_core::spectral::{j_long, j_trans, relaxation_rate, PhenomSpectral, SpectralModel};
use dqd_core::units::{energy_to_omega, per_ns_to_hz};

use crate::config::{ModelKind, RunConfig};

/// Problems with the configuration or the command line; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(e: anyhow::Error) -> anyhow::Error {
    UsageError(e).into()
}

/// The ħω at which the low-frequency power law is checked.
pub const OMEGA5_ENERGY_MEV: f64 = 1e-4;

/// Validated grids and models shared by every subcommand.
struct Plan {
    qubit: QubitParams,
    offsets: Vec<f64>,
    freqs: Vec<f64>,
    templates: Vec<PulseSchedule>,
}

impl Plan {
    fn new(cfg: &RunConfig) -> anyhow::Result<Self> {
        let templates = cfg.schedule.amplitudes_mev.iter().map(|a| cfg.template(*a)).collect();
        Ok(Self {
            qubit: cfg.qubit()?,
            offsets: cfg.offsets()?,
            freqs: cfg.freqs()?,
            templates,
        })
    }

    fn grids(&self) -> Vec<GridSpec> {
        self.templates
            .iter()
            .map(|t| GridSpec {
                schedule: *t,
                offsets: self.offsets.clone(),
                freqs: self.freqs.clone(),
            })
            .collect()
    }
}

/// Γ_r of the configured model: closed form for the phenomenological J,
/// a log-spline through the microscopic rate otherwise.
fn model_rate(cfg: &RunConfig, qubit: &QubitParams) -> anyhow::Result<Box<dyn RelaxationRate>> {
    Ok(match cfg.model.kind {
        ModelKind::Phenomenological => Box::new(PhenomRate {
            qubit: *qubit,
            model: cfg.phenom()?,
        }),
        ModelKind::Microscopic => {
            let knots = RateCurve::uniform_knots(cfg.model.rate_knots, cfg.detuning_reach()?);
            Box::new(RateCurve::from_model(knots, qubit, &cfg.spectral_model()?)?)
        }
    })
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn save_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    write_json(value, &mut w)?;
    w.flush()?;
    Ok(())
}

fn save_map(dir: &Path, name: &str, map: &OccupancyMap, kind: MapKind) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    write_map_csv(map, kind, &mut w)?;
    w.flush()?;
    Ok(())
}

fn amp_label(amp: f64) -> String {
    format!("{amp}")
}

pub fn write_resolved(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_json(out, "resolved_config.json", cfg)
}

fn metadata(cfg: &RunConfig, plan: &Plan) -> serde_json::Value {
    json!({
        "model": cfg.model,
        "delta_meV": plan.qubit.delta,
        "temperature_K": plan.qubit.temperature,
        "seed": cfg.seed,
    })
}

#[derive(Serialize)]
struct Omega5 {
    energy_mev: f64,
    j_long_ratio: f64,
    j_trans_ratio: f64,
    tolerance: f64,
    pass: bool,
}

pub fn spectral(cfg: &RunConfig, out: &Path, check_omega5: bool) -> anyhow::Result<()> {
    let (energies, epsilons, qubit, model) = (|| {
        Ok::<_, anyhow::Error>((
            cfg.spectral.energy_mev.points("spectral.energy_mev")?,
            cfg.spectral.epsilon_mev.points("spectral.epsilon_mev")?,
            cfg.qubit()?,
            cfg.spectral_model()?,
        ))
    })()
    .map_err(usage)?;

    let mut w = csv::Writer::from_writer(create(out, "spectral.csv")?);
    let micro = match &model {
        SpectralModel::Microscopic(m) => Some(*m),
        _ => None,
    };
    if micro.is_some() {
        w.write_record(["omega_meV", "J", "j_long", "j_trans"])?;
    } else {
        w.write_record(["omega_meV", "J"])?;
    }
    for &e in &energies {
        let omega = energy_to_omega(e);
        let mut row = vec![format_float(e), format_float(model.j(omega)?)];
        if let Some(m) = &micro {
            row.push(format_float(j_long(omega, m)?));
            row.push(format_float(j_trans(omega, m)?));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(out, "rates.csv")?);
    w.write_record(["epsilon_meV", "gap_meV", "rate_Hz"])?;
    for &eps in &epsilons {
        let r = relaxation_rate(eps, &qubit, &model)?;
        w.write_record([
            format_float(eps),
            format_float(energy_gap(eps, qubit.delta)),
            format_float(per_ns_to_hz(r)),
        ])?;
    }
    w.flush()?;

    if check_omega5 {
        let m = cfg.micro().map_err(usage)?;
        let omega = energy_to_omega(OMEGA5_ENERGY_MEV);
        let jl = j_long(2.0 * omega, &m)? / j_long(omega, &m)?;
        let jt = j_trans(2.0 * omega, &m)? / j_trans(omega, &m)?;
        let tolerance = 0.01;
        let pass = [jl, jt].iter().all(|r| (r / 32.0 - 1.0).abs() <= tolerance);
        println!(
            "omega5 check at {OMEGA5_ENERGY_MEV} meV: j_long ratio {jl:.6}, j_trans ratio {jt:.6} (expect 32 within 1%): {}",
            if pass { "PASS" } else { "FAIL" }
        );
        save_json(
            out,
            "omega5.json",
            &Omega5 {
                energy_mev: OMEGA5_ENERGY_MEV,
                j_long_ratio: jl,
                j_trans_ratio: jt,
                tolerance,
                pass,
            },
        )?;
        if !pass {
            bail!("low-frequency spectral density does not follow the omega^5 law");
        }
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let plan = Plan::new(cfg).map_err(usage)?;
    let rate = model_rate(cfg, &plan.qubit)?;
    for t in &plan.templates {
        let label = amp_label(t.toggle_amplitude);
        let n = occupancy_map(&plan.offsets, &plan.freqs, rate.as_ref(), &plan.qubit, t)?;
        let d = differential_map(&n)?;
        let mut right = n.clone();
        right.values.iter_mut().for_each(|v| *v = 1.0 - *v);
        save_map(out, &format!("occupancy_{label}.csv"), &n, MapKind::Occupancy)?;
        save_map(
            out,
            &format!("occupancy_right_{label}.csv"),
            &right,
            MapKind::RightOccupancy,
        )?;
        save_map(out, &format!("differential_{label}.csv"), &d, MapKind::Differential)?;
        save_json(
            out,
            &format!("occupancy_{label}.json"),
            &MapEnvelope {
                kind: MapKind::Occupancy,
                schedule: *t,
                metadata: metadata(cfg, &plan),
                map: n,
            },
        )?;
    }
    Ok(())
}

fn write_rate_table(path: BufWriter<File>, knots: &[f64], rate: &dyn RelaxationRate, delta: f64) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(path);
    w.write_record(["epsilon_meV", "gap_meV", "rate_Hz"])?;
    for &k in knots {
        w.write_record([
            format_float(k),
            format_float(energy_gap(k, delta)),
            format_float(per_ns_to_hz(rate.rate(k))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let plan = Plan::new(cfg).map_err(usage)?;
    if let Some(s) = cfg.synth.noise_sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(usage(anyhow::anyhow!(
                "synth.noise_sigma: must be finite and non-negative"
            )));
        }
    }
    if !(cfg.synth.noise_fraction >= 0.0 && cfg.synth.noise_fraction.is_finite()) {
        return Err(usage(anyhow::anyhow!(
            "synth.noise_fraction: must be finite and non-negative"
        )));
    }
    let rate = model_rate(cfg, &plan.qubit)?;
    let mut sigmas = Vec::new();
    for (k, t) in plan.templates.iter().enumerate() {
        let label = amp_label(t.toggle_amplitude);
        let clean = synth_data(rate.as_ref(), &plan.qubit, t, &plan.offsets, &plan.freqs, 0.0, 0)?;
        let sigma = cfg
            .synth
            .noise_sigma
            .unwrap_or_else(|| relative_noise_sigma(&clean.differential, cfg.synth.noise_fraction));
        let data = if sigma > 0.0 {
            synth_data(
                rate.as_ref(),
                &plan.qubit,
                t,
                &plan.offsets,
                &plan.freqs,
                sigma,
                derive_seed(cfg.seed, k as u64),
            )?
        } else {
            clean
        };
        save_map(
            out,
            &format!("differential_{label}.csv"),
            &data.differential,
            MapKind::Differential,
        )?;
        save_map(
            out,
            &format!("occupancy_{label}.csv"),
            &data.occupancy,
            MapKind::Occupancy,
        )?;
        sigmas.push(json!({ "toggle_amplitude_meV": t.toggle_amplitude, "noise_sigma": sigma, "seed": data.seed }));
    }
    let knots = default_knots(&plan.grids(), cfg.fit.settings.n_knots);
    write_rate_table(create(out, "truth_rates.csv")?, &knots, rate.as_ref(), plan.qubit.delta)?;
    let mut meta = metadata(cfg, &plan);
    meta["noise"] = serde_json::Value::Array(sigmas);
    save_json(out, "synth.json", &meta)
}

pub fn fit(cfg: &RunConfig, out: &Path, data: &[PathBuf], phenom: bool, micro: bool) -> anyhow::Result<()> {
    let plan = Plan {
        qubit: cfg.qubit().map_err(usage)?,
        offsets: Vec::new(),
        freqs: Vec::new(),
        templates: cfg.schedule.amplitudes_mev.iter().map(|a| cfg.template(*a)).collect(),
    };
    if data.len() != plan.templates.len() {
        return Err(usage(anyhow::anyhow!(
            "{} data files given but schedule.amplitudes_mev lists {} amplitudes",
            data.len(),
            plan.templates.len()
        )));
    }
    let mut measured = Vec::new();
    let mut lever_arm = None;
    for (path, t) in data.iter().zip(&plan.templates) {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let file = read_map_csv(f, &path.display().to_string())?;
        if file.kind != MapKind::Differential {
            bail!(dqd_core::DataError::format(
                path.display().to_string(),
                "expected a dn_deps column"
            ));
        }
        lever_arm = lever_arm.or(file.lever_arm);
        measured.push(MeasuredSet::new(*t, file.map));
    }
    let conf = cfg.fit.confidence;
    let series = measured
        .iter()
        .map(|m| m.smooth(conf.n_modes).map(|s| s.0))
        .collect::<Result<Vec<_>, _>>()?;
    let grids: Vec<GridSpec> = series.iter().map(|s| s.grid()).collect();
    let knots = default_knots(&grids, cfg.fit.settings.n_knots);
    let result = fit_rate_curve(&series, &plan.qubit, &knots, &cfg.fit.settings)?;
    let result = confidence_regions(result, &measured, &plan.qubit, &conf)?;
    save_json(
        out,
        "fit.json",
        &json!({
            "fit": result,
            "delta_meV": plan.qubit.delta,
            "temperature_K": plan.qubit.temperature,
            "lever_arm_eV_per_V": lever_arm,
            "lever_arm_relative_uncertainty": lever_arm.map(|_| LEVER_ARM_UNCERTAINTY),
        }),
    )?;
    write_rate_csv(&result, plan.qubit.delta, create(out, "rates.csv")?)?;

    if phenom {
        let [s, alpha, cutoff] = cfg.fit.phenom_init;
        let init = PhenomSpectral::from_cutoff_energy(s, alpha, cutoff).map_err(|e| usage(e.into()))?;
        // only knots the data pin down on both sides
        let bands = result.confidence_95.as_deref().unwrap_or_default();
        let (knots, logs): (Vec<f64>, Vec<f64>) = result
            .best_fit
            .knots()
            .iter()
            .zip(result.best_fit.log_values())
            .zip(bands)
            .filter(|(_, b)| b.lower.is_some() && b.upper.is_some())
            .map(|((k, l), _)| (*k, *l))
            .unzip();
        if knots.len() < 3 {
            bail!(
                "--phenom needs at least three knots with closed 95% bands, found {}",
                knots.len()
            );
        }
        let target = RateCurve::new(knots, logs)?;
        let p = fit_phenom_params(&target, &plan.qubit, &init)?;
        save_json(
            out,
            "phenom.json",
            &json!({ "fit": p, "cutoff_energy_meV": p.model.cutoff_energy(), "knots_meV": target.knots() }),
        )?;
    }
    if micro {
        let [e0, l] = cfg.fit.micro_init;
        let material = dqd_core::spectral::Material::silicon();
        let ez = cfg.geometry().map_err(usage)?.ez;
        let m = fit_micro_params(&series, plan.qubit.temperature, &material, ez, (e0, l), &cfg.fit.micro)?;
        save_json(out, "micro.json", &m)?;
    }
    Ok(())
}
