use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use dqd_core::dotgeom::{tunnel_coupling, DotGeometry};
use dqd_core::dynamics::{BasisChange, PulseSchedule, DEFAULT_STEPS};
use dqd_core::inference::{ConfidenceSettings, FitSettings, MicroFitSettings};
use dqd_core::qubit::QubitParams;
use dqd_core::spectral::{Material, MicroSpectral, PhenomSpectral, SpectralModel};

/// Prefix of environment overrides; `__` separates nested keys, so
/// `DQD_QUBIT__TEMPERATURE_K=0.2` sets `qubit.temperature_k`.
pub const ENV_PREFIX: &str = "DQD_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub qubit: QubitConfig,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub grid: GridConfig,
    pub spectral: SpectralConfig,
    pub synth: SynthConfig,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitConfig {
    /// Tunnel coupling; when absent it comes from the geometry for the
    /// microscopic model and is 1 μeV otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_mev: Option<f64>,
    pub temperature_k: f64,
}

impl Default for QubitConfig {
    fn default() -> Self {
        Self {
            delta_mev: None,
            temperature_k: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Phenomenological,
    Microscopic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub phenom: PhenomConfig,
    pub geometry: GeometryConfig,
    /// Knots of the tabulated Γ_r(ε) used for the microscopic model.
    pub rate_knots: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Phenomenological,
            phenom: PhenomConfig::default(),
            geometry: GeometryConfig::default(),
            rate_knots: 48,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhenomConfig {
    pub s: f64,
    pub alpha: f64,
    pub cutoff_mev: f64,
}

impl Default for PhenomConfig {
    fn default() -> Self {
        Self {
            s: 5.0,
            alpha: 0.29,
            cutoff_mev: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub e0_mev: f64,
    /// Well thickness b; sets E_z.
    pub thickness_nm: f64,
    pub half_separation_nm: f64,
    pub b_field_t: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            e0_mev: 1.7,
            thickness_nm: 3.0,
            half_separation_nm: 45.0,
            b_field_t: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// One occupancy map per toggle amplitude δε.
    pub amplitudes_mev: Vec<f64>,
    pub dither_amplitude_mev: f64,
    pub dither_freq_hz: f64,
    pub ramp_ns: f64,
    /// Lower bound on steps per dither period, rounded up per frequency.
    pub min_steps: usize,
    pub basis_change: BasisChange,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            amplitudes_mev: vec![0.21],
            dither_amplitude_mev: 0.06,
            dither_freq_hz: 43.0,
            ramp_ns: 16.0,
            min_steps: DEFAULT_STEPS,
            basis_change: BasisChange::EdgesOnly,
        }
    }
}

/// `count` points from `min` to `max`, linearly or geometrically spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log: bool,
}

impl Default for Range {
    fn default() -> Self {
        Self {
            min: -0.5,
            max: 0.5,
            count: 101,
            log: false,
        }
    }
}

impl Range {
    pub fn points(&self, field: &str) -> anyhow::Result<Vec<f64>> {
        if self.count == 0 {
            bail!("{field}.count: grid is empty");
        }
        if !(self.min.is_finite() && self.max.is_finite()) || (self.count > 1 && self.max <= self.min) {
            bail!("{field}: need finite min < max");
        }
        if self.log && self.min <= 0.0 {
            bail!("{field}.min: log spacing needs min > 0");
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let t = |i: usize| i as f64 / (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                if i == 0 {
                    self.min
                } else if i == self.count - 1 {
                    self.max
                } else if self.log {
                    (self.min.ln() + t(i) * (self.max / self.min).ln()).exp()
                } else {
                    self.min + t(i) * (self.max - self.min)
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub offsets_mev: Range,
    pub freqs_hz: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            offsets_mev: Range::default(),
            freqs_hz: preset_freqs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// ħω grid for the J(ω) table.
    pub energy_mev: Range,
    /// Detuning grid for the Γ_r(ε) table.
    pub epsilon_mev: Range,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            energy_mev: Range {
                min: 1e-4,
                max: 1.0,
                count: 81,
                log: true,
            },
            epsilon_mev: Range {
                min: 0.0,
                max: 0.8,
                count: 81,
                log: false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Noise σ as a fraction of the largest |dn/dε̄| of each clean map.
    pub noise_fraction: f64,
    /// Absolute σ in 1/meV; overrides `noise_fraction`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            noise_fraction: 0.01,
            noise_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub settings: FitSettings,
    pub confidence: ConfidenceSettings,
    /// Starting (s, α, ħω_c in meV) for `--phenom`.
    pub phenom_init: [f64; 3],
    /// Starting (E₀ in meV, L in nm) for `--micro`.
    pub micro_init: [f64; 2],
    pub micro: MicroFitSettings,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            settings: FitSettings::default(),
            confidence: ConfidenceSettings::default(),
            phenom_init: [3.0, 0.1, 0.3],
            micro_init: [1.4, 52.0],
            micro: MicroFitSettings::default(),
        }
    }
}

/// 43 Hz times 5, 11, 23, 47, 95, 151, 221 and 301: 215 Hz to 12.9 kHz.
pub fn preset_freqs() -> Vec<f64> {
    [5.0, 11.0, 23.0, 47.0, 95.0, 151.0, 221.0, 301.0]
        .iter()
        .map(|m| m * 43.0)
        .collect()
}

/// Overrides for `--preset paper`: both toggle amplitudes, the 215 Hz to
/// 13 kHz frequency set, and a 51-point offset grid over ±0.5 meV.
fn experimental_preset() -> toml::Table {
    let text = r#"
        [model]
        kind = "microscopic"
        [schedule]
        amplitudes_mev = [0.21, 0.53]
        min_steps = 256
        [grid.offsets_mev]
        min = -0.5
        max = 0.5
        count = 51
    "#;
    text.parse().expect("preset is valid TOML")
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// TOML has no null; an absent key means the same thing.
fn strip_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|_, x| !x.is_null());
            m.values_mut().for_each(strip_nulls);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

fn read_table(path: &Path) -> anyhow::Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        strip_nulls(&mut v);
        let t: toml::Value = serde_json::from_value(v).with_context(|| format!("converting {}", path.display()))?;
        match t {
            toml::Value::Table(t) => Ok(t),
            _ => bail!("{}: top level must be an object", path.display()),
        }
    } else {
        text.parse::<toml::Table>()
            .with_context(|| format!("parsing {}", path.display()))
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_env(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> anyhow::Result<()> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_lowercase()).collect();
        if path.iter().any(|p| p.is_empty()) {
            bail!("{key}: empty key segment");
        }
        let mut node = &mut *table;
        for seg in &path[..path.len() - 1] {
            let entry = node
                .entry(seg.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = match entry {
                toml::Value::Table(t) => t,
                _ => bail!("{key}: {seg} is not a section"),
            };
        }
        node.insert(path[path.len() - 1].clone(), parse_env_value(&raw));
    }
    Ok(())
}

/// Defaults, then the preset, the config file, `DQD_*` variables and finally
/// `seed` from the command line.
pub fn load(
    path: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    env: impl IntoIterator<Item = (String, String)>,
) -> anyhow::Result<RunConfig> {
    let mut table = toml::Table::try_from(RunConfig::default()).context("serializing defaults")?;
    match preset {
        None => {}
        Some("paper") => merge(&mut table, experimental_preset()),
        Some(other) => bail!("unknown preset {other:?}; the only preset is \"paper\""),
    }
    if let Some(p) = path {
        merge(&mut table, read_table(p)?);
    }
    apply_env(&mut table, env)?;
    let mut cfg: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolve()?;
    Ok(cfg)
}

impl RunConfig {
    /// Fills in derived values so the echoed config reproduces the run.
    fn resolve(&mut self) -> anyhow::Result<()> {
        if self.qubit.delta_mev.is_none() {
            self.qubit.delta_mev = Some(match self.model.kind {
                ModelKind::Microscopic => tunnel_coupling(&self.geometry()?, 0.0).context("qubit.delta_mev")?,
                ModelKind::Phenomenological => 1e-3,
            });
        }
        self.qubit()?;
        if self.schedule.amplitudes_mev.is_empty() {
            bail!("schedule.amplitudes_mev: need at least one toggle amplitude");
        }
        for (i, a) in self.schedule.amplitudes_mev.iter().enumerate() {
            for f in &self.grid.freqs_hz {
                let t = self.template(*a).with_toggle_freq(*f);
                t.validate()
                    .with_context(|| format!("schedule.amplitudes_mev[{i}] at {f} Hz"))?;
            }
        }
        if self.model.rate_knots < 2 {
            bail!("model.rate_knots: need at least two");
        }
        Ok(())
    }

    pub fn geometry(&self) -> anyhow::Result<DotGeometry> {
        let g = &self.model.geometry;
        Ok(DotGeometry::with_thickness(
            g.e0_mev,
            g.thickness_nm,
            g.half_separation_nm,
            g.b_field_t,
        )?)
    }

    pub fn qubit(&self) -> anyhow::Result<QubitParams> {
        let delta = self.qubit.delta_mev.context("qubit.delta_mev unresolved")?;
        Ok(QubitParams::new(delta, self.qubit.temperature_k)?)
    }

    pub fn phenom(&self) -> anyhow::Result<PhenomSpectral> {
        let p = &self.model.phenom;
        Ok(PhenomSpectral::from_cutoff_energy(p.s, p.alpha, p.cutoff_mev)?)
    }

    pub fn micro(&self) -> anyhow::Result<MicroSpectral> {
        Ok(MicroSpectral::new(self.geometry()?, Material::silicon())?)
    }

    pub fn spectral_model(&self) -> anyhow::Result<SpectralModel> {
        Ok(match self.model.kind {
            ModelKind::Phenomenological => SpectralModel::Phenomenological(self.phenom()?),
            ModelKind::Microscopic => SpectralModel::Microscopic(self.micro()?),
        })
    }

    /// Schedule at toggle amplitude `amp`, offset 0 and the first frequency;
    /// `steps_per_period` is the unrounded minimum.
    pub fn template(&self, amp: f64) -> PulseSchedule {
        let s = &self.schedule;
        let mut t = PulseSchedule::experimental(0.0, amp, self.grid.freqs_hz.first().copied().unwrap_or(215.0));
        t.dither_amplitude = s.dither_amplitude_mev;
        t.dither_freq = s.dither_freq_hz;
        t.ramp_time = s.ramp_ns;
        t.steps_per_period = s.min_steps;
        t.basis_change = s.basis_change;
        t
    }

    pub fn offsets(&self) -> anyhow::Result<Vec<f64>> {
        self.grid.offsets_mev.points("grid.offsets_mev")
    }

    pub fn freqs(&self) -> anyhow::Result<Vec<f64>> {
        let f = &self.grid.freqs_hz;
        if f.is_empty() {
            bail!("grid.freqs_hz: grid is empty");
        }
        if f.iter().any(|v| !(*v > 0.0 && v.is_finite())) || f.windows(2).any(|w| w[1] <= w[0]) {
            bail!("grid.freqs_hz: need positive, strictly increasing frequencies");
        }
        Ok(f.clone())
    }

    /// Largest |ε| reached by any configured waveform.
    pub fn detuning_reach(&self) -> anyhow::Result<f64> {
        let o = self.offsets()?;
        let omax = o.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let amax = self.schedule.amplitudes_mev.iter().fold(0.0f64, |m, v| m.max(*v));
        Ok(omax + 0.5 * amax + self.schedule.dither_amplitude_mev)
    }
}
