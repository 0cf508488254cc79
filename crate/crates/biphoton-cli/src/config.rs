//! Run configuration: JSON in, fully materialized and validated out.
//!
//! Unknown keys are hard errors. Every default that gets filled in is
//! recorded so the metadata sidecar makes runs self-describing.

// negated float comparisons are deliberate: they reject NaN during validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use biphoton::model::{ThreeLevelParams, TwoLevelParams};
use biphoton::steady::SweepAxis;
use biphoton::SpaceSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Steady,
    Sweep,
    Analytic,
    Traj,
    Spectrum,
    Validate3,
    Convergence,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Steady => "steady",
            Subcommand::Sweep => "sweep",
            Subcommand::Analytic => "analytic",
            Subcommand::Traj => "traj",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Validate3 => "validate3",
            Subcommand::Convergence => "convergence",
        }
    }
}

/// Two-level parameters with optional fields; missing entries fall back to
/// the baseline operating point (g2 defaults to 0.1 g1).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub pump: Option<f64>,
    pub gamma: Option<f64>,
    pub omega0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub na_max: usize,
    pub nb_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridConfig {
    Spaced {
        start: f64,
        stop: f64,
        points: usize,
        #[serde(default = "default_spacing")]
        spacing: Spacing,
    },
    Explicit {
        values: Vec<f64>,
    },
}

fn default_spacing() -> Spacing {
    Spacing::Log
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

impl GridConfig {
    /// Materialize a strictly increasing grid (explicit values are sorted;
    /// duplicates are rejected).
    pub fn materialize(&self, field: &str) -> Result<Vec<f64>, String> {
        match self {
            GridConfig::Spaced {
                start,
                stop,
                points,
                spacing,
            } => {
                if *points < 2 {
                    return Err(format!("{field}: a spaced grid needs at least 2 points"));
                }
                if !(*start < *stop) {
                    return Err(format!("{field}: start must be below stop"));
                }
                if *spacing == Spacing::Log && *start <= 0.0 {
                    return Err(format!("{field}: log spacing needs start > 0"));
                }
                let n = *points;
                let mut out = Vec::with_capacity(n);
                for k in 0..n {
                    let f = k as f64 / (n - 1) as f64;
                    out.push(match spacing {
                        Spacing::Log => start * (stop / start).powf(f),
                        Spacing::Linear => start + (stop - start) * f,
                    });
                }
                Ok(out)
            }
            GridConfig::Explicit { values } => {
                if values.is_empty() {
                    return Err(format!("{field}: empty grid"));
                }
                let mut sorted = values.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(format!("{field}: grid values must be distinct"));
                }
                Ok(sorted)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: String,
    pub grid: GridConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesConfig {
    pub n: usize,
    pub t_max: f64,
    pub dt: Option<f64>,
    pub sample_stride: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub modes: Option<Vec<String>>,
    pub tau_samples: Option<usize>,
    pub dtau: Option<f64>,
    pub omega_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Validate3Config {
    pub kappa2_grid: Option<GridConfig>,
    pub fidelity_t_max: Option<f64>,
    pub fidelity_dt: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeLevelConfig {
    pub g1: Option<f64>,
    pub g3: Option<f64>,
    pub g4: Option<f64>,
    pub delta: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub pump: Option<f64>,
    pub gamma: Option<f64>,
    pub omega0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub three_level: Option<ThreeLevelConfig>,
    #[serde(default)]
    pub space: Option<SpaceConfig>,
    #[serde(default)]
    pub auto_converge: Option<bool>,
    #[serde(default)]
    pub convergence_tol: Option<f64>,
    #[serde(default)]
    pub convergence_max_dim: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub trajectories: Option<TrajectoriesConfig>,
    #[serde(default)]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default)]
    pub validate3: Option<Validate3Config>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub g1_hz: Option<f64>,
    #[serde(default)]
    pub out_prefix: Option<String>,
}

/// Everything a run needs, with defaults filled in and recorded.
#[derive(Clone, Debug)]
pub struct Materialized {
    pub config: RunConfig,
    pub two_level: TwoLevelParams,
    pub three_level: Option<ThreeLevelParams>,
    pub space: SpaceSpec,
    pub space_explicit: bool,
    pub auto_converge: bool,
    pub convergence_tol: f64,
    pub convergence_max_dim: usize,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_grid: Option<Vec<f64>>,
    pub seed: u64,
    pub defaults_applied: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))
}

pub fn materialize(raw: &RunConfig) -> Result<Materialized, String> {
    let mut defaults = Vec::new();
    let mut warnings = Vec::new();
    let mut config = raw.clone();

    let mut field = |name: &str, value: Option<f64>, fallback: f64| -> f64 {
        value.unwrap_or_else(|| {
            defaults.push(format!("params.{name} = {fallback}"));
            fallback
        })
    };
    let base = TwoLevelParams::baseline();
    let g1 = field("g1", raw.params.g1, base.g1);
    let g2 = field("g2", raw.params.g2, 0.1 * g1);
    let kappa1 = field("kappa1", raw.params.kappa1, base.kappa1);
    let kappa2 = field("kappa2", raw.params.kappa2, base.kappa2);
    let pump = field("pump", raw.params.pump, base.pump);
    let gamma = field("gamma", raw.params.gamma, base.gamma);
    let mut two_level = TwoLevelParams::new(g1, g2, kappa1, kappa2, pump, gamma)
        .map_err(|e| format!("params: {e}"))?;
    two_level.omega0 = raw.params.omega0;
    config.params = ParamsConfig {
        g1: Some(g1),
        g2: Some(g2),
        kappa1: Some(kappa1),
        kappa2: Some(kappa2),
        pump: Some(pump),
        gamma: Some(gamma),
        omega0: raw.params.omega0,
    };
    if g2 > g1 {
        warnings.push(format!(
            "g2 = {g2} exceeds g1 = {g1}: outside the validity region of the \
             effective two-photon model"
        ));
    }

    let three_level = if raw.subcommand == Subcommand::Validate3 {
        let t = raw.three_level.clone().unwrap_or_else(|| {
            defaults.push("three_level = operating point".into());
            ThreeLevelConfig::default()
        });
        let tl_base = ThreeLevelParams::baseline();
        let mut tfield = |name: &str, value: Option<f64>, fallback: f64| -> f64 {
            value.unwrap_or_else(|| {
                defaults.push(format!("three_level.{name} = {fallback}"));
                fallback
            })
        };
        let p = ThreeLevelParams::new(
            tfield("g1", t.g1, tl_base.g1),
            tfield("g3", t.g3, tl_base.g3),
            tfield("g4", t.g4, tl_base.g4),
            tfield("delta", t.delta, tl_base.delta),
            tfield("kappa1", t.kappa1, tl_base.kappa1),
            tfield("kappa2", t.kappa2, tl_base.kappa2),
            tfield("pump", t.pump, tl_base.pump),
            tfield("gamma", t.gamma, tl_base.gamma),
        )
        .map_err(|e| format!("three_level: {e}"))?;
        if p.detuning_warning() {
            warnings.push(format!(
                "three-level detuning |delta| = {} is below 10x the couplings; \
                 the effective model is unreliable here",
                p.delta.abs()
            ));
        }
        config.three_level = Some(ThreeLevelConfig {
            g1: Some(p.g1),
            g3: Some(p.g3),
            g4: Some(p.g4),
            delta: Some(p.delta),
            kappa1: Some(p.kappa1),
            kappa2: Some(p.kappa2),
            pump: Some(p.pump),
            gamma: Some(p.gamma),
            omega0: t.omega0,
        });
        Some(p)
    } else {
        None
    };

    let space_explicit = raw.space.is_some();
    let space = match &raw.space {
        Some(s) => SpaceSpec::two_level(s.na_max, s.nb_max).map_err(|e| format!("space: {e}"))?,
        None => {
            defaults.push("space = (na_max = 3, nb_max = 6)".into());
            SpaceSpec::two_level(3, 6).unwrap()
        }
    };
    config.space = Some(SpaceConfig {
        na_max: space.na_max(),
        nb_max: space.nb_max(),
    });

    let auto_converge = raw.auto_converge.unwrap_or_else(|| {
        defaults.push("auto_converge = false".into());
        false
    });
    config.auto_converge = Some(auto_converge);
    let convergence_tol = raw.convergence_tol.unwrap_or_else(|| {
        defaults.push("convergence_tol = 1e-3".into());
        1e-3
    });
    if !(convergence_tol > 0.0) {
        return Err("convergence_tol must be > 0".into());
    }
    config.convergence_tol = Some(convergence_tol);
    let convergence_max_dim = raw.convergence_max_dim.unwrap_or_else(|| {
        defaults.push("convergence_max_dim = 700".into());
        700
    });
    if convergence_max_dim < 12 {
        return Err("convergence_max_dim must be at least 12".into());
    }
    config.convergence_max_dim = Some(convergence_max_dim);

    let (sweep_axis, sweep_grid) = match &raw.sweep {
        Some(sw) => {
            let axis = SweepAxis::parse(&sw.axis).ok_or_else(|| {
                format!(
                    "sweep.axis: unknown axis '{}' (expected kappa1, kappa2, pump, gamma or g2)",
                    sw.axis
                )
            })?;
            let grid = sw.grid.materialize("sweep.grid")?;
            if grid.iter().any(|&v| v < 0.0) {
                return Err("sweep.grid: negative parameter values".into());
            }
            (Some(axis), Some(grid))
        }
        None => (None, None),
    };
    if raw.subcommand == Subcommand::Sweep && sweep_axis.is_none() {
        return Err("sweep runs need a 'sweep' section with exactly one axis".into());
    }

    let seed = raw.seed.unwrap_or_else(|| {
        defaults.push("seed = 0".into());
        0
    });
    config.seed = Some(seed);
    if let Some(hz) = raw.g1_hz {
        if !(hz > 0.0) {
            return Err("g1_hz must be > 0".into());
        }
    }
    if config.out_prefix.is_none() {
        config.out_prefix = Some(raw.subcommand.name().to_string());
        defaults.push(format!("out_prefix = {}", raw.subcommand.name()));
    }

    Ok(Materialized {
        config,
        two_level,
        three_level,
        space,
        space_explicit,
        auto_converge,
        convergence_tol,
        convergence_max_dim,
        sweep_axis,
        sweep_grid,
        seed,
        defaults_applied: defaults,
        warnings,
    })
}
