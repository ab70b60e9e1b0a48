//! Experiment configuration and the per-figure defaults.

use std::path::PathBuf;

use kst_core::{collective_spin_z, random_observable, BoundFamily, Error, Observable, Pauli, Result, StateDescription};
use kst_shadows::Ensemble;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Largest N for the dense exact path.
pub const EXACT_MAX_QUBITS: usize = 12;
/// Largest N for shadow runs at the default budgets.
pub const SHADOW_MAX_QUBITS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "fig2a")]
    Fig2a,
    #[serde(rename = "fig2b")]
    Fig2b,
    #[serde(rename = "fig2c")]
    Fig2c,
    #[serde(rename = "fig3a")]
    Fig3a,
    #[serde(rename = "fig3b")]
    Fig3b,
    #[serde(rename = "fig3c")]
    Fig3c,
    #[serde(rename = "figS3")]
    FigS3,
    #[serde(rename = "custom")]
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Fig2a,
        Experiment::Fig2b,
        Experiment::Fig2c,
        Experiment::Fig3a,
        Experiment::Fig3b,
        Experiment::Fig3c,
        Experiment::FigS3,
        Experiment::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig2a => "fig2a",
            Experiment::Fig2b => "fig2b",
            Experiment::Fig2c => "fig2c",
            Experiment::Fig3a => "fig3a",
            Experiment::Fig3b => "fig3b",
            Experiment::Fig3c => "fig3c",
            Experiment::FigS3 => "figS3",
            Experiment::Custom => "custom",
        }
    }
}

/// How many snapshots a shadow run gets per sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ShadowBudget {
    Fixed { m: usize },
    /// M = max(floor, ⌈scale · T_0,max / T_0⌉), T_0,max taken over the sweep.
    InverseT0 { floor: usize, scale: usize },
    /// I and L from the concentration planner, with ε = epsilon · T_0.
    Planner { epsilon: f64, delta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    /// ½ Σ_i σ_z^(i)
    CollectiveSpinZ,
    Random { seed: u64 },
    /// Labels such as "XZIY", qubit 0 first.
    PauliString { labels: String, coefficient: f64 },
}

impl ObservableSpec {
    pub fn build(&self, n_qubits: usize) -> Result<Observable<f64>> {
        match self {
            ObservableSpec::CollectiveSpinZ => collective_spin_z(n_qubits),
            ObservableSpec::Random { seed } => random_observable(n_qubits, *seed),
            ObservableSpec::PauliString { labels, coefficient } => {
                let parsed = labels
                    .chars()
                    .map(|ch| match ch.to_ascii_uppercase() {
                        'I' => Ok(Pauli::I),
                        'X' => Ok(Pauli::X),
                        'Y' => Ok(Pauli::Y),
                        'Z' => Ok(Pauli::Z),
                        other => Err(Error::Validation(format!("unknown Pauli label {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                if parsed.len() != n_qubits {
                    return Err(Error::DimensionMismatch { expected: n_qubits, found: parsed.len() });
                }
                Observable::pauli_string(&parsed, *coefficient)
            }
        }
    }
}

/// Smallest-M search for the resource-scaling panels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub n_grid: Vec<usize>,
    /// The M grid is m_min · 2^(j / steps_per_octave), capped at m_max.
    pub m_min: usize,
    pub m_max: usize,
    pub steps_per_octave: usize,
    /// Independent batches per grid point; the decision uses their median Ê.
    pub reps: usize,
    pub threshold: f64,
    /// Further grid points that must also meet the threshold before M* is accepted.
    pub confirm: usize,
    /// Mixing weight of the pseudo-pure study.
    pub p: f64,
    /// Hamming-weight parameter of the bound-entangled study.
    pub k: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            n_grid: (2..=6).collect(),
            m_min: 256,
            m_max: 1 << 24,
            steps_per_octave: 2,
            reps: 5,
            threshold: 0.1,
            confirm: 2,
            p: 0.25,
            k: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Stem of the output files; the experiment name when unset.
    pub name: Option<String>,
    pub n_qubits: usize,
    pub p_grid: Vec<f64>,
    /// Empty means 1..=⌊N/2⌋.
    pub k_grid: Vec<usize>,
    pub bounds: Vec<BoundFamily>,
    pub observable: ObservableSpec,
    /// Krylov order of the shadow estimate.
    pub krylov_order: usize,
    pub budget: ShadowBudget,
    /// Subsample count I for fixed budgets.
    pub repetitions: usize,
    pub ensemble: Ensemble,
    pub tuple_budget: u64,
    pub max_snapshots: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub scaling: ScalingConfig,
    /// Number of random states for figS3.
    pub samples: usize,
    /// Rank of the figS3 states; uniform over 1..=2^N when unset.
    pub random_rank: Option<usize>,
    /// State for `custom`.
    pub state: Option<StateDescription>,
    /// Whether `custom` also runs the shadow estimate.
    pub estimate: bool,
    /// When set, every generated batch is written here for replay.
    pub replay_dir: Option<PathBuf>,
}

pub fn default_p_grid() -> Vec<f64> {
    (0..21).map(|j| (95 * j) as f64 / 2000.0).collect()
}

fn exact_families() -> Vec<BoundFamily> {
    vec![
        BoundFamily::Legendre,
        BoundFamily::SubQfi,
        BoundFamily::Taylor(1),
        BoundFamily::Taylor(2),
        BoundFamily::Taylor(3),
        BoundFamily::Krylov(1),
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults(Experiment::Custom)
    }
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            name: None,
            n_qubits: 4,
            p_grid: default_p_grid(),
            k_grid: Vec::new(),
            bounds: exact_families(),
            observable: ObservableSpec::CollectiveSpinZ,
            krylov_order: 1,
            budget: ShadowBudget::Fixed { m: 100_000 },
            repetitions: 24,
            ensemble: Ensemble::Clifford,
            tuple_budget: kst_shadows::estimator::DEFAULT_TUPLE_BUDGET,
            max_snapshots: 50_000_000,
            seed: 2024,
            workers: None,
            scaling: ScalingConfig::default(),
            samples: 100_000,
            random_rank: None,
            state: None,
            estimate: true,
            replay_dir: None,
        };
        match experiment {
            Experiment::Fig2a | Experiment::Fig3a => Self { n_qubits: 8, ..base },
            Experiment::Fig2b => Self { budget: ShadowBudget::InverseT0 { floor: 480_000, scale: 40_000 }, ..base },
            Experiment::Fig3b => Self { budget: ShadowBudget::Fixed { m: 606_000 }, ..base },
            Experiment::Fig2c => base,
            Experiment::Fig3c => Self { scaling: ScalingConfig { k: 1, ..ScalingConfig::default() }, ..base },
            Experiment::FigS3 => Self {
                n_qubits: 2,
                bounds: vec![
                    BoundFamily::Legendre,
                    BoundFamily::SubQfi,
                    BoundFamily::Taylor(1),
                    BoundFamily::Taylor(2),
                    BoundFamily::Taylor(3),
                    BoundFamily::Krylov(1),
                    BoundFamily::Krylov(2),
                    BoundFamily::Krylov(3),
                ],
                ..base
            },
            Experiment::Custom => base,
        }
    }

    /// Defaults for `experiment` overlaid with the keys present in `overrides`.
    pub fn from_json(experiment: Experiment, overrides: &Value) -> Result<Self> {
        let Value::Object(map) = overrides else {
            return Err(Error::Validation("config must be a JSON object".into()));
        };
        if let Some(v) = map.get("experiment") {
            let named: Experiment = serde_json::from_value(v.clone()).map_err(|e| Error::Validation(e.to_string()))?;
            if named != experiment {
                return Err(Error::Validation(format!(
                    "config is for {}, but {} was requested",
                    named.name(),
                    experiment.name()
                )));
            }
        }
        let mut merged = serde_json::to_value(Self::defaults(experiment)).map_err(|e| Error::Format(e.to_string()))?;
        if let Value::Object(target) = &mut merged {
            for (key, value) in map {
                target.insert(key.clone(), value.clone());
            }
        }
        let config: Self = serde_json::from_value(merged).map_err(|e| Error::Validation(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn output_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.name().to_string())
    }

    /// The k values of the bound-entangled sweeps.
    pub fn k_values(&self) -> Vec<usize> {
        if self.k_grid.is_empty() {
            (1..=self.n_qubits / 2).collect()
        } else {
            self.k_grid.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.n_qubits == 0 {
            return fail("N must be positive".into());
        }
        match self.experiment {
            Experiment::Fig2a | Experiment::Fig2b => {
                if self.p_grid.is_empty() {
                    return fail("p grid is empty".into());
                }
                if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return fail(format!("p = {p} outside [0, 1]"));
                }
            }
            Experiment::Fig3a | Experiment::Fig3b => {
                let ks = self.k_values();
                if ks.is_empty() {
                    return fail(format!("no admissible k for N = {}", self.n_qubits));
                }
                if let Some(k) = ks.iter().find(|&&k| k == 0 || k > self.n_qubits / 2) {
                    return fail(format!("k = {k} outside 1..={}", self.n_qubits / 2));
                }
            }
            Experiment::Fig2c | Experiment::Fig3c => {
                let s = &self.scaling;
                if s.n_grid.len() < 2 {
                    return fail("the scaling fit needs at least two N values".into());
                }
                if let Some(&n) = s.n_grid.iter().find(|&&n| n < 2 || n > SHADOW_MAX_QUBITS) {
                    return fail(format!("scaling N = {n} outside 2..={SHADOW_MAX_QUBITS}"));
                }
                if s.reps == 0 || s.steps_per_octave == 0 || s.m_min == 0 || s.m_max < s.m_min {
                    return fail("scaling grid needs reps, steps_per_octave, m_min > 0 and m_max >= m_min".into());
                }
                if !(s.threshold > 0.0) {
                    return fail("scaling threshold must be positive".into());
                }
            }
            Experiment::FigS3 => {
                if self.samples == 0 {
                    return fail("figS3 needs at least one sample".into());
                }
            }
            Experiment::Custom => {
                let Some(state) = &self.state else {
                    return fail("custom runs need a state".into());
                };
                if state.n_qubits() != self.n_qubits {
                    return fail(format!("state has {} qubits, config says {}", state.n_qubits(), self.n_qubits));
                }
            }
        }
        let shadow = matches!(
            self.experiment,
            Experiment::Fig2b | Experiment::Fig3b | Experiment::Fig2c | Experiment::Fig3c
        ) || (self.experiment == Experiment::Custom && self.estimate);
        if shadow && self.n_qubits > SHADOW_MAX_QUBITS {
            return fail(format!("shadow runs are capped at N = {SHADOW_MAX_QUBITS}"));
        }
        if self.n_qubits > EXACT_MAX_QUBITS {
            return fail(format!("the exact path is capped at N = {EXACT_MAX_QUBITS}"));
        }
        if self.krylov_order == 0 || self.repetitions == 0 {
            return fail("krylov_order and repetitions must be positive".into());
        }
        match self.budget {
            ShadowBudget::Fixed { m } if m == 0 => return fail("shadow budget must be positive".into()),
            ShadowBudget::InverseT0 { floor, scale } if floor == 0 && scale == 0 => {
                return fail("inverse-T0 budget needs a positive floor or scale".into())
            }
            ShadowBudget::Planner { epsilon, delta } if !(epsilon > 0.0 && delta > 0.0 && delta < 1.0) => {
                return fail(format!("planner needs epsilon > 0 and delta in (0, 1), got {epsilon}, {delta}"))
            }
            _ => {}
        }
        Ok(())
    }
}
