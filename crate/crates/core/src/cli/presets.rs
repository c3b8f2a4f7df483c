//! Built-in scenarios. Each one is also shipped as a JSON file under
//! `presets/` and the two are kept byte-identical by a test.

use super::config::{
    CostConfig, ImpulseConfig, MatrixConfig, NoiseConfig, OptimizerConfig, PicardConfig, ScenarioConfig,
    SpectrumConfig, VectorConfig,
};
use super::families::{DiffusionFamily, DriftFamily};
use crate::control_opt::AdmissibleSet;
use crate::wellposedness::LipschitzBundle;

pub const PRESET_NAMES: [&str; 4] = ["advection_diffusion", "ornstein_uhlenbeck", "contraction", "lq_toy"];

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "advection_diffusion" => Some(advection_diffusion()),
        "ornstein_uhlenbeck" => Some(ornstein_uhlenbeck()),
        "contraction" => Some(contraction()),
        "lq_toy" => Some(lq_toy()),
        _ => None,
    }
}

/// `y_t = y_xx − y_x + (2/5)cos t + y/(t + 5) + u + h dW` on `(0, 1)` with
/// Dirichlet boundary values, one identity jump at `t = 1/2` with input
/// `sin(πx)`, in the first 16 sine modes.
pub fn advection_diffusion() -> ScenarioConfig {
    let d = 16;
    let half_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    ScenarioConfig {
        name: "advection_diffusion".into(),
        description: concat!(
            "First-order form y' = y_xx - y_x + Bu + g + h dW/dt on (0,1), Dirichlet boundary, ",
            "sine basis e_k = sqrt(2) sin(k pi x). The constant forcing 0.4 cos(t) and the scalar ",
            "diffusion act on the first mode; h enters through noise mode 0. The impulse input ",
            "sin(pi x) is (1/sqrt 2) e_1."
        )
        .into(),
        spectrum: SpectrumConfig::DirichletAdvectionDiffusion { dim: d },
        bound_m: Some(1.0),
        horizon: 1.0,
        dt: 1.0 / 128.0,
        initial: VectorConfig::Zeros,
        control_dim: d,
        control_operator: MatrixConfig::Identity,
        impulses: vec![ImpulseConfig {
            time: 0.5,
            jump: MatrixConfig::Identity,
            input_map: MatrixConfig::Identity,
            input_dim: None,
            input: VectorConfig::Unit {
                index: 0,
                value: half_sqrt2,
            },
        }],
        drift: DriftFamily::AffineDrift {
            forcing: 0.4,
            forcing_mode: 0,
            shift: 5.0,
        },
        diffusion: DiffusionFamily::LogisticSaturation { scale: 0.2, mode: 0 },
        noise: NoiseConfig::PowerLaw {
            modes: 8,
            amplitude: 1.0,
            exponent: 2.0,
        },
        lipschitz: LipschitzBundle {
            growth_g: 0.4,
            growth_h: 0.4,
            lipschitz_g: 0.04,
            lipschitz_h: 0.04,
        },
        cost: CostConfig {
            state_weight: 1.0,
            control_weight: 1.0,
        },
        admissible: AdmissibleSet::symmetric_box(d, 1.0),
        control_intervals: 16,
        seed: 0,
        paths: 10_000,
        picard: PicardConfig::default(),
        optimizer: OptimizerConfig {
            budget: 500,
            paths: 100,
            ..OptimizerConfig::default()
        },
    }
}

/// Scalar Ornstein–Uhlenbeck process `dy = −y dt + dW` from `y(0) = 0` on `[0, 5]`.
pub fn ornstein_uhlenbeck() -> ScenarioConfig {
    ScenarioConfig {
        name: "ornstein_uhlenbeck".into(),
        description: "Scalar OU process; E y(T)^2 = (1 - exp(-2T))/2.".into(),
        spectrum: SpectrumConfig::Explicit { mu: vec![-1.0] },
        bound_m: None,
        horizon: 5.0,
        dt: 1.0 / 64.0,
        initial: VectorConfig::Zeros,
        control_dim: 1,
        control_operator: MatrixConfig::Zero,
        impulses: vec![],
        drift: DriftFamily::Zero,
        diffusion: DiffusionFamily::Additive { sigma: 1.0 },
        noise: NoiseConfig::Explicit { lambda: vec![1.0] },
        lipschitz: LipschitzBundle {
            growth_g: 0.0,
            growth_h: 1.0,
            lipschitz_g: 0.0,
            lipschitz_h: 0.0,
        },
        cost: CostConfig {
            state_weight: 1.0,
            control_weight: 1.0,
        },
        admissible: AdmissibleSet::symmetric_box(1, 1.0),
        control_intervals: 1,
        seed: 0,
        paths: 10_000,
        picard: PicardConfig::default(),
        optimizer: OptimizerConfig::default(),
    }
}

/// Two-mode system on `[0, 1/4]` whose Lipschitz constants make the
/// uniqueness constant `k = 0.085`.
pub fn contraction() -> ScenarioConfig {
    ScenarioConfig {
        name: "contraction".into(),
        description: "Uniqueness condition holds with k1 = 0.0025, k2 = 0.085.".into(),
        spectrum: SpectrumConfig::Explicit { mu: vec![-1.0, -4.0] },
        bound_m: Some(1.0),
        horizon: 0.25,
        dt: 1.0 / 256.0,
        initial: VectorConfig::Dense {
            values: vec![1.0, -0.5],
        },
        control_dim: 2,
        control_operator: MatrixConfig::Identity,
        impulses: vec![ImpulseConfig {
            time: 0.125,
            jump: MatrixConfig::Zero,
            input_map: MatrixConfig::Identity,
            input_dim: None,
            input: VectorConfig::Dense { values: vec![0.1, 0.0] },
        }],
        drift: DriftFamily::Saturation { scale: 0.1 },
        diffusion: DiffusionFamily::Multiplicative { sigma: 0.1 },
        noise: NoiseConfig::Explicit { lambda: vec![1.0, 0.5] },
        lipschitz: LipschitzBundle {
            growth_g: 0.01,
            growth_h: 0.01,
            lipschitz_g: 0.01,
            lipschitz_h: 0.01,
        },
        cost: CostConfig {
            state_weight: 1.0,
            control_weight: 1.0,
        },
        admissible: AdmissibleSet::symmetric_box(2, 1.0),
        control_intervals: 4,
        seed: 0,
        paths: 256,
        picard: PicardConfig::default(),
        optimizer: OptimizerConfig::default(),
    }
}

/// Scalar linear-quadratic problem with additive noise and four control pieces.
pub fn lq_toy() -> ScenarioConfig {
    ScenarioConfig {
        name: "lq_toy".into(),
        description: "dy = (-0.5 y + u) dt + 0.2 dW, y(0) = 1, cost y^2 + u^2.".into(),
        spectrum: SpectrumConfig::Explicit { mu: vec![-0.5] },
        bound_m: None,
        horizon: 1.0,
        dt: 1.0 / 32.0,
        initial: VectorConfig::Dense { values: vec![1.0] },
        control_dim: 1,
        control_operator: MatrixConfig::Identity,
        impulses: vec![],
        drift: DriftFamily::Zero,
        diffusion: DiffusionFamily::Additive { sigma: 0.2 },
        noise: NoiseConfig::Explicit { lambda: vec![1.0] },
        lipschitz: LipschitzBundle {
            growth_g: 0.0,
            growth_h: 0.04,
            lipschitz_g: 0.0,
            lipschitz_h: 0.0,
        },
        cost: CostConfig {
            state_weight: 1.0,
            control_weight: 1.0,
        },
        admissible: AdmissibleSet::symmetric_box(1, 1.0),
        control_intervals: 4,
        seed: 0,
        paths: 1000,
        picard: PicardConfig::default(),
        optimizer: OptimizerConfig {
            budget: 600,
            paths: 64,
            ..OptimizerConfig::default()
        },
    }
}
