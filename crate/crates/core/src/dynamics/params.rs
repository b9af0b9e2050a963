use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// Which parameterized model a parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cartpole,
    /// Mass-spring-damper.
    Msd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Positive,
    NonNegative,
}

struct ParamSpec {
    name: &'static str,
    bound: Bound,
    is_mass: bool,
}

const CARTPOLE_PARAMS: &[ParamSpec] = &[
    ParamSpec { name: "cart_mass", bound: Bound::Positive, is_mass: true },
    ParamSpec { name: "pole_mass", bound: Bound::Positive, is_mass: true },
    ParamSpec { name: "pole_half_length", bound: Bound::Positive, is_mass: false },
    ParamSpec { name: "gear_ratio", bound: Bound::Positive, is_mass: false },
    ParamSpec { name: "cart_friction", bound: Bound::NonNegative, is_mass: false },
    ParamSpec { name: "pole_friction", bound: Bound::NonNegative, is_mass: false },
];

const MSD_PARAMS: &[ParamSpec] = &[
    ParamSpec { name: "mass", bound: Bound::Positive, is_mass: true },
    ParamSpec { name: "stiffness", bound: Bound::NonNegative, is_mass: false },
    ParamSpec { name: "damping", bound: Bound::NonNegative, is_mass: false },
];

impl ModelKind {
    fn specs(self) -> &'static [ParamSpec] {
        match self {
            ModelKind::Cartpole => CARTPOLE_PARAMS,
            ModelKind::Msd => MSD_PARAMS,
        }
    }

    pub fn param_names(self) -> Vec<&'static str> {
        self.specs().iter().map(|s| s.name).collect()
    }

    pub fn param_index(self, name: &str) -> Option<usize> {
        self.specs().iter().position(|s| s.name == name)
    }

    pub fn mass_params(self) -> Vec<&'static str> {
        self.specs().iter().filter(|s| s.is_mass).map(|s| s.name).collect()
    }

    pub fn state_dim(self) -> usize {
        match self {
            ModelKind::Cartpole => 4,
            ModelKind::Msd => 2,
        }
    }

    pub fn control_dim(self) -> usize {
        1
    }

    /// Nominal parameter values.
    ///
    /// Cart-pole: 1 kg cart, 0.1 kg pole, 0.5 m half length, unit gear,
    /// no friction. Mass-spring-damper: m = 1, k = 1, c = 0.1.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            ModelKind::Cartpole => vec![1.0, 0.1, 0.5, 1.0, 0.0, 0.0],
            ModelKind::Msd => vec![1.0, 1.0, 0.1],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cartpole => "cartpole",
            ModelKind::Msd => "msd",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cartpole" => Ok(ModelKind::Cartpole),
            "msd" | "mass_spring_damper" => Ok(ModelKind::Msd),
            other => Err(DynamicsError::UnknownKind(other.to_string())),
        }
    }
}

/// Named physical parameters β of a model.
///
/// Masses, lengths and the gear ratio must be strictly positive. Friction,
/// damping and stiffness may be zero (a zero entry cannot be tuned, since
/// tuning happens in log coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    kind: ModelKind,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn new(kind: ModelKind, values: Vec<f64>) -> Result<Self, DynamicsError> {
        let specs = kind.specs();
        if values.len() != specs.len() {
            return Err(DynamicsError::ParamCount { kind, expected: specs.len(), got: values.len() });
        }
        for (spec, &v) in specs.iter().zip(&values) {
            let ok = v.is_finite()
                && match spec.bound {
                    Bound::Positive => v > 0.0,
                    Bound::NonNegative => v >= 0.0,
                };
            if !ok {
                return Err(DynamicsError::InvalidParam { name: spec.name, value: v });
            }
        }
        Ok(Self { kind, values })
    }

    pub fn defaults(kind: ModelKind) -> Self {
        Self { kind, values: kind.default_values() }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kind.param_names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.kind.param_index(name).map(|i| self.values[i])
    }

    pub fn with(mut self, name: &str, value: f64) -> Result<Self, DynamicsError> {
        let i = self.kind.param_index(name).ok_or_else(|| DynamicsError::UnknownParam(name.to_string()))?;
        self.values[i] = value;
        Self::new(self.kind, self.values)
    }

    /// Multiplies the named entries by their factors.
    pub fn perturbed(&self, factors: &[(&str, f64)]) -> Result<Self, DynamicsError> {
        let mut values = self.values.clone();
        for (name, factor) in factors {
            let i = self.kind.param_index(name).ok_or_else(|| DynamicsError::UnknownParam(name.to_string()))?;
            values[i] *= factor;
        }
        Self::new(self.kind, values)
    }

    /// Scales every mass entry by `factor`.
    pub fn scale_masses(&self, factor: f64) -> Result<Self, DynamicsError> {
        let masses = self.kind.mass_params();
        let factors: Vec<_> = masses.iter().map(|m| (*m, factor)).collect();
        self.perturbed(&factors)
    }
}

/// Selects which entries of β are decision variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunableMask(Vec<bool>);

impl TunableMask {
    pub fn none(kind: ModelKind) -> Self {
        Self(vec![false; kind.specs().len()])
    }

    pub fn from_names(kind: ModelKind, names: &[impl AsRef<str>]) -> Result<Self, DynamicsError> {
        let mut mask = Self::none(kind);
        for name in names {
            let i = kind.param_index(name.as_ref()).ok_or_else(|| DynamicsError::UnknownParam(name.as_ref().to_string()))?;
            mask.0[i] = true;
        }
        Ok(mask)
    }

    pub fn masses(kind: ModelKind) -> Self {
        Self::from_names(kind, &kind.mass_params()).expect("mass names are valid")
    }

    pub fn is_tunable(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|t| **t).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Fails if a tunable entry is zero (log coordinates need positivity).
    pub fn validate(&self, params: &ModelParams) -> Result<(), DynamicsError> {
        if self.0.len() != params.values.len() {
            return Err(DynamicsError::ParamCount {
                kind: params.kind,
                expected: params.values.len(),
                got: self.0.len(),
            });
        }
        for i in self.indices() {
            if params.values[i] <= 0.0 {
                return Err(DynamicsError::InvalidParam { name: params.kind.specs()[i].name, value: params.values[i] });
            }
        }
        Ok(())
    }
}
