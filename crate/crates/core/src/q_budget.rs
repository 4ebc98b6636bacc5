//! Quality-factor bookkeeping.
//!
//! The loss rate of the loaded cavity is the sum of its channels:
//! `1/Q_L = 1/Q_0 + 1/Q_d + Σ 1/Q_ext,i`. Removing the external ports gives
//! the unloaded quality factor, and with superconducting walls (`Q_0 ≫ Q_d`)
//! the unloaded and dielectric quality factors coincide.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of coupler ports on the cavity.
pub const MAX_PORTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("quality factor must be positive and finite, got {0}")]
    NonPositive(f64),
    #[error("at most {MAX_PORTS} ports are supported, got {0}")]
    TooManyPorts(usize),
    #[error("external losses (1/Q_ext sum {external:e}) meet or exceed the loaded losses (1/Q_L {loaded:e}); check the coupling calibration")]
    Overcoupled { loaded: f64, external: f64 },
    #[error("intrinsic losses 1/Q_0 ({intrinsic:e}) meet or exceed the unloaded losses ({unloaded:e})")]
    WallLossTooLarge { unloaded: f64, intrinsic: f64 },
    #[error("walls are not declared lossless, so an intrinsic Q_0 is required")]
    MissingIntrinsicQ,
}

/// External quality factor of one coupler port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExternalQ {
    Finite(f64),
    /// Port decoupled from the cavity; contributes no loss.
    Decoupled(DecoupledMarker),
}

/// Serialized form of a decoupled port: the string `"decoupled"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoupledMarker {
    Decoupled,
}

impl ExternalQ {
    pub const DECOUPLED: Self = Self::Decoupled(DecoupledMarker::Decoupled);

    /// Loss rate 1/Q_ext; exactly zero for a decoupled port.
    pub fn loss(self) -> f64 {
        match self {
            Self::Finite(q) => 1.0 / q,
            Self::Decoupled(_) => 0.0,
        }
    }

    pub fn is_decoupled(self) -> bool {
        matches!(self, Self::Decoupled(_))
    }
}

impl fmt::Display for ExternalQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(q) => write!(f, "{q}"),
            Self::Decoupled(_) => f.write_str("decoupled"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingSource {
    Measured,
    Simulated,
}

/// External quality factors of the cavity ports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSet {
    ports: Vec<ExternalQ>,
    source: CouplingSource,
}

fn check_q(q: f64) -> Result<f64, BudgetError> {
    if q.is_finite() && q > 0.0 {
        Ok(q)
    } else {
        Err(BudgetError::NonPositive(q))
    }
}

impl CouplingSet {
    pub fn new(ports: Vec<ExternalQ>, source: CouplingSource) -> Result<Self, BudgetError> {
        if ports.len() > MAX_PORTS {
            return Err(BudgetError::TooManyPorts(ports.len()));
        }
        for port in &ports {
            if let ExternalQ::Finite(q) = port {
                check_q(*q)?;
            }
        }
        Ok(Self { ports, source })
    }

    pub fn ports(&self) -> &[ExternalQ] {
        &self.ports
    }

    pub fn source(&self) -> CouplingSource {
        self.source
    }

    /// Σ 1/Q_ext over the finite ports.
    pub fn total_loss(&self) -> f64 {
        self.ports.iter().map(|p| p.loss()).sum()
    }
}

/// How the cavity walls enter the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WallModel {
    /// Superconducting walls with Q_0 ≫ Q_d: Q_d = Q_UL.
    Lossless,
    /// Finite intrinsic quality factor Q_0.
    Finite(f64),
}

impl WallModel {
    pub fn from_flag(assume_lossless: bool, q_intrinsic: Option<f64>) -> Result<Self, BudgetError> {
        match (assume_lossless, q_intrinsic) {
            (true, _) => Ok(Self::Lossless),
            (false, Some(q0)) => Ok(Self::Finite(check_q(q0)?)),
            (false, None) => Err(BudgetError::MissingIntrinsicQ),
        }
    }

    pub fn loss(self) -> f64 {
        match self {
            Self::Lossless => 0.0,
            Self::Finite(q0) => 1.0 / q0,
        }
    }
}

/// `1/Q_UL = 1/Q_L − Σ 1/Q_ext,i`.
pub fn unloaded_q(q_loaded: f64, couplings: &CouplingSet) -> Result<f64, BudgetError> {
    let loaded = 1.0 / check_q(q_loaded)?;
    let external = couplings.total_loss();
    if external == 0.0 {
        return Ok(q_loaded);
    }
    let remainder = loaded - external;
    if remainder <= 0.0 {
        return Err(BudgetError::Overcoupled { loaded, external });
    }
    Ok(1.0 / remainder)
}

/// Dielectric quality factor from the unloaded one.
pub fn dielectric_q(q_unloaded: f64, walls: WallModel) -> Result<f64, BudgetError> {
    check_q(q_unloaded)?;
    match walls {
        WallModel::Lossless => Ok(q_unloaded),
        WallModel::Finite(q0) => {
            let unloaded = 1.0 / q_unloaded;
            let intrinsic = 1.0 / check_q(q0)?;
            let remainder = unloaded - intrinsic;
            if remainder <= 0.0 {
                return Err(BudgetError::WallLossTooLarge {
                    unloaded,
                    intrinsic,
                });
            }
            Ok(1.0 / remainder)
        }
    }
}

/// β_i = Q_UL/Q_ext,i; zero for a decoupled port. The port is undercoupled
/// when β < 1.
pub fn coupling_coefficient(q_unloaded: f64, port: ExternalQ) -> f64 {
    q_unloaded * port.loss()
}

/// Loss channels of a cavity, composed forward into the loaded Q.
#[derive(Debug, Clone, PartialEq)]
pub struct LossChannels {
    pub walls: WallModel,
    pub q_dielectric: f64,
    pub couplings: CouplingSet,
}

impl LossChannels {
    pub fn loaded_q(&self) -> f64 {
        1.0 / (self.walls.loss() + 1.0 / self.q_dielectric + self.couplings.total_loss())
    }

    pub fn unloaded_q(&self) -> f64 {
        1.0 / (self.walls.loss() + 1.0 / self.q_dielectric)
    }
}

/// Loaded, unloaded and dielectric quality factors of one measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QBudget {
    pub q_loaded: f64,
    pub q_unloaded: f64,
    pub q_dielectric: f64,
    pub q_intrinsic_assumed_infinite: bool,
    /// β per port, in port order.
    pub coupling_coefficients: Vec<f64>,
}

impl QBudget {
    pub fn compute(
        q_loaded: f64,
        couplings: &CouplingSet,
        walls: WallModel,
    ) -> Result<Self, BudgetError> {
        let q_unloaded = unloaded_q(q_loaded, couplings)?;
        let q_dielectric = dielectric_q(q_unloaded, walls)?;
        Ok(Self {
            q_loaded,
            q_unloaded,
            q_dielectric,
            q_intrinsic_assumed_infinite: walls == WallModel::Lossless,
            coupling_coefficients: couplings
                .ports()
                .iter()
                .map(|p| coupling_coefficient(q_unloaded, *p))
                .collect(),
        })
    }

    /// Whether every finite port has β < 1.
    pub fn undercoupled(&self) -> bool {
        self.coupling_coefficients.iter().all(|b| *b < 1.0)
    }
}
