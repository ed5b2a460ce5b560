//! JSON instance files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{build_budget_uncertainty, pin_factor, FactorModel, FactorSet, FactorUncertainty};
use crate::mdp::{MdpInstance, TransitionKernel};
use crate::numerics::{Matrix, Polytope};
use crate::robust::SRectUncertainty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub states: usize,
    pub actions: usize,
    pub discount: f64,
    pub p0: Vec<f64>,
    /// `[s][a]`.
    pub rewards: Vec<Vec<f64>>,
    /// `[s][a][s']`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_model: Option<FactorModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_rect: Option<SRectSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorModelSpec {
    pub r: usize,
    /// `[s][i][a]`.
    #[serde(rename = "U")]
    pub u: Vec<Vec<Vec<f64>>>,
    /// `[s'][i]`.
    #[serde(rename = "W_nom")]
    pub w_nom: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyKind {
    Budget,
    Polytope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySpec {
    #[serde(rename = "type")]
    pub kind: UncertaintyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned: Vec<PinSpec>,
    /// Per-factor `{A, b}` polytopes (`A w ≥ b, w ≥ 0`) for `type = "polytope"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<PolytopeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinSpec {
    pub index: usize,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Number of primary variables when trailing columns are auxiliary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SRectSpec {
    pub tau: f64,
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    1.0
}

/// Failure to obtain an instance: unreadable file, bad JSON or failed validation.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl InstanceFile {
    pub fn load(path: &Path) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: InstanceFile = serde_json::from_str(&text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialises") + "\n"
    }

    pub fn from_parts(inst: &MdpInstance, kernel: Option<&TransitionKernel>) -> Self {
        InstanceFile {
            states: inst.states(),
            actions: inst.actions(),
            discount: inst.discount(),
            p0: inst.p0().to_vec(),
            rewards: inst.rewards().to_rows(),
            kernel: kernel.map(TransitionKernel::to_nested),
            factor_model: None,
            uncertainty: None,
            s_rect: None,
        }
    }

    /// Checks every present block against the declared sizes and invariants.
    pub fn validate(&self) -> Result<()> {
        let inst = self.instance()?;
        if let Some(k) = self.kernel()? {
            inst.check_kernel(&k)?;
        }
        if let Some(fm) = self.factor_model()? {
            if self.uncertainty.is_some() {
                self.uncertainty(&fm, None)?;
            }
        } else if self.uncertainty.is_some() {
            return Err(Error::invalid("uncertainty", "requires a factor_model block"));
        }
        if self.s_rect.is_some() && self.kernel.is_none() && self.factor_model.is_none() {
            return Err(Error::invalid("s_rect", "requires a kernel or factor_model block"));
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<MdpInstance> {
        if self.rewards.len() != self.states {
            return Err(Error::dims("rewards", self.states, self.rewards.len()));
        }
        if let Some(row) = self.rewards.iter().find(|r| r.len() != self.actions) {
            return Err(Error::dims("rewards row", self.actions, row.len()));
        }
        MdpInstance::new(Matrix::from_rows(&self.rewards)?, self.discount, self.p0.clone())
    }

    pub fn kernel(&self) -> Result<Option<TransitionKernel>> {
        let Some(k) = &self.kernel else { return Ok(None) };
        if k.len() != self.states {
            return Err(Error::dims("kernel states", self.states, k.len()));
        }
        if let Some(block) = k.iter().find(|b| b.len() != self.actions) {
            return Err(Error::dims("kernel actions", self.actions, block.len()));
        }
        if let Some(row) = k.iter().flatten().find(|r| r.len() != self.states) {
            return Err(Error::dims("kernel row", self.states, row.len()));
        }
        TransitionKernel::from_nested(k).map(Some)
    }

    pub fn factor_model(&self) -> Result<Option<FactorModel>> {
        let Some(spec) = &self.factor_model else { return Ok(None) };
        if spec.u.len() != self.states {
            return Err(Error::dims("U states", self.states, spec.u.len()));
        }
        if let Some(block) = spec.u.iter().find(|b| b.len() != spec.r) {
            return Err(Error::dims("U factors", spec.r, block.len()));
        }
        if let Some(row) = spec.u.iter().flatten().find(|r| r.len() != self.actions) {
            return Err(Error::dims("U actions", self.actions, row.len()));
        }
        if spec.w_nom.len() != self.states {
            return Err(Error::dims("W_nom rows", self.states, spec.w_nom.len()));
        }
        FactorModel::new(&spec.u, Matrix::from_rows(&spec.w_nom)?).map(Some)
    }

    /// The kernel block if present, otherwise the factor model assembled at `W_nom`.
    pub fn nominal_kernel(&self) -> Result<TransitionKernel> {
        if let Some(k) = self.kernel()? {
            return Ok(k);
        }
        match self.factor_model()? {
            Some(fm) => fm.nominal_kernel(),
            None => Err(Error::invalid("instance", "needs a kernel or factor_model block")),
        }
    }

    pub fn require_factor_model(&self) -> Result<FactorModel> {
        self.factor_model()?
            .ok_or_else(|| Error::invalid("factor_model", "block is required for this command"))
    }

    /// Factor uncertainty from the file; `tau` overrides a budget radius.
    /// Without an uncertainty block, budget sets of radius `tau` are used.
    pub fn uncertainty(&self, fm: &FactorModel, tau: Option<f64>) -> Result<FactorUncertainty> {
        let default = UncertaintySpec {
            kind: UncertaintyKind::Budget,
            tau: None,
            c: 1.0,
            pinned: Vec::new(),
            factors: Vec::new(),
        };
        let spec = self.uncertainty.as_ref().unwrap_or(&default);
        let mut fu = match spec.kind {
            UncertaintyKind::Budget => {
                let tau = tau
                    .or(spec.tau)
                    .ok_or_else(|| Error::invalid("tau", "no radius in the file or on the command line"))?;
                build_budget_uncertainty(fm.w_nom(), tau, spec.c)?
            }
            UncertaintyKind::Polytope => {
                let sets = spec
                    .factors
                    .iter()
                    .map(|p| {
                        let a = Matrix::from_rows(&p.a)?;
                        let dim = p.dim.unwrap_or(a.cols());
                        Polytope::lifted(a, p.b.clone(), dim).map(FactorSet::Polytope)
                    })
                    .collect::<Result<Vec<_>>>()?;
                FactorUncertainty::new(sets)?
            }
        };
        for pin in &spec.pinned {
            fu = pin_factor(&fu, pin.index, &pin.point)?;
        }
        fu.check_against(fm)?;
        Ok(fu)
    }

    /// s-rectangular sets around the nominal kernel, absorbing states pinned.
    pub fn s_rect(&self, tau: Option<f64>) -> Result<SRectUncertainty> {
        let c = self.s_rect.as_ref().map_or(1.0, |s| s.c);
        let tau = tau
            .or(self.s_rect.as_ref().map(|s| s.tau))
            .ok_or_else(|| Error::invalid("tau", "no s_rect radius in the file or on the command line"))?;
        Ok(SRectUncertainty::new(self.nominal_kernel()?, tau, c)?.pin_absorbing())
    }

    pub fn set_factor_model(&mut self, fm: &FactorModel) {
        self.factor_model = Some(FactorModelSpec {
            r: fm.rank(),
            u: fm.u_nested(),
            w_nom: fm.w_nom().to_rows(),
        });
    }
}
