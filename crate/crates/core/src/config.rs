//! Run configuration: a TOML file with one section per module. Complex
//! numbers are written as "re+imi" strings.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::correlators::{CorrelatorOptions, Method};
use crate::error::{Error, Result};
use crate::model::{c64, ModelParams, C64};
use crate::nlie::NlieOptions;

/// Complex number carried as "re+imi" text.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cx(pub C64);

impl fmt::Display for Cx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (re, im) = (self.0.re, self.0.im);
        let sign = if im.is_sign_negative() { '-' } else { '+' };
        write!(f, "{re}{sign}{}i", im.abs())
    }
}

impl std::str::FromStr for Cx {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Config(format!("cannot parse complex number '{s}'"));
        if t.is_empty() {
            return Err(bad());
        }
        let Some(body) = t.strip_suffix('i') else {
            return t.parse::<f64>().map(|re| Cx(c64(re, 0.0))).map_err(|_| bad());
        };
        // the split is the last sign that is neither leading nor part of an exponent
        let b = body.as_bytes();
        let split = (1..b.len())
            .rev()
            .find(|&k| (b[k] == b'+' || b[k] == b'-') && !matches!(b[k - 1], b'e' | b'E'));
        let (re, im) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            x => x,
        };
        let re: f64 = re.parse().map_err(|_| bad())?;
        let im: f64 = im.trim_start_matches('+').parse().map_err(|_| bad())?;
        Ok(Cx(c64(re, im)))
    }
}

impl Serialize for Cx {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Cx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "L")]
    pub l: usize,
    pub gamma: f64,
    pub xi_plus: Cx,
    pub xi_minus: Cx,
    /// Inhomogeneities; empty means homogeneous.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inhom: Vec<Cx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    pub h_phi: f64,
    pub line_cutoff: f64,
    pub line_spacing: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let n = NlieOptions::default();
        let c = CorrelatorOptions::default();
        SolverSection {
            tol: n.tol,
            max_iter: n.max_iter,
            damping: n.damping,
            spacing: None,
            cutoff: None,
            delta: None,
            levels: None,
            h_phi: c.h_phi,
            line_cutoff: c.line_cutoff,
            line_spacing: c.line_spacing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QgenSection {
    pub method: String,
    pub m: usize,
    pub phi: f64,
    /// Also emit the magnetization profile.
    pub profile: bool,
}

impl Default for QgenSection {
    fn default() -> Self {
        QgenSection {
            method: "finite_sum".into(),
            m: 1,
            phi: 0.0,
            profile: false,
        }
    }
}

/// Sweep of Im ξ⁻ for `rootscan`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RootscanSection {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Default for RootscanSection {
    fn default() -> Self {
        RootscanSection {
            from: 0.13,
            to: -0.07,
            steps: 17,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub json: bool,
    pub csv: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            json: true,
            csv: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub qgen: QgenSection,
    #[serde(default)]
    pub rootscan: RootscanSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for RunConfig {
    /// L = 4 at small γ with ξ± = (1.1, 0.9)·iγ: two real roots and a real
    /// hole outside them.
    fn default() -> Self {
        RunConfig {
            model: ModelSection {
                l: 4,
                gamma: 0.1,
                xi_plus: Cx(c64(0.0, 0.11)),
                xi_minus: Cx(c64(0.0, 0.09)),
                inhom: vec![],
                epsilon: None,
            },
            solver: SolverSection::default(),
            qgen: QgenSection::default(),
            rootscan: RootscanSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form of everything except [output],
    /// so the same run written elsewhere keeps its hash.
    pub fn hash(&self) -> String {
        let key = (&self.model, &self.solver, &self.qgen, &self.rootscan);
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let mut p = ModelParams::homogeneous(m.l, m.gamma, m.xi_plus.0, m.xi_minus.0);
        if !m.inhom.is_empty() {
            p = p.with_inhom(m.inhom.iter().map(|c| c.0).collect());
        }
        if let Some(e) = m.epsilon {
            p = p.with_epsilon(e);
        }
        p.validate()
    }

    pub fn method(&self) -> Result<Method> {
        self.qgen.method.parse()
    }

    pub fn nlie_options(&self) -> NlieOptions {
        let s = &self.solver;
        NlieOptions {
            spacing: s.spacing,
            cutoff: s.cutoff,
            tol: s.tol,
            max_iter: s.max_iter,
            damping: s.damping,
        }
    }

    pub fn correlator_options(&self) -> CorrelatorOptions {
        let s = &self.solver;
        CorrelatorOptions {
            delta: s.delta,
            levels: s.levels,
            h_phi: s.h_phi,
            nlie: self.nlie_options(),
            line_cutoff: s.line_cutoff,
            line_spacing: s.line_spacing,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_text_forms() {
        for (s, v) in [
            ("0+1.1i", c64(0.0, 1.1)),
            ("0.3-0.2i", c64(0.3, -0.2)),
            ("-1e-3+2.5e-2i", c64(-1e-3, 2.5e-2)),
            ("1.5", c64(1.5, 0.0)),
            ("-0.9i", c64(0.0, -0.9)),
            ("i", c64(0.0, 1.0)),
            ("2-i", c64(2.0, -1.0)),
        ] {
            assert_eq!(s.parse::<Cx>().unwrap().0, v, "{s}");
        }
        assert!("1+2j".parse::<Cx>().is_err());
        assert_eq!(Cx(c64(0.0, -0.9)).to_string(), "0-0.9i");
    }

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn minimal_file() {
        let c = RunConfig::from_toml(
            "[model]\nL = 6\ngamma = 0.6\nxi_plus = \"0+1i\"\nxi_minus = \"0-0.2i\"\n",
        )
        .unwrap();
        assert_eq!(c.model.l, 6);
        assert_eq!(c.solver, SolverSection::default());
        assert!(RunConfig::from_toml("[model]\nL = 4\n").is_err());
        assert!(RunConfig::from_toml(
            "[model]\nL = 4\ngamma = 0.6\nxi_plus = \"1i\"\nxi_minus = \"1i\"\nfoo = 1\n"
        )
        .is_err());
    }
}
