//! Parsing of the compact flag values: threshold lists and noise specs.

use std::str::FromStr;

use obake_core::sim::{NoiseKind, Tamper};

/// One value for every dimension, or a comma list with one per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PerDim<T>(pub Vec<T>);

impl<T: FromStr> FromStr for PerDim<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|part| {
                part.trim()
                    .parse()
                    .map_err(|e| format!("invalid value {part:?}: {e}"))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(PerDim)
    }
}

impl<T: Clone> PerDim<T> {
    /// Broadcasts a single value to `dim` entries; a list must match `dim`.
    pub fn expand(&self, dim: usize, what: &str) -> Result<Vec<T>, String> {
        match self.0.len() {
            1 => Ok(vec![self.0[0].clone(); dim]),
            n if n == dim => Ok(self.0.clone()),
            n => Err(format!("{what}: {n} values given for {dim} dimensions")),
        }
    }
}

/// `uniform:N`, `gauss:S` or `adv:V`, each with a scalar or comma list.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Uniform(PerDim<u32>),
    Gauss(PerDim<f64>),
    Adv(PerDim<i64>),
}

impl FromStr for NoiseSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:VALUE, got {s:?}"))?;
        match kind {
            "uniform" => value.parse().map(NoiseSpec::Uniform),
            "gauss" => value.parse().map(NoiseSpec::Gauss),
            "adv" => value.parse().map(NoiseSpec::Adv),
            other => Err(format!("unknown noise kind {other:?} (uniform, gauss, adv)")),
        }
    }
}

impl NoiseSpec {
    pub fn to_kind(&self, dim: usize) -> Result<NoiseKind, String> {
        Ok(match self {
            NoiseSpec::Uniform(v) => NoiseKind::BoundedUniform(v.expand(dim, "noise")?),
            NoiseSpec::Gauss(v) => NoiseKind::Gaussian(v.expand(dim, "noise")?),
            NoiseSpec::Adv(v) => NoiseKind::Adversarial(v.expand(dim, "noise")?),
        })
    }
}

/// `none`, `flip-tag`, `corrupt:N` or `truncate:N`.
pub fn parse_tamper(s: &str) -> Result<Tamper, String> {
    let count = |v: &str| v.parse::<u16>().map_err(|e| format!("invalid count {v:?}: {e}"));
    match s.split_once(':') {
        None if s == "none" => Ok(Tamper::None),
        None if s == "flip-tag" => Ok(Tamper::FlipTagBit),
        Some(("corrupt", n)) => count(n).map(Tamper::CorruptQueries),
        Some(("truncate", n)) => count(n).map(Tamper::TruncateQueries),
        _ => Err(format!("unknown tamper mode {s:?} (none, flip-tag, corrupt:N, truncate:N)")),
    }
}
