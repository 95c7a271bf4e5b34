//! Network parameters and their validation.
//!
//! A network is described by the arrival rate `lambda` and, for each of the
//! two branches, a channel count and a per-channel service rate. The load of
//! a branch is `psi = lambda / (n * mu)`; both loads must lie in `(0, 1)`.
//!
//! Parameters can also be read from a plain-text config with one `key=value`
//! pair per line. Recognised keys are `lambda`, `n_a`, `n_b`, `mu_a`, `mu_b`
//! and `seed`. Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// One of the two parallel branches behind the fork point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    A,
    B,
}

impl Branch {
    pub fn other(self) -> Branch {
        match self {
            Branch::A => Branch::B,
            Branch::B => Branch::A,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::A => "a",
            Branch::B => "b",
        })
    }
}

/// Unchecked parameter five-tuple, as read from flags or a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub lambda: f64,
    pub n_a: u32,
    pub n_b: u32,
    pub mu_a: f64,
    pub mu_b: f64,
}

impl ParamSpec {
    pub fn validate(self) -> Result<NetworkParams, ParamError> {
        validate_params(self)
    }
}

/// Validated parameters with the derived branch loads.
///
/// Fields are private so that `psi_a`/`psi_b` can never drift from the
/// rates they were computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkParams {
    lambda: f64,
    n_a: u32,
    n_b: u32,
    mu_a: f64,
    mu_b: f64,
    psi_a: f64,
    psi_b: f64,
}

fn check_rate(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ParamError::NonPositiveRate { name, value })
    }
}

fn load(lambda: f64, n: u32, mu: f64) -> f64 {
    lambda / (f64::from(n) * mu)
}

/// Checks rates, channel counts and stability, returning the params with
/// `psi_a`, `psi_b` filled in.
pub fn validate_params(p: ParamSpec) -> Result<NetworkParams, ParamError> {
    check_rate("lambda", p.lambda)?;
    check_rate("mu_a", p.mu_a)?;
    check_rate("mu_b", p.mu_b)?;
    if p.n_a == 0 {
        return Err(ParamError::ZeroChannels { branch: Branch::A });
    }
    if p.n_b == 0 {
        return Err(ParamError::ZeroChannels { branch: Branch::B });
    }
    let psi_a = load(p.lambda, p.n_a, p.mu_a);
    let psi_b = load(p.lambda, p.n_b, p.mu_b);
    for (branch, psi) in [(Branch::A, psi_a), (Branch::B, psi_b)] {
        if !(psi > 0.0 && psi < 1.0) {
            return Err(ParamError::UnstableBranch { branch, psi });
        }
    }
    Ok(NetworkParams {
        lambda: p.lambda,
        n_a: p.n_a,
        n_b: p.n_b,
        mu_a: p.mu_a,
        mu_b: p.mu_b,
        psi_a,
        psi_b,
    })
}

impl NetworkParams {
    pub fn new(lambda: f64, n_a: u32, mu_a: f64, n_b: u32, mu_b: f64) -> Result<Self, ParamError> {
        validate_params(ParamSpec {
            lambda,
            n_a,
            n_b,
            mu_a,
            mu_b,
        })
    }

    /// Builds parameters from loads instead of service rates:
    /// `mu = lambda / (n * psi)`.
    pub fn from_loads(lambda: f64, n_a: u32, psi_a: f64, n_b: u32, psi_b: f64) -> Result<Self, ParamError> {
        check_rate("lambda", lambda)?;
        for (branch, n, psi) in [(Branch::A, n_a, psi_a), (Branch::B, n_b, psi_b)] {
            if n == 0 {
                return Err(ParamError::ZeroChannels { branch });
            }
            if !(psi > 0.0 && psi < 1.0) {
                return Err(ParamError::UnstableBranch { branch, psi });
            }
        }
        let mu_a = lambda / (f64::from(n_a) * psi_a);
        let mu_b = lambda / (f64::from(n_b) * psi_b);
        Self::new(lambda, n_a, mu_a, n_b, mu_b)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn n_a(&self) -> u32 {
        self.n_a
    }
    pub fn n_b(&self) -> u32 {
        self.n_b
    }
    pub fn mu_a(&self) -> f64 {
        self.mu_a
    }
    pub fn mu_b(&self) -> f64 {
        self.mu_b
    }
    pub fn psi_a(&self) -> f64 {
        self.psi_a
    }
    pub fn psi_b(&self) -> f64 {
        self.psi_b
    }

    pub fn channels(&self, branch: Branch) -> u32 {
        match branch {
            Branch::A => self.n_a,
            Branch::B => self.n_b,
        }
    }

    pub fn mu(&self, branch: Branch) -> f64 {
        match branch {
            Branch::A => self.mu_a,
            Branch::B => self.mu_b,
        }
    }

    pub fn psi(&self, branch: Branch) -> f64 {
        match branch {
            Branch::A => self.psi_a,
            Branch::B => self.psi_b,
        }
    }

    /// Same network with the two branches relabelled.
    pub fn swapped(&self) -> NetworkParams {
        NetworkParams {
            lambda: self.lambda,
            n_a: self.n_b,
            n_b: self.n_a,
            mu_a: self.mu_b,
            mu_b: self.mu_a,
            psi_a: self.psi_b,
            psi_b: self.psi_a,
        }
    }

    pub fn spec(&self) -> ParamSpec {
        ParamSpec {
            lambda: self.lambda,
            n_a: self.n_a,
            n_b: self.n_b,
            mu_a: self.mu_a,
            mu_b: self.mu_b,
        }
    }
}

/// Contents of a `key=value` parameter file. Every key is optional so that
/// command-line flags can fill the gaps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamConfig {
    pub lambda: Option<f64>,
    pub n_a: Option<u32>,
    pub n_b: Option<u32>,
    pub mu_a: Option<f64>,
    pub mu_b: Option<f64>,
    pub seed: Option<u64>,
}

fn parse_value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ParamError> {
    raw.parse().map_err(|_| ParamError::Config {
        line,
        message: format!("cannot parse value {raw:?} for key {key}"),
    })
}

impl ParamConfig {
    pub fn parse(text: &str) -> Result<Self, ParamError> {
        let mut cfg = ParamConfig::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ParamError::Config {
                line,
                message: format!("expected key=value, got {trimmed:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "lambda" => cfg.lambda = Some(parse_value(line, key, value)?),
                "n_a" => cfg.n_a = Some(parse_value(line, key, value)?),
                "n_b" => cfg.n_b = Some(parse_value(line, key, value)?),
                "mu_a" => cfg.mu_a = Some(parse_value(line, key, value)?),
                "mu_b" => cfg.mu_b = Some(parse_value(line, key, value)?),
                "seed" => cfg.seed = Some(parse_value(line, key, value)?),
                other => {
                    return Err(ParamError::Config {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        Ok(cfg)
    }

    /// Returns the complete five-tuple, or the name of the first missing key.
    pub fn spec(&self) -> Result<ParamSpec, &'static str> {
        Ok(ParamSpec {
            lambda: self.lambda.ok_or("lambda")?,
            n_a: self.n_a.ok_or("n_a")?,
            n_b: self.n_b.ok_or("n_b")?,
            mu_a: self.mu_a.ok_or("mu_a")?,
            mu_b: self.mu_b.ok_or("mu_b")?,
        })
    }

    /// Keys set in `other` win.
    pub fn overlay(&self, other: &ParamConfig) -> ParamConfig {
        ParamConfig {
            lambda: other.lambda.or(self.lambda),
            n_a: other.n_a.or(self.n_a),
            n_b: other.n_b.or(self.n_b),
            mu_a: other.mu_a.or(self.mu_a),
            mu_b: other.mu_b.or(self.mu_b),
            seed: other.seed.or(self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_server_reference_point() {
        let p = NetworkParams::new(0.3, 1, 0.8, 1, 0.8).unwrap();
        assert!((p.psi_a() - 0.375).abs() < 1e-15);
        assert!((p.psi_b() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn boundary_load_is_unstable() {
        let err = NetworkParams::new(1.0, 1, 1.0, 1, 2.0).unwrap_err();
        assert_eq!(
            err,
            ParamError::UnstableBranch {
                branch: Branch::A,
                psi: 1.0
            }
        );
    }

    #[test]
    fn eight_channel_block() {
        let p = NetworkParams::new(2.0, 8, 0.5, 8, 0.5).unwrap();
        assert_eq!(p.psi_a(), 0.5);
        assert_eq!(p.psi_b(), 0.5);
    }

    #[test]
    fn psi_b_uses_branch_b_channels() {
        let p = NetworkParams::new(1.5, 3, 1.0, 5, 1.0).unwrap();
        assert!((p.psi_b() - 0.3).abs() < 1e-15);
        assert!((p.psi_a() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rates_and_channels() {
        assert!(matches!(
            NetworkParams::new(0.0, 1, 1.0, 1, 1.0),
            Err(ParamError::NonPositiveRate { name: "lambda", .. })
        ));
        assert!(matches!(
            NetworkParams::new(0.5, 1, -1.0, 1, 1.0),
            Err(ParamError::NonPositiveRate { name: "mu_a", .. })
        ));
        assert!(matches!(
            NetworkParams::new(0.5, 1, 1.0, 1, f64::NAN),
            Err(ParamError::NonPositiveRate { name: "mu_b", .. })
        ));
        assert_eq!(
            NetworkParams::new(0.5, 0, 1.0, 1, 1.0),
            Err(ParamError::ZeroChannels { branch: Branch::A })
        );
        assert_eq!(
            NetworkParams::new(0.5, 1, 1.0, 0, 1.0),
            Err(ParamError::ZeroChannels { branch: Branch::B })
        );
    }

    #[test]
    fn from_loads_round_trips() {
        let p = NetworkParams::from_loads(1.5, 3, 0.83, 5, 0.3).unwrap();
        assert!((p.psi_a() - 0.83).abs() < 1e-12);
        assert!((p.psi_b() - 0.3).abs() < 1e-12);
        assert!(NetworkParams::from_loads(1.5, 3, 1.0, 5, 0.3).is_err());
    }

    #[test]
    fn swapped_exchanges_branches() {
        let p = NetworkParams::new(0.3, 1, 0.8, 2, 0.5).unwrap();
        let s = p.swapped();
        assert_eq!(s.n_a(), 2);
        assert_eq!(s.mu_b(), 0.8);
        assert_eq!(s.psi_a(), p.psi_b());
        assert_eq!(s.swapped(), p);
    }

    #[test]
    fn config_parsing() {
        let text = "# reference point\nlambda = 0.3\nn_a=1\nn_b=1\n\nmu_a=0.8\nmu_b=0.8\nseed=42\n";
        let cfg = ParamConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, Some(42));
        let p = cfg.spec().unwrap().validate().unwrap();
        assert!((p.psi_a() - 0.375).abs() < 1e-15);

        assert!(matches!(
            ParamConfig::parse("lambda=0.3\nrho=2"),
            Err(ParamError::Config { line: 2, .. })
        ));
        assert!(matches!(
            ParamConfig::parse("lambda"),
            Err(ParamError::Config { line: 1, .. })
        ));
        assert!(matches!(
            ParamConfig::parse("n_a=1.5"),
            Err(ParamError::Config { line: 1, .. })
        ));
        assert_eq!(ParamConfig::parse("lambda=1").unwrap().spec(), Err("n_a"));
    }

    #[test]
    fn overlay_prefers_flags() {
        let file = ParamConfig::parse("lambda=0.3\nseed=1").unwrap();
        let flags = ParamConfig {
            seed: Some(7),
            ..Default::default()
        };
        let merged = file.overlay(&flags);
        assert_eq!(merged.lambda, Some(0.3));
        assert_eq!(merged.seed, Some(7));
    }
}
