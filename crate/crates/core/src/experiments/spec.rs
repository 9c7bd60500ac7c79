//! Run configuration as flat `key=value` text.
//!
//! Unknown keys, malformed values and non-positive sizes or weights are
//! rejected. Keys may appear in any order; `experiment` selects the defaults
//! the other keys override.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use super::data::{
    gen_exp1_with, gen_exp2_with, gen_exp3_with, GroundTruth, DEFAULT_NOISE_STD, EXP3_OMEGA,
};
use crate::error::{Error, Result};
use crate::regularizers::Regularizer;
use crate::solvers::{DecompositionProblem, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentId {
    /// Sine plus spikes on a line, `H1 + L1`, no blur.
    Exp1L1H1,
    /// Bump plus square, `H1 + TV`, Gaussian blur.
    Exp2TvH1,
    /// Affine centre plus texture, `TGV2 + TGVosci`, no blur.
    Exp3TgvOsci,
}

impl ExperimentId {
    pub fn default_size(self) -> usize {
        match self {
            Self::Exp1L1H1 => 300,
            Self::Exp2TvH1 => 96,
            Self::Exp3TgvOsci => 25,
        }
    }

    /// Sizes of the original experiments (signal length, image side, block side).
    pub fn full_size(self) -> usize {
        match self {
            Self::Exp1L1H1 => 300,
            Self::Exp2TvH1 => 300,
            Self::Exp3TgvOsci => 75,
        }
    }

    pub fn default_max_outer(self) -> usize {
        match self {
            Self::Exp1L1H1 => 100,
            Self::Exp2TvH1 => 50,
            Self::Exp3TgvOsci => 10,
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exp1L1H1 => "exp1",
            Self::Exp2TvH1 => "exp2",
            Self::Exp3TgvOsci => "exp3",
        })
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp1" | "1" | "exp1_l1h1" => Ok(Self::Exp1L1H1),
            "exp2" | "2" | "exp2_tvh1" => Ok(Self::Exp2TvH1),
            "exp3" | "3" | "exp3_tgvosci" => Ok(Self::Exp3TgvOsci),
            _ => Err(Error::Parse(format!("unknown experiment '{s}' (expected exp1, exp2 or exp3)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgoChoice {
    /// Nested iterations on the clean data with inner Bregman loops.
    NoiseFree,
    /// Nested iterations with Morozov-constrained steps.
    Morozov,
    /// Nested iterations with discrepancy-stopped inner Bregman loops.
    BregmanInner,
    SingleStepTikhonov,
    SingleStepMorozov,
    /// Classical Bregman iterations on `g □ h` with discrepancy stopping.
    ClassicBregman,
}

impl AlgoChoice {
    /// Whether the algorithm takes a Tikhonov multiplier.
    pub fn uses_lambda(self) -> bool {
        matches!(self, Self::NoiseFree | Self::BregmanInner | Self::SingleStepTikhonov | Self::ClassicBregman)
    }
}

impl fmt::Display for AlgoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoiseFree => "noisefree",
            Self::Morozov => "morozov",
            Self::BregmanInner => "bregman-inner",
            Self::SingleStepTikhonov => "single-step-tikhonov",
            Self::SingleStepMorozov => "single-step-morozov",
            Self::ClassicBregman => "classic-bregman",
        })
    }
}

impl FromStr for AlgoChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "noisefree" | "noise-free" => Ok(Self::NoiseFree),
            "morozov" => Ok(Self::Morozov),
            "bregman-inner" => Ok(Self::BregmanInner),
            "single-step-tikhonov" | "tikhonov-single-step" => Ok(Self::SingleStepTikhonov),
            "single-step-morozov" | "morozov-single-step" => Ok(Self::SingleStepMorozov),
            "classic-bregman" => Ok(Self::ClassicBregman),
            _ => Err(Error::Parse(format!("unknown algorithm '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    pub algo: AlgoChoice,
    /// Signal length, image side or block side, depending on the experiment.
    pub size: usize,
    /// `H1` weight (experiments 1 and 2).
    pub alpha: f64,
    /// `L1` / `TV` weight (experiments 1 and 2).
    pub beta: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub omega: [f64; 2],
    pub seed: u64,
    pub noise_std: f64,
    /// Discrepancy factor of Bregman-type stopping.
    pub tau: f64,
    pub max_outer: usize,
    /// Cap on inner Bregman steps.
    pub max_inner: usize,
    /// Relative stopping tolerance of the inner variational solver.
    pub inner_tol: f64,
    /// Residual tolerance `|A(u+v) - f| <= eq_tol |f|` of the noise-free variant.
    pub eq_tol: f64,
    /// Moreau smoothing of the one-homogeneous terms.
    pub moreau_mu: f64,
    /// Tikhonov multiplier of Bregman-type runs; `None` uses a quarter of the
    /// single-step Morozov multiplier.
    pub lambda: Option<f64>,
    /// Iterate the Bregman distance on `h` instead of `g`.
    pub swap_roles: bool,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn defaults(experiment: ExperimentId) -> Self {
        let tgv = experiment == ExperimentId::Exp3TgvOsci;
        Self {
            experiment,
            algo: AlgoChoice::Morozov,
            size: experiment.default_size(),
            alpha: 1000.0,
            beta: 1.0,
            alpha1: 5.0,
            beta1: 5.0,
            alpha2: 1.0,
            beta2: 1.0,
            omega: EXP3_OMEGA,
            seed: 7,
            noise_std: DEFAULT_NOISE_STD,
            tau: 1.001,
            max_outer: experiment.default_max_outer(),
            max_inner: 1000,
            inner_tol: SolverConfig::default().rel_tol,
            eq_tol: 1e-8,
            moreau_mu: if tgv { 1e-3 } else { 0.0 },
            lambda: None,
            swap_roles: false,
            output_dir: PathBuf::from(format!("runs/{experiment}")),
        }
    }

    /// Builds a spec from `(key, value)` pairs; later pairs win.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let experiment = pairs
            .iter()
            .rev()
            .find(|(k, _)| normalize_key(k.as_ref()) == "experiment")
            .map(|(_, v)| v.as_ref().trim().parse())
            .transpose()?
            .unwrap_or(ExperimentId::Exp1L1H1);
        let mut spec = Self::defaults(experiment);
        // The size and the outer cap default per experiment; apply the
        // full-scale switch before explicit sizes.
        for (k, v) in pairs {
            if normalize_key(k.as_ref()) == "full_scale" && parse_bool(v.as_ref())? {
                spec.size = experiment.full_size();
            }
        }
        for (k, v) in pairs {
            spec.set(k.as_ref(), v.as_ref())?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Parses `key=value` lines; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match normalize_key(key).as_str() {
            // Fixed when the defaults are chosen; only validated here.
            "experiment" => {
                v.parse::<ExperimentId>()?;
            }
            "full_scale" => {
                parse_bool(v)?;
            }
            "algo" => self.algo = v.parse()?,
            "size" => self.size = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "alpha1" => self.alpha1 = parse_num(key, v)?,
            "beta1" => self.beta1 = parse_num(key, v)?,
            "alpha2" => self.alpha2 = parse_num(key, v)?,
            "beta2" => self.beta2 = parse_num(key, v)?,
            "omega" => {
                let parts = v
                    .split(',')
                    .map(|p| parse_num::<f64>(key, p))
                    .collect::<Result<Vec<_>>>()?;
                self.omega = match parts[..] {
                    [a, b] => [a, b],
                    _ => return Err(Error::Parse(format!("omega needs two comma-separated values, got '{v}'"))),
                };
            }
            "seed" => self.seed = parse_num(key, v)?,
            "noise_std" => self.noise_std = parse_num(key, v)?,
            "tau" => self.tau = parse_num(key, v)?,
            "max_outer" => self.max_outer = parse_num(key, v)?,
            "max_inner" => self.max_inner = parse_num(key, v)?,
            "inner_tol" => self.inner_tol = parse_num(key, v)?,
            "eq_tol" => self.eq_tol = parse_num(key, v)?,
            "moreau_mu" => self.moreau_mu = parse_num(key, v)?,
            "lambda" => {
                self.lambda = match v {
                    "" | "auto" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "swap_roles" => self.swap_roles = parse_bool(v)?,
            "out" | "output_dir" => self.output_dir = PathBuf::from(v),
            other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        let min = match self.experiment {
            ExperimentId::Exp1L1H1 | ExperimentId::Exp3TgvOsci => 16,
            ExperimentId::Exp2TvH1 => 32,
        };
        if self.size < min {
            return bad(&format!("size must be >= {min} for {}", self.experiment));
        }
        let weights = [self.alpha, self.beta, self.alpha1, self.beta1, self.alpha2, self.beta2];
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("regularizer weights must be positive");
        }
        if self.omega.iter().any(|w| !w.is_finite()) {
            return bad("omega must be finite");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be >= 0");
        }
        if !(self.tau.is_finite() && self.tau > 1.0) {
            return bad("tau must exceed 1");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration caps must be positive");
        }
        if !(self.inner_tol > 0.0 && self.eq_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.moreau_mu.is_finite() && self.moreau_mu >= 0.0) {
            return bad("moreau_mu must be >= 0");
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return bad("lambda must be positive");
            }
        }
        Ok(())
    }

    /// Canonical config text covering every key; parsing it gives back `self`.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("experiment", self.experiment.to_string());
        kv("algo", self.algo.to_string());
        kv("size", self.size.to_string());
        kv("alpha", format!("{:?}", self.alpha));
        kv("beta", format!("{:?}", self.beta));
        kv("alpha1", format!("{:?}", self.alpha1));
        kv("beta1", format!("{:?}", self.beta1));
        kv("alpha2", format!("{:?}", self.alpha2));
        kv("beta2", format!("{:?}", self.beta2));
        kv("omega", format!("{:?},{:?}", self.omega[0], self.omega[1]));
        kv("seed", self.seed.to_string());
        kv("noise_std", format!("{:?}", self.noise_std));
        kv("tau", format!("{:?}", self.tau));
        kv("max_outer", self.max_outer.to_string());
        kv("max_inner", self.max_inner.to_string());
        kv("inner_tol", format!("{:?}", self.inner_tol));
        kv("eq_tol", format!("{:?}", self.eq_tol));
        kv("moreau_mu", format!("{:?}", self.moreau_mu));
        kv("lambda", self.lambda.map_or_else(|| "auto".to_string(), |l| format!("{l:?}")));
        kv("swap_roles", self.swap_roles.to_string());
        kv("out", self.output_dir.display().to_string());
        s
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        match self.experiment {
            ExperimentId::Exp1L1H1 => gen_exp1_with(self.size, self.seed, self.noise_std),
            ExperimentId::Exp2TvH1 => gen_exp2_with(self.size, self.seed, self.noise_std),
            ExperimentId::Exp3TgvOsci => gen_exp3_with(self.size, self.seed, self.noise_std),
        }
    }

    /// `(g, h)` before any role swap.
    pub fn regularizers(&self) -> Result<(Regularizer, Regularizer)> {
        let (g, h) = match self.experiment {
            ExperimentId::Exp1L1H1 => (Regularizer::h1sq(self.alpha)?, Regularizer::l1(self.beta)?),
            ExperimentId::Exp2TvH1 => (Regularizer::h1sq(self.alpha)?, Regularizer::tv(self.beta)?),
            ExperimentId::Exp3TgvOsci => (
                Regularizer::tgv2(self.alpha1, self.beta1)?,
                Regularizer::tgv_osci(self.alpha2, self.beta2, &self.omega)?,
            ),
        };
        Ok((g.with_smoothing(self.moreau_mu)?, h.with_smoothing(self.moreau_mu)?))
    }

    /// The decomposition problem on the noisy data, roles swapped if requested.
    pub fn problem(&self, truth: &GroundTruth) -> Result<DecompositionProblem> {
        let (g, h) = self.regularizers()?;
        let (g, h) = if self.swap_roles { (h, g) } else { (g, h) };
        DecompositionProblem::new(truth.a.clone(), truth.f_delta.clone(), truth.delta, g, h)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { rel_tol: self.inner_tol, seed: self.seed, ..SolverConfig::default() }
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| Error::Parse(format!("{key}: '{v}': {e}")))
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("expected a boolean, got '{v}'"))),
    }
}

/// Splits `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{l}'")))
        })
        .collect()
}

/// Parameter grid `a:b:log:n`, `a:b:lin:n` or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let values = match parts[..] {
        [a, b, scale, n] => {
            let (a, b): (f64, f64) = (parse_num("grid", a)?, parse_num("grid", b)?);
            let n: usize = parse_num("grid", n)?;
            if n == 0 {
                return Err(Error::Parse("grid needs at least one point".into()));
            }
            let t = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            match scale {
                "log" => {
                    if !(a > 0.0 && b > 0.0) {
                        return Err(Error::Parse("log grid needs positive bounds".into()));
                    }
                    let (la, lb) = (a.log10(), b.log10());
                    (0..n).map(|i| 10f64.powf(la + (lb - la) * t(i))).collect()
                }
                "lin" => (0..n).map(|i| a + (b - a) * t(i)).collect(),
                _ => return Err(Error::Parse(format!("grid scale must be log or lin, got '{scale}'"))),
            }
        }
        [_] => text.split(',').map(|p| parse_num("grid", p)).collect::<Result<Vec<f64>>>()?,
        _ => return Err(Error::Parse(format!("bad grid '{text}'"))),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("non-finite grid value in '{text}'")));
    }
    Ok(values)
}
