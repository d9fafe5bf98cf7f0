use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::coupling::{GuardConfig, SubCoupler};

use super::HarnessError;

pub const EXPERIMENTS: [&str; 8] = [
    "lemma1-moments",
    "matrix-identities",
    "lsigma-roundtrip",
    "smap-roundtrip",
    "expansion-moments",
    "tail-stats",
    "wasserstein-sanity",
    "coupling-rate",
];

/// Where the Edgeworth sub-coupler takes its cumulants from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CumulantSource {
    /// Closed-form fourth-order cumulants, available for `d = 2` only.
    Analytic,
    /// Monte Carlo estimates from simulated fine paths.
    Estimated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub d: usize,
    /// Step counts `N`.
    pub n_list: Vec<usize>,
    /// Monte Carlo batch size `M` (walks per `N` for the rate experiment).
    pub samples: usize,
    pub n_sub: usize,
    pub p: f64,
    pub subcoupler: SubCoupler,
    pub guards: GuardConfig,
    pub seed: u64,
    pub out: PathBuf,
    /// Thread count; 0 lets the pool decide.
    pub workers: usize,
    /// Random dyadic sets checked by `matrix-identities`.
    pub sets: usize,
    pub cumulants: CumulantSource,
    pub cumulant_samples: usize,
    pub cumulant_n_sub: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            d: 2,
            n_list: vec![16],
            samples: 100_000,
            n_sub: 1024,
            p: 2.0,
            subcoupler: SubCoupler::Edgeworth,
            guards: GuardConfig::default(),
            seed: 1,
            out: PathBuf::from("out"),
            workers: 0,
            sets: 1000,
            cumulants: CumulantSource::Analytic,
            cumulant_samples: 200_000,
            cumulant_n_sub: 256,
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> HarnessError {
    HarnessError::Config(format!("{key} = {value}: {why}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| bad(key, value, "not a valid number"))
}

/// `16, 32, 64` or an exponent range `4..9` (inclusive, giving `2^4 … 2^9`).
fn parse_n_list(key: &str, value: &str) -> Result<Vec<usize>, HarnessError> {
    if let Some((a, b)) = value.split_once("..") {
        let lo: u32 = parse_num(key, a.trim())?;
        let hi: u32 = parse_num(key, b.trim())?;
        if lo > hi || hi > 30 {
            return Err(bad(key, value, "expected lo..hi with lo <= hi <= 30"));
        }
        return Ok((lo..=hi).map(|m| 1usize << m).collect());
    }
    value
        .split(',')
        .map(|s| parse_num::<usize>(key, s.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "experiment" => self.experiment = value.to_string(),
            "d" => self.d = parse_num(key, value)?,
            "n" => self.n_list = parse_n_list(key, value)?,
            "m_range" => {
                if !value.contains("..") {
                    return Err(bad(key, value, "expected lo..hi"));
                }
                self.n_list = parse_n_list(key, value)?;
            }
            "samples" => self.samples = parse_num(key, value)?,
            "n_sub" => self.n_sub = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "subcoupler" => {
                self.subcoupler = value.parse().map_err(|e: String| bad(key, value, &e))?
            }
            "eta" => self.guards.eta = parse_num(key, value)?,
            "kappa" => self.guards.kappa = parse_num(key, value)?,
            "g_cap" => self.guards.g_cap = parse_num(key, value)?,
            "residual_cap" => self.guards.residual_cap = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = parse_num(key, value)?,
            "sets" => self.sets = parse_num(key, value)?,
            "cumulants" => {
                self.cumulants = match value {
                    "analytic" => CumulantSource::Analytic,
                    "estimated" => CumulantSource::Estimated,
                    _ => return Err(bad(key, value, "expected analytic or estimated")),
                }
            }
            "cumulant_samples" => self.cumulant_samples = parse_num(key, value)?,
            "cumulant_n_sub" => self.cumulant_n_sub = parse_num(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), HarnessError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override '{kv}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(HarnessError::UnknownExperiment(self.experiment.clone()));
        }
        let err = |m: String| Err(HarnessError::Config(m));
        if self.d < 1 {
            return err("d must be positive".into());
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return err("n must list positive step counts".into());
        }
        if self.samples == 0 {
            return err("samples must be positive".into());
        }
        if self.n_sub < 2 {
            return err("n_sub must be at least 2".into());
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return err(format!("p = {} must be a finite number >= 1", self.p));
        }
        self.guards.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let coupling = matches!(self.experiment.as_str(), "coupling-rate" | "matrix-identities");
        if coupling && self.n_list.iter().any(|n| !n.is_power_of_two()) {
            return err("step counts must be powers of two".into());
        }
        if matches!(self.experiment.as_str(), "coupling-rate" | "lemma1-moments" | "matrix-identities")
            && self.d < 2
        {
            return err("d must be at least 2".into());
        }
        if self.experiment == "coupling-rate"
            && self.subcoupler == SubCoupler::Edgeworth
            && self.cumulants == CumulantSource::Analytic
            && (self.d != 2 || self.guards.kappa != 4)
        {
            return err("analytic cumulants exist for d = 2, kappa = 4 only".into());
        }
        Ok(())
    }

    /// Every setting as text, for the summary.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let n: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("experiment", self.experiment.clone());
        put("d", self.d.to_string());
        put("n", n.join(","));
        put("samples", self.samples.to_string());
        put("n_sub", self.n_sub.to_string());
        put("p", self.p.to_string());
        put("subcoupler", self.subcoupler.name().to_string());
        put("eta", self.guards.eta.to_string());
        put("kappa", self.guards.kappa.to_string());
        put("g_cap", self.guards.g_cap.to_string());
        put("residual_cap", self.guards.residual_cap.to_string());
        put("seed", self.seed.to_string());
        put("sets", self.sets.to_string());
        put(
            "cumulants",
            match self.cumulants {
                CumulantSource::Analytic => "analytic",
                CumulantSource::Estimated => "estimated",
            }
            .to_string(),
        );
        put("cumulant_samples", self.cumulant_samples.to_string());
        put("cumulant_n_sub", self.cumulant_n_sub.to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_ranges() {
        let cfg = ExperimentConfig::parse(
            "# rate run\nexperiment = coupling-rate\nd = 2\nm_range = 4..6  # N = 16..64\nsamples=50\nsubcoupler = independent\n",
        )
        .unwrap();
        assert_eq!(cfg.n_list, vec![16, 32, 64]);
        assert_eq!(cfg.samples, 50);
        assert_eq!(cfg.subcoupler, SubCoupler::Independent);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("nonsense").is_err());
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("d = two").is_err());
        let mut cfg = ExperimentConfig { experiment: "coupling-rate".into(), ..Default::default() };
        cfg.apply_override("n=16,24").unwrap();
        assert!(cfg.validate().is_err());
        cfg.apply_override("n=16,32").unwrap();
        cfg.apply_override("eta=0.5").unwrap();
        assert!(cfg.validate().is_err());
        let unknown = ExperimentConfig { experiment: "nope".into(), ..Default::default() };
        assert!(matches!(unknown.validate(), Err(HarnessError::UnknownExperiment(_))));
    }
}
