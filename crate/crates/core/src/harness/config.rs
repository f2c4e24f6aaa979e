//! Experiment configuration, read from TOML.
//!
//! ```toml
//! k_users = 3
//! m_code_len = 64
//! n_bits = 200
//! snr_db_list = [10.0]
//! sjr_db_list = [-20.0, -10.0, inf]   # inf switches jamming off
//! rank_list = [1, 20, 200]
//! trials = 50
//! master_seed = 1
//! channel_profile = "flat"           # built-in name or profile file
//! receivers = ["type1", "type2"]
//! output_path = "results.csv"
//!
//! [rpca]
//! tol = 1e-7
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelProfile;
use crate::error::{Error, Result};
use crate::ica::IcaParams;
use crate::receiver::{ReceiverConfig, ReceiverKind};
use crate::rpca::RpcaParams;
use crate::seed::Seed;

/// FastICA settings shared by every receiver; the component count and seed
/// are filled in per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcaSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
}

impl Default for IcaSettings {
    fn default() -> Self {
        let p = IcaParams::new(1, 0);
        Self {
            tol: p.tol,
            max_iter: p.max_iter,
            max_restarts: p.max_restarts,
        }
    }
}

impl IcaSettings {
    pub fn params(&self, n_components: usize, seed: Seed) -> IcaParams {
        IcaParams {
            n_components,
            tol: self.tol,
            max_iter: self.max_iter,
            max_restarts: self.max_restarts,
            seed,
        }
    }
}

fn default_tone_prob() -> f64 {
    0.1
}

fn default_profile() -> String {
    "flat".into()
}

fn default_receivers() -> Vec<ReceiverKind> {
    vec![ReceiverKind::Type1, ReceiverKind::Type2]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k_users: usize,
    /// Walsh code length, a power of two.
    pub m_code_len: usize,
    pub n_bits: usize,
    /// `inf` disables noise.
    pub snr_db_list: Vec<f64>,
    /// `inf` disables jamming.
    pub sjr_db_list: Vec<f64>,
    pub rank_list: Vec<usize>,
    #[serde(default = "default_tone_prob")]
    pub tone_prob: f64,
    #[serde(default = "default_profile")]
    pub channel_profile: String,
    #[serde(default = "default_receivers")]
    pub receivers: Vec<ReceiverKind>,
    #[serde(default)]
    pub rpca: RpcaParams,
    #[serde(default)]
    pub ica: IcaSettings,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: Seed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    /// When false the runtime column is written as zero, which makes the CSV
    /// reproducible byte for byte.
    #[serde(default = "yes")]
    pub measure_runtime: bool,
    /// Worker threads; unset falls back to the environment override and then
    /// to one per core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// A one-point sweep with both receivers on a flat channel.
    pub fn single_point(k: usize, m: usize, n: usize, snr_db: f64, sjr_db: f64, rank: usize, trials: usize) -> Self {
        Self {
            k_users: k,
            m_code_len: m,
            n_bits: n,
            snr_db_list: vec![snr_db],
            sjr_db_list: vec![sjr_db],
            rank_list: vec![rank],
            tone_prob: default_tone_prob(),
            channel_profile: default_profile(),
            receivers: default_receivers(),
            rpca: RpcaParams::default(),
            ica: IcaSettings::default(),
            trials,
            master_seed: 0,
            output_path: None,
            measure_runtime: true,
            threads: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn profile(&self) -> Result<ChannelProfile> {
        let p = ChannelProfile::resolve(&self.channel_profile)?;
        p.validate(Some(self.m_code_len))?;
        Ok(p)
    }

    pub fn receiver_config(&self, kind: ReceiverKind, ica_seed: Seed) -> ReceiverConfig {
        let ica = self.ica.params(self.k_users, ica_seed);
        match kind {
            ReceiverKind::Type1 => ReceiverConfig::type1(ica),
            ReceiverKind::Type2 => ReceiverConfig::type2(self.rpca, ica),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.k_users == 0 || self.n_bits == 0 {
            return bad("k_users and n_bits must be positive".into());
        }
        if self.m_code_len < 2 || !self.m_code_len.is_power_of_two() {
            return bad(format!("m_code_len = {} is not a power of two >= 2", self.m_code_len));
        }
        if self.k_users > self.m_code_len {
            return Err(Error::Capacity {
                k: self.k_users,
                m: self.m_code_len,
            });
        }
        if self.snr_db_list.is_empty() || self.sjr_db_list.is_empty() || self.rank_list.is_empty() {
            return bad("snr_db_list, sjr_db_list and rank_list must be nonempty".into());
        }
        if let Some(v) = self
            .snr_db_list
            .iter()
            .chain(&self.sjr_db_list)
            .find(|v| v.is_nan() || **v == f64::NEG_INFINITY)
        {
            return bad(format!("SNR/SJR value {v} is not allowed"));
        }
        if let Some(r) = self.rank_list.iter().find(|&&r| r == 0 || r > self.n_bits) {
            return bad(format!("rank {r} outside 1..={}", self.n_bits));
        }
        if !(self.tone_prob > 0.0 && self.tone_prob <= 1.0) {
            return bad(format!("tone_prob = {} outside (0, 1]", self.tone_prob));
        }
        if self.receivers.is_empty() {
            return bad("no receivers selected".into());
        }
        if self.receivers.iter().collect::<HashSet<_>>().len() != self.receivers.len() {
            return bad("receiver listed twice".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        self.rpca.validate()?;
        self.ica.params(self.k_users, 0).validate()?;
        self.profile()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
k_users = 3
m_code_len = 64
n_bits = 200
snr_db_list = [10.0]
sjr_db_list = [-20.0, inf]
rank_list = [1, 20]
trials = 5
master_seed = 9
channel_profile = "urban-los"

[rpca]
max_iter = 300
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.tone_prob, 0.1);
        assert_eq!(cfg.receivers, vec![ReceiverKind::Type1, ReceiverKind::Type2]);
        assert_eq!(cfg.sjr_db_list[1], f64::INFINITY);
        assert_eq!(cfg.rpca.max_iter, 300);
        assert_eq!(cfg.rpca.tol, 1e-7);
        assert!(cfg.measure_runtime);
        assert_eq!(cfg.output_path, None);
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.output_path = Some("out/x.csv".into());
        cfg.threads = Some(2);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = ExperimentConfig::single_point(3, 64, 200, 10.0, -10.0, 1, 5);
        base.validate().unwrap();
        let cases: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.trials = 0),
            Box::new(|c| c.k_users = 65),
            Box::new(|c| c.m_code_len = 48),
            Box::new(|c| c.rank_list = vec![201]),
            Box::new(|c| c.rank_list = vec![0]),
            Box::new(|c| c.rank_list.clear()),
            Box::new(|c| c.snr_db_list = vec![f64::NAN]),
            Box::new(|c| c.sjr_db_list = vec![f64::NEG_INFINITY]),
            Box::new(|c| c.tone_prob = 0.0),
            Box::new(|c| c.receivers = vec![ReceiverKind::Type1, ReceiverKind::Type1]),
            Box::new(|c| c.receivers.clear()),
            Box::new(|c| c.channel_profile = "no-such-profile".into()),
            Box::new(|c| c.threads = Some(0)),
            Box::new(|c| c.rpca.tol = -1.0),
        ];
        for (i, mutate) in cases.iter().enumerate() {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(c.validate().is_err(), "case {i} accepted");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SAMPLE}\n[ica]\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        assert!(ExperimentConfig::from_toml("k_users = 3").is_err());
    }

    #[test]
    fn delay_must_fit_the_code() {
        let mut c = ExperimentConfig::single_point(2, 8, 20, 10.0, -10.0, 1, 1);
        c.channel_profile = "urban-nlos".into();
        assert!(c.validate().is_err());
        c.m_code_len = 16;
        c.validate().unwrap();
    }
}
