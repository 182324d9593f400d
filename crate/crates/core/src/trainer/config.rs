//! Flat `key = value` training configuration.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crl::AgentConfig;
use crate::envs::{preset, EnvSpec};
use crate::error::{Error, Result};
use crate::scalar::Precision;

/// Actor depth from which validation suggests critic-only deep scaling.
pub const EXTREME_ACTOR_DEPTH: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: String,
    pub actor_depth: usize,
    pub critic_depth: usize,
    pub width: usize,
    pub repr_dim: usize,
    pub batch_size: usize,
    pub num_envs: usize,
    /// 0 keeps the preset's episode length.
    pub episode_length: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub logsumexp_penalty: f64,
    pub entropy_coef: f64,
    /// Aggregate env steps per gradient step.
    pub utd_ratio: usize,
    pub total_env_steps: usize,
    /// Env steps per epoch; 0 means `total_env_steps / 50`.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub precision: Precision,
    pub min_replay: usize,
    pub max_replay: usize,
    /// Global gradient-norm clip per optimizer group; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

const KEYS: [&str; 22] = [
    "env",
    "actor_depth",
    "critic_depth",
    "width",
    "repr_dim",
    "batch_size",
    "num_envs",
    "episode_length",
    "gamma",
    "actor_lr",
    "critic_lr",
    "logsumexp_penalty",
    "entropy_coef",
    "utd_ratio",
    "total_env_steps",
    "eval_every",
    "eval_episodes",
    "seed",
    "precision",
    "min_replay",
    "max_replay",
    "grad_clip",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl TrainConfig {
    /// Desk-scale defaults: 64 parallel envs, 200-step episodes.
    pub fn desk() -> Self {
        Self {
            env: "point_reach".into(),
            actor_depth: 4,
            critic_depth: 4,
            width: 256,
            repr_dim: 64,
            batch_size: 512,
            num_envs: 64,
            episode_length: 0,
            gamma: 0.99,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            logsumexp_penalty: 0.1,
            entropy_coef: 1e-3,
            utd_ratio: 40,
            total_env_steps: 1_000_000,
            eval_every: 0,
            eval_episodes: 32,
            seed: 0,
            precision: Precision::F32,
            min_replay: 10_000,
            max_replay: 1_000_000,
            grad_clip: 10.0,
        }
    }

    /// Small per-environment preset: width 64 over 200k env steps. The maze
    /// preset halves the batch so a depth ladder fits a desk budget.
    pub fn desk_for(env: &str) -> Result<Self> {
        crate::envs::preset(env)?;
        Ok(Self {
            env: env.into(),
            width: 64,
            batch_size: if env == "point_reach" { 512 } else { 256 },
            total_env_steps: 200_000,
            ..Self::desk()
        })
    }

    /// Full-scale hyperparameter table (512 envs, 1000-step episodes,
    /// 100M steps). Replay sizes are read as thousands of transitions.
    pub fn full_scale() -> Self {
        Self {
            num_envs: 512,
            episode_length: 1000,
            total_env_steps: 100_000_000,
            min_replay: 1_000_000,
            max_replay: 10_000_000,
            ..Self::desk()
        }
    }

    pub fn known_keys() -> &'static [&'static str] {
        &KEYS
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "env" => self.env = v.to_string(),
            "actor_depth" => self.actor_depth = parse_num(key, v)?,
            "critic_depth" => self.critic_depth = parse_num(key, v)?,
            "depth" => {
                self.actor_depth = parse_num(key, v)?;
                self.critic_depth = self.actor_depth;
            }
            "width" => self.width = parse_num(key, v)?,
            "repr_dim" => self.repr_dim = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "num_envs" => self.num_envs = parse_num(key, v)?,
            "episode_length" => self.episode_length = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "actor_lr" => self.actor_lr = parse_num(key, v)?,
            "critic_lr" => self.critic_lr = parse_num(key, v)?,
            "logsumexp_penalty" => self.logsumexp_penalty = parse_num(key, v)?,
            "entropy_coef" => self.entropy_coef = parse_num(key, v)?,
            "utd_ratio" => self.utd_ratio = parse_num(key, v)?,
            "total_env_steps" => self.total_env_steps = parse_num(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "eval_episodes" => self.eval_episodes = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "precision" => self.precision = v.parse().map_err(Error::Config)?,
            "min_replay" => self.min_replay = parse_num(key, v)?,
            "max_replay" => self.max_replay = parse_num(key, v)?,
            "grad_clip" => self.grad_clip = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "env" => self.env.clone(),
            "actor_depth" => self.actor_depth.to_string(),
            "critic_depth" => self.critic_depth.to_string(),
            "width" => self.width.to_string(),
            "repr_dim" => self.repr_dim.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "num_envs" => self.num_envs.to_string(),
            "episode_length" => self.episode_length.to_string(),
            "gamma" => self.gamma.to_string(),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "logsumexp_penalty" => self.logsumexp_penalty.to_string(),
            "entropy_coef" => self.entropy_coef.to_string(),
            "utd_ratio" => self.utd_ratio.to_string(),
            "total_env_steps" => self.total_env_steps.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "seed" => self.seed.to_string(),
            "precision" => self.precision.to_string(),
            "min_replay" => self.min_replay.to_string(),
            "max_replay" => self.max_replay.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::desk();
        c.apply_text(text, Path::new("<config>"))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Self::desk();
        c.apply_text(&text, path)?;
        Ok(c)
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("known key"));
        }
        s
    }

    pub fn eval_every(&self) -> usize {
        if self.eval_every == 0 {
            (self.total_env_steps / 50).max(1)
        } else {
            self.eval_every
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("actor_depth", self.actor_depth),
            ("critic_depth", self.critic_depth),
            ("width", self.width),
            ("repr_dim", self.repr_dim),
            ("batch_size", self.batch_size),
            ("num_envs", self.num_envs),
            ("utd_ratio", self.utd_ratio),
            ("total_env_steps", self.total_env_steps),
            ("eval_episodes", self.eval_episodes),
            ("max_replay", self.max_replay),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        for (k, v) in [("actor_depth", self.actor_depth), ("critic_depth", self.critic_depth)] {
            if v % 4 != 0 {
                return Err(Error::Config(format!("`{k}` = {v} must be a multiple of 4")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("`gamma` = {} must lie in [0, 1)", self.gamma)));
        }
        for (k, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        for (k, v) in [
            ("logsumexp_penalty", self.logsumexp_penalty),
            ("entropy_coef", self.entropy_coef),
            ("grad_clip", self.grad_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{k}` must be non-negative")));
            }
        }
        if self.min_replay > self.max_replay {
            return Err(Error::Config("`min_replay` exceeds `max_replay`".into()));
        }
        if self.actor_depth >= EXTREME_ACTOR_DEPTH {
            log::warn!(
                "actor_depth {} is extreme; consider scaling only the critic and keeping the actor at 512 or below",
                self.actor_depth
            );
        }
        preset(&self.env)?;
        Ok(())
    }

    /// Environment preset with this config's episode length applied.
    pub fn env_spec(&self) -> Result<EnvSpec> {
        let mut spec = preset(&self.env)?;
        if self.episode_length > 0 {
            spec.episode_length = self.episode_length;
        }
        Ok(spec)
    }

    pub fn agent_config(&self, spec: &EnvSpec) -> AgentConfig {
        AgentConfig {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            goal_dim: spec.goal_dim,
            action_bound: spec.action_bound,
            actor_depth: self.actor_depth,
            critic_depth: self.critic_depth,
            width: self.width,
            repr_dim: self.repr_dim,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            logsumexp_penalty: self.logsumexp_penalty,
            entropy_coef: self.entropy_coef,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::desk();
        c.env = "point_umaze".into();
        c.gamma = 0.95;
        c.precision = Precision::F64;
        c.seed = 17;
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_and_overrides() {
        let c = TrainConfig::parse("# desk run\nwidth = 64 # narrow\n\ndepth=16\n").unwrap();
        assert_eq!((c.width, c.actor_depth, c.critic_depth), (64, 16, 16));
        let err = TrainConfig::parse("width 64").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(TrainConfig::parse("colour = red").is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::desk().validate().is_ok());
        assert!(TrainConfig::full_scale().validate().is_ok());
        let mut c = TrainConfig::desk();
        c.critic_depth = 6;
        assert!(c.validate().unwrap_err().to_string().contains("multiple of 4"));
        let mut c = TrainConfig::desk();
        c.gamma = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk();
        c.env = "mars".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_epoch_is_a_fiftieth() {
        let mut c = TrainConfig::desk();
        c.total_env_steps = 200_000;
        assert_eq!(c.eval_every(), 4000);
        c.eval_every = 1000;
        assert_eq!(c.eval_every(), 1000);
    }
}
