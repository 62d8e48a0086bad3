//! Line-based experiment configuration:
//!
//! ```text
//! # comment
//! section.key = value
//! ```
//!
//! Every key has a default; unknown keys and malformed values are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attack::AttackConfig;
use crate::error::{Error, Result};
use crate::privacy::{DefenseConfig, Scheme};
use crate::radionet::NetConfig;
use crate::synthdata::MapSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub spec: MapSpec,
    pub maps: usize,
    pub tx_per_map: usize,
    pub clients: usize,
    pub validation_maps: usize,
    /// Fixed dataset seed; when absent each run uses its master seed.
    pub seed: Option<u64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            spec: MapSpec::default(),
            maps: 56,
            tx_per_map: 5,
            clients: 14,
            validation_maps: 8,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedConfig {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub local_lr: f64,
    /// First stage-2 round; `rounds / 2` when absent.
    pub phase_split: Option<usize>,
    pub server_lr: f64,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            clients_per_round: 6,
            batch_size: 16,
            local_epochs: 1,
            local_lr: 0.1,
            phase_split: None,
            server_lr: 1.0,
        }
    }
}

impl FederatedConfig {
    pub fn split(&self) -> usize {
        self.phase_split.unwrap_or(self.rounds / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub csv: PathBuf,
    pub traces: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: PathBuf::from("results.csv"),
            traces: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: NetConfig,
    pub federated: FederatedConfig,
    /// Defense parameters; the scheme field is set per run.
    pub defense: DefenseConfig,
    pub attack: AttackConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_auto<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn auto<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let d = &mut self.dataset;
        let f = &mut self.federated;
        let p = &mut self.defense;
        let a = &mut self.attack;
        match key {
            "dataset.maps" => d.maps = parse(key, v)?,
            "dataset.tx_per_map" => d.tx_per_map = parse(key, v)?,
            "dataset.clients" => d.clients = parse(key, v)?,
            "dataset.validation_maps" => d.validation_maps = parse(key, v)?,
            "dataset.seed" => d.seed = parse_auto(key, v)?,
            "dataset.height" => d.spec.height = parse(key, v)?,
            "dataset.width" => d.spec.width = parse(key, v)?,
            "dataset.meters_per_cell" => d.spec.meters_per_cell = parse(key, v)?,
            "dataset.n_buildings" => d.spec.n_buildings = parse(key, v)?,
            "dataset.building_min" => d.spec.building_size_range.0 = parse(key, v)?,
            "dataset.building_max" => d.spec.building_size_range.1 = parse(key, v)?,
            "dataset.pl0_db" => d.spec.pl0_db = parse(key, v)?,
            "dataset.path_exponent" => d.spec.path_exponent = parse(key, v)?,
            "dataset.wall_loss_db" => d.spec.wall_loss_db = parse(key, v)?,
            "dataset.max_pl_db" => d.spec.max_pl_db = parse(key, v)?,
            "dataset.reference_distance" => d.spec.reference_distance = parse(key, v)?,
            "model.hidden_channels" => self.model.hidden_channels = parse(key, v)?,
            "federated.rounds" => f.rounds = parse(key, v)?,
            "federated.clients_per_round" => f.clients_per_round = parse(key, v)?,
            "federated.batch_size" => f.batch_size = parse(key, v)?,
            "federated.local_epochs" => f.local_epochs = parse(key, v)?,
            "federated.local_lr" => f.local_lr = parse(key, v)?,
            "federated.phase_split" => f.phase_split = parse_auto(key, v)?,
            "federated.server_lr" => f.server_lr = parse(key, v)?,
            "defense.clip" => p.clip = parse(key, v)?,
            "defense.noise_multiplier" => p.noise_multiplier = parse(key, v)?,
            "defense.lambda_p" => p.lambda_p = parse(key, v)?,
            "defense.lambda_h" => p.lambda_h = parse(key, v)?,
            "defense.allocator_lr" => p.allocator_lr = parse(key, v)?,
            "defense.allocator_grad_clip" => p.allocator_grad_clip = parse(key, v)?,
            "defense.proxy_lr" => p.proxy_lr = parse(key, v)?,
            "defense.proxy_steps_per_round" => p.proxy_steps_per_round = parse(key, v)?,
            "defense.allocator_steps_per_round" => p.allocator_steps_per_round = parse(key, v)?,
            "defense.allocator_eval_batch" => p.allocator_eval_batch = parse(key, v)?,
            "attack.steps" => a.steps = parse(key, v)?,
            "attack.hidden" => a.hidden = parse(key, v)?,
            "attack.lr" => a.lr = parse(key, v)?,
            "attack.epochs" => a.epochs = parse(key, v)?,
            "attack.split" => a.split = parse(key, v)?,
            "attack.holdout" => a.holdout = parse(key, v)?,
            "attack.probes_per_client" => a.probes_per_client = parse(key, v)?,
            "attack.min_traces" => a.min_traces = parse(key, v)?,
            "run.schemes" => self.run.schemes = parse_list(key, v)?,
            "run.seeds" => self.run.seeds = parse_list(key, v)?,
            "run.jobs" => self.run.jobs = parse(key, v)?,
            "output.csv" => self.output.csv = PathBuf::from(v),
            "output.traces" => self.output.traces = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.dataset.spec.validate()?;
        self.model.validate()?;
        self.defense.validate()?;
        self.attack.validate()?;
        let d = &self.dataset;
        if d.maps == 0 || d.tx_per_map == 0 || d.clients == 0 {
            return bad("dataset: maps, tx_per_map and clients must be positive".into());
        }
        if d.maps > u16::MAX as usize + 1 {
            return bad("dataset: map ids must fit in 16 bits".into());
        }
        if d.maps < d.clients + d.validation_maps {
            return bad(format!(
                "dataset: {} maps cannot cover {} clients and {} validation maps",
                d.maps, d.clients, d.validation_maps
            ));
        }
        if d.validation_maps == 0 {
            return bad("dataset: at least one validation map is needed".into());
        }
        let f = &self.federated;
        if f.clients_per_round == 0 || f.clients_per_round > d.clients {
            return bad(format!("federated: clients_per_round must lie in 1..={}", d.clients));
        }
        if f.batch_size == 0 {
            return bad("federated: batch_size must be positive".into());
        }
        if !(f.local_lr >= 0.0 && f.local_lr.is_finite()) || !(f.server_lr.is_finite()) {
            return bad("federated: learning rates must be finite and local_lr non-negative".into());
        }
        if f.split() > f.rounds {
            return bad("federated: phase_split exceeds rounds".into());
        }
        if self.run.schemes.is_empty() || self.run.seeds.is_empty() {
            return bad("run: schemes and seeds must be non-empty".into());
        }
        if self.run.jobs == 0 {
            return bad("run: jobs must be positive".into());
        }
        Ok(())
    }

    /// Text form accepted by [`Self::parse`], listing every key.
    pub fn to_text(&self) -> String {
        let d = &self.dataset;
        let f = &self.federated;
        let p = &self.defense;
        let a = &self.attack;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("dataset.maps", d.maps.to_string());
        put("dataset.tx_per_map", d.tx_per_map.to_string());
        put("dataset.clients", d.clients.to_string());
        put("dataset.validation_maps", d.validation_maps.to_string());
        put("dataset.seed", auto(&d.seed));
        put("dataset.height", d.spec.height.to_string());
        put("dataset.width", d.spec.width.to_string());
        put("dataset.meters_per_cell", d.spec.meters_per_cell.to_string());
        put("dataset.n_buildings", d.spec.n_buildings.to_string());
        put("dataset.building_min", d.spec.building_size_range.0.to_string());
        put("dataset.building_max", d.spec.building_size_range.1.to_string());
        put("dataset.pl0_db", d.spec.pl0_db.to_string());
        put("dataset.path_exponent", d.spec.path_exponent.to_string());
        put("dataset.wall_loss_db", d.spec.wall_loss_db.to_string());
        put("dataset.max_pl_db", d.spec.max_pl_db.to_string());
        put("dataset.reference_distance", d.spec.reference_distance.to_string());
        put("model.hidden_channels", self.model.hidden_channels.to_string());
        put("federated.rounds", f.rounds.to_string());
        put("federated.clients_per_round", f.clients_per_round.to_string());
        put("federated.batch_size", f.batch_size.to_string());
        put("federated.local_epochs", f.local_epochs.to_string());
        put("federated.local_lr", f.local_lr.to_string());
        put("federated.phase_split", auto(&f.phase_split));
        put("federated.server_lr", f.server_lr.to_string());
        put("defense.clip", p.clip.to_string());
        put("defense.noise_multiplier", p.noise_multiplier.to_string());
        put("defense.lambda_p", p.lambda_p.to_string());
        put("defense.lambda_h", p.lambda_h.to_string());
        put("defense.allocator_lr", p.allocator_lr.to_string());
        put("defense.allocator_grad_clip", p.allocator_grad_clip.to_string());
        put("defense.proxy_lr", p.proxy_lr.to_string());
        put("defense.proxy_steps_per_round", p.proxy_steps_per_round.to_string());
        put(
            "defense.allocator_steps_per_round",
            p.allocator_steps_per_round.to_string(),
        );
        put("defense.allocator_eval_batch", p.allocator_eval_batch.to_string());
        put("attack.steps", a.steps.to_string());
        put("attack.hidden", a.hidden.to_string());
        put("attack.lr", a.lr.to_string());
        put("attack.epochs", a.epochs.to_string());
        put("attack.split", a.split.to_string());
        put("attack.holdout", a.holdout.to_string());
        put("attack.probes_per_client", a.probes_per_client.to_string());
        put("attack.min_traces", a.min_traces.to_string());
        put("run.schemes", join(&self.run.schemes));
        put("run.seeds", join(&self.run.seeds));
        put("run.jobs", self.run.jobs.to_string());
        put("output.csv", self.output.csv.display().to_string());
        put(
            "output.traces",
            self.output
                .traces
                .as_ref()
                .map_or_else(String::new, |p| p.display().to_string()),
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn overrides_and_comments() {
        let c = ExperimentConfig::parse(
            "# desk run\n\nfederated.rounds = 4\nrun.schemes = none, adaptive\nrun.seeds = 7\ndataset.seed = 11\n",
        )
        .unwrap();
        assert_eq!(c.federated.rounds, 4);
        assert_eq!(c.federated.split(), 2);
        assert_eq!(c.run.schemes, vec![Scheme::None, Scheme::Adaptive]);
        assert_eq!(c.run.seeds, vec![7]);
        assert_eq!(c.dataset.seed, Some(11));
        let mut c2 = c.clone();
        c2.federated.phase_split = Some(1);
        assert_eq!(ExperimentConfig::parse(&c2.to_text()).unwrap(), c2);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(matches!(
            ExperimentConfig::parse("federated.round = 3"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::parse("federated.rounds = three").is_err());
        assert!(ExperimentConfig::parse("just text").is_err());
        assert!(ExperimentConfig::parse("run.schemes = none,laplace").is_err());
        assert!(ExperimentConfig::parse("run.seeds = ").is_err());
        assert!(ExperimentConfig::parse("federated.clients_per_round = 15").is_err());
        assert!(ExperimentConfig::parse("defense.clip = 0").is_err());
        assert!(ExperimentConfig::parse("attack.split = 1.5").is_err());
    }
}
