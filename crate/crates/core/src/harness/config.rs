use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{CsvSchema, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fed::{EmbedKind, FedConfig, FedMode};
use crate::model::HeadTargets;

/// Ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// No pre-classification, no federation.
    Ver1,
    /// No federation.
    Ver2,
    /// FedAvg over all pooled heads.
    Ver3,
    /// Random head selection.
    Ver4,
    /// Single selection, gradient embedding.
    Ver5,
    /// Single selection, data embedding.
    Ver6,
    /// Multiple selection, gradient embedding.
    Ver7,
    /// Multiple selection, data embedding.
    Ver8,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Ver1,
        Variant::Ver2,
        Variant::Ver3,
        Variant::Ver4,
        Variant::Ver5,
        Variant::Ver6,
        Variant::Ver7,
        Variant::Ver8,
    ];

    pub fn mode(self) -> FedMode {
        match self {
            Variant::Ver1 | Variant::Ver2 => FedMode::Off,
            Variant::Ver3 => FedMode::FedAvg,
            Variant::Ver4 => FedMode::Random,
            Variant::Ver5 | Variant::Ver6 => FedMode::Single,
            Variant::Ver7 | Variant::Ver8 => FedMode::Multiple,
        }
    }

    pub fn embed_kind(self) -> EmbedKind {
        match self {
            Variant::Ver6 | Variant::Ver8 => EmbedKind::Data,
            _ => EmbedKind::Gradient,
        }
    }

    pub fn head_targets(self) -> HeadTargets {
        match self {
            Variant::Ver1 => HeadTargets::Constant(-1),
            _ => HeadTargets::PreClassification,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ver1 => "ver1",
            Variant::Ver2 => "ver2",
            Variant::Ver3 => "ver3",
            Variant::Ver4 => "ver4",
            Variant::Ver5 => "ver5",
            Variant::Ver6 => "ver6",
            Variant::Ver7 => "ver7",
            Variant::Ver8 => "ver8",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Ver1 => "no pre-classification, no federation",
            Variant::Ver2 => "no federation",
            Variant::Ver3 => "FedAvg",
            Variant::Ver4 => "random selection",
            Variant::Ver5 => "MHHFL-SG",
            Variant::Ver6 => "MHHFL-SD",
            Variant::Ver7 => "MHHFL-MG",
            Variant::Ver8 => "MHHFL-MD",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`, expected ver1..ver8")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvDomain {
    /// One file per run; relative paths resolve against the config file.
    pub files: Vec<PathBuf>,
    pub features: Vec<String>,
    pub label: String,
}

impl CsvDomain {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            features: self.features.clone(),
            label: self.label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub domains: Vec<CsvDomain>,
}

/// Everything one simulation needs. Exactly one of `synthetic` and `csv`
/// must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::variant")]
    pub variant: Variant,
    #[serde(default = "defaults::window")]
    pub window: usize,
    #[serde(default)]
    pub horizon: usize,
    #[serde(default = "defaults::batch")]
    pub batch: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::pretrain_epochs")]
    pub pretrain_epochs: usize,
    #[serde(default = "defaults::federated_period_batches")]
    pub federated_period_batches: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::dr")]
    pub dr: f64,
    #[serde(default)]
    pub negate_distance: bool,
    /// Write the pool state after every federated round.
    #[serde(default)]
    pub pool_dump: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvSource>,
    /// Directory relative CSV paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

mod defaults {
    use super::Variant;

    pub fn variant() -> Variant {
        Variant::Ver5
    }
    pub fn window() -> usize {
        5
    }
    pub fn batch() -> usize {
        600
    }
    pub fn lr() -> f64 {
        0.01
    }
    pub fn epochs() -> usize {
        25
    }
    pub fn pretrain_epochs() -> usize {
        1
    }
    pub fn federated_period_batches() -> usize {
        10
    }
    pub fn alpha() -> f64 {
        0.1
    }
    pub fn dr() -> f64 {
        0.5
    }
}

impl RunConfig {
    /// Defaults for every training field around the given data source.
    pub fn with_synthetic(spec: SyntheticSpec) -> Self {
        RunConfig {
            seed: 0,
            variant: defaults::variant(),
            window: defaults::window(),
            horizon: 0,
            batch: defaults::batch(),
            lr: defaults::lr(),
            epochs: defaults::epochs(),
            pretrain_epochs: defaults::pretrain_epochs(),
            federated_period_batches: defaults::federated_period_batches(),
            alpha: defaults::alpha(),
            dr: defaults::dr(),
            negate_distance: false,
            pool_dump: false,
            synthetic: Some(spec),
            csv: None,
            base_dir: None,
        }
    }

    /// The desk-scale synthetic benchmark: four domains with 25/19/19/19
    /// features, 2,000 samples each, 10 epochs. Batches of 50 give 24 batches
    /// per client epoch so federated rounds fire regularly.
    pub fn reference(seed: u64, variant: Variant) -> Self {
        RunConfig {
            seed,
            variant,
            batch: 50,
            epochs: 10,
            ..Self::with_synthetic(SyntheticSpec::reference(None))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = unknown_key(&msg).unwrap_or_else(|| "<file>".into());
            Error::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn fed(&self) -> FedConfig {
        FedConfig {
            alpha: self.alpha,
            dr: self.dr,
            mode: self.variant.mode(),
            embed_kind: self.variant.embed_kind(),
            negate_distance: self.negate_distance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("window", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("lr", "must be a finite non-negative number"));
        }
        if self.federated_period_batches == 0 {
            return Err(Error::config("federated_period_batches", "must be at least 1"));
        }
        self.fed().validate()?;
        match (&self.synthetic, &self.csv) {
            (Some(s), None) => s.validate(),
            (None, Some(c)) => {
                if c.domains.is_empty() {
                    return Err(Error::config("csv.domains", "needs at least one domain"));
                }
                for (j, d) in c.domains.iter().enumerate() {
                    if d.files.is_empty() {
                        return Err(Error::config(
                            format!("csv.domains[{j}].files"),
                            "needs at least one file",
                        ));
                    }
                    if d.features.is_empty() {
                        return Err(Error::config(
                            format!("csv.domains[{j}].features"),
                            "needs at least one feature",
                        ));
                    }
                }
                Ok(())
            }
            (Some(_), Some(_)) => Err(Error::config("csv", "set only one of `synthetic` and `csv`")),
            (None, None) => Err(Error::config("synthetic", "one of `synthetic` or `csv` is required")),
        }
    }

    /// Short hash of every serialized field.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn unknown_key(msg: &str) -> Option<String> {
    // toml reports "unknown field `x`, expected one of ..."
    let rest = msg.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
seed = 3
variant = "ver7"
batch = 32

[synthetic]
nf = [3, 2]
runs = [4, 4]
t_run = 40
latent_dim = 2
noise = 0.1
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_toml(MINI).unwrap();
        assert_eq!(c.variant, Variant::Ver7);
        assert_eq!((c.window, c.horizon, c.lr, c.epochs), (5, 0, 0.01, 25));
        assert_eq!((c.pretrain_epochs, c.federated_period_batches), (1, 10));
        assert_eq!((c.alpha, c.dr), (0.1, 0.5));
        assert_eq!(c.fed().mode, FedMode::Multiple);
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_key() {
        let err = RunConfig::from_toml(&format!("{MINI}\nbogus = 1")).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "bogus"), "{err}");
        let err = RunConfig::from_toml(&MINI.replace("seed = 3", "seed = 3\nalpha = 2.0")).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "alpha"), "{err}");
        let err = RunConfig::from_toml(&MINI.replace("ver7", "ver9")).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert!("ver9".parse::<Variant>().is_err());
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = RunConfig::from_toml(MINI).unwrap();
        let mut seen = std::collections::HashSet::new();
        seen.insert(base.hash());
        let mut variants = vec![];
        let mut c = base.clone();
        c.seed += 1;
        variants.push(c);
        let mut c = base.clone();
        c.alpha = 0.2;
        variants.push(c);
        let mut c = base.clone();
        c.horizon = 4;
        variants.push(c);
        let mut c = base.clone();
        c.synthetic.as_mut().unwrap().noise = 0.2;
        variants.push(c);
        let mut c = base.clone();
        c.pool_dump = true;
        variants.push(c);
        for v in variants {
            assert!(seen.insert(v.hash()));
        }
        assert_eq!(base.hash(), base.clone().hash());
    }

    #[test]
    fn variant_table() {
        use EmbedKind::*;
        use FedMode::*;
        let table: Vec<(FedMode, EmbedKind)> = Variant::ALL.iter().map(|v| (v.mode(), v.embed_kind())).collect();
        assert_eq!(
            table,
            vec![
                (Off, Gradient),
                (Off, Gradient),
                (FedAvg, Gradient),
                (Random, Gradient),
                (Single, Gradient),
                (Single, Data),
                (Multiple, Gradient),
                (Multiple, Data)
            ]
        );
        assert_eq!(Variant::Ver1.head_targets(), HeadTargets::Constant(-1));
    }
}
