use anyhow::{bail, Result};
use mitet::trainer::TrainConfig;

/// Named configurations trained side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSuite {
    pub configs: Vec<(String, TrainConfig)>,
    pub seeds: Vec<u64>,
    pub bins: Vec<usize>,
}

impl ExperimentSuite {
    /// `shallow` (1 layer), `default` (5 layers) and `deep_bp` (10 layers),
    /// otherwise identical.
    pub fn standard() -> Self {
        let with_layers = |n_layers| TrainConfig {
            n_layers,
            ..TrainConfig::default()
        };
        Self {
            configs: vec![
                ("shallow".into(), with_layers(1)),
                ("default".into(), with_layers(5)),
                ("deep_bp".into(), with_layers(10)),
            ],
            seeds: vec![0, 1, 2],
            bins: vec![2, 5, 10, 20, 50],
        }
    }

    pub fn get(&self, name: &str) -> Option<&TrainConfig> {
        self.configs.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (name, config)) in self.configs.iter().enumerate() {
            if self.configs[..i].iter().any(|(other, _)| other == name) {
                bail!("duplicate configuration name {name:?}");
            }
            config.validate()?;
        }
        if self.bins.contains(&0) {
            bail!("bin counts must be positive");
        }
        Ok(())
    }
}
