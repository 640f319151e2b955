//! BiLSTM hypernetwork that maps a set of word vectors to a coordinate row.

mod adam;
mod augment;
mod loss;
mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use augment::{augment_batch, augment_list, truncated_len, Augmentation};
pub use loss::{combined_loss, combined_with_grad, contrastive_loss, l1_loss, mix, LossConfig};
pub use network::{forward, loss_and_gradients, Mode};
pub use params::{Architecture, BiLayer, HypernetParams, LstmDirection};
pub use train::{
    build_dataset, learning_rate, load_curve, predict, save_curve, split_dataset, train,
    train_with_validation, CurveRow, TrainOutput, TrainingExample,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Epochs between decay steps.
    pub lr_decay_every: usize,
    pub dropout: f64,
    /// Longest word list fed to the network.
    pub max_context: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub augmentation: Augmentation,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub val_fraction: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            temperature: 0.5,
            learning_rate: 1e-4,
            lr_decay: 0.95,
            lr_decay_every: 10,
            dropout: 0.4,
            max_context: 256,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            augmentation: Augmentation::default(),
            hidden_dim: 64,
            num_layers: 2,
            val_fraction: 0.1,
            patience: 20,
            min_delta: 1e-4,
        }
    }
}

impl TrainingConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            temperature: self.temperature,
        }
    }

    pub fn architecture(&self, input_dim: usize, output_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            output_dim,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss().validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) || self.lr_decay_every == 0 {
            return bad("learning-rate schedule must be positive".into());
        }
        if self.max_context == 0 || self.batch_size == 0 {
            return bad("max_context and batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} not in [0, 1)", self.val_fraction));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainingConfig::default();
        assert_eq!((c.lambda, c.temperature, c.dropout), (0.1, 0.5, 0.4));
        assert_eq!((c.learning_rate, c.lr_decay, c.lr_decay_every), (1e-4, 0.95, 10));
        assert_eq!(c.max_context, 256);
        c.validate().unwrap();
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c: TrainingConfig = toml::from_str("lambda = 0.5\nepochs = 3\n").unwrap();
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.temperature, 0.5);
    }
}
