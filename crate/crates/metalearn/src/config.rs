//! Training configuration types.

use crate::error::{MetaError, Result};

/// Which weights the inner loop is allowed to adapt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerScope {
    /// Adapt every trainable weight (feature extractor, gate, classifier).
    All,
    /// Adapt only the prediction module over frozen embeddings; the
    /// representation encoder is not even part of the trainable set, so no
    /// gradient can touch it.
    AbpOnly,
}

/// Inner-loop (within-task adaptation) settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoopConfig {
    /// Gradient steps per task; every step reuses the same step-size vector.
    pub steps: usize,
    /// Initial value for every entry of the step-size vector.
    pub alpha_init: f64,
    /// Whether the step sizes are part of the outer update.
    pub alpha_trainable: bool,
    pub scope: InnerScope,
    /// Whether dropout masks are active in the support (adaptation) pass
    /// during meta-training; queries always use dropout while training.
    pub dropout_in_inner: bool,
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        InnerLoopConfig {
            steps: 1,
            alpha_init: 0.01,
            alpha_trainable: true,
            scope: InnerScope::All,
            dropout_in_inner: true,
        }
    }
}

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(MetaError::Config("inner loop needs at least one step".into()));
        }
        if !self.alpha_init.is_finite() {
            return Err(MetaError::Config(format!(
                "alpha_init must be finite, got {}",
                self.alpha_init
            )));
        }
        Ok(())
    }
}

/// Outer-loop (meta-optimization) settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaConfig {
    /// Meta learning rate before the decay boundary.
    pub beta: f64,
    /// Meta learning rate at and after the decay boundary.
    pub beta_decayed: f64,
    /// Iteration at which the learning rate switches.
    pub decay_at: u64,
    /// Tasks per meta-update.
    pub meta_batch: usize,
    pub iterations: u64,
    /// Differentiate through the inner update (true) or treat the inner
    /// gradient as a constant (first-order approximation, false).
    pub second_order: bool,
    /// Dropout rate for classifier-head inputs during meta-training.
    pub dropout: f64,
    /// L1 penalty coefficient on weight matrices/filters.
    pub l1: f64,
    /// L2 penalty coefficient on weight matrices/filters.
    pub l2: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            beta: 0.001,
            beta_decayed: 0.0001,
            decay_at: 30_000,
            meta_batch: 4,
            iterations: 60_000,
            second_order: true,
            dropout: 0.2,
            l1: 0.001,
            l2: 0.00001,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        // Zero is allowed: it freezes the outer loop, which is useful for
        // dry runs that only exercise the adaptation machinery.
        if !(self.beta >= 0.0) || !(self.beta_decayed >= 0.0) {
            return Err(MetaError::Config(format!(
                "learning rates must be non-negative and finite, got {} / {}",
                self.beta, self.beta_decayed
            )));
        }
        if self.meta_batch == 0 {
            return Err(MetaError::Config("meta batch must hold at least one task".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MetaError::Config(format!(
                "dropout rate must lie in [0,1), got {}",
                self.dropout
            )));
        }
        if self.l1 < 0.0 || self.l2 < 0.0 {
            return Err(MetaError::Config("regularization coefficients must be non-negative".into()));
        }
        Ok(())
    }

    /// Learning rate in force at an iteration.
    pub fn beta_at(&self, iteration: u64) -> f64 {
        if iteration < self.decay_at {
            self.beta
        } else {
            self.beta_decayed
        }
    }
}

/// Which objective drives representation pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainObjective {
    /// Classify the dataset's own classes through an auxiliary head.
    Supervised,
    /// Predict ab planes from L and L from ab in Lab space.
    SplitBrain,
    /// Reconstruct the (downsampled) input through a decoder.
    Autoencoder,
}

impl PretrainObjective {
    pub fn name(self) -> &'static str {
        match self {
            PretrainObjective::Supervised => "supervised",
            PretrainObjective::SplitBrain => "splitbrain",
            PretrainObjective::Autoencoder => "autoencoder",
        }
    }
}

/// Representation pretraining settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub objective: PretrainObjective,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decayed: f64,
    pub decay_at: u64,
    pub l2: f64,
    pub dropout: f64,
    pub iterations: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            objective: PretrainObjective::Supervised,
            batch_size: 256,
            learning_rate: 0.001,
            lr_decayed: 0.0001,
            decay_at: 30_000,
            l2: 0.00001,
            dropout: 0.2,
            iterations: 10_000,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(MetaError::Config("pretraining batch must be nonempty".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decayed > 0.0) {
            return Err(MetaError::Config("pretraining learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MetaError::Config(format!(
                "dropout rate must lie in [0,1), got {}",
                self.dropout
            )));
        }
        if self.l2 < 0.0 {
            return Err(MetaError::Config("l2 coefficient must be non-negative".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: u64) -> f64 {
        if iteration < self.decay_at {
            self.learning_rate
        } else {
            self.lr_decayed
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_training_protocol() {
        let meta = MetaConfig::default();
        assert_eq!(meta.beta, 0.001);
        assert_eq!(meta.beta_decayed, 0.0001);
        assert_eq!(meta.decay_at, 30_000);
        assert_eq!(meta.meta_batch, 4);
        assert_eq!(meta.dropout, 0.2);
        assert_eq!(meta.l1, 0.001);
        assert_eq!(meta.l2, 0.00001);
        assert!(meta.second_order);

        let inner = InnerLoopConfig::default();
        assert_eq!(inner.steps, 1);
        assert_eq!(inner.alpha_init, 0.01);
        assert!(inner.alpha_trainable);

        let pre = PretrainConfig::default();
        assert_eq!(pre.batch_size, 256);
        assert_eq!(pre.learning_rate, 0.001);
    }

    #[test]
    fn beta_decays_exactly_at_the_boundary() {
        let meta = MetaConfig::default();
        assert_eq!(meta.beta_at(0), 0.001);
        assert_eq!(meta.beta_at(29_999), 0.001);
        assert_eq!(meta.beta_at(30_000), 0.0001);
        assert_eq!(meta.beta_at(1_000_000), 0.0001);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut meta = MetaConfig::default();
        meta.beta = -0.001;
        assert!(meta.validate().is_err());
        meta.beta = 0.0;
        assert!(meta.validate().is_ok(), "a zero meta rate freezes the outer loop legally");
        let mut meta = MetaConfig::default();
        meta.dropout = 1.0;
        assert!(meta.validate().is_err());
        let mut inner = InnerLoopConfig::default();
        inner.steps = 0;
        assert!(inner.validate().is_err());
        let mut pre = PretrainConfig::default();
        pre.batch_size = 0;
        assert!(pre.validate().is_err());
    }
}
