use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stack_real, unstack_real, SeparatedCfrs};
use crate::error::{Error, Result};
use crate::numerics::{domain, right_least_squares, ComplexMatrix, RealMatrix, SeededRng, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    pub(crate) fn id(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    pub(crate) fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Scaling applied to hidden pre-activations before the activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// Divide every unit by the mean over units of the per-unit standard
    /// deviation across the training batch (one shared scalar).
    Shared,
    /// Divide each unit by its own standard deviation.
    PerUnit,
    /// Plain ELM.
    None,
}

impl Standardization {
    pub(crate) fn id(self) -> u8 {
        match self {
            Standardization::Shared => 0,
            Standardization::PerUnit => 1,
            Standardization::None => 2,
        }
    }

    pub(crate) fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Standardization::Shared),
            1 => Some(Standardization::PerUnit),
            2 => Some(Standardization::None),
            _ => None,
        }
    }
}

/// How the network output relates to the input norm removed by sample
/// normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputScaling {
    /// Targets are divided by the input norm during training and outputs are
    /// multiplied back by it at inference.
    InputNorm,
    /// Targets and outputs are raw CFRs.
    Raw,
}

impl OutputScaling {
    pub(crate) fn id(self) -> u8 {
        match self {
            OutputScaling::InputNorm => 0,
            OutputScaling::Raw => 1,
        }
    }

    pub(crate) fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(OutputScaling::InputNorm),
            1 => Some(OutputScaling::Raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElmConfig {
    pub hidden_size: usize,
    pub activation: Activation,
    pub standardization: Standardization,
    pub output_scaling: OutputScaling,
    /// Ridge term added to the output-weight solve; 0 gives the plain
    /// pseudo-inverse.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for ElmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 256,
            activation: Activation::Tanh,
            standardization: Standardization::Shared,
            output_scaling: OutputScaling::InputNorm,
            ridge: 0.0,
            seed: 0,
        }
    }
}

/// Noisy separated CFRs paired with the true per-link CFRs.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    n_subcarriers: usize,
    n_links: usize,
    inputs: Vec<ComplexMatrix>,
    labels: Vec<ComplexMatrix>,
    snr_db: Vec<f64>,
}

impl TrainingSet {
    pub fn new(n_subcarriers: usize, n_links: usize) -> Self {
        Self {
            n_subcarriers,
            n_links,
            ..Default::default()
        }
    }

    pub fn push(&mut self, input: ComplexMatrix, label: ComplexMatrix, snr_db: f64) -> Result<()> {
        let shape = (self.n_subcarriers, self.n_links);
        if (input.nrows(), input.ncols()) != shape || (label.nrows(), label.ncols()) != shape {
            return Err(Error::DimensionMismatch(format!(
                "training pair must be {}x{}",
                shape.0, shape.1
            )));
        }
        self.inputs.push(input);
        self.labels.push(label);
        self.snr_db.push(snr_db);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn input(&self, t: usize) -> &ComplexMatrix {
        &self.inputs[t]
    }

    pub fn label(&self, t: usize) -> &ComplexMatrix {
        &self.labels[t]
    }

    pub fn snr_db(&self, t: usize) -> f64 {
        self.snr_db[t]
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            n_subcarriers: self.n_subcarriers,
            n_links: self.n_links,
            inputs: self.inputs[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            snr_db: self.snr_db[..n].to_vec(),
        }
    }

    /// Normalized real-stacked inputs of link `j` (one column per sample)
    /// and the removed norms.
    fn link_inputs(&self, j: usize) -> Result<(RealMatrix, Vec<f64>)> {
        let dim = 2 * self.n_subcarriers;
        let mut x = RealMatrix::zeros(dim, self.len());
        let mut norms = Vec::with_capacity(self.len());
        for (t, input) in self.inputs.iter().enumerate() {
            let col: Vec<C64> = input.col(j).iter().copied().collect();
            let stacked = stack_real(&col);
            let norm = stacked.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateSample);
            }
            for (i, v) in stacked.iter().enumerate() {
                x[(i, t)] = v / norm;
            }
            norms.push(norm);
        }
        Ok((x, norms))
    }

    fn link_labels(&self, j: usize) -> RealMatrix {
        let dim = 2 * self.n_subcarriers;
        let mut y = RealMatrix::zeros(dim, self.len());
        for (t, label) in self.labels.iter().enumerate() {
            let col: Vec<C64> = label.col(j).iter().copied().collect();
            for (i, v) in stack_real(&col).into_iter().enumerate() {
                y[(i, t)] = v;
            }
        }
        y
    }
}

/// Per-link trained state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkHead {
    /// Divisor applied to each hidden pre-activation at inference.
    pub std_scale: Vec<f64>,
    /// `2N x N_h` output weights.
    pub output_weights: RealMatrix,
}

/// Hidden-layer outputs and targets of one link, as used by the output
/// weight solve.
#[derive(Debug, Clone)]
pub struct LinkDesign {
    pub hidden: RealMatrix,
    pub targets: RealMatrix,
    pub std_scale: Vec<f64>,
}

/// Single-hidden-layer network with frozen random input weights and one
/// trained output layer per link.
#[derive(Debug, Clone)]
pub struct ElmNetwork {
    config: ElmConfig,
    input_dim: usize,
    input_weights: RealMatrix,
    bias: Vec<f64>,
    heads: Vec<LinkHead>,
}

impl ElmNetwork {
    /// Draws `W ~ U[-1, 1]` (`N_h x input_dim`) and `b ~ U[0, 1]` from the
    /// config seed.
    pub fn new(config: ElmConfig, input_dim: usize) -> Result<Self> {
        if config.hidden_size == 0 || input_dim == 0 {
            return Err(Error::InvalidDimension(
                "hidden size and input dimension must be positive".into(),
            ));
        }
        let mut rng = SeededRng::derive(config.seed, domain::ELM_INIT, 0);
        let mut input_weights = RealMatrix::zeros(config.hidden_size, input_dim);
        for i in 0..config.hidden_size {
            for j in 0..input_dim {
                input_weights[(i, j)] = rng.random_range(-1.0..=1.0);
            }
        }
        let bias = (0..config.hidden_size).map(|_| rng.random_range(0.0..=1.0)).collect();
        Ok(Self {
            config,
            input_dim,
            input_weights,
            bias,
            heads: Vec::new(),
        })
    }

    pub fn from_parts(
        config: ElmConfig,
        input_weights: RealMatrix,
        bias: Vec<f64>,
        heads: Vec<LinkHead>,
    ) -> Result<Self> {
        let hidden = input_weights.nrows();
        let input_dim = input_weights.ncols();
        if hidden != config.hidden_size || bias.len() != hidden {
            return Err(Error::DimensionMismatch(format!(
                "hidden size {} vs weights {hidden} rows and {} biases",
                config.hidden_size,
                bias.len()
            )));
        }
        for head in &heads {
            if head.std_scale.len() != hidden
                || head.output_weights.ncols() != hidden
                || head.output_weights.nrows() != input_dim
            {
                return Err(Error::DimensionMismatch("link head shape".into()));
            }
        }
        Ok(Self {
            config,
            input_dim,
            input_weights,
            bias,
            heads,
        })
    }

    pub fn config(&self) -> &ElmConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    pub fn input_weights(&self) -> &RealMatrix {
        &self.input_weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn heads(&self) -> &[LinkHead] {
        &self.heads
    }

    pub fn is_trained(&self) -> bool {
        !self.heads.is_empty()
    }

    /// `W X + b` for a batch with one sample per column.
    pub fn pre_activations(&self, batch: &RealMatrix) -> Result<RealMatrix> {
        if batch.nrows() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "batch rows {} != input dimension {}",
                batch.nrows(),
                self.input_dim
            )));
        }
        let mut pre = &self.input_weights * batch;
        for t in 0..pre.ncols() {
            for (u, b) in self.bias.iter().enumerate() {
                pre[(u, t)] += b;
            }
        }
        Ok(pre)
    }

    /// Standardization divisors computed from a batch of pre-activations.
    pub fn batch_std_scale(&self, pre: &RealMatrix) -> Result<Vec<f64>> {
        let hidden = pre.nrows();
        if self.config.standardization == Standardization::None {
            return Ok(vec![1.0; hidden]);
        }
        let n = pre.ncols() as f64;
        if pre.ncols() == 0 {
            return Err(Error::DegenerateStatistics { unit: 0 });
        }
        let stds: Vec<f64> = (0..hidden)
            .map(|u| {
                let mean = (0..pre.ncols()).map(|t| pre[(u, t)]).sum::<f64>() / n;
                let var = (0..pre.ncols())
                    .map(|t| (pre[(u, t)] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                var.sqrt()
            })
            .collect();
        match self.config.standardization {
            Standardization::Shared => {
                let shared = stds.iter().sum::<f64>() / hidden as f64;
                if !(shared > 0.0) {
                    return Err(Error::DegenerateStatistics { unit: 0 });
                }
                Ok(vec![shared; hidden])
            }
            Standardization::PerUnit => {
                if let Some(unit) = stds.iter().position(|s| !(*s > 0.0)) {
                    return Err(Error::DegenerateStatistics { unit });
                }
                Ok(stds)
            }
            Standardization::None => unreachable!(),
        }
    }

    fn activate_in_place(&self, pre: &mut RealMatrix, std_scale: &[f64]) -> Result<()> {
        if let Some(unit) = std_scale.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::DegenerateStatistics { unit });
        }
        let act = self.config.activation;
        for t in 0..pre.ncols() {
            for (u, s) in std_scale.iter().enumerate() {
                pre[(u, t)] = act.apply(pre[(u, t)] / s);
            }
        }
        Ok(())
    }

    /// Hidden output `sigma(f_std(W x + b))` of one real sample using stored
    /// statistics.
    pub fn hidden_forward(&self, sample: &[f64], std_scale: &[f64]) -> Result<Vec<f64>> {
        let x = RealMatrix::from_fn(sample.len(), 1, |i, _| sample[i]);
        let mut pre = self.pre_activations(&x)?;
        self.activate_in_place(&mut pre, std_scale)?;
        Ok((0..pre.nrows()).map(|u| pre[(u, 0)]).collect())
    }

    /// Hidden outputs of a batch; statistics are computed from the batch
    /// itself (training mode) and returned alongside.
    pub fn hidden_forward_batch(&self, batch: &RealMatrix) -> Result<(RealMatrix, Vec<f64>)> {
        let mut pre = self.pre_activations(batch)?;
        let scale = self.batch_std_scale(&pre)?;
        self.activate_in_place(&mut pre, &scale)?;
        Ok((pre, scale))
    }

    /// Hidden outputs `O_j` and targets `H_j` for link `j` of a training set.
    pub fn link_design(&self, set: &TrainingSet, j: usize) -> Result<LinkDesign> {
        if 2 * set.n_subcarriers() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "training set has {} subcarriers, network expects input dimension {}",
                set.n_subcarriers(),
                self.input_dim
            )));
        }
        let (x, norms) = set.link_inputs(j)?;
        let mut targets = set.link_labels(j);
        if self.config.output_scaling == OutputScaling::InputNorm {
            for (t, norm) in norms.iter().enumerate() {
                for i in 0..targets.nrows() {
                    targets[(i, t)] /= norm;
                }
            }
        }
        let (hidden, std_scale) = self.hidden_forward_batch(&x)?;
        Ok(LinkDesign {
            hidden,
            targets,
            std_scale,
        })
    }

    /// Fits `beta_j = H_j O_j^+` for every link. `W` and `b` are untouched.
    pub fn train(&self, set: &TrainingSet) -> Result<ElmNetwork> {
        if set.is_empty() {
            return Err(Error::NotReady("training set is empty".into()));
        }
        if set.len() < self.hidden_size() {
            warn!(
                "training with {} samples for {} hidden units; output weights are underdetermined",
                set.len(),
                self.hidden_size()
            );
        }
        let heads = (0..set.n_links())
            .map(|j| {
                let design = self.link_design(set, j)?;
                let output_weights =
                    right_least_squares(&design.hidden, &design.targets, None, self.config.ridge)?;
                Ok(LinkHead {
                    std_scale: design.std_scale,
                    output_weights,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            heads,
            ..self.clone()
        })
    }

    /// Hidden activations of every link of `separated`, one column per
    /// link, after sample normalization. Returns the removed norms too.
    pub fn link_hidden(&self, separated: &SeparatedCfrs) -> Result<(RealMatrix, Vec<f64>)> {
        if !self.is_trained() {
            return Err(Error::NotReady("network has no trained output weights".into()));
        }
        let links = separated.n_links();
        if links != self.heads.len() {
            return Err(Error::DimensionMismatch(format!(
                "{links} links but {} trained heads",
                self.heads.len()
            )));
        }
        if 2 * separated.links.nrows() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "{} subcarriers for input dimension {}",
                separated.links.nrows(),
                self.input_dim
            )));
        }
        let mut x = RealMatrix::zeros(self.input_dim, links);
        let mut norms = Vec::with_capacity(links);
        for j in 0..links {
            let stacked = stack_real(&separated.link(j));
            let norm = stacked.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateSample);
            }
            for (i, v) in stacked.iter().enumerate() {
                x[(i, j)] = v / norm;
            }
            norms.push(norm);
        }
        let mut pre = self.pre_activations(&x)?;
        let act = self.config.activation;
        for (j, head) in self.heads.iter().enumerate() {
            for (u, s) in head.std_scale.iter().enumerate() {
                pre[(u, j)] = act.apply(pre[(u, j)] / s);
            }
        }
        Ok((pre, norms))
    }

    /// Refined CFRs `N x (M+1)`.
    pub fn infer(&self, separated: &SeparatedCfrs) -> Result<ComplexMatrix> {
        let (hidden, norms) = self.link_hidden(separated)?;
        let n = separated.links.nrows();
        let mut out = ComplexMatrix::zeros(n, self.heads.len());
        for (j, head) in self.heads.iter().enumerate() {
            let o = hidden.subcols(j, 1);
            let y = &head.output_weights * o;
            let scale = match self.config.output_scaling {
                OutputScaling::InputNorm => norms[j],
                OutputScaling::Raw => 1.0,
            };
            let stacked: Vec<f64> = (0..y.nrows()).map(|i| y[(i, 0)] * scale).collect();
            for (k, v) in unstack_real(&stacked).into_iter().enumerate() {
                out[(k, j)] = v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;
    use crate::numerics::{complex_gaussian, frobenius_norm};

    fn random_set(seed: u64, n: usize, links: usize, count: usize) -> TrainingSet {
        let mut rng = SeededRng::new(seed);
        let mut set = TrainingSet::new(n, links);
        for _ in 0..count {
            let v = complex_gaussian(&mut rng, n * links, 1.0).unwrap();
            let input = Mat::from_fn(n, links, |i, j| v[j * n + i]);
            let w = complex_gaussian(&mut rng, n * links, 1.0).unwrap();
            let label = Mat::from_fn(n, links, |i, j| w[j * n + i]);
            set.push(input, label, 10.0).unwrap();
        }
        set
    }

    #[test]
    fn identity_configuration_passes_positive_inputs() {
        let config = ElmConfig {
            hidden_size: 4,
            activation: Activation::Relu,
            standardization: Standardization::None,
            ..Default::default()
        };
        let net = ElmNetwork::from_parts(config, RealMatrix::identity(4, 4), vec![0.0; 4], vec![]).unwrap();
        let v = [0.5, 1.5, 2.0, 0.1];
        assert_eq!(net.hidden_forward(&v, &[1.0; 4]).unwrap(), v.to_vec());
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let config = ElmConfig {
            hidden_size: 3,
            ..Default::default()
        };
        let net = ElmNetwork::from_parts(config, RealMatrix::zeros(3, 2), vec![0.0; 3], vec![]).unwrap();
        assert_eq!(net.hidden_forward(&[0.3, -0.7], &[1.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            net.hidden_forward(&[0.3, -0.7], &[1.0, 0.0, 1.0]),
            Err(Error::DegenerateStatistics { unit: 1 })
        ));
    }

    #[test]
    fn shared_standardization_gives_unit_mean_std() {
        let set = random_set(4, 16, 1, 300);
        let net = ElmNetwork::new(ElmConfig { hidden_size: 64, ..Default::default() }, 32).unwrap();
        let (x, _) = set.link_inputs(0).unwrap();
        let pre = net.pre_activations(&x).unwrap();
        let scale = net.batch_std_scale(&pre).unwrap();
        let n = pre.ncols() as f64;
        let mean_std = (0..pre.nrows())
            .map(|u| {
                let vals: Vec<f64> = (0..pre.ncols()).map(|t| pre[(u, t)] / scale[u]).collect();
                let m = vals.iter().sum::<f64>() / n;
                (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
            })
            .sum::<f64>()
            / pre.nrows() as f64;
        assert!((mean_std - 1.0).abs() < 1e-6);
        assert!(scale.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn per_unit_standardization_gives_unit_std_everywhere() {
        let set = random_set(5, 8, 1, 200);
        let config = ElmConfig {
            hidden_size: 16,
            standardization: Standardization::PerUnit,
            ..Default::default()
        };
        let net = ElmNetwork::new(config, 16).unwrap();
        let (x, _) = set.link_inputs(0).unwrap();
        let pre = net.pre_activations(&x).unwrap();
        let scale = net.batch_std_scale(&pre).unwrap();
        for u in 0..16 {
            let vals: Vec<f64> = (0..200).map(|t| pre[(u, t)] / scale[u]).collect();
            let m = vals.iter().sum::<f64>() / 200.0;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 200.0).sqrt();
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn planted_linear_teacher_is_recovered() {
        // labels constructed as an exact linear map of the hidden outputs
        let set = random_set(6, 8, 2, 120);
        let config = ElmConfig {
            hidden_size: 40,
            output_scaling: OutputScaling::Raw,
            ..Default::default()
        };
        let net = ElmNetwork::new(config, 16).unwrap();
        let mut rng = SeededRng::new(60);
        let mut planted = TrainingSet::new(8, 2);
        let teachers: Vec<RealMatrix> = (0..2)
            .map(|_| RealMatrix::from_fn(16, 40, |_, _| rng.random::<f64>() - 0.5))
            .collect();
        let designs: Vec<LinkDesign> = (0..2).map(|j| net.link_design(&set, j).unwrap()).collect();
        for t in 0..set.len() {
            let label = Mat::from_fn(8, 2, |k, j| {
                let y = &teachers[j] * designs[j].hidden.subcols(t, 1);
                C64::new(y[(k, 0)], y[(k + 8, 0)])
            });
            planted.push(set.input(t).clone(), label, 0.0).unwrap();
        }
        let trained = net.train(&planted).unwrap();
        for j in 0..2 {
            let d = trained.link_design(&planted, j).unwrap();
            let resid = &trained.heads()[j].output_weights * &d.hidden - &d.targets;
            assert!(frobenius_norm(&resid) / frobenius_norm(&d.targets) < 1e-8);
        }
    }

    #[test]
    fn single_sample_is_interpolated() {
        let set = random_set(7, 8, 1, 1);
        let config = ElmConfig {
            hidden_size: 10,
            standardization: Standardization::None,
            ..Default::default()
        };
        let trained = ElmNetwork::new(config, 16).unwrap().train(&set).unwrap();
        let d = trained.link_design(&set, 0).unwrap();
        let resid = &trained.heads()[0].output_weights * &d.hidden - &d.targets;
        assert!(frobenius_norm(&resid) < 1e-10 * frobenius_norm(&d.targets));
    }

    #[test]
    fn training_is_deterministic_and_keeps_input_layer() {
        let set = random_set(8, 8, 2, 50);
        let net = ElmNetwork::new(ElmConfig { hidden_size: 20, seed: 3, ..Default::default() }, 16).unwrap();
        let a = net.train(&set).unwrap();
        let b = ElmNetwork::new(ElmConfig { hidden_size: 20, seed: 3, ..Default::default() }, 16)
            .unwrap()
            .train(&set)
            .unwrap();
        assert_eq!(a.heads(), b.heads());
        assert_eq!(a.input_weights(), net.input_weights());
        assert_eq!(a.bias(), net.bias());
    }

    #[test]
    fn empty_set_and_untrained_inference_fail() {
        let net = ElmNetwork::new(ElmConfig { hidden_size: 4, ..Default::default() }, 8).unwrap();
        assert!(matches!(net.train(&TrainingSet::new(4, 2)), Err(Error::NotReady(_))));
        let sep = SeparatedCfrs {
            links: ComplexMatrix::zeros(4, 2),
        };
        assert!(matches!(net.infer(&sep), Err(Error::NotReady(_))));
    }

    #[test]
    fn zero_output_weights_give_zero_output() {
        let config = ElmConfig { hidden_size: 6, ..Default::default() };
        let base = ElmNetwork::new(config, 8).unwrap();
        let heads = vec![
            LinkHead {
                std_scale: vec![1.0; 6],
                output_weights: RealMatrix::zeros(8, 6),
            };
            2
        ];
        let net = ElmNetwork::from_parts(config, base.input_weights().clone(), base.bias().to_vec(), heads).unwrap();
        let v = complex_gaussian(&mut SeededRng::new(1), 8, 1.0).unwrap();
        let sep = SeparatedCfrs {
            links: Mat::from_fn(4, 2, |i, j| v[j * 4 + i]),
        };
        let out = net.infer(&sep).unwrap();
        assert_eq!(frobenius_norm(&out), 0.0);
    }

    #[test]
    fn hidden_layer_ignores_input_scale() {
        let set = random_set(9, 8, 3, 60);
        let trained = ElmNetwork::new(ElmConfig { hidden_size: 24, ..Default::default() }, 16)
            .unwrap()
            .train(&set)
            .unwrap();
        let sep = SeparatedCfrs { links: set.input(0).clone() };
        let scaled = SeparatedCfrs {
            links: Mat::from_fn(8, 3, |i, j| sep.links[(i, j)] * 4.0),
        };
        let (h1, n1) = trained.link_hidden(&sep).unwrap();
        let (h2, n2) = trained.link_hidden(&scaled).unwrap();
        assert_eq!(h1, h2);
        for (a, b) in n1.iter().zip(&n2) {
            assert!((b / a - 4.0).abs() < 1e-12);
        }
        // InputNorm output scales with the input
        let o1 = trained.infer(&sep).unwrap();
        let o2 = trained.infer(&scaled).unwrap();
        let o1x4 = Mat::from_fn(8, 3, |i, j| o1[(i, j)] * 4.0);
        assert!(frobenius_norm(&(&o2 - &o1x4)) < 1e-10 * frobenius_norm(&o2));
    }
}
