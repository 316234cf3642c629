use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::{segment_count, segment_span};
use super::ModelConfig;
use crate::autodiff::{BatchNormState, Mode, Scalar, Tape, Tensor, Var};
use crate::dsp::LogmelSpectrogram;
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    /// conv (no bias) -> batch norm -> ReLU
    ConvBnRelu {
        weight: usize,
        gamma: usize,
        beta: usize,
        norm: usize,
        pad: usize,
    },
    MaxPool,
    /// 1x1 conv with bias -> sigmoid
    Output {
        weight: usize,
        bias: usize,
    },
}

/// Network weights, batch-norm running statistics and the layer plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    norms: Vec<BatchNormState<T>>,
    layers: Vec<Layer>,
}

/// `K x C` segment posteriors (row `k` is segment `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPosteriors {
    pub values: Vec<f32>,
    pub segments: usize,
    pub classes: usize,
    /// `[start, end)` frame range of each segment.
    pub spans: Vec<(usize, usize)>,
}

impl SegmentPosteriors {
    pub fn get(&self, k: usize, c: usize) -> f32 {
        self.values[k * self.classes + c]
    }

    pub fn column(&self, c: usize) -> Vec<f32> {
        (0..self.segments).map(|k| self.get(k, c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingPosteriors {
    pub values: Vec<f32>,
}

/// Handles into a tape built by [`Model::graph`].
pub(crate) struct Graph {
    pub params: Vec<Var>,
    /// Sigmoid outputs `[B, C, K, 1]`.
    pub segments: Var,
    /// Pooled `[B, C]`.
    pub recording: Var,
}

impl Model<f32> {
    /// Build with deterministic initialization: fan-in scaled uniform
    /// filters (`sqrt(6 / fan_in)` for ReLU layers, `1 / sqrt(fan_in)` for
    /// the output layer), `gamma = 1`, `beta = 0`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut norms = Vec::new();
        let mut layers = Vec::new();

        let uniform = |shape: Vec<usize>, bound: f32, rng: &mut ChaCha8Rng| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::new(shape, data).expect("shape matches")
        };
        let add_conv_bn = |name: String,
                           cin: usize,
                           cout: usize,
                           k: usize,
                           pad: usize,
                           params: &mut Vec<Param<f32>>,
                           norms: &mut Vec<BatchNormState<f32>>,
                           rng: &mut ChaCha8Rng| {
            let fan_in = (cin * k * k) as f32;
            let weight = params.len();
            params.push(Param {
                name: format!("{name}.weight"),
                value: uniform(vec![cout, cin, k, k], (6.0 / fan_in).sqrt(), rng),
            });
            params.push(Param {
                name: format!("{name}.bn.gamma"),
                value: Tensor::full(vec![cout], 1.0),
            });
            params.push(Param {
                name: format!("{name}.bn.beta"),
                value: Tensor::zeros(vec![cout]),
            });
            norms.push(BatchNormState::new(format!("{name}.bn"), cout));
            Layer::ConvBnRelu {
                weight,
                gamma: weight + 1,
                beta: weight + 2,
                norm: norms.len() - 1,
                pad,
            }
        };

        let mut cin = 1;
        for (b, &filters) in config.block_filters.iter().enumerate() {
            for j in 0..config.convs_per_block {
                let name = format!("l{}.conv{}", b + 1, j);
                layers.push(add_conv_bn(name, cin, filters, 3, 1, &mut params, &mut norms, &mut rng));
                cin = filters;
            }
            layers.push(Layer::MaxPool);
        }
        layers.push(add_conv_bn(
            "l7".into(),
            cin,
            config.l7_filters,
            2,
            0,
            &mut params,
            &mut norms,
            &mut rng,
        ));

        let bound = 1.0 / (config.l7_filters as f32).sqrt();
        let weight = params.len();
        params.push(Param {
            name: "l8.weight".into(),
            value: uniform(vec![config.class_count, config.l7_filters, 1, 1], bound, &mut rng),
        });
        params.push(Param {
            name: "l8.bias".into(),
            value: uniform(vec![config.class_count], bound, &mut rng),
        });
        layers.push(Layer::Output {
            weight,
            bias: weight + 1,
        });

        Ok(Self {
            config,
            params,
            norms,
            layers,
        })
    }
}

impl<T: Scalar> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn norms(&self) -> &[BatchNormState<T>] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [BatchNormState<T>] {
        &mut self.norms
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count
    }

    /// Pooling has no parameters, so it can change after training.
    pub fn set_pooling(&mut self, pooling: crate::autodiff::Pooling) {
        self.config.pooling = pooling;
    }

    /// Replace weights and statistics, keeping the layer plan. Names and
    /// shapes must match this model exactly.
    pub fn load_state(&mut self, params: Vec<Param<T>>, norms: Vec<BatchNormState<T>>) -> Result<()> {
        if params.len() != self.params.len() || norms.len() != self.norms.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors and {} norm layers, got {} and {}",
                self.params.len(),
                self.norms.len(),
                params.len(),
                norms.len()
            )));
        }
        for (a, b) in self.params.iter().zip(&params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    b.name,
                    b.value.shape(),
                    a.name,
                    a.value.shape()
                )));
            }
        }
        for (a, b) in self.norms.iter().zip(&norms) {
            if a.name != b.name || a.channels() != b.channels() {
                return Err(Error::Checkpoint(format!(
                    "norm layer {} does not match {}",
                    b.name, a.name
                )));
            }
            b.validate()?;
        }
        self.params = params;
        self.norms = norms;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            norms: self.norms.iter().map(BatchNormState::cast).collect(),
            layers: self.layers.clone(),
        }
    }

    /// Stack equal-length spectrograms into a `[B, 1, n, 128]` tensor.
    pub fn batch_input(inputs: &[&LogmelSpectrogram]) -> Result<Tensor<T>> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let n = first.frames();
        segment_count(n)?;
        let mut data = Vec::with_capacity(inputs.len() * n * first.bands());
        for x in inputs {
            if x.frames() != n || x.bands() != first.bands() {
                return Err(Error::shape(
                    "batch",
                    format!("{}x{} vs {}x{}", x.frames(), x.bands(), n, first.bands()),
                ));
            }
            data.extend(x.values().iter().map(|&v| T::from_f64_lossy(f64::from(v))));
        }
        Tensor::new(vec![inputs.len(), 1, n, first.bands()], data)
    }

    /// Lay the network onto `tape` for `input: [B, 1, n, 128]`. Train mode
    /// folds batch statistics into `norms`.
    pub(crate) fn graph(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        mode: Mode,
        norms: &mut [BatchNormState<T>],
        requires_grad: bool,
    ) -> Result<Graph> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 4 || shape[1] != 1 || shape[3] != self.config.mel_bands {
            return Err(Error::shape(
                "walnet",
                format!("input {shape:?}, want [B, 1, n, {}]", self.config.mel_bands),
            ));
        }
        segment_count(shape[2])?;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), requires_grad))
            .collect();
        let mut h = input;
        let mut segments = None;
        for layer in &self.layers {
            match *layer {
                Layer::ConvBnRelu {
                    weight,
                    gamma,
                    beta,
                    norm,
                    pad,
                } => {
                    let c = tape.conv2d(h, params[weight], 1, pad)?;
                    let n = tape.batch_norm2d(c, params[gamma], params[beta], &mut norms[norm], mode)?;
                    h = tape.relu(n)?;
                }
                Layer::MaxPool => h = tape.max_pool2d(h)?,
                Layer::Output { weight, bias } => {
                    let c = tape.conv2d(h, params[weight], 1, 0)?;
                    let b = tape.bias_add(c, params[bias])?;
                    let s = tape.sigmoid(b)?;
                    segments = Some(s);
                    h = s;
                }
            }
        }
        let segments = segments.expect("plan ends with the output layer");
        let recording = tape.global_pool(segments, self.config.pooling)?;
        Ok(Graph {
            params,
            segments,
            recording,
        })
    }

    fn run(
        &self,
        inputs: &[&LogmelSpectrogram],
        mode: Mode,
        norms: &mut [BatchNormState<T>],
    ) -> Result<Vec<(SegmentPosteriors, RecordingPosteriors)>> {
        let x = Self::batch_input(inputs)?;
        let mut tape = Tape::new();
        let input = tape.leaf(x, false);
        let g = self.graph(&mut tape, input, mode, norms, false)?;
        let seg = tape.value(g.segments);
        let rec = tape.value(g.recording);
        let (b, c, k) = (seg.shape()[0], seg.shape()[1], seg.shape()[2]);
        let expected = segment_count(inputs[0].frames())?;
        debug_assert_eq!(k, expected);
        let spans = (0..k).map(|i| segment_span(i, k)).collect::<Result<Vec<_>>>()?;
        let sv = seg.data();
        let rv = rec.data();
        Ok((0..b)
            .map(|bi| {
                let mut values = vec![0.0f32; k * c];
                for ci in 0..c {
                    for ki in 0..k {
                        values[ki * c + ci] = sv[(bi * c + ci) * k + ki].to_f64_lossy() as f32;
                    }
                }
                (
                    SegmentPosteriors {
                        values,
                        segments: k,
                        classes: c,
                        spans: spans.clone(),
                    },
                    RecordingPosteriors {
                        values: rv[bi * c..(bi + 1) * c]
                            .iter()
                            .map(|v| v.to_f64_lossy() as f32)
                            .collect(),
                    },
                )
            })
            .collect())
    }

    /// Segment and recording posteriors for one input. Train mode updates
    /// the batch-norm running statistics.
    pub fn forward(&mut self, x: &LogmelSpectrogram, mode: Mode) -> Result<(SegmentPosteriors, RecordingPosteriors)> {
        let mut norms = std::mem::take(&mut self.norms);
        let out = self.run(&[x], mode, &mut norms);
        self.norms = norms;
        Ok(out?.pop().expect("one output per input"))
    }

    /// Train-mode forward over a batch of equal-length inputs.
    pub fn forward_batch(
        &mut self,
        xs: &[&LogmelSpectrogram],
        mode: Mode,
    ) -> Result<Vec<(SegmentPosteriors, RecordingPosteriors)>> {
        let mut norms = std::mem::take(&mut self.norms);
        let out = self.run(xs, mode, &mut norms);
        self.norms = norms;
        out
    }

    /// Eval-mode forward; leaves the model untouched and may run on shared
    /// references from several threads.
    pub fn predict(&self, x: &LogmelSpectrogram) -> Result<(SegmentPosteriors, RecordingPosteriors)> {
        let mut norms = self.norms.clone();
        Ok(self
            .run(&[x], Mode::Eval, &mut norms)?
            .pop()
            .expect("one output per input"))
    }

    /// Mean binary cross-entropy of the recording posteriors against
    /// multi-hot `targets` (one row of `C` entries per input) and its
    /// gradient for every parameter tensor.
    pub fn loss_and_grads(
        &mut self,
        inputs: &[&LogmelSpectrogram],
        targets: &[Vec<T>],
        mode: Mode,
    ) -> Result<(f64, Vec<Vec<T>>)> {
        let x = Self::batch_input(inputs)?;
        self.loss_and_grads_tensor(x, targets, mode)
    }

    pub(crate) fn loss_and_grads_tensor(
        &mut self,
        x: Tensor<T>,
        targets: &[Vec<T>],
        mode: Mode,
    ) -> Result<(f64, Vec<Vec<T>>)> {
        let flat: Vec<T> = targets.iter().flatten().copied().collect();
        let mut norms = std::mem::take(&mut self.norms);
        let result = (|| {
            let mut tape = Tape::new();
            let input = tape.leaf(x, false);
            let g = self.graph(&mut tape, input, mode, &mut norms, true)?;
            let loss = tape.bce_loss(g.recording, &flat)?;
            tape.backward(loss)?;
            let value = tape.value(loss).data()[0].to_f64_lossy();
            let grads = g
                .params
                .iter()
                .zip(&self.params)
                .map(|(&v, p)| {
                    tape.grad(v)
                        .map(<[T]>::to_vec)
                        .unwrap_or_else(|| vec![T::zero(); p.value.len()])
                })
                .collect();
            Ok((value, grads))
        })();
        self.norms = norms;
        result
    }

    /// Loss only (no gradients, no statistics update outside `mode`).
    pub fn loss(&mut self, inputs: &[&LogmelSpectrogram], targets: &[Vec<T>], mode: Mode) -> Result<f64> {
        let x = Self::batch_input(inputs)?;
        self.loss_tensor(x, targets, mode)
    }

    pub(crate) fn loss_tensor(&mut self, x: Tensor<T>, targets: &[Vec<T>], mode: Mode) -> Result<f64> {
        self.loss_region(x, targets, mode).map(|(l, _)| l)
    }

    /// Loss together with [`Tape::region`] of the graph that produced it.
    pub(crate) fn loss_region(&mut self, x: Tensor<T>, targets: &[Vec<T>], mode: Mode) -> Result<(f64, u64)> {
        let flat: Vec<T> = targets.iter().flatten().copied().collect();
        let mut norms = std::mem::take(&mut self.norms);
        let result = (|| {
            let mut tape = Tape::new();
            let input = tape.leaf(x, false);
            let g = self.graph(&mut tape, input, mode, &mut norms, false)?;
            let loss = tape.bce_loss(g.recording, &flat)?;
            Ok((tape.value(loss).data()[0].to_f64_lossy(), tape.region()))
        })();
        self.norms = norms;
        result
    }
}
