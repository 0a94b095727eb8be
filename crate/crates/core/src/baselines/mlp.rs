//! Feedforward ReLU network used as a black-box one-step predictor.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::quadsim::DiscreteModel;
use crate::{Error, Input, MatA, MatB, Result, State, NU, NX};

/// Affine layers with ReLU between them (none after the last).
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Gradient with the same shapes as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Network {
    /// He-initialised weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let std = (2.0 / w[0] as f64).sqrt();
            weights.push(DMatrix::from_fn(w[1], w[0], |_, _| {
                let n: f64 = StandardNormal.sample(rng);
                std * n
            }));
            biases.push(DVector::zeros(w[1]));
        }
        Self { weights, biases }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            weights: sizes
                .windows(2)
                .map(|w| DMatrix::zeros(w[1], w[0]))
                .collect(),
            biases: sizes.windows(2).map(|w| DVector::zeros(w[1])).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].ncols()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.last().map(|w| w.nrows()).unwrap_or(0)
    }

    /// Column-batched forward pass, keeping every layer's activation.
    fn forward_all(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().expect("input");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let out = self.forward_all(&m).pop().expect("output");
        DVector::from_column_slice(out.as_slice())
    }

    /// Jacobian of the output with respect to the input.
    pub fn input_jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let acts = self.forward_all(&m);
        let last = self.weights.len() - 1;
        let mut jac = self.weights[0].clone();
        for l in 0..last {
            // ReLU mask of layer l, then the next affine map
            let active = &acts[l + 1];
            for r in 0..jac.nrows() {
                if active[(r, 0)] <= 0.0 {
                    jac.row_mut(r).fill(0.0);
                }
            }
            jac = &self.weights[l + 1] * jac;
        }
        let out = acts.last().expect("output");
        (DVector::from_column_slice(out.as_slice()), jac)
    }

    /// Mean squared error over the batch columns, `(1/(B·m)) Σ ‖f(x) − y‖²`,
    /// and its gradient.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Gradient) {
        let acts = self.forward_all(x);
        let out = acts.last().expect("output");
        let diff = out - y;
        let scale = 1.0 / (x.ncols() * y.nrows()) as f64;
        let loss = diff.norm_squared() * scale;
        let mut delta = diff * (2.0 * scale);
        let n = self.weights.len();
        let mut gw = vec![DMatrix::zeros(0, 0); n];
        let mut gb = vec![DVector::zeros(0); n];
        for l in (0..n).rev() {
            gw[l] = &delta * acts[l].transpose();
            gb[l] = delta.column_sum();
            if l > 0 {
                let mut back = self.weights[l].transpose() * &delta;
                back.zip_apply(&acts[l], |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
        }
        (
            loss,
            Gradient {
                weights: gw,
                biases: gb,
            },
        )
    }

    /// Upper bound on the Lipschitz constant: product of spectral norms.
    pub fn lipschitz_bound(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| {
                w.clone()
                    .singular_values()
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max)
            })
            .product()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Adam moments for every parameter.
struct Adam {
    m: Gradient,
    v: Gradient,
    t: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        let z = Network::zeros(&net.sizes());
        let g = Gradient {
            weights: z.weights,
            biases: z.biases,
        };
        Self {
            m: g.clone(),
            v: g,
            t: 0,
        }
    }

    fn update(&mut self, net: &mut Network, g: &Gradient, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        let step = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
            }
        };
        for l in 0..net.weights.len() {
            step(
                net.weights[l].as_mut_slice(),
                self.m.weights[l].as_mut_slice(),
                self.v.weights[l].as_mut_slice(),
                g.weights[l].as_slice(),
            );
            step(
                net.biases[l].as_mut_slice(),
                self.m.biases[l].as_mut_slice(),
                self.v.biases[l].as_mut_slice(),
                g.biases[l].as_slice(),
            );
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the validation loss falls below this.
    pub target_loss: f64,
    /// Fraction of samples held out for validation.
    pub validation: f64,
    /// Input standardisation scale.
    pub input_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 2000,
            target_loss: 1e-4,
            validation: 0.1,
            input_std: 0.1,
            seed: 0,
        }
    }
}

/// One-step transitions `(x, u) → x⁺`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transitions {
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    pub next: Vec<State>,
}

impl Transitions {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, x: State, u: Input, next: State) {
        self.states.push(x);
        self.inputs.push(u);
        self.next.push(next);
    }

    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        (
            Self {
                states: self.states[..n].to_vec(),
                inputs: self.inputs[..n].to_vec(),
                next: self.next[..n].to_vec(),
            },
            Self {
                states: self.states[n..].to_vec(),
                inputs: self.inputs[n..].to_vec(),
                next: self.next[n..].to_vec(),
            },
        )
    }
}

/// `x⁺ = x + s ⊙ net((z − μ)/σ)` with `z = [x; u]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub net: Network,
    pub input_mean: DVector<f64>,
    pub input_std: f64,
    /// Per-component scale of the state increment.
    pub output_scale: State,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub train_loss: Vec<f64>,
    pub validation_loss: f64,
    pub early_stopped: bool,
}

impl MlpModel {
    fn normalize(&self, x: &State, u: &Input) -> DVector<f64> {
        DVector::from_fn(NX + NU, |i, _| {
            let v = if i < NX { x[i] } else { u[i - NX] };
            (v - self.input_mean[i]) / self.input_std
        })
    }

    pub fn predict(&self, x: &State, u: &Input) -> State {
        let out = self.net.forward(&self.normalize(x, u));
        x + State::from_fn(|i, _| out[i] * self.output_scale[i])
    }

    fn design(&self, data: &Transitions, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(NX + NU, idx.len(), |r, c| {
            let k = idx[c];
            let v = if r < NX {
                data.states[k][r]
            } else {
                data.inputs[k][r - NX]
            };
            (v - self.input_mean[r]) / self.input_std
        });
        let y = DMatrix::from_fn(NX, idx.len(), |r, c| {
            let k = idx[c];
            (data.next[k][r] - data.states[k][r]) / self.output_scale[r]
        });
        (x, y)
    }

    /// Normalised mean squared one-step error on `data`.
    pub fn loss(&self, data: &Transitions) -> f64 {
        let all: Vec<usize> = (0..data.len()).collect();
        let (x, y) = self.design(data, &all);
        self.net.loss_and_gradient(&x, &y).0
    }
}

impl DiscreteModel for MlpModel {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, x: &State, u: &Input) -> State {
        self.predict(x, u)
    }

    fn step_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        let (out, jac) = self.net.input_jacobian(&self.normalize(x, u));
        let next = x + State::from_fn(|i, _| out[i] * self.output_scale[i]);
        let s = 1.0 / self.input_std;
        let a = MatA::from_fn(|r, c| {
            jac[(r, c)] * self.output_scale[r] * s + if r == c { 1.0 } else { 0.0 }
        });
        let b = MatB::from_fn(|r, c| jac[(r, NX + c)] * self.output_scale[r] * s);
        (next, a, b)
    }
}

/// Trains a `16 → hidden → 12` predictor with Adam on shuffled minibatches.
/// `reference` is the normalisation mean (`[x_ref; u_ref]`).
pub fn mlp_train(
    data: &Transitions,
    reference: (&State, &Input),
    dt: f64,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    if data.len() < cfg.batch_size.max(2) {
        return Err(Error::Dataset(format!(
            "need at least {} transitions, got {}",
            cfg.batch_size.max(2),
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64 * cfg.validation) as usize).min(data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut output_scale = State::zeros();
    for i in 0..NX {
        let n = train_idx.len() as f64;
        let mean = train_idx.iter().map(|&k| data.next[k][i] - data.states[k][i]).sum::<f64>() / n;
        let var = train_idx
            .iter()
            .map(|&k| (data.next[k][i] - data.states[k][i] - mean).powi(2))
            .sum::<f64>()
            / n;
        output_scale[i] = var.sqrt().max(1e-6);
    }
    let mut sizes = vec![NX + NU];
    sizes.extend(&cfg.hidden);
    sizes.push(NX);
    let mut model = MlpModel {
        net: Network::new(&sizes, &mut rng),
        input_mean: DVector::from_fn(NX + NU, |i, _| {
            if i < NX {
                reference.0[i]
            } else {
                reference.1[i - NX]
            }
        }),
        input_std: cfg.input_std,
        output_scale,
        dt,
    };
    let (val_x, val_y) = model.design(data, if val_idx.is_empty() { &train_idx } else { val_idx });
    let mut adam = Adam::new(&model.net);
    let mut report = TrainReport {
        epochs: 0,
        train_loss: Vec::new(),
        validation_loss: f64::INFINITY,
        early_stopped: false,
    };
    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (x, y) = model.design(data, chunk);
            let (loss, grad) = model.net.loss_and_gradient(&x, &y);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.update(&mut model.net, &grad, cfg.learning_rate);
            total += loss;
            batches += 1;
        }
        if !model.net.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.epochs = epoch;
        report.train_loss.push(total / batches as f64);
        report.validation_loss = model.net.loss_and_gradient(&val_x, &val_y).0;
        if report.validation_loss < cfg.target_loss {
            report.early_stopped = true;
            break;
        }
    }
    Ok((model, report))
}
