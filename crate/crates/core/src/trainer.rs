//! Minibatched Adam training with divergence detection, epoch history,
//! checkpointing, and nodal evaluation metrics.
//!
//! The loop is loss-agnostic: a builder closure stages the objective for a
//! given interior-row subset on a fresh tape every step, so the same
//! trainer drives variational, strong-form, and dynamic problems.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::graph::Graph;
use crate::autodiff::params::{grad_flat, ParamSet};
use crate::error::{Error, Result};
use crate::losses::{LossGraph, LossReport, LossWeights};
use crate::mesh::{recover_gradient, Mesh};
use crate::model::{stage_model, Model, ModelTape};

pub const LR_MIN: f64 = 1e-5;
pub const LR_MAX: f64 = 1e-1;

/// A run is declared divergent when |loss| exceeds this multiple of the
/// first recorded |loss| (or of 1e-12 for a loss that starts at zero).
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Epoch-seed stride; keeps per-epoch shuffles decorrelated while letting
/// a resumed run reproduce them from the epoch index alone.
const EPOCH_SEED_STRIDE: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Interior points per minibatch; 0 means full batch.
    pub batch: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Epochs between test-metric evaluations; 0 disables them (the final
    /// epoch is always evaluated when a metric is given).
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn new(lr: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            lr,
            epochs,
            batch: 0,
            seed: 0,
            weights: LossWeights::default(),
            eval_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(LR_MIN..=LR_MAX).contains(&self.lr) {
            return Err(Error::Config(format!(
                "learning rate {} outside [{LR_MIN}, {LR_MAX}]",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Adam optimizer state (bias-corrected first/second moments).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// One epoch's mean loss terms plus an optional test metric.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub report: LossReport,
    pub test_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Completed,
    Diverged { epoch: usize, detail: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged { .. })
    }

    pub fn final_report(&self) -> Option<&LossReport> {
        self.history.last().map(|l| &l.report)
    }
}

/// Optimizer state carried across checkpoints.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Next epoch to run.
    pub epoch: usize,
    pub adam: Adam,
    /// First recorded |loss| for the divergence gate (NaN while unset).
    pub baseline: f64,
}

impl TrainState {
    pub fn fresh(cfg: &TrainConfig, n_params: usize) -> TrainState {
        TrainState {
            epoch: 0,
            adam: Adam::new(cfg.lr, n_params),
            baseline: f64::NAN,
        }
    }
}

/// Run (or continue) training from `state`, which is advanced in place so
/// the caller can checkpoint it. `build` stages the loss for the given
/// interior-row subset; `metric`, when given, is evaluated every
/// `eval_every` epochs and on the last one.
pub fn train(
    model: &mut Model,
    cfg: &TrainConfig,
    n_interior: usize,
    state: &mut TrainState,
    mut build: impl FnMut(&mut Graph, &Model, &ModelTape, &[usize]) -> LossGraph,
    mut metric: Option<&mut dyn FnMut(&Model) -> f64>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if n_interior == 0 {
        return Err(Error::Config("no interior points to train on".into()));
    }
    if state.adam.m.len() != model.params.n_scalars() {
        return Err(Error::Config(
            "optimizer state does not match the model's parameter count".into(),
        ));
    }
    let batch = if cfg.batch == 0 {
        n_interior
    } else {
        cfg.batch.min(n_interior)
    };
    let mut flat = model.params.to_flat();
    let mut history = Vec::new();

    for epoch in state.epoch..cfg.epochs {
        // Shuffling a fresh identity permutation (rather than the previous
        // epoch's order) makes every epoch's batches a function of the seed
        // and epoch index alone, so resumed runs replay them exactly.
        let mut all_rows: Vec<usize> = (0..n_interior).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(EPOCH_SEED_STRIDE));
        all_rows.shuffle(&mut rng);

        let mut sums: Vec<(&'static str, f64)> = Vec::new();
        let mut total_sum = 0.0;
        let mut n_batches = 0usize;
        for rows in all_rows.chunks(batch) {
            let mut g = Graph::new();
            let tape = stage_model(&mut g, model);
            let loss = build(&mut g, model, &tape, rows);
            let report = loss.report(&g);

            // Divergence and overflow checks come before the step so a
            // poisoned gradient never reaches the parameters.
            if let Some(detail) = check_divergence(&report, &mut state.baseline) {
                history.push(EpochLog {
                    epoch,
                    report,
                    test_metric: None,
                });
                return Ok(TrainOutcome {
                    history,
                    stop: StopReason::Diverged { epoch, detail },
                });
            }

            let adjoints = g.backward(loss.total);
            let grads = grad_flat(&model.params, &tape.staged, &adjoints);
            if grads.iter().any(|g| !g.is_finite()) {
                history.push(EpochLog {
                    epoch,
                    report,
                    test_metric: None,
                });
                return Ok(TrainOutcome {
                    history,
                    stop: StopReason::Diverged {
                        epoch,
                        detail: "parameter gradient became non-finite".into(),
                    },
                });
            }
            state.adam.step(&mut flat, &grads);
            model.params.assign_flat(&flat);

            total_sum += report.total;
            if sums.is_empty() {
                sums = report.terms.iter().map(|&(n, v)| (n, v)).collect();
            } else {
                for (acc, &(_, v)) in sums.iter_mut().zip(&report.terms) {
                    acc.1 += v;
                }
            }
            n_batches += 1;
        }

        let inv = 1.0 / n_batches as f64;
        let report = LossReport {
            total: total_sum * inv,
            terms: sums.iter().map(|&(n, v)| (n, v * inv)).collect(),
        };
        let is_last = epoch + 1 == cfg.epochs;
        let due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        let test_metric = match metric.as_mut() {
            Some(f) if due || is_last => Some(f(model)),
            _ => None,
        };
        history.push(EpochLog {
            epoch,
            report,
            test_metric,
        });
        state.epoch = epoch + 1;
    }
    Ok(TrainOutcome {
        history,
        stop: StopReason::Completed,
    })
}

fn check_divergence(report: &LossReport, baseline: &mut f64) -> Option<String> {
    if !report.total.is_finite() {
        let culprit = report
            .terms
            .iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| *n)
            .unwrap_or("total");
        return Some(format!("loss term '{culprit}' became non-finite"));
    }
    if let Some((name, _)) = report.terms.iter().find(|(_, v)| !v.is_finite()) {
        return Some(format!("loss term '{name}' became non-finite"));
    }
    if baseline.is_nan() {
        *baseline = report.total.abs().max(1e-12);
        return None;
    }
    if report.total.abs() > DIVERGENCE_FACTOR * *baseline {
        return Some(format!(
            "|loss| {:.3e} exceeded {DIVERGENCE_FACTOR:.0e} times its starting magnitude {:.3e}",
            report.total.abs(),
            *baseline
        ));
    }
    None
}

const TRAIN_MAGIC: &[u8] = b"finpinn-train v1\n";

/// Save model parameters plus optimizer state as one resumable file.
pub fn save_checkpoint(path: &Path, params: &ParamSet, state: &TrainState) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(TRAIN_MAGIC)?;
    w.write_u64::<LittleEndian>(state.epoch as u64)?;
    w.write_f64::<LittleEndian>(state.baseline)?;
    let a = &state.adam;
    w.write_f64::<LittleEndian>(a.lr)?;
    w.write_f64::<LittleEndian>(a.beta1)?;
    w.write_f64::<LittleEndian>(a.beta2)?;
    w.write_f64::<LittleEndian>(a.eps)?;
    w.write_u64::<LittleEndian>(a.t)?;
    w.write_u64::<LittleEndian>(a.m.len() as u64)?;
    for &x in &a.m {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in &a.v {
        w.write_f64::<LittleEndian>(x)?;
    }
    params.write_to(&mut w)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamSet, TrainState)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = vec![0u8; TRAIN_MAGIC.len()];
    r.read_exact(&mut magic)?;
    if magic != TRAIN_MAGIC {
        return Err(Error::Parse {
            line: 1,
            msg: "not a training checkpoint (bad magic)".into(),
        });
    }
    let epoch = r.read_u64::<LittleEndian>()? as usize;
    let baseline = r.read_f64::<LittleEndian>()?;
    let lr = r.read_f64::<LittleEndian>()?;
    let beta1 = r.read_f64::<LittleEndian>()?;
    let beta2 = r.read_f64::<LittleEndian>()?;
    let eps = r.read_f64::<LittleEndian>()?;
    let t = r.read_u64::<LittleEndian>()?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut m = vec![0.0; n];
    for x in &mut m {
        *x = r.read_f64::<LittleEndian>()?;
    }
    let mut v = vec![0.0; n];
    for x in &mut v {
        *x = r.read_f64::<LittleEndian>()?;
    }
    let params = ParamSet::read_from(&mut r)?;
    Ok((
        params,
        TrainState {
            epoch,
            adam: Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            },
            baseline,
        },
    ))
}

/// Epoch history as CSV: `epoch,total,<terms…>,test_metric`.
pub fn history_csv(history: &[EpochLog]) -> String {
    let mut out = String::new();
    let Some(first) = history.first() else {
        return out;
    };
    out.push_str("epoch,total");
    for (name, _) in &first.report.terms {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",test_metric\n");
    for log in history {
        out.push_str(&format!("{},{:.9e}", log.epoch, log.report.total));
        for (_, v) in &log.report.terms {
            out.push_str(&format!(",{v:.9e}"));
        }
        match log.test_metric {
            Some(m) => out.push_str(&format!(",{m:.9e}\n")),
            None => out.push_str(",\n"),
        }
    }
    out
}

/// Relative nodal L² distance weighted by lumped node measures:
/// ‖pred − ref‖ / ‖ref‖.
pub fn nodal_l2_rel(mesh: &Mesh, pred: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    assert_eq!(pred.dim(), reference.dim());
    let w = mesh.node_measure();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..pred.nrows() {
        for c in 0..pred.ncols() {
            let d = pred[(i, c)] - reference[(i, c)];
            num += w[i] * d * d;
            den += w[i] * reference[(i, c)] * reference[(i, c)];
        }
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Pearson correlation of two equal-length samples; 0 when either side
/// has no variance.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / n,
        b.iter().sum::<f64>() / n,
    );
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Plain mean squared difference over all nodal components.
pub fn nodal_mse(pred: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    assert_eq!(pred.dim(), reference.dim());
    let n = pred.len() as f64;
    pred.iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Relative H¹ seminorm distance from recovered nodal gradients of each
/// displacement component.
pub fn h1_semi_rel(mesh: &Mesh, pred: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    assert_eq!(pred.dim(), reference.dim());
    let w = mesh.node_measure();
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..pred.ncols() {
        let pc: Vec<f64> = pred.column(c).to_vec();
        let rc: Vec<f64> = reference.column(c).to_vec();
        let gp = recover_gradient(mesh, &pc);
        let gr = recover_gradient(mesh, &rc);
        for i in 0..pred.nrows() {
            for j in 0..2 {
                let d = gp[i][j] - gr[i][j];
                num += w[i] * d * d;
                den += w[i] * gr[i][j] * gr[i][j];
            }
        }
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
