//! The SpecRNet architecture.
//!
//! ```text
//! [B,1,80,N] -> BN+SELU -> ResBlock(1->20) -> FMS -> [B,20,20,N/4]
//!            -> ResBlock(20->64) -> FMS -> [B,64,5,N/16]
//!            -> ResBlock(64->64) -> FMS -> [B,64,1,N/64]
//!            -> BN+SELU -> BiGRU(64) -> BiGRU(64) -> [B,128]
//!            -> FC(128) -> FC(1) -> sigmoid -> [B]
//! ```
//! Every "/" is a floor halving per max pool.

mod fms;
mod resblock;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use fms::{FmsBlock, FmsCache, FmsVariant};
pub use resblock::{ResBlock, ResCache};

use crate::nn::activation::sigmoid;
use crate::nn::{Activation, BatchNorm2d, BiGru, BnCache, BnStats, GruCache, Linear, Mode, Module, Param};
use crate::{Error, Result, Scalar, Tensor};

/// Trainable parameter total of the default architecture.
pub const SPECRNET_PARAMETERS: usize = 277_963;

/// Shortest time axis that survives the six floor-halving pools.
pub const MIN_FRAMES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecRNetConfig {
    pub input_channels: usize,
    pub block_channels: [usize; 3],
    pub gru_hidden: usize,
    pub fc_hidden: usize,
    pub leaky_slope: f32,
    pub input_coeffs: usize,
    pub fms: FmsVariant,
}

impl Default for SpecRNetConfig {
    fn default() -> Self {
        Self {
            input_channels: 1,
            block_channels: [20, 64, 64],
            gru_hidden: 64,
            fc_hidden: 128,
            leaky_slope: 0.3,
            input_coeffs: 80,
            fms: FmsVariant::ScaleAdd,
        }
    }
}

impl SpecRNetConfig {
    /// Flat numeric encoding stored alongside the weights.
    pub fn to_values(&self) -> Vec<f32> {
        let [a, b, c] = self.block_channels;
        let fms = match self.fms {
            FmsVariant::ScaleAdd => 0.0,
            FmsVariant::ScaleOnly => 1.0,
        };
        [
            self.input_channels as f32,
            a as f32,
            b as f32,
            c as f32,
            self.gru_hidden as f32,
            self.fc_hidden as f32,
            self.leaky_slope,
            self.input_coeffs as f32,
            fms,
        ]
        .to_vec()
    }

    pub fn from_values(v: &[f32]) -> Result<Self> {
        let int = |x: f32| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 && x < 1e6 {
                Ok(x as usize)
            } else {
                Err(Error::CorruptContainer(format!("bad config value {x}")))
            }
        };
        match v {
            [ic, a, b, c, gh, fh, slope, coeffs, fms] => Ok(Self {
                input_channels: int(*ic)?,
                block_channels: [int(*a)?, int(*b)?, int(*c)?],
                gru_hidden: int(*gh)?,
                fc_hidden: int(*fh)?,
                leaky_slope: *slope,
                input_coeffs: int(*coeffs)?,
                fms: match *fms {
                    0.0 => FmsVariant::ScaleAdd,
                    1.0 => FmsVariant::ScaleOnly,
                    other => return Err(Error::CorruptContainer(format!("bad fms variant {other}"))),
                },
            }),
            _ => Err(Error::CorruptContainer(format!("config expects 9 values, got {}", v.len()))),
        }
    }
}

/// Samples per chunk, and number of leading stages, for the chunked part
/// of [`SpecRNet::predict`].
const TRUNK_CHUNK: usize = 1;
const TRUNK_STAGES: usize = 5;

/// Evaluation stages in order; the head covers everything after the last
/// attention block. Parameter names start with their stage name.
pub const STAGES: [&str; 8] = ["pre_norm", "block1", "fms1", "block2", "fms2", "block3", "fms3", "head"];

/// Named activation shapes seen during one forward pass.
pub type ShapeTrace = Vec<(&'static str, Vec<usize>)>;

struct Tape<T: Scalar> {
    pre: BnCache<T>,
    pre_out: Tensor<T>,
    b1: ResCache<T>,
    f1: FmsCache<T>,
    b2: ResCache<T>,
    f2: FmsCache<T>,
    b3: ResCache<T>,
    f3: FmsCache<T>,
    rec: BnCache<T>,
    rec_out: Tensor<T>,
    seq: Tensor<T>,
    g1: GruCache<T>,
    seq2: Tensor<T>,
    g2: GruCache<T>,
    summary: Tensor<T>,
    hidden: Tensor<T>,
    scores: Tensor<T>,
}

#[derive(Clone)]
pub struct SpecRNet<T: Scalar> {
    config: SpecRNetConfig,
    pub pre_norm: BatchNorm2d<T>,
    pub block1: ResBlock<T>,
    pub fms1: FmsBlock<T>,
    pub block2: ResBlock<T>,
    pub fms2: FmsBlock<T>,
    pub block3: ResBlock<T>,
    pub fms3: FmsBlock<T>,
    pub pre_recurrent_norm: BatchNorm2d<T>,
    pub gru1: BiGru<T>,
    pub gru2: BiGru<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    tape: Option<alloc::sync::Arc<Tape<T>>>,
}

impl<T: Scalar> core::fmt::Debug for SpecRNet<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SpecRNet")
            .field("config", &self.config)
            .field("parameters", &self.count_parameters())
            .finish()
    }
}

impl<T: Scalar> PartialEq for SpecRNet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.named_state() == other.named_state()
    }
}

impl<T: Scalar> SpecRNet<T> {
    /// Deterministic construction: the same seed gives bit-identical weights.
    pub fn build(config: SpecRNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c1, c2, c3] = config.block_channels;
        let slope = config.leaky_slope as f64;
        let h = config.gru_hidden;
        Self {
            pre_norm: BatchNorm2d::new("pre_norm", config.input_channels),
            block1: ResBlock::new("block1", config.input_channels, c1, true, slope, &mut rng),
            fms1: FmsBlock::new("fms1", c1, config.fms, &mut rng),
            block2: ResBlock::new("block2", c1, c2, false, slope, &mut rng),
            fms2: FmsBlock::new("fms2", c2, config.fms, &mut rng),
            block3: ResBlock::new("block3", c2, c3, false, slope, &mut rng),
            fms3: FmsBlock::new("fms3", c3, config.fms, &mut rng),
            pre_recurrent_norm: BatchNorm2d::new("pre_recurrent_norm", c3),
            gru1: BiGru::new("gru1", c3, h, &mut rng),
            gru2: BiGru::new("gru2", 2 * h, h, &mut rng),
            fc1: Linear::new("fc1", 2 * h, config.fc_hidden, &mut rng),
            fc2: Linear::new("fc2", config.fc_hidden, 1, &mut rng),
            config,
            tape: None,
        }
    }

    pub fn config(&self) -> &SpecRNetConfig {
        &self.config
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        self.pre_norm.params(&mut out);
        self.block1.params(&mut out);
        self.fms1.params(&mut out);
        self.block2.params(&mut out);
        self.fms2.params(&mut out);
        self.block3.params(&mut out);
        self.fms3.params(&mut out);
        self.pre_recurrent_norm.params(&mut out);
        self.gru1.params(&mut out);
        self.gru2.params(&mut out);
        self.fc1.params(&mut out);
        self.fc2.params(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        self.pre_norm.params_mut(&mut out);
        self.block1.params_mut(&mut out);
        self.fms1.params_mut(&mut out);
        self.block2.params_mut(&mut out);
        self.fms2.params_mut(&mut out);
        self.block3.params_mut(&mut out);
        self.fms3.params_mut(&mut out);
        self.pre_recurrent_norm.params_mut(&mut out);
        self.gru1.params_mut(&mut out);
        self.gru2.params_mut(&mut out);
        self.fc1.params_mut(&mut out);
        self.fc2.params_mut(&mut out);
        out
    }

    /// All batch norms in forward order.
    pub fn batch_norms(&self) -> Vec<(&'static str, &BatchNorm2d<T>)> {
        let mut v = alloc::vec![("pre_norm", &self.pre_norm)];
        v.extend(self.block1.batch_norms().map(|b| ("block1", b)));
        v.extend(self.block2.batch_norms().map(|b| ("block2", b)));
        v.extend(self.block3.batch_norms().map(|b| ("block3", b)));
        v.push(("pre_recurrent_norm", &self.pre_recurrent_norm));
        v
    }

    fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm2d<T>> {
        let mut v = alloc::vec![&mut self.pre_norm];
        v.extend(self.block1.batch_norms_mut());
        v.extend(self.block2.batch_norms_mut());
        v.extend(self.block3.batch_norms_mut());
        v.push(&mut self.pre_recurrent_norm);
        v
    }

    /// Sum of element counts over trainable parameters.
    pub fn count_parameters(&self) -> usize {
        count_parameters(self.params())
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// Parameter values followed by batch-norm running statistics, in a
    /// fixed order. Names are unique.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self.params().into_iter().map(|p| (p.name.clone(), &p.value)).collect();
        for (_, bn) in self.batch_norms() {
            let base = bn.gamma.name.trim_end_matches(".gamma");
            out.push((format!("{base}.running_mean"), &bn.running_mean));
            out.push((format!("{base}.running_var"), &bn.running_var));
        }
        out
    }

    /// Overwrites the tensor called `name`; false when no such tensor exists.
    pub fn set_state(&mut self, name: &str, value: Tensor<T>) -> Result<bool> {
        for p in self.params_mut() {
            if p.name == name {
                if p.value.shape() != value.shape() {
                    return Err(Error::CountMismatch(format!(
                        "{name}: shape {:?}, expected {:?}",
                        value.shape(),
                        p.value.shape()
                    )));
                }
                p.value = value;
                return Ok(true);
            }
        }
        for bn in self.batch_norms_mut() {
            let base = String::from(bn.gamma.name.trim_end_matches(".gamma"));
            let slot = if name == format!("{base}.running_mean") {
                &mut bn.running_mean
            } else if name == format!("{base}.running_var") {
                &mut bn.running_var
            } else {
                continue;
            };
            if slot.shape() != value.shape() {
                return Err(Error::CountMismatch(format!("{name}: shape {:?}", value.shape())));
            }
            *slot = value;
            return Ok(true);
        }
        Ok(false)
    }

    fn run(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        record: bool,
        mut trace: Option<&mut ShapeTrace>,
    ) -> Result<(Tensor<T>, Option<Tape<T>>, Vec<BnStats>)> {
        self.run_checks(x)?;
        let mut note = |name: &'static str, t: &Tensor<T>| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push((name, t.shape().to_vec()));
            }
        };
        note("input", x);
        let mut stats = Vec::new();
        let (mut pre_out, pre, s) = self.pre_norm.forward(x, mode, record)?;
        stats.extend(s);
        Activation::Selu.forward_inplace(&mut pre_out);
        note("pre_norm", &pre_out);

        let (y, b1, s) = self.block1.forward(&pre_out, mode, record)?;
        stats.extend(s);
        note("block1", &y);
        let (y, f1) = self.fms1.forward(&y, record)?;
        note("fms1", &y);
        let (y, b2, s) = self.block2.forward(&y, mode, record)?;
        stats.extend(s);
        note("block2", &y);
        let (y, f2) = self.fms2.forward(&y, record)?;
        note("fms2", &y);
        let (y, b3, s) = self.block3.forward(&y, mode, record)?;
        stats.extend(s);
        note("block3", &y);
        let (y, f3) = self.fms3.forward(&y, record)?;
        note("fms3", &y);

        let (mut rec_out, rec, s) = self.pre_recurrent_norm.forward(&y, mode, record)?;
        stats.extend(s);
        Activation::Selu.forward_inplace(&mut rec_out);
        note("pre_recurrent_norm", &rec_out);

        let seq = to_sequence(&rec_out)?;
        let (seq2, g1) = self.gru1.forward(&seq, record)?;
        note("gru1", &seq2);
        let (out2, g2) = self.gru2.forward(&seq2, record)?;
        note("gru2", &out2);
        let summary = final_states(&out2, self.gru2.hidden());
        note("gru_summary", &summary);
        let hidden = self.fc1.forward(&summary)?;
        note("fc1", &hidden);
        let logits = self.fc2.forward(&hidden)?;
        note("fc2", &logits);
        let scores = to_scores(&logits)?;
        note("output", &scores);

        let tape = if record {
            let missing = || Error::NoForwardRecorded;
            Some(Tape {
                pre: pre.ok_or_else(missing)?,
                pre_out,
                b1: b1.ok_or_else(missing)?,
                f1: f1.ok_or_else(missing)?,
                b2: b2.ok_or_else(missing)?,
                f2: f2.ok_or_else(missing)?,
                b3: b3.ok_or_else(missing)?,
                f3: f3.ok_or_else(missing)?,
                rec: rec.ok_or_else(missing)?,
                rec_out,
                seq,
                g1: g1.ok_or_else(missing)?,
                seq2,
                g2: g2.ok_or_else(missing)?,
                summary,
                hidden,
                scores: scores.clone(),
            })
        } else {
            None
        };
        Ok((scores, tape, stats))
    }

    /// Forward pass that records what [`Self::backward`] needs. In train
    /// mode batch statistics are used and the running statistics updated.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.tape = None;
        let (scores, tape, stats) = self.run(x, mode, true, None)?;
        if mode == Mode::Train {
            for (bn, s) in self.batch_norms_mut().into_iter().zip(&stats) {
                bn.update_running(s);
            }
        }
        self.tape = tape.map(alloc::sync::Arc::new);
        Ok(scores)
    }

    /// Eval-mode scores `[B]` in `[0, 1]`; never touches model state.
    ///
    /// Eval-mode layers treat samples independently, so the wide early
    /// stages run a few samples at a time to keep their activations in
    /// cache, and the narrow tail runs once over the whole batch.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run_checks(x)?;
        let (b, c, h, n) = x.dims4()?;
        let per = c * h * n;
        if b <= TRUNK_CHUNK {
            return self.scores(x, Mode::Eval);
        }
        let mut mid = Vec::new();
        let mut mid_shape = Vec::new();
        for chunk in x.data().chunks(TRUNK_CHUNK * per) {
            let mut y = Tensor::from_vec(&[chunk.len() / per, c, h, n], chunk.to_vec())?;
            for i in 0..TRUNK_STAGES {
                y = self.stage(i, &y, Mode::Eval)?;
            }
            mid_shape = y.shape().to_vec();
            mid.extend_from_slice(y.data());
        }
        mid_shape[0] = b;
        let mut y = Tensor::from_vec(&mid_shape, mid)?;
        for i in TRUNK_STAGES..STAGES.len() {
            y = self.stage(i, &y, Mode::Eval)?;
        }
        Ok(y)
    }

    /// Scores under either mode without recording anything or updating
    /// running statistics.
    pub fn scores(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.run(x, mode, false, None)?.0)
    }

    /// Same weights and statistics in another precision.
    pub fn cast<U: Scalar>(&self) -> SpecRNet<U> {
        let mut out = SpecRNet::<U>::build(self.config, 0);
        for (name, t) in self.named_state() {
            let known = out.set_state(&name, t.cast()).expect("identical architecture");
            debug_assert!(known);
        }
        out
    }

    /// Like [`Self::predict`] but also reports every intermediate shape.
    pub fn predict_traced(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ShapeTrace)> {
        let mut trace = ShapeTrace::new();
        let (scores, _, _) = self.run(x, Mode::Eval, false, Some(&mut trace))?;
        Ok((scores, trace))
    }

    /// Runs stage `index` of [`STAGES`] on its input without recording.
    /// Chaining every stage from the raw features reproduces
    /// [`Self::scores`]; caching a prefix lets callers re-evaluate only the
    /// tail after perturbing a late parameter.
    pub fn stage(&self, index: usize, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let bn = |norm: &BatchNorm2d<T>| -> Result<Tensor<T>> {
            let (mut y, _, _) = norm.forward(x, mode, false)?;
            Activation::Selu.forward_inplace(&mut y);
            Ok(y)
        };
        match index {
            0 => {
                self.run_checks(x)?;
                bn(&self.pre_norm)
            }
            1 => Ok(self.block1.forward(x, mode, false)?.0),
            2 => Ok(self.fms1.forward(x, false)?.0),
            3 => Ok(self.block2.forward(x, mode, false)?.0),
            4 => Ok(self.fms2.forward(x, false)?.0),
            5 => Ok(self.block3.forward(x, mode, false)?.0),
            6 => Ok(self.fms3.forward(x, false)?.0),
            7 => {
                let seq = to_sequence(&bn(&self.pre_recurrent_norm)?)?;
                let (seq2, _) = self.gru1.forward(&seq, false)?;
                let (out2, _) = self.gru2.forward(&seq2, false)?;
                let summary = final_states(&out2, self.gru2.hidden());
                to_scores(&self.fc2.forward(&self.fc1.forward(&summary)?)?)
            }
            _ => Err(Error::InvalidConfig(format!("no stage {index}"))),
        }
    }

    /// Index into [`STAGES`] of the stage owning the named tensor.
    pub fn stage_of(name: &str) -> usize {
        let prefix = name.split('.').next().unwrap_or(name);
        STAGES.iter().position(|s| *s == prefix).unwrap_or(STAGES.len() - 1)
    }

    fn run_checks(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, n) = x.dims4()?;
        if c != self.config.input_channels || h != self.config.input_coeffs {
            return Err(Error::ShapeMismatch(format!(
                "expected [B, {}, {}, N], got {:?}",
                self.config.input_channels,
                self.config.input_coeffs,
                x.shape()
            )));
        }
        if n < MIN_FRAMES {
            return Err(Error::InputTooShort { needed: MIN_FRAMES, got: n });
        }
        Ok(())
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }

    pub fn clear_tape(&mut self) {
        self.tape = None;
    }

    /// Backpropagates `dL/dscores` through the last recorded forward pass,
    /// accumulating into every parameter gradient. The record is kept, so
    /// calling twice doubles the gradients.
    pub fn backward(&mut self, dscores: &Tensor<T>) -> Result<()> {
        let tape = self.tape.clone().ok_or(Error::NoForwardRecorded)?;
        let b = tape.scores.len();
        if dscores.len() != b {
            return Err(Error::ShapeMismatch(format!("{} score gradients for batch {b}", dscores.len())));
        }
        let mut dlogit = Tensor::zeros(&[b, 1]);
        for ((d, &g), &s) in dlogit.data_mut().iter_mut().zip(dscores.data()).zip(tape.scores.data()) {
            *d = g * s * (T::one() - s);
        }
        let dhidden = self.fc2.backward(&tape.hidden, &dlogit)?;
        let dsummary = self.fc1.backward(&tape.summary, &dhidden)?;

        let steps = tape.seq.shape()[1];
        let hd = self.gru2.hidden();
        let mut dout2 = Tensor::zeros(&[b, steps, 2 * hd]);
        for bi in 0..b {
            let src = &dsummary.data()[bi * 2 * hd..][..2 * hd];
            let last = (bi * steps + steps - 1) * 2 * hd;
            for j in 0..hd {
                dout2.data_mut()[last + j] = dout2.data()[last + j] + src[j];
            }
            let first = bi * steps * 2 * hd + hd;
            for j in 0..hd {
                dout2.data_mut()[first + j] = dout2.data()[first + j] + src[hd + j];
            }
        }
        let dseq2 = self.gru2.backward(&tape.seq2, &tape.g2, &dout2)?;
        let dseq = self.gru1.backward(&tape.seq, &tape.g1, &dseq2)?;

        let ch = tape.seq.shape()[2];
        let mut drec = Tensor::zeros(tape.rec_out.shape());
        for bi in 0..b {
            for ci in 0..ch {
                for t in 0..steps {
                    drec.data_mut()[(bi * ch + ci) * steps + t] = dseq.data()[(bi * steps + t) * ch + ci];
                }
            }
        }
        Activation::Selu.backward_inplace(&tape.rec_out, &mut drec);
        let d = self.pre_recurrent_norm.backward(&tape.rec, &drec)?;
        let d = self.fms3.backward(&tape.f3, &d)?;
        let d = self.block3.backward(&tape.b3, &d)?;
        let d = self.fms2.backward(&tape.f2, &d)?;
        let d = self.block2.backward(&tape.b2, &d)?;
        let d = self.fms1.backward(&tape.f1, &d)?;
        let mut d = self.block1.backward(&tape.b1, &d)?;
        Activation::Selu.backward_inplace(&tape.pre_out, &mut d);
        self.pre_norm.backward(&tape.pre, &d)?;
        Ok(())
    }
}

/// `[B, C, 1, T]` -> `[B, T, C]`.
fn to_sequence<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, ch, fh, steps) = x.dims4()?;
    if fh != 1 {
        return Err(Error::ShapeMismatch(format!("frequency axis must reduce to 1, got {fh}")));
    }
    let mut seq = Tensor::zeros(&[b, steps, ch]);
    for bi in 0..b {
        for ci in 0..ch {
            for t in 0..steps {
                seq.data_mut()[(bi * steps + t) * ch + ci] = x.data()[(bi * ch + ci) * steps + t];
            }
        }
    }
    Ok(seq)
}

/// Forward state after the last step next to backward state after the
/// first, each `hidden` wide.
fn final_states<T: Scalar>(out: &Tensor<T>, hidden: usize) -> Tensor<T> {
    let (b, steps) = (out.shape()[0], out.shape()[1]);
    let mut summary = Tensor::zeros(&[b, 2 * hidden]);
    for bi in 0..b {
        let last = &out.data()[(bi * steps + steps - 1) * 2 * hidden..][..hidden];
        let first = &out.data()[bi * steps * 2 * hidden + hidden..][..hidden];
        summary.data_mut()[bi * 2 * hidden..][..hidden].copy_from_slice(last);
        summary.data_mut()[bi * 2 * hidden + hidden..][..hidden].copy_from_slice(first);
    }
    summary
}

fn to_scores<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    Tensor::from_vec(&[logits.shape()[0]], logits.data().iter().map(|&v| sigmoid(v)).collect())
}

/// Sum of element counts over the trainable entries of `params`.
pub fn count_parameters<'a, T: Scalar>(params: impl IntoIterator<Item = &'a Param<T>>) -> usize {
    params.into_iter().filter(|p| p.trainable).map(|p| p.numel()).sum()
}
