use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{images_to_tensor, Model};
use crate::audio::Label;
use crate::error::{Error, Result};
use crate::features::FeatureRecord;
use crate::tensor::optim::{Adam, ADAM_LR};
use crate::tensor::{ops, Tensor, Var};

pub const HISTORY_HEADER: &str = "epoch,loss,acc,seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 100,
            lr: ADAM_LR,
            seed: 0,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.3}",
            self.epoch, self.loss, self.acc, self.seconds
        )
    }
}

/// Shuffled mini-batches of `0..n`. The final short batch is kept, except
/// that a lone trailing sample joins the previous batch (batch norm needs
/// two samples).
pub fn batch_plan(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

/// Inverse-frequency weights indexed by class (spoof, bonafide), so each
/// class contributes equally.
pub fn class_weights(labels: &[Label]) -> [f64; 2] {
    let n = labels.len() as f64;
    let mut counts = [0usize; 2];
    for l in labels {
        counts[l.class_index()] += 1;
    }
    counts.map(|c| if c == 0 { 0.0 } else { n / (2.0 * c as f64) })
}

/// Trains with cross-entropy and Adam. `on_epoch` sees each finished epoch.
pub fn train(
    model: &Model,
    records: &[FeatureRecord],
    tcfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    tcfg.validate()?;
    if records.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    let n_bona = labels.iter().filter(|&&l| l == Label::Bonafide).count();
    if n_bona == 0 || n_bona == labels.len() {
        return Err(Error::Data(format!(
            "training set holds a single class ({n_bona} bonafide, {} spoof); both are required",
            labels.len() - n_bona
        )));
    }
    let expect = model.config().input_shape();
    let images: Vec<_> = records.iter().map(|r| &r.image).collect();
    let all = images_to_tensor(&images, expect)?;
    let sample_len = expect.0 * expect.1 * expect.2;
    let class_idx: Vec<usize> = labels.iter().map(|l| l.class_index()).collect();
    let weights: Option<Vec<f32>> = tcfg
        .class_weighting
        .then(|| class_weights(&labels).iter().map(|&w| w as f32).collect());

    let mut opt = Adam::new(model.params(), tcfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut history = Vec::with_capacity(tcfg.epochs);
    for epoch in 1..=tcfg.epochs {
        let start = Instant::now();
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in batch_plan(records.len(), tcfg.batch_size, &mut rng) {
            let mut data = Vec::with_capacity(batch.len() * sample_len);
            for &i in &batch {
                data.extend_from_slice(&all.data()[i * sample_len..(i + 1) * sample_len]);
            }
            let x = Var::constant(Tensor::from_vec(
                &[batch.len(), expect.2, expect.0, expect.1],
                data,
            )?);
            let y: Vec<usize> = batch.iter().map(|&i| class_idx[i]).collect();
            let logits = model.forward(&x, true)?;
            let loss = ops::cross_entropy(&logits, &y, weights.as_deref())?;
            let lv = loss.item() as f64;
            if !lv.is_finite() {
                return Err(Error::Numeric(format!("loss became {lv} in epoch {epoch}")));
            }
            loss_sum += lv * batch.len() as f64;
            {
                let z = logits.value();
                for (row, &t) in z.data().chunks(2).zip(&y) {
                    let pred = usize::from(row[1] > row[0]);
                    correct += usize::from(pred == t);
                }
            }
            loss.backward()?;
            opt.step();
        }
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / records.len() as f64,
            acc: correct as f64 / records.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        history.push(rec);
    }
    Ok(history)
}
