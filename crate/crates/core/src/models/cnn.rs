use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

use super::ModelConfig;
use crate::error::Result;
use crate::tensor::nn::{BatchNorm2d, Conv2d, Linear, Param};
use crate::tensor::{ops, Var};

/// Convolutional layers run conv -> batch norm -> max pool -> ReLU; the last
/// layer skips the pool. Then flatten and a linear head.
pub struct CnnBody {
    pub convs: Vec<Conv2d>,
    pub norms: Vec<BatchNorm2d>,
    pub head: Linear,
}

/// Spatial size after `pools` 2x2 ceil-mode pools.
fn pooled(mut n: usize, pools: usize) -> usize {
    for _ in 0..pools {
        n = n.div_ceil(2);
    }
    n
}

impl CnnBody {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let mut cin = cfg.body_channels();
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, &cout) in cfg.cnn_channels.iter().enumerate() {
            convs.push(Conv2d::new(
                &format!("cnn.conv{i}"),
                cin,
                cout,
                cfg.cnn_kernel,
                rng,
            ));
            norms.push(BatchNorm2d::new(&format!("cnn.bn{i}"), cout));
            cin = cout;
        }
        let pools = cfg.cnn_channels.len() - 1;
        let flat = cin * pooled(cfg.input_height, pools) * pooled(cfg.input_width, pools);
        CnnBody {
            convs,
            norms,
            head: Linear::new("cnn.head", flat, cfg.classes, rng),
        }
    }

    pub fn forward(&self, x: &Var, train: bool) -> Result<Var> {
        let last = self.convs.len() - 1;
        let mut h = x.clone();
        for (i, (conv, bn)) in self.convs.iter().zip(&self.norms).enumerate() {
            h = bn.forward(&conv.forward(&h)?, train)?;
            if i < last {
                h = ops::max_pool2d(&h)?;
            }
            h = ops::relu(&h);
        }
        self.head.forward(&ops::flatten(&h)?)
    }

    pub fn params(&self, out: &mut Vec<Param>) {
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            conv.params(out);
            bn.params(out);
        }
        self.head.params(out);
    }

    pub fn buffers(&self) -> Vec<(String, Rc<RefCell<Vec<f32>>>)> {
        self.norms
            .iter()
            .flat_map(|bn| {
                [
                    (format!("{}.running_mean", bn.name), bn.stats.mean.clone()),
                    (format!("{}.running_var", bn.name), bn.stats.var.clone()),
                ]
            })
            .collect()
    }
}
