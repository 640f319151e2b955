use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{load_tensors, save_tensors};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Shape of the hypernetwork.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// External word-vector dimension `D_w`.
    pub input_dim: usize,
    /// Hidden size per LSTM direction; also the input-projection width.
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Coordinate dimension `D′`.
    pub output_dim: usize,
    pub dropout: f64,
}

impl Architecture {
    pub fn param_count(&self) -> usize {
        let h = self.hidden_dim;
        let proj = self.input_dim * h + h;
        let lstm: usize = (0..self.num_layers)
            .map(|l| {
                let d_in = if l == 0 { h } else { 2 * h };
                2 * (4 * h * d_in + 4 * h * h + 4 * h)
            })
            .sum();
        let head = self.output_dim * 2 * h + self.output_dim;
        proj + lstm + head
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("degenerate architecture {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Gate blocks are stacked in the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// `4H × d_in`
    pub w_ih: Matrix,
    /// `4H × H`
    pub w_hh: Matrix,
    /// `4H × 1`
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLayer {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

/// All trainable tensors of the BiLSTM hypernetwork. Gradients use the same
/// struct.
#[derive(Debug, Clone, PartialEq)]
pub struct HypernetParams {
    pub arch: Architecture,
    /// `H × D_w`
    pub input_w: Matrix,
    /// `H × 1`
    pub input_b: Matrix,
    pub layers: Vec<BiLayer>,
    /// `D′ × 2H`
    pub head_w: Matrix,
    /// `D′ × 1`
    pub head_b: Matrix,
}

impl HypernetParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let h = arch.hidden_dim;
        let dir = |d_in| LstmDirection {
            w_ih: Matrix::zeros(4 * h, d_in),
            w_hh: Matrix::zeros(4 * h, h),
            bias: Matrix::zeros(4 * h, 1),
        };
        let layers = (0..arch.num_layers)
            .map(|l| {
                let d_in = if l == 0 { h } else { 2 * h };
                BiLayer {
                    forward: dir(d_in),
                    backward: dir(d_in),
                }
            })
            .collect();
        Ok(Self {
            arch,
            input_w: Matrix::zeros(h, arch.input_dim),
            input_b: Matrix::zeros(h, 1),
            layers,
            head_w: Matrix::zeros(arch.output_dim, 2 * h),
            head_b: Matrix::zeros(arch.output_dim, 1),
        })
    }

    /// Uniform `±1/√fan` initialization: fan is the input width for the
    /// linear layers and `H` for the recurrent blocks.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = arch.hidden_dim as f64;
        let mut fill = |m: &mut Matrix, bound: f64| {
            for v in m.as_mut_slice() {
                *v = rng.random_range(-bound..=bound);
            }
        };
        let in_bound = 1.0 / (arch.input_dim as f64).sqrt();
        fill(&mut p.input_w, in_bound);
        fill(&mut p.input_b, in_bound);
        let k = 1.0 / h.sqrt();
        for layer in &mut p.layers {
            for dir in [&mut layer.forward, &mut layer.backward] {
                fill(&mut dir.w_ih, k);
                fill(&mut dir.w_hh, k);
                fill(&mut dir.bias, k);
            }
        }
        let head_bound = 1.0 / (2.0 * h).sqrt();
        fill(&mut p.head_w, head_bound);
        fill(&mut p.head_b, head_bound);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch).expect("architecture already validated")
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("input.weight".to_string(), &self.input_w),
            ("input.bias".to_string(), &self.input_b),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (tag, dir) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                out.push((format!("lstm.{l}.{tag}.w_ih"), &dir.w_ih));
                out.push((format!("lstm.{l}.{tag}.w_hh"), &dir.w_hh));
                out.push((format!("lstm.{l}.{tag}.bias"), &dir.bias));
            }
        }
        out.push(("head.weight".to_string(), &self.head_w));
        out.push(("head.bias".to_string(), &self.head_b));
        out
    }

    /// Same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.input_w, &mut self.input_b];
        for layer in &mut self.layers {
            for dir in [&mut layer.forward, &mut layer.backward] {
                out.push(&mut dir.w_ih);
                out.push(&mut dir.w_hh);
                out.push(&mut dir.bias);
            }
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &HypernetParams) {
        let src: Vec<&Matrix> = other.tensors().into_iter().map(|(_, m)| m).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            crate::linalg::axpy(alpha, s.as_slice(), dst.as_mut_slice());
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = Matrix::from_vec(1, 1, vec![self.arch.dropout])?;
        let mut tensors = self.tensors();
        tensors.push(("meta.dropout".to_string(), &meta));
        save_tensors(&tensors, path)
    }

    /// Rebuilds the architecture from tensor shapes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let tensors = load_tensors(path)?;
        let get = |name: &str| -> Result<&Matrix> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("missing tensor {name}"),
                })
        };
        let input_w = get("input.weight")?;
        let head_w = get("head.weight")?;
        let num_layers = tensors
            .iter()
            .filter(|(n, _)| n.starts_with("lstm.") && n.ends_with(".fwd.w_ih"))
            .count();
        let arch = Architecture {
            input_dim: input_w.cols(),
            hidden_dim: input_w.rows(),
            num_layers,
            output_dim: head_w.rows(),
            dropout: get("meta.dropout")?.as_slice()[0],
        };
        let mut params = Self::zeros(arch)?;
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        for (name, dst) in names.iter().zip(params.tensors_mut()) {
            let src = get(name)?;
            if src.shape() != dst.shape() {
                return Err(Error::Shape(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        if !params.is_finite() {
            return Err(Error::NonFiniteMatrix);
        }
        Ok(params)
    }
}
