//! Learnable state: the two modality encoders, the label transform net,
//! the common/individual projections and the unified code matrix.

mod checkpoint;
mod net;

pub use net::{Activation, FeedForwardNet, Layer, NetCache, NetGradients};

use crate::error::{Error, Result};
use crate::numerics::{matmul, sign_matrix, DenseMatrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Image,
    Text,
}

impl Modality {
    pub fn index(self) -> u8 {
        match self {
            Modality::Image => 1,
            Modality::Text => 2,
        }
    }
}

impl TryFrom<u8> for Modality {
    type Error = Error;

    fn try_from(m: u8) -> Result<Self> {
        match m {
            1 => Ok(Modality::Image),
            2 => Ok(Modality::Text),
            other => Err(Error::Invalid(format!(
                "modality must be 1 or 2, got {other}"
            ))),
        }
    }
}

/// Dimensions needed to build a fresh model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelShape {
    /// Image feature dimension.
    pub d1: usize,
    /// Text feature dimension.
    pub d2: usize,
    /// Semantic vector dimension.
    pub v: usize,
    /// Common feature dimension produced by all three nets.
    pub feature_dim: usize,
    pub code_len: usize,
    /// Number of training instances (columns of the code matrix).
    pub n_train: usize,
    pub hidden: Vec<usize>,
    /// L2-normalize each text column before the text net.
    pub normalize_text: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaehModel {
    pub image_net: FeedForwardNet,
    pub text_net: FeedForwardNet,
    pub transform_net: FeedForwardNet,
    /// Common projection `C` (`c x d`).
    pub c_proj: DenseMatrix,
    /// Image-specific projection `D1` (`c x d`).
    pub d1_proj: DenseMatrix,
    /// Text-specific projection `D2` (`c x d`).
    pub d2_proj: DenseMatrix,
    /// Unified training codes `B` (`c x n`), entries in `{-1, +1}`.
    pub codes: DenseMatrix,
    pub normalize_text: bool,
    /// Seed the parameters were initialized from.
    pub seed: u64,
}

/// Features of one batch from all three nets, with their caches.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub image: NetCache,
    pub text: NetCache,
    pub label: NetCache,
}

impl ForwardCache {
    pub fn f1(&self) -> &DenseMatrix {
        self.image.output()
    }

    pub fn f2(&self) -> &DenseMatrix {
        self.text.output()
    }

    pub fn fl(&self) -> &DenseMatrix {
        self.label.output()
    }
}

/// Gradients for every learnable real-valued parameter of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradients {
    pub image: NetGradients,
    pub text: NetGradients,
    pub transform: NetGradients,
    pub c_proj: DenseMatrix,
    pub d1_proj: DenseMatrix,
    pub d2_proj: DenseMatrix,
}

impl ModelGradients {
    /// Same ordering as [`LaehModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.image.flatten_into(&mut out);
        self.text.flatten_into(&mut out);
        self.transform.flatten_into(&mut out);
        out.extend_from_slice(self.c_proj.as_slice());
        out.extend_from_slice(self.d1_proj.as_slice());
        out.extend_from_slice(self.d2_proj.as_slice());
        out
    }
}

impl LaehModel {
    pub fn init(shape: &ModelShape, rng: &mut SeededRng) -> Result<Self> {
        let ModelShape {
            d1,
            d2,
            v,
            feature_dim: d,
            code_len: c,
            n_train,
            ..
        } = *shape;
        if [d1, d2, v, d, c].contains(&0) {
            return Err(Error::Invalid(format!(
                "model dimensions must be positive: {shape:?}"
            )));
        }
        let dims = |input: usize| {
            let mut dims = vec![input];
            dims.extend_from_slice(&shape.hidden);
            dims.push(d);
            dims
        };
        let seed = rng.seed();
        let image_net = FeedForwardNet::new(&dims(d1), rng)?;
        let text_net = FeedForwardNet::new(&dims(d2), rng)?;
        let transform_net = FeedForwardNet::new(&dims(v), rng)?;
        let c_proj = DenseMatrix::random_gaussian(c, d, 0.01, rng);
        let d1_proj = DenseMatrix::random_gaussian(c, d, 0.01, rng);
        let d2_proj = DenseMatrix::random_gaussian(c, d, 0.01, rng);
        let codes = sign_matrix(&DenseMatrix::random_gaussian(c, n_train, 1.0, rng));
        Ok(Self {
            image_net,
            text_net,
            transform_net,
            c_proj,
            d1_proj,
            d2_proj,
            codes,
            normalize_text: shape.normalize_text,
            seed,
        })
    }

    pub fn code_len(&self) -> usize {
        self.c_proj.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.c_proj.cols()
    }

    /// `(P1, P2) = (C + D1, C + D2)`
    pub fn hash_functions(&self) -> (DenseMatrix, DenseMatrix) {
        let p1 = self
            .c_proj
            .add(&self.d1_proj)
            .expect("projections share a shape");
        let p2 = self
            .c_proj
            .add(&self.d2_proj)
            .expect("projections share a shape");
        (p1, p2)
    }

    pub fn net(&self, modality: Modality) -> &FeedForwardNet {
        match modality {
            Modality::Image => &self.image_net,
            Modality::Text => &self.text_net,
        }
    }

    /// Text inputs as the text net sees them.
    pub fn prepare_text(&self, x2: &DenseMatrix) -> DenseMatrix {
        if !self.normalize_text {
            return x2.clone();
        }
        let norms = x2.column_norms();
        DenseMatrix::from_fn(x2.rows(), x2.cols(), |r, c| {
            if norms[c] > 0.0 {
                x2.get(r, c) / norms[c]
            } else {
                0.0
            }
        })
    }

    pub fn forward_features(
        &self,
        x1: &DenseMatrix,
        x2: &DenseMatrix,
        semantics: &DenseMatrix,
    ) -> Result<ForwardCache> {
        if x1.cols() != x2.cols() || x1.cols() != semantics.cols() {
            return Err(Error::Invalid(format!(
                "batch sizes differ: {}, {}, {}",
                x1.cols(),
                x2.cols(),
                semantics.cols()
            )));
        }
        Ok(ForwardCache {
            image: self.image_net.forward(x1)?,
            text: self.text_net.forward(&self.prepare_text(x2))?,
            label: self.transform_net.forward(semantics)?,
        })
    }

    /// Real-valued projections `(C + D_m) F_m` before taking signs.
    pub fn project(&self, raw: &DenseMatrix, modality: Modality) -> Result<DenseMatrix> {
        let features = match modality {
            Modality::Image => self.image_net.forward(raw)?,
            Modality::Text => self.text_net.forward(&self.prepare_text(raw))?,
        };
        let (p1, p2) = self.hash_functions();
        let p = match modality {
            Modality::Image => p1,
            Modality::Text => p2,
        };
        matmul(&p, features.output())
    }

    /// Hash codes (`c x n`, entries `±1`) for raw features of one modality.
    pub fn encode(&self, raw: &DenseMatrix, modality: Modality) -> Result<DenseMatrix> {
        Ok(sign_matrix(&self.project(raw, modality)?))
    }

    pub fn num_params(&self) -> usize {
        self.image_net.num_params()
            + self.text_net.num_params()
            + self.transform_net.num_params()
            + 3 * self.c_proj.as_slice().len()
    }

    /// All real-valued parameters in a fixed order: image net, text net,
    /// transform net, then `C`, `D1`, `D2`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.image_net.flatten_into(&mut out);
        self.text_net.flatten_into(&mut out);
        self.transform_net.flatten_into(&mut out);
        out.extend_from_slice(self.c_proj.as_slice());
        out.extend_from_slice(self.d1_proj.as_slice());
        out.extend_from_slice(self.d2_proj.as_slice());
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut at = self.image_net.unflatten_from(values);
        at += self.text_net.unflatten_from(&values[at..]);
        at += self.transform_net.unflatten_from(&values[at..]);
        for m in [&mut self.c_proj, &mut self.d1_proj, &mut self.d2_proj] {
            let len = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&values[at..at + len]);
            at += len;
        }
        Ok(())
    }
}
