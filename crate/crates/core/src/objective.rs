//! The training objective and its analytic gradients.
//!
//! ```text
//! J = J1 + J3 + Jattr
//! J1    = Σ_m Σ_ij softplus(Φm_ij) - s_ij Φm_ij,   Φm = Fmᵀ Fl
//! J3    = Σ_m α_m ‖B - Pm Fm‖²
//! Jattr = β ‖(P1 F1)ᵀ (P2 F2) - A‖²
//! ```
//!
//! with `Pm = C + Dm`. `A` is the cosine similarity of the label
//! embeddings and is held constant when differentiating.
//!
//! Gradients are derived directly from `J`. Writing `Gm = σ(Φm) - S`,
//! `Rm = Pm Fm - B`, `Hm = Pm Fm` and `M = H1ᵀ H2 - A`:
//!
//! ```text
//! dJ/dFm = Fl Gmᵀ + 2 α_m Pmᵀ Rm + Pmᵀ dJ/dHm
//! dJ/dFl = Σ_m Fm Gm
//! dJ/dPm = 2 α_m Rm Fmᵀ + dJ/dHm Fmᵀ
//! dJ/dH1 = 2β H2 Mᵀ,  dJ/dH2 = 2β H1 M
//! dJ/dC  = dJ/dP1 + dJ/dP2,  dJ/dDm = dJ/dPm
//! ```

use crate::data::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::model::{LaehModel, ModelGradients};
use crate::numerics::{
    cosine, frobenius_sq, matmul, matmul_nt, matmul_tn, sigmoid, softplus, DenseMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    /// Scale the code inner-product matrix by `1/c` in the attribute term.
    pub scale_attr: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            beta: 1.0,
            scale_attr: false,
        }
    }
}

impl LossWeights {
    pub fn new(alpha1: f64, alpha2: f64, beta: f64) -> Result<Self> {
        let w = Self {
            alpha1,
            alpha2,
            beta,
            scale_attr: false,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta", self.beta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn attr_scale(&self, code_len: usize) -> f64 {
        if self.scale_attr {
            1.0 / code_len as f64
        } else {
            1.0
        }
    }
}

/// Cosine similarity between label embeddings (`n x n`).
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSimilarity {
    a: DenseMatrix,
}

impl AttributeSimilarity {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn len(&self) -> usize {
        self.a.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            a: self.a.select(idx, idx),
        }
    }

    /// Wraps an arbitrary square matrix; used for hand-built fixtures.
    pub fn from_matrix(a: DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::shape(
                "attribute similarity",
                a.shape(),
                (a.rows(), a.rows()),
            ));
        }
        Ok(Self { a })
    }
}

pub fn attribute_similarity(f_label: &DenseMatrix) -> Result<AttributeSimilarity> {
    let cols: Vec<Vec<f64>> = (0..f_label.cols()).map(|j| f_label.column(j)).collect();
    for (j, norm) in f_label.column_norms().into_iter().enumerate() {
        if norm == 0.0 {
            return Err(Error::ZeroNorm(format!("label embedding column {j}")));
        }
    }
    let n = cols.len();
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = cosine(&cols[i], &cols[j])?;
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    Ok(AttributeSimilarity { a })
}

/// Values of the three optimized terms and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub j1: f64,
    pub j3: f64,
    pub j_attr: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(j1: f64, j3: f64, j_attr: f64) -> Self {
        Self {
            j1,
            j3,
            j_attr,
            total: j1 + j3 + j_attr,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

fn check_features(f1: &DenseMatrix, f2: &DenseMatrix, fl: &DenseMatrix) -> Result<()> {
    f1.check_same_shape(f2, "features")?;
    f1.check_same_shape(fl, "features")
}

fn check_square(n: usize, m: &DenseMatrix, op: &'static str) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::shape(op, (n, n), m.shape()));
    }
    Ok(())
}

/// Pairwise likelihood term.
pub fn loss_j1(
    f1: &DenseMatrix,
    f2: &DenseMatrix,
    fl: &DenseMatrix,
    s: &SimilarityMatrix,
) -> Result<f64> {
    check_features(f1, f2, fl)?;
    check_square(f1.cols(), s.matrix(), "similarity")?;
    let mut total = 0.0;
    for f in [f1, f2] {
        let phi = matmul_tn(f, fl)?;
        total += phi
            .as_slice()
            .iter()
            .zip(s.matrix().as_slice())
            .map(|(&p, &sij)| softplus(p) - sij * p)
            .sum::<f64>();
    }
    Ok(total)
}

/// Weighted code approximation term.
pub fn loss_j3(
    b: &DenseMatrix,
    p1: &DenseMatrix,
    p2: &DenseMatrix,
    f1: &DenseMatrix,
    f2: &DenseMatrix,
    w: &LossWeights,
) -> Result<f64> {
    let r1 = matmul(p1, f1)?.sub(b)?;
    let r2 = matmul(p2, f2)?.sub(b)?;
    Ok(w.alpha1 * frobenius_sq(&r1) + w.alpha2 * frobenius_sq(&r2))
}

/// Attribute similarity term, `β ‖(P1 F1)ᵀ (P2 F2) - A‖²`.
pub fn loss_attr(
    p1: &DenseMatrix,
    p2: &DenseMatrix,
    f1: &DenseMatrix,
    f2: &DenseMatrix,
    a: &AttributeSimilarity,
    w: &LossWeights,
) -> Result<f64> {
    let h1 = matmul(p1, f1)?;
    let h2 = matmul(p2, f2)?;
    let m = attr_residual(&h1, &h2, a, w)?;
    Ok(w.beta * frobenius_sq(&m))
}

fn attr_residual(
    h1: &DenseMatrix,
    h2: &DenseMatrix,
    a: &AttributeSimilarity,
    w: &LossWeights,
) -> Result<DenseMatrix> {
    let k = w.attr_scale(h1.rows());
    let inner = matmul_tn(h1, h2)?;
    check_square(inner.rows(), a.matrix(), "attribute similarity")?;
    inner.zip_with(a.matrix(), "attr residual", |x, y| k * x - y)
}

/// `‖(1/c) BᵀB - A‖²`, reported for monitoring only.
pub fn loss_j2_diagnostic(b: &DenseMatrix, a: &AttributeSimilarity) -> Result<f64> {
    let c = b.rows() as f64;
    let gram = matmul_tn(b, b)?;
    check_square(gram.rows(), a.matrix(), "attribute similarity")?;
    Ok(frobenius_sq(
        &gram.zip_with(a.matrix(), "j2", |x, y| x / c - y)?,
    ))
}

/// Everything the objective depends on for one batch.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveInputs<'a> {
    pub f1: &'a DenseMatrix,
    pub f2: &'a DenseMatrix,
    pub fl: &'a DenseMatrix,
    pub codes: &'a DenseMatrix,
    pub p1: &'a DenseMatrix,
    pub p2: &'a DenseMatrix,
    pub s: &'a SimilarityMatrix,
    pub a: &'a AttributeSimilarity,
    pub weights: LossWeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGradients {
    pub f1: DenseMatrix,
    pub f2: DenseMatrix,
    pub fl: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionGradients {
    pub c: DenseMatrix,
    pub d1: DenseMatrix,
    pub d2: DenseMatrix,
}

struct Intermediates {
    g1: DenseMatrix,
    g2: DenseMatrix,
    r1: DenseMatrix,
    r2: DenseMatrix,
    /// dJ/dH1 and dJ/dH2 from the attribute term.
    dh1: DenseMatrix,
    dh2: DenseMatrix,
}

impl<'a> ObjectiveInputs<'a> {
    fn check(&self) -> Result<()> {
        check_features(self.f1, self.f2, self.fl)?;
        let n = self.f1.cols();
        check_square(n, self.s.matrix(), "similarity")?;
        check_square(n, self.a.matrix(), "attribute similarity")?;
        self.p1.check_same_shape(self.p2, "projections")?;
        if self.p1.cols() != self.f1.rows() {
            return Err(Error::shape(
                "projection x feature",
                self.p1.shape(),
                self.f1.shape(),
            ));
        }
        if self.codes.shape() != (self.p1.rows(), n) {
            return Err(Error::shape(
                "codes",
                (self.p1.rows(), n),
                self.codes.shape(),
            ));
        }
        Ok(())
    }

    pub fn loss(&self) -> Result<LossBreakdown> {
        self.check()?;
        let w = &self.weights;
        Ok(LossBreakdown::new(
            loss_j1(self.f1, self.f2, self.fl, self.s)?,
            loss_j3(self.codes, self.p1, self.p2, self.f1, self.f2, w)?,
            loss_attr(self.p1, self.p2, self.f1, self.f2, self.a, w)?,
        ))
    }

    fn intermediates(&self) -> Result<Intermediates> {
        self.check()?;
        let w = &self.weights;
        let s = self.s.matrix();
        let g = |f: &DenseMatrix| -> Result<DenseMatrix> {
            matmul_tn(f, self.fl)?.zip_with(s, "likelihood grad", |p, sij| sigmoid(p) - sij)
        };
        let h1 = matmul(self.p1, self.f1)?;
        let h2 = matmul(self.p2, self.f2)?;
        let m = attr_residual(&h1, &h2, self.a, w)?;
        let k = 2.0 * w.beta * w.attr_scale(h1.rows());
        Ok(Intermediates {
            g1: g(self.f1)?,
            g2: g(self.f2)?,
            dh1: matmul_nt(&h2, &m)?.scale(k),
            dh2: matmul(&h1, &m)?.scale(k),
            r1: h1.sub(self.codes)?,
            r2: h2.sub(self.codes)?,
        })
    }

    pub fn grad_features(&self) -> Result<FeatureGradients> {
        let it = self.intermediates()?;
        let w = &self.weights;
        let feature_grad =
            |g: &DenseMatrix, p: &DenseMatrix, r: &DenseMatrix, alpha: f64, dh: &DenseMatrix| {
                let mut out = matmul_nt(self.fl, g)?;
                out.add_scaled(2.0 * alpha, &matmul_tn(p, r)?)?;
                out.add_scaled(1.0, &matmul_tn(p, dh)?)?;
                Ok::<_, Error>(out)
            };
        let f1 = feature_grad(&it.g1, self.p1, &it.r1, w.alpha1, &it.dh1)?;
        let f2 = feature_grad(&it.g2, self.p2, &it.r2, w.alpha2, &it.dh2)?;
        let mut fl = matmul(self.f1, &it.g1)?;
        fl.add_scaled(1.0, &matmul(self.f2, &it.g2)?)?;
        Ok(FeatureGradients { f1, f2, fl })
    }

    pub fn grad_projections(&self) -> Result<ProjectionGradients> {
        let it = self.intermediates()?;
        let w = &self.weights;
        let mut d1 = matmul_nt(&it.r1, self.f1)?.scale(2.0 * w.alpha1);
        d1.add_scaled(1.0, &matmul_nt(&it.dh1, self.f1)?)?;
        let mut d2 = matmul_nt(&it.r2, self.f2)?.scale(2.0 * w.alpha2);
        d2.add_scaled(1.0, &matmul_nt(&it.dh2, self.f2)?)?;
        let c = d1.add(&d2)?;
        Ok(ProjectionGradients { c, d1, d2 })
    }
}

/// Raw inputs for one batch: features of both modalities, per-instance
/// semantic vectors and the batch's columns of `B`.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub x1: &'a DenseMatrix,
    pub x2: &'a DenseMatrix,
    pub semantics: &'a DenseMatrix,
    pub codes: &'a DenseMatrix,
    pub s: &'a SimilarityMatrix,
    pub a: &'a AttributeSimilarity,
}

/// Total objective at the model's current parameters.
pub fn model_loss(model: &LaehModel, batch: &Batch<'_>, w: LossWeights) -> Result<LossBreakdown> {
    let cache = model.forward_features(batch.x1, batch.x2, batch.semantics)?;
    let (p1, p2) = model.hash_functions();
    ObjectiveInputs {
        f1: cache.f1(),
        f2: cache.f2(),
        fl: cache.fl(),
        codes: batch.codes,
        p1: &p1,
        p2: &p2,
        s: batch.s,
        a: batch.a,
        weights: w,
    }
    .loss()
}

/// Loss and gradients for every real-valued parameter, chaining the
/// feature gradients through each net.
pub fn model_gradients(
    model: &LaehModel,
    batch: &Batch<'_>,
    w: LossWeights,
) -> Result<(LossBreakdown, ModelGradients)> {
    let cache = model.forward_features(batch.x1, batch.x2, batch.semantics)?;
    let (p1, p2) = model.hash_functions();
    let inputs = ObjectiveInputs {
        f1: cache.f1(),
        f2: cache.f2(),
        fl: cache.fl(),
        codes: batch.codes,
        p1: &p1,
        p2: &p2,
        s: batch.s,
        a: batch.a,
        weights: w,
    };
    let loss = inputs.loss()?;
    let fg = inputs.grad_features()?;
    let pg = inputs.grad_projections()?;
    let grads = ModelGradients {
        image: model.image_net.backprop(&cache.image, &fg.f1)?,
        text: model.text_net.backprop(&cache.text, &fg.f2)?,
        transform: model.transform_net.backprop(&cache.label, &fg.fl)?,
        c_proj: pg.c,
        d1_proj: pg.d1,
        d2_proj: pg.d2,
    };
    Ok((loss, grads))
}

/// Worst relative error between `analytic` and central differences of
/// `loss` around `params`, with denominators floored at `1e-8`.
///
/// Panics if the lengths differ or `h` is outside `[1e-7, 1e-3]`.
pub fn finite_diff_check(
    mut loss: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(
        params.len(),
        analytic.len(),
        "one analytic entry per parameter"
    );
    assert!((1e-7..=1e-3).contains(&h), "step {h} outside [1e-7, 1e-3]");
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
