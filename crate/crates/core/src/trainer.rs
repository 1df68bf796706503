//! Alternating optimization.
//!
//! Each epoch runs, in order: the image-net, text-net and transform-net
//! steps (gradient through the features, then backprop), the `D1`, `D2`
//! and `C` steps, the closed-form code step, and finally recomputes the
//! attribute similarity from the current label embeddings. Every other
//! block is held fixed while one block moves.

use std::fmt::{self, Write as _};
use std::time::Instant;

use crate::data::{build_similarity, PairedDataset, SimilarityMatrix, ZeroShotSplit};
use crate::error::{Error, Result};
use crate::kv::join_list;
use crate::model::{LaehModel, ModelShape, NetCache};
use crate::numerics::{frobenius_sq, matmul, sign_matrix, DenseMatrix, SeededRng};
use crate::objective::{
    attribute_similarity, loss_j2_diagnostic, AttributeSimilarity, LossBreakdown, LossWeights,
    ObjectiveInputs,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub code_len: usize,
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    /// Instances per step; 0 uses the whole training set.
    pub batch_size: usize,
    /// Gradient steps per parameter block per epoch.
    pub inner_iters: usize,
    pub seed: u64,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub normalize_text: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            code_len: 64,
            feature_dim: 128,
            hidden: vec![512, 512],
            learning_rate: 0.01,
            lr_decay: 0.98,
            epochs: 30,
            batch_size: 0,
            inner_iters: 1,
            seed: 0,
            clip_norm: Some(10.0),
            normalize_text: false,
        }
    }
}

impl TrainConfig {
    /// Narrow nets, ten steps per block and the `1/c` attribute scaling.
    /// Learns distinct per-class codes on small synthetic sets in seconds,
    /// where the defaults take only one clipped step per block per epoch.
    pub fn compact(code_len: usize, seed: u64) -> Self {
        Self {
            weights: LossWeights {
                scale_attr: true,
                ..LossWeights::default()
            },
            code_len,
            feature_dim: 32,
            hidden: vec![128],
            inner_iters: 10,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let bad = |msg: String| Err(Error::Invalid(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return bad(format!("lr decay must be > 0, got {}", self.lr_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.code_len == 0 || self.feature_dim == 0 || self.inner_iters == 0 {
            return bad("code length, feature dim and inner iterations must be >= 1".into());
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return bad(format!("clip norm must be > 0, got {c}"));
            }
        }
        Ok(())
    }

    /// `key=value` pairs written at the top of the training log.
    pub fn describe(&self) -> Vec<(&'static str, String)> {
        vec![
            ("alpha1", self.weights.alpha1.to_string()),
            ("alpha2", self.weights.alpha2.to_string()),
            ("beta", self.weights.beta.to_string()),
            ("scale_attr", self.weights.scale_attr.to_string()),
            ("bits", self.code_len.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("hidden", join_list(&self.hidden)),
            ("lr", self.learning_rate.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("inner_iters", self.inner_iters.to_string()),
            ("seed", self.seed.to_string()),
            (
                "clip_norm",
                self.clip_norm
                    .map_or_else(|| "none".into(), |c| c.to_string()),
            ),
            ("normalize_text", self.normalize_text.to_string()),
        ]
    }
}

/// One parameter-block update of the alternating scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    ImageNet,
    TextNet,
    TransformNet,
    ImageProjection,
    TextProjection,
    CommonProjection,
    Codes,
    AttributeRefresh,
}

impl Step {
    /// Execution order within an epoch.
    pub const ORDER: [Step; 8] = [
        Step::ImageNet,
        Step::TextNet,
        Step::TransformNet,
        Step::ImageProjection,
        Step::TextProjection,
        Step::CommonProjection,
        Step::Codes,
        Step::AttributeRefresh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::ImageNet => "theta_x",
            Step::TextNet => "theta_y",
            Step::TransformNet => "theta_l",
            Step::ImageProjection => "D1",
            Step::TextProjection => "D2",
            Step::CommonProjection => "C",
            Step::Codes => "B",
            Step::AttributeRefresh => "A",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective on the full training set after the epoch, with the
    /// refreshed attribute similarity.
    pub loss: LossBreakdown,
    /// Unrelaxed code loss `‖BᵀB/c - A‖²`, for monitoring.
    pub j2: f64,
    pub b_flips: usize,
    pub clipped_steps: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Every executed step, in order, tagged with its epoch.
    pub trace: Vec<(usize, Step)>,
}

impl TrainLog {
    /// Comment header with the configuration, a column header, then
    /// `epoch,j1,j3,j_attr,total,b_flips,seconds` per epoch.
    pub fn to_csv(&self, config: &TrainConfig) -> String {
        let mut out = String::new();
        let header: Vec<String> = config
            .describe()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "# {}", header.join(" "));
        out.push_str("epoch,j1,j3,j_attr,total,b_flips,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                e.epoch, e.loss.j1, e.loss.j3, e.loss.j_attr, e.loss.total, e.b_flips, e.seconds
            );
        }
        out
    }
}

/// `B = sgn(α1 P1 F1 + α2 P2 F2)`, the exact minimizer of
/// `Σ_m α_m ‖B - Pm Fm‖²` over `B ∈ {-1, +1}^{c x n}`.
pub fn update_b(
    p1: &DenseMatrix,
    p2: &DenseMatrix,
    f1: &DenseMatrix,
    f2: &DenseMatrix,
    w: &LossWeights,
) -> Result<DenseMatrix> {
    let h1 = matmul(p1, f1)?;
    let h2 = matmul(p2, f2)?;
    let combined = h1.zip_with(&h2, "update_b", |a, b| w.alpha1 * a + w.alpha2 * b)?;
    Ok(sign_matrix(&combined))
}

/// `p <- p - lr * g`
pub fn sgd_step(params: &mut DenseMatrix, grads: &DenseMatrix, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Invalid(format!(
            "learning rate must be >= 0, got {lr}"
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    params.add_scaled(-lr, grads)
}

/// Attribute similarity of the training instances under the current
/// transform net.
pub fn refresh_attribute_matrix(
    model: &LaehModel,
    dataset: &PairedDataset,
    split: &ZeroShotSplit,
) -> Result<AttributeSimilarity> {
    let v = dataset.instance_semantics(&split.train_idx);
    let fl = model.transform_net.forward(&v)?;
    attribute_similarity(fl.output())
}

struct TrainingData {
    x1: DenseMatrix,
    x2: DenseMatrix,
    semantics: DenseMatrix,
    s: SimilarityMatrix,
}

impl TrainingData {
    fn n(&self) -> usize {
        self.x1.cols()
    }
}

/// Net outputs for the current batch: image, text, label.
type Caches = [Option<NetCache>; 3];

struct Trainer<'a> {
    config: &'a TrainConfig,
    data: TrainingData,
    model: LaehModel,
    a: AttributeSimilarity,
    batch_rng: SeededRng,
    /// Full-batch caches, invalidated whenever their net changes.
    full: Caches,
    log: TrainLog,
}

fn diverged(epoch: usize, step: Step) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Diverged {
            epoch,
            step: step.name(),
        },
        other => other,
    }
}

fn clip(norm_sq: f64, limit: Option<f64>) -> Option<f64> {
    let norm = norm_sq.sqrt();
    match limit {
        Some(c) if norm > c => Some(c / norm),
        _ => None,
    }
}

impl<'a> Trainer<'a> {
    fn fill_full(&mut self) -> Result<()> {
        let m = &self.model;
        if self.full[0].is_none() {
            self.full[0] = Some(m.image_net.forward(&self.data.x1)?);
        }
        if self.full[1].is_none() {
            self.full[1] = Some(m.text_net.forward(&m.prepare_text(&self.data.x2))?);
        }
        if self.full[2].is_none() {
            self.full[2] = Some(m.transform_net.forward(&self.data.semantics)?);
        }
        Ok(())
    }

    fn sample_batch(&mut self) -> Option<Vec<usize>> {
        let n = self.data.n();
        let b = self.config.batch_size;
        if b == 0 || b >= n {
            return None;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        self.batch_rng.shuffle(&mut idx);
        idx.truncate(b);
        idx.sort_unstable();
        Some(idx)
    }

    /// Runs one update of `step` and reports whether clipping fired.
    fn run_step(&mut self, step: Step, lr: f64) -> Result<bool> {
        let batch = self.sample_batch();
        let local: [NetCache; 3];
        let sub: Option<(DenseMatrix, SimilarityMatrix, AttributeSimilarity)>;
        let caches: [&NetCache; 3] = match &batch {
            None => {
                self.fill_full()?;
                sub = None;
                let [a, b, c] = &self.full;
                [a.as_ref(), b.as_ref(), c.as_ref()].map(|c| c.expect("filled"))
            }
            Some(idx) => {
                let m = &self.model;
                local = [
                    m.image_net.forward(&self.data.x1.select_columns(idx))?,
                    m.text_net
                        .forward(&m.prepare_text(&self.data.x2.select_columns(idx)))?,
                    m.transform_net
                        .forward(&self.data.semantics.select_columns(idx))?,
                ];
                sub = Some((
                    self.model.codes.select_columns(idx),
                    self.data.s.select(idx),
                    self.a.select(idx),
                ));
                [&local[0], &local[1], &local[2]]
            }
        };
        let (codes, s, a) = match &sub {
            Some((c, s, a)) => (c, s, a),
            None => (&self.model.codes, &self.data.s, &self.a),
        };
        let (p1, p2) = self.model.hash_functions();
        let inputs = ObjectiveInputs {
            f1: caches[0].output(),
            f2: caches[1].output(),
            fl: caches[2].output(),
            codes,
            p1: &p1,
            p2: &p2,
            s,
            a,
            weights: self.config.weights,
        };

        let limit = self.config.clip_norm;
        let clipped = match step {
            Step::ImageNet | Step::TextNet | Step::TransformNet => {
                let fg = inputs.grad_features()?;
                let (slot, grad_out) = match step {
                    Step::ImageNet => (0, fg.f1),
                    Step::TextNet => (1, fg.f2),
                    _ => (2, fg.fl),
                };
                let net = match slot {
                    0 => &self.model.image_net,
                    1 => &self.model.text_net,
                    _ => &self.model.transform_net,
                };
                let mut grads = net.backprop(caches[slot], &grad_out)?;
                if !grads.is_finite() {
                    return Err(Error::NonFinite("gradient"));
                }
                let factor = clip(grads.norm_sq(), limit);
                if let Some(k) = factor {
                    grads.scale(k);
                }
                let net = match slot {
                    0 => &mut self.model.image_net,
                    1 => &mut self.model.text_net,
                    _ => &mut self.model.transform_net,
                };
                net.apply_gradients(&grads, lr)?;
                self.full[slot] = None;
                factor.is_some()
            }
            Step::ImageProjection | Step::TextProjection | Step::CommonProjection => {
                let pg = inputs.grad_projections()?;
                let mut g = match step {
                    Step::ImageProjection => pg.d1,
                    Step::TextProjection => pg.d2,
                    _ => pg.c,
                };
                let factor = clip(frobenius_sq(&g), limit);
                if let Some(k) = factor {
                    g = g.scale(k);
                }
                let target = match step {
                    Step::ImageProjection => &mut self.model.d1_proj,
                    Step::TextProjection => &mut self.model.d2_proj,
                    _ => &mut self.model.c_proj,
                };
                sgd_step(target, &g, lr)?;
                factor.is_some()
            }
            Step::Codes | Step::AttributeRefresh => unreachable!("not a gradient step"),
        };
        if clipped {
            log::debug!("gradient clipped in the {step} step");
        }
        Ok(clipped)
    }

    fn codes_step(&mut self) -> Result<usize> {
        self.fill_full()?;
        let (p1, p2) = self.model.hash_functions();
        let f1 = self.full[0].as_ref().expect("filled").output();
        let f2 = self.full[1].as_ref().expect("filled").output();
        let b = update_b(&p1, &p2, f1, f2, &self.config.weights)?;
        let flips = b
            .as_slice()
            .iter()
            .zip(self.model.codes.as_slice())
            .filter(|(x, y)| x != y)
            .count();
        self.model.codes = b;
        Ok(flips)
    }

    fn refresh_a(&mut self) -> Result<()> {
        self.fill_full()?;
        self.a = attribute_similarity(self.full[2].as_ref().expect("filled").output())?;
        Ok(())
    }

    fn full_loss(&mut self) -> Result<(LossBreakdown, f64)> {
        self.fill_full()?;
        let (p1, p2) = self.model.hash_functions();
        let [f1, f2, fl] = &self.full;
        let inputs = ObjectiveInputs {
            f1: f1.as_ref().expect("filled").output(),
            f2: f2.as_ref().expect("filled").output(),
            fl: fl.as_ref().expect("filled").output(),
            codes: &self.model.codes,
            p1: &p1,
            p2: &p2,
            s: &self.data.s,
            a: &self.a,
            weights: self.config.weights,
        };
        Ok((
            inputs.loss()?,
            loss_j2_diagnostic(&self.model.codes, &self.a)?,
        ))
    }

    fn epoch(&mut self, epoch: usize) -> Result<()> {
        let start = Instant::now();
        let lr = self.config.learning_rate * self.config.lr_decay.powi(epoch as i32 - 1);
        let mut clipped_steps = 0;
        let mut b_flips = 0;
        for step in Step::ORDER {
            let reps = match step {
                Step::Codes | Step::AttributeRefresh => 1,
                _ => self.config.inner_iters,
            };
            for _ in 0..reps {
                match step {
                    Step::Codes => b_flips = self.codes_step().map_err(diverged(epoch, step))?,
                    Step::AttributeRefresh => self.refresh_a().map_err(diverged(epoch, step))?,
                    _ => {
                        if self.run_step(step, lr).map_err(diverged(epoch, step))? {
                            clipped_steps += 1;
                        }
                    }
                }
                self.log.trace.push((epoch, step));
            }
        }
        let (loss, j2) = self.full_loss().map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged {
                epoch,
                step: "loss",
            },
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: "loss",
            });
        }
        if clipped_steps > 0 {
            log::info!("epoch {epoch}: gradient clipping fired in {clipped_steps} steps");
        }
        log::info!(
            "epoch {epoch}: total {:.4} (j1 {:.4}, j3 {:.4}, attr {:.4}), {b_flips} bit flips",
            loss.total,
            loss.j1,
            loss.j3,
            loss.j_attr
        );
        self.log.epochs.push(EpochRecord {
            epoch,
            loss,
            j2,
            b_flips,
            clipped_steps,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// Trains a model on the seen-class training instances of `split`.
pub fn train(
    dataset: &PairedDataset,
    split: &ZeroShotSplit,
    config: &TrainConfig,
) -> Result<(LaehModel, TrainLog)> {
    config.validate()?;
    split.validate(dataset)?;
    if split.train_idx.is_empty() {
        return Err(Error::Invalid("the training set is empty".into()));
    }
    let idx = &split.train_idx;
    let data = TrainingData {
        x1: dataset.x1().select_columns(idx),
        x2: dataset.x2().select_columns(idx),
        semantics: dataset.instance_semantics(idx),
        s: build_similarity(&dataset.labels_of(idx)),
    };
    let shape = ModelShape {
        d1: dataset.x1().rows(),
        d2: dataset.x2().rows(),
        v: dataset.semantic_vectors().rows(),
        feature_dim: config.feature_dim,
        code_len: config.code_len,
        n_train: idx.len(),
        hidden: config.hidden.clone(),
        normalize_text: config.normalize_text,
    };
    let model = LaehModel::init(&shape, &mut SeededRng::named(config.seed, "init"))?;
    let a = attribute_similarity(model.transform_net.forward(&data.semantics)?.output())?;
    let mut trainer = Trainer {
        config,
        data,
        model,
        a,
        batch_rng: SeededRng::named(config.seed, "batch"),
        full: [None, None, None],
        log: TrainLog::default(),
    };
    for epoch in 1..=config.epochs {
        trainer.epoch(epoch)?;
    }
    Ok((trainer.model, trainer.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_split, synth_dataset, SynthParams};

    fn small_setup() -> (PairedDataset, ZeroShotSplit, TrainConfig) {
        let params = SynthParams {
            classes: 5,
            per_class: 8,
            d1: 6,
            d2: 5,
            v: 4,
            noise_sigma: 0.1,
        };
        let d = synth_dataset(&params, &mut SeededRng::new(1)).unwrap();
        let s = make_split(&d, 2, 2, &mut SeededRng::new(2)).unwrap();
        let cfg = TrainConfig {
            code_len: 8,
            feature_dim: 4,
            hidden: vec![6],
            epochs: 3,
            ..TrainConfig::default()
        };
        (d, s, cfg)
    }

    #[test]
    fn update_b_cases() {
        let w = LossWeights::default();
        let p = DenseMatrix::identity(2);
        let f = DenseMatrix::from_rows(&[[0.5, -2.0], [3.0, 0.1]]);
        let b = update_b(&p, &p, &f, &f.scale(-1.0), &w).unwrap();
        assert_eq!(b, DenseMatrix::filled(2, 2, 1.0));

        let pos = DenseMatrix::filled(2, 3, 0.25);
        let b = update_b(&p, &p, &pos, &pos, &w).unwrap();
        assert_eq!(b, DenseMatrix::filled(2, 3, 1.0));
    }

    #[test]
    fn update_b_is_the_exhaustive_minimizer() {
        for seed in 0..20 {
            let mut rng = SeededRng::new(seed);
            let (c, n, d) = (3, 4, 2);
            let p1 = DenseMatrix::random_gaussian(c, d, 1.0, &mut rng);
            let p2 = DenseMatrix::random_gaussian(c, d, 1.0, &mut rng);
            let f1 = DenseMatrix::random_gaussian(d, n, 1.0, &mut rng);
            let f2 = DenseMatrix::random_gaussian(d, n, 1.0, &mut rng);
            let w = LossWeights::new(rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0), 1.0).unwrap();
            let objective =
                |b: &DenseMatrix| crate::objective::loss_j3(b, &p1, &p2, &f1, &f2, &w).unwrap();
            let best = (0u32..1 << (c * n))
                .map(|mask| {
                    let b = DenseMatrix::from_fn(c, n, |r, i| {
                        if mask >> (r * n + i) & 1 == 1 {
                            1.0
                        } else {
                            -1.0
                        }
                    });
                    objective(&b)
                })
                .fold(f64::INFINITY, f64::min);
            let got = objective(&update_b(&p1, &p2, &f1, &f2, &w).unwrap());
            assert!((got - best).abs() <= 1e-12 * best.max(1.0), "seed {seed}");
        }
    }

    #[test]
    fn sgd_cases() {
        let mut p = DenseMatrix::from_rows(&[[0.0]]);
        sgd_step(&mut p, &DenseMatrix::from_rows(&[[1.0]]), 1.0).unwrap();
        assert_eq!(p, DenseMatrix::from_rows(&[[-1.0]]));

        let mut q = DenseMatrix::from_rows(&[[2.0, 3.0]]);
        sgd_step(&mut q, &DenseMatrix::zeros(1, 2), 0.5).unwrap();
        assert_eq!(q, DenseMatrix::from_rows(&[[2.0, 3.0]]));

        let g = DenseMatrix::from_rows(&[[0.5, -0.25]]);
        let mut twice = DenseMatrix::zeros(1, 2);
        sgd_step(&mut twice, &g, 0.5).unwrap();
        sgd_step(&mut twice, &g, 0.5).unwrap();
        let mut once = DenseMatrix::zeros(1, 2);
        sgd_step(&mut once, &g.scale(2.0), 0.5).unwrap();
        assert_eq!(twice, once);

        let bad = DenseMatrix::from_rows(&[[f64::NAN]]);
        assert!(sgd_step(&mut p, &bad, 0.1).is_err());
    }

    #[test]
    fn one_epoch_one_record() {
        let (d, s, mut cfg) = small_setup();
        cfg.epochs = 1;
        let (_, log) = train(&d, &s, &cfg).unwrap();
        assert_eq!(log.epochs.len(), 1);
        cfg.epochs = 0;
        assert!(train(&d, &s, &cfg).is_err());
    }

    #[test]
    fn steps_run_in_order() {
        let (d, s, mut cfg) = small_setup();
        cfg.epochs = 2;
        let (_, log) = train(&d, &s, &cfg).unwrap();
        let expected: Vec<(usize, Step)> = (1..=2)
            .flat_map(|e| Step::ORDER.iter().map(move |&st| (e, st)))
            .collect();
        assert_eq!(log.trace, expected);

        cfg.inner_iters = 2;
        let (_, log) = train(&d, &s, &cfg).unwrap();
        assert_eq!(log.trace.len(), 2 * (6 * 2 + 2));
    }

    #[test]
    fn frozen_learning_rate_only_moves_codes() {
        let (d, s, mut cfg) = small_setup();
        cfg.learning_rate = 0.0;
        let (model, _) = train(&d, &s, &cfg).unwrap();
        let shape = ModelShape {
            d1: 6,
            d2: 5,
            v: 4,
            feature_dim: 4,
            code_len: 8,
            n_train: s.train_idx.len(),
            hidden: vec![6],
            normalize_text: false,
        };
        let init = LaehModel::init(&shape, &mut SeededRng::named(cfg.seed, "init")).unwrap();
        assert_eq!(model.flat_params(), init.flat_params());
    }

    #[test]
    fn training_is_deterministic() {
        let (d, s, cfg) = small_setup();
        let (m1, l1) = train(&d, &s, &cfg).unwrap();
        let (m2, l2) = train(&d, &s, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(
            l1.epochs.iter().map(|e| e.loss).collect::<Vec<_>>(),
            l2.epochs.iter().map(|e| e.loss).collect::<Vec<_>>()
        );
    }

    #[test]
    fn minibatch_training_runs() {
        let (d, s, mut cfg) = small_setup();
        cfg.batch_size = 7;
        let (m1, l1) = train(&d, &s, &cfg).unwrap();
        let (m2, _) = train(&d, &s, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert!(l1.epochs.iter().all(|e| e.loss.is_finite()));
    }

    #[test]
    fn codes_step_never_increases_code_term() {
        let (d, s, cfg) = small_setup();
        let (model, _) = train(&d, &s, &cfg).unwrap();
        let idx = &s.train_idx;
        let cache = model
            .forward_features(
                &d.x1().select_columns(idx),
                &d.x2().select_columns(idx),
                &d.instance_semantics(idx),
            )
            .unwrap();
        let (p1, p2) = model.hash_functions();
        let w = cfg.weights;
        let j3 = |b: &DenseMatrix| {
            crate::objective::loss_j3(b, &p1, &p2, cache.f1(), cache.f2(), &w).unwrap()
        };
        let mut rng = SeededRng::new(3);
        let random_b = sign_matrix(&DenseMatrix::random_gaussian(8, idx.len(), 1.0, &mut rng));
        let best = update_b(&p1, &p2, cache.f1(), cache.f2(), &w).unwrap();
        assert!(j3(&best) <= j3(&random_b));
        assert!(j3(&best) <= j3(&model.codes) + 1e-12);
    }

    #[test]
    fn attribute_refresh_matches_composition() {
        let (d, s, cfg) = small_setup();
        let (model, _) = train(&d, &s, &cfg).unwrap();
        let a = refresh_attribute_matrix(&model, &d, &s).unwrap();
        let fl = model
            .transform_net
            .forward(&d.instance_semantics(&s.train_idx))
            .unwrap();
        assert_eq!(a, attribute_similarity(fl.output()).unwrap());
        let labels = d.labels_of(&s.train_idx);
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == labels[j] {
                    assert!((a.matrix().get(i, j) - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_transform_output_is_rejected() {
        let (d, s, cfg) = small_setup();
        let (mut model, _) = train(&d, &s, &cfg).unwrap();
        let last = model.transform_net.layers_mut().last_mut().unwrap();
        last.weight = DenseMatrix::zeros(last.weight.rows(), last.weight.cols());
        last.bias = DenseMatrix::zeros(last.bias.rows(), 1);
        assert!(matches!(
            refresh_attribute_matrix(&model, &d, &s),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn log_csv_layout() {
        let (d, s, mut cfg) = small_setup();
        cfg.weights.beta = 100.0;
        let (_, log) = train(&d, &s, &cfg).unwrap();
        let csv = log.to_csv(&cfg);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with('#') && lines[0].contains("beta=100"));
        assert_eq!(lines[1], "epoch,j1,j3,j_attr,total,b_flips,seconds");
        assert_eq!(lines.len(), 2 + cfg.epochs);
        assert_eq!(lines[2].split(',').count(), 7);
    }
}
