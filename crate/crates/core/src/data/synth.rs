use crate::error::{Error, Result};
use crate::numerics::{matmul, DenseMatrix, SeededRng};

use super::PairedDataset;

/// Shape of a synthetic dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub classes: usize,
    pub per_class: usize,
    pub d1: usize,
    pub d2: usize,
    pub v: usize,
    pub noise_sigma: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            classes: 12,
            per_class: 60,
            d1: 64,
            d2: 64,
            v: 300,
            noise_sigma: 0.1,
        }
    }
}

/// Generates a dataset whose features are driven by class prototypes.
///
/// Each class gets a standard Gaussian prototype in `R^v`, which doubles as
/// its semantic vector. Modality `m` features are `W_m p + b_m + noise`
/// for fixed random `W_m`, `b_m`; modality 1 additionally passes through
/// `tanh`. Instances are laid out class by class.
pub fn synth_dataset(params: &SynthParams, rng: &mut SeededRng) -> Result<PairedDataset> {
    let SynthParams {
        classes,
        per_class,
        d1,
        d2,
        v,
        noise_sigma,
    } = *params;
    if classes == 0 || per_class == 0 || d1 == 0 || d2 == 0 || v == 0 {
        return Err(Error::Invalid(format!(
            "all synthetic dataset sizes must be positive: {params:?}"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Invalid(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }

    let mut prototypes = DenseMatrix::random_gaussian(v, classes, 1.0, rng);
    // A zero prototype has probability zero but would break cosine similarity.
    for (c, norm) in prototypes.column_norms().into_iter().enumerate() {
        if norm == 0.0 {
            prototypes.set(0, c, 1.0);
        }
    }
    let map_scale = 1.0 / (v as f64).sqrt();
    let w1 = DenseMatrix::random_gaussian(d1, v, map_scale, rng);
    let b1 = DenseMatrix::random_gaussian(d1, 1, 0.5, rng);
    let w2 = DenseMatrix::random_gaussian(d2, v, map_scale, rng);
    let b2 = DenseMatrix::random_gaussian(d2, 1, 0.5, rng);

    let clean1 = matmul(&w1, &prototypes)?;
    let clean2 = matmul(&w2, &prototypes)?;

    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / per_class).collect();
    let mut x1 = DenseMatrix::zeros(d1, n);
    let mut x2 = DenseMatrix::zeros(d2, n);
    for (i, &c) in labels.iter().enumerate() {
        for r in 0..d1 {
            let z = clean1.get(r, c) + b1.get(r, 0) + noise_sigma * rng.gaussian();
            x1.set(r, i, z.tanh());
        }
        for r in 0..d2 {
            let z = clean2.get(r, c) + b2.get(r, 0) + noise_sigma * rng.gaussian();
            x2.set(r, i, z);
        }
    }
    PairedDataset::new(x1, x2, labels, prototypes, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cosine;

    fn params(k: usize, per: usize, noise: f64) -> SynthParams {
        SynthParams {
            classes: k,
            per_class: per,
            d1: 16,
            d2: 12,
            v: 8,
            noise_sigma: noise,
        }
    }

    #[test]
    fn zero_noise_gives_identical_class_members() {
        let d = synth_dataset(&params(3, 5, 0.0), &mut SeededRng::new(1)).unwrap();
        for i in 0..d.len() {
            let j = d.labels()[i] * 5;
            assert_eq!(d.x1().column(i), d.x1().column(j));
            assert_eq!(d.x2().column(i), d.x2().column(j));
        }
    }

    #[test]
    fn balanced_layout() {
        let d = synth_dataset(&params(12, 60, 0.1), &mut SeededRng::new(1)).unwrap();
        assert_eq!(d.len(), 720);
        let mut counts = [0usize; 12];
        for &l in d.labels() {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 60));
        assert!(d.semantic_vectors().column_norms().iter().all(|&n| n > 0.0));
    }

    #[test]
    fn within_class_features_are_closer() {
        let d = synth_dataset(&params(6, 20, 0.1), &mut SeededRng::new(2)).unwrap();
        for x in [d.x1(), d.x2()] {
            let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
            for i in 0..d.len() {
                for j in (i + 1)..d.len() {
                    let c = cosine(&x.column(i), &x.column(j)).unwrap();
                    if d.labels()[i] == d.labels()[j] {
                        within += c;
                        nw += 1;
                    } else {
                        across += c;
                        na += 1;
                    }
                }
            }
            assert!(within / nw as f64 >= across / na as f64);
        }
    }

    #[test]
    fn rejects_empty_sizes() {
        assert!(synth_dataset(&params(0, 5, 0.1), &mut SeededRng::new(1)).is_err());
        assert!(synth_dataset(&params(2, 5, -1.0), &mut SeededRng::new(1)).is_err());
    }
}
