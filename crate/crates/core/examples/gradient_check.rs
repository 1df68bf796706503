//! Compares the analytic gradient of the full objective, taken through all
//! three nets and the projections, with central finite differences.

use laeh::data::build_similarity;
use laeh::numerics::sign_matrix;
use laeh::objective::{
    attribute_similarity, finite_diff_check, model_gradients, model_loss, Batch,
};
use laeh::{DenseMatrix, LaehModel, LossWeights, ModelShape, SeededRng};

fn main() -> laeh::Result<()> {
    let mut rng = SeededRng::new(11);
    let n = 6;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let x1 = DenseMatrix::random_gaussian(4, n, 1.0, &mut rng);
    let x2 = DenseMatrix::random_gaussian(3, n, 1.0, &mut rng);
    let protos = DenseMatrix::random_gaussian(5, 3, 1.0, &mut rng);
    let semantics = protos.select_columns(&labels);
    let shape = ModelShape {
        d1: 4,
        d2: 3,
        v: 5,
        feature_dim: 4,
        code_len: 3,
        n_train: n,
        hidden: vec![5],
        normalize_text: false,
    };
    let mut model = LaehModel::init(&shape, &mut rng)?;
    // Larger projections than the initial 0.01 so every term contributes.
    for p in [&mut model.c_proj, &mut model.d1_proj, &mut model.d2_proj] {
        *p = DenseMatrix::random_gaussian(3, 4, 0.5, &mut rng);
    }
    model.codes = sign_matrix(&DenseMatrix::random_gaussian(3, n, 1.0, &mut rng));
    let s = build_similarity(&labels);
    let a = attribute_similarity(model.transform_net.forward(&semantics)?.output())?;
    let batch = Batch {
        x1: &x1,
        x2: &x2,
        semantics: &semantics,
        codes: &model.codes,
        s: &s,
        a: &a,
    };

    for (name, w) in [
        ("default weights", LossWeights::default()),
        (
            "alpha1=0.3 alpha2=2 beta=5",
            LossWeights::new(0.3, 2.0, 5.0)?,
        ),
        (
            "scaled attribute term",
            LossWeights {
                scale_attr: true,
                ..LossWeights::default()
            },
        ),
    ] {
        let (loss, grads) = model_gradients(&model, &batch, w)?;
        let params = model.flat_params();
        let mut probe = model.clone();
        let err = finite_diff_check(
            |p| {
                probe.set_flat_params(p).expect("same length");
                model_loss(&probe, &batch, w).expect("finite").total
            },
            &params,
            &grads.flatten(),
            1e-5,
        );
        println!(
            "{name:28} loss {:10.4}  params {}  max relative error {err:.2e}",
            loss.total,
            params.len()
        );
    }
    Ok(())
}
