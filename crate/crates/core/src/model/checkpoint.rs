//! Checkpoint directories: `manifest.txt` plus one matrix file per weight,
//! bias, projection and the code matrix.

use std::path::Path;

use crate::data::{load_matrix, save_matrix};
use crate::error::{Error, Result};
use crate::kv::{join_list, KvFile};

use super::{Activation, FeedForwardNet, LaehModel, Layer};

const NETS: [&str; 3] = ["image_net", "text_net", "transform_net"];
const MANIFEST_KEYS: [&str; 13] = [
    "d1",
    "d2",
    "v",
    "d",
    "c",
    "n",
    "image_net",
    "text_net",
    "transform_net",
    "normalize_text",
    "seed",
    "format",
    "projections",
];

impl LaehModel {
    fn nets(&self) -> [&FeedForwardNet; 3] {
        [&self.image_net, &self.text_net, &self.transform_net]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut kv = KvFile::new();
        kv.set("format", "laeh-checkpoint-1");
        kv.set("d1", self.image_net.input_dim());
        kv.set("d2", self.text_net.input_dim());
        kv.set("v", self.transform_net.input_dim());
        kv.set("d", self.feature_dim());
        kv.set("c", self.code_len());
        kv.set("n", self.codes.cols());
        kv.set("normalize_text", self.normalize_text);
        kv.set("seed", self.seed);
        kv.set(
            "projections",
            "c_proj.txt,d1_proj.txt,d2_proj.txt,codes.txt",
        );
        for (name, net) in NETS.iter().zip(self.nets()) {
            kv.set(name, join_list(&net.dims()));
            for (i, layer) in net.layers().iter().enumerate() {
                save_matrix(&layer.weight, &dir.join(format!("{name}.w{i}.txt")))?;
                save_matrix(&layer.bias, &dir.join(format!("{name}.b{i}.txt")))?;
            }
        }
        save_matrix(&self.c_proj, &dir.join("c_proj.txt"))?;
        save_matrix(&self.d1_proj, &dir.join("d1_proj.txt"))?;
        save_matrix(&self.d2_proj, &dir.join("d2_proj.txt"))?;
        save_matrix(&self.codes, &dir.join("codes.txt"))?;
        kv.write(&dir.join("manifest.txt"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KvFile::read(&dir.join("manifest.txt"))?;
        kv.check_keys(&MANIFEST_KEYS)?;
        let mut nets = Vec::with_capacity(3);
        for name in NETS {
            let dims: Vec<usize> = kv.parse_list(name)?;
            if dims.len() < 2 {
                return Err(Error::Invalid(format!("{name}: need at least two sizes")));
            }
            let last = dims.len() - 2;
            let mut layers = Vec::with_capacity(dims.len() - 1);
            for i in 0..=last {
                let weight = load_matrix(&dir.join(format!("{name}.w{i}.txt")))?;
                let bias = load_matrix(&dir.join(format!("{name}.b{i}.txt")))?;
                if weight.shape() != (dims[i + 1], dims[i]) {
                    return Err(Error::shape(
                        "checkpoint weight",
                        (dims[i + 1], dims[i]),
                        weight.shape(),
                    ));
                }
                layers.push(Layer {
                    weight,
                    bias,
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                });
            }
            nets.push(FeedForwardNet::from_layers(layers)?);
        }
        let transform_net = nets.pop().expect("three nets");
        let text_net = nets.pop().expect("three nets");
        let image_net = nets.pop().expect("three nets");

        let (c, d, n): (usize, usize, usize) = (
            kv.parse_value("c")?,
            kv.parse_value("d")?,
            kv.parse_value("n")?,
        );
        let c_proj = load_matrix(&dir.join("c_proj.txt"))?;
        let d1_proj = load_matrix(&dir.join("d1_proj.txt"))?;
        let d2_proj = load_matrix(&dir.join("d2_proj.txt"))?;
        let codes = load_matrix(&dir.join("codes.txt"))?;
        for p in [&c_proj, &d1_proj, &d2_proj] {
            if p.shape() != (c, d) {
                return Err(Error::shape("checkpoint projection", (c, d), p.shape()));
            }
        }
        if codes.shape() != (c, n) {
            return Err(Error::shape("checkpoint codes", (c, n), codes.shape()));
        }
        for net in [&image_net, &text_net, &transform_net] {
            if net.output_dim() != d {
                return Err(Error::Invalid(format!(
                    "net output {} does not match d={d}",
                    net.output_dim()
                )));
            }
        }
        Ok(Self {
            image_net,
            text_net,
            transform_net,
            c_proj,
            d1_proj,
            d2_proj,
            codes,
            normalize_text: kv.parse_value("normalize_text")?,
            seed: kv.parse_value("seed")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::ModelShape;
    use super::*;
    use crate::numerics::{DenseMatrix, SeededRng};

    #[test]
    fn save_load_is_bit_exact() {
        let shape = ModelShape {
            d1: 5,
            d2: 4,
            v: 3,
            feature_dim: 6,
            code_len: 16,
            n_train: 7,
            hidden: vec![8, 9],
            normalize_text: true,
        };
        let mut rng = SeededRng::new(12);
        let mut model = LaehModel::init(&shape, &mut rng).unwrap();
        model.image_net.layers_mut()[1].bias = DenseMatrix::random_gaussian(9, 1, 1e-3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = LaehModel::load(dir.path()).unwrap();
        assert_eq!(back.flat_params().len(), model.flat_params().len());
        for (a, b) in back.flat_params().iter().zip(model.flat_params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, model);

        let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("c=16\n"));
        assert!(manifest.contains("image_net=5,8,9,6\n"));
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let e = LaehModel::load(dir.path()).unwrap_err();
        assert!(e.to_string().contains("manifest.txt"));
    }
}
