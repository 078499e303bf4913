//! Trained parameters on disk: one MMFE block per parameter matrix plus a
//! `manifest.toml` naming the blocks, hyper-parameters and seed.
//!
//! Blocks are stored as `f32`; reloaded parameters are the f32-rounded
//! training values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BprHyperParams, ItemKnn, MfParams, MmProjections, ModelKind, TrainedModel, VbprScorer};
use crate::data::{FeatureMatrix, InteractionMatrix, Modality};
use crate::error::{Error, Result};
use crate::features::{read_features, write_features};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::split::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelKind,
    pub name: String,
    pub seed: u64,
    pub hyper: Option<BprHyperParams>,
    /// Model-specific settings (k_neighbors, layers, graph_k, ...).
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
    #[serde(default)]
    pub modalities: Vec<Modality>,
    pub blocks: Vec<BlockEntry>,
}

fn block<T: Scalar>(m: &Matrix<T>, modality: Modality) -> Result<FeatureMatrix> {
    FeatureMatrix::new(
        modality,
        m.cols().max(1),
        (0..m.rows()).map(|r| r.to_string()).collect(),
        if m.cols() == 0 {
            vec![0.0; m.rows()]
        } else {
            m.as_slice().iter().map(|v| v.as_f64() as f32).collect()
        },
    )
}

fn column<T: Scalar>(v: &[T]) -> Matrix<T> {
    Matrix::from_vec(v.len(), 1, v.to_vec())
}

pub fn save_model<T: Scalar>(model: &TrainedModel<T>, manifest_base: Manifest, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blocks: Vec<(String, Matrix<T>, Modality)> = Vec::new();
    let mut modalities = Vec::new();
    let mf_blocks = |p: &MfParams<T>, out: &mut Vec<(String, Matrix<T>, Modality)>| {
        out.push(("user_emb".into(), p.user_emb.clone(), Modality::Visual));
        out.push(("item_emb".into(), p.item_emb.clone(), Modality::Visual));
        out.push(("item_bias".into(), column(&p.item_bias), Modality::Visual));
    };
    match model {
        TrainedModel::ItemKnn(knn) => {
            let dense = knn.to_dense();
            let n = dense.len();
            let flat = dense.into_iter().flatten().collect();
            blocks.push(("similarity".into(), Matrix::from_vec(n, n, flat), Modality::Visual));
        }
        TrainedModel::Factors { params, .. } => mf_blocks(params, &mut blocks),
        TrainedModel::Vbpr(scorer) => {
            mf_blocks(&scorer.mf, &mut blocks);
            for (k, &m) in scorer.mm.modalities.iter().enumerate() {
                modalities.push(m);
                blocks.push((format!("mm_proj_{k}"), scorer.mm.item_proj[k].clone(), m));
                blocks.push((format!("mm_user_{k}"), scorer.mm.user_factors[k].clone(), m));
                blocks.push((format!("mm_item_{k}"), scorer.projected()[k].clone(), m));
            }
        }
    }
    let mut manifest = manifest_base;
    manifest.model = model.kind();
    manifest.modalities = modalities;
    manifest.blocks.clear();
    for (name, m, modality) in blocks {
        let file = format!("{name}.mmfe");
        write_features(&block(&m, modality)?, dir.join(&file))?;
        manifest.blocks.push(BlockEntry {
            name,
            file,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    write_atomic(&dir.join("manifest.toml"), text.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join("manifest.toml");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Reload a saved model. ItemKNN needs the training matrix it was fit on.
pub fn load_model<T: Scalar>(dir: impl AsRef<Path>, train: &InteractionMatrix) -> Result<(Manifest, TrainedModel<T>)> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let load = |name: &str| -> Result<Matrix<T>> {
        let entry = manifest
            .blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Config(format!("manifest lacks block {name:?}")))?;
        let fm = read_features(dir.join(&entry.file))?;
        if fm.len() != entry.rows {
            return Err(Error::DimMismatch {
                expected: entry.rows,
                found: fm.len(),
            });
        }
        Ok(fm.to_matrix())
    };
    let mf = || -> Result<MfParams<T>> {
        Ok(MfParams {
            user_emb: load("user_emb")?,
            item_emb: load("item_emb")?,
            item_bias: load("item_bias")?.into_vec(),
        })
    };
    let model = match manifest.model {
        ModelKind::ItemKnn => {
            let sim = load("similarity")?;
            let rows: Vec<Vec<T>> = (0..sim.rows()).map(|r| sim.row(r).to_vec()).collect();
            let k = manifest
                .settings
                .get("k_neighbors")
                .and_then(|v| v.parse().ok())
                .unwrap_or(rows.len());
            TrainedModel::ItemKnn(ItemKnn::from_dense(&rows, train.clone(), k)?)
        }
        ModelKind::Vbpr => {
            let mut mm = MmProjections {
                modalities: manifest.modalities.clone(),
                item_proj: Vec::new(),
                user_factors: Vec::new(),
            };
            let mut projected = Vec::new();
            for k in 0..manifest.modalities.len() {
                mm.item_proj.push(load(&format!("mm_proj_{k}"))?);
                mm.user_factors.push(load(&format!("mm_user_{k}"))?);
                projected.push(load(&format!("mm_item_{k}"))?);
            }
            TrainedModel::Vbpr(VbprScorer::from_projected(mf()?, mm, projected))
        }
        kind => TrainedModel::Factors { kind, params: mf()? },
    };
    Ok((manifest, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_itemknn, Recommender};

    fn manifest() -> Manifest {
        Manifest {
            model: ModelKind::Bprmf,
            name: "BPRMF".into(),
            seed: 1,
            hyper: Some(BprHyperParams::default()),
            settings: BTreeMap::new(),
            modalities: vec![],
            blocks: vec![],
        }
    }

    #[test]
    fn factors_round_trip_at_f32_precision() {
        let params = MfParams {
            user_emb: Matrix::from_vec(2, 2, vec![0.5, -0.25, 1.0, 2.0]),
            item_emb: Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
            item_bias: vec![0.0, 1.5, -1.0],
        };
        let model = TrainedModel::Factors { kind: ModelKind::Bprmf, params };
        let dir = tempfile::tempdir().unwrap();
        let saved = save_model(&model, manifest(), dir.path()).unwrap();
        assert_eq!(saved.blocks.len(), 3);
        let train = InteractionMatrix::from_pairs(2, 3, &[(0, 0)]);
        let (m, loaded) = load_model::<f64>(dir.path(), &train).unwrap();
        assert_eq!(m, saved);
        for u in 0..2 {
            let a = model.score_all(u).unwrap();
            let b = loaded.score_all(u).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn knn_round_trip() {
        let train = InteractionMatrix::from_pairs(3, 3, &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 0)]);
        let knn = fit_itemknn::<f64>(&train, 2).unwrap();
        let model = TrainedModel::ItemKnn(knn);
        let dir = tempfile::tempdir().unwrap();
        let mut base = manifest();
        base.settings.insert("k_neighbors".into(), "2".into());
        save_model(&model, base, dir.path()).unwrap();
        let (_, loaded) = load_model::<f64>(dir.path(), &train).unwrap();
        for u in 0..3 {
            let a = model.score_all(u).unwrap();
            let b = loaded.score_all(u).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
