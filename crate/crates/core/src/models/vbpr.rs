//! Multimodal VBPR: matrix factorization plus one projected content term per
//! modality,
//!
//! `x_ui = b_i + p_u · q_i + Σ_m p_u^(m) · (E_m f_i^(m))`.
//!
//! Item features are frozen; `E_m` and the per-modality user factors are
//! learned under the same BPR objective and L2 weight as the factors. The
//! per-modality terms are summed, i.e. late fusion by summation.

use super::bpr::{self, init_block, BprHyperParams, BprModel, Factors, TrainingTrace};
use super::{finite_scores, MfParams, Recommender};
use crate::data::{FeatureMatrix, InteractionMatrix, Modality};
use crate::error::{Error, Result};
use crate::linalg::{dot, squared_norm, Matrix};
use crate::scalar::Scalar;

/// Collaborative and multimodal parts of a trained VBPR model.
pub type VbprParams<T> = (MfParams<T>, MmProjections<T>);

/// Learned multimodal parameters: `E_m` (d × d_m) and `p^(m)` (users × d).
#[derive(Debug, Clone, PartialEq)]
pub struct MmProjections<T> {
    pub modalities: Vec<Modality>,
    pub item_proj: Vec<Matrix<T>>,
    pub user_factors: Vec<Matrix<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vbpr<T> {
    pub(crate) factors: Factors<T>,
    features: Vec<Matrix<T>>,
    mm: MmProjections<T>,
    projected: Vec<Matrix<T>>,
}

fn check_features(features: &[FeatureMatrix], num_items: usize) -> Result<()> {
    if features.is_empty() {
        return Err(Error::EmptyModalities);
    }
    for f in features {
        if f.len() != num_items {
            return Err(Error::DimMismatch {
                expected: num_items,
                found: f.len(),
            });
        }
    }
    Ok(())
}

fn project<T: Scalar>(features: &Matrix<T>, e: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(features.rows(), e.rows());
    for i in 0..features.rows() {
        let f = features.row(i);
        for (r, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = dot(e.row(r), f);
        }
    }
    out
}

impl<T: Scalar> Vbpr<T> {
    /// `features` must be row-aligned with the item index.
    pub fn new(num_users: usize, num_items: usize, features: &[FeatureMatrix], hp: &BprHyperParams) -> Result<Self> {
        check_features(features, num_items)?;
        let d = hp.latent_dim;
        let mut mm = MmProjections {
            modalities: Vec::new(),
            item_proj: Vec::new(),
            user_factors: Vec::new(),
        };
        for (k, f) in features.iter().enumerate() {
            let tag = format!("{}_{k}", f.modality());
            mm.modalities.push(f.modality());
            mm.item_proj.push(init_block(d, f.dim(), &format!("mm_proj_{tag}"), hp));
            mm.user_factors.push(init_block(num_users, d, &format!("mm_user_{tag}"), hp));
        }
        let mut model = Self {
            factors: Factors::init(num_users, num_items, hp, true),
            features: features.iter().map(FeatureMatrix::to_matrix).collect(),
            mm,
            projected: Vec::new(),
        };
        model.refresh();
        Ok(model)
    }

    pub fn into_parts(self) -> VbprParams<T> {
        let num_items = self.factors.item.rows();
        (
            MfParams {
                user_emb: self.factors.user,
                item_emb: self.factors.item,
                item_bias: self.factors.bias.unwrap_or_else(|| vec![T::zero(); num_items]),
            },
            self.mm,
        )
    }

    fn mm_offset(&self) -> usize {
        self.factors.block_count()
    }
}

impl<T: Scalar> BprModel<T> for Vbpr<T> {
    fn num_users(&self) -> usize {
        self.factors.user.rows()
    }

    fn num_items(&self) -> usize {
        self.factors.item.rows()
    }

    fn block_names(&self) -> Vec<String> {
        let mut n = self.factors.names();
        for (k, m) in self.mm.modalities.iter().enumerate() {
            n.push(format!("mm_proj_{m}_{k}"));
            n.push(format!("mm_user_{m}_{k}"));
        }
        n
    }

    fn blocks(&self) -> Vec<&[T]> {
        let mut b = self.factors.blocks();
        for (e, p) in self.mm.item_proj.iter().zip(&self.mm.user_factors) {
            b.push(e.as_slice());
            b.push(p.as_slice());
        }
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut b = self.factors.blocks_mut();
        for (e, p) in self.mm.item_proj.iter_mut().zip(self.mm.user_factors.iter_mut()) {
            b.push(e.as_mut_slice());
            b.push(p.as_mut_slice());
        }
        b
    }

    fn refresh(&mut self) {
        self.projected = self
            .features
            .iter()
            .zip(&self.mm.item_proj)
            .map(|(f, e)| project(f, e))
            .collect();
    }

    fn score(&self, user: usize, item: usize) -> T {
        let f = &self.factors;
        let mut s = f.bias_of(item) + dot(f.user.row(user), f.item.row(item));
        for (p, proj) in self.mm.user_factors.iter().zip(&self.projected) {
            s = s + dot(p.row(user), proj.row(item));
        }
        s
    }

    fn penalty(&self, user: usize, pos: usize, neg: usize) -> T {
        let mut p = self.factors.penalty(user, pos, neg);
        for (e, pu) in self.mm.item_proj.iter().zip(&self.mm.user_factors) {
            p = p + squared_norm(pu.row(user)) + e.squared_norm();
        }
        p
    }

    fn grad_buffers(&self) -> Vec<Vec<T>> {
        let mut g: Vec<Vec<T>> = self.blocks().iter().map(|b| vec![T::zero(); b.len()]).collect();
        g.extend(self.factors.scratch_buffers());
        g
    }

    fn accumulate(&self, grads: &mut [Vec<T>], u: usize, i: usize, j: usize, dx: T, lambda: T) {
        let f = &self.factors;
        let scratch_at = self.blocks().len();
        f.accumulate(grads, scratch_at, f.user.row(u), f.item.row(i), f.item.row(j), (u, i, j), dx, lambda);
        let two_l = lambda + lambda;
        let base = self.mm_offset();
        for m in 0..self.mm.modalities.len() {
            let e = &self.mm.item_proj[m];
            let pu = self.mm.user_factors[m].row(u);
            let (fi, fj) = (self.features[m].row(i), self.features[m].row(j));
            let dm = e.cols();
            let d = e.rows();
            let ge = &mut grads[base + 2 * m];
            for r in 0..d {
                let coef = dx * pu[r];
                if coef == T::zero() {
                    continue;
                }
                let row = &mut ge[r * dm..(r + 1) * dm];
                for c in 0..dm {
                    row[c] = row[c] + coef * (fi[c] - fj[c]);
                }
            }
            let (pi, pj) = (self.projected[m].row(i), self.projected[m].row(j));
            let gp = &mut grads[base + 2 * m + 1][u * d..(u + 1) * d];
            for r in 0..d {
                gp[r] = gp[r] + dx * (pi[r] - pj[r]) + two_l * pu[r];
            }
        }
    }

    fn finalize(&self, grads: &mut [Vec<T>], triples: usize, lambda: T) {
        let scratch_at = self.blocks().len();
        let (raw, scratch) = grads.split_at_mut(scratch_at);
        self.factors.absorb(raw, &scratch[0], &scratch[1]);
        let scale = (lambda + lambda) * T::of_usize(triples);
        let base = self.mm_offset();
        for (m, e) in self.mm.item_proj.iter().enumerate() {
            for (g, &w) in raw[base + 2 * m].iter_mut().zip(e.as_slice()) {
                *g = *g + scale * w;
            }
        }
    }
}

pub fn train_vbpr_m<T: Scalar>(
    train: &InteractionMatrix,
    features: &[FeatureMatrix],
    hp: &BprHyperParams,
) -> Result<VbprParams<T>> {
    Ok(train_vbpr_m_traced(train, features, hp)?.0)
}

pub fn train_vbpr_m_traced<T: Scalar>(
    train: &InteractionMatrix,
    features: &[FeatureMatrix],
    hp: &BprHyperParams,
) -> Result<(VbprParams<T>, TrainingTrace<T>)> {
    hp.validate()?;
    let mut model = Vbpr::new(train.num_users(), train.num_items(), features, hp)?;
    let trace = bpr::fit(&mut model, train, hp)?;
    Ok((model.into_parts(), trace))
}

/// Scores with trained VBPR parameters over a fixed feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct VbprScorer<T> {
    pub mf: MfParams<T>,
    pub mm: MmProjections<T>,
    projected: Vec<Matrix<T>>,
}

impl<T: Scalar> VbprScorer<T> {
    pub fn new(mf: MfParams<T>, mm: MmProjections<T>, features: &[FeatureMatrix]) -> Result<Self> {
        check_features(features, mf.item_emb.rows())?;
        if features.len() != mm.item_proj.len() {
            return Err(Error::DimMismatch {
                expected: mm.item_proj.len(),
                found: features.len(),
            });
        }
        let mut projected = Vec::new();
        for (f, e) in features.iter().zip(&mm.item_proj) {
            if f.dim() != e.cols() {
                return Err(Error::DimMismatch {
                    expected: e.cols(),
                    found: f.dim(),
                });
            }
            projected.push(project(&f.to_matrix(), e));
        }
        Ok(Self { mf, mm, projected })
    }

    /// Build from already projected item features (`E_m f_i` per item).
    pub fn from_projected(mf: MfParams<T>, mm: MmProjections<T>, projected: Vec<Matrix<T>>) -> Self {
        Self { mf, mm, projected }
    }

    pub fn projected(&self) -> &[Matrix<T>] {
        &self.projected
    }

    /// The multimodal part of every item's score.
    pub fn multimodal_scores(&self, user: usize) -> Result<Vec<T>> {
        if user >= self.mf.user_emb.rows() {
            return Err(Error::UnknownUser(user));
        }
        Ok((0..self.mf.item_emb.rows())
            .map(|i| {
                self.mm
                    .user_factors
                    .iter()
                    .zip(&self.projected)
                    .fold(T::zero(), |s, (p, proj)| s + dot(p.row(user), proj.row(i)))
            })
            .collect())
    }
}

impl<T: Scalar> Recommender<T> for VbprScorer<T> {
    fn num_users(&self) -> usize {
        self.mf.user_emb.rows()
    }

    fn num_items(&self) -> usize {
        self.mf.item_emb.rows()
    }

    fn score_all(&self, user: usize) -> Result<Vec<T>> {
        let mut scores = self.mf.score_all(user)?;
        for (p, proj) in self.mm.user_factors.iter().zip(&self.projected) {
            let pu = p.row(user);
            for (i, s) in scores.iter_mut().enumerate() {
                *s = *s + dot(pu, proj.row(i));
            }
        }
        finite_scores(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::train_bprmf;

    fn toy() -> InteractionMatrix {
        InteractionMatrix::from_pairs(3, 4, &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 0)])
    }

    fn features(values: Vec<f32>, dim: usize) -> FeatureMatrix {
        FeatureMatrix::new(Modality::Visual, dim, (0..4).map(|k| k.to_string()).collect(), values).unwrap()
    }

    fn hp() -> BprHyperParams {
        BprHyperParams {
            latent_dim: 3,
            learning_rate: 0.1,
            reg: 0.01,
            epochs: 4,
            batch_size: 3,
            seed: 11,
            init_std: 0.1,
        }
    }

    #[test]
    fn zero_features_match_bprmf_bitwise() {
        let zero = features(vec![0.0; 8], 2);
        let (mf, _) = train_vbpr_m::<f64>(&toy(), &[zero], &hp()).unwrap();
        let plain = train_bprmf::<f64>(&toy(), &hp()).unwrap();
        assert_eq!(mf, plain);
    }

    #[test]
    fn scores_decompose() {
        let f = features((0..8).map(|v| v as f32 * 0.25).collect(), 2);
        let (mf, mm) = train_vbpr_m::<f64>(&toy(), std::slice::from_ref(&f), &hp()).unwrap();
        let scorer = VbprScorer::new(mf.clone(), mm, &[f]).unwrap();
        for u in 0..3 {
            let total = scorer.score_all(u).unwrap();
            let a = mf.score_all(u).unwrap();
            let b = scorer.multimodal_scores(u).unwrap();
            for k in 0..4 {
                assert!((total[k] - (a[k] + b[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn misaligned_features_rejected() {
        let f = FeatureMatrix::new(Modality::Visual, 1, vec!["a".into()], vec![1.0]).unwrap();
        assert!(matches!(
            train_vbpr_m::<f64>(&toy(), &[f], &hp()),
            Err(Error::DimMismatch { expected: 4, found: 1 })
        ));
    }
}
