//! Grouped-design data model.
//!
//! Each group block is factorized as `X_{I_i} = U_i R_i` with orthonormal
//! `U_i` (n × l_i) and full-row-rank `R_i` (l_i × |I_i|). The stacked
//! `X̃ = [U_1 … U_m]` carries the contiguous partition `Ĩ` and every group
//! effect `‖X_{I_i} b_{I_i}‖₂` equals `‖c_{Ĩ_i}‖₂` for `c_{Ĩ_i} = R_i b_{I_i}`.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::jacobi_svd;

/// Default relative singular-value cutoff used to decide group ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Disjoint column groups `I_1 … I_m` covering `0..p`, with optional weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    weights: Option<Vec<f64>>,
    p: usize,
}

impl GroupPartition {
    /// Builds a partition from explicit index sets (0-based).
    pub fn new(groups: Vec<Vec<usize>>, weights: Option<Vec<f64>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::EmptyDesign);
        }
        let p: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; p];
        for (g, idx) in groups.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::DimensionMismatch(format!("group {} is empty", g + 1)));
            }
            for &j in idx {
                if j >= p || seen[j] {
                    return Err(Error::DimensionMismatch(format!(
                        "groups do not partition 0..{p} (column {j} repeated or out of range)"
                    )));
                }
                seen[j] = true;
            }
        }
        if let Some(w) = &weights {
            validate_weights(w, groups.len())?;
        }
        Ok(GroupPartition { groups, weights, p })
    }

    /// Contiguous groups of the given sizes, in order.
    pub fn contiguous(sizes: &[usize], weights: Option<Vec<f64>>) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|&s| {
                let g: Vec<usize> = (start..start + s).collect();
                start += s;
                g
            })
            .collect();
        Self::new(groups, weights)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Number of groups `m`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Number of columns `p`.
    pub fn n_columns(&self) -> usize {
        self.p
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights, self.groups.len())?;
        self.weights = Some(weights);
        Ok(self)
    }
}

fn validate_weights(w: &[f64], m: usize) -> Result<()> {
    if w.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} weights given for {} groups",
            w.len(),
            m
        )));
    }
    if let Some(g) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidWeight {
            group: g + 1,
            value: w[g],
        });
    }
    Ok(())
}

/// Builds a partition from one opaque label per column.
///
/// Groups are numbered by first appearance of their label. Weights, when
/// given, are indexed the same way.
pub fn build_partition<L: Eq + Hash>(labels: &[L], weights: Option<&[f64]>) -> Result<GroupPartition> {
    if labels.is_empty() {
        return Err(Error::EmptyDesign);
    }
    let mut index: HashMap<&L, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (col, label) in labels.iter().enumerate() {
        let g = *index.entry(label).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(col);
    }
    GroupPartition::new(groups, weights.map(<[f64]>::to_vec))
}

/// Factorization of one group block.
#[derive(Debug, Clone)]
pub struct GroupFactor {
    /// n × l, orthonormal columns.
    pub u: DMatrix<f64>,
    /// l × |I|, full row rank.
    pub r: DMatrix<f64>,
    /// |I| × l, Moore–Penrose inverse of `r`.
    pub r_pinv: DMatrix<f64>,
}

impl GroupFactor {
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }
}

/// Per-group orthonormalized design `X̃` with the stacked partition `Ĩ`.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    partition: GroupPartition,
    weights: Vec<f64>,
    factors: Vec<GroupFactor>,
    offsets: Vec<usize>,
    x_tilde: DMatrix<f64>,
}

/// Factorizes every group block of `x`. Ranks are the number of singular
/// values at or above `rank_tol` times the largest one in the block.
/// Missing weights default to `w_i = √l_i`.
pub fn standardize(x: &DMatrix<f64>, partition: &GroupPartition, rank_tol: f64) -> Result<StandardizedDesign> {
    if x.ncols() != partition.n_columns() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, partition covers {}",
            x.ncols(),
            partition.n_columns()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDesign);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    let factors = partition
        .groups()
        .iter()
        .enumerate()
        .map(|(g, cols)| factor_block(&x.select_columns(cols), rank_tol).ok_or(Error::ZeroGroup(g + 1)))
        .collect::<Result<Vec<_>>>()?;

    let weights = match partition.weights() {
        Some(w) => w.to_vec(),
        None => factors.iter().map(|f| (f.rank() as f64).sqrt()).collect(),
    };
    let mut offsets = Vec::with_capacity(factors.len() + 1);
    offsets.push(0);
    for f in &factors {
        offsets.push(offsets.last().unwrap() + f.rank());
    }
    let mut x_tilde = DMatrix::zeros(x.nrows(), *offsets.last().unwrap());
    for (f, &start) in factors.iter().zip(&offsets) {
        x_tilde.columns_mut(start, f.rank()).copy_from(&f.u);
    }
    Ok(StandardizedDesign {
        partition: partition.clone().with_weights(weights.clone())?,
        weights,
        factors,
        offsets,
        x_tilde,
    })
}

fn factor_block(block: &DMatrix<f64>, rank_tol: f64) -> Option<GroupFactor> {
    let svd = jacobi_svd(block);
    let (u_full, vt_full, sv) = (&svd.u, &svd.v_t, &svd.singular_values);
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let top = order.first().map(|&i| sv[i]).unwrap_or(0.0);
    if top.is_nan() || top <= 0.0 {
        return None;
    }
    let kept: Vec<usize> = order.into_iter().filter(|&i| sv[i] >= rank_tol * top).collect();
    let (n, width, l) = (block.nrows(), block.ncols(), kept.len());
    let mut u = DMatrix::zeros(n, l);
    let mut r = DMatrix::zeros(l, width);
    let mut r_pinv = DMatrix::zeros(width, l);
    for (k, &i) in kept.iter().enumerate() {
        let vrow = vt_full.row(i);
        // fix the sign so the largest entry of each row of R is positive
        let pivot = vrow
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        u.set_column(k, &(u_full.column(i) * sign));
        r.set_row(k, &(vrow * (sign * sv[i])));
        r_pinv.set_column(k, &(vrow.transpose() * (sign / sv[i])));
    }
    Some(GroupFactor { u, r, r_pinv })
}

impl StandardizedDesign {
    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factors(&self) -> &[GroupFactor] {
        &self.factors
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(GroupFactor::rank).collect()
    }

    /// Start offsets of `Ĩ_1 … Ĩ_m` in `0..p̃`, followed by `p̃`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn x_tilde(&self) -> &DMatrix<f64> {
        &self.x_tilde
    }

    pub fn n_groups(&self) -> usize {
        self.factors.len()
    }

    pub fn n_rows(&self) -> usize {
        self.x_tilde.nrows()
    }

    /// `p̃ = Σ l_i`.
    pub fn n_std_columns(&self) -> usize {
        self.x_tilde.ncols()
    }

    pub fn n_columns(&self) -> usize {
        self.partition.n_columns()
    }

    /// Replaces the group weights; ranks and factors are untouched.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.partition = self.partition.with_weights(weights.clone())?;
        self.weights = weights;
        Ok(self)
    }

    /// Largest `|U_iᵀ U_j|` entry over pairs of distinct groups.
    pub fn cross_group_coherence(&self) -> f64 {
        let gram = self.x_tilde.tr_mul(&self.x_tilde);
        let mut worst: f64 = 0.0;
        for i in 0..self.n_groups() {
            for j in 0..self.n_groups() {
                if i == j {
                    continue;
                }
                let (ri, rj) = (
                    self.offsets[i]..self.offsets[i + 1],
                    self.offsets[j]..self.offsets[j + 1],
                );
                for a in ri.clone() {
                    for b in rj.clone() {
                        worst = worst.max(gram[(a, b)].abs());
                    }
                }
            }
        }
        worst
    }

    /// Maps a raw coefficient vector to standardized coordinates, `c_{Ĩ_i} = R_i b_{I_i}`.
    pub fn forward(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.n_columns() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector has length {}, design has {} columns",
                b.len(),
                self.n_columns()
            )));
        }
        let mut c = DVector::zeros(self.n_std_columns());
        for (g, f) in self.factors.iter().enumerate() {
            let bg = DVector::from_iterator(f.r.ncols(), self.partition.group(g).iter().map(|&j| b[j]));
            c.rows_mut(self.offsets[g], f.rank()).copy_from(&(&f.r * bg));
        }
        Ok(c)
    }
}

/// Vector of per-group effects `‖X_{I_i} b_{I_i}‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEffects(pub Vec<f64>);

impl GroupEffects {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices with a strictly positive effect.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Group effects of raw coefficients `b` under design `x`.
pub fn group_effects(x: &DMatrix<f64>, partition: &GroupPartition, b: &DVector<f64>) -> Result<GroupEffects> {
    if b.len() != x.ncols() || x.ncols() != partition.n_columns() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, coefficients {}, partition {}",
            x.ncols(),
            b.len(),
            partition.n_columns()
        )));
    }
    let effects = partition
        .groups()
        .iter()
        .map(|cols| {
            let mut fitted = DVector::zeros(x.nrows());
            for &j in cols {
                fitted.axpy(b[j], &x.column(j), 1.0);
            }
            fitted.norm()
        })
        .collect();
    Ok(GroupEffects(effects))
}

/// Group effects of standardized coefficients: entry i is `‖c_{Ĩ_i}‖₂`.
pub fn standardized_effects(design: &StandardizedDesign, c: &DVector<f64>) -> Result<GroupEffects> {
    if c.len() != design.n_std_columns() {
        return Err(Error::DimensionMismatch(format!(
            "standardized vector has length {}, expected {}",
            c.len(),
            design.n_std_columns()
        )));
    }
    Ok(GroupEffects(block_norms(c.as_slice(), design.offsets())))
}

pub(crate) fn block_norms(v: &[f64], offsets: &[usize]) -> Vec<f64> {
    offsets
        .windows(2)
        .map(|w| v[w[0]..w[1]].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

/// Recovers coefficients from a standardized solution: per group, the
/// minimum-norm solution of `R_i β_{I_i} = c_{Ĩ_i}`.
pub fn backmap(c: &DVector<f64>, design: &StandardizedDesign) -> Result<DVector<f64>> {
    if c.len() != design.n_std_columns() {
        return Err(Error::DimensionMismatch(format!(
            "standardized vector has length {}, expected {}",
            c.len(),
            design.n_std_columns()
        )));
    }
    let mut beta = DVector::zeros(design.n_columns());
    for (g, f) in design.factors().iter().enumerate() {
        let cg = c.rows(design.offsets()[g], f.rank());
        let bg = &f.r_pinv * cg;
        for (k, &j) in design.partition().group(g).iter().enumerate() {
            beta[j] = bg[k];
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn partition_from_labels() {
        let p = build_partition(&["a", "a", "b"], None).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1], vec![2]]);
        assert_eq!(p.len(), 2);
        let p = build_partition(&["a", "b", "a"], None).unwrap();
        assert_eq!(p.groups(), &[vec![0, 2], vec![1]]);
        // label gaps are fine; ids are opaque
        let p = build_partition(&[7, 7, 42], Some(&[1.0, 2.0])).unwrap();
        assert_eq!(p.weights(), Some(&[1.0, 2.0][..]));
    }

    #[test]
    fn partition_errors() {
        let empty: [&str; 0] = [];
        assert_eq!(build_partition(&empty, None), Err(Error::EmptyDesign));
        assert!(matches!(
            build_partition(&[1, 2], Some(&[1.0, 0.0])),
            Err(Error::InvalidWeight { group: 2, .. })
        ));
        assert!(build_partition(&[1, 2], Some(&[1.0])).is_err());
        assert!(GroupPartition::new(vec![vec![0], vec![0]], None).is_err());
    }

    #[test]
    fn duplicate_column_has_rank_one() {
        let v = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        let x = DMatrix::from_columns(&[v.clone(), v.clone()]);
        let part = GroupPartition::contiguous(&[2], None).unwrap();
        let d = standardize(&x, &part, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.ranks(), vec![1]);
        let f = &d.factors()[0];
        let norm = v.norm();
        assert!((f.u.column(0) - &v / norm).norm() < 1e-12);
        assert!((f.r[(0, 0)] - norm).abs() < 1e-12 && (f.r[(0, 1)] - norm).abs() < 1e-12);
        assert_eq!(d.weights(), &[1.0]);
    }

    #[test]
    fn identity_singletons() {
        let x = DMatrix::<f64>::identity(4, 4);
        let part = GroupPartition::contiguous(&[1, 1, 1, 1], None).unwrap();
        let d = standardize(&x, &part, DEFAULT_RANK_TOL).unwrap();
        for (i, f) in d.factors().iter().enumerate() {
            assert_eq!(f.rank(), 1);
            assert!((f.r[(0, 0)] - 1.0).abs() < 1e-14);
            assert!((f.u[(i, 0)] - 1.0).abs() < 1e-14);
        }
        assert_eq!(d.offsets(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn zero_group_is_rejected() {
        let mut x = DMatrix::<f64>::identity(3, 3);
        x[(2, 2)] = 0.0;
        let part = GroupPartition::contiguous(&[2, 1], None).unwrap();
        assert_eq!(
            standardize(&x, &part, DEFAULT_RANK_TOL).unwrap_err(),
            Error::ZeroGroup(2)
        );
    }

    #[test]
    fn random_full_rank_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = gaussian(10, 3, &mut rng);
        let part = GroupPartition::contiguous(&[3], None).unwrap();
        let d = standardize(&x, &part, DEFAULT_RANK_TOL).unwrap();
        let f = &d.factors()[0];
        assert_eq!(f.rank(), 3);
        assert!((f.u.tr_mul(&f.u) - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);
        assert!((&f.u * &f.r - &x).norm() < 1e-10);
    }

    #[test]
    fn effects_examples() {
        let x = DMatrix::<f64>::identity(2, 2);
        let singles = GroupPartition::contiguous(&[1, 1], None).unwrap();
        let e = group_effects(&x, &singles, &DVector::from_vec(vec![3.0, -4.0])).unwrap();
        assert_eq!(e.values(), &[3.0, 4.0]);
        let e = group_effects(&x, &singles, &DVector::zeros(2)).unwrap();
        assert_eq!(e.values(), &[0.0, 0.0]);
        let one = GroupPartition::contiguous(&[2], None).unwrap();
        let e = group_effects(&x, &one, &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_eq!(e.values(), &[5.0]);
        assert!(group_effects(&x, &one, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn backmap_examples() {
        let x = DMatrix::from_column_slice(1, 1, &[2.0]);
        let part = GroupPartition::contiguous(&[1], None).unwrap();
        let d = standardize(&x, &part, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.factors()[0].r[(0, 0)], 2.0);
        let beta = backmap(&DVector::from_vec(vec![6.0]), &d).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-14);
        assert_eq!(backmap(&DVector::zeros(1), &d).unwrap()[0], 0.0);

        // R = ‖v‖·[1 1]: pseudoinverse oracle gives the midpoint of the solution line
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let x = DMatrix::from_columns(&[v.clone(), v.clone()]);
        let part = GroupPartition::contiguous(&[2], None).unwrap();
        let d = standardize(&x, &part, DEFAULT_RANK_TOL).unwrap();
        let t = 1.7;
        let beta = backmap(&DVector::from_vec(vec![t]), &d).unwrap();
        let expect = t / (2.0 * 5.0);
        assert!((beta[0] - expect).abs() < 1e-14 && (beta[1] - expect).abs() < 1e-14);
    }

    fn random_design(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, GroupPartition) {
        // full-rank and deficient blocks side by side
        let n = 12;
        let a = gaussian(n, 3, rng);
        let base = gaussian(n, 2, rng);
        let mix = gaussian(2, 4, rng);
        let deficient = &base * &mix;
        let c = gaussian(n, 1, rng);
        let x = DMatrix::from_columns(
            &a.column_iter()
                .chain(deficient.column_iter())
                .chain(c.column_iter())
                .map(|col| col.into_owned())
                .collect::<Vec<_>>(),
        );
        (x, GroupPartition::contiguous(&[3, 4, 1], None).unwrap())
    }

    #[test]
    fn reconstruction_effects_and_backmap_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (x, part) = random_design(&mut rng);
            let d = standardize(&x, &part, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(d.ranks(), vec![3, 2, 1]);
            for (g, f) in d.factors().iter().enumerate() {
                let block = x.select_columns(part.group(g));
                assert!((&f.u * &f.r - &block).norm() <= 1e-8 * block.norm());
                let l = f.rank();
                assert!((f.u.tr_mul(&f.u) - DMatrix::<f64>::identity(l, l)).norm() < 1e-10);
            }
            let b = DVector::from_fn(8, |_, _| StandardNormal.sample(&mut rng));
            let raw = group_effects(&x, &part, &b).unwrap();
            let c = d.forward(&b).unwrap();
            let std = standardized_effects(&d, &c).unwrap();
            for (u, v) in raw.values().iter().zip(std.values()) {
                assert!((u - v).abs() < 1e-10);
            }
            assert!((&x * &b - d.x_tilde() * &c).norm() < 1e-10);

            let c = DVector::from_fn(d.n_std_columns(), |_, _| StandardNormal.sample(&mut rng));
            let beta = backmap(&c, &d).unwrap();
            let back = group_effects(&x, &part, &beta).unwrap();
            let want = standardized_effects(&d, &c).unwrap();
            for (u, v) in back.values().iter().zip(want.values()) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }
}
