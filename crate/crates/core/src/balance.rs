//! Covariate balance primitives: the data matrix, treatment assignments, and
//! the scaled Mahalanobis distance between group means,
//!
//!   M = n·p_w·(1−p_w) · d' cov(x)⁻¹ d,   d = x'(W − p_w·1) / (n·p_w·(1−p_w)),
//!
//! where d equals the vector of covariate mean differences (treated minus
//! control). When cov(x) is singular the pseudo-inverse is used, so M measures
//! imbalance on the subspace the covariates actually span.

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An n×k matrix of unit covariates with named columns. Requires n ≥ 2,
/// k ≥ 1, and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    data: DMatrix<f64>,
    names: Vec<String>,
}

impl CovariateMatrix {
    /// Build from row-major unit records. With `names` omitted, columns are
    /// called x1..xk.
    pub fn from_rows(rows: &[Vec<f64>], names: Option<Vec<String>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 units, got {n}"
            )));
        }
        let k = rows[0].len();
        if k == 0 {
            return Err(Error::InvalidArgument("need at least 1 covariate".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} covariates, expected {k}",
                    i + 1,
                    row.len()
                )));
            }
        }
        let data = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
        Self::from_matrix(data, names)
    }

    /// Build from an existing matrix (units in rows).
    pub fn from_matrix(data: DMatrix<f64>, names: Option<Vec<String>>) -> Result<Self> {
        let (n, k) = data.shape();
        if n < 2 || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "covariate matrix must be at least 2×1, got {n}×{k}"
            )));
        }
        for j in 0..k {
            for i in 0..n {
                let v = data[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "covariate ({}, {}) is not finite: {v}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let names = match names {
            Some(names) => {
                if names.len() != k {
                    return Err(Error::DimensionMismatch(format!(
                        "{} column names for {k} columns",
                        names.len()
                    )));
                }
                names
            }
            None => (1..=k).map(|j| format!("x{j}")).collect(),
        };
        Ok(CovariateMatrix { data, names })
    }

    /// Single-covariate convenience constructor.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::from_rows(
            &values.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
            None,
        )
    }

    pub fn n_units(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.data.ncols()
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn value(&self, unit: usize, covariate: usize) -> f64 {
        self.data[(unit, covariate)]
    }
}

impl Serialize for CovariateMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            names: &'a [String],
            rows: Vec<Vec<f64>>,
        }
        let rows = (0..self.n_units())
            .map(|i| self.data.row(i).iter().copied().collect())
            .collect();
        Repr { names: &self.names, rows }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovariateMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            names: Vec<String>,
            rows: Vec<Vec<f64>>,
        }
        let repr = Repr::deserialize(d)?;
        CovariateMatrix::from_rows(&repr.rows, Some(repr.names)).map_err(D::Error::custom)
    }
}

/// A two-group treatment split: `w[i]` is true when unit i is treated. Both
/// groups must be nonempty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    w: Vec<bool>,
    n_treated: usize,
}

impl Assignment {
    pub fn new(w: Vec<bool>) -> Result<Self> {
        let n_treated = w.iter().filter(|&&t| t).count();
        if n_treated == 0 || n_treated == w.len() {
            return Err(Error::InvalidArgument(format!(
                "assignment needs units in both groups, got {n_treated} treated of {}",
                w.len()
            )));
        }
        Ok(Assignment { w, n_treated })
    }

    /// Build from 0/1 flags.
    pub fn from_indicators(bits: &[u8]) -> Result<Self> {
        let w = bits
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "assignment indicator must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
        Assignment::new(w)
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn n_treated(&self) -> usize {
        self.n_treated
    }

    pub fn n_control(&self) -> usize {
        self.w.len() - self.n_treated
    }

    /// Treated fraction p_w.
    pub fn treated_fraction(&self) -> f64 {
        self.n_treated as f64 / self.w.len() as f64
    }

    pub fn is_treated(&self, unit: usize) -> bool {
        self.w[unit]
    }

    pub fn flags(&self) -> &[bool] {
        &self.w
    }

    pub fn indicators(&self) -> Vec<u8> {
        self.w.iter().map(|&t| t as u8).collect()
    }

    /// The label-swapped assignment 1 − w.
    pub fn mirrored(&self) -> Assignment {
        Assignment {
            w: self.w.iter().map(|&t| !t).collect(),
            n_treated: self.n_control(),
        }
    }
}

impl Serialize for Assignment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.w.iter().map(|&t| t as u8))
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(d)?;
        Assignment::from_indicators(&bits).map_err(D::Error::custom)
    }
}

/// Column-wise treated-minus-control covariate means, computed through the
/// identity d = x'(W − p_w·1) / (n·p_w·(1−p_w)).
pub fn diff_in_means(x: &CovariateMatrix, w: &Assignment) -> Result<DVector<f64>> {
    check_lengths(x, w)?;
    let column_sums = x.data().row_sum().transpose();
    Ok(diff_from_sums(x, &column_sums, w))
}

fn check_lengths(x: &CovariateMatrix, w: &Assignment) -> Result<()> {
    if x.n_units() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} units in the covariate matrix but {} in the assignment",
            x.n_units(),
            w.n()
        )));
    }
    Ok(())
}

fn diff_from_sums(x: &CovariateMatrix, column_sums: &DVector<f64>, w: &Assignment) -> DVector<f64> {
    let n = x.n_units() as f64;
    let p = w.treated_fraction();
    let denom = n * p * (1.0 - p);
    let k = x.n_covariates();
    let mut d = DVector::zeros(k);
    for j in 0..k {
        let col = x.data().column(j);
        let mut treated_sum = 0.0;
        for (i, &flag) in w.flags().iter().enumerate() {
            if flag {
                treated_sum += col[i];
            }
        }
        d[j] = (treated_sum - p * column_sums[j]) / denom;
    }
    d
}

/// Sample covariance of the covariates with divisor n − 1.
pub fn sample_covariance(x: &CovariateMatrix) -> DMatrix<f64> {
    let n = x.n_units();
    let k = x.n_covariates();
    let means = x.data().row_mean();
    let mut s = DMatrix::zeros(k, k);
    for j in 0..k {
        for l in j..k {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (x.value(i, j) - means[j]) * (x.value(i, l) - means[l]);
            }
            let v = acc / (n - 1) as f64;
            s[(j, l)] = v;
            s[(l, j)] = v;
        }
    }
    s
}

/// Precomputed state for evaluating many assignments against one covariate
/// matrix: the sample covariance and a whitening factor of its pseudo-inverse,
/// so each distance evaluation is a small matrix-vector solve rather than a
/// fresh factorization.
#[derive(Debug, Clone)]
pub struct BalanceContext {
    x: CovariateMatrix,
    n_treated: usize,
    covariance: DMatrix<f64>,
    /// rank×k; satisfies whitener · covariance · whitenerᵀ = I on the row space
    whitener: DMatrix<f64>,
    rank: usize,
    column_sums: DVector<f64>,
}

impl BalanceContext {
    /// `n_treated` is the design group size used by samplers and calibration;
    /// distance evaluations use each assignment's own group fraction.
    pub fn new(x: &CovariateMatrix, n_treated: usize) -> Result<Self> {
        let n = x.n_units();
        if n_treated == 0 || n_treated >= n {
            return Err(Error::InvalidArgument(format!(
                "design group size must leave both groups nonempty: {n_treated} of {n}"
            )));
        }
        let covariance = sample_covariance(x);
        let k = x.n_covariates();
        let eig = covariance.clone().symmetric_eigen();
        let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let tolerance = lambda_max * k as f64 * f64::EPSILON * 64.0;
        let kept: Vec<usize> = (0..k)
            .filter(|&i| eig.eigenvalues[i] > tolerance && eig.eigenvalues[i] > 0.0)
            .collect();
        if kept.is_empty() {
            return Err(Error::DegenerateCovariates);
        }
        let mut whitener = DMatrix::zeros(kept.len(), k);
        for (row, &i) in kept.iter().enumerate() {
            let scale = eig.eigenvalues[i].sqrt().recip();
            for j in 0..k {
                whitener[(row, j)] = eig.eigenvectors[(j, i)] * scale;
            }
        }
        let column_sums = x.data().row_sum().transpose();
        Ok(BalanceContext {
            x: x.clone(),
            n_treated,
            covariance,
            whitener,
            rank: kept.len(),
            column_sums,
        })
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.x
    }

    pub fn n_units(&self) -> usize {
        self.x.n_units()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.n_covariates()
    }

    pub fn n_treated(&self) -> usize {
        self.n_treated
    }

    pub fn n_control(&self) -> usize {
        self.n_units() - self.n_treated
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Rank of the covariance after the tolerance cut.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The whitening factor F (rank×k) with F·cov·Fᵀ = I.
    pub fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    /// Treated-minus-control covariate means for `w`.
    pub fn diff_in_means(&self, w: &Assignment) -> Result<DVector<f64>> {
        check_lengths(&self.x, w)?;
        Ok(diff_from_sums(&self.x, &self.column_sums, w))
    }

    fn scale(&self, n_treated: usize) -> f64 {
        let n = self.n_units() as f64;
        let p = n_treated as f64 / n;
        n * p * (1.0 - p)
    }

    /// The balance distance for a mean-difference vector produced by an
    /// assignment with `n_treated` treated units.
    pub fn mahalanobis_from_diff(&self, d: &DVector<f64>, n_treated: usize) -> f64 {
        let z = &self.whitener * d;
        self.scale(n_treated) * z.norm_squared()
    }

    /// The balance distance M for assignment `w`.
    pub fn mahalanobis(&self, w: &Assignment) -> Result<f64> {
        let d = self.diff_in_means(w)?;
        Ok(self.mahalanobis_from_diff(&d, w.n_treated()))
    }

    /// The standardized mean difference z = (n·p_w·(1−p_w))^{1/2}·F·d, whose
    /// squared norm is M and whose covariance over uniform assignments is the
    /// identity on the covariate row space.
    pub fn standardized_diff(&self, d: &DVector<f64>, n_treated: usize) -> DVector<f64> {
        (&self.whitener * d) * self.scale(n_treated).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn assignment(bits: &[u8]) -> Assignment {
        Assignment::from_indicators(bits).unwrap()
    }

    #[test]
    fn diff_in_means_matches_hand_value() {
        let x = CovariateMatrix::from_column(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = assignment(&[1, 1, 0, 0]);
        let d = diff_in_means(&x, &w).unwrap();
        assert_eq!(d[0], -2.0);
    }

    #[test]
    fn diff_identity_equals_group_means() {
        let x = CovariateMatrix::from_rows(
            &[
                vec![0.3, -1.2],
                vec![1.7, 0.4],
                vec![-0.9, 2.2],
                vec![2.4, -0.5],
                vec![0.1, 1.1],
                vec![-1.6, 0.9],
            ],
            None,
        )
        .unwrap();
        for bits in [[1, 1, 0, 0, 0, 1], [1, 0, 1, 0, 1, 0], [0, 1, 1, 1, 0, 0]] {
            let w = assignment(&bits);
            let d = diff_in_means(&x, &w).unwrap();
            for j in 0..2 {
                let mut t = (0.0, 0usize);
                let mut c = (0.0, 0usize);
                for i in 0..6 {
                    if w.is_treated(i) {
                        t = (t.0 + x.value(i, j), t.1 + 1);
                    } else {
                        c = (c.0 + x.value(i, j), c.1 + 1);
                    }
                }
                let direct = t.0 / t.1 as f64 - c.0 / c.1 as f64;
                assert_relative_eq!(d[j], direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sample_covariance_hand_values() {
        let x = CovariateMatrix::from_column(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(sample_covariance(&x)[(0, 0)], 1.0);

        let x2 = CovariateMatrix::from_rows(
            &[vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, 0.0]],
            None,
        )
        .unwrap();
        let s = sample_covariance(&x2);
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(1, 1)], 1.0);
        assert_eq!(s[(0, 1)], -1.0);
        assert_eq!(s[(1, 0)], -1.0);
    }

    #[test]
    fn mahalanobis_scalar_case_brute_force() {
        // x = (0,1,2) has unit variance, so M = n·p·(1−p)·d²
        let x = CovariateMatrix::from_column(&[0.0, 1.0, 2.0]).unwrap();
        let ctx = BalanceContext::new(&x, 1).unwrap();

        // treated {2,3}: means 1.5 vs 0, d = 1.5, M = 3·(2/9)·2.25 = 1.5
        let m = ctx.mahalanobis(&assignment(&[0, 1, 1])).unwrap();
        assert_relative_eq!(m, 1.5, epsilon = 1e-12);

        // treated {1,3}: both group means are 1, perfectly balanced
        let m0 = ctx.mahalanobis(&assignment(&[1, 0, 1])).unwrap();
        assert_relative_eq!(m0, 0.0, epsilon = 1e-14);

        // singleton treated group, p_w = 1/3: scale = 2/3, d = −1.5
        let m1 = ctx.mahalanobis(&assignment(&[1, 0, 0])).unwrap();
        assert_relative_eq!(m1, (2.0 / 3.0) * 2.25, epsilon = 1e-12);
    }

    #[test]
    fn mahalanobis_matches_dense_solve() {
        let x = CovariateMatrix::from_rows(
            &[
                vec![0.5, 1.0, -0.3],
                vec![-1.1, 0.2, 0.8],
                vec![0.9, -0.7, 1.5],
                vec![2.0, 0.3, -1.2],
                vec![-0.4, 1.8, 0.1],
                vec![1.3, -1.5, 0.6],
                vec![0.2, 0.9, 1.9],
                vec![-1.7, 0.4, -0.8],
            ],
            None,
        )
        .unwrap();
        let ctx = BalanceContext::new(&x, 4).unwrap();
        for bits in [[1, 1, 1, 1, 0, 0, 0, 0], [1, 0, 1, 0, 1, 0, 1, 0], [0, 1, 1, 0, 0, 1, 0, 1]] {
            let w = assignment(&bits);
            let d = diff_in_means(&x, &w).unwrap();
            let s = sample_covariance(&x);
            let solved = s.lu().solve(&d).unwrap();
            let expected = 8.0 * 0.25 * d.dot(&solved);
            assert_relative_eq!(ctx.mahalanobis(&w).unwrap(), expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn duplicated_column_falls_back_to_row_space() {
        let base = [0.4, -1.3, 2.1, 0.8, -0.6, 1.9];
        let x1 = CovariateMatrix::from_column(&base).unwrap();
        let x2 = CovariateMatrix::from_rows(
            &base.iter().map(|&v| vec![v, 2.0 * v]).collect::<Vec<_>>(),
            None,
        )
        .unwrap();
        let c1 = BalanceContext::new(&x1, 3).unwrap();
        let c2 = BalanceContext::new(&x2, 3).unwrap();
        assert_eq!(c2.rank(), 1);
        for bits in [[1, 1, 1, 0, 0, 0], [1, 0, 1, 0, 1, 0], [0, 1, 0, 1, 1, 0]] {
            let w = assignment(&bits);
            assert_relative_eq!(
                c1.mahalanobis(&w).unwrap(),
                c2.mahalanobis(&w).unwrap(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn whitener_inverts_covariance_on_row_space() {
        let x = CovariateMatrix::from_rows(
            &[
                vec![1.0, 2.0, 2.0],
                vec![0.0, 1.0, 1.0],
                vec![3.0, 0.5, 0.5],
                vec![-1.0, 1.5, 1.5],
                vec![2.0, -0.5, -0.5],
            ],
            None,
        )
        .unwrap();
        let ctx = BalanceContext::new(&x, 2).unwrap();
        assert_eq!(ctx.rank(), 2); // third column duplicates the second
        let product = ctx.whitener() * ctx.covariance() * ctx.whitener().transpose();
        let identity = DMatrix::<f64>::identity(2, 2);
        assert_relative_eq!(product, identity, epsilon = 1e-10);
    }

    #[test]
    fn constant_covariates_are_degenerate() {
        let x = CovariateMatrix::from_column(&[3.0, 3.0, 3.0, 3.0]).unwrap();
        assert!(matches!(
            BalanceContext::new(&x, 2),
            Err(Error::DegenerateCovariates)
        ));
    }

    #[test]
    fn validation_errors() {
        assert!(CovariateMatrix::from_rows(&[vec![1.0]], None).is_err());
        assert!(CovariateMatrix::from_rows(&[vec![], vec![]], None).is_err());
        assert!(CovariateMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], None).is_err());
        assert!(CovariateMatrix::from_rows(&[vec![1.0], vec![f64::NAN]], None).is_err());
        assert!(
            CovariateMatrix::from_rows(&[vec![1.0], vec![2.0]], Some(vec!["a".into(), "b".into()]))
                .is_err()
        );
        assert!(Assignment::new(vec![true, true]).is_err());
        assert!(Assignment::new(vec![false, false]).is_err());
        assert!(Assignment::from_indicators(&[0, 1, 2]).is_err());

        let x = CovariateMatrix::from_column(&[1.0, 2.0, 3.0]).unwrap();
        assert!(BalanceContext::new(&x, 0).is_err());
        assert!(BalanceContext::new(&x, 3).is_err());
        let w4 = assignment(&[1, 0, 0, 1]);
        assert!(diff_in_means(&x, &w4).is_err());
    }

    #[test]
    fn assignment_serde_round_trip() {
        let w = assignment(&[0, 1, 1, 0, 1]);
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "[0,1,1,0,1]");
        let back: Assignment = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<Assignment>("[1,1]").is_err());
    }

    #[test]
    fn covariate_matrix_serde_round_trip() {
        let x = CovariateMatrix::from_rows(
            &[vec![1.0, 2.0], vec![3.0, 4.0]],
            Some(vec!["age".into(), "score".into()]),
        )
        .unwrap();
        let json = serde_json::to_string(&x).unwrap();
        let back: CovariateMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn mirrored_assignment_has_same_distance() {
        let x = CovariateMatrix::from_rows(
            &[
                vec![0.2, 1.4],
                vec![-1.0, 0.6],
                vec![0.8, -0.9],
                vec![1.5, 0.3],
                vec![-0.7, -1.1],
                vec![0.4, 0.8],
            ],
            None,
        )
        .unwrap();
        let ctx = BalanceContext::new(&x, 3).unwrap();
        for bits in [[1, 1, 1, 0, 0, 0], [1, 0, 0, 1, 0, 1], [0, 0, 1, 1, 1, 0]] {
            let w = assignment(&bits);
            let m = ctx.mahalanobis(&w).unwrap();
            let m_swapped = ctx.mahalanobis(&w.mirrored()).unwrap();
            assert_relative_eq!(m, m_swapped, max_relative = 1e-12);
        }
    }

    proptest! {
        // the distance is invariant under invertible affine maps of the covariates
        #[test]
        fn mahalanobis_affine_invariant(
            seed_entries in proptest::collection::vec(-3.0f64..3.0, 20),
            b_entries in proptest::collection::vec(-2.0f64..2.0, 4),
            shift in proptest::collection::vec(-5.0f64..5.0, 2),
            bits in proptest::collection::vec(0u8..2, 10),
        ) {
            let det = b_entries[0] * b_entries[3] - b_entries[1] * b_entries[2];
            prop_assume!(det.abs() > 0.05);
            let ones = bits.iter().filter(|&&b| b == 1).count();
            prop_assume!((1..=9).contains(&ones));

            let rows: Vec<Vec<f64>> = seed_entries.chunks(2).map(|c| c.to_vec()).collect();
            let x = CovariateMatrix::from_rows(&rows, None).unwrap();
            let transformed: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r[0] * b_entries[0] + r[1] * b_entries[2] + shift[0],
                        r[0] * b_entries[1] + r[1] * b_entries[3] + shift[1],
                    ]
                })
                .collect();
            let xt = CovariateMatrix::from_rows(&transformed, None).unwrap();

            let ctx = BalanceContext::new(&x, 5).unwrap();
            let ctx_t = BalanceContext::new(&xt, 5).unwrap();
            prop_assume!(ctx.rank() == 2 && ctx_t.rank() == 2);

            let w = Assignment::from_indicators(&bits).unwrap();
            let m = ctx.mahalanobis(&w).unwrap();
            let mt = ctx_t.mahalanobis(&w).unwrap();
            prop_assert!((m - mt).abs() <= 1e-8 * (1.0 + m.abs()));
        }

        #[test]
        fn diff_identity_holds_generally(
            values in proptest::collection::vec(-10.0f64..10.0, 8),
            bits in proptest::collection::vec(0u8..2, 8),
        ) {
            let ones = bits.iter().filter(|&&b| b == 1).count();
            prop_assume!((1..=7).contains(&ones));
            let x = CovariateMatrix::from_column(&values).unwrap();
            let w = Assignment::from_indicators(&bits).unwrap();
            let d = diff_in_means(&x, &w).unwrap();
            let t: f64 = values.iter().zip(&bits).filter(|(_, &b)| b == 1).map(|(v, _)| v).sum();
            let c: f64 = values.iter().zip(&bits).filter(|(_, &b)| b == 0).map(|(v, _)| v).sum();
            let direct = t / ones as f64 - c / (8 - ones) as f64;
            prop_assert!((d[0] - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        }
    }
}
