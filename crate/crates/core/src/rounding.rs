//! Partitions, membership matrices, the half-diagonal rounding rule, error
//! metrics, and an exhaustive integer-program oracle for small instances.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::similarity::SimilarityMatrix;

/// Largest `n` accepted by [`brute_force_kmeans`].
pub const BRUTE_FORCE_MAX_N: usize = 14;

/// A partition of `0..n` into `k` nonempty clusters, labels `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment", into = "RawAssignment")]
pub struct Assignment {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl TryFrom<RawAssignment> for Assignment {
    type Error = Error;
    fn try_from(r: RawAssignment) -> Result<Self> {
        Assignment::new(r.labels, r.k)
    }
}

impl From<Assignment> for RawAssignment {
    fn from(a: Assignment) -> Self {
        RawAssignment {
            k: a.k(),
            labels: a.labels,
        }
    }
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || k > labels.len() {
            return Err(Error::InvalidClusterCount { k, n: labels.len() });
        }
        let mut sizes = vec![0usize; k];
        for (index, &label) in labels.iter().enumerate() {
            if label == 0 || label > k {
                return Err(Error::LabelOutOfRange { index, label, k });
            }
            sizes[label - 1] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster { cluster: empty + 1 });
        }
        Ok(Self { labels, sizes })
    }

    /// Relabel arbitrary integer labels in order of first appearance.
    pub fn from_raw_labels<T: Eq + std::hash::Hash + Copy>(raw: &[T]) -> Result<Self> {
        let mut seen = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|l| {
                let next = seen.len() + 1;
                *seen.entry(*l).or_insert(next)
            })
            .collect();
        let k = seen.len();
        Assignment::new(labels, k)
    }

    /// Contiguous blocks of the given sizes: `1,…,1,2,…,2,…`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c + 1, s))
            .collect();
        Assignment::new(labels, sizes.len())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn min_cluster_size(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    /// Indices of each cluster, in label order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l - 1].push(i);
        }
        out
    }
}

/// `Z*_ij = 1/n_k` when `i, j` share cluster `k`, else 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    z_star: DMatrix<f64>,
    assignment: Assignment,
}

impl MembershipMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z_star
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }
}

pub fn membership_matrix(a: &Assignment) -> MembershipMatrix {
    let n = a.n();
    let labels = a.labels();
    let sizes = a.cluster_sizes();
    let z = DMatrix::from_fn(n, n, |i, j| {
        if labels[i] == labels[j] {
            1.0 / sizes[labels[i] - 1] as f64
        } else {
            0.0
        }
    });
    MembershipMatrix {
        z_star: z,
        assignment: a.clone(),
    }
}

/// Sequential rounding: take the smallest unassigned index `j`, group every
/// unassigned `i` with `Ẑ_ji ≥ ½ Ẑ_jj`, repeat. Labels follow discovery order.
/// A zero diagonal entry yields a singleton.
pub fn round_solution(z_hat: &DMatrix<f64>) -> Result<Assignment> {
    let n = linalg::ensure_square(z_hat)?;
    if n == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if let Some(j) = (0..n).find(|&j| z_hat[(j, j)].is_nan() || z_hat[(j, j)] < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "negative diagonal entry {} at index {j}",
            z_hat[(j, j)]
        )));
    }
    let mut labels = vec![0usize; n];
    let mut next = 0;
    for j in 0..n {
        if labels[j] != 0 {
            continue;
        }
        next += 1;
        let diag = z_hat[(j, j)];
        if diag == 0.0 {
            labels[j] = next;
            continue;
        }
        let threshold = 0.5 * diag;
        for i in j..n {
            if labels[i] == 0 && z_hat[(j, i)] >= threshold {
                labels[i] = next;
            }
        }
    }
    Assignment::new(labels, next)
}

/// `|Ẑ − Z*|₁`.
pub fn error_l1(z_hat: &DMatrix<f64>, z_star: &MembershipMatrix) -> Result<f64> {
    let zs = z_star.matrix();
    if z_hat.shape() != zs.shape() {
        return Err(Error::DimensionMismatch {
            context: "error_l1",
            expected: zs.nrows(),
            found: z_hat.nrows(),
        });
    }
    Ok(linalg::l1_norm(&(z_hat - zs)))
}

/// Equality up to relabeling, via a consistent label bijection.
pub fn same_partition(a: &Assignment, b: &Assignment) -> bool {
    if a.n() != b.n() || a.k() != b.k() {
        return false;
    }
    let mut forward = vec![0usize; a.k() + 1];
    let mut backward = vec![0usize; b.k() + 1];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        if forward[x] == 0 && backward[y] == 0 {
            forward[x] = y;
            backward[y] = x;
        } else if forward[x] != y || backward[y] != x {
            return false;
        }
    }
    true
}

/// `Σ_k |G_k|⁻¹ Σ_{i,j ∈ G_k} a_ij`, i.e. `⟨A, HBHᵀ⟩`.
pub fn kmeans_objective(a: &DMatrix<f64>, assignment: &Assignment) -> f64 {
    assignment
        .clusters()
        .iter()
        .map(|members| {
            let s: f64 = members
                .iter()
                .flat_map(|&i| members.iter().map(move |&j| a[(i, j)]))
                .sum();
            s / members.len() as f64
        })
        .sum()
}

struct Enumerator<'a> {
    a: &'a DMatrix<f64>,
    k: usize,
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
    sums: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
}

impl Enumerator<'_> {
    fn score(&self) -> f64 {
        self.sums
            .iter()
            .zip(&self.members)
            .map(|(s, m)| s / m.len() as f64)
            .sum()
    }

    // Restricted-growth strings visited in lexicographic order; a strict `>`
    // keeps the lexicographically smallest maximizer.
    fn visit(&mut self, i: usize, used: usize) {
        let n = self.labels.len();
        if n - i < self.k - used {
            return;
        }
        if i == n {
            let score = self.score();
            if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
                self.best = Some((score, self.labels.clone()));
            }
            return;
        }
        let limit = (used + 1).min(self.k);
        for block in 0..limit {
            let delta: f64 = self.a[(i, i)]
                + 2.0
                    * self.members[block]
                        .iter()
                        .map(|&j| self.a[(i, j)])
                        .sum::<f64>();
            self.sums[block] += delta;
            self.members[block].push(i);
            self.labels[i] = block + 1;
            self.visit(i + 1, used.max(block + 1));
            self.members[block].pop();
            self.sums[block] -= delta;
        }
    }
}

/// Exhaustive maximizer of the K-means integer program over all partitions
/// into exactly `k` nonempty clusters.
pub fn brute_force_kmeans(a: &SimilarityMatrix, k: usize) -> Result<(Assignment, f64)> {
    let am = a.matrix();
    let n = linalg::ensure_square(am)?;
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    let mut e = Enumerator {
        a: am,
        k,
        labels: vec![0; n],
        members: vec![Vec::new(); k],
        sums: vec![0.0; k],
        best: None,
    };
    e.visit(0, 0);
    let (_, labels) = e
        .best
        .expect("at least one partition exists for 1 <= k <= n");
    let assignment = Assignment::new(labels, k)?;
    // Recompute from scratch so the reported value does not carry the
    // incremental rounding of the search.
    let objective = kmeans_objective(am, &assignment);
    Ok((assignment, objective))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs` for inequalities, `−|rhs − lhs|` for equalities.
    pub slack: f64,
    pub pass: bool,
}

/// The three feasible-set relations between `Z ∈ 𝒞` and `Z*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `|Z* − Z*ZZ*|₁ = |Z* − Z*Z|₁`
    pub eq_sandwich: RelationCheck,
    /// `|Z* − Z*Z|₁ = 2 Σ_{k≠m} |Z_{G_k G_m}|₁`
    pub eq_offblock: RelationCheck,
    /// `‖(I − Z*)Z(I − Z*)‖_tr ≤ |Z* − Z*Z|₁ / (2 n_min)`
    pub trace_bound: RelationCheck,
    /// `|Z* − Z*Z|₁ ≤ |Z* − Z|₁`
    pub lower: RelationCheck,
    /// `|Z* − Z|₁ ≤ (2n / n_min) |Z* − Z*Z|₁`
    pub upper: RelationCheck,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks().iter().all(|c| c.pass)
    }

    pub fn checks(&self) -> [RelationCheck; 5] {
        [
            self.eq_sandwich,
            self.eq_offblock,
            self.trace_bound,
            self.lower,
            self.upper,
        ]
    }
}

/// Relative tolerance for the equalities.
pub const IDENTITY_RTOL: f64 = 1e-8;

fn equality(lhs: f64, rhs: f64, floor: f64) -> RelationCheck {
    let gap = (lhs - rhs).abs();
    RelationCheck {
        lhs,
        rhs,
        slack: -gap,
        pass: gap <= IDENTITY_RTOL * lhs.abs().max(rhs.abs()) + floor,
    }
}

fn inequality(lhs: f64, rhs: f64, floor: f64) -> RelationCheck {
    let slack = rhs - lhs;
    RelationCheck {
        lhs,
        rhs,
        slack,
        pass: slack >= -floor,
    }
}

/// Evaluate the feasible-set relations. `z` is expected to lie in 𝒞;
/// `floor` absorbs the f64 rounding of `n²`-term sums (`4 n² ε`).
pub fn feasible_set_identities(
    z: &DMatrix<f64>,
    truth: &MembershipMatrix,
) -> Result<IdentityReport> {
    let zs = truth.matrix();
    let n = linalg::ensure_square(z)?;
    if zs.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "feasible_set_identities",
            expected: zs.nrows(),
            found: n,
        });
    }
    let assignment = truth.assignment();
    let n_min = assignment.min_cluster_size() as f64;
    let floor = 4.0 * (n * n) as f64 * f64::EPSILON;

    let zs_z = zs * z;
    let mid = linalg::l1_norm(&(zs - &zs_z));
    let sandwich = linalg::l1_norm(&(zs - &zs_z * zs));
    let labels = assignment.labels();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] != labels[j] {
                off += z[(i, j)].abs();
            }
        }
    }
    let off = 2.0 * off;

    let complement = DMatrix::identity(n, n) - zs;
    let inner = linalg::symmetrized(&(&complement * z * &complement));
    let trace_norm: f64 = linalg::sym_eigen(&inner)?
        .values
        .iter()
        .map(|v| v.abs())
        .sum();
    let full = linalg::l1_norm(&(zs - z));

    Ok(IdentityReport {
        eq_sandwich: equality(sandwich, mid, floor),
        eq_offblock: equality(mid, off, floor),
        trace_bound: inequality(trace_norm, mid / (2.0 * n_min), floor),
        lower: inequality(mid, full, floor),
        upper: inequality(full, 2.0 * n as f64 / n_min * mid, floor),
    })
}

/// `Σ_{i=1}^{s} a_(i)` with `a_(1) ≥ … ≥ a_(n)`, `s = Σ bᵢ`, and a
/// fractional weight on the last term.
pub fn rearrangement_bound(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "rearrangement_bound",
            expected: a.len(),
            found: b.len(),
        });
    }
    if let Some(i) = b.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidParameter(format!(
            "b[{i}]={} outside [0, 1]",
            b[i]
        )));
    }
    let s: f64 = b.iter().sum();
    let whole = (s.floor() as usize).min(a.len());
    let frac = s - whole as f64;
    let mut sorted = a.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let mut total: f64 = sorted[..whole].iter().sum();
    if whole < sorted.len() && frac > 0.0 {
        total += frac * sorted[whole];
    }
    Ok(total)
}
