//! Edge scores over {root} ∪ sentences and exact posterior marginals over
//! multi-root non-projective spanning arborescences via the Matrix-Tree
//! theorem. A brute-force enumeration oracle is included for small n.

use crate::error::{CoreError, Result};
use crate::model::{ModelVars, ScoreParams};
use crate::numkit::{invert_with_logdet, logdet, Mat, Var};

/// (n+1)x(n+1) non-negative edge weights; index 0 is the virtual root.
/// Column j holds the weights of j's candidate parents.
pub type EdgeScores = Mat;

/// (n+1)x(n+1) posterior edge probabilities; row 0 is root attachment.
pub type Marginals = Mat;

/// Floor for root weights so a saturated root logit cannot make the
/// Laplacian minor singular.
pub const ROOT_FLOOR: f64 = 1e-30;

/// Enumeration bound for the brute-force oracle.
pub const MAX_ENUM: usize = 8;

/// Raw (pre-exponential) edge logits. Entries at invalid positions
/// (column 0, the diagonal) are unused.
fn edge_logits(structure_vecs: &[Mat], params: &ScoreParams) -> Mat {
    let n = structure_vecs.len();
    let parents: Vec<Mat> = structure_vecs
        .iter()
        .map(|s| (params.w_p.dot(s) + &params.b_p).mapv(f64::tanh))
        .collect();
    let children: Vec<Mat> = structure_vecs
        .iter()
        .map(|s| (params.w_c.dot(s) + &params.b_c).mapv(f64::tanh))
        .collect();
    let mut logits = Mat::zeros((n + 1, n + 1));
    for j in 1..=n {
        logits[[0, j]] = params.w_root.dot(&structure_vecs[j - 1])[[0, 0]];
        for i in 1..=n {
            if i != j {
                logits[[i, j]] = parents[i - 1].t().dot(&params.w_f).dot(&children[j - 1])[[0, 0]];
            }
        }
    }
    logits
}

/// Exponentiates logits into edge weights, subtracting the per-column max
/// first. The shift leaves the marginals unchanged (each arborescence uses
/// exactly one incoming edge per child).
fn exponentiate(logits: &Mat) -> EdgeScores {
    let n = logits.nrows() - 1;
    let mut f = Mat::zeros((n + 1, n + 1));
    for j in 1..=n {
        let mut max = logits[[0, j]];
        for i in 1..=n {
            if i != j {
                max = max.max(logits[[i, j]]);
            }
        }
        f[[0, j]] = (logits[[0, j]] - max).exp().max(ROOT_FLOOR);
        for i in 1..=n {
            if i != j {
                f[[i, j]] = (logits[[i, j]] - max).exp();
            }
        }
    }
    f
}

/// Edge weights F from structure vectors: f_0j = exp(w_r·s_j^f),
/// f_ij = exp(p_i·W_f·c_j), zeros on column 0 and the diagonal.
pub fn score_matrix(structure_vecs: &[Mat], params: &ScoreParams) -> EdgeScores {
    assert!(!structure_vecs.is_empty());
    exponentiate(&edge_logits(structure_vecs, params))
}

fn laplacian_minor(f: &EdgeScores) -> Mat {
    let n = f.nrows() - 1;
    let mut l0 = Mat::zeros((n, n));
    for j in 1..=n {
        let mut diag = f[[0, j]];
        for i in 1..=n {
            if i != j {
                diag += f[[i, j]];
                l0[[i - 1, j - 1]] = -f[[i, j]];
            }
        }
        l0[[j - 1, j - 1]] = diag;
    }
    l0
}

/// log Z(F) = log|L0(F)|, the log total weight of all arborescences.
pub fn log_partition(f: &EdgeScores) -> Result<f64> {
    logdet(&laplacian_minor(f)).map_err(|_| CoreError::SingularLaplacian)
}

/// Exact posterior edge marginals: a_0j = f_0j [L0^-1]_jj,
/// a_ij = f_ij ([L0^-1]_jj - [L0^-1]_ji).
pub fn tree_marginals(f: &EdgeScores) -> Result<Marginals> {
    let n = f.nrows() - 1;
    let (inv, _, _) =
        invert_with_logdet(&laplacian_minor(f)).map_err(|_| CoreError::SingularLaplacian)?;
    let mut a = Mat::zeros((n + 1, n + 1));
    for j in 1..=n {
        a[[0, j]] = f[[0, j]] * inv[[j - 1, j - 1]];
        for i in 1..=n {
            if i != j {
                a[[i, j]] = f[[i, j]] * (inv[[j - 1, j - 1]] - inv[[j - 1, i - 1]]);
            }
        }
    }
    Ok(a)
}

/// Returns true when the parent assignment (indexed by child 1..=n,
/// parent in 0..=n) is an arborescence rooted at 0.
pub fn is_arborescence(parents: &[usize]) -> bool {
    let n = parents.len();
    'child: for start in 1..=n {
        let mut node = start;
        for _ in 0..n {
            node = parents[node - 1];
            if node == 0 {
                continue 'child;
            }
        }
        return false; // walked n edges without reaching the root: cycle
    }
    true
}

/// Brute-force partition function and marginals by enumerating every parent
/// assignment. Oracle only; independent of the Matrix-Tree path.
pub fn enumerate_arborescences(f: &EdgeScores) -> Result<(f64, Marginals)> {
    let n = f.nrows() - 1;
    if n > MAX_ENUM {
        return Err(CoreError::TooLarge(n, MAX_ENUM));
    }
    let mut z = 0.0;
    let mut edge_weight = Mat::zeros((n + 1, n + 1));
    let mut parents = vec![0usize; n];
    loop {
        if is_arborescence(&parents) {
            let mut w = 1.0;
            for (child0, &p) in parents.iter().enumerate() {
                w *= f[[p, child0 + 1]];
            }
            z += w;
            for (child0, &p) in parents.iter().enumerate() {
                edge_weight[[p, child0 + 1]] += w;
            }
        }
        // next assignment, odometer style, skipping parent == child
        let mut pos = 0;
        loop {
            if pos == n {
                let a = edge_weight.mapv(|v| v / z);
                return Ok((z, a));
            }
            parents[pos] += 1;
            if parents[pos] == pos + 1 {
                parents[pos] += 1; // skip self
            }
            if parents[pos] <= n {
                break;
            }
            parents[pos] = 0;
            pos += 1;
        }
    }
}

/// Records the score → marginal computation on a tape for training.
/// `structure_vecs` are (d_f, 1) vars for sentences 1..=n.
pub fn marginals_tape<'t>(vars: &ModelVars<'t>, structure_vecs: &[Var<'t>]) -> Result<Var<'t>> {
    let n = structure_vecs.len();
    assert!(n >= 1);
    let tape = structure_vecs[0].tape();

    let parents: Vec<Var> = structure_vecs
        .iter()
        .map(|&s| vars.w_p.matmul(s).add(vars.b_p).tanh())
        .collect();
    let children: Vec<Var> = structure_vecs
        .iter()
        .map(|&s| vars.w_c.matmul(s).add(vars.b_c).tanh())
        .collect();

    // logits per column; the per-column max is subtracted as a constant
    // shift, which the marginals are invariant to
    let mut entries = Vec::with_capacity(n * n);
    for j in 1..=n {
        let mut col = vec![(0usize, vars.w_root.matmul(structure_vecs[j - 1]))];
        for i in 1..=n {
            if i != j {
                col.push((i, parents[i - 1].t().matmul(vars.w_f).matmul(children[j - 1])));
            }
        }
        let max = col
            .iter()
            .map(|(_, v)| tape.scalar_value(*v))
            .fold(f64::NEG_INFINITY, f64::max);
        for (i, logit) in col {
            let mut w = logit.shift(-max).exp();
            if i == 0 {
                w = w.clamp_min(ROOT_FLOOR);
            }
            entries.push((i, j, w));
        }
    }
    let f = tape.assemble_square(n + 1, &entries);
    let inv = f
        .laplacian_minor()
        .inverse()
        .map_err(|_| CoreError::SingularLaplacian)?;
    Ok(f.marginals_from_inverse(inv))
}

/// Checks the Marginals invariants: entries in [0,1], zero column 0 and
/// diagonal, unit column sums over children, total mass n.
pub fn check_marginals(a: &Marginals, tol: f64) -> bool {
    let n = a.nrows() - 1;
    for i in 0..=n {
        if a[[i, 0]] != 0.0 || a[[i, i]] != 0.0 {
            return false;
        }
    }
    for j in 1..=n {
        let col: f64 = (0..=n).map(|i| a[[i, j]]).sum();
        if (col - 1.0).abs() > tol {
            return false;
        }
        for i in 0..=n {
            if !(-tol..=1.0 + tol).contains(&a[[i, j]]) {
                return false;
            }
        }
    }
    (a.sum() - n as f64).abs() <= tol * n as f64
}
