//! Acceptance criteria exercised through the public library API. Each test
//! covers one numbered criterion and prints an explicit PASS line (visible
//! with `cargo test -- --nocapture`); a failing assertion names the
//! criterion.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strsum_core::corpus::Document;
use strsum_core::discourse::{
    best_arborescence_bruteforce, build_stochastic, discourse_rank, discourse_rank_iterative,
    extract_tree, tree_weight, TreeWeighting,
};
use strsum_core::evalkit::{lcs_len, rouge_scores};
use strsum_core::model::{Dims, Model};
use strsum_core::numkit::{finite_diff_gradient, Mat, Tape};
use strsum_core::reconstructor::document_loss_tape;
use strsum_core::structattn::{
    check_marginals, enumerate_arborescences, log_partition, tree_marginals,
};

fn random_f(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let mut f = Mat::zeros((n + 1, n + 1));
    for j in 1..=n {
        f[[0, j]] = rng.gen_range(0.1..2.0);
        for i in 1..=n {
            if i != j {
                f[[i, j]] = rng.gen_range(0.1..2.0);
            }
        }
    }
    f
}

fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn criterion_01_matrix_tree_matches_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for n in 2..=5 {
        for _ in 0..100 {
            let f = random_f(&mut rng, n);
            let exact = tree_marginals(&f).expect("criterion 1: marginals");
            let (_, brute) = enumerate_arborescences(&f).expect("criterion 1: enumeration");
            let err = max_abs_diff(&exact, &brute);
            assert!(err <= 1e-8, "criterion 1: n={n} max abs error {err}");
            // criterion 4 applies to every marginal matrix produced here
            assert!(check_marginals(&exact, 1e-9), "criterion 4: constraints violated");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "criterion 1: took {elapsed:?}");
    println!("criterion 1 (Matrix-Tree vs enumeration, 400 instances, {elapsed:?}): PASS");
}

#[test]
fn criterion_02_log_partition_gradient_is_the_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for trial in 0..20 {
        let n = rng.gen_range(2..=5usize);
        let f = random_f(&mut rng, n);
        let a = tree_marginals(&f).expect("criterion 2: marginals");
        // a_ij = d logZ / d log f_ij, so perturb log-weights.
        let theta = f.mapv(|v| if v > 0.0 { v.ln() } else { 0.0 });
        let fd = finite_diff_gradient(
            |t| {
                let mut m = t.mapv(f64::exp);
                for j in 0..=n {
                    m[[j, 0]] = 0.0;
                    m[[j, j]] = 0.0;
                }
                log_partition(&m).unwrap()
            },
            &theta,
            1e-6,
        );
        for j in 1..=n {
            for i in 0..=n {
                if i == j {
                    continue;
                }
                let rel = (fd[[i, j]] - a[[i, j]]).abs() / a[[i, j]].abs().max(1e-6);
                assert!(
                    rel < 1e-6,
                    "criterion 2: trial {trial} entry ({i},{j}) rel error {rel}"
                );
            }
        }
    }
    println!("criterion 2 (finite differences of logZ equal marginals, 20 instances): PASS");
}

#[test]
fn criterion_03_column_scaling_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for n in [2, 3, 4, 5] {
        let f = random_f(&mut rng, n);
        let base = tree_marginals(&f).expect("criterion 3: base marginals");
        for col in 1..=n {
            for c in [1e-3, 1.0, 1e3] {
                let mut scaled = f.clone();
                for i in 0..=n {
                    scaled[[i, col]] *= c;
                }
                let a = tree_marginals(&scaled).expect("criterion 3: scaled marginals");
                let err = max_abs_diff(&a, &base);
                assert!(err <= 1e-8, "criterion 3: n={n} col={col} c={c} err={err}");
                assert!(check_marginals(&a, 1e-9), "criterion 4: constraints violated");
            }
        }
    }
    println!("criterion 3 (single-column scaling changes no marginal by > 1e-8): PASS");
}

#[test]
fn criterion_04_marginal_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..200 {
        let n = rng.gen_range(1..=7usize);
        let a = tree_marginals(&random_f(&mut rng, n)).expect("criterion 4: marginals");
        // column sums 1 per child and total mass n, both at 1e-9
        assert!(check_marginals(&a, 1e-9), "criterion 4: constraints violated (n={n})");
        let total: f64 = a.iter().sum();
        assert!(
            (total - n as f64).abs() <= 1e-9,
            "criterion 4: total mass {total} != {n}"
        );
    }
    println!("criterion 4 (column sums = 1, total mass = n, 200 matrices at 1e-9): PASS");
}

#[test]
fn criterion_05_cle_matches_bruteforce() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for trial in 0..100 {
        let n = rng.gen_range(2..=6usize);
        let a = tree_marginals(&random_f(&mut rng, n)).expect("criterion 5: marginals");
        let tree = extract_tree(&a, TreeWeighting::LogProduct);
        let (best, best_w) = best_arborescence_bruteforce(&a, TreeWeighting::LogProduct);
        if tree.parents != best.parents {
            let w = tree_weight(&tree, &a, TreeWeighting::LogProduct);
            assert!(
                (w - best_w).abs() <= 1e-12,
                "criterion 5: trial {trial} CLE weight {w} vs brute {best_w}"
            );
        }
    }
    println!("criterion 5 (CLE equals brute-force maximum arborescence, 100 instances): PASS");
}

#[test]
fn criterion_06_discourse_rank() {
    // closed form vs 500-step power iteration on random stochastic matrices
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..25 {
        let n = rng.gen_range(2..=6usize);
        let a = tree_marginals(&random_f(&mut rng, n)).expect("criterion 6: marginals");
        let a_hat = build_stochastic(&a);
        let closed = discourse_rank(&a_hat, 0.9).expect("criterion 6: closed form");
        let iterated = discourse_rank_iterative(&a_hat, 0.9, 500);
        let inf_norm = closed
            .iter()
            .zip(&iterated)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(inf_norm <= 1e-8, "criterion 6: inf-norm {inf_norm}");
        let sum: f64 = closed.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-10, "criterion 6: rank sum {sum}");
    }
    // hand-derived n=2, lambda=0.9 case on the uniform-score marginals
    let f = {
        let mut f = Mat::zeros((3, 3));
        for j in 1..=2 {
            for i in 0..=2 {
                if i != j {
                    f[[i, j]] = 1.0;
                }
            }
        }
        f
    };
    let a = tree_marginals(&f).unwrap();
    let r = discourse_rank(&build_stochastic(&a), 0.9).unwrap();
    assert!((r[0] - 0.395833).abs() <= 1e-6, "criterion 6: r0 = {}", r[0]);
    assert!((r[1] - 0.302083).abs() <= 1e-6, "criterion 6: r1 = {}", r[1]);
    assert!((r[2] - 0.302083).abs() <= 1e-6, "criterion 6: r2 = {}", r[2]);
    println!("criterion 6 (DiscourseRank closed form, iteration, hand case): PASS");
}

#[test]
fn criterion_07_end_to_end_gradients() {
    let dims = Dims { vocab: 12, embed: 16, hidden: 8, d_e: 10, d_f: 6 };
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let model = Model::init(dims, &mut rng).unwrap();
    let doc = Document {
        id: "grad-check".into(),
        sentences: vec![
            vec![2, 4, 5, 6, 3],
            vec![2, 7, 8, 3],
            vec![2, 9, 10, 11, 3],
        ],
        reference: None,
        reference_text: None,
    };

    // analytic gradients for every parameter group
    let (names, analytic): (Vec<&'static str>, Vec<Mat>) = {
        let tape = Tape::new();
        let vars = model.vars(&tape);
        let (loss_sum, tokens) = document_loss_tape(&doc, &vars).unwrap();
        let loss = loss_sum.scale(1.0 / tokens as f64);
        let grads = tape.backward(loss);
        vars.all()
            .iter()
            .map(|(name, v)| (*name, grads.wrt(*v)))
            .unzip()
    };

    for (idx, name) in names.iter().enumerate() {
        let base = model.visit()[idx].1.clone();
        let numeric = finite_diff_gradient(
            |m: &Array2<f64>| {
                let mut perturbed = model.clone();
                perturbed.visit_mut()[idx].1.assign(m);
                let tape = Tape::new();
                let vars = perturbed.vars(&tape);
                let (loss_sum, tokens) = document_loss_tape(&doc, &vars).unwrap();
                tape.scalar_value(loss_sum) / tokens as f64
            },
            &base,
            1e-5,
        );
        let scale = analytic[idx]
            .iter()
            .chain(numeric.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-4);
        let rel = max_abs_diff(&analytic[idx], &numeric) / scale;
        assert!(rel <= 1e-3, "criterion 7: parameter {name} rel error {rel}");
    }
    println!(
        "criterion 7 (loss gradients match finite differences for {} parameter groups): PASS",
        names.len()
    );
}

#[test]
fn criterion_09_rouge_oracles() {
    let toks = |s: &str| -> Vec<String> { s.split_whitespace().map(str::to_string).collect() };
    // hand-derived example
    let r = rouge_scores(&toks("a cat on a mat"), &toks("the cat sat on the mat")).unwrap();
    let expect = 2.0 * (3.0 / 5.0) * (3.0 / 6.0) / ((3.0 / 5.0) + (3.0 / 6.0));
    assert!((r.r1_f1 - expect).abs() < 1e-12, "criterion 9: R1 = {}", r.r1_f1);
    assert!((r.r1_f1 - 0.5455).abs() < 1e-4, "criterion 9: R1 = {}", r.r1_f1);
    assert_eq!(r.r2_f1, 0.0, "criterion 9: R2");
    assert!((r.rl_f1 - expect).abs() < 1e-12, "criterion 9: RL = {}", r.rl_f1);
    // identity and disjoint cases
    let id = rouge_scores(&toks("w x y"), &toks("w x y")).unwrap();
    assert_eq!((id.r1_f1, id.r2_f1, id.rl_f1), (1.0, 1.0, 1.0), "criterion 9: identity");
    let dj = rouge_scores(&toks("w x"), &toks("y z")).unwrap();
    assert_eq!((dj.r1_f1, dj.r2_f1, dj.rl_f1), (0.0, 0.0, 0.0), "criterion 9: disjoint");
    // LCS DP vs recursive definition
    fn lcs_slow(a: &[String], b: &[String]) -> usize {
        if a.is_empty() || b.is_empty() {
            0
        } else if a[a.len() - 1] == b[b.len() - 1] {
            1 + lcs_slow(&a[..a.len() - 1], &b[..b.len() - 1])
        } else {
            lcs_slow(&a[..a.len() - 1], b).max(lcs_slow(a, &b[..b.len() - 1]))
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let alphabet = ["a", "b", "c", "d"];
    for _ in 0..100 {
        let a: Vec<String> = (0..rng.gen_range(0..9))
            .map(|_| alphabet[rng.gen_range(0..4)].to_string())
            .collect();
        let b: Vec<String> = (0..rng.gen_range(0..9))
            .map(|_| alphabet[rng.gen_range(0..4)].to_string())
            .collect();
        assert_eq!(lcs_len(&a, &b), lcs_slow(&a, &b), "criterion 9: LCS oracle");
    }
    println!("criterion 9 (ROUGE hand example, identity/disjoint, LCS oracle): PASS");
}
