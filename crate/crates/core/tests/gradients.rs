//! Analytic gradients against central finite differences.

use genre_align_core::data::{BatchItem, BatchKind, GenreGroup, MiniBatch, SpeakerGroup, MIXED_GENRE};
use genre_align_core::losses::{center_loss, coral_loss, median_pairwise_distance, mmd_loss, wbda_loss, Sigma};
use genre_align_core::rng::SeededRng;
use genre_align_core::trainer::{classification_loss, ClassLossKind, ClassLossParams};
use genre_align_core::Mat;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const CASES: u64 = 20;

/// Central differences of `f` at `x0`, compared component-wise to `grad`
/// with relative error `|fd - g| / max(1, |g|)`.
fn check(name: &str, x0: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) {
    assert_eq!(x0.len(), grad.len());
    let mut x = x0.to_vec();
    for i in 0..x.len() {
        x[i] = x0[i] + STEP;
        let up = f(&x);
        x[i] = x0[i] - STEP;
        let down = f(&x);
        x[i] = x0[i];
        let fd = (up - down) / (2.0 * STEP);
        let err = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
        assert!(err <= TOL, "{name}: component {i}: analytic {} vs numeric {fd} (err {err:e})", grad[i]);
    }
}

fn unflatten(flat: &[f64], n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| flat[i * d..(i + 1) * d].to_vec()).collect()
}

fn shape(rng: &mut SeededRng) -> (usize, usize, usize) {
    let d = 2 + rng.below(7) as usize; // 2..=8
    let s = 2 + rng.below(3) as usize; // 2..=4
    let m = 2 + rng.below(3) as usize; // 2..=4
    (d, s, m)
}

fn random_set(rng: &mut SeededRng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let offset = rng.gaussian_vec(d, 1.0);
    (0..n)
        .map(|_| rng.gaussian_vec(d, 1.0).iter().zip(&offset).map(|(a, b)| a + b).collect())
        .collect()
}

#[test]
fn coral_gradients() {
    for case in 0..CASES {
        let mut rng = SeededRng::new(100 + case);
        let (d, s, m) = shape(&mut rng);
        let (xi, xj) = (random_set(&mut rng, s * m, d), random_set(&mut rng, s * m + 1, d));
        let out = coral_loss(&xi, &xj).unwrap();
        let ni = xi.len();
        let flat: Vec<f64> = xi.iter().chain(&xj).flatten().copied().collect();
        let grad: Vec<f64> = out.grad_i.iter().chain(&out.grad_j).flatten().copied().collect();
        // the loss is tiny (1/4d^2), so scale it up to make the check meaningful
        let k = 1e3;
        let grad: Vec<f64> = grad.iter().map(|g| g * k).collect();
        check("coral", &flat, &grad, |p| {
            let a = unflatten(&p[..ni * d], ni, d);
            let b = unflatten(&p[ni * d..], xj.len(), d);
            k * coral_loss(&a, &b).unwrap().value
        });
    }
}

#[test]
fn mmd_gradients() {
    for case in 0..CASES {
        let mut rng = SeededRng::new(200 + case);
        let (d, s, m) = shape(&mut rng);
        let (xi, xj) = (random_set(&mut rng, s * m, d), random_set(&mut rng, s * m - 1, d));
        // median width, frozen at its batch value as the analytic gradient assumes
        let sigma = if case % 2 == 0 { median_pairwise_distance(&xi, &xj) } else { 0.5 + rng.uniform() * 2.0 };
        let out = mmd_loss(&xi, &xj, Sigma::Fixed(sigma)).unwrap();
        if case % 2 == 0 {
            assert_eq!(out, mmd_loss(&xi, &xj, Sigma::Median).unwrap());
        }
        let ni = xi.len();
        let flat: Vec<f64> = xi.iter().chain(&xj).flatten().copied().collect();
        let grad: Vec<f64> = out.grad_i.iter().chain(&out.grad_j).flatten().copied().collect();
        check("mmd", &flat, &grad, |p| {
            let a = unflatten(&p[..ni * d], ni, d);
            let b = unflatten(&p[ni * d..], xj.len(), d);
            mmd_loss(&a, &b, Sigma::Fixed(sigma)).unwrap().value
        });
    }
}

fn pair_batch(vectors: &[Vec<f64>], s: usize, m: usize) -> MiniBatch {
    let mut k = 0;
    let groups = ["gi", "gj"]
        .iter()
        .map(|g| GenreGroup {
            genre: (*g).into(),
            speakers: (0..s)
                .map(|sp| SpeakerGroup {
                    speaker: format!("s{sp}"),
                    items: (0..m)
                        .map(|u| {
                            let it = BatchItem { utt_id: format!("{g}-{sp}-{u}"), vector: vectors[k].clone() };
                            k += 1;
                            it
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    MiniBatch { kind: BatchKind::GenrePair, groups, speakers_per_group: s, utts_per_speaker: m }
}

fn batch_grad(batch: &MiniBatch, out: &genre_align_core::LossOutput) -> Vec<f64> {
    batch.items().flat_map(|(_, _, it)| out.grads[&it.utt_id].clone()).collect()
}

#[test]
fn wbda_gradients() {
    for case in 0..CASES {
        let mut rng = SeededRng::new(300 + case);
        let (d, s, m) = shape(&mut rng);
        let n = 2 * s * m;
        let vectors = random_set(&mut rng, n, d);
        let (alpha, beta) = match case % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            _ => (rng.uniform(), rng.uniform()),
        };
        let batch = pair_batch(&vectors, s, m);
        let out = wbda_loss(&batch, alpha, beta).unwrap();
        let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
        check("wbda", &flat, &batch_grad(&batch, &out), |p| {
            wbda_loss(&pair_batch(&unflatten(p, n, d), s, m), alpha, beta).unwrap().value
        });
    }
}

fn speaker_batch(vectors: &[Vec<f64>], s: usize, m: usize) -> MiniBatch {
    let speakers = (0..s)
        .map(|sp| SpeakerGroup {
            speaker: format!("s{sp}"),
            items: (0..m)
                .map(|u| BatchItem { utt_id: format!("{sp}-{u}"), vector: vectors[sp * m + u].clone() })
                .collect(),
        })
        .collect();
    MiniBatch {
        kind: BatchKind::Speakers,
        groups: vec![GenreGroup { genre: MIXED_GENRE.into(), speakers }],
        speakers_per_group: s,
        utts_per_speaker: m,
    }
}

#[test]
fn center_gradients() {
    for case in 0..CASES {
        let mut rng = SeededRng::new(400 + case);
        let (d, s, m) = shape(&mut rng);
        let vectors = random_set(&mut rng, s * m, d);
        let batch = speaker_batch(&vectors, s, m);
        let out = center_loss(&batch).unwrap();
        let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
        check("center", &flat, &batch_grad(&batch, &out), |p| {
            center_loss(&speaker_batch(&unflatten(p, s * m, d), s, m)).unwrap().value
        });
    }
}

fn classification_case(kind: ClassLossKind, seed: u64) {
    let mut rng = SeededRng::new(seed);
    let (d, s, m) = shape(&mut rng);
    let classes = s + 1;
    let n = s * m;
    let xs = random_set(&mut rng, n, d);
    let labels: Vec<usize> = (0..n).map(|i| i / m).collect();
    let w = Mat::from_vec(classes, d, rng.gaussian_vec(classes * d, 1.0));
    let params = ClassLossParams { kind, margin: 0.2, scale: 4.0 };
    let out = classification_loss(&xs, &labels, &w, &params).unwrap();

    let flat_x: Vec<f64> = xs.iter().flatten().copied().collect();
    let gx: Vec<f64> = out.embedding_grads.iter().flatten().copied().collect();
    check(kind.name(), &flat_x, &gx, |p| classification_loss(&unflatten(p, n, d), &labels, &w, &params).unwrap().value);

    check(kind.name(), w.as_slice(), out.weight_grads.as_slice(), |p| {
        classification_loss(&xs, &labels, &Mat::from_vec(classes, d, p.to_vec()), &params).unwrap().value
    });
}

#[test]
fn softmax_ce_gradients() {
    for case in 0..CASES {
        classification_case(ClassLossKind::SoftmaxCe, 500 + case);
    }
}

#[test]
fn aam_softmax_gradients() {
    for case in 0..CASES {
        classification_case(ClassLossKind::AamSoftmax, 600 + case);
    }
}
