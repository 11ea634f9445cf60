use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scamwatch_core::assessor::{LogisticParams, FEATURE_DIM};
use scamwatch_core::distill::{
    combined_loss_against, reverse_kl, sft_loss, DistillConfig, TrainingBatch, TrainingItem,
};

const H: f64 = 1e-6;
const N_PRIV: usize = 5;

fn random_params(rng: &mut ChaCha8Rng) -> LogisticParams {
    LogisticParams {
        theta_shared: (0..FEATURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        theta_priv: (0..N_PRIV).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

fn random_batch(rng: &mut ChaCha8Rng, clean_only: bool) -> TrainingBatch {
    let n = rng.gen_range(1..12);
    let items = (0..n)
        .map(|_| {
            let mut features: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
            features[FEATURE_DIM - 1] = 1.0;
            let overlap = rng.gen_bool(0.6);
            let saturated = overlap && (clean_only || rng.gen_bool(0.3));
            let coverage = if saturated { 1.0 } else if overlap { rng.gen_range(0.05..1.0) } else { 0.0 };
            TrainingItem {
                privileged: overlap.then(|| (0..N_PRIV).map(|_| rng.gen_range(0.0..1.0)).collect()),
                label: overlap && coverage >= 0.5,
                overlap,
                saturated,
                coverage,
                features,
                version: 0,
            }
        })
        .collect();
    TrainingBatch { items }
}

/// Central differences over every parameter of `loss`.
fn numeric_gradient(params: &LogisticParams, loss: impl Fn(&LogisticParams) -> f64) -> Vec<f64> {
    let n_shared = params.theta_shared.len();
    let total = n_shared + params.theta_priv.len();
    (0..total)
        .map(|i| {
            let bump = |d: f64| {
                let mut p = params.clone();
                if i < n_shared {
                    p.theta_shared[i] += d;
                } else {
                    p.theta_priv[i - n_shared] += d;
                }
                loss(&p)
            };
            (bump(H) - bump(-H)) / (2.0 * H)
        })
        .collect()
}

fn flat(p: &LogisticParams) -> Vec<f64> {
    p.theta_shared.iter().chain(&p.theta_priv).copied().collect()
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-10 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn combined_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = DistillConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..150 {
        let params = random_params(&mut rng);
        let teacher = random_params(&mut rng);
        let batch = random_batch(&mut rng, false);
        let (_, grad) = combined_loss_against(&batch, &params, &teacher, &cfg).unwrap();
        let numeric = numeric_gradient(&params, |p| combined_loss_against(&batch, p, &teacher, &cfg).unwrap().0);
        worst = worst.max(max_relative_error(&flat(&grad), &numeric));
        assert!(grad.theta_priv.iter().all(|g| *g == 0.0));
    }
    println!("combined loss: worst relative error {worst:.3e}");
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn fine_tuning_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..120 {
        let params = random_params(&mut rng);
        let batch = random_batch(&mut rng, true);
        let (_, grad) = sft_loss(&batch, &params).unwrap();
        let numeric = numeric_gradient(&params, |p| sft_loss(&batch, p).unwrap().0);
        worst = worst.max(max_relative_error(&flat(&grad), &numeric));
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

#[test]
fn reverse_kl_nonnegative_and_zero_only_on_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let k = rng.gen_range(2..6);
        let s = random_distribution(&mut rng, k);
        let t = random_distribution(&mut rng, k);
        let d = reverse_kl(&s, &t).unwrap();
        assert!(d > 0.0, "{s:?} {t:?} -> {d}");
        assert_eq!(reverse_kl(&s, &s).unwrap(), 0.0);
    }
}
