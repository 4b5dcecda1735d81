use dmguide_core::dmpolicy::{
    clipped_surrogate, compute_reward, ppo_gradient, ppo_terms, Policy, PpoConfig, PpoSample,
};
use dmguide_core::linmodel::{log_softmax, softmax, TrainConfig};
use dmguide_core::player::{train_player_model, PlayerVariant};
use dmguide_core::intent::{mined_intent_text, train_intent2action};
use dmguide_core::synth::{default_bank, generate_corpus, SynthConfig};
use dmguide_core::textfeat::SparseVector;
use dmguide_core::ActionSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 64;

fn random_vec(rng: &mut ChaCha8Rng) -> SparseVector {
    let pairs: Vec<(u32, f64)> = (0..5)
        .map(|_| (rng.gen_range(0..DIM as u32), rng.gen_range(-1.0..1.0)))
        .collect();
    SparseVector::from_pairs(DIM, pairs).unwrap()
}

fn random_policy(seed: u64, temperature: f64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Policy::new(DIM, true, temperature).unwrap();
    for w in p.scorer.weights_raw_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    for w in p.value.weights_raw_mut() {
        *w = rng.gen_range(-0.5..0.5);
    }
    p
}

fn tempered_logp(policy: &Policy, feats: &[SparseVector]) -> Vec<f64> {
    let z: Vec<f64> = policy.scores(feats).iter().map(|s| s / policy.temperature).collect();
    log_softmax(&z)
}

/// Batch with `logp_old` offset from the current policy by up to `drift`.
fn batch(policy: &Policy, seed: u64, drift: f64) -> Vec<PpoSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..12)
        .map(|_| {
            let n = rng.gen_range(2..6);
            let feats: Vec<SparseVector> = (0..n).map(|_| random_vec(&mut rng)).collect();
            let action = rng.gen_range(0..n);
            let logp = tempered_logp(policy, &feats)[action];
            let reward = f64::from(u8::from(rng.gen_bool(0.5)));
            PpoSample {
                feats,
                value_x: random_vec(&mut rng),
                action,
                logp_old: logp + rng.gen_range(-drift..=drift),
                reward,
                advantage: rng.gen_range(-1.0..1.0),
            }
        })
        .collect()
}

fn objective(policy: &Policy, b: &[PpoSample], cfg: &PpoConfig) -> f64 {
    ppo_terms(policy, b, cfg).objective(cfg)
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let cfg = PpoConfig::default();
    let eps = 1e-6;
    for seed in 0..4 {
        let policy = random_policy(seed, 0.7);
        let b = batch(&policy, seed + 50, 0.4);
        let g = ppo_gradient(&policy, &b, &cfg);
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            let mut plus = policy.clone();
            plus.scorer.weights_raw_mut()[i] += eps;
            let mut minus = policy.clone();
            minus.scorer.weights_raw_mut()[i] -= eps;
            let numeric = (objective(&plus, &b, &cfg) - objective(&minus, &b, &cfg)) / (2.0 * eps);
            worst = worst.max((g.scorer[i] - numeric).abs() / g.scorer[i].abs().max(numeric.abs()).max(1e-6));

            let mut plus = policy.clone();
            plus.value.weights_raw_mut()[i] += eps;
            let mut minus = policy.clone();
            minus.value.weights_raw_mut()[i] -= eps;
            let numeric = (objective(&plus, &b, &cfg) - objective(&minus, &b, &cfg)) / (2.0 * eps);
            worst = worst.max((g.value[i] - numeric).abs() / g.value[i].abs().max(numeric.abs()).max(1e-6));
        }
        assert!(worst < 1e-4, "seed {seed}: relative error {worst}");
    }
}

/// With no clipping, one epoch and samples drawn from the current policy,
/// the update direction is the REINFORCE estimate `A * grad log pi(a)`.
#[test]
fn unclipped_single_epoch_is_reinforce() {
    let cfg = PpoConfig {
        clip: 1e12,
        epochs_per_batch: 1,
        entropy_coef: 0.0,
        ..PpoConfig::default()
    };
    for seed in 0..4 {
        let policy = random_policy(seed, 1.3);
        let b = batch(&policy, seed + 7, 0.0);
        let g = ppo_gradient(&policy, &b, &cfg);
        let mut expected = vec![0.0; DIM];
        for s in &b {
            let z: Vec<f64> = policy.scores(&s.feats).iter().map(|v| v / policy.temperature).collect();
            let p = softmax(&z);
            for (j, x) in s.feats.iter().enumerate() {
                let coef = s.advantage * (f64::from(u8::from(j == s.action)) - p[j])
                    / (policy.temperature * b.len() as f64);
                for (i, v) in x.iter() {
                    expected[i] += coef * v;
                }
            }
        }
        for (a, e) in g.scorer.iter().zip(&expected) {
            assert!((a - e).abs() <= 1e-6, "seed {seed}: {a} vs {e}");
        }
    }
}

#[test]
fn zero_advantage_leaves_scorer_unchanged() {
    let cfg = PpoConfig {
        entropy_coef: 0.0,
        ..PpoConfig::default()
    };
    let policy = random_policy(3, 1.0);
    let mut b = batch(&policy, 4, 0.3);
    for s in &mut b {
        s.advantage = 0.0;
    }
    let g = ppo_gradient(&policy, &b, &cfg);
    assert!(g.scorer.iter().all(|v| *v == 0.0));
}

#[test]
fn clipping_fixtures() {
    assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
    assert_eq!(clipped_surrogate(0.5, 1.0, 0.2), 0.5);
    assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    assert_eq!(clipped_surrogate(1.5, -1.0, 0.2), -1.5);
    assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
}

#[test]
fn reward_is_binary_and_matches_prediction() {
    let corpus = generate_corpus(
        &SynthConfig {
            n_episodes: 300,
            ..SynthConfig::default()
        },
        &default_bank(),
    )
    .unwrap();
    let actions = ActionSet::default_23();
    let train = TrainConfig::default();
    let pm = train_player_model(&corpus.episodes, PlayerVariant::Reward, &actions, 1024, &train).unwrap();
    let pairs: Vec<(String, dmguide_core::ActionLabel)> = actions
        .labels()
        .iter()
        .map(|a| (mined_intent_text(a, "Look around."), a.clone()))
        .collect();
    let i2a = train_intent2action(&pairs, &actions, 1024, &train).unwrap();
    let mut seen = [false; 2];
    for e in corpus.episodes.iter().take(100) {
        let intent = mined_intent_text(&e.player_action, &e.dm_text);
        let rec = compute_reward(&e.id, &intent, &e.context_text(), &e.dm_text, &pm, &i2a);
        assert!(rec.reward <= 1);
        assert_eq!(rec.reward == 1, rec.predicted_action == rec.intended_action);
        seen[usize::from(rec.reward)] = true;
    }
    assert!(seen[1], "no positive reward in 100 episodes");
}
