use proptest::prelude::*;
use qshield::adversary::{gradient_attack, AttackConfig};
use qshield::circuits::{finite_difference_gradient, ParamCircuit};
use qshield::classifier::{ClassifierModel, LossKind};
use qshield::defense::{Codebook, CodebookKind, EncodedLossContext};
use qshield::rng::{domain, stream};
use qshield::statevec::{Observable, StateVector};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shift_rule_matches_finite_differences(n in 2usize..5, layers in 1usize..3, seed in any::<u64>()) {
        let c = ParamCircuit::adversarial(n, layers).unwrap();
        let mut r = stream(seed, domain::INIT, 0);
        let input = StateVector::random(n, &mut r);
        let params: Vec<f64> = (0..c.param_count()).map(|i| ((seed as f64) * 0.37 + i as f64 * 1.3).sin() * 2.0).collect();
        let obs = Observable::projector(n, n - 1, false);
        let shift = c.circuit().parameter_shift_gradient(&input, &params, &obs).unwrap();
        let (_, adj) = c.circuit().adjoint_gradient(&input, &params, &obs).unwrap();
        let fd = finite_difference_gradient(&params, 1e-5, |p| c.circuit().expectation(&input, p, &obs)).unwrap();
        for i in 0..params.len() {
            prop_assert!((shift[i] - fd[i]).abs() < 1e-6, "param {i}: shift {} fd {}", shift[i], fd[i]);
            prop_assert!((shift[i] - adj[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn encoded_fast_gradient_matches_shift_rule(seed in any::<u64>(), kind in 0usize..3, theta_scale in 0.0f64..1.0) {
        let n = 3;
        let codebook = [CodebookKind::GlobalHaar, CodebookKind::BlockHaar { m: 1, xi: 3 }, CodebookKind::Pvqc { depth: 2 }][kind];
        let mut r = stream(seed, domain::ENCODER, 0);
        let enc = Codebook::new(codebook, n).unwrap().sample(&mut r).unwrap();
        let model = ClassifierModel::random(n, 2, &mut r).unwrap();
        let ctx = EncodedLossContext::new(Some(enc), model, ParamCircuit::adversarial(n, 1).unwrap(), LossKind::Kl).unwrap();
        let input = StateVector::random(n, &mut r);
        let theta: Vec<f64> = (0..ctx.param_count()).map(|i| theta_scale * (i as f64 * 0.7).cos()).collect();
        let (l1, g1) = ctx.loss_and_gradient(&input, 1, &theta).unwrap();
        let (l2, g2) = ctx.loss_and_shift_gradient(&input, 1, &theta).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-10);
        for (a, b) in g1.iter().zip(&g2) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn attack_at_zero_leaves_the_classifier_unchanged() {
    let n = 4;
    let mut r = stream(3, domain::CLASSIFIER, 0);
    let model = ClassifierModel::random(n, 3, &mut r).unwrap();
    let input = StateVector::random(n, &mut r);
    let clean = model.probabilities(&input).unwrap();
    for codebook in [None, Some(CodebookKind::GlobalHaar), Some(CodebookKind::BlockHaar { m: 2, xi: 2 })] {
        let enc = codebook.map(|k| Codebook::new(k, n).unwrap().sample(&mut r).unwrap());
        let ctx = EncodedLossContext::new(enc, model.clone(), ParamCircuit::adversarial(n, 2).unwrap(), LossKind::Kl).unwrap();
        let p = ctx.probabilities(&input, &vec![0.0; ctx.param_count()]).unwrap();
        assert!((p[0] - clean[0]).abs() < 1e-12 && (p[1] - clean[1]).abs() < 1e-12);
        let zero_steps = AttackConfig { steps: 0, ..AttackConfig::default() };
        let out = gradient_attack(&ctx, &input, model.predict(&input).unwrap(), &zero_steps).unwrap();
        assert!(out.theta.iter().all(|t| *t == 0.0));
        assert!(!out.flipped());
    }
}

#[test]
fn attack_respects_its_budget_and_does_not_lower_the_loss() {
    let n = 3;
    let mut r = stream(5, domain::CLASSIFIER, 0);
    let model = ClassifierModel::random(n, 2, &mut r).unwrap();
    let ctx = EncodedLossContext::new(None, model.clone(), ParamCircuit::adversarial(n, 2).unwrap(), LossKind::Kl).unwrap();
    let cfg = AttackConfig { steps: 20, step_size: 0.2, budget: 0.3, layers: 2 };
    for i in 0..5 {
        let input = StateVector::random(n, &mut r);
        let label = model.predict(&input).unwrap();
        let out = gradient_attack(&ctx, &input, label, &cfg).unwrap();
        let norm = out.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!(norm <= cfg.budget + 1e-12, "input {i}: |theta| = {norm}");
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12), "input {i}: {:?}", out.trace);
    }
}
