//! The subcommands. Each turns a resolved config section into tables,
//! artifacts, a JSON summary and a list of checks.

use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use qshield::adversary::{self, ClassifierSource, ConcentrationConfig as ProbeConfig, LocalStrategy, Predicate, RiskAttack};
use qshield::circuits::ParamCircuit;
use qshield::classifier::{self, ClassifierModel, LossKind};
use qshield::dataset::{self, Dataset, DatasetConfig, DatasetMetadata};
use qshield::defense::{Codebook, CodebookKind, EncodedLossContext};
use qshield::haar;
use qshield::lanczos::LanczosConfig;
use qshield::linalg::{pauli, CMatrix, C64};
use qshield::qec::{self, CodeName, NoiseKind, NoiseModel, NoisyClassifier, QecCode, SyndromeMode, Thm4Config};
use qshield::rng::{self, domain};
use qshield::statevec::{Pauli, PauliString, StateVector};
use qshield::stats::{self, Summary};

use crate::config::*;
use crate::error::CliError;
use crate::output::{num, Check, Outcome, Table};

type Result<T> = std::result::Result<T, CliError>;

pub fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "kl" => Ok(LossKind::Kl),
        "ns" | "normalized_square" | "normalized-square" => Ok(LossKind::NormalizedSquare),
        _ => Err(CliError::Config(format!("unknown loss {s:?} (kl, normalized_square)"))),
    }
}

fn loss_name(l: LossKind) -> &'static str {
    match l {
        LossKind::Kl => "kl",
        LossKind::NormalizedSquare => "normalized_square",
    }
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
    ClassifierModel::from_json(&text).map_err(|e| CliError::Config(format!("model {}: {e}", path.display())))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read dataset {}: {e}", path.display())))?;
    dataset::decode_dataset(&bytes).map_err(|e| CliError::Config(format!("dataset {}: {e}", path.display())))
}

fn dataset_from(path: Option<&Path>, n: usize, count: usize, seed: u64) -> Result<Dataset> {
    match path {
        Some(p) => load_dataset(p),
        None => Ok(dataset::generate_dataset(&DatasetConfig::new(n, count, seed), &LanczosConfig::default())?),
    }
}

fn codebook_kind(name: &str, n: usize, block_size: usize, depth: usize) -> Result<Option<CodebookKind>> {
    match name {
        "none" => Ok(None),
        "global-haar" | "global_haar" => Ok(Some(CodebookKind::GlobalHaar)),
        "block-haar" | "block_haar" => {
            if block_size == 0 || n % block_size != 0 {
                return Err(CliError::Config(format!("block size {block_size} does not divide n = {n}")));
            }
            Ok(Some(CodebookKind::BlockHaar { m: block_size, xi: n / block_size }))
        }
        "pvqc" => Ok(Some(CodebookKind::Pvqc { depth })),
        _ => Err(CliError::Config(format!("unknown encoder {name:?} (none, global-haar, block-haar, pvqc)"))),
    }
}

// ---------------------------------------------------------------------------

pub fn gen_data(cfg: &GenDataConfig) -> Result<Outcome> {
    let dc = DatasetConfig {
        n: cfg.n,
        count: cfg.count,
        lambda_range: [cfg.lambda_min, cfg.lambda_max],
        margin: cfg.margin,
        seed: cfg.seed,
    };
    let ds = dataset::generate_dataset(&dc, &LanczosConfig::default())?;
    let mut t = Table::new("samples", &["index", "lambda", "label"]).with_plot("lambda", &["label"], false);
    for (i, s) in ds.samples.iter().enumerate() {
        t.push(vec![i.to_string(), num(s.lambda), s.label.to_string()]);
    }
    let meta = DatasetMetadata::describe(&ds, &dc);
    let [c0, c1] = ds.class_counts();
    let checks = vec![Check::new(
        "classes balanced",
        c0.abs_diff(c1) <= 1,
        format!("{c0} cluster-phase, {c1} antiferromagnetic"),
    )];
    Ok(Outcome {
        tables: vec![t],
        artifacts: vec![
            ("dataset.bin".into(), dataset::encode_dataset(&ds)),
            ("dataset.json".into(), (serde_json::to_string_pretty(&meta).expect("plain data") + "\n").into_bytes()),
        ],
        summary: serde_json::to_value(&meta).expect("plain data"),
        checks,
    })
}

/// Largest train/validation loss gap accepted at convergence.
pub const MAX_LOSS_GAP: f64 = 0.1;
pub const TARGET_ACCURACY: f64 = 0.9;

pub fn train(cfg: &TrainConfig) -> Result<Outcome> {
    let ds = dataset_from(cfg.dataset.as_deref(), cfg.n, cfg.count, cfg.data_seed)?;
    let (tr, va) = ds.split(cfg.train_fraction, cfg.data_seed)?;
    let tc = classifier::TrainConfig {
        loss: parse_loss(&cfg.loss)?,
        layers: cfg.layers,
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        iterations_per_epoch: cfg.iterations_per_epoch,
        batch_size: (cfg.batch_size > 0).then_some(cfg.batch_size),
        seed: cfg.seed,
        ..classifier::TrainConfig::default()
    };
    let (model, trace) = classifier::train(&tr, &va, &tc)?;
    let mut t = Table::new("trace", &["epoch", "train_loss", "train_accuracy", "validation_loss", "validation_accuracy"])
        .with_plot("epoch", &["train_loss", "validation_loss", "validation_accuracy"], false);
    for e in &trace {
        t.push(vec![
            e.epoch.to_string(),
            num(e.train_loss),
            num(e.train_accuracy),
            num(e.validation_loss),
            num(e.validation_accuracy),
        ]);
    }
    let last = trace.last().ok_or_else(|| CliError::Config("training needs at least one epoch".into()))?;
    let reached = trace.iter().find(|e| e.validation_accuracy >= TARGET_ACCURACY).map(|e| e.epoch);
    let gap = (last.train_loss - last.validation_loss).abs();
    let checks = vec![
        Check::new(
            "validation accuracy reaches 0.90",
            reached.is_some(),
            format!("first epoch {reached:?}, final {:.4}", last.validation_accuracy),
        ),
        Check::new("train/validation loss gap below 0.1", gap < MAX_LOSS_GAP, format!("gap {gap:.4}")),
    ];
    let json = model.to_json()?;
    Ok(Outcome {
        tables: vec![t],
        artifacts: vec![("model.json".into(), (json + "\n").into_bytes())],
        summary: json!({
            "loss": loss_name(tc.loss),
            "train_samples": tr.len(),
            "validation_samples": va.len(),
            "final": last,
            "first_epoch_at_target": reached,
            "loss_gap": gap,
        }),
        checks,
    })
}

pub fn eval(cfg: &EvalConfig) -> Result<Outcome> {
    let path = cfg.model.as_deref().ok_or_else(|| CliError::Config("eval needs a model checkpoint (--model)".into()))?;
    let model = load_model(path)?;
    let ds = dataset_from(cfg.dataset.as_deref(), model.n_data(), cfg.count, cfg.data_seed)?;
    if ds.n != model.n_data() {
        return Err(CliError::Config(format!("dataset has {} qubits, model expects {}", ds.n, model.n_data())));
    }
    let loss = parse_loss(&cfg.loss)?;
    let rows: Vec<[f64; 2]> = ds.samples.par_iter().map(|s| model.probabilities(&s.state)).collect::<qshield::error::Result<_>>()?;
    let mut t = Table::new("predictions", &["index", "lambda", "label", "prediction", "p0", "p1", "loss"]);
    let mut correct = 0;
    let mut losses = Vec::with_capacity(rows.len());
    for (i, (s, p)) in ds.samples.iter().zip(&rows).enumerate() {
        let pred = classifier::predict_from_probs(*p);
        correct += usize::from(pred == s.label);
        let l = loss.value(*p, s.label);
        losses.push(l);
        t.push(vec![i.to_string(), num(s.lambda), s.label.to_string(), pred.to_string(), num(p[0]), num(p[1]), num(l)]);
    }
    let accuracy = correct as f64 / ds.len().max(1) as f64;
    Ok(Outcome {
        tables: vec![t],
        artifacts: vec![],
        summary: json!({ "samples": ds.len(), "accuracy": accuracy, "loss": stats::mean(&losses) }),
        checks: vec![],
    })
}

/// Ratios the defense has to achieve against the undefended classifier.
pub const MIN_SUCCESS_RATIO: f64 = 5.0;
pub const MIN_GRADIENT_RATIO: f64 = 8.0;

pub fn attack(cfg: &AttackConfig) -> Result<Outcome> {
    let model = match &cfg.model {
        Some(p) => load_model(p)?,
        None => ClassifierModel::random(cfg.n, cfg.classifier_layers, &mut rng::stream(cfg.seed, domain::CLASSIFIER, 0))?,
    };
    let n = model.n_data();
    let ds = dataset_from(cfg.dataset.as_deref(), n, cfg.count, cfg.data_seed)?;
    if ds.n != n {
        return Err(CliError::Config(format!("dataset has {} qubits, model expects {n}", ds.n)));
    }
    let loss = parse_loss(&cfg.loss)?;
    let ac = adversary::AttackConfig { steps: cfg.steps, step_size: cfg.step_size, budget: cfg.budget, layers: cfg.layers };
    let adv = ParamCircuit::adversarial(n, cfg.layers)?;
    let mut per_input = Table::new(
        "attack",
        &["encoder", "index", "label", "clean_label", "attacked_label", "flipped", "first_gradient_inf_norm", "initial_loss", "final_loss"],
    );
    let mut summary_t = Table::new("attack_summary", &["encoder", "inputs", "success_rate", "success_ci_low", "success_ci_high", "median_first_gradient"]);
    let mut per_encoder = Vec::new();
    for name in cfg.encoders.iter() {
        let kind = codebook_kind(name, n, cfg.block_size, cfg.pvqc_depth)?;
        let codebook = kind.map(|k| Codebook::new(k, n)).transpose()?;
        let outcomes: Vec<adversary::AttackOutcome> = ds
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let encoder = match &codebook {
                    Some(c) => Some(c.sample(&mut rng::stream(cfg.seed, domain::ENCODER, i as u64))?),
                    None => None,
                };
                let ctx = EncodedLossContext::new(encoder, model.clone(), adv.clone(), loss)?;
                adversary::gradient_attack(&ctx, &s.state, s.label, &ac)
            })
            .collect::<qshield::error::Result<_>>()?;
        for (i, (s, o)) in ds.samples.iter().zip(&outcomes).enumerate() {
            per_input.push(vec![
                name.clone(),
                i.to_string(),
                s.label.to_string(),
                o.clean_label.to_string(),
                o.attacked_label.to_string(),
                u8::from(o.flipped()).to_string(),
                num(o.first_gradient_norm),
                num(o.trace[0]),
                num(*o.trace.last().expect("trace starts with the clean loss")),
            ]);
        }
        let flips = outcomes.iter().filter(|o| o.flipped()).count();
        let rate = flips as f64 / outcomes.len().max(1) as f64;
        let (lo, hi) = stats::wilson_interval(flips, outcomes.len());
        let grad = stats::median(&outcomes.iter().map(|o| o.first_gradient_norm).collect::<Vec<_>>());
        summary_t.push(vec![name.clone(), outcomes.len().to_string(), num(rate), num(lo), num(hi), num(grad)]);
        per_encoder.push((name.clone(), rate, grad));
    }
    let mut checks = Vec::new();
    if let Some((_, base_rate, base_grad)) = per_encoder.iter().find(|e| e.0 == "none").cloned() {
        for (name, rate, grad) in per_encoder.iter().filter(|e| e.0 != "none") {
            // a defended rate of zero counts as an unbounded improvement
            let success_ratio = if *rate > 0.0 { base_rate / rate } else if base_rate > 0.0 { f64::INFINITY } else { f64::NAN };
            let grad_ratio = base_grad / grad;
            checks.push(Check::new(
                format!("{name}: success rate at least 5x lower"),
                success_ratio >= MIN_SUCCESS_RATIO,
                format!("undefended {base_rate:.4}, defended {rate:.4}, ratio {success_ratio:.3}"),
            ));
            checks.push(Check::new(
                format!("{name}: median first-step gradient ratio at least 8"),
                grad_ratio >= MIN_GRADIENT_RATIO,
                format!("undefended {base_grad:.4e}, defended {grad:.4e}, ratio {grad_ratio:.3}"),
            ));
        }
    }
    Ok(Outcome {
        summary: json!({
            "n": n,
            "inputs": ds.len(),
            "attack": ac,
            "encoders": per_encoder.iter().map(|(e, r, g)| json!({"encoder": e, "success_rate": r, "median_first_gradient": g})).collect::<Vec<_>>(),
        }),
        tables: vec![per_input, summary_t],
        artifacts: vec![],
        checks,
    })
}

// ---------------------------------------------------------------------------

pub fn grad_stats(cfg: &GradStatsConfig) -> Result<Outcome> {
    let first_n = *cfg.n.0.first().ok_or_else(|| CliError::Config("grad-stats needs at least one n".into()))?;
    let kind = codebook_kind(&cfg.encoder, first_n, cfg.block_size, cfg.pvqc_depth)?
        .ok_or_else(|| CliError::Config("grad-stats needs an encoder".into()))?;
    let classifier = match &cfg.model {
        Some(p) => ClassifierSource::Trained(Box::new(load_model(p)?)),
        None => ClassifierSource::Random { layers: cfg.classifier_layers },
    };
    let base = adversary::GradStatsConfig {
        n_values: cfg.n.0.clone(),
        codebook: kind,
        samples: cfg.samples,
        seed: cfg.seed,
        loss: parse_loss(&cfg.loss)?,
        classifier,
        inputs: cfg.inputs,
        adversary_layers: cfg.adversary_layers,
    };
    let records = adversary::grad_stats_experiment(&base)?;

    let mut t = Table::new(
        "grad_stats",
        &[
            "n", "encoder", "samples", "mean", "mean_stderr", "mean_abs", "variance", "variance_stderr", "thm_bound", "thm_exact", "c0",
            "classifier", "inputs",
        ],
    )
    .with_plot("n", &["variance", "thm_exact", "thm_bound"], true);
    let mut params = Table::new("per_param", &["n", "qubit", "axis", "unit", "mean", "stderr", "variance"]);
    let mut checks = Vec::new();
    for r in &records {
        t.push(vec![
            r.n.to_string(),
            r.encoder.clone(),
            r.samples.to_string(),
            num(r.mean),
            num(r.mean_stderr),
            num(r.mean_abs),
            num(r.variance),
            num(r.variance_stderr),
            num(r.thm_bound),
            num(r.thm_exact),
            r.c0.map_or_else(|| "".into(), num),
            r.classifier.clone(),
            r.inputs.clone(),
        ]);
        for p in &r.per_param {
            params.push(vec![r.n.to_string(), p.qubit.to_string(), p.axis.to_string(), p.unit.to_string(), num(p.mean), num(p.stderr), num(p.variance)]);
        }
        let worst = r.per_param.iter().map(|p| p.mean.abs() / p.stderr).fold(0.0, f64::max);
        checks.push(Check::new(format!("n={}: every parameter mean within 4 stderr of 0", r.n), worst <= 4.0, format!("worst |mean|/stderr {worst:.3}")));
        if r.thm_exact.is_finite() {
            let z = (r.variance - r.thm_exact).abs() / r.variance_stderr;
            if matches!(kind, CodebookKind::GlobalHaar) {
                checks.push(Check::new(format!("n={}: variance within 3 stderr of the exact value", r.n), z <= 3.0, format!("z {z:.3}")));
            }
            checks.push(Check::new(
                format!("n={}: variance below the bound", r.n),
                r.variance <= r.thm_bound + 3.0 * r.variance_stderr,
                format!("variance {:.4e}, bound {:.4e}", r.variance, r.thm_bound),
            ));
        }
    }
    let mut summary = json!({ "records": records.len() });
    if records.len() >= 2 {
        let xs: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.variance.log2()).collect();
        let fit = stats::linear_fit(&xs, &ys);
        let window = match kind {
            CodebookKind::GlobalHaar => Some((-1.2, -0.8)),
            CodebookKind::BlockHaar { m: 2, .. } => Some((-1.0, -0.6)),
            _ => None,
        };
        if let Some((lo, hi)) = window {
            checks.push(Check::new(
                format!("log2 variance slope in [{lo}, {hi}]"),
                (lo..=hi).contains(&fit.slope),
                format!("slope {:.4}", fit.slope),
            ));
        }
        summary = json!({ "records": records.len(), "log2_variance_slope": fit.slope, "log2_variance_intercept": fit.intercept });
    }
    let mut tables = vec![t, params];

    if !cfg.sample_sweep.is_empty() {
        let mut sweep = Table::new("sample_sweep", &["n", "samples", "mean_abs", "mean_abs_stderr", "mean_stderr"]).with_plot("samples", &["mean_abs"], true);
        let mut rows = Vec::new();
        for &s in &cfg.sample_sweep {
            let c = adversary::GradStatsConfig { n_values: vec![first_n], samples: s, ..base.clone() };
            let r = adversary::grad_stats_experiment(&c)?.remove(0);
            let abs: Vec<f64> = r.per_param.iter().map(|p| p.mean.abs()).collect();
            let err = Summary::of(&abs).stderr;
            let typical = stats::mean(&r.per_param.iter().map(|p| p.stderr).collect::<Vec<_>>());
            sweep.push(vec![first_n.to_string(), s.to_string(), num(r.mean_abs), num(err), num(typical)]);
            rows.push((s, r.mean_abs, err));
        }
        rows.sort_by_key(|r| r.0);
        let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1 + 2.0 * (w[0].2.hypot(w[1].2)));
        checks.push(Check::new(
            "gradient mean magnitude shrinks with the sample size",
            monotone,
            rows.iter().map(|r| format!("N={}: {:.3e}", r.0, r.1)).collect::<Vec<_>>().join(", "),
        ));
        tables.push(sweep);
    }
    Ok(Outcome { tables, artifacts: vec![], summary, checks })
}

// ---------------------------------------------------------------------------

pub const HAAR_TOLERANCE: f64 = 5e-3;

fn alternating_diagonal(d: usize) -> CMatrix {
    let diag: Vec<f64> = (0..d).map(|i| if d % 2 == 1 && i == d - 1 { 0.0 } else if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    CMatrix::from_real_diagonal(&diag)
}

/// Gaussian Hermitian matrix scaled to unit Frobenius norm.
fn random_hermitian<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let h = &g + &g.adjoint();
    let f = h.frobenius_norm();
    h.scale(C64::new(1.0 / f, 0.0))
}

fn ket0(d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(0, 0)] = C64::new(1.0, 0.0);
    m
}

pub fn haar_verify(cfg: &HaarVerifyConfig) -> Result<Outcome> {
    let mut t = Table::new("haar_verify", &["d", "query", "samples", "frobenius_error", "stderr", "analytic_norm"]);
    let mut checks = Vec::new();
    let z = pauli::z();
    let exact = haar::second_moment(&z, &z, &ket0(2))?;
    let diag = CMatrix::from_real_diagonal(&[1.0 / 3.0, 2.0 / 3.0]);
    checks.push(Check::new("d=2, A=B=Z, X=|0><0| gives diag(1/3, 2/3)", exact.distance(&diag) < 1e-12, format!("distance {:.2e}", exact.distance(&diag))));
    for (k, &d) in cfg.d.iter().enumerate() {
        if d < 2 {
            return Err(CliError::Config(format!("dimension {d} too small; need d >= 2")));
        }
        let mut r = rng::stream(cfg.seed, domain::HAAR_MC, (k as u64) << 32);
        let a = alternating_diagonal(d);
        let (ra, rb, rx) = (random_hermitian(d, &mut r), random_hermitian(d, &mut r), random_hermitian(d, &mut r));
        let mut queries: Vec<(String, CMatrix, haar::MatrixEstimate)> = Vec::new();
        let next = |i: u64| rng::stream(cfg.seed, domain::HAAR_MC, ((k as u64) << 32) | i);
        queries.push(("first:alternating".into(), haar::first_moment(&a)?, haar::mc_first_moment(&a, cfg.samples, &mut next(1))?));
        queries.push((
            "second:A=B=alternating,X=|0><0|".into(),
            haar::second_moment(&a, &a, &ket0(d))?,
            haar::mc_second_moment(&a, &a, &ket0(d), cfg.samples, &mut next(2))?,
        ));
        queries.push((
            "second:random_hermitian".into(),
            haar::second_moment(&ra, &rb, &rx)?,
            haar::mc_second_moment(&ra, &rb, &rx, cfg.samples, &mut next(3))?,
        ));
        if d % 2 == 0 && d > 2 {
            let blocks = vec![(z.clone(), z.clone()), (alternating_diagonal(d / 2), alternating_diagonal(d / 2))];
            queries.push((
                format!("block:2x{}", d / 2),
                haar::block_second_moment(&blocks, &ket0(d))?,
                haar::mc_block_second_moment(&blocks, &ket0(d), cfg.samples, &mut next(4))?,
            ));
        }
        for (name, analytic, est) in queries {
            let err = est.mean.distance(&analytic);
            t.push(vec![d.to_string(), name.clone(), cfg.samples.to_string(), num(err), num(est.stderr), num(analytic.frobenius_norm())]);
            checks.push(Check::new(format!("d={d} {name}: error below 5e-3"), err < HAAR_TOLERANCE, format!("error {err:.3e}, stderr {:.3e}", est.stderr)));
        }
    }
    Ok(Outcome { tables: vec![t], artifacts: vec![], summary: json!({ "samples": cfg.samples }), checks })
}

// ---------------------------------------------------------------------------

fn parse_strategy(s: &str) -> Result<LocalStrategy> {
    match s {
        "random" => Ok(LocalStrategy::Random),
        "greedy" => Ok(LocalStrategy::Greedy),
        _ => Err(CliError::Config(format!("unknown strategy {s:?} (random, greedy)"))),
    }
}

pub fn risk(cfg: &RiskConfig) -> Result<Outcome> {
    let model = match &cfg.model {
        Some(p) => load_model(p)?,
        None => ClassifierModel::random(cfg.n, cfg.classifier_layers, &mut rng::stream(cfg.seed, domain::CLASSIFIER, 0))?,
    };
    let n = model.n_data();
    let strategy = parse_strategy(&cfg.strategy)?;
    let predict = |s: &StateVector| model.predict(s);
    let mut t = Table::new("risk", &["tau", "attack", "risk", "ci_low", "ci_high", "trials", "flips", "thm3_threshold"])
        .with_plot("tau", &["risk", "ci_low", "ci_high"], false);
    let threshold = adversary::thm3_threshold(n, &cfg.measures, cfg.target_risk)?;
    let identity = adversary::adversarial_risk_estimate(&predict, &model, n, RiskAttack::Identity, cfg.trials, cfg.seed)?;
    let mut checks = vec![Check::new("identity attack has zero risk", identity.flips == 0, format!("{} flips", identity.flips))];
    let mut push = |tau: f64, name: &str, e: &adversary::RiskEstimate| {
        t.push(vec![num(tau), name.into(), num(e.risk), num(e.ci_low), num(e.ci_high), e.trials.to_string(), e.flips.to_string(), num(threshold)]);
    };
    push(0.0, "identity", &identity);
    let mut estimates = Vec::new();
    for &tau in cfg.tau.iter() {
        let e = adversary::adversarial_risk_estimate(&predict, &model, n, RiskAttack::Local { tau, strategy }, cfg.trials, cfg.seed)?;
        push(tau, &cfg.strategy, &e);
        estimates.push((tau, e));
    }
    let monotone = estimates.windows(2).all(|w| w[1].1.ci_high >= w[0].1.ci_low);
    checks.push(Check::new("risk does not fall as tau grows", monotone, String::new()));
    Ok(Outcome {
        tables: vec![t],
        artifacts: vec![],
        summary: json!({ "n": n, "thm3_threshold": threshold, "measures": cfg.measures, "target_risk": cfg.target_risk }),
        checks,
    })
}

fn parse_predicate(s: &str) -> Result<Predicate> {
    match s {
        "first_qubit_fidelity" => Ok(Predicate::FirstQubitFidelity),
        "mean_fidelity" => Ok(Predicate::MeanFidelity),
        _ => Err(CliError::Config(format!("unknown predicate {s:?} (first_qubit_fidelity, mean_fidelity)"))),
    }
}

fn parse_alphabet(s: &str) -> Result<adversary::Alphabet> {
    match s {
        "haar" => Ok(adversary::Alphabet::Haar),
        "pauli" | "pauli_eigenstates" => Ok(adversary::Alphabet::PauliEigenstates),
        _ => Err(CliError::Config(format!("unknown alphabet {s:?} (haar, pauli_eigenstates)"))),
    }
}

pub fn concentration(cfg: &ConcentrationConfig) -> Result<Outcome> {
    let predicate = parse_predicate(&cfg.predicate)?;
    let alphabet = parse_alphabet(&cfg.alphabet)?;
    let mut t = Table::new(
        "concentration",
        &[
            "n", "tau", "alphabet", "threshold", "set_measure", "set_stderr", "extension_measure", "extension_stderr", "levy_bound", "extension_bound",
            "exhaustive_set", "exhaustive_extension",
        ],
    )
    .with_plot("tau", &["extension_measure", "levy_bound"], false);
    let mut checks = Vec::new();
    for &n in cfg.n.iter() {
        for &tau in cfg.tau.iter() {
            let pc = ProbeConfig { n, tau, samples: cfg.samples, predicate, alphabet, candidates: cfg.candidates, restarts: cfg.restarts };
            let r = adversary::concentration_probe(&pc, cfg.seed)?;
            let (ex_set, ex_ext) = if n <= cfg.exhaustive_max_n {
                let (s, e) = adversary::exhaustive_extension(n, predicate, r.threshold, tau)?;
                (Some(s), Some(e))
            } else {
                (None, None)
            };
            let opt = |x: Option<f64>| x.map_or_else(String::new, num);
            t.push(vec![
                n.to_string(),
                num(tau),
                cfg.alphabet.clone(),
                num(r.threshold),
                num(r.set_measure),
                num(r.set_stderr),
                num(r.extension_measure),
                num(r.extension_stderr),
                num(r.levy_bound),
                num(r.extension_bound),
                opt(ex_set),
                opt(ex_ext),
            ]);
            if r.set_measure >= 0.5 {
                checks.push(Check::new(
                    format!("n={n} tau={tau}: extension measure above the Levy bound"),
                    r.extension_measure >= r.levy_bound - 3.0 * r.extension_stderr,
                    format!("measured {:.4} ± {:.4}, bound {:.4}", r.extension_measure, r.extension_stderr, r.levy_bound),
                ));
            }
            if let (Some(s), Some(e)) = (ex_set, ex_ext) {
                let bound = if s >= 0.5 { 1.0 - 2.0 * (-tau * tau * n as f64).exp() } else { r.extension_bound };
                checks.push(Check::new(
                    format!("n={n} tau={tau}: exhaustive extension consistent with the bound"),
                    bound <= e + 1e-12,
                    format!("exhaustive set {s:.4}, extension {e:.4}, bound {bound:.4}"),
                ));
                if alphabet == adversary::Alphabet::PauliEigenstates {
                    checks.push(Check::new(
                        format!("n={n} tau={tau}: search agrees with the exhaustive oracle"),
                        r.extension_measure <= e + 3.0 * r.extension_stderr && (r.set_measure - s).abs() <= 3.0 * r.set_stderr.max(1e-12),
                        format!("search {:.4}, exhaustive {e:.4}", r.extension_measure),
                    ));
                }
            }
        }
    }
    Ok(Outcome { tables: vec![t], artifacts: vec![], summary: json!({ "predicate": cfg.predicate, "alphabet": cfg.alphabet }), checks })
}

// ---------------------------------------------------------------------------

fn parse_code(s: &str) -> Result<CodeName> {
    match s {
        "repetition3" => Ok(CodeName::Repetition3),
        "perfect5" => Ok(CodeName::Perfect5),
        _ => Err(CliError::Config(format!("unknown code {s:?} (repetition3, perfect5)"))),
    }
}

fn noise_kind(name: &str, p: f64) -> Result<NoiseKind> {
    match name {
        "bit_flip" => Ok(NoiseKind::BitFlip { p }),
        "depolarizing" => Ok(NoiseKind::Depolarizing { p }),
        "random_unitary" => Ok(NoiseKind::RandomUnitary { max_angle: p }),
        _ => Err(CliError::Config(format!("unknown noise {name:?} (bit_flip, depolarizing, random_unitary)"))),
    }
}

/// Fidelity after a single error on one physical qubit of a one-logical-qubit
/// code, through the coherent (measurement-free) recovery.
fn single_error_fidelity(code: &QecCode, error: &StateVector, logical: &StateVector) -> Result<f64> {
    let frame = qec::ObfuscationFrame::identity(code.block_size());
    let mut r = rng::stream(0, domain::QEC, 0);
    let m = qec::correct_and_decode(error, code, &frame, SyndromeMode::Coherent, &mut r)?;
    Ok(m.fidelity(logical)?)
}

pub fn qec_sim(cfg: &QecSimConfig) -> Result<Outcome> {
    let mut t = Table::new("qec_rates", &["code", "levels", "noise", "p", "tau", "rate", "stderr", "trials", "theory", "z"])
        .with_plot("p", &["rate", "theory"], true);
    let mut singles = Table::new("single_errors", &["code", "case", "qubit", "error", "fidelity"]);
    let mut checks = Vec::new();
    for (ci, name) in cfg.code.iter().enumerate() {
        let name = parse_code(name)?;
        for &levels in cfg.levels.iter() {
            let code = QecCode::new(name, levels)?;
            for (pi, &p) in cfg.p.iter().enumerate() {
                let kind = noise_kind(&cfg.noise, p)?;
                let model = if cfg.tau > 0.0 { NoiseModel::fraction(kind, cfg.tau) } else { NoiseModel::iid(kind) };
                let seed = cfg.seed ^ (((ci as u64) << 48) | ((levels as u64) << 40) | ((pi as u64) << 32));
                let est = qec::logical_error_rate(&code, &model, cfg.trials, seed)?;
                let theory = (name == CodeName::Repetition3 && cfg.noise == "bit_flip" && cfg.tau == 0.0).then(|| qec::repetition_failure(p, levels));
                let z = theory.map(|q| (est.rate - q) / (q * (1.0 - q) / est.trials as f64).sqrt());
                t.push(vec![
                    name.to_string(),
                    levels.to_string(),
                    cfg.noise.clone(),
                    num(p),
                    num(cfg.tau),
                    num(est.rate),
                    num(est.stderr),
                    est.trials.to_string(),
                    theory.map_or_else(String::new, num),
                    z.map_or_else(String::new, num),
                ]);
                if let (Some(q), Some(z)) = (theory, z) {
                    checks.push(Check::new(
                        format!("{name} level {levels} p={p}: rate matches the majority-vote formula"),
                        z.abs() <= 3.0,
                        format!("rate {:.6}, theory {q:.6}, z {z:.3}", est.rate),
                    ));
                }
            }
        }
        if name == CodeName::Perfect5 && cfg.levels.iter().any(|&l| l == 1) {
            let code = QecCode::perfect5();
            let mut worst: f64 = 1.0;
            // sub-streams clear of the per-trial indices and of the amplification check
            let mut r = rng::stream(cfg.seed, domain::QEC, 3 << 32);
            let logical = StateVector::random(1, &mut r);
            let phys = qec::encode_logical(&logical, &code, &qec::ObfuscationFrame::identity(5))?;
            let mut case = 0;
            for q in 0..5 {
                for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                    let mut e = phys.clone();
                    e.apply_pauli(&PauliString::single(5, q, p))?;
                    let f = single_error_fidelity(&code, &e, &logical)?;
                    worst = worst.min(f);
                    singles.push(vec![name.to_string(), case.to_string(), q.to_string(), format!("{p:?}"), num(f)]);
                    case += 1;
                }
            }
            checks.push(Check::new("perfect5 corrects all 15 single-qubit Paulis", worst >= 1.0 - 1e-9, format!("worst fidelity {worst:.12}")));
            let noise = NoiseModel::fraction(NoiseKind::RandomUnitary { max_angle: std::f64::consts::PI }, 0.2);
            let mut worst_u: f64 = 1.0;
            for i in 0..cfg.single_error_trials {
                let mut r = rng::stream(cfg.seed, domain::QEC, (4 << 32) | i as u64);
                let logical = StateVector::random(1, &mut r);
                let phys = qec::encode_logical(&logical, &code, &qec::ObfuscationFrame::identity(5))?;
                let (e, hits) = qec::apply_local_noise(&phys, &noise, &mut r)?;
                let f = single_error_fidelity(&code, &e, &logical)?;
                worst_u = worst_u.min(f);
                singles.push(vec![name.to_string(), case.to_string(), hits.first().map_or_else(String::new, |q| q.to_string()), "random_unitary".into(), num(f)]);
                case += 1;
            }
            checks.push(Check::new(
                format!("perfect5 corrects {} random single-qubit unitaries", cfg.single_error_trials),
                worst_u >= 1.0 - 1e-9,
                format!("worst fidelity {worst_u:.12}"),
            ));
        }
    }
    let mut tables = vec![t];
    if !singles.rows.is_empty() {
        tables.push(singles);
    }
    Ok(Outcome { tables, artifacts: vec![], summary: json!({ "trials": cfg.trials, "noise": cfg.noise }), checks })
}

// ---------------------------------------------------------------------------

pub fn qdp(cfg: &QdpConfig) -> Result<Outcome> {
    let model = ClassifierModel::random(cfg.n, cfg.classifier_layers, &mut rng::stream(cfg.seed, domain::CLASSIFIER, 0))?;
    let mut eps_t = Table::new("epsilon", &["floor", "tau", "epsilon", "pairs", "floor_limit"]).with_plot("tau", &["epsilon"], false);
    let mut prop_t = Table::new(
        "proposition",
        &["tau", "floor", "epsilon", "entropy_term", "risk", "risk_stderr", "bound", "holds"],
    );
    let mut checks = Vec::new();
    let mut prop_ok = true;
    let mut worst_slack = f64::INFINITY;
    for &floor in cfg.floor.iter() {
        let ch = NoisyClassifier::new(model.clone(), floor)?;
        let limit = if floor > 0.0 { ((1.0 - floor) / floor).ln() } else { f64::INFINITY };
        let mut prev: f64 = 0.0;
        let mut monotone = true;
        for &tau in cfg.tau.iter() {
            let e = qec::qdp_epsilon_estimate(&ch, tau, cfg.pairs, cfg.seed)?;
            monotone &= e.epsilon >= prev;
            prev = e.epsilon;
            eps_t.push(vec![num(floor), num(tau), num(e.epsilon), e.pairs.to_string(), num(limit)]);
            let rb = qec::risk_bound_check(&ch, tau, cfg.inputs, cfg.candidates, cfg.seed)?;
            let holds = rb.risk <= rb.bound + 3.0 * rb.risk_stderr;
            prop_ok &= holds;
            worst_slack = worst_slack.min(rb.bound + 3.0 * rb.risk_stderr - rb.risk);
            prop_t.push(vec![
                num(tau),
                num(floor),
                num(rb.epsilon),
                num(rb.entropy_term),
                num(rb.risk),
                num(rb.risk_stderr),
                num(rb.bound),
                u8::from(holds).to_string(),
            ]);
        }
        checks.push(Check::new(format!("floor {floor}: epsilon nondecreasing in tau"), monotone, String::new()));
        checks.push(Check::new(format!("floor {floor}: epsilon within ln((1-p0)/p0)"), prev <= limit + 1e-12, format!("max {prev:.4}, limit {limit:.4}")));
    }
    checks.push(Check::new("risk below the privacy bound on every grid point", prop_ok, format!("smallest slack {worst_slack:.4e}")));

    // privacy amplification through a hidden code, on the smallest floor
    let code = QecCode::new(parse_code(&cfg.code)?, 1)?;
    let floor = cfg.floor.iter().cloned().find(|f| *f > 0.0).unwrap_or(0.05);
    let ch = NoisyClassifier::new(model, floor)?;
    let tc = Thm4Config { code, logical: cfg.n, tau: cfg.qec_tau, delta: cfg.delta, pairs: cfg.qec_pairs, curve_pairs: cfg.curve_pairs };
    let report = qec::verify_thm4(&tc, &ch, cfg.seed)?;
    let mut curve = Table::new("qec_epsilon_curve", &["logical_distance", "epsilon"]).with_plot("logical_distance", &["epsilon"], false);
    for (d, e) in &report.epsilon_curve {
        curve.push(vec![num(*d), num(*e)]);
    }
    let mut pairs = Table::new("qec_pairs", &["pair", "physical_distance", "logical_distance", "log_ratio"]);
    for (i, (p, l, r)) in report.rows.iter().enumerate() {
        pairs.push(vec![i.to_string(), num(*p), num(*l), num(*r)]);
    }
    let distance = if cfg.distance > 0.0 { cfg.distance } else { report.distance_bound };
    let within = report.satisfied_within(distance);
    let m = report.rows.len() as f64;
    let frac = within as f64 / m;
    let target = 1.0 - cfg.delta;
    let sigma = (target * (1.0 - target) / m).sqrt();
    checks.push(Check::new(
        format!("at least {:.0}% of pairs within logical distance {distance} and the ratio bound", 100.0 * target),
        frac >= target - 3.0 * sigma,
        format!("{within}/{} pairs, code bound {:.4}", report.rows.len(), report.distance_bound),
    ));
    checks.push(Check::new(
        "failing fraction within delta",
        report.failing_fraction <= cfg.delta + 3.0 * report.failing_stderr.max(sigma),
        format!("failing {:.4} ± {:.4}", report.failing_fraction, report.failing_stderr),
    ));
    Ok(Outcome {
        tables: vec![eps_t, prop_t, curve, pairs],
        artifacts: vec![],
        summary: json!({
            "distance_bound": report.distance_bound,
            "epsilon_at_bound": report.epsilon_at_bound,
            "satisfied_at_bound": report.satisfied,
            "satisfied_within_distance": within,
            "distance": distance,
            "failing_fraction": report.failing_fraction,
            "failing_stderr": report.failing_stderr,
            "floor": floor,
        }),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse() {
        assert_eq!(parse_loss("kl").unwrap(), LossKind::Kl);
        assert_eq!(parse_loss("normalized_square").unwrap(), LossKind::NormalizedSquare);
        assert!(parse_loss("mse").is_err());
        assert_eq!(codebook_kind("block-haar", 6, 2, 1).unwrap(), Some(CodebookKind::BlockHaar { m: 2, xi: 3 }));
        assert!(codebook_kind("block-haar", 5, 2, 1).is_err());
        assert_eq!(codebook_kind("none", 4, 2, 1).unwrap(), None);
        assert!(parse_code("steane").is_err());
        assert!(noise_kind("amplitude", 0.1).is_err());
    }

    #[test]
    fn alternating_diagonal_is_traceless_for_even_d() {
        for d in [2, 4, 6] {
            assert!(alternating_diagonal(d).trace().norm() < 1e-15);
        }
        assert_eq!(alternating_diagonal(2), pauli::z());
    }
}
