//! Finite-difference checks for every differentiable piece of the model.
//!
//! Used by the `gradcheck` CLI subcommand. Each check compares an analytic
//! gradient against central differences with step [`FD_STEP`] and passes
//! when every coordinate agrees within [`REL_TOL`] relative error or
//! [`ABS_FLOOR`] absolute error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{linear_sine_forward, mse_loss, ParamStore, SineConvention, Tape};
use crate::model::{Inr, ModelConfig, QuinrModel, SirenConfig, SirenModel};
use crate::qsim::{AngleSource, CircuitProgram, GateKind, GateOp};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

/// Central-difference gradient of a scalar function.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let hi = f(&probe);
            probe[i] = x[i] - step;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// Compare analytic and numeric gradients coordinate by coordinate.
pub fn compare(
    name: impl Into<String>,
    analytic: &[f64],
    numeric: &[f64],
    rel_tol: f64,
) -> CheckResult {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut passed = true;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(f64::MIN_POSITIVE);
        max_abs = max_abs.max(abs);
        if abs > ABS_FLOOR {
            max_rel = max_rel.max(rel);
            passed &= rel < rel_tol;
        }
        passed &= abs.is_finite();
    }
    CheckResult {
        name: name.into(),
        coordinates: analytic.len(),
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        passed,
    }
}

/// Random RX/RZ/CRZ program; every gate reads an indexed angle.
pub fn random_circuit(
    rng: &mut impl Rng,
    n_qubits: usize,
    n_gates: usize,
    n_angles: usize,
) -> CircuitProgram {
    let ops = (0..n_gates)
        .map(|_| {
            let angle = AngleSource::Index(rng.gen_range(0..n_angles));
            let kinds: &[GateKind] = if n_qubits > 1 {
                &[GateKind::Rx, GateKind::Rz, GateKind::Crz]
            } else {
                &[GateKind::Rx, GateKind::Rz]
            };
            let target = rng.gen_range(0..n_qubits);
            match kinds[rng.gen_range(0..kinds.len())] {
                GateKind::Rx => GateOp::rx(target, angle),
                GateKind::Rz => GateOp::rz(target, angle),
                GateKind::Crz => {
                    let control = (target + rng.gen_range(1..n_qubits)) % n_qubits;
                    GateOp::crz(control, target, angle)
                }
            }
        })
        .collect();
    CircuitProgram::new(n_qubits, ops, n_angles).expect("generated gates are valid")
}

fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random 4-qubit, 20-angle circuit with a random linear readout.
pub fn check_circuit(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prog = random_circuit(&mut rng, 4, 40, 20);
    let angles = uniform(&mut rng, 20, -3.0, 3.0);
    let upstream = uniform(&mut rng, 16, -1.0, 1.0);
    let analytic = prog
        .gradient(&angles, &upstream)
        .expect("sized by construction");
    let numeric = central_difference(
        |a| {
            let p = prog.run(a).expect("sized by construction").probabilities();
            p.iter().zip(&upstream).map(|(p, u)| p * u).sum()
        },
        &angles,
        FD_STEP,
    );
    compare("circuit adjoint gradient", &analytic, &numeric, REL_TOL)
}

/// Sinusoidal layer gradients w.r.t. W, b, and x for both conventions.
pub fn check_linear_sine(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n_in) = (8, 2);
    let w = uniform(&mut rng, m * n_in, -0.5, 0.5);
    let b = uniform(&mut rng, m, -1.0, 1.0);
    let x = uniform(&mut rng, n_in, -1.0, 1.0);
    let upstream = uniform(&mut rng, m, -1.0, 1.0);
    let omega = 30.0;
    [SineConvention::Literal, SineConvention::Siren]
        .into_iter()
        .map(|conv| {
            let store =
                ParamStore::from_slices(vec![("W", w.clone()), ("b", b.clone()), ("x", x.clone())]);
            let mut tape = Tape::new();
            let wv = tape.param(&store, "W").expect("slice exists");
            let bv = tape.param(&store, "b").expect("slice exists");
            let xv = tape.param(&store, "x").expect("slice exists");
            let h = tape
                .linear_sine(wv, bv, xv, omega, conv)
                .expect("dims consistent");
            let up = upstream.clone();
            let hval = tape.value(h).to_vec();
            let loss = tape.custom(
                &[h],
                vec![hval.iter().zip(&up).map(|(a, b)| a * b).sum()],
                Box::new(move |g| vec![up.iter().map(|u| u * g[0]).collect()]),
            );
            let mut analytic = vec![0.0; store.len()];
            tape.backward(loss, &mut analytic).expect("scalar output");
            let numeric = central_difference(
                |flat| {
                    let (w, rest) = flat.split_at(m * n_in);
                    let (b, x) = rest.split_at(m);
                    linear_sine_forward(w, b, x, omega, conv)
                        .expect("dims consistent")
                        .iter()
                        .zip(&upstream)
                        .map(|(h, u)| h * u)
                        .sum()
                },
                &store.values,
                FD_STEP,
            );
            compare(format!("linear_sine ({conv:?})"), &analytic, &numeric, 1e-5)
        })
        .collect()
}

pub fn check_mse(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = uniform(&mut rng, 7, -1.0, 1.0);
    let target = uniform(&mut rng, 7, -1.0, 1.0);
    let (_, analytic) = mse_loss(&pred, &target).expect("equal lengths");
    let numeric = central_difference(
        |p| mse_loss(p, &target).expect("equal lengths").0,
        &pred,
        FD_STEP,
    );
    compare("mse_loss", &analytic, &numeric, 1e-6)
}

/// End-to-end `d MSE / dψ` for any model at one `(x, target)` pair.
pub fn check_model<M: Inr + Clone>(
    name: &str,
    model: &M,
    x: &[f64],
    target: &[f64],
) -> CheckResult {
    let mut analytic = vec![0.0; model.params().len()];
    model
        .loss_and_grad(x, target, &mut analytic)
        .expect("model dimensions are consistent");
    let mut probe = model.clone();
    let numeric = central_difference(
        |values| {
            probe.params_mut().values.copy_from_slice(values);
            mse_loss(&probe.forward(x), target)
                .expect("equal lengths")
                .0
        },
        &model.params().values,
        FD_STEP,
    );
    compare(name, &analytic, &numeric, REL_TOL)
}

/// Random quINR (`N_q = 3, F = 2, L = 1, B = 2`) at `pairs` random
/// coordinate/target pairs.
pub fn check_quinr(seed: u64, pairs: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ModelConfig::new(2, 1, 3, 2, 1, 2);
    cfg.init_seed = seed;
    cfg.shuffle_seed = seed.wrapping_add(1);
    let mut model = QuinrModel::new(cfg).expect("valid config");
    // Move every parameter off its initial value so no slice sits at a
    // special point (zero biases, identical head scales).
    for v in model.params_mut().values.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    (0..pairs)
        .map(|i| {
            let x = uniform(&mut rng, 2, -1.0, 1.0);
            let target = uniform(&mut rng, 1, 0.0, 1.0);
            check_model(&format!("quinr end-to-end #{i}"), &model, &x, &target)
        })
        .collect()
}

pub fn check_siren(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SirenConfig::new(2, 3, 6, 2);
    cfg.init_seed = seed;
    let model = SirenModel::new(cfg).expect("valid config");
    let x = uniform(&mut rng, 2, -1.0, 1.0);
    let target = uniform(&mut rng, 3, 0.0, 1.0);
    check_model("siren end-to-end", &model, &x, &target)
}

/// Every check above, in a fixed order.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut out = vec![check_circuit(seed)];
    out.extend(check_linear_sine(seed));
    out.push(check_mse(seed));
    out.extend(check_quinr(seed, 20));
    out.push(check_siren(seed));
    out
}
