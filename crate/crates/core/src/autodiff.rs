//! Minimal vector-valued reverse-mode differentiation and the Adam optimizer.
//!
//! A [`Tape`] records each primitive as it is evaluated, together with a
//! closure that maps the adjoint of its output to adjoints of its inputs.
//! [`Tape::backward`] walks the records in reverse and deposits parameter
//! adjoints into a flat gradient buffer laid out like [`ParamStore`].

use std::fmt;
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op} needs a non-empty input")]
    Empty { op: &'static str },
    #[error("non-finite gradient in parameter slice `{slice}` at offset {offset}")]
    NonFiniteGradient { slice: String, offset: usize },
    #[error("unknown parameter slice `{0}`")]
    UnknownSlice(String),
}

/// How the sinusoidal input layer applies ω0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SineConvention {
    /// `sin(ω0·(W·x) + b)`
    #[default]
    Literal,
    /// `sin(ω0·(W·x + b))`, as in SIREN.
    Siren,
}

/// Output activations for the measurement head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    QRelu,
    Relu,
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::QRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.01 * x - x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.01 * x
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative; at `x == 0` the negative-branch slope is used.
    pub fn slope(self, x: f64) -> f64 {
        match self {
            Activation::QRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    -0.99
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.01
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Elementwise QReLU: identity for positive inputs, `0.01x − x` otherwise.
pub fn qrelu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| Activation::QRelu.apply(v)).collect()
}

/// `sin(ω0·W·x + b)` (or the SIREN form), with `W` stored row-major as
/// `b.len() × x.len()`.
pub fn linear_sine_forward(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    omega0: f64,
    convention: SineConvention,
) -> Result<Vec<f64>, AutodiffError> {
    Ok(pre_activation(w, b, x, omega0, convention)?
        .into_iter()
        .map(f64::sin)
        .collect())
}

fn check_linear(w: &[f64], b: &[f64], x: &[f64], op: &'static str) -> Result<(), AutodiffError> {
    if w.len() != b.len() * x.len() {
        return Err(AutodiffError::Dimension {
            op,
            expected: b.len() * x.len(),
            actual: w.len(),
        });
    }
    Ok(())
}

fn matvec(w: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

fn pre_activation(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    omega0: f64,
    convention: SineConvention,
) -> Result<Vec<f64>, AutodiffError> {
    check_linear(w, b, x, "linear_sine")?;
    let wx = matvec(w, x, b.len());
    Ok(wx
        .iter()
        .zip(b)
        .map(|(&z, &bias)| match convention {
            SineConvention::Literal => omega0 * z + bias,
            SineConvention::Siren => omega0 * (z + bias),
        })
        .collect())
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), AutodiffError> {
    if pred.is_empty() {
        return Err(AutodiffError::Empty { op: "mse_loss" });
    }
    if pred.len() != target.len() {
        return Err(AutodiffError::Dimension {
            op: "mse_loss",
            expected: pred.len(),
            actual: target.len(),
        });
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok((loss, grad))
}

/// Flat storage for every trainable value, partitioned into named slices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    slices: Vec<(String, Range<usize>)>,
}

impl ParamStore {
    /// Build from `(name, values)` pairs laid out back to back.
    pub fn from_slices<S: Into<String>>(parts: Vec<(S, Vec<f64>)>) -> Self {
        let mut values = Vec::new();
        let mut slices = Vec::with_capacity(parts.len());
        for (name, part) in parts {
            let start = values.len();
            values.extend(part);
            slices.push((name.into(), start..values.len()));
        }
        let grads = vec![0.0; values.len()];
        Self {
            values,
            grads,
            slices,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slices(&self) -> &[(String, Range<usize>)] {
        &self.slices
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.slices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.range(name).map(|r| &self.values[r])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.range(name).map(move |r| &mut self.values[r])
    }

    /// Name of the slice containing flat index `index`.
    pub fn slice_name_of(&self, index: usize) -> Option<&str> {
        self.slices
            .iter()
            .find(|(_, r)| r.contains(&index))
            .map(|(n, _)| n.as_str())
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Replace every value, keeping the layout. Lengths must match.
    pub fn set_values(&mut self, values: &[f64]) -> Result<(), AutodiffError> {
        if values.len() != self.values.len() {
            return Err(AutodiffError::Dimension {
                op: "set_values",
                expected: self.values.len(),
                actual: values.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

enum NodeKind {
    Constant,
    Param(Range<usize>),
    Op {
        inputs: Vec<usize>,
        backward: BackwardFn,
    },
}

struct Node {
    value: Vec<f64>,
    kind: NodeKind,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("len", &self.nodes.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, kind: NodeKind) -> Var {
        self.nodes.push(Node { value, kind });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, NodeKind::Constant)
    }

    /// Leaf bound to a named slice of `store`; its adjoint lands in the
    /// matching range of the gradient buffer passed to [`Tape::backward`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, AutodiffError> {
        let range = store
            .range(name)
            .ok_or_else(|| AutodiffError::UnknownSlice(name.to_string()))?;
        Ok(self.param_range(store, range))
    }

    pub fn param_range(&mut self, store: &ParamStore, range: Range<usize>) -> Var {
        self.push(store.values[range.clone()].to_vec(), NodeKind::Param(range))
    }

    /// Record an arbitrary differentiable op. `backward` receives the output
    /// adjoint and returns one adjoint vector per input, in input order.
    pub fn custom(&mut self, inputs: &[Var], value: Vec<f64>, backward: BackwardFn) -> Var {
        self.push(
            value,
            NodeKind::Op {
                inputs: inputs.iter().map(|v| v.0).collect(),
                backward,
            },
        )
    }

    pub fn linear_sine(
        &mut self,
        w: Var,
        b: Var,
        x: Var,
        omega0: f64,
        convention: SineConvention,
    ) -> Result<Var, AutodiffError> {
        let (wv, bv, xv) = (
            self.value(w).to_vec(),
            self.value(b).to_vec(),
            self.value(x).to_vec(),
        );
        let z = pre_activation(&wv, &bv, &xv, omega0, convention)?;
        let out = z.iter().map(|v| v.sin()).collect();
        let cos: Vec<f64> = z.iter().map(|v| v.cos()).collect();
        let (rows, cols) = (bv.len(), xv.len());
        Ok(self.custom(
            &[w, b, x],
            out,
            Box::new(move |up| {
                let dz: Vec<f64> = up.iter().zip(&cos).map(|(u, c)| u * c).collect();
                let mut dw = vec![0.0; rows * cols];
                let mut dx = vec![0.0; cols];
                let db = match convention {
                    SineConvention::Literal => dz.clone(),
                    SineConvention::Siren => dz.iter().map(|d| d * omega0).collect(),
                };
                for r in 0..rows {
                    let g = dz[r] * omega0;
                    for c in 0..cols {
                        dw[r * cols + c] = g * xv[c];
                        dx[c] += g * wv[r * cols + c];
                    }
                }
                vec![dw, db, dx]
            }),
        ))
    }

    /// `W·x + b`, `W` row-major `b.len() × x.len()`.
    pub fn linear(&mut self, w: Var, b: Var, x: Var) -> Result<Var, AutodiffError> {
        let (wv, bv, xv) = (
            self.value(w).to_vec(),
            self.value(b).to_vec(),
            self.value(x).to_vec(),
        );
        check_linear(&wv, &bv, &xv, "linear")?;
        let out = matvec(&wv, &xv, bv.len())
            .iter()
            .zip(&bv)
            .map(|(a, b)| a + b)
            .collect();
        let (rows, cols) = (bv.len(), xv.len());
        Ok(self.custom(
            &[w, b, x],
            out,
            Box::new(move |up| {
                let mut dw = vec![0.0; rows * cols];
                let mut dx = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        dw[r * cols + c] = up[r] * xv[c];
                        dx[c] += up[r] * wv[r * cols + c];
                    }
                }
                vec![dw, up.to_vec(), dx]
            }),
        ))
    }

    /// Elementwise `scale ⊙ x + bias`.
    pub fn affine(&mut self, x: Var, scale: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (xv, sv, bv) = (
            self.value(x).to_vec(),
            self.value(scale).to_vec(),
            self.value(bias).to_vec(),
        );
        for len in [sv.len(), bv.len()] {
            if len != xv.len() {
                return Err(AutodiffError::Dimension {
                    op: "affine",
                    expected: xv.len(),
                    actual: len,
                });
            }
        }
        let out = xv
            .iter()
            .zip(&sv)
            .zip(&bv)
            .map(|((x, s), b)| s * x + b)
            .collect();
        Ok(self.custom(
            &[x, scale, bias],
            out,
            Box::new(move |up| {
                let dx = up.iter().zip(&sv).map(|(u, s)| u * s).collect();
                let ds = up.iter().zip(&xv).map(|(u, x)| u * x).collect();
                vec![dx, ds, up.to_vec()]
            }),
        ))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let xv = self.value(x).to_vec();
        let out = xv.iter().map(|&v| act.apply(v)).collect();
        self.custom(
            &[x],
            out,
            Box::new(move |up| vec![up.iter().zip(&xv).map(|(u, &v)| u * act.slope(v)).collect()]),
        )
    }

    /// The last `n` entries of `x`.
    pub fn tail(&mut self, x: Var, n: usize) -> Result<Var, AutodiffError> {
        let len = self.value(x).len();
        if n > len {
            return Err(AutodiffError::Dimension {
                op: "tail",
                expected: len,
                actual: n,
            });
        }
        let out = self.value(x)[len - n..].to_vec();
        Ok(self.custom(
            &[x],
            out,
            Box::new(move |up| {
                let mut dx = vec![0.0; len];
                dx[len - n..].copy_from_slice(up);
                vec![dx]
            }),
        ))
    }

    /// Scalar MSE against a constant target.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var, AutodiffError> {
        let (loss, grad) = mse_loss(self.value(pred), target)?;
        Ok(self.custom(
            &[pred],
            vec![loss],
            Box::new(move |up| vec![grad.iter().map(|g| g * up[0]).collect()]),
        ))
    }

    /// Reverse sweep from the scalar `output`, accumulating parameter
    /// adjoints into `grads` (same layout as the [`ParamStore`] the leaves
    /// came from).
    pub fn backward(&self, output: Var, grads: &mut [f64]) -> Result<(), AutodiffError> {
        if self.nodes[output.0].value.len() != 1 {
            return Err(AutodiffError::Dimension {
                op: "backward",
                expected: 1,
                actual: self.nodes[output.0].value.len(),
            });
        }
        let mut adjoints: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            let Some(adj) = adjoints[idx].take() else {
                continue;
            };
            match &self.nodes[idx].kind {
                NodeKind::Constant => {}
                NodeKind::Param(range) => {
                    for (g, a) in grads[range.clone()].iter_mut().zip(&adj) {
                        *g += a;
                    }
                }
                NodeKind::Op { inputs, backward } => {
                    for (&input, contrib) in inputs.iter().zip(backward(&adj)) {
                        match &mut adjoints[input] {
                            Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                            slot @ None => *slot = Some(contrib),
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Adam with bias correction. Moment buffers live here, not in the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update from `params.grads`, which are zeroed afterwards.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<(), AutodiffError> {
        if let Some(i) = params.grads.iter().position(|g| !g.is_finite()) {
            let slice = params.slice_name_of(i).unwrap_or("?").to_string();
            let start = params.range(&slice).map_or(0, |r| r.start);
            return Err(AutodiffError::NonFiniteGradient {
                slice,
                offset: i - start,
            });
        }
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = params.grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        params.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn linear_sine_trivial() {
        let h = linear_sine_forward(
            &[0.0; 6],
            &[0.0; 3],
            &[0.4, -0.2],
            30.0,
            SineConvention::Literal,
        )
        .unwrap();
        assert_eq!(h, vec![0.0; 3]);
        let h = linear_sine_forward(&[1.0], &[FRAC_PI_2], &[0.0], 30.0, SineConvention::Literal)
            .unwrap();
        assert!((h[0] - 1.0).abs() < 1e-15);
        assert!(linear_sine_forward(
            &[1.0; 5],
            &[0.0; 3],
            &[0.0; 2],
            30.0,
            SineConvention::Literal
        )
        .is_err());
    }

    #[test]
    fn sine_conventions_differ_only_in_bias() {
        let w = [0.1, -0.2];
        let x = [0.5, 0.25];
        let lit = linear_sine_forward(&w, &[0.3], &x, 30.0, SineConvention::Literal).unwrap();
        let sir = linear_sine_forward(&w, &[0.01], &x, 30.0, SineConvention::Siren).unwrap();
        assert!((lit[0] - sir[0]).abs() < 1e-12);
    }

    #[test]
    fn qrelu_values() {
        assert_eq!(qrelu(&[2.0]), vec![2.0]);
        assert_eq!(qrelu(&[0.0]), vec![0.0]);
        assert!((qrelu(&[-1.0])[0] - 0.99).abs() < 1e-15);
        assert_eq!(Activation::QRelu.slope(0.0), -0.99);
        assert_eq!(Activation::LeakyRelu.apply(-1.0), -0.01);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
    }

    #[test]
    fn mse_values_and_errors() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        let (l, g) = mse_loss(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![1.0, 0.0]);
        assert!(matches!(
            mse_loss(&[], &[]),
            Err(AutodiffError::Empty { .. })
        ));
        assert!(matches!(
            mse_loss(&[1.0], &[1.0, 2.0]),
            Err(AutodiffError::Dimension { .. })
        ));
    }

    #[test]
    fn param_store_layout() {
        let store = ParamStore::from_slices(vec![("a", vec![1.0, 2.0]), ("b", vec![3.0])]);
        assert_eq!(store.range("a"), Some(0..2));
        assert_eq!(store.range("b"), Some(2..3));
        assert_eq!(store.slice_name_of(2), Some("b"));
        assert_eq!(store.grads.len(), store.values.len());
        assert!(store.range("c").is_none());
    }

    #[test]
    fn tape_accumulates_shared_leaf() {
        // loss = mean((s*x + s*x)^2) with one element, s leaf used twice.
        let store = ParamStore::from_slices(vec![("s", vec![0.5])]);
        let mut tape = Tape::new();
        let s = tape.param(&store, "s").unwrap();
        let x = tape.constant(vec![2.0]);
        let zero = tape.constant(vec![0.0]);
        let a = tape.affine(x, s, zero).unwrap();
        let b = tape.affine(a, s, a).unwrap(); // s*a + a = s^2 x + s x
        let loss = tape.mse(b, &[0.0]).unwrap();
        let mut grads = vec![0.0];
        tape.backward(loss, &mut grads).unwrap();
        // f(s) = (2s^2 + 2s)^2, f'(s) = 2(2s^2+2s)(4s+2) = 2*1.5*4 = 12
        assert!((grads[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let v = tape.constant(vec![1.0, 2.0]);
        assert!(tape.backward(v, &mut []).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut store = ParamStore::from_slices(vec![("x", vec![1.5, -2.0])]);
        let mut adam = Adam::new(0.1);
        for _ in 0..10 {
            adam.step(&mut store).unwrap();
        }
        assert_eq!(store.values, vec![1.5, -2.0]);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut store = ParamStore::from_slices(vec![("x", vec![1.0])]);
        store.grads[0] = 1.0;
        let mut adam = Adam::new(0.1);
        adam.step(&mut store).unwrap();
        assert!((store.values[0] - 0.9).abs() < 1e-7);
        assert_eq!(store.grads[0], 0.0);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::from_slices(vec![("x", vec![3.0])]);
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            store.grads[0] = 2.0 * store.values[0];
            adam.step(&mut store).unwrap();
        }
        assert!(store.values[0].abs() < 1e-3, "{}", store.values[0]);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut store = ParamStore::from_slices(vec![("W", vec![0.0, 0.0]), ("b", vec![0.0])]);
        store.grads[2] = f64::NAN;
        let err = Adam::new(0.1).step(&mut store).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::NonFiniteGradient {
                slice: "b".into(),
                offset: 0
            }
        );
    }
}
