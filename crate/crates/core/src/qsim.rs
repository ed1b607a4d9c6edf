//! Statevector simulation for the RX / RZ / CRZ gate set.
//!
//! Conventions used throughout the crate:
//!
//! * `RX(θ) = [[cos θ/2, -i sin θ/2], [-i sin θ/2, cos θ/2]]`
//! * `RZ(θ) = diag(e^{-iθ/2}, e^{+iθ/2})`
//! * `CRZ(θ) = diag(1, 1, e^{-iθ/2}, e^{+iθ/2})` in (control, target) order
//! * qubit 0 is the most significant bit of a basis-state index, so on three
//!   qubits `|q0 q1 q2⟩ = |1 0 0⟩` is index 4.
//!
//! Measurement is exact: [`Statevector::probabilities`] returns `|amp_k|²`
//! for every basis state, no shot sampling.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use thiserror::Error;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 20;
/// Largest register [`dense_matrix_oracle`] accepts.
pub const MAX_ORACLE_QUBITS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit count {n} outside supported range 1..={max}")]
    Capacity { n: usize, max: usize },
    #[error("gate references qubit {qubit} but the register has {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("{kind:?} gate has invalid control qubit {control:?} (target {target})")]
    InvalidControl {
        kind: GateKind,
        target: usize,
        control: Option<usize>,
    },
    #[error("gate references angle index {index} but the program has {n_angles} angles")]
    AngleIndexOutOfRange { index: usize, n_angles: usize },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    Rz,
    Crz,
}

/// Where a gate reads its rotation angle from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Literal(f64),
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: AngleSource,
}

impl GateOp {
    pub fn rx(target: usize, angle: AngleSource) -> Self {
        Self {
            kind: GateKind::Rx,
            target,
            control: None,
            angle,
        }
    }

    pub fn rz(target: usize, angle: AngleSource) -> Self {
        Self {
            kind: GateKind::Rz,
            target,
            control: None,
            angle,
        }
    }

    pub fn crz(control: usize, target: usize, angle: AngleSource) -> Self {
        Self {
            kind: GateKind::Crz,
            target,
            control: Some(control),
            angle,
        }
    }

    /// Shift an indexed angle by `offset`; literal angles are untouched.
    pub fn offset_angle(mut self, offset: usize) -> Self {
        if let AngleSource::Index(i) = self.angle {
            self.angle = AngleSource::Index(i + offset);
        }
        self
    }

    pub fn validate(&self, n_qubits: usize) -> Result<(), SimError> {
        if self.target >= n_qubits {
            return Err(SimError::QubitOutOfRange {
                qubit: self.target,
                n_qubits,
            });
        }
        match (self.kind, self.control) {
            (GateKind::Crz, Some(c)) if c != self.target => {
                if c >= n_qubits {
                    return Err(SimError::QubitOutOfRange { qubit: c, n_qubits });
                }
                Ok(())
            }
            (GateKind::Rx | GateKind::Rz, None) => Ok(()),
            _ => Err(SimError::InvalidControl {
                kind: self.kind,
                target: self.target,
                control: self.control,
            }),
        }
    }

    fn resolve(&self, angles: &[f64]) -> f64 {
        match self.angle {
            AngleSource::Literal(a) => a,
            AngleSource::Index(i) => angles[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// The all-zeros basis state `|0…0⟩`.
    pub fn new(n_qubits: usize) -> Result<Self, SimError> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(SimError::Capacity {
                n: n_qubits,
                max: MAX_QUBITS,
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Apply `op` with rotation angle `angle` (radians). Any angle source on
    /// `op` is ignored.
    pub fn apply_gate(&mut self, op: &GateOp, angle: f64) -> Result<(), SimError> {
        op.validate(self.n_qubits)?;
        self.apply_unchecked(op, angle);
        Ok(())
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn apply_unchecked(&mut self, op: &GateOp, angle: f64) {
        let t = self.mask(op.target);
        let (s, c) = (angle / 2.0).sin_cos();
        match op.kind {
            GateKind::Rx => {
                let mis = Complex64::new(0.0, -s);
                for i in 0..self.amps.len() {
                    if i & t == 0 {
                        let a0 = self.amps[i];
                        let a1 = self.amps[i | t];
                        self.amps[i] = a0 * c + a1 * mis;
                        self.amps[i | t] = a0 * mis + a1 * c;
                    }
                }
            }
            GateKind::Rz => {
                let (lo, hi) = (Complex64::new(c, -s), Complex64::new(c, s));
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & t == 0 { lo } else { hi };
                }
            }
            GateKind::Crz => {
                let ctl = self.mask(op.control.expect("validated CRZ has a control"));
                let (lo, hi) = (Complex64::new(c, -s), Complex64::new(c, s));
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & ctl != 0 {
                        *a *= if i & t == 0 { lo } else { hi };
                    }
                }
            }
        }
    }

    /// Replace the state by `-i/2 · G · state`, where `G` is the generator of
    /// `op` (`U(θ) = exp(-iθG/2)`), i.e. `dU/dθ · U†` applied to the state.
    fn apply_generator(&mut self, op: &GateOp) {
        let t = self.mask(op.target);
        let half_i = Complex64::new(0.0, -0.5);
        match op.kind {
            GateKind::Rx => {
                for i in 0..self.amps.len() {
                    if i & t == 0 {
                        let a0 = self.amps[i];
                        self.amps[i] = self.amps[i | t] * half_i;
                        self.amps[i | t] = a0 * half_i;
                    }
                }
            }
            GateKind::Rz => {
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & t == 0 { half_i } else { -half_i };
                }
            }
            GateKind::Crz => {
                let ctl = self.mask(op.control.expect("validated CRZ has a control"));
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & ctl == 0 {
                        Complex64::new(0.0, 0.0)
                    } else if i & t == 0 {
                        half_i
                    } else {
                        -half_i
                    };
                }
            }
        }
    }

    fn inner(&self, other: &Statevector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// A fixed gate sequence whose angles are bound at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitProgram {
    n_qubits: usize,
    ops: Vec<GateOp>,
    n_angles: usize,
}

impl CircuitProgram {
    pub fn new(n_qubits: usize, ops: Vec<GateOp>, n_angles: usize) -> Result<Self, SimError> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(SimError::Capacity {
                n: n_qubits,
                max: MAX_QUBITS,
            });
        }
        for op in &ops {
            op.validate(n_qubits)?;
            if let AngleSource::Index(index) = op.angle {
                if index >= n_angles {
                    return Err(SimError::AngleIndexOutOfRange { index, n_angles });
                }
            }
        }
        Ok(Self {
            n_qubits,
            ops,
            n_angles,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    fn check_angles(&self, angles: &[f64]) -> Result<(), SimError> {
        if angles.len() != self.n_angles {
            return Err(SimError::LengthMismatch {
                expected: self.n_angles,
                actual: angles.len(),
            });
        }
        Ok(())
    }

    /// Execute the program on `|0…0⟩`.
    pub fn run(&self, angles: &[f64]) -> Result<Statevector, SimError> {
        self.check_angles(angles)?;
        Ok(self.run_with(|_, op| op.resolve(angles)))
    }

    fn run_with(&self, angle_of: impl Fn(usize, &GateOp) -> f64) -> Statevector {
        let mut state = Statevector::new(self.n_qubits).expect("qubit count validated");
        for (k, op) in self.ops.iter().enumerate() {
            state.apply_unchecked(op, angle_of(k, op));
        }
        state
    }

    /// Gradient of `Σ_k upstream[k] · p_k` with respect to every indexed
    /// angle, by a reverse (adjoint) sweep over the gate list.
    pub fn gradient(&self, angles: &[f64], upstream: &[f64]) -> Result<Vec<f64>, SimError> {
        self.gradient_with(angles, upstream, GradientMethod::Adjoint)
    }

    pub fn gradient_with(
        &self,
        angles: &[f64],
        upstream: &[f64],
        method: GradientMethod,
    ) -> Result<Vec<f64>, SimError> {
        self.check_angles(angles)?;
        let dim = 1usize << self.n_qubits;
        if upstream.len() != dim {
            return Err(SimError::LengthMismatch {
                expected: dim,
                actual: upstream.len(),
            });
        }
        Ok(match method {
            GradientMethod::Adjoint => self.adjoint(angles, upstream),
            GradientMethod::ParameterShift => self.parameter_shift(angles, upstream),
        })
    }

    fn adjoint(&self, angles: &[f64], upstream: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_angles];
        if upstream.iter().all(|&g| g == 0.0) {
            return grad;
        }
        let mut phi = self.run_with(|_, op| op.resolve(angles));
        let mut lambda = phi.clone();
        for (a, &g) in lambda.amps.iter_mut().zip(upstream) {
            *a *= g;
        }
        let mut mu = phi.clone();
        for op in self.ops.iter().rev() {
            let theta = op.resolve(angles);
            if let AngleSource::Index(j) = op.angle {
                mu.amps.copy_from_slice(&phi.amps);
                mu.apply_generator(op);
                grad[j] += 2.0 * lambda.inner(&mu).re;
            }
            phi.apply_unchecked(op, -theta);
            lambda.apply_unchecked(op, -theta);
        }
        grad
    }

    fn parameter_shift(&self, angles: &[f64], upstream: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_angles];
        let objective = |k: usize, shift: f64| -> f64 {
            let state =
                self.run_with(|i, op| op.resolve(angles) + if i == k { shift } else { 0.0 });
            state
                .amps
                .iter()
                .zip(upstream)
                .map(|(a, g)| a.norm_sqr() * g)
                .sum()
        };
        for (k, op) in self.ops.iter().enumerate() {
            let AngleSource::Index(j) = op.angle else {
                continue;
            };
            grad[j] += match op.kind {
                // Generator spectrum {±1/2}: two-term rule is exact.
                GateKind::Rx | GateKind::Rz => {
                    (objective(k, FRAC_PI_2) - objective(k, -FRAC_PI_2)) / 2.0
                }
                // Generator spectrum {0, ±1/2}: four-term rule.
                GateKind::Crz => {
                    let sqrt2 = std::f64::consts::SQRT_2;
                    let c_plus = (sqrt2 + 1.0) / (4.0 * sqrt2);
                    let c_minus = (sqrt2 - 1.0) / (4.0 * sqrt2);
                    let three = 3.0 * FRAC_PI_2;
                    c_plus * (objective(k, FRAC_PI_2) - objective(k, -FRAC_PI_2))
                        - c_minus * (objective(k, three) - objective(k, -three))
                }
            };
        }
        grad
    }
}

/// Which exact differentiation rule [`CircuitProgram::gradient_with`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMethod {
    #[default]
    Adjoint,
    ParameterShift,
}

/// Free-function form of [`CircuitProgram::run`].
pub fn run_circuit(prog: &CircuitProgram, angles: &[f64]) -> Result<Statevector, SimError> {
    prog.run(angles)
}

/// Free-function form of [`CircuitProgram::gradient`].
pub fn circuit_gradient(
    prog: &CircuitProgram,
    angles: &[f64],
    upstream: &[f64],
) -> Result<Vec<f64>, SimError> {
    prog.gradient(angles, upstream)
}

/// Row-major dense complex matrix, only as large as the oracle needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, data }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let n = self.dim;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        DenseMatrix { dim: n, data }
    }

    pub fn kron(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let (n, m) = (self.dim, rhs.dim);
        let dim = n * m;
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                for k in 0..m {
                    for l in 0..m {
                        data[(i * m + k) * dim + j * m + l] = a * rhs.data[k * m + l];
                    }
                }
            }
        }
        DenseMatrix { dim, data }
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// First column, i.e. the image of `|0…0⟩`.
    pub fn first_column(&self) -> Vec<Complex64> {
        (0..self.dim).map(|r| self.get(r, 0)).collect()
    }

    fn from_2x2(m: [[Complex64; 2]; 2]) -> Self {
        Self {
            dim: 2,
            data: vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        }
    }
}

fn single_qubit_matrix(kind: GateKind, theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    let zero = Complex64::new(0.0, 0.0);
    match kind {
        GateKind::Rx => [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ],
        GateKind::Rz | GateKind::Crz => {
            [[Complex64::new(c, -s), zero], [zero, Complex64::new(c, s)]]
        }
    }
}

/// Kronecker product over all qubits, qubit 0 leftmost, with `factor(q)`
/// supplying each 2×2 factor.
fn kron_all(n_qubits: usize, factor: impl Fn(usize) -> DenseMatrix) -> DenseMatrix {
    (1..n_qubits).fold(factor(0), |acc, q| acc.kron(&factor(q)))
}

/// Full unitary of `prog` built from explicit Kronecker products. Test-only
/// reference for [`CircuitProgram::run`].
pub fn dense_matrix_oracle(prog: &CircuitProgram, angles: &[f64]) -> Result<DenseMatrix, SimError> {
    let n = prog.n_qubits;
    if n > MAX_ORACLE_QUBITS {
        return Err(SimError::Capacity {
            n,
            max: MAX_ORACLE_QUBITS,
        });
    }
    prog.check_angles(angles)?;
    let id2 = DenseMatrix::identity(2);
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let proj0 = DenseMatrix::from_2x2([[one, zero], [zero, zero]]);
    let proj1 = DenseMatrix::from_2x2([[zero, zero], [zero, one]]);

    let mut total = DenseMatrix::identity(1 << n);
    for op in &prog.ops {
        let gate = DenseMatrix::from_2x2(single_qubit_matrix(op.kind, op.resolve(angles)));
        let full = match op.kind {
            GateKind::Rx | GateKind::Rz => kron_all(n, |q| {
                if q == op.target {
                    gate.clone()
                } else {
                    id2.clone()
                }
            }),
            GateKind::Crz => {
                let c = op.control.expect("validated CRZ has a control");
                let idle = kron_all(n, |q| if q == c { proj0.clone() } else { id2.clone() });
                let active = kron_all(n, |q| {
                    if q == c {
                        proj1.clone()
                    } else if q == op.target {
                        gate.clone()
                    } else {
                        id2.clone()
                    }
                });
                idle.add(&active)
            }
        };
        total = full.matmul(&total);
    }
    Ok(total)
}
