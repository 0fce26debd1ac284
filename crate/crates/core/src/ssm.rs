//! Generalized linear state-space layers.
//!
//! A layer maps inputs `x_1..x_n` (each of dimension `k`) to states
//! `h_i = A_i h_{i-1} + B_i x_i` (dimension `d`, `h_0 = 0`) and outputs
//! `y_i = C_i h_i + D_i x_i`. The per-step matrices may be constant or
//! derived from `x_i`, depending on the transition variant. Three
//! evaluation strategies are provided and must agree up to floating-point
//! tolerance: the step-by-step recurrence, the unrolled convolutional
//! summation with cumulative transition products, and an associative
//! prefix scan over `(matrix, vector)` pairs.
//!
//! Cumulative products unroll from greatest to least index:
//! the product over `k in (j, i]` is `A_i A_{i-1} ... A_{j+1}`.

use crate::mat::Mat;
use thiserror::Error;

pub mod textfmt;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SsmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("diagonal entry {0} of the fixed transition is zero")]
    ZeroDiagonalEntry(usize),
    #[error("W * W_inv deviates from the identity by {0}")]
    NotInverse(f64),
    #[error("layer dimensions do not chain: layer {index} expects input {expected}, got {got}")]
    BadChain { index: usize, expected: usize, got: usize },
}

/// Affine map from an input vector to a vector: `weight * x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineVecMap {
    pub weight: Mat, // out x in
    pub bias: Vec<f64>,
}

impl AffineVecMap {
    pub fn new(weight: Mat, bias: Vec<f64>) -> Result<Self, SsmError> {
        if weight.rows() != bias.len() {
            return Err(SsmError::ShapeMismatch("affine vec map weight/bias".into()));
        }
        Ok(AffineVecMap { weight, bias })
    }

    pub fn output_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.weight.matvec(x);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        out
    }
}

/// Affine map from an input vector to an `rows x cols` matrix: the weight
/// has one `rows x cols` block per input coordinate (flattened row-major),
/// plus a constant bias matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatMap {
    pub rows: usize,
    pub cols: usize,
    pub weight: Mat, // (rows*cols) x in
    pub bias: Mat,   // rows x cols
}

impl AffineMatMap {
    pub fn new(rows: usize, cols: usize, weight: Mat, bias: Mat) -> Result<Self, SsmError> {
        if weight.rows() != rows * cols || bias.rows() != rows || bias.cols() != cols {
            return Err(SsmError::ShapeMismatch("affine mat map".into()));
        }
        Ok(AffineMatMap { rows, cols, weight, bias })
    }

    /// Constant map ignoring the input.
    pub fn constant(bias: Mat, input_dim: usize) -> Self {
        let rows = bias.rows();
        let cols = bias.cols();
        AffineMatMap { rows, cols, weight: Mat::zeros(rows * cols, input_dim), bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Mat {
        let flat = self.weight.matvec(x);
        let mut out = self.bias.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(r, c)] += flat[r * self.cols + c];
            }
        }
        out
    }
}

/// How the transition matrix depends on the step input.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionSpec {
    /// Fixed transition, the non-gated case.
    Constant { a_bar: Mat },
    /// Diagonal transition produced by the selective discretization:
    /// `a_bar_i[j] = exp(delta_i[j] * a[j])` with
    /// `delta_i = softplus(delta_bias + pi_delta(x_i))`.
    DiagonalSelective { a_diag: Vec<f64>, delta_bias: Vec<f64>, pi_delta: AffineVecMap },
    /// Simultaneously diagonalizable family `W diag(pi_a(x_i)) W^-1`.
    Diagonalizable { w: Mat, w_inv: Mat, pi_a: AffineVecMap },
    /// Fully input-dependent dense transition `pi_a(x_i)`.
    InputDependentFull { pi_a: AffineMatMap },
}

/// How `B_i` is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InputMapSpec {
    Constant { b_bar: Mat },
    Affine { pi_b: AffineMatMap },
    /// `B_i = pi_b(x_i)` followed by the selective discretization row
    /// scaling; only meaningful with a `DiagonalSelective` transition.
    S6Discretized { pi_b: AffineMatMap },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutputMapSpec {
    Constant { c: Mat },
    Affine { pi_c: AffineMatMap },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PassthroughSpec {
    Identity,
    Constant { d: Mat },
}

/// Full parameterization of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmLayerSpec {
    input_dim: usize,
    state_dim: usize,
    pub transition: TransitionSpec,
    pub input_map: InputMapSpec,
    pub output_map: OutputMapSpec,
    pub passthrough: PassthroughSpec,
}

/// Selective-layer parameter bundle: fixed diagonal `a`, per-channel step
/// bias, and input projections for the step size, input map, and output
/// map. The passthrough is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct S6Params {
    pub a_diag: Vec<f64>,
    pub delta_bias: Vec<f64>,
    pub pi_delta: AffineVecMap,
    pub pi_b: AffineMatMap,
    pub pi_c: AffineMatMap,
}

impl S6Params {
    pub fn into_layer_spec(self) -> Result<SsmLayerSpec, SsmError> {
        let k = self.pi_delta.input_dim();
        let d = self.a_diag.len();
        SsmLayerSpec::new(
            k,
            d,
            TransitionSpec::DiagonalSelective {
                a_diag: self.a_diag,
                delta_bias: self.delta_bias,
                pi_delta: self.pi_delta,
            },
            InputMapSpec::S6Discretized { pi_b: self.pi_b },
            OutputMapSpec::Affine { pi_c: self.pi_c },
            PassthroughSpec::Identity,
        )
    }
}

/// Tolerance for the `W * W_inv = I` validation.
const INVERSE_TOL: f64 = 1e-10;

impl SsmLayerSpec {
    pub fn new(
        input_dim: usize,
        state_dim: usize,
        transition: TransitionSpec,
        input_map: InputMapSpec,
        output_map: OutputMapSpec,
        passthrough: PassthroughSpec,
    ) -> Result<Self, SsmError> {
        let (k, d) = (input_dim, state_dim);
        match &transition {
            TransitionSpec::Constant { a_bar } => {
                if a_bar.rows() != d || a_bar.cols() != d {
                    return Err(SsmError::ShapeMismatch("constant transition".into()));
                }
            }
            TransitionSpec::DiagonalSelective { a_diag, delta_bias, pi_delta } => {
                if a_diag.len() != d || delta_bias.len() != d {
                    return Err(SsmError::ShapeMismatch("selective transition".into()));
                }
                if pi_delta.output_dim() != d || pi_delta.input_dim() != k {
                    return Err(SsmError::ShapeMismatch("pi_delta".into()));
                }
                if let Some(i) = a_diag.iter().position(|&a| a == 0.0) {
                    return Err(SsmError::ZeroDiagonalEntry(i));
                }
            }
            TransitionSpec::Diagonalizable { w, w_inv, pi_a } => {
                if w.rows() != d || w.cols() != d || w_inv.rows() != d || w_inv.cols() != d {
                    return Err(SsmError::ShapeMismatch("diagonalizable basis".into()));
                }
                if pi_a.output_dim() != d || pi_a.input_dim() != k {
                    return Err(SsmError::ShapeMismatch("pi_a".into()));
                }
                let deviation = w.matmul(w_inv).max_abs_diff(&Mat::identity(d));
                if deviation > INVERSE_TOL {
                    return Err(SsmError::NotInverse(deviation));
                }
            }
            TransitionSpec::InputDependentFull { pi_a } => {
                if pi_a.rows != d || pi_a.cols != d || pi_a.input_dim() != k {
                    return Err(SsmError::ShapeMismatch("pi_a matrix map".into()));
                }
            }
        }
        match &input_map {
            InputMapSpec::Constant { b_bar } => {
                if b_bar.rows() != d || b_bar.cols() != k {
                    return Err(SsmError::ShapeMismatch("input map".into()));
                }
            }
            InputMapSpec::Affine { pi_b } | InputMapSpec::S6Discretized { pi_b } => {
                if pi_b.rows != d || pi_b.cols != k || pi_b.input_dim() != k {
                    return Err(SsmError::ShapeMismatch("pi_b".into()));
                }
            }
        }
        match &output_map {
            OutputMapSpec::Constant { c } => {
                if c.rows() != k || c.cols() != d {
                    return Err(SsmError::ShapeMismatch("output map".into()));
                }
            }
            OutputMapSpec::Affine { pi_c } => {
                if pi_c.rows != k || pi_c.cols != d || pi_c.input_dim() != k {
                    return Err(SsmError::ShapeMismatch("pi_c".into()));
                }
            }
        }
        if let PassthroughSpec::Constant { d: dm } = &passthrough {
            if dm.rows() != k || dm.cols() != k {
                return Err(SsmError::ShapeMismatch("passthrough".into()));
            }
        }
        Ok(SsmLayerSpec { input_dim, state_dim, transition, input_map, output_map, passthrough })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
}

/// Concrete per-step matrices.
#[derive(Debug, Clone)]
pub struct StepMatrices {
    pub a_bar: Mat,
    pub b_bar: Mat,
    pub c: Mat,
    pub d: Mat,
}

/// Per-channel selective discretization: given the fixed diagonal `a`, the
/// step sizes `delta`, and the raw input matrix `b`, returns
/// `a_bar[j] = exp(delta[j] a[j])` and `b_bar` with row `j` of `b` scaled
/// by `(delta[j] a[j])^-1 (a_bar[j] - 1) delta[j]`.
pub fn discretize_s6(a_diag: &[f64], delta: &[f64], b: &Mat) -> (Vec<f64>, Mat) {
    let d = a_diag.len();
    assert_eq!(delta.len(), d);
    assert_eq!(b.rows(), d);
    let mut a_bar = vec![0.0; d];
    let mut b_bar = b.clone();
    for j in 0..d {
        let da = delta[j] * a_diag[j];
        a_bar[j] = da.exp();
        let scale = (1.0 / da) * (a_bar[j] - 1.0) * delta[j];
        for c in 0..b.cols() {
            b_bar[(j, c)] *= scale;
        }
    }
    (a_bar, b_bar)
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn selective_delta(delta_bias: &[f64], pi_delta: &AffineVecMap, x: &[f64]) -> Vec<f64> {
    pi_delta
        .apply(x)
        .iter()
        .zip(delta_bias)
        .map(|(p, b)| softplus(b + p))
        .collect()
}

/// The transition matrix alone, as a dense matrix.
fn transition_at(spec: &SsmLayerSpec, x: &[f64]) -> Mat {
    match &spec.transition {
        TransitionSpec::Constant { a_bar } => a_bar.clone(),
        TransitionSpec::DiagonalSelective { a_diag, delta_bias, pi_delta } => {
            let delta = selective_delta(delta_bias, pi_delta, x);
            let diag: Vec<f64> =
                a_diag.iter().zip(&delta).map(|(a, dl)| (dl * a).exp()).collect();
            Mat::diag(&diag)
        }
        TransitionSpec::Diagonalizable { w, w_inv, pi_a } => {
            let diag = pi_a.apply(x);
            w.matmul(&Mat::diag(&diag)).matmul(w_inv)
        }
        TransitionSpec::InputDependentFull { pi_a } => pi_a.apply(x),
    }
}

fn input_matrix_at(spec: &SsmLayerSpec, x: &[f64]) -> Mat {
    match (&spec.input_map, &spec.transition) {
        (InputMapSpec::Constant { b_bar }, _) => b_bar.clone(),
        (InputMapSpec::Affine { pi_b }, _) => pi_b.apply(x),
        (
            InputMapSpec::S6Discretized { pi_b },
            TransitionSpec::DiagonalSelective { a_diag, delta_bias, pi_delta },
        ) => {
            let delta = selective_delta(delta_bias, pi_delta, x);
            let (_, b_bar) = discretize_s6(a_diag, &delta, &pi_b.apply(x));
            b_bar
        }
        (InputMapSpec::S6Discretized { pi_b }, _) => {
            // Discretized input map without a selective transition falls
            // back to the raw projection.
            pi_b.apply(x)
        }
    }
}

/// Materializes the concrete `(A_i, B_i, C_i, D_i)` for one step input.
pub fn materialize_step(spec: &SsmLayerSpec, x: &[f64]) -> Result<StepMatrices, SsmError> {
    if x.len() != spec.input_dim {
        return Err(SsmError::ShapeMismatch(format!(
            "step input has dim {}, spec expects {}",
            x.len(),
            spec.input_dim
        )));
    }
    let a_bar = transition_at(spec, x);
    let b_bar = input_matrix_at(spec, x);
    let c = match &spec.output_map {
        OutputMapSpec::Constant { c } => c.clone(),
        OutputMapSpec::Affine { pi_c } => pi_c.apply(x),
    };
    let d = match &spec.passthrough {
        PassthroughSpec::Identity => Mat::identity(spec.input_dim),
        PassthroughSpec::Constant { d } => d.clone(),
    };
    Ok(StepMatrices { a_bar, b_bar, c, d })
}

/// States and outputs for a full sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

fn check_inputs(spec: &SsmLayerSpec, inputs: &[Vec<f64>]) -> Result<(), SsmError> {
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != spec.input_dim {
            return Err(SsmError::ShapeMismatch(format!(
                "input {i} has dim {}, spec expects {}",
                x.len(),
                spec.input_dim
            )));
        }
    }
    Ok(())
}

fn outputs_from_states(
    spec: &SsmLayerSpec,
    inputs: &[Vec<f64>],
    states: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, SsmError> {
    let mut outputs = Vec::with_capacity(inputs.len());
    for (x, h) in inputs.iter().zip(states) {
        let step = materialize_step(spec, x)?;
        let mut y = step.c.matvec(h);
        let dx = step.d.matvec(x);
        for (a, b) in y.iter_mut().zip(&dx) {
            *a += b;
        }
        outputs.push(y);
    }
    Ok(outputs)
}

/// Sequential left-to-right recurrence from `h_0 = 0`.
pub fn recurrent_forward(spec: &SsmLayerSpec, inputs: &[Vec<f64>]) -> Result<LayerTrace, SsmError> {
    check_inputs(spec, inputs)?;
    let mut states = Vec::with_capacity(inputs.len());
    let mut h = vec![0.0; spec.state_dim];
    for x in inputs {
        let step = materialize_step(spec, x)?;
        let mut next = step.a_bar.matvec(&h);
        let bx = step.b_bar.matvec(x);
        for (a, b) in next.iter_mut().zip(&bx) {
            *a += b;
        }
        h = next;
        states.push(h.clone());
    }
    let outputs = outputs_from_states(spec, inputs, &states)?;
    Ok(LayerTrace { states, outputs })
}

/// Matrix power by repeated squaring.
pub fn mat_power(m: &Mat, mut z: usize) -> Mat {
    let mut result = Mat::identity(m.rows());
    let mut base = m.clone();
    while z > 0 {
        if z & 1 == 1 {
            result = result.matmul(&base);
        }
        z >>= 1;
        if z > 0 {
            base = base.matmul(&base);
        }
    }
    result
}

/// Direct summation evaluation: `h_i = sum_j P_{i,j} B_j x_j` where
/// `P_{i,j}` is the cumulative transition product over `(j, i]`. Constant
/// transitions use repeated-squaring matrix powers; diagonal and
/// diagonalizable transitions use elementwise cumulative scalar products
/// (conjugated by the fixed basis in the diagonalizable case); the dense
/// input-dependent case accumulates running matrix products.
pub fn convolutional_forward(
    spec: &SsmLayerSpec,
    inputs: &[Vec<f64>],
) -> Result<LayerTrace, SsmError> {
    check_inputs(spec, inputs)?;
    let n = inputs.len();
    let d = spec.state_dim;
    let bx: Vec<Vec<f64>> =
        inputs.iter().map(|x| input_matrix_at(spec, x).matvec(x)).collect();
    let mut states = vec![vec![0.0; d]; n];

    match &spec.transition {
        TransitionSpec::Constant { a_bar } => {
            for i in 0..n {
                let mut h = vec![0.0; d];
                for j in 0..=i {
                    let pw = mat_power(a_bar, i - j);
                    let term = pw.matvec(&bx[j]);
                    for (a, b) in h.iter_mut().zip(&term) {
                        *a += b;
                    }
                }
                states[i] = h;
            }
        }
        TransitionSpec::DiagonalSelective { a_diag, delta_bias, pi_delta } => {
            let diags: Vec<Vec<f64>> = inputs
                .iter()
                .map(|x| {
                    let delta = selective_delta(delta_bias, pi_delta, x);
                    a_diag.iter().zip(&delta).map(|(a, dl)| (dl * a).exp()).collect()
                })
                .collect();
            for i in 0..n {
                let mut h = vec![0.0; d];
                // Walk j from i down, extending the cumulative product one
                // factor at a time.
                let mut cum = vec![1.0; d];
                for j in (0..=i).rev() {
                    for c in 0..d {
                        h[c] += cum[c] * bx[j][c];
                    }
                    if j > 0 {
                        for c in 0..d {
                            cum[c] *= diags[j][c];
                        }
                    }
                }
                states[i] = h;
            }
        }
        TransitionSpec::Diagonalizable { w, w_inv, pi_a } => {
            let diags: Vec<Vec<f64>> = inputs.iter().map(|x| pi_a.apply(x)).collect();
            for i in 0..n {
                let mut h = vec![0.0; d];
                let mut cum = vec![1.0; d];
                for j in (0..=i).rev() {
                    // P_{i,j} = W diag(prod) W^-1 applied to B_j x_j.
                    let inner = w_inv.matvec(&bx[j]);
                    let scaled: Vec<f64> =
                        inner.iter().zip(&cum).map(|(v, s)| v * s).collect();
                    let term = w.matvec(&scaled);
                    for (a, b) in h.iter_mut().zip(&term) {
                        *a += b;
                    }
                    if j > 0 {
                        for c in 0..d {
                            cum[c] *= diags[j][c];
                        }
                    }
                }
                states[i] = h;
            }
        }
        TransitionSpec::InputDependentFull { .. } => {
            let mats: Vec<Mat> = inputs.iter().map(|x| transition_at(spec, x)).collect();
            for i in 0..n {
                let mut h = vec![0.0; d];
                let mut cum = Mat::identity(d);
                for j in (0..=i).rev() {
                    let term = cum.matvec(&bx[j]);
                    for (a, b) in h.iter_mut().zip(&term) {
                        *a += b;
                    }
                    if j > 0 {
                        cum = cum.matmul(&mats[j]);
                    }
                }
                states[i] = h;
            }
        }
    }

    let outputs = outputs_from_states(spec, inputs, &states)?;
    Ok(LayerTrace { states, outputs })
}

/// Scan element: either a dense transition or the diagonal of one, paired
/// with an offset vector. Combining `(A2, b2) . (A1, b1)` (later element
/// on the left) yields `(A2 A1, A2 b1 + b2)`.
#[derive(Debug, Clone)]
pub enum ScanElem {
    Dense { a: Mat, b: Vec<f64> },
    Diag { a: Vec<f64>, b: Vec<f64> },
}

impl ScanElem {
    pub fn identity_dense(d: usize) -> ScanElem {
        ScanElem::Dense { a: Mat::identity(d), b: vec![0.0; d] }
    }

    pub fn identity_diag(d: usize) -> ScanElem {
        ScanElem::Diag { a: vec![1.0; d], b: vec![0.0; d] }
    }

    pub fn offset(&self) -> &[f64] {
        match self {
            ScanElem::Dense { b, .. } | ScanElem::Diag { b, .. } => b,
        }
    }

    /// `later.combine(earlier)`: the element for "earlier then later".
    pub fn combine(&self, earlier: &ScanElem) -> ScanElem {
        match (self, earlier) {
            (ScanElem::Dense { a: a2, b: b2 }, ScanElem::Dense { a: a1, b: b1 }) => {
                let mut b = a2.matvec(b1);
                for (x, y) in b.iter_mut().zip(b2) {
                    *x += y;
                }
                ScanElem::Dense { a: a2.matmul(a1), b }
            }
            (ScanElem::Diag { a: a2, b: b2 }, ScanElem::Diag { a: a1, b: b1 }) => {
                let a = a2.iter().zip(a1).map(|(x, y)| x * y).collect();
                let b = a2
                    .iter()
                    .zip(b1)
                    .zip(b2)
                    .map(|((a2c, b1c), b2c)| a2c * b1c + b2c)
                    .collect();
                ScanElem::Diag { a, b }
            }
            _ => panic!("mixed scan element kinds"),
        }
    }
}

/// How [`scan_forward`] traverses the combine tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Left fold; `n - 1` combines.
    Sequential,
    /// Balanced divide and conquer; `O(n log n)` combines, any bracketing
    /// of which must agree with the fold up to round-off.
    Tree,
}

fn scan_elements(spec: &SsmLayerSpec, inputs: &[Vec<f64>]) -> Vec<ScanElem> {
    let diagonal = matches!(spec.transition, TransitionSpec::DiagonalSelective { .. });
    inputs
        .iter()
        .map(|x| {
            let b = input_matrix_at(spec, x).matvec(x);
            if diagonal {
                if let TransitionSpec::DiagonalSelective { a_diag, delta_bias, pi_delta } =
                    &spec.transition
                {
                    let delta = selective_delta(delta_bias, pi_delta, x);
                    let a =
                        a_diag.iter().zip(&delta).map(|(av, dl)| (dl * av).exp()).collect();
                    return ScanElem::Diag { a, b };
                }
                unreachable!()
            }
            ScanElem::Dense { a: transition_at(spec, x), b }
        })
        .collect()
}

fn inclusive_scan(elems: &[ScanElem], mode: ScanMode) -> Vec<ScanElem> {
    match mode {
        ScanMode::Sequential => {
            let mut out: Vec<ScanElem> = Vec::with_capacity(elems.len());
            for (i, e) in elems.iter().enumerate() {
                if i == 0 {
                    out.push(e.clone());
                } else {
                    out.push(e.combine(&out[i - 1]));
                }
            }
            out
        }
        ScanMode::Tree => {
            if elems.len() <= 1 {
                return elems.to_vec();
            }
            let mid = elems.len() / 2;
            let left = inclusive_scan(&elems[..mid], mode);
            let right = inclusive_scan(&elems[mid..], mode);
            let total = left.last().unwrap();
            let mut out = left.clone();
            for r in &right {
                out.push(r.combine(total));
            }
            out
        }
    }
}

/// Evaluates the layer with an inclusive associative scan over
/// `(transition, offset)` pairs.
pub fn scan_forward(
    spec: &SsmLayerSpec,
    inputs: &[Vec<f64>],
    mode: ScanMode,
) -> Result<LayerTrace, SsmError> {
    check_inputs(spec, inputs)?;
    let elems = scan_elements(spec, inputs);
    let prefixes = inclusive_scan(&elems, mode);
    let states: Vec<Vec<f64>> = prefixes.iter().map(|e| e.offset().to_vec()).collect();
    let outputs = outputs_from_states(spec, inputs, &states)?;
    Ok(LayerTrace { states, outputs })
}

/// Step activations for the nonlinear recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Heaviside step: 1 if the pre-activation is positive, else 0.
    Step,
    Tanh,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Step => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }
}

/// Nonlinear recurrence `h_i = act(A h_{i-1} + B x_i)` from an explicit
/// initial state. Returns all states `h_1..h_n`.
pub fn rnn_ssm_forward(
    a_bar: &Mat,
    b_bar: &Mat,
    inputs: &[Vec<f64>],
    activation: Activation,
    h0: &[f64],
) -> Result<Vec<Vec<f64>>, SsmError> {
    let d = a_bar.rows();
    if a_bar.cols() != d || b_bar.rows() != d || h0.len() != d {
        return Err(SsmError::ShapeMismatch("rnn-ssm weights".into()));
    }
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != b_bar.cols() {
            return Err(SsmError::ShapeMismatch(format!("rnn-ssm input {i}")));
        }
    }
    let mut states = Vec::with_capacity(inputs.len());
    let mut h = h0.to_vec();
    for x in inputs {
        let mut pre = a_bar.matvec(&h);
        let bx = b_bar.matvec(x);
        for (p, b) in pre.iter_mut().zip(&bx) {
            *p += b;
        }
        h = pre.iter().map(|&z| activation.apply(z)).collect();
        states.push(h.clone());
    }
    Ok(states)
}

/// Pre-activations of the same recurrence, for invariant checks.
pub fn rnn_ssm_preactivations(
    a_bar: &Mat,
    b_bar: &Mat,
    inputs: &[Vec<f64>],
    activation: Activation,
    h0: &[f64],
) -> Vec<Vec<f64>> {
    let mut pres = Vec::with_capacity(inputs.len());
    let mut h = h0.to_vec();
    for x in inputs {
        let mut pre = a_bar.matvec(&h);
        let bx = b_bar.matvec(x);
        for (p, b) in pre.iter_mut().zip(&bx) {
            *p += b;
        }
        h = pre.iter().map(|&z| activation.apply(z)).collect();
        pres.push(pre);
    }
    pres
}

/// Pointwise nonlinearity applied between stacked layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pointwise {
    Identity,
    Relu,
    Tanh,
}

impl Pointwise {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Pointwise::Identity => z,
            Pointwise::Relu => z.max(0.0),
            Pointwise::Tanh => z.tanh(),
        }
    }
}

/// Layer-norm placement around each block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormPlacement {
    Pre,
    Post,
    Off,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes a vector to zero mean and unit variance.
pub fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = (var + LAYER_NORM_EPS).sqrt();
    x.iter().map(|v| (v - mean) / denom).collect()
}

/// One block of a stacked model: an SSM layer followed by an affine
/// projection and a pointwise nonlinearity.
#[derive(Debug, Clone)]
pub struct StackBlock {
    pub layer: SsmLayerSpec,
    pub proj: AffineVecMap,
    pub nonlinearity: Pointwise,
}

#[derive(Debug, Clone)]
pub struct StackSpec {
    pub blocks: Vec<StackBlock>,
    pub norm: NormPlacement,
}

impl StackSpec {
    fn validate(&self) -> Result<(), SsmError> {
        let mut dim = match self.blocks.first() {
            Some(b) => b.layer.input_dim(),
            None => return Ok(()),
        };
        for (index, block) in self.blocks.iter().enumerate() {
            if block.layer.input_dim() != dim {
                return Err(SsmError::BadChain {
                    index,
                    expected: block.layer.input_dim(),
                    got: dim,
                });
            }
            if block.proj.input_dim() != block.layer.input_dim() {
                return Err(SsmError::ShapeMismatch(format!("block {index} projection")));
            }
            dim = block.proj.output_dim();
        }
        Ok(())
    }
}

/// Composes the blocks over a whole input sequence.
pub fn stack_forward(stack: &StackSpec, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SsmError> {
    stack.validate()?;
    let mut seq: Vec<Vec<f64>> = inputs.to_vec();
    for block in &stack.blocks {
        let layer_in: Vec<Vec<f64>> = match stack.norm {
            NormPlacement::Pre => seq.iter().map(|x| layer_norm(x)).collect(),
            _ => seq.clone(),
        };
        let trace = recurrent_forward(&block.layer, &layer_in)?;
        seq = trace
            .outputs
            .iter()
            .map(|y| {
                let projected = block.proj.apply(y);
                let activated: Vec<f64> =
                    projected.iter().map(|&v| block.nonlinearity.apply(v)).collect();
                match stack.norm {
                    NormPlacement::Post => layer_norm(&activated),
                    _ => activated,
                }
            })
            .collect();
    }
    Ok(seq)
}
