//! Input-dependent linear-recurrence (selective scan) kernel.
//!
//! The recurrence per channel c and state lane n is
//!
//!   h_t = exp(delta_t[c] * A[c,n]) * h_{t-1} + delta_t[c] * B_t[n] * x_t[c]
//!   y_t[c] = <C_t, h_t[c,:]> + D[c] * x_t[c]
//!
//! with A kept strictly negative by storing it as -exp(A_log). Two
//! implementations share the coefficient math: a sequential O(L) loop (the
//! oracle) and a Blelloch-style prefix scan over associative (decay, drive)
//! pairs, O(L) work and O(log L) depth.

use rand::Rng;

use crate::params::{uniform_init, BoundParams, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::tape::{Op, ScanRecord, Tape, Var};
use crate::tensor::Tensor;

/// One element of the associative scan: `a` is the decay applied to the
/// running state, `b` the new drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanElement<T: Scalar> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> ScanElement<T> {
    pub fn identity() -> Self {
        ScanElement { a: T::one(), b: T::zero() }
    }

    /// Apply `self` first, then `next`.
    pub fn combine(self, next: ScanElement<T>) -> ScanElement<T> {
        ScanElement { a: self.a * next.a, b: next.a * self.b + next.b }
    }
}

/// Learned per-direction selective-SSM parameters.
///
/// `a_log` stores the state transition as -exp(a_log) per (channel, state);
/// `w_delta`/`b_delta` produce the per-channel step size (after softplus),
/// `w_b`/`w_c` the shared per-token input/output projections.
pub struct ScanParams<T: Scalar> {
    pub channels: usize,
    pub state_size: usize,
    pub a_log: Tensor<T>,  // (C, N)
    pub d: Tensor<T>,      // (C,)
    pub w_delta: Tensor<T>, // (C, C)
    pub b_delta: Tensor<T>, // (C,)
    pub w_b: Tensor<T>,    // (C, N)
    pub w_c: Tensor<T>,    // (C, N)
}

impl<T: Scalar> ScanParams<T> {
    /// Standard init: A_log[c, n] = ln(n + 1), D = 1, projections fan-in
    /// uniform, delta bias set so softplus output starts in [1e-3, 1e-1].
    pub fn init(channels: usize, state_size: usize, rng: &mut impl Rng) -> Self {
        let a_log = Tensor::new(
            vec![channels, state_size],
            (0..channels * state_size)
                .map(|i| T::from_f64_lossy(((i % state_size) as f64 + 1.0).ln()))
                .collect(),
        );
        let d = Tensor::full(vec![channels], T::one());
        let w_delta = uniform_init(vec![channels, channels], channels, rng);
        let b_delta = Tensor::new(
            vec![channels],
            (0..channels)
                .map(|_| {
                    // delta0 log-uniform in [1e-3, 1e-1], bias = softplus^{-1}(delta0)
                    let u: f64 = rng.gen();
                    let delta0 = 10f64.powf(-3.0 + 2.0 * u);
                    T::from_f64_lossy((delta0.exp() - 1.0).ln())
                })
                .collect(),
        );
        let w_b = uniform_init(vec![channels, state_size], channels, rng);
        let w_c = uniform_init(vec![channels, state_size], channels, rng);
        ScanParams { channels, state_size, a_log, d, w_delta, b_delta, w_b, w_c }
    }

    /// A = -exp(A_log), strictly negative.
    pub fn a_diag(&self) -> Tensor<T> {
        Tensor::new(
            vec![self.channels, self.state_size],
            self.a_log.data().iter().map(|&v| -v.exp()).collect(),
        )
    }
}

/// Per-token coefficients computed from a token sequence.
pub struct ScanCoeffs<T: Scalar> {
    pub delta: Tensor<T>, // (L, C), positive
    pub b: Tensor<T>,     // (L, N)
    pub c: Tensor<T>,     // (L, N)
    pub a: Tensor<T>,     // (C, N), negative
}

/// Evaluate the learned projections on an (L, C) token sequence.
pub fn coefficients<T: Scalar>(x: &Tensor<T>, params: &ScanParams<T>) -> ScanCoeffs<T> {
    let shape = x.shape();
    assert_eq!(shape.len(), 2, "token sequence must be (L, C)");
    let (l, c) = (shape[0], shape[1]);
    assert_eq!(c, params.channels, "channel mismatch");
    let n = params.state_size;
    let xd = x.data();
    let wd = params.w_delta.data();
    let bd = params.b_delta.data();
    let wb = params.w_b.data();
    let wc = params.w_c.data();

    let mut delta = vec![T::zero(); l * c];
    let mut b = vec![T::zero(); l * n];
    let mut cc = vec![T::zero(); l * n];
    for t in 0..l {
        let row = &xd[t * c..(t + 1) * c];
        for j in 0..c {
            let mut acc = bd[j];
            for i in 0..c {
                acc += row[i] * wd[i * c + j];
            }
            delta[t * c + j] = crate::tape::stable_softplus(acc);
        }
        for j in 0..n {
            let mut accb = T::zero();
            let mut accc = T::zero();
            for i in 0..c {
                accb += row[i] * wb[i * n + j];
                accc += row[i] * wc[i * n + j];
            }
            b[t * n + j] = accb;
            cc[t * n + j] = accc;
        }
    }
    ScanCoeffs {
        delta: Tensor::new(vec![l, c], delta),
        b: Tensor::new(vec![l, n], b),
        c: Tensor::new(vec![l, n], cc),
        a: params.a_diag(),
    }
}

/// ZOH discretization of the diagonal transition for one token:
/// A_bar = exp(delta * A) elementwise, B_bar = delta * B (first order).
///
/// `a` (C, N), `delta` (C,), `b` (N,) -> both outputs (C, N).
pub fn discretize<T: Scalar>(
    a: &Tensor<T>,
    delta: &Tensor<T>,
    b: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    assert_eq!(a.shape().len(), 2, "A must be (C, N)");
    let (c, n) = (a.shape()[0], a.shape()[1]);
    assert_eq!(delta.shape(), &[c], "delta must be (C,)");
    assert_eq!(b.shape(), &[n], "B must be (N,)");
    assert!(
        delta.data().iter().all(|&v| v > T::zero()),
        "discretize requires positive delta"
    );
    let mut a_bar = vec![T::zero(); c * n];
    let mut b_bar = vec![T::zero(); c * n];
    for ci in 0..c {
        let dt = delta.data()[ci];
        for ni in 0..n {
            a_bar[ci * n + ni] = (dt * a.data()[ci * n + ni]).exp();
            b_bar[ci * n + ni] = dt * b.data()[ni];
        }
    }
    (Tensor::new(vec![c, n], a_bar), Tensor::new(vec![c, n], b_bar))
}

/// Which forward realization of the recurrence to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanImpl {
    Sequential,
    Parallel,
}

/// Shared forward kernel. Returns (y (L*C), a_bar (L*C*N), h (L*C*N)).
pub(crate) fn scan_forward_core<T: Scalar>(
    x: &[T],
    delta: &[T],
    b: &[T],
    c_in: &[T],
    a: &[T],
    d: &[T],
    l: usize,
    ch: usize,
    n: usize,
    which: ScanImpl,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut a_bar = vec![T::zero(); l * ch * n];
    for t in 0..l {
        for c in 0..ch {
            let dt = delta[t * ch + c];
            debug_assert!(dt > T::zero(), "scan requires positive delta");
            for ni in 0..n {
                a_bar[(t * ch + c) * n + ni] = (dt * a[c * n + ni]).exp();
            }
        }
    }

    let mut h = vec![T::zero(); l * ch * n];
    match which {
        ScanImpl::Sequential => {
            let mut state = vec![T::zero(); ch * n];
            for t in 0..l {
                for c in 0..ch {
                    let dt = delta[t * ch + c];
                    let xv = x[t * ch + c];
                    for ni in 0..n {
                        let idx = c * n + ni;
                        state[idx] = a_bar[(t * ch + c) * n + ni] * state[idx]
                            + dt * b[t * n + ni] * xv;
                        h[(t * ch + c) * n + ni] = state[idx];
                    }
                }
            }
        }
        ScanImpl::Parallel => {
            // lane-by-lane Blelloch prefix scan over (decay, drive) pairs
            let mut lane = vec![ScanElement::<T>::identity(); l];
            for c in 0..ch {
                for ni in 0..n {
                    for (t, e) in lane.iter_mut().enumerate() {
                        e.a = a_bar[(t * ch + c) * n + ni];
                        e.b = delta[t * ch + c] * b[t * n + ni] * x[t * ch + c];
                    }
                    let scanned = blelloch_inclusive(&lane);
                    for (t, e) in scanned.iter().enumerate() {
                        h[(t * ch + c) * n + ni] = e.b;
                    }
                }
            }
        }
    }

    let mut y = vec![T::zero(); l * ch];
    for t in 0..l {
        for c in 0..ch {
            let mut acc = d[c] * x[t * ch + c];
            for ni in 0..n {
                acc += c_in[t * n + ni] * h[(t * ch + c) * n + ni];
            }
            y[t * ch + c] = acc;
        }
    }
    (y, a_bar, h)
}

/// Inference-only evaluation: same recurrence as [`scan_forward_core`] but
/// without materialising the `(L, C, N)` decay and state histories the
/// backward pass needs. Keeps the working set per token at `O(C * N)` so
/// wall time stays linear in `L` instead of degrading once the histories
/// outgrow the cache.
pub(crate) fn scan_apply_core<T: Scalar>(
    x: &[T],
    delta: &[T],
    b: &[T],
    c_in: &[T],
    a: &[T],
    d: &[T],
    l: usize,
    ch: usize,
    n: usize,
    which: ScanImpl,
) -> Vec<T> {
    let mut y = vec![T::zero(); l * ch];
    match which {
        ScanImpl::Sequential => {
            let mut state = vec![T::zero(); ch * n];
            for t in 0..l {
                for c in 0..ch {
                    let dt = delta[t * ch + c];
                    debug_assert!(dt > T::zero(), "scan requires positive delta");
                    let xv = x[t * ch + c];
                    let mut acc = d[c] * xv;
                    for ni in 0..n {
                        let idx = c * n + ni;
                        state[idx] = (dt * a[idx]).exp() * state[idx]
                            + dt * b[t * n + ni] * xv;
                        acc += c_in[t * n + ni] * state[idx];
                    }
                    y[t * ch + c] = acc;
                }
            }
        }
        ScanImpl::Parallel => {
            // lane-by-lane Blelloch prefix scan over (decay, drive) pairs
            let mut lane = vec![ScanElement::<T>::identity(); l];
            for c in 0..ch {
                for ni in 0..n {
                    for (t, e) in lane.iter_mut().enumerate() {
                        let dt = delta[t * ch + c];
                        e.a = (dt * a[c * n + ni]).exp();
                        e.b = dt * b[t * n + ni] * x[t * ch + c];
                    }
                    let scanned = blelloch_inclusive(&lane);
                    for (t, e) in scanned.iter().enumerate() {
                        y[t * ch + c] += c_in[t * n + ni] * e.b;
                    }
                }
            }
            for t in 0..l {
                for c in 0..ch {
                    y[t * ch + c] += d[c] * x[t * ch + c];
                }
            }
        }
    }
    y
}

/// Work-efficient inclusive prefix scan with a fixed combination tree.
pub fn blelloch_inclusive<T: Scalar>(elems: &[ScanElement<T>]) -> Vec<ScanElement<T>> {
    let l = elems.len();
    if l == 0 {
        return Vec::new();
    }
    let n = l.next_power_of_two();
    let mut tree: Vec<ScanElement<T>> = Vec::with_capacity(n);
    tree.extend_from_slice(elems);
    tree.resize(n, ScanElement::identity());

    // up-sweep
    let mut stride = 1;
    while stride < n {
        let mut i = stride * 2 - 1;
        while i < n {
            tree[i] = tree[i - stride].combine(tree[i]);
            i += stride * 2;
        }
        stride *= 2;
    }
    // down-sweep: turn sums into exclusive prefixes, preserving order
    tree[n - 1] = ScanElement::identity();
    stride = n / 2;
    while stride >= 1 {
        let mut i = stride * 2 - 1;
        while i < n {
            let left_sum = tree[i - stride];
            tree[i - stride] = tree[i];
            tree[i] = tree[i].combine(left_sum);
            i += stride * 2;
        }
        stride /= 2;
    }
    // inclusive = exclusive ∘ original
    (0..l).map(|i| tree[i].combine(elems[i])).collect()
}

fn run_scan<T: Scalar>(x: &Tensor<T>, params: &ScanParams<T>, which: ScanImpl) -> Tensor<T> {
    let shape = x.shape();
    assert!(shape.len() == 2 && shape[0] >= 1, "token sequence must be (L, C) with L >= 1");
    let (l, ch) = (shape[0], shape[1]);
    let coeffs = coefficients(x, params);
    let y = scan_apply_core(
        x.data(),
        coeffs.delta.data(),
        coeffs.b.data(),
        coeffs.c.data(),
        coeffs.a.data(),
        params.d.data(),
        l,
        ch,
        params.state_size,
        which,
    );
    Tensor::new(vec![l, ch], y)
}

/// O(L*N) sequential evaluation; the reference implementation.
pub fn scan_sequential<T: Scalar>(x: &Tensor<T>, params: &ScanParams<T>) -> Tensor<T> {
    run_scan(x, params, ScanImpl::Sequential)
}

/// Prefix-scan evaluation; numerically equivalent to `scan_sequential`.
pub fn scan_parallel<T: Scalar>(x: &Tensor<T>, params: &ScanParams<T>) -> Tensor<T> {
    run_scan(x, params, ScanImpl::Parallel)
}

// ---- tape integration ----------------------------------------------------

impl<T: Scalar> Tape<T> {
    /// Differentiable selective scan over explicit coefficient tensors.
    ///
    /// x (L, C), delta (L, C) positive, b/c (L, N), a (C, N), d (C,).
    pub fn selective_scan(
        &mut self,
        x: Var,
        delta: Var,
        b: Var,
        c: Var,
        a: Var,
        d: Var,
        which: ScanImpl,
    ) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 2, "scan input must be (L, C)");
        let (l, ch) = (xs[0], xs[1]);
        assert_eq!(self.shape(delta), &[l, ch], "delta must be (L, C)");
        let n = self.shape(b)[1];
        assert_eq!(self.shape(b), &[l, n], "B must be (L, N)");
        assert_eq!(self.shape(c), &[l, n], "C must be (L, N)");
        assert_eq!(self.shape(a), &[ch, n], "A must be (C, N)");
        assert_eq!(self.shape(d), &[ch], "D must be (C,)");
        assert!(
            self.data(delta).iter().all(|&v| v > T::zero()),
            "selective scan requires positive delta"
        );

        let (y, a_bar, h) = scan_forward_core(
            self.data(x),
            self.data(delta),
            self.data(b),
            self.data(c),
            self.data(a),
            self.data(d),
            l,
            ch,
            n,
            which,
        );
        let record = ScanRecord { x, delta, b_in: b, c_in: c, a_diag: a, d_skip: d, a_bar, h };
        let rg = [x, delta, b, c, a, d].iter().any(|&v| self.var_requires_grad(v));
        self.push_scan(vec![l, ch], y, rg, record)
    }

    /// Adjoint of the scan: reverse recurrence over the recorded (a_bar, h).
    pub(crate) fn scan_backward(&mut self, node: usize, g: &[T]) {
        let (x, delta, b_in, c_in, a_diag, d_skip, a_bar, h) = {
            let Op::SelectiveScan(rec) = self.node_op(node) else {
                unreachable!("scan_backward on non-scan node")
            };
            (
                rec.x,
                rec.delta,
                rec.b_in,
                rec.c_in,
                rec.a_diag,
                rec.d_skip,
                rec.a_bar.clone(),
                rec.h.clone(),
            )
        };
        let (l, ch) = {
            let s = self.shape(x);
            (s[0], s[1])
        };
        let n = self.shape(b_in)[1];

        let mut gx = vec![T::zero(); l * ch];
        let mut gdelta = vec![T::zero(); l * ch];
        let mut gb = vec![T::zero(); l * n];
        let mut gc = vec![T::zero(); l * n];
        let mut ga = vec![T::zero(); ch * n];
        let mut gd = vec![T::zero(); ch];

        {
            let xd = self.data(x);
            let dd = self.data(delta);
            let bd = self.data(b_in);
            let cd = self.data(c_in);
            let ad = self.data(a_diag);
            let skipd = self.data(d_skip);

            // dh carries dL/dh_t for the current t
            let mut dh = vec![T::zero(); ch * n];
            for t in (0..l).rev() {
                for c in 0..ch {
                    let gy = g[t * ch + c];
                    let xv = xd[t * ch + c];
                    let dt = dd[t * ch + c];
                    gd[c] += gy * xv;
                    let mut gx_acc = gy * skipd[c];
                    let mut gdelta_acc = T::zero();
                    for ni in 0..n {
                        let lane = c * n + ni;
                        // dh_t = gy * C_t + a_bar_{t+1} * dh_{t+1}; the decay
                        // factor was multiplied in at the end of step t+1.
                        let dht = dh[lane] + gy * cd[t * n + ni];
                        gc[t * n + ni] += gy * h[(t * ch + c) * n + ni];
                        let h_prev = if t > 0 { h[((t - 1) * ch + c) * n + ni] } else { T::zero() };
                        let abar = a_bar[(t * ch + c) * n + ni];
                        gx_acc += dht * dt * bd[t * n + ni];
                        gb[t * n + ni] += dht * dt * xv;
                        gdelta_acc += dht * (ad[lane] * abar * h_prev + bd[t * n + ni] * xv);
                        ga[lane] += dht * dt * abar * h_prev;
                        // pass back through the decay to step t-1
                        dh[lane] = dht * abar;
                    }
                    gx[t * ch + c] += gx_acc;
                    gdelta[t * ch + c] += gdelta_acc;
                }
            }
        }

        self.accumulate_grad(x, &gx);
        self.accumulate_grad(delta, &gdelta);
        self.accumulate_grad(b_in, &gb);
        self.accumulate_grad(c_in, &gc);
        self.accumulate_grad(a_diag, &ga);
        self.accumulate_grad(d_skip, &gd);
    }
}

/// Parameter ids of one scan direction, living in a shared `ParamSet`.
pub struct ScanLayer {
    pub channels: usize,
    pub state_size: usize,
    pub a_log: ParamId,
    pub d: ParamId,
    pub w_delta: ParamId,
    pub b_delta: ParamId,
    pub w_b: ParamId,
    pub w_c: ParamId,
}

impl ScanLayer {
    pub fn new<T: Scalar>(
        prefix: &str,
        channels: usize,
        state_size: usize,
        params: &mut ParamSet<T>,
        rng: &mut impl Rng,
    ) -> Self {
        let init = ScanParams::init(channels, state_size, rng);
        ScanLayer {
            channels,
            state_size,
            a_log: params.alloc(format!("{prefix}.a_log"), init.a_log),
            d: params.alloc(format!("{prefix}.d"), init.d),
            w_delta: params.alloc(format!("{prefix}.w_delta"), init.w_delta),
            b_delta: params.alloc(format!("{prefix}.b_delta"), init.b_delta),
            w_b: params.alloc(format!("{prefix}.w_b"), init.w_b),
            w_c: params.alloc(format!("{prefix}.w_c"), init.w_c),
        }
    }

    pub fn param_count(&self) -> usize {
        let (c, n) = (self.channels, self.state_size);
        c * n + c + c * c + c + c * n + c * n
    }

    /// Differentiable scan of an (L, C) token sequence.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        pv: &BoundParams,
        x: Var,
        which: ScanImpl,
    ) -> Var {
        let pre = tape.linear(x, pv.var(self.w_delta), pv.var(self.b_delta));
        let delta = tape.softplus(pre);
        let zeros_n = tape.constant(Tensor::zeros(vec![self.state_size]));
        let b = tape.linear(x, pv.var(self.w_b), zeros_n);
        let c = tape.linear(x, pv.var(self.w_c), zeros_n);
        let ea = tape.exp(pv.var(self.a_log));
        let a = tape.neg(ea);
        tape.selective_scan(x, delta, b, c, a, pv.var(self.d), which)
    }

    /// Snapshot of the current parameter values as a `ScanParams`.
    pub fn snapshot<T: Scalar>(&self, params: &ParamSet<T>) -> ScanParams<T> {
        ScanParams {
            channels: self.channels,
            state_size: self.state_size,
            a_log: params.get(self.a_log).clone(),
            d: params.get(self.d).clone(),
            w_delta: params.get(self.w_delta).clone(),
            b_delta: params.get(self.b_delta).clone(),
            w_b: params.get(self.w_b).clone(),
            w_c: params.get(self.w_c).clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn combine_identity_and_values() {
        let e = ScanElement { a: 0.5f64, b: 2.0 };
        let id = ScanElement::identity();
        assert_eq!(id.combine(e), e);
        assert_eq!(e.combine(id), e);
    }

    #[test]
    fn discretize_boundary_and_analytic() {
        // A = 0 probe: exp(0) = 1
        let a = Tensor::new(vec![1, 1], vec![0.0f64]);
        let delta = Tensor::new(vec![1], vec![1.0]);
        let b = Tensor::new(vec![1], vec![3.0]);
        let (abar, bbar) = discretize(&a, &delta, &b);
        assert_eq!(abar.data(), &[1.0]);
        assert_eq!(bbar.data(), &[3.0]);

        // A = -1, delta = ln 2 -> A_bar = 0.5
        let a = Tensor::new(vec![1, 1], vec![-1.0f64]);
        let delta = Tensor::new(vec![1], vec![2.0f64.ln()]);
        let (abar, _) = discretize(&a, &delta, &b);
        assert!((abar.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "positive delta")]
    fn discretize_rejects_nonpositive_delta() {
        let a = Tensor::new(vec![1, 1], vec![-1.0f64]);
        let delta = Tensor::new(vec![1], vec![0.0]);
        let b = Tensor::new(vec![1], vec![1.0]);
        let _ = discretize(&a, &delta, &b);
    }

    #[test]
    fn discretize_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = 3;
        let n = 4;
        let a = Tensor::new(vec![c, n], (0..c * n).map(|_| -rng.gen::<f64>() - 0.1).collect());
        let delta = Tensor::new(vec![c], (0..c).map(|_| rng.gen::<f64>() + 0.1).collect());
        let b = Tensor::new(vec![n], (0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
        let (abar, bbar) = discretize(&a, &delta, &b);
        for ci in 0..c {
            for ni in 0..n {
                let want_a = (delta.data()[ci] * a.data()[ci * n + ni]).exp();
                let want_b = delta.data()[ci] * b.data()[ni];
                assert!((abar.at(&[ci, ni]) - want_a).abs() < 1e-12);
                assert!((bbar.at(&[ci, ni]) - want_b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cumulative_sum_special_case() {
        // A_bar = 1, B_bar = 1, C = 1, D = 0 forces y = cumsum(x).
        // Realized directly on the core kernel with a = 0, delta = 1, b = 1.
        let x = vec![1.0f64, 2.0, 3.0];
        let delta = vec![1.0; 3];
        let b = vec![1.0; 3];
        let c = vec![1.0; 3];
        let a = vec![0.0];
        let d = vec![0.0];
        let (y, _, _) = scan_forward_core(&x, &delta, &b, &c, &a, &d, 3, 1, 1, ScanImpl::Sequential);
        assert_eq!(y, vec![1.0, 3.0, 6.0]);
        let (yp, _, _) = scan_forward_core(&x, &delta, &b, &c, &a, &d, 3, 1, 1, ScanImpl::Parallel);
        assert_eq!(yp, vec![1.0, 3.0, 6.0]);
    }

    #[test]
    fn length_one_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = ScanParams::<f64>::init(3, 4, &mut rng);
        let x = Tensor::new(vec![1, 3], vec![0.7, -0.2, 0.4]);
        let y = scan_sequential(&x, &params);
        let coeffs = coefficients(&x, &params);
        for c in 0..3 {
            let mut want = params.d.data()[c] * x.data()[c];
            for ni in 0..4 {
                let abar = (coeffs.delta.at(&[0, c]) * coeffs.a.at(&[c, ni])).exp();
                let _ = abar; // h_0 = 0, so the decay never acts at L = 1
                let h = coeffs.delta.at(&[0, c]) * coeffs.b.at(&[0, ni]) * x.data()[c];
                want += coeffs.c.at(&[0, ni]) * h;
            }
            assert!((y.at(&[0, c]) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn sequential_matches_unrolled_matrix_recurrence() {
        // naive unrolled oracle at L = 64
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (l, ch, n) = (64, 3, 4);
        let params = ScanParams::<f64>::init(ch, n, &mut rng);
        let x = Tensor::new(vec![l, ch], (0..l * ch).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
        let y = scan_sequential(&x, &params);

        let coeffs = coefficients(&x, &params);
        for c in 0..ch {
            let mut h = vec![0.0f64; n];
            for t in 0..l {
                let dt = coeffs.delta.at(&[t, c]);
                for (ni, hv) in h.iter_mut().enumerate() {
                    let abar = (dt * coeffs.a.at(&[c, ni])).exp();
                    *hv = abar * *hv + dt * coeffs.b.at(&[t, ni]) * x.at(&[t, c]);
                }
                let mut want = params.d.data()[c] * x.at(&[t, c]);
                for (ni, hv) in h.iter().enumerate() {
                    want += coeffs.c.at(&[t, ni]) * hv;
                }
                assert!(
                    (y.at(&[t, c]) - want).abs() < 1e-12,
                    "mismatch at t={t} c={c}: {} vs {}",
                    y.at(&[t, c]),
                    want
                );
            }
        }
    }

    #[test]
    fn parallel_equals_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &l in &[1usize, 2, 3, 7, 64, 100, 257] {
            let params = ScanParams::<f64>::init(4, 6, &mut rng);
            let x = Tensor::new(vec![l, 4], (0..l * 4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
            let ys = scan_sequential(&x, &params);
            let yp = scan_parallel(&x, &params);
            let max = ys
                .data()
                .iter()
                .zip(yp.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max < 1e-10, "L={l}: max diff {max}");
        }
    }

    #[test]
    fn identity_elements_only_give_zero_output() {
        // all drives zero with D = 0 -> all-zero output
        let x = vec![0.0f64; 8];
        let delta = vec![1.0; 8];
        let b = vec![1.0; 8];
        let c = vec![1.0; 8];
        let a = vec![-1.0];
        let d = vec![0.0];
        let (y, _, _) = scan_forward_core(&x, &delta, &b, &c, &a, &d, 8, 1, 1, ScanImpl::Parallel);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bounded_state_at_long_length() {
        // geometric envelope: no overflow for L = 16384, |x| <= 1
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = ScanParams::<f64>::init(2, 4, &mut rng);
        let l = 16384;
        let x = Tensor::new(vec![l, 2], (0..l * 2).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
        let y = scan_sequential(&x, &params);
        assert!(y.all_finite());
    }

    #[test]
    fn tape_scan_matches_pure_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let params = ScanParams::<f64>::init(3, 4, &mut rng);
        let x = Tensor::new(vec![10, 3], (0..30).map(|_| rng.gen::<f64>() - 0.5).collect());
        let pure = scan_sequential(&x, &params);

        let mut pset = ParamSet::new();
        let mut rng2 = ChaCha8Rng::seed_from_u64(29);
        let layer = ScanLayer::new("s", 3, 4, &mut pset, &mut rng2);
        let mut tape = Tape::new();
        let pv = pset.bind(&mut tape);
        let xv = tape.leaf(x, false);
        let y = layer.forward(&mut tape, &pv, xv, ScanImpl::Sequential);
        let max = tape
            .data(y)
            .iter()
            .zip(pure.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max < 1e-12, "tape/pure divergence {max}");
    }

    #[test]
    fn scan_gradients_match_finite_differences() {
        use crate::gradcheck::{check_gradients, DEFAULT_STEP, DEFAULT_TOLERANCE};
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (l, ch, n) = (6, 3, 2);
        let mut pset = ParamSet::<f64>::new();
        let layer = ScanLayer::new("s", ch, n, &mut pset, &mut rng);
        let x = Tensor::new(vec![l, ch], (0..l * ch).map(|_| rng.gen::<f64>() - 0.5).collect());

        // inputs: x then every parameter in registration order
        let mut inputs = vec![x];
        for (_, t) in pset.iter() {
            inputs.push(t.clone());
        }
        let run = |ins: &[Tensor<f64>]| -> (f64, Vec<Vec<f64>>) {
            let mut pset2 = ParamSet::new();
            let mut rng3 = ChaCha8Rng::seed_from_u64(31);
            let layer2 = ScanLayer::new("s", ch, n, &mut pset2, &mut rng3);
            for (i, (_, t)) in pset2.iter_mut().enumerate() {
                *t = ins[i + 1].clone();
            }
            let mut tape = Tape::new();
            let pv = pset2.bind(&mut tape);
            let xv = tape.leaf(ins[0].clone(), true);
            let y = layer2.forward(&mut tape, &pv, xv, ScanImpl::Sequential);
            let sq = tape.mul(y, y);
            let loss = tape.sum_all(sq);
            tape.backward(loss).unwrap();
            let mut grads = vec![tape.grad(xv).unwrap().to_vec()];
            grads.extend(pv.gradients(&tape));
            (tape.data(loss)[0], grads)
        };
        let (_, analytic) = run(&inputs);
        let f = |ins: &[Tensor<f64>]| run(ins).0;
        let worst = check_gradients(f, &inputs, &analytic, DEFAULT_STEP, DEFAULT_TOLERANCE)
            .expect("scan gradient check");
        assert!(worst < DEFAULT_TOLERANCE);
        let _ = layer;
    }
}
