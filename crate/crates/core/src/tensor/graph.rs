use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::conv::ConvGeometry;
use super::kernels;
use super::{Scalar, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv3 {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeometry,
        batch: usize,
        c_out: usize,
    },
    Conv3T {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeometry,
        batch: usize,
        c_in: usize,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu(Var),
    Softplus(Var),
    Clamp {
        input: Var,
        lo: T,
        hi: T,
    },
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    Reparameterize {
        mu: Var,
        log_var: Var,
        noise: Vec<T>,
    },
    Mse(Var, Var),
    KlNormal {
        mu: Var,
        log_var: Var,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// A reverse-mode autodiff tape.
///
/// Ops append nodes eagerly; [`Graph::backward`] walks them in reverse and
/// stores gradients on every leaf created with `requires_grad`. A second
/// `backward` without [`Graph::zero_grad`] is an error rather than an
/// accumulation.
#[derive(Clone, Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that takes part in differentiation.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims5(&self, op: &'static str, v: Var, what: &str) -> Result<[usize; 5]> {
        let t = self.value(v);
        t.check_rank(op, 5, what)?;
        let s = t.shape();
        Ok([s[0], s[1], s[2], s[3], s[4]])
    }

    fn bias_len(&self, op: &'static str, bias: Var, expected: usize) -> Result<()> {
        let s = self.shape(bias);
        if s != [expected] {
            return Err(shape_err(
                op,
                format!("bias must have shape [{expected}], got {s:?}"),
            ));
        }
        Ok(())
    }

    /// 3D cross-correlation. `input` is `[N, C_in, D, H, W]`, `kernel` is
    /// `[C_out, C_in, kd, kh, kw]`, `bias` is `[C_out]`.
    pub fn conv3(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let [n, c_in, d, h, w] = self.dims5("conv3", input, "input")?;
        let [c_out, k_in, kd, kh, kw] = self.dims5("conv3", kernel, "kernel")?;
        if k_in != c_in {
            return Err(shape_err(
                "conv3",
                format!(
                    "input has {c_in} channels but kernel expects {k_in} (input {:?}, kernel {:?})",
                    self.shape(input),
                    self.shape(kernel)
                ),
            ));
        }
        self.bias_len("conv3", bias, c_out)?;
        if stride == 0 {
            return Err(shape_err(
                "conv3",
                String::from("stride must be at least 1"),
            ));
        }
        let geom = ConvGeometry::for_conv(c_in, [d, h, w], [kd, kh, kw], stride, padding)?;
        let (rows, s_len, b_len) = (geom.col_rows(), geom.small_len(), geom.big_len());
        let x = self.value(input).data();
        let wt = self.value(kernel).data();
        let b = self.value(bias).data();
        let mut out = vec![T::zero(); n * c_out * s_len];
        let mut col = vec![T::zero(); rows * s_len];
        for i in 0..n {
            geom.im2col(&x[i * c_in * b_len..(i + 1) * c_in * b_len], &mut col);
            let o = &mut out[i * c_out * s_len..(i + 1) * c_out * s_len];
            for (row, &bv) in o.chunks_exact_mut(s_len).zip(b) {
                row.fill(bv);
            }
            kernels::gemm_acc(o, wt, &col, c_out, rows, s_len);
        }
        let value = Tensor::new(
            &[n, c_out, geom.small[0], geom.small[1], geom.small[2]],
            out,
        )?;
        Ok(self.push(
            value,
            Op::Conv3 {
                input,
                kernel,
                bias,
                geom,
                batch: n,
                c_out,
            },
            &[input, kernel, bias],
        ))
    }

    /// Transposed 3D convolution, the adjoint of [`Graph::conv3`]. `input` is
    /// `[N, C_in, D, H, W]`, `kernel` is `[C_in, C_out, kd, kh, kw]`, `bias`
    /// is `[C_out]`; `output_padding < stride` extends each output extent.
    pub fn conv3_transpose(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let [n, c_in, d, h, w] = self.dims5("conv3_transpose", input, "input")?;
        let [k_in, c_out, kd, kh, kw] = self.dims5("conv3_transpose", kernel, "kernel")?;
        if k_in != c_in {
            return Err(shape_err(
                "conv3_transpose",
                format!(
                    "input has {c_in} channels but kernel expects {k_in} (input {:?}, kernel {:?})",
                    self.shape(input),
                    self.shape(kernel)
                ),
            ));
        }
        self.bias_len("conv3_transpose", bias, c_out)?;
        let geom = ConvGeometry::for_transpose(
            c_out,
            [d, h, w],
            [kd, kh, kw],
            stride,
            padding,
            output_padding,
        )?;
        let (rows, s_len, b_len) = (geom.col_rows(), geom.small_len(), geom.big_len());
        let x = self.value(input).data();
        let wt = self.value(kernel).data();
        let b = self.value(bias).data();
        let mut out = vec![T::zero(); n * c_out * b_len];
        let mut col = vec![T::zero(); rows * s_len];
        for i in 0..n {
            col.fill(T::zero());
            kernels::gemm_tn_acc(
                &mut col,
                wt,
                &x[i * c_in * s_len..(i + 1) * c_in * s_len],
                c_in,
                rows,
                s_len,
            );
            let o = &mut out[i * c_out * b_len..(i + 1) * c_out * b_len];
            for (chan, &bv) in o.chunks_exact_mut(b_len).zip(b) {
                chan.fill(bv);
            }
            geom.col2im_add(&col, o);
        }
        let value = Tensor::new(&[n, c_out, geom.big[0], geom.big[1], geom.big[2]], out)?;
        Ok(self.push(
            value,
            Op::Conv3T {
                input,
                kernel,
                bias,
                geom,
                batch: n,
                c_in,
            },
            &[input, kernel, bias],
        ))
    }

    /// Affine map: `input` `[N, F_in]`, `weight` `[F_out, F_in]`, `bias` `[F_out]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(input), self.shape(weight), self.shape(bias));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(shape_err(
                "dense",
                format!("input {xs:?}, weight {ws:?}, bias {bs:?} (need [N,F_in], [F_out,F_in], [F_out])"),
            ));
        }
        let (n, f_in, f_out) = (xs[0], xs[1], ws[0]);
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let b = self.value(bias).data();
        let mut out = Vec::with_capacity(n * f_out);
        for x_row in x.chunks_exact(f_in) {
            for (w_row, &bv) in wt.chunks_exact(f_in).zip(b) {
                out.push(T::of(bv.widen() + kernels::dot(x_row, w_row)));
            }
        }
        let value = Tensor::new(&[n, f_out], out)?;
        Ok(self.push(
            value,
            Op::Dense {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let value = self
            .value(input)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(input), &[input])
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, input: Var) -> Var {
        let value = self.value(input).map(softplus);
        self.push(value, Op::Softplus(input), &[input])
    }

    /// Hard clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, input: Var, lo: T, hi: T) -> Var {
        let value = self.value(input).map(|v| v.max(lo).min(hi));
        self.push(value, Op::Clamp { input, lo, hi }, &[input])
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(input), &[input]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor {
            shape: ta.shape().to_vec(),
            data,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let value = self.value(input).map(|v| v * factor);
        self.push(value, Op::Scale(input, factor), &[input])
    }

    pub fn exp(&mut self, input: Var) -> Var {
        let value = self.value(input).map(|v| v.exp());
        self.push(value, Op::Exp(input), &[input])
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let value = Tensor::scalar(T::of(kernels::sum(self.value(input).data())));
        self.push(value, Op::Sum(input), &[input])
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let t = self.value(input);
        let value = Tensor::scalar(T::of(kernels::sum(t.data()) / t.numel() as f64));
        self.push(value, Op::Mean(input), &[input])
    }

    /// `z = μ + exp(½·log σ²) ⊙ ε` with caller-supplied standard-normal noise `ε`.
    pub fn reparameterize(&mut self, mu: Var, log_var: Var, noise: &Tensor<T>) -> Result<Var> {
        self.same_shape("reparameterize", mu, log_var)?;
        if self.shape(mu) != noise.shape() {
            return Err(shape_err(
                "reparameterize",
                format!("noise {:?} vs stats {:?}", noise.shape(), self.shape(mu)),
            ));
        }
        let half = T::of(0.5);
        let (m, lv) = (self.value(mu).data(), self.value(log_var).data());
        let data = m
            .iter()
            .zip(lv)
            .zip(noise.data())
            .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
            .collect();
        let value = Tensor {
            shape: self.shape(mu).to_vec(),
            data,
        };
        Ok(self.push(
            value,
            Op::Reparameterize {
                mu,
                log_var,
                noise: noise.data().to_vec(),
            },
            &[mu, log_var],
        ))
    }

    /// Mean of `(a − b)²` over every element.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let mut acc = 0.0f64;
        for (&x, &y) in ta.iter().zip(tb) {
            let r = x.widen() - y.widen();
            acc += r * r;
        }
        let value = Tensor::scalar(T::of(acc / ta.len() as f64));
        Ok(self.push(value, Op::Mse(a, b), &[a, b]))
    }

    /// Closed-form `KL(N(μ, σ²) ‖ N(0, 1))` summed over latent dimensions and
    /// averaged over the batch; `mu` and `log_var` are `[N, k]`.
    pub fn kl_normal(&mut self, mu: Var, log_var: Var) -> Result<Var> {
        self.same_shape("kl_normal", mu, log_var)?;
        let shape = self.shape(mu);
        if shape.len() != 2 {
            return Err(shape_err(
                "kl_normal",
                format!("stats must be [N, k], got {shape:?}"),
            ));
        }
        let n = shape[0];
        let kl = kl_sum(self.value(mu).data(), self.value(log_var).data()) / n as f64;
        Ok(self.push(
            Tensor::scalar(T::of(kl)),
            Op::KlNormal { mu, log_var },
            &[mu, log_var],
        ))
    }

    /// Fingerprint of every piecewise branch taken (ReLU sign, clamp region).
    ///
    /// Two evaluations with equal signatures lie on the same smooth piece of
    /// the loss, which is what central differences assume.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bit: u8| {
            h ^= bit as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for node in &self.nodes {
            match node.op {
                Op::Relu(x) => {
                    for &v in self.value(x).data() {
                        feed((v > T::zero()) as u8);
                    }
                }
                Op::Clamp { input, lo, hi } => {
                    for &v in self.value(input).data() {
                        feed(if v < lo {
                            0
                        } else if v > hi {
                            2
                        } else {
                            1
                        });
                    }
                }
                _ => {}
            }
        }
        h
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(String::from(
                "gradients already populated; call zero_grad before another backward",
            )));
        }
        let loss_t = self.value(loss);
        if loss_t.numel() != 1 {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                loss_t.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].grad = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }
        for node in &mut self.nodes {
            if node.requires_grad && matches!(node.op, Op::Leaf) && node.grad.is_none() {
                node.grad = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv3 {
                input,
                kernel,
                bias,
                geom,
                batch,
                c_out,
            } => {
                let (rows, s_len, b_len) = (geom.col_rows(), geom.small_len(), geom.big_len());
                let c_in = geom.channels;
                let x = self.value(*input).data();
                let wt = self.value(*kernel).data();
                let mut col = vec![T::zero(); rows * s_len];
                let mut dw = wants(*kernel).then(|| vec![0.0f64; c_out * rows]);
                let mut db = wants(*bias).then(|| vec![0.0f64; *c_out]);
                let mut dx = wants(*input).then(|| vec![T::zero(); x.len()]);
                for n in 0..*batch {
                    let gn = &g[n * c_out * s_len..(n + 1) * c_out * s_len];
                    if let Some(db) = db.as_mut() {
                        for (acc, row) in db.iter_mut().zip(gn.chunks_exact(s_len)) {
                            *acc += kernels::sum(row);
                        }
                    }
                    if let Some(dw) = dw.as_mut() {
                        geom.im2col(&x[n * c_in * b_len..(n + 1) * c_in * b_len], &mut col);
                        kernels::gemm_nt_acc_f64(dw, gn, &col, *c_out, rows, s_len);
                    }
                    if let Some(dx) = dx.as_mut() {
                        col.fill(T::zero());
                        kernels::gemm_tn_acc(&mut col, wt, gn, *c_out, rows, s_len);
                        geom.col2im_add(&col, &mut dx[n * c_in * b_len..(n + 1) * c_in * b_len]);
                    }
                }
                accumulate(grads, *input, dx);
                accumulate(grads, *kernel, dw.map(narrow));
                accumulate(grads, *bias, db.map(narrow));
            }
            Op::Conv3T {
                input,
                kernel,
                bias,
                geom,
                batch,
                c_in,
            } => {
                let (rows, s_len, b_len) = (geom.col_rows(), geom.small_len(), geom.big_len());
                let c_out = geom.channels;
                let x = self.value(*input).data();
                let wt = self.value(*kernel).data();
                let mut col = vec![T::zero(); rows * s_len];
                let mut dw = wants(*kernel).then(|| vec![0.0f64; c_in * rows]);
                let mut db = wants(*bias).then(|| vec![0.0f64; c_out]);
                let mut dx = wants(*input).then(|| vec![T::zero(); x.len()]);
                for n in 0..*batch {
                    let gn = &g[n * c_out * b_len..(n + 1) * c_out * b_len];
                    if let Some(db) = db.as_mut() {
                        for (acc, chan) in db.iter_mut().zip(gn.chunks_exact(b_len)) {
                            *acc += kernels::sum(chan);
                        }
                    }
                    if dw.is_none() && dx.is_none() {
                        continue;
                    }
                    geom.im2col(gn, &mut col);
                    let xn = &x[n * c_in * s_len..(n + 1) * c_in * s_len];
                    if let Some(dw) = dw.as_mut() {
                        kernels::gemm_nt_acc_f64(dw, xn, &col, *c_in, rows, s_len);
                    }
                    if let Some(dx) = dx.as_mut() {
                        kernels::gemm_acc(
                            &mut dx[n * c_in * s_len..(n + 1) * c_in * s_len],
                            wt,
                            &col,
                            *c_in,
                            rows,
                            s_len,
                        );
                    }
                }
                accumulate(grads, *input, dx);
                accumulate(grads, *kernel, dw.map(narrow));
                accumulate(grads, *bias, db.map(narrow));
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let xs = self.shape(*input);
                let (n, f_in) = (xs[0], xs[1]);
                let f_out = self.shape(*weight)[0];
                let x = self.value(*input).data();
                let wt = self.value(*weight).data();
                if wants(*input) {
                    let mut dx = vec![T::zero(); n * f_in];
                    kernels::gemm_acc(&mut dx, g, wt, n, f_out, f_in);
                    accumulate(grads, *input, Some(dx));
                }
                if wants(*weight) {
                    let mut dw = vec![0.0f64; f_out * f_in];
                    for (g_row, x_row) in g.chunks_exact(f_out).zip(x.chunks_exact(f_in)) {
                        for (acc_row, &gv) in dw.chunks_exact_mut(f_in).zip(g_row) {
                            if gv == T::zero() {
                                continue;
                            }
                            let gv = gv.widen();
                            for (a, &xv) in acc_row.iter_mut().zip(x_row) {
                                *a += gv * xv.widen();
                            }
                        }
                    }
                    accumulate(grads, *weight, Some(narrow(dw)));
                }
                if wants(*bias) {
                    let mut db = vec![0.0f64; f_out];
                    for g_row in g.chunks_exact(f_out) {
                        for (a, &gv) in db.iter_mut().zip(g_row) {
                            *a += gv.widen();
                        }
                    }
                    accumulate(grads, *bias, Some(narrow(db)));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let d = g
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                accumulate(grads, *x, Some(d));
            }
            Op::Softplus(x) => {
                let xv = self.value(*x).data();
                let d = g.iter().zip(xv).map(|(&g, &v)| g * sigmoid(v)).collect();
                accumulate(grads, *x, Some(d));
            }
            Op::Clamp { input, lo, hi } => {
                let xv = self.value(*input).data();
                let d = g
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v >= *lo && v <= *hi { g } else { T::zero() })
                    .collect();
                accumulate(grads, *input, Some(d));
            }
            Op::Reshape(x) => accumulate(grads, *x, Some(g.to_vec())),
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, Some(g.to_vec()));
                }
                if wants(*b) {
                    accumulate(grads, *b, Some(g.to_vec()));
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, Some(g.to_vec()));
                }
                if wants(*b) {
                    accumulate(grads, *b, Some(g.iter().map(|&v| -v).collect()));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if wants(*a) {
                    accumulate(
                        grads,
                        *a,
                        Some(g.iter().zip(bv).map(|(&g, &y)| g * y).collect()),
                    );
                }
                if wants(*b) {
                    accumulate(
                        grads,
                        *b,
                        Some(g.iter().zip(av).map(|(&g, &x)| g * x).collect()),
                    );
                }
            }
            Op::Scale(x, f) => accumulate(grads, *x, Some(g.iter().map(|&v| v * *f).collect())),
            Op::Exp(x) => {
                let out = node.value.data();
                accumulate(
                    grads,
                    *x,
                    Some(g.iter().zip(out).map(|(&g, &y)| g * y).collect()),
                );
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                accumulate(grads, *x, Some(vec![g[0]; n]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                accumulate(grads, *x, Some(vec![T::of(g[0].widen() / n as f64); n]));
            }
            Op::Reparameterize { mu, log_var, noise } => {
                if wants(*mu) {
                    accumulate(grads, *mu, Some(g.to_vec()));
                }
                if wants(*log_var) {
                    let half = T::of(0.5);
                    let lv = self.value(*log_var).data();
                    let d = g
                        .iter()
                        .zip(lv)
                        .zip(noise)
                        .map(|((&g, &lv), &e)| g * e * half * (half * lv).exp())
                        .collect();
                    accumulate(grads, *log_var, Some(d));
                }
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let scale = 2.0 * g[0].widen() / av.len() as f64;
                let diff: Vec<T> = av
                    .iter()
                    .zip(bv)
                    .map(|(&x, &y)| T::of(scale * (x.widen() - y.widen())))
                    .collect();
                if wants(*b) {
                    accumulate(grads, *b, Some(diff.iter().map(|&v| -v).collect()));
                }
                if wants(*a) {
                    accumulate(grads, *a, Some(diff));
                }
            }
            Op::KlNormal { mu, log_var } => {
                let n = self.shape(*mu)[0] as f64;
                let gs = g[0].widen() / n;
                if wants(*mu) {
                    let d = self
                        .value(*mu)
                        .data()
                        .iter()
                        .map(|&m| T::of(gs * m.widen()))
                        .collect();
                    accumulate(grads, *mu, Some(d));
                }
                if wants(*log_var) {
                    let d = self
                        .value(*log_var)
                        .data()
                        .iter()
                        .map(|&lv| T::of(gs * 0.5 * (Float::exp(lv.widen()) - 1.0)))
                        .collect();
                    accumulate(grads, *log_var, Some(d));
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, contribution: Option<Vec<T>>) {
    let Some(c) = contribution else { return };
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(c) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(c),
    }
}

fn narrow<T: Scalar>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::of).collect()
}

pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// `Σ ½(μ² + e^{lv} − 1 − lv)` in `f64`.
pub(crate) fn kl_sum<T: Scalar>(mu: &[T], log_var: &[T]) -> f64 {
    mu.iter()
        .zip(log_var)
        .map(|(&m, &lv)| {
            let (m, lv) = (m.widen(), lv.widen());
            0.5 * (m * m + Float::exp(lv) - 1.0 - lv)
        })
        .sum()
}
