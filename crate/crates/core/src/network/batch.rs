//! Batched jet propagation through the MLP with a hand-derived reverse sweep.
//!
//! Points are processed in fixed-size chunks. Inside a chunk every jet slot
//! of every point is one row of a stacked `(slots · n) × width` matrix, so
//! each dense layer is a single GEMM for all slots. The reverse sweep
//! differentiates the slot propagation itself, giving parameter gradients
//! of any loss built from `(u, u_x, u_xx, u_xxx, u_t)`. Chunks are reduced
//! in index order, so results do not depend on scheduling.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};

use super::Mlp;
use crate::autodiff::Jet;

const CHUNK: usize = 256;

/// Slot indices inside [`JetColumns`].
pub const SLOT_V: usize = 0;
pub const SLOT_X: usize = 1;
pub const SLOT_XX: usize = 2;
pub const SLOT_XXX: usize = 3;
pub const SLOT_T: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub t: f64,
    pub x: f64,
}

impl Point {
    pub fn new(t: f64, x: f64) -> Self {
        Point { t, x }
    }
}

/// Which derivative slots to propagate. Each level is closed under the
/// chain rule: `First` = (u, u_x), `Second` adds u_xx, `Full` adds u_xxx
/// and u_t.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
    Full,
}

impl Order {
    pub fn slots(self) -> usize {
        match self {
            Order::Value => 1,
            Order::First => 2,
            Order::Second => 3,
            Order::Full => 5,
        }
    }
}

/// Jets of many points stored slot-major: `data[slot * n + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JetColumns {
    order: Order,
    n: usize,
    data: Vec<f64>,
}

impl JetColumns {
    pub fn zeros(order: Order, n: usize) -> Self {
        JetColumns {
            order,
            n,
            data: vec![0.0; order.slots() * n],
        }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn slot(&self, s: usize) -> &[f64] {
        &self.data[s * self.n..(s + 1) * self.n]
    }

    pub fn slot_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.n..(s + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        self.slot(SLOT_V)
    }

    /// Jet of point `i`; slots outside the order read as zero.
    pub fn jet(&self, i: usize) -> Jet {
        let get = |s: usize| {
            if s < self.order.slots() {
                self.data[s * self.n + i]
            } else {
                0.0
            }
        };
        Jet::new(get(SLOT_V), get(SLOT_T), get(SLOT_X), get(SLOT_XX), get(SLOT_XXX))
    }

    fn range(&self, start: usize, len: usize) -> JetColumns {
        let mut out = JetColumns::zeros(self.order, len);
        for s in 0..self.order.slots() {
            out.slot_mut(s)
                .copy_from_slice(&self.slot(s)[start..start + len]);
        }
        out
    }

    fn write_range(&mut self, start: usize, chunk: &JetColumns) {
        for s in 0..self.order.slots() {
            self.slot_mut(s)[start..start + chunk.n].copy_from_slice(chunk.slot(s));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Activations recorded for one chunk.
struct ChunkTape {
    n: usize,
    slots: usize,
    pre: Vec<Array2<f64>>,
    act: Vec<Array2<f64>>,
}

impl Mlp {
    fn weight_view(&self, k: usize) -> ArrayView2<'_, f64> {
        let l = &self.layers()[k];
        ArrayView2::from_shape((l.fan_in, l.fan_out), &self.flatten()[l.weights..l.bias])
            .expect("layer shape")
    }

    fn forward_chunk(&self, pts: &[Point], order: Order) -> (ChunkTape, JetColumns) {
        let n = pts.len();
        let slots = order.slots();
        let depth = self.depth();
        let width = self.width();
        let p = self.flatten();
        let first = self.layers()[0];
        let mut pre = Vec::with_capacity(depth);
        let mut act = Vec::with_capacity(depth);

        let mut z = Array2::<f64>::zeros((slots * n, width));
        {
            let zs = z.as_slice_mut().expect("contiguous");
            let wt = &p[first.weights..first.weights + width];
            let wx = &p[first.weights + width..first.bias];
            let b = &p[first.bias..first.end()];
            for (i, pt) in pts.iter().enumerate() {
                let row = &mut zs[i * width..(i + 1) * width];
                for j in 0..width {
                    row[j] = pt.t * wt[j] + pt.x * wx[j] + b[j];
                }
            }
            if slots >= 2 {
                for i in 0..n {
                    zs[(SLOT_X * n + i) * width..][..width].copy_from_slice(wx);
                }
            }
            if slots == 5 {
                for i in 0..n {
                    zs[(SLOT_T * n + i) * width..][..width].copy_from_slice(wt);
                }
            }
        }
        for k in 0..depth {
            if k > 0 {
                let prev: &Array2<f64> = &act[k - 1];
                let mut next = prev.dot(&self.weight_view(k));
                let l = self.layers()[k];
                let bias = ArrayView1::from(&p[l.bias..l.end()]);
                next.slice_mut(s![0..n, ..])
                    .rows_mut()
                    .into_iter()
                    .for_each(|mut r| r += &bias);
                z = next;
            }
            let a = self.activate(&z, n, slots);
            pre.push(z.clone());
            act.push(a);
        }
        let out_layer = self.layers()[depth];
        let w_out = ArrayView1::from(&p[out_layer.weights..out_layer.bias]);
        let u = act[depth - 1].dot(&w_out);
        let mut out = JetColumns::zeros(order, n);
        out.data.copy_from_slice(u.as_slice().expect("contiguous"));
        let b_out = p[out_layer.bias];
        out.slot_mut(SLOT_V).iter_mut().for_each(|v| *v += b_out);
        (
            ChunkTape {
                n,
                slots,
                pre,
                act,
            },
            out,
        )
    }

    fn activate(&self, z: &Array2<f64>, n: usize, slots: usize) -> Array2<f64> {
        let width = z.ncols();
        let mut a = Array2::<f64>::zeros(z.raw_dim());
        let zs = z.as_slice().expect("contiguous");
        let as_ = a.as_slice_mut().expect("contiguous");
        let at = |s: usize, i: usize, j: usize| (s * n + i) * width + j;
        for i in 0..n {
            for j in 0..width {
                let d = self.activation().derivatives(zs[at(SLOT_V, i, j)]);
                as_[at(SLOT_V, i, j)] = d[0];
                if slots >= 2 {
                    let zx = zs[at(SLOT_X, i, j)];
                    as_[at(SLOT_X, i, j)] = d[1] * zx;
                    if slots >= 3 {
                        let zxx = zs[at(SLOT_XX, i, j)];
                        as_[at(SLOT_XX, i, j)] = d[2] * zx * zx + d[1] * zxx;
                        if slots == 5 {
                            let zxxx = zs[at(SLOT_XXX, i, j)];
                            as_[at(SLOT_XXX, i, j)] =
                                d[3] * zx * zx * zx + 3.0 * d[2] * zx * zxx + d[1] * zxxx;
                            as_[at(SLOT_T, i, j)] = d[1] * zs[at(SLOT_T, i, j)];
                        }
                    }
                }
            }
        }
        a
    }

    /// Pulls adjoints of the activation outputs back to the pre-activations.
    fn activate_backward(&self, z: &Array2<f64>, abar: &Array2<f64>, n: usize, slots: usize) -> Array2<f64> {
        let width = z.ncols();
        let mut zbar = Array2::<f64>::zeros(z.raw_dim());
        let zs = z.as_slice().expect("contiguous");
        let ab = abar.as_slice().expect("contiguous");
        let zb = zbar.as_slice_mut().expect("contiguous");
        let at = |s: usize, i: usize, j: usize| (s * n + i) * width + j;
        for i in 0..n {
            for j in 0..width {
                let d = self.activation().derivatives(zs[at(SLOT_V, i, j)]);
                let mut bv = d[1] * ab[at(SLOT_V, i, j)];
                if slots >= 2 {
                    let zx = zs[at(SLOT_X, i, j)];
                    let ax = ab[at(SLOT_X, i, j)];
                    bv += d[2] * zx * ax;
                    let mut bx = d[1] * ax;
                    if slots >= 3 {
                        let zxx = zs[at(SLOT_XX, i, j)];
                        let axx = ab[at(SLOT_XX, i, j)];
                        bv += (d[3] * zx * zx + d[2] * zxx) * axx;
                        bx += 2.0 * d[2] * zx * axx;
                        let mut bxx = d[1] * axx;
                        if slots == 5 {
                            let zxxx = zs[at(SLOT_XXX, i, j)];
                            let zt = zs[at(SLOT_T, i, j)];
                            let axxx = ab[at(SLOT_XXX, i, j)];
                            let a_t = ab[at(SLOT_T, i, j)];
                            bv += (d[4] * zx * zx * zx + 3.0 * d[3] * zx * zxx + d[2] * zxxx) * axxx
                                + d[2] * zt * a_t;
                            bx += (3.0 * d[3] * zx * zx + 3.0 * d[2] * zxx) * axxx;
                            bxx += 3.0 * d[2] * zx * axxx;
                            zb[at(SLOT_XXX, i, j)] = d[1] * axxx;
                            zb[at(SLOT_T, i, j)] = d[1] * a_t;
                        }
                        zb[at(SLOT_XX, i, j)] = bxx;
                    }
                    zb[at(SLOT_X, i, j)] = bx;
                }
                zb[at(SLOT_V, i, j)] = bv;
            }
        }
        zbar
    }

    fn backward_chunk(&self, pts: &[Point], tape: &ChunkTape, ubar: &JetColumns, grad: &mut [f64]) {
        let n = tape.n;
        let slots = tape.slots;
        let depth = self.depth();
        let width = self.width();
        let layers = self.layers().to_vec();

        // Output layer.
        let out_layer = layers[depth];
        let w_out = ArrayView1::from(&self.flatten()[out_layer.weights..out_layer.bias]).to_owned();
        let ub = ArrayView1::from(&ubar.data[..]);
        {
            let gw = tape.act[depth - 1].t().dot(&ub);
            for (g, v) in grad[out_layer.weights..out_layer.bias].iter_mut().zip(gw.iter()) {
                *g += v;
            }
            grad[out_layer.bias] += ubar.slot(SLOT_V).iter().sum::<f64>();
        }
        let mut abar = Array2::<f64>::zeros((slots * n, width));
        for (r, mut row) in abar.rows_mut().into_iter().enumerate() {
            let u = ubar.data[r];
            if u != 0.0 {
                row.scaled_add(u, &w_out);
            }
        }

        for k in (0..depth).rev() {
            let zbar = self.activate_backward(&tape.pre[k], &abar, n, slots);
            let l = layers[k];
            {
                let colsum = zbar.slice(s![0..n, ..]).sum_axis(Axis(0));
                for (g, v) in grad[l.bias..l.end()].iter_mut().zip(colsum.iter()) {
                    *g += v;
                }
            }
            if k > 0 {
                let mut gw = ArrayViewMut2::from_shape((l.fan_in, l.fan_out), &mut grad[l.weights..l.bias])
                    .expect("layer shape");
                general_mat_mul(1.0, &tape.act[k - 1].t(), &zbar, 1.0, &mut gw);
                abar = zbar.dot(&self.weight_view(k).t());
            } else {
                let zb = zbar.as_slice().expect("contiguous");
                let (gt, gx) = grad[l.weights..l.bias].split_at_mut(width);
                for (i, pt) in pts.iter().enumerate() {
                    let row = &zb[i * width..(i + 1) * width];
                    for j in 0..width {
                        gt[j] += row[j] * pt.t;
                        gx[j] += row[j] * pt.x;
                    }
                }
                if slots >= 2 {
                    for i in 0..n {
                        let row = &zb[(SLOT_X * n + i) * width..][..width];
                        for j in 0..width {
                            gx[j] += row[j];
                        }
                    }
                }
                if slots == 5 {
                    for i in 0..n {
                        let row = &zb[(SLOT_T * n + i) * width..][..width];
                        for j in 0..width {
                            gt[j] += row[j];
                        }
                    }
                }
            }
        }
    }

    /// Jets of `u_θ` at every point, up to `order`.
    pub fn eval_batch(&self, points: &[Point], order: Order) -> JetColumns {
        let mut out = JetColumns::zeros(order, points.len());
        for (c, pts) in points.chunks(CHUNK).enumerate() {
            let (_, jets) = self.forward_chunk(pts, order);
            out.write_range(c * CHUNK, &jets);
        }
        out
    }

    /// Plain values `u_θ` at every point.
    pub fn eval_values(&self, points: &[Point]) -> Vec<f64> {
        self.eval_batch(points, Order::Value).data
    }

    /// Accumulates `Σ_i Σ_s adjoint[s][i] · ∂jet[s][i]/∂θ` into `grad`.
    pub fn backprop_batch(&self, points: &[Point], adjoint: &JetColumns, grad: &mut [f64]) {
        assert_eq!(points.len(), adjoint.len(), "adjoint length");
        assert_eq!(grad.len(), self.num_params(), "gradient length");
        let order = adjoint.order();
        for (c, pts) in points.chunks(CHUNK).enumerate() {
            let (tape, _) = self.forward_chunk(pts, order);
            let ubar = adjoint.range(c * CHUNK, pts.len());
            self.backward_chunk(pts, &tape, &ubar, grad);
        }
    }

    /// Forward and reverse in one pass for losses whose adjoints are local
    /// to each point. `adjoint_of(offset, jets, adjoint)` fills the adjoint
    /// for the chunk starting at `offset`; chunks arrive in index order.
    pub fn forward_backward_local<F>(&self, points: &[Point], order: Order, grad: &mut [f64], mut adjoint_of: F)
    where
        F: FnMut(usize, &JetColumns, &mut JetColumns),
    {
        assert_eq!(grad.len(), self.num_params(), "gradient length");
        for (c, pts) in points.chunks(CHUNK).enumerate() {
            let (tape, jets) = self.forward_chunk(pts, order);
            let mut ubar = JetColumns::zeros(order, pts.len());
            adjoint_of(c * CHUNK, &jets, &mut ubar);
            self.backward_chunk(pts, &tape, &ubar, grad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::network::Activation;

    fn points(n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| {
                let s = i as f64;
                Point::new(0.37 * (s * 0.61).sin().abs(), 2.0 * (s * 1.3).cos())
            })
            .collect()
    }

    #[test]
    fn batch_jets_match_scalar_jets() {
        for activation in [Activation::Sine, Activation::Tanh] {
            let net = Mlp::init_with(5, 3, 9, activation).unwrap();
            let pts = points(CHUNK + 37);
            let jets = net.eval_batch(&pts, Order::Full);
            for (i, p) in pts.iter().enumerate() {
                let want = net.forward_jet(p.t, p.x).to_array();
                let got = jets.jet(i).to_array();
                for (a, b) in got.iter().zip(want) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
            let lower = net.eval_batch(&pts, Order::First);
            assert_eq!(lower.slot(SLOT_V), jets.slot(SLOT_V));
            assert_eq!(lower.slot(SLOT_X), jets.slot(SLOT_X));
        }
    }

    #[test]
    fn batch_gradient_matches_tape() {
        // Loss = Σ_i Σ_s c_{s,i} · jet_s(p_i) with arbitrary coefficients.
        for activation in [Activation::Sine, Activation::Tanh] {
            let net = Mlp::init_with(9, 2, 6, activation).unwrap();
            let pts = points(CHUNK + 5);
            let mut adj = JetColumns::zeros(Order::Full, pts.len());
            for s in 0..5 {
                for (i, a) in adj.slot_mut(s).iter_mut().enumerate() {
                    *a = ((i * 7 + s * 3) as f64 * 0.37).sin();
                }
            }
            let mut grad = vec![0.0; net.num_params()];
            net.backprop_batch(&pts, &adj, &mut grad);

            let tape = Tape::new();
            let params = net.register(&tape);
            let mut terms = Vec::new();
            for (i, p) in pts.iter().enumerate() {
                let j = net.forward_jet_with(&params, p.t, p.x);
                let c = adj.jet(i);
                terms.push(j.v.scale(c.v));
                terms.push(j.vt.scale(c.vt));
                terms.push(j.vx.scale(c.vx));
                terms.push(j.vxx.scale(c.vxx));
                terms.push(j.vxxx.scale(c.vxxx));
            }
            let loss = crate::autodiff::Var::sum(&tape, terms);
            let want = tape.backward(loss).unwrap();
            for (a, b) in grad.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn local_pass_matches_two_pass() {
        let net = Mlp::init(3, 2, 5).unwrap();
        let pts = points(300);
        let jets = net.eval_batch(&pts, Order::Second);
        let mut adj = JetColumns::zeros(Order::Second, pts.len());
        for s in 0..3 {
            let src = jets.slot(s).to_vec();
            adj.slot_mut(s).copy_from_slice(&src);
        }
        let mut g1 = vec![0.0; net.num_params()];
        net.backprop_batch(&pts, &adj, &mut g1);
        let mut g2 = vec![0.0; net.num_params()];
        net.forward_backward_local(&pts, Order::Second, &mut g2, |_, j, a| {
            for s in 0..3 {
                a.slot_mut(s).copy_from_slice(j.slot(s));
            }
        });
        assert_eq!(g1, g2);
    }
}
