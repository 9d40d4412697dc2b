use super::kernels::{axpy, axpy4, dot, dot4_acc, matmul_acc, matmul_bias_set, matmul_t_acc};
use super::tensor::Tensor;
use crate::{Error, Real, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValId(usize);

struct Slot {
    data: Vec<Real>,
    shape: Vec<usize>,
}

impl Slot {
    fn numel(&self) -> usize {
        self.data.len()
    }
}

/// One recorded primitive; inputs are slot ids, saved values live in the slots.
enum Record {
    Conv2d { input: ValId, kernels: ValId, bias: ValId },
    Relu { input: ValId },
    Stack3x3 { input: ValId },
    SpatialSoftmax { input: ValId, temperature: Real },
    WeightedPool { features: ValId, weights: ValId },
    BroadcastMul { vector: ValId, map: ValId },
    CoordExpect { probs: ValId },
    Linear { weights: ValId, input: ValId, bias: ValId },
    Reshape { input: ValId },
    MseLoss { pred: ValId, label: Vec<Real> },
}

struct Node {
    out: ValId,
    rec: Record,
}

/// Gradients of one scalar with respect to every reached tape value.
pub struct Gradients {
    slots: Vec<Option<Vec<Real>>>,
}

impl Gradients {
    pub fn grad(&self, id: ValId) -> Option<&[Real]> {
        self.slots[id.0].as_deref()
    }

    /// Gradient for a leaf, densified to zeros when the loss never reached it.
    pub fn grad_or_zeros(&self, id: ValId, numel: usize) -> Vec<Real> {
        match &self.slots[id.0] {
            Some(g) => g.clone(),
            None => vec![0.0; numel],
        }
    }
}

/// Record of primitive applications in topological order.
///
/// A tape and its tensors belong to one worker; forward and backward never
/// run concurrently on the same tape.
#[derive(Default)]
pub struct Tape {
    slots: Vec<Slot>,
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Register a leaf value (parameter or input), snapshotting its data.
    pub fn leaf(&mut self, t: &Tensor) -> Result<ValId> {
        if !t.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        Ok(self.alloc(t.shape().to_vec(), t.data().to_vec()))
    }

    pub fn value(&self, id: ValId) -> &[Real] {
        &self.slots[id.0].data
    }

    pub fn shape(&self, id: ValId) -> &[usize] {
        &self.slots[id.0].shape
    }

    /// Copy a tape value out into an owned tensor.
    pub fn tensor(&self, id: ValId) -> Tensor {
        Tensor::new(self.shape(id).to_vec(), self.value(id).to_vec())
            .expect("slot invariant")
    }

    pub fn num_values(&self) -> usize {
        self.slots.len()
    }

    pub fn num_ops(&self) -> usize {
        self.nodes.len()
    }

    fn alloc(&mut self, shape: Vec<usize>, data: Vec<Real>) -> ValId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let id = ValId(self.slots.len());
        self.slots.push(Slot { data, shape });
        id
    }

    /// Allocate the output slot and record the node, guarding against
    /// non-finite results.
    fn push(
        &mut self,
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<Real>,
        rec_of: impl FnOnce(ValId) -> Record,
    ) -> Result<ValId> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        let out = self.alloc(shape, data);
        self.nodes.push(Node { out, rec: rec_of(out) });
        Ok(out)
    }

    fn dims3(&self, id: ValId, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape(id) {
            [c, h, w] => Ok((*c, *h, *w)),
            s => Err(Error::shape(op, format!("expected C x H x W tensor, got {s:?}"))),
        }
    }

    // ── Primitives ──────────────────────────────────────────────────────

    /// Valid (unpadded) cross-correlation: input `C x H x W`, kernels
    /// `K x C x kh x kw`, bias `K`, output `K x (H-kh+1) x (W-kw+1)`.
    pub fn conv2d_valid(&mut self, input: ValId, kernels: ValId, bias: ValId) -> Result<ValId> {
        let op = "conv2d_valid";
        let (ci, h, w) = self.dims3(input, op)?;
        let (ko, ck, kh, kw) = match self.shape(kernels) {
            [k, c, kh, kw] => (*k, *c, *kh, *kw),
            s => return Err(Error::shape(op, format!("kernels must be K x C x kh x kw, got {s:?}"))),
        };
        if ck != ci {
            return Err(Error::shape(
                op,
                format!("input has {ci} channels but kernels expect {ck}"),
            ));
        }
        if kh > h || kw > w {
            return Err(Error::shape(
                op,
                format!("kernel {kh}x{kw} larger than input {h}x{w}"),
            ));
        }
        if self.shape(bias) != [ko] {
            return Err(Error::shape(
                op,
                format!("bias shape {:?} does not match {ko} kernels", self.shape(bias)),
            ));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let out = conv_forward(
            self.value(input),
            (ci, h, w),
            self.value(kernels),
            (ko, kh, kw),
            self.value(bias),
        );
        self.push(op, vec![ko, oh, ow], out, |_| Record::Conv2d { input, kernels, bias })
    }

    /// 1x1 convolution; same contract as [`Tape::conv2d_valid`] with kh=kw=1.
    pub fn conv1x1(&mut self, input: ValId, kernels: ValId, bias: ValId) -> Result<ValId> {
        match self.shape(kernels) {
            [_, _, 1, 1] => self.conv2d_valid(input, kernels, bias),
            s => Err(Error::shape(
                "conv1x1",
                format!("kernels must be K x C x 1 x 1, got {s:?}"),
            )),
        }
    }

    /// Elementwise max(0, x). Subgradient at 0 is 0.
    pub fn relu(&mut self, input: ValId) -> Result<ValId> {
        let data: Vec<Real> = self.value(input).iter().map(|&v| v.max(0.0)).collect();
        self.push("relu", self.shape(input).to_vec(), data, |_| Record::Relu { input })
    }

    /// Concatenate each pixel's 3x3 neighborhood into channels:
    /// `C x H x W -> 9C x (H-2) x (W-2)` with output channel `c*9+n` holding
    /// input channel `c` at the n-th neighbor in row-major order.
    pub fn stack3x3(&mut self, input: ValId) -> Result<ValId> {
        let op = "stack3x3";
        let (c, h, w) = self.dims3(input, op)?;
        if h < 3 || w < 3 {
            return Err(Error::shape(op, format!("input {h}x{w} smaller than 3x3")));
        }
        let (oh, ow) = (h - 2, w - 2);
        let src = self.value(input);
        let mut out = vec![0.0; 9 * c * oh * ow];
        for ch in 0..c {
            for n in 0..9 {
                let (di, dj) = (n / 3, n % 3);
                for i in 0..oh {
                    let s = &src[(ch * h + i + di) * w + dj..][..ow];
                    out[((ch * 9 + n) * oh + i) * ow..][..ow].copy_from_slice(s);
                }
            }
        }
        self.push(op, vec![9 * c, oh, ow], out, |_| Record::Stack3x3 { input })
    }

    /// Per-channel softmax over the spatial grid, with max subtraction.
    pub fn spatial_softmax(&mut self, input: ValId, temperature: Real) -> Result<ValId> {
        let op = "spatial_softmax";
        let (k, h, w) = self.dims3(input, op)?;
        if temperature <= 0.0 {
            return Err(Error::contract(op, format!("temperature must be positive, got {temperature}")));
        }
        let hw = h * w;
        let src = self.value(input);
        let mut out = vec![0.0; k * hw];
        for ch in 0..k {
            let plane = &src[ch * hw..][..hw];
            let dst = &mut out[ch * hw..][..hw];
            let m = plane.iter().fold(Real::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0;
            for (d, &x) in dst.iter_mut().zip(plane) {
                let e = ((x - m) / temperature).exp();
                *d = e;
                sum += e;
            }
            for d in dst.iter_mut() {
                *d /= sum;
            }
        }
        self.push(op, vec![k, h, w], out, |_| Record::SpatialSoftmax { input, temperature })
    }

    /// Convex combination of feature-map pixels: features `C x H x W` pooled
    /// by weights `1 x H x W` that must be nonnegative and sum to 1.
    pub fn weighted_pool(&mut self, features: ValId, weights: ValId) -> Result<ValId> {
        let op = "weighted_pool";
        let (c, h, w) = self.dims3(features, op)?;
        let (wc, wh, ww) = self.dims3(weights, op)?;
        if wc != 1 || wh != h || ww != w {
            return Err(Error::shape(
                op,
                format!("weights must be 1 x {h} x {w}, got {wc} x {wh} x {ww}"),
            ));
        }
        let wv = self.value(weights);
        if let Some(neg) = wv.iter().find(|&&v| v < 0.0) {
            return Err(Error::contract(op, format!("negative weight {neg}")));
        }
        let sum: Real = wv.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::contract(op, format!("weights sum to {sum}, expected 1")));
        }
        let hw = h * w;
        let fv = self.value(features);
        let out: Vec<Real> = (0..c).map(|ch| dot(&fv[ch * hw..][..hw], wv)).collect();
        self.push(op, vec![c], out, |_| Record::WeightedPool { features, weights })
    }

    /// `out[c, i, j] = vector[c] * map[c, i, j]`.
    pub fn broadcast_mul(&mut self, vector: ValId, map: ValId) -> Result<ValId> {
        let op = "broadcast_mul";
        let (c, h, w) = self.dims3(map, op)?;
        if self.shape(vector) != [c] {
            return Err(Error::shape(
                op,
                format!("vector shape {:?} does not match {c} map channels", self.shape(vector)),
            ));
        }
        let hw = h * w;
        let vv = self.value(vector);
        let mv = self.value(map);
        let mut out = vec![0.0; c * hw];
        for ch in 0..c {
            let v = vv[ch];
            for (o, &m) in out[ch * hw..][..hw].iter_mut().zip(&mv[ch * hw..][..hw]) {
                *o = v * m;
            }
        }
        self.push(op, vec![c, h, w], out, |_| Record::BroadcastMul { vector, map })
    }

    /// Expected grid coordinates under per-channel probability maps:
    /// `K x H x W -> K x 2` with row k holding
    /// `(sum p*i / (H-1), sum p*j / (W-1))`.
    fn coord_expect(&mut self, probs: ValId) -> Result<ValId> {
        let op = "softargmax";
        let (k, h, w) = self.dims3(probs, op)?;
        let (den_i, den_j) = (coord_denom(h), coord_denom(w));
        let pv = self.value(probs);
        let mut out = vec![0.0; k * 2];
        for ch in 0..k {
            let (mut pi, mut pj) = (0.0, 0.0);
            for i in 0..h {
                let row = &pv[(ch * h + i) * w..][..w];
                let mut rs = 0.0;
                for (j, &p) in row.iter().enumerate() {
                    rs += p;
                    pj += p * (j as Real / den_j);
                }
                pi += rs * (i as Real / den_i);
            }
            out[ch * 2] = pi;
            out[ch * 2 + 1] = pj;
        }
        self.push(op, vec![k, 2], out, |_| Record::CoordExpect { probs })
    }

    /// Differentiable argmax: spatial softmax followed by the coordinate
    /// expectation, indices normalized so corners map to 0 and 1.
    pub fn softargmax(&mut self, scores: ValId, temperature: Real) -> Result<ValId> {
        Ok(self.softargmax_with_probs(scores, temperature)?.1)
    }

    /// As [`Tape::softargmax`], also returning the intermediate per-channel
    /// probability maps for inspection and visualization.
    pub fn softargmax_with_probs(
        &mut self,
        scores: ValId,
        temperature: Real,
    ) -> Result<(ValId, ValId)> {
        let probs = self.spatial_softmax(scores, temperature)?;
        let coords = self.coord_expect(probs)?;
        Ok((probs, coords))
    }

    /// `weights (M x N) * input (numel N) + bias (M)`.
    pub fn linear(&mut self, weights: ValId, input: ValId, bias: ValId) -> Result<ValId> {
        let op = "linear";
        let (m, n) = match self.shape(weights) {
            [m, n] => (*m, *n),
            s => return Err(Error::shape(op, format!("weights must be M x N, got {s:?}"))),
        };
        let in_numel = self.slots[input.0].numel();
        if in_numel != n {
            return Err(Error::shape(
                op,
                format!("input has {in_numel} elements but weights expect {n}"),
            ));
        }
        if self.shape(bias) != [m] {
            return Err(Error::shape(
                op,
                format!("bias shape {:?} does not match {m} outputs", self.shape(bias)),
            ));
        }
        let wv = self.value(weights);
        let iv = self.value(input);
        let bv = self.value(bias);
        let out: Vec<Real> = (0..m).map(|r| bv[r] + dot(&wv[r * n..][..n], iv)).collect();
        self.push(op, vec![m], out, |_| Record::Linear { weights, input, bias })
    }

    /// View a value under a new shape with identical element count.
    pub fn reshape(&mut self, input: ValId, shape: Vec<usize>) -> Result<ValId> {
        let numel: usize = shape.iter().product();
        if numel != self.slots[input.0].numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(input)),
            ));
        }
        let data = self.value(input).to_vec();
        self.push("reshape", shape, data, |_| Record::Reshape { input })
    }

    /// Mean over the batch of squared L2 distance between predictions and
    /// labels in normalized coordinates. Accepts `B x 2` or a single `2`.
    pub fn mse_loss(&mut self, pred: ValId, label: &Tensor) -> Result<ValId> {
        let op = "mse_loss";
        let shape = self.shape(pred).to_vec();
        let batch = match shape.as_slice() {
            [2] => 1,
            [b, 2] => *b,
            s => return Err(Error::shape(op, format!("predictions must be B x 2, got {s:?}"))),
        };
        if label.shape() != shape.as_slice() {
            return Err(Error::shape(
                op,
                format!("label shape {:?} does not match predictions {shape:?}", label.shape()),
            ));
        }
        let pv = self.value(pred);
        let lv = label.data();
        let sum: Real = pv.iter().zip(lv).map(|(p, l)| (p - l) * (p - l)).sum();
        let loss = sum / batch as Real;
        self.push(op, vec![1], vec![loss], |_| Record::MseLoss {
            pred,
            label: lv.to_vec(),
        })
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss; visits each node exactly once and
    /// returns accumulated gradients for every reached value.
    pub fn backward(&self, loss: ValId) -> Result<Gradients> {
        if self.slots[loss.0].numel() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<Real>>> = vec![None; self.slots.len()];
        grads[loss.0] = Some(vec![1.0]);
        for node in self.nodes.iter().rev() {
            if grads[node.out.0].is_none() {
                continue;
            }
            let g = grads[node.out.0].take().expect("checked above");
            self.backprop_node(&node.rec, node.out, &g, &mut grads);
            // Keep the output gradient available for callers inspecting
            // intermediate values.
            grads[node.out.0] = Some(g);
        }
        Ok(Gradients { slots: grads })
    }

    fn backprop_node(
        &self,
        rec: &Record,
        out: ValId,
        g: &[Real],
        grads: &mut [Option<Vec<Real>>],
    ) {
        match rec {
            Record::Conv2d { input, kernels, bias } => {
                let (ci, h, w) = match self.shape(*input) {
                    [c, h, w] => (*c, *h, *w),
                    _ => unreachable!(),
                };
                let (ko, kh, kw) = match self.shape(*kernels) {
                    [k, _, kh, kw] => (*k, *kh, *kw),
                    _ => unreachable!(),
                };
                // input, kernels, and bias have pairwise different shapes,
                // so they are distinct slots; take all three accumulators
                // out, fill them, and put them back.
                let mut d_in = take_or_zeros(grads, *input, ci * h * w);
                let mut d_ker = take_or_zeros(grads, *kernels, ko * ci * kh * kw);
                let mut d_bias = take_or_zeros(grads, *bias, ko);
                conv_backward(
                    self.value(*input),
                    (ci, h, w),
                    self.value(*kernels),
                    (ko, kh, kw),
                    g,
                    &mut d_in,
                    &mut d_ker,
                    &mut d_bias,
                );
                grads[input.0] = Some(d_in);
                grads[kernels.0] = Some(d_ker);
                grads[bias.0] = Some(d_bias);
            }
            Record::Relu { input } => {
                let src = self.value(*input);
                let d = ensure(grads, *input, src.len());
                for ((di, &x), &gi) in d.iter_mut().zip(src).zip(g) {
                    if x > 0.0 {
                        *di += gi;
                    }
                }
            }
            Record::Stack3x3 { input } => {
                let (c, h, w) = match self.shape(*input) {
                    [c, h, w] => (*c, *h, *w),
                    _ => unreachable!(),
                };
                let (oh, ow) = (h - 2, w - 2);
                let d = ensure(grads, *input, c * h * w);
                for ch in 0..c {
                    for n in 0..9 {
                        let (di, dj) = (n / 3, n % 3);
                        for i in 0..oh {
                            let gs = &g[((ch * 9 + n) * oh + i) * ow..][..ow];
                            axpy(&mut d[(ch * h + i + di) * w + dj..][..ow], 1.0, gs);
                        }
                    }
                }
            }
            Record::SpatialSoftmax { input, temperature } => {
                let (k, h, w) = match self.shape(out) {
                    [k, h, w] => (*k, *h, *w),
                    _ => unreachable!(),
                };
                let hw = h * w;
                let y = self.value(out);
                let d = ensure(grads, *input, k * hw);
                for ch in 0..k {
                    let yp = &y[ch * hw..][..hw];
                    let gp = &g[ch * hw..][..hw];
                    let inner = dot(yp, gp);
                    let dp = &mut d[ch * hw..][..hw];
                    for j in 0..hw {
                        dp[j] += yp[j] * (gp[j] - inner) / temperature;
                    }
                }
            }
            Record::WeightedPool { features, weights } => {
                let (c, h, w) = match self.shape(*features) {
                    [c, h, w] => (*c, *h, *w),
                    _ => unreachable!(),
                };
                let hw = h * w;
                let fv = self.value(*features);
                let wv = self.value(*weights).to_vec();
                {
                    let df = ensure(grads, *features, c * hw);
                    for ch in 0..c {
                        axpy(&mut df[ch * hw..][..hw], g[ch], &wv);
                    }
                }
                let dw = ensure(grads, *weights, hw);
                for ch in 0..c {
                    axpy(dw, g[ch], &fv[ch * hw..][..hw]);
                }
            }
            Record::BroadcastMul { vector, map } => {
                let (c, h, w) = match self.shape(*map) {
                    [c, h, w] => (*c, *h, *w),
                    _ => unreachable!(),
                };
                let hw = h * w;
                let vv = self.value(*vector).to_vec();
                let mv = self.value(*map);
                {
                    let dv = ensure(grads, *vector, c);
                    for ch in 0..c {
                        dv[ch] += dot(&g[ch * hw..][..hw], &mv[ch * hw..][..hw]);
                    }
                }
                let dm = ensure(grads, *map, c * hw);
                for ch in 0..c {
                    axpy(&mut dm[ch * hw..][..hw], vv[ch], &g[ch * hw..][..hw]);
                }
            }
            Record::CoordExpect { probs } => {
                let (k, h, w) = match self.shape(*probs) {
                    [k, h, w] => (*k, *h, *w),
                    _ => unreachable!(),
                };
                let (den_i, den_j) = (coord_denom(h), coord_denom(w));
                let d = ensure(grads, *probs, k * h * w);
                for ch in 0..k {
                    let (gi, gj) = (g[ch * 2], g[ch * 2 + 1]);
                    for i in 0..h {
                        let base = gi * (i as Real / den_i);
                        let row = &mut d[(ch * h + i) * w..][..w];
                        for (j, dj_) in row.iter_mut().enumerate() {
                            *dj_ += base + gj * (j as Real / den_j);
                        }
                    }
                }
            }
            Record::Linear { weights, input, bias } => {
                let (m, n) = match self.shape(*weights) {
                    [m, n] => (*m, *n),
                    _ => unreachable!(),
                };
                let wv = self.value(*weights);
                let iv = self.value(*input);
                {
                    let di = ensure(grads, *input, n);
                    for r in 0..m {
                        axpy(di, g[r], &wv[r * n..][..n]);
                    }
                }
                {
                    let dw = ensure(grads, *weights, m * n);
                    for r in 0..m {
                        axpy(&mut dw[r * n..][..n], g[r], iv);
                    }
                }
                let db = ensure(grads, *bias, m);
                axpy(db, 1.0, g);
            }
            Record::Reshape { input } => {
                let d = ensure(grads, *input, g.len());
                axpy(d, 1.0, g);
            }
            Record::MseLoss { pred, label } => {
                let pv = self.value(*pred);
                let batch = (pv.len() / 2) as Real;
                let d = ensure(grads, *pred, pv.len());
                let scale = 2.0 * g[0] / batch;
                for ((di, &p), &l) in d.iter_mut().zip(pv).zip(label) {
                    *di += scale * (p - l);
                }
            }
        }
    }
}

fn ensure(grads: &mut [Option<Vec<Real>>], id: ValId, numel: usize) -> &mut Vec<Real> {
    grads[id.0].get_or_insert_with(|| vec![0.0; numel])
}

fn take_or_zeros(grads: &mut [Option<Vec<Real>>], id: ValId, numel: usize) -> Vec<Real> {
    grads[id.0].take().unwrap_or_else(|| vec![0.0; numel])
}

/// Softargmax index normalization; a singleton axis maps to coordinate 0.
fn coord_denom(dim: usize) -> Real {
    (dim.max(2) - 1) as Real
}

fn conv_forward(
    inp: &[Real],
    (ci, h, w): (usize, usize, usize),
    ker: &[Real],
    (ko, kh, kw): (usize, usize, usize),
    bias: &[Real],
) -> Vec<Real> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    // A 1x1 convolution is a channel matmul over the flattened spatial axis;
    // the register-blocked kernel is much faster than the tap loop.
    if kh == 1 && kw == 1 {
        let mut out = vec![0.0; ko * oh * ow];
        matmul_bias_set(&mut out, ker, inp, bias, ko, ci, h * w);
        return out;
    }
    let taps = tap_list(ci, kh, kw);
    let tn = taps.len();
    let row = |c: usize, r: usize, dj: usize| &inp[(c * h + r) * w + dj..][..ow];
    let mut out = vec![0.0; ko * oh * ow];
    for k in 0..ko {
        let wbase = k * tn;
        let plane = &mut out[k * oh * ow..][..oh * ow];
        plane.fill(bias[k]);
        for i in 0..oh {
            let dst = &mut plane[i * ow..][..ow];
            let mut t = 0;
            while t + 4 <= tn {
                let (c0, d0, e0) = taps[t];
                let (c1, d1, e1) = taps[t + 1];
                let (c2, d2, e2) = taps[t + 2];
                let (c3, d3, e3) = taps[t + 3];
                axpy4(
                    dst,
                    ker[wbase + t],
                    row(c0, i + d0, e0),
                    ker[wbase + t + 1],
                    row(c1, i + d1, e1),
                    ker[wbase + t + 2],
                    row(c2, i + d2, e2),
                    ker[wbase + t + 3],
                    row(c3, i + d3, e3),
                );
                t += 4;
            }
            while t < tn {
                let (c, di, dj) = taps[t];
                axpy(dst, ker[wbase + t], row(c, i + di, dj));
                t += 1;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    inp: &[Real],
    (ci, h, w): (usize, usize, usize),
    ker: &[Real],
    (ko, kh, kw): (usize, usize, usize),
    g: &[Real],
    d_in: &mut [Real],
    d_ker: &mut [Real],
    d_bias: &mut [Real],
) {
    let (oh, ow) = (h - kh + 1, w - kw + 1);

    for k in 0..ko {
        d_bias[k] += g[k * oh * ow..][..oh * ow].iter().sum::<Real>();
    }

    // 1x1 case: input gradient is the transposed channel matmul, kernel
    // gradient the gradient-by-input row dot products.
    if kh == 1 && kw == 1 {
        let mut ker_t = vec![0.0; ci * ko];
        for k in 0..ko {
            for c in 0..ci {
                ker_t[c * ko + k] = ker[k * ci + c];
            }
        }
        matmul_acc(d_in, &ker_t, g, ci, ko, h * w);
        matmul_t_acc(d_ker, g, inp, ko, ci, h * w);
        return;
    }

    let taps = tap_list(ci, kh, kw);
    let tn = taps.len();
    let g_row = |k: usize, i: usize| &g[(k * oh + i) * ow..][..ow];
    let in_row = |c: usize, r: usize, dj: usize| &inp[(c * h + r) * w + dj..][..ow];

    // d_in[c, i+di, j+dj] += ker[k, t] * g[k, i, j], blocked over k.
    for (t, &(c, di, dj)) in taps.iter().enumerate() {
        let mut k = 0;
        while k + 4 <= ko {
            for i in 0..oh {
                axpy4(
                    &mut d_in[(c * h + i + di) * w + dj..][..ow],
                    ker[k * tn + t],
                    g_row(k, i),
                    ker[(k + 1) * tn + t],
                    g_row(k + 1, i),
                    ker[(k + 2) * tn + t],
                    g_row(k + 2, i),
                    ker[(k + 3) * tn + t],
                    g_row(k + 3, i),
                );
            }
            k += 4;
        }
        while k < ko {
            for i in 0..oh {
                axpy(
                    &mut d_in[(c * h + i + di) * w + dj..][..ow],
                    ker[k * tn + t],
                    g_row(k, i),
                );
            }
            k += 1;
        }
    }

    // d_ker[k, t] += sum_i g[k, i, :] . in[tap t shifted by i], blocked over taps.
    for k in 0..ko {
        let mut t = 0;
        while t + 4 <= tn {
            let (c0, d0, e0) = taps[t];
            let (c1, d1, e1) = taps[t + 1];
            let (c2, d2, e2) = taps[t + 2];
            let (c3, d3, e3) = taps[t + 3];
            let mut acc = [0.0; 4];
            for i in 0..oh {
                dot4_acc(
                    &mut acc,
                    g_row(k, i),
                    in_row(c0, i + d0, e0),
                    in_row(c1, i + d1, e1),
                    in_row(c2, i + d2, e2),
                    in_row(c3, i + d3, e3),
                );
            }
            for q in 0..4 {
                d_ker[k * tn + t + q] += acc[q];
            }
            t += 4;
        }
        while t < tn {
            let (c, di, dj) = taps[t];
            let mut acc = 0.0;
            for i in 0..oh {
                acc += dot(g_row(k, i), in_row(c, i + di, dj));
            }
            d_ker[k * tn + t] += acc;
            t += 1;
        }
    }
}

/// Kernel taps in `[C, kh, kw]` row-major order, matching kernel layout.
fn tap_list(ci: usize, kh: usize, kw: usize) -> Vec<(usize, usize, usize)> {
    let mut taps = Vec::with_capacity(ci * kh * kw);
    for c in 0..ci {
        for di in 0..kh {
            for dj in 0..kw {
                taps.push((c, di, dj));
            }
        }
    }
    taps
}
