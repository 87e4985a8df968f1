use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{matmul_acc, matmul_tn_acc, DenseMatrix};
use crate::error::{Error, Result};
use crate::graphbuild::SensingGraph;

pub const DEFAULT_HIDDEN: usize = 64;
pub const CONV_LAYERS: usize = 3;

/// Weights `in x out` plus a bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DenseMatrix,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Dense {
            w: DenseMatrix::zeros(input, output),
            b: vec![0.0; output],
        }
    }

    fn uniform(input: usize, output: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..input * output).map(|_| rng.random_range(-bound..bound)).collect();
        Dense {
            w: DenseMatrix::from_vec(input, output, data),
            b: vec![0.0; output],
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.rows()
    }

    pub fn outputs(&self) -> usize {
        self.w.cols()
    }
}

/// Every trainable tensor of the network; also used for gradients and
/// optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub convs: [Dense; CONV_LAYERS],
    pub head: Dense,
}

impl Params {
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims { in_dim, hidden, classes } = dims;
        Params {
            convs: [Dense::zeros(in_dim, hidden), Dense::zeros(hidden, hidden), Dense::zeros(hidden, hidden)],
            head: Dense::zeros(hidden, classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params::zeros(self.dims())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            in_dim: self.convs[0].inputs(),
            hidden: self.head.inputs(),
            classes: self.head.outputs(),
        }
    }

    /// Tensors in a fixed order: conv1 W, b, conv2 W, b, conv3 W, b, head W, b.
    pub fn tensors(&self) -> [&[f64]; 8] {
        let [c1, c2, c3] = &self.convs;
        [
            c1.w.data(),
            &c1.b,
            c2.w.data(),
            &c2.b,
            c3.w.data(),
            &c3.b,
            self.head.w.data(),
            &self.head.b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        let [c1, c2, c3] = &mut self.convs;
        [
            c1.w.data_mut(),
            &mut c1.b,
            c2.w.data_mut(),
            &mut c2.b,
            c3.w.data_mut(),
            &mut c3.b,
            self.head.w.data_mut(),
            &mut self.head.b,
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub in_dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden == 0 || self.classes < 2 {
            return Err(Error::InvalidInput(format!(
                "model dims must be positive with at least 2 classes: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RainNetModel {
    /// Histogram bins per metric of the features the model was built for.
    pub k: usize,
    /// Gaussian edge-kernel bandwidth, km.
    pub sigma_e_km: f64,
    pub params: Params,
}

impl RainNetModel {
    /// Uniform fan-in init: He bound `sqrt(6 / fan_in)` for the ReLU layers,
    /// `1 / sqrt(fan_in)` for the head. Biases start at zero.
    pub fn init(k: usize, dims: ModelDims, sigma_e_km: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        check_sigma(sigma_e_km)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ModelDims { in_dim, hidden, classes } = dims;
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        let convs = [
            Dense::uniform(in_dim, hidden, he(in_dim), &mut rng),
            Dense::uniform(hidden, hidden, he(hidden), &mut rng),
            Dense::uniform(hidden, hidden, he(hidden), &mut rng),
        ];
        let head = Dense::uniform(hidden, classes, 1.0 / (hidden as f64).sqrt(), &mut rng);
        Ok(RainNetModel {
            k,
            sigma_e_km,
            params: Params { convs, head },
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    pub fn classes(&self) -> usize {
        self.params.head.outputs()
    }

    /// Adjacency and first propagation for one graph.
    pub fn prepare(&self, graph: &SensingGraph) -> Result<PreparedGraph> {
        let d = self.dims().in_dim;
        if graph.feature_dim() != d {
            return Err(Error::DimensionMismatch {
                context: "conv1 input features".into(),
                expected: d,
                found: graph.feature_dim(),
            });
        }
        if graph.node_features.rows() != graph.edge_dist_km.rows() {
            return Err(Error::DimensionMismatch {
                context: "graph edge matrix".into(),
                expected: graph.node_features.rows(),
                found: graph.edge_dist_km.rows(),
            });
        }
        let adj = normalized_adjacency(&graph.edge_dist_km, self.sigma_e_km)?;
        let ax = adj.matmul(&graph.node_features);
        Ok(PreparedGraph {
            adj,
            ax,
            label: graph.label,
        })
    }

    pub fn forward(&self, graph: &SensingGraph) -> Result<Vec<f64>> {
        let pg = self.prepare(graph)?;
        Ok(self.forward_prepared(&[&pg]).logits.row(0).to_vec())
    }

    pub fn predict(&self, graph: &SensingGraph) -> Result<usize> {
        Ok(argmax(&self.forward(graph)?))
    }

    pub fn predict_prepared(&self, graphs: &[&PreparedGraph]) -> Vec<usize> {
        let logits = self.forward_prepared(graphs).logits;
        (0..graphs.len()).map(|g| argmax(logits.row(g))).collect()
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grads(&self, batch: &[SensingGraph]) -> Result<(f64, Params)> {
        let prepared = batch.iter().map(|g| self.prepare(g)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&PreparedGraph> = prepared.iter().collect();
        let mut grads = self.params.zeros_like();
        let loss = self.loss_and_grads_prepared(&refs, &mut grads)?;
        Ok((loss, grads))
    }

    /// Mean cross-entropy; overwrites `grads`.
    pub fn loss_and_grads_prepared(&self, batch: &[&PreparedGraph], grads: &mut Params) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let r = self.classes();
        if let Some(g) = batch.iter().find(|g| g.label >= r) {
            return Err(Error::OutOfRange(format!("label {} outside {r} classes", g.label)));
        }
        let fwd = self.forward_prepared(batch);
        let bsz = batch.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = DenseMatrix::zeros(batch.len(), r);
        for (g, pg) in batch.iter().enumerate() {
            let z = fwd.logits.row(g);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            loss += lse - z[pg.label];
            for (c, &zc) in z.iter().enumerate() {
                let p = (zc - lse).exp();
                let t = if c == pg.label { 1.0 } else { 0.0 };
                dlogits.set(g, c, (p - t) / bsz);
            }
        }
        self.backward(batch, &fwd, &dlogits, grads);
        Ok(loss / bsz)
    }

    pub(crate) fn forward_prepared(&self, batch: &[&PreparedGraph]) -> Forward {
        let h = self.dims().hidden;
        let rows: usize = batch.iter().map(|g| g.n()).sum();
        let d = self.dims().in_dim;
        let mut p0 = Vec::with_capacity(rows * d);
        for g in batch {
            p0.extend_from_slice(g.ax.data());
        }
        let p0 = DenseMatrix::from_vec(rows, d, p0);

        let mut inputs = Vec::with_capacity(CONV_LAYERS);
        let mut acts: Vec<DenseMatrix> = Vec::with_capacity(CONV_LAYERS);
        for (l, layer) in self.params.convs.iter().enumerate() {
            let p = if l == 0 {
                p0.clone()
            } else {
                propagate(batch, &acts[l - 1], false)
            };
            let mut z = bias_rows(rows, &layer.b);
            matmul_acc(&p, &layer.w, &mut z);
            for v in z.data_mut() {
                *v = v.max(0.0);
            }
            inputs.push(p);
            acts.push(z);
        }

        let mut pooled = DenseMatrix::zeros(batch.len(), h);
        let mut start = 0;
        for (g, pg) in batch.iter().enumerate() {
            let n = pg.n();
            let inv = 1.0 / n as f64;
            let out = &mut pooled.data_mut()[g * h..(g + 1) * h];
            for row in start..start + n {
                for (o, &v) in out.iter_mut().zip(acts[CONV_LAYERS - 1].row(row)) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o *= inv;
            }
            start += n;
        }
        let mut logits = bias_rows(batch.len(), &self.params.head.b);
        matmul_acc(&pooled, &self.params.head.w, &mut logits);
        Forward {
            inputs,
            acts,
            pooled,
            logits,
        }
    }

    fn backward(&self, batch: &[&PreparedGraph], fwd: &Forward, dlogits: &DenseMatrix, grads: &mut Params) {
        let h = self.dims().hidden;
        let head = &mut grads.head;
        head.w.data_mut().fill(0.0);
        matmul_tn_acc(&fwd.pooled, dlogits, &mut head.w);
        col_sums(dlogits, &mut head.b);

        let mut dpooled = DenseMatrix::zeros(batch.len(), h);
        matmul_acc(dlogits, &self.params.head.w.transpose(), &mut dpooled);

        let rows = fwd.acts[0].rows();
        let mut dh = DenseMatrix::zeros(rows, h);
        let mut start = 0;
        for (g, pg) in batch.iter().enumerate() {
            let n = pg.n();
            let inv = 1.0 / n as f64;
            let src = dpooled.row(g);
            for row in start..start + n {
                for (o, &v) in dh.data_mut()[row * h..(row + 1) * h].iter_mut().zip(src) {
                    *o = v * inv;
                }
            }
            start += n;
        }

        for l in (0..CONV_LAYERS).rev() {
            let mut dz = dh;
            for (d, &a) in dz.data_mut().iter_mut().zip(fwd.acts[l].data()) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let gl = &mut grads.convs[l];
            gl.w.data_mut().fill(0.0);
            matmul_tn_acc(&fwd.inputs[l], &dz, &mut gl.w);
            col_sums(&dz, &mut gl.b);
            if l == 0 {
                break;
            }
            let w = &self.params.convs[l].w;
            let mut dp = DenseMatrix::zeros(rows, w.rows());
            matmul_acc(&dz, &w.transpose(), &mut dp);
            dh = propagate(batch, &dp, true);
        }
    }
}

/// Cached activations of one batched forward pass.
pub(crate) struct Forward {
    /// Propagated input of each conv layer (`Â H_{l-1}`), stacked over graphs.
    inputs: Vec<DenseMatrix>,
    /// Post-ReLU output of each conv layer.
    acts: Vec<DenseMatrix>,
    pooled: DenseMatrix,
    pub(crate) logits: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    pub adj: DenseMatrix,
    /// `Â X`
    pub ax: DenseMatrix,
    pub label: usize,
}

impl PreparedGraph {
    pub fn n(&self) -> usize {
        self.adj.rows()
    }
}

fn bias_rows(rows: usize, b: &[f64]) -> DenseMatrix {
    let mut data = Vec::with_capacity(rows * b.len());
    for _ in 0..rows {
        data.extend_from_slice(b);
    }
    DenseMatrix::from_vec(rows, b.len(), data)
}

fn col_sums(m: &DenseMatrix, out: &mut [f64]) {
    out.fill(0.0);
    for row in m.data().chunks_exact(m.cols()) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Block-diagonal `Â · h` (or `Âᵀ · h`) over the stacked graphs.
fn propagate(batch: &[&PreparedGraph], h: &DenseMatrix, transpose: bool) -> DenseMatrix {
    let c = h.cols();
    let mut out = DenseMatrix::zeros(h.rows(), c);
    let mut start = 0;
    for pg in batch {
        let n = pg.n();
        let src = DenseMatrix::from_vec(n, c, h.data()[start * c..(start + n) * c].to_vec());
        let mut dst = DenseMatrix::zeros(n, c);
        if transpose {
            matmul_tn_acc(&pg.adj, &src, &mut dst);
        } else {
            matmul_acc(&pg.adj, &src, &mut dst);
        }
        out.data_mut()[start * c..(start + n) * c].copy_from_slice(dst.data());
        start += n;
    }
    out
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("edge bandwidth must be positive, got {sigma}")));
    }
    Ok(())
}

/// `D^{-1/2} A D^{-1/2}` with `A_ij = exp(-d_ij² / σ²)` off the diagonal and
/// unit self-loops.
pub fn normalized_adjacency(edge_dist_km: &DenseMatrix, sigma_e_km: f64) -> Result<DenseMatrix> {
    check_sigma(sigma_e_km)?;
    let n = edge_dist_km.rows();
    if edge_dist_km.cols() != n || n == 0 {
        return Err(Error::DimensionMismatch {
            context: "edge matrix must be square".into(),
            expected: n,
            found: edge_dist_km.cols(),
        });
    }
    let s2 = sigma_e_km * sigma_e_km;
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = edge_dist_km.get(i, j);
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidInput(format!("edge distance ({i},{j}) = {d}")));
            }
            let w = if i == j { 1.0 } else { (-d * d / s2).exp() };
            a.set(i, j, w);
        }
    }
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / a.row(i).iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j) * scale[i] * scale[j];
            a.set(i, j, v);
        }
    }
    Ok(a)
}

/// Median of all off-diagonal pairwise distances over the given graphs.
pub fn median_pairwise_distance<'a, I>(graphs: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a SensingGraph>,
{
    let mut d: Vec<f64> = Vec::new();
    for g in graphs {
        let e = &g.edge_dist_km;
        for i in 0..e.rows() {
            for j in i + 1..e.cols() {
                d.push(e.get(i, j));
            }
        }
    }
    if d.is_empty() {
        return Err(Error::InvalidInput("no edges to estimate the edge bandwidth from".into()));
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    if med > 0.0 {
        Ok(med)
    } else {
        Err(Error::InvalidInput("median edge distance is zero".into()))
    }
}
