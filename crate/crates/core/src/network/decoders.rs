use super::head::{head_backward, head_eval, HeadKind, EPS_RADIUS, INIT_RADIUS};
use crate::nn::{leaky, leaky_grad, sigmoid, softplus_inv, Gradients, Linear, ParamGroup, ParamStore, Real};

/// Splits a parent code into two child codes: `Linear → LeakyReLU → Linear → Sigmoid`.
#[derive(Debug, Clone)]
pub struct FeatureDecoder {
    pub level: usize,
    pub code_dim: usize,
    pub l1: Linear,
    pub l2: Linear,
}

#[derive(Debug, Clone)]
pub struct FeatureCache<F> {
    input: Vec<F>,
    h_pre: Vec<F>,
    h: Vec<F>,
    out: Vec<F>,
    nodes: usize,
}

impl FeatureDecoder {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        level: usize,
        code_dim: usize,
        hidden: usize,
        std: f64,
        seed: u64,
    ) -> Self {
        let group = ParamGroup::FeatureDecoder(level);
        let p = format!("feature_decoder{level}");
        FeatureDecoder {
            level,
            code_dim,
            l1: Linear::new(store, &format!("{p}.fc1"), group, code_dim, hidden, std, seed),
            l2: Linear::new(store, &format!("{p}.fc2"), group, hidden, 2 * code_dim, std, seed),
        }
    }

    /// `parents` is `nodes × code_dim`; the result is `2·nodes × code_dim`, children of
    /// parent `n` at rows `2n` and `2n + 1`.
    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, parents: &[F], nodes: usize) -> (Vec<F>, FeatureCache<F>) {
        let h_pre = self.l1.forward(ps, parents, nodes);
        let h: Vec<F> = h_pre.iter().map(|&v| leaky(v)).collect();
        let out: Vec<F> = self.l2.forward(ps, &h, nodes).into_iter().map(sigmoid).collect();
        (
            out.clone(),
            FeatureCache {
                input: parents.to_vec(),
                h_pre,
                h,
                out,
                nodes,
            },
        )
    }

    pub fn backward<F: Real>(
        &self,
        ps: &ParamStore<F>,
        cache: &FeatureCache<F>,
        dchildren: &[F],
        mut grads: Option<&mut Gradients<F>>,
        need_dparent: bool,
    ) -> Option<Vec<F>> {
        let dpre: Vec<F> = cache
            .out
            .iter()
            .zip(dchildren)
            .map(|(&o, &d)| d * o * (F::one() - o))
            .collect();
        let dh = self
            .l2
            .backward(ps, &cache.h, &dpre, cache.nodes, grads.as_deref_mut(), true)
            .unwrap();
        let dh: Vec<F> = dh.iter().zip(&cache.h_pre).map(|(&d, &p)| d * leaky_grad(p)).collect();
        self.l1
            .backward(ps, &cache.input, &dh, cache.nodes, grads, need_dparent)
    }
}

/// Maps `(code, point)` to one probability per branch through a 3-layer MLP whose
/// output is split into per-branch head parameters.
#[derive(Debug, Clone)]
pub struct PartDecoder {
    pub level: usize,
    pub code_dim: usize,
    pub branches: usize,
    pub head: HeadKind,
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

#[derive(Debug, Clone)]
pub struct PartCache<F> {
    codes: Vec<F>,
    points: Vec<[F; 3]>,
    nodes: usize,
    h1_pre: Vec<F>,
    a1: Vec<F>,
    h2_pre: Vec<F>,
    a2: Vec<F>,
    raw: Vec<F>,
    fields: Vec<F>,
}

impl<F> PartCache<F> {
    pub fn raw(&self) -> &[F] {
        &self.raw
    }
}

impl PartDecoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        level: usize,
        code_dim: usize,
        hidden: [usize; 2],
        branches: usize,
        head: HeadKind,
        std: f64,
        seed: u64,
    ) -> Self {
        let group = ParamGroup::PartDecoder(level);
        let p = format!("part_decoder{level}");
        let raw_len = head.raw_len();
        let l3 = Linear::new(
            store,
            &format!("{p}.fc3"),
            group,
            hidden[1],
            branches * raw_len,
            std,
            seed,
        );
        let r0 = F::c(softplus_inv(INIT_RADIUS - EPS_RADIUS));
        let bias = store.get_mut(l3.bias);
        for b in 0..branches {
            for &slot in head.radius_slots() {
                bias[b * raw_len + slot] = r0;
            }
        }
        PartDecoder {
            level,
            code_dim,
            branches,
            head,
            l1: Linear::new(store, &format!("{p}.fc1"), group, code_dim + 3, hidden[0], std, seed),
            l2: Linear::new(store, &format!("{p}.fc2"), group, hidden[0], hidden[1], std, seed),
            l3,
        }
    }

    fn raw_len(&self) -> usize {
        self.head.raw_len()
    }

    /// Evaluates `nodes` codes against the same point batch.
    ///
    /// Returns fields laid out `(nodes·branches) × points`: branch `b` of node `n` is
    /// row `n·branches + b`.
    pub fn forward<F: Real>(
        &self,
        ps: &ParamStore<F>,
        codes: &[F],
        nodes: usize,
        points: &[[F; 3]],
        keep_cache: bool,
    ) -> (Vec<F>, Option<PartCache<F>>) {
        let c = self.code_dim;
        assert_eq!(codes.len(), nodes * c);
        let np = points.len();
        let h1 = self.l1.outputs;
        let w1 = ps.get(self.l1.weight);
        let b1 = ps.get(self.l1.bias);
        // The code term is shared by every point of a node.
        let mut base = vec![F::zero(); nodes * h1];
        for n in 0..nodes {
            let code = &codes[n * c..(n + 1) * c];
            for h in 0..h1 {
                let row = &w1[h * (c + 3)..h * (c + 3) + c];
                base[n * h1 + h] = b1[h] + row.iter().zip(code).map(|(&w, &x)| w * x).sum::<F>();
            }
        }
        let mut h1_pre = vec![F::zero(); nodes * np * h1];
        for n in 0..nodes {
            for (pi, p) in points.iter().enumerate() {
                let out = &mut h1_pre[(n * np + pi) * h1..(n * np + pi + 1) * h1];
                for h in 0..h1 {
                    let w = &w1[h * (c + 3) + c..h * (c + 3) + c + 3];
                    out[h] = base[n * h1 + h] + w[0] * p[0] + w[1] * p[1] + w[2] * p[2];
                }
            }
        }
        let rows = nodes * np;
        let a1: Vec<F> = h1_pre.iter().map(|&v| leaky(v)).collect();
        let h2_pre = self.l2.forward(ps, &a1, rows);
        let a2: Vec<F> = h2_pre.iter().map(|&v| leaky(v)).collect();
        let raw = self.l3.forward(ps, &a2, rows);
        let rl = self.raw_len();
        let mut fields = vec![F::zero(); nodes * self.branches * np];
        for n in 0..nodes {
            for (pi, p) in points.iter().enumerate() {
                let r = &raw[(n * np + pi) * self.branches * rl..];
                for b in 0..self.branches {
                    fields[(n * self.branches + b) * np + pi] = head_eval(self.head, &r[b * rl..(b + 1) * rl], *p);
                }
            }
        }
        let cache = keep_cache.then(|| PartCache {
            codes: codes.to_vec(),
            points: points.to_vec(),
            nodes,
            h1_pre,
            a1,
            h2_pre,
            a2,
            raw,
            fields: fields.clone(),
        });
        (fields, cache)
    }

    /// Backpropagates `dL/dfields`; returns `dL/dcodes` (`nodes × code_dim`) when requested.
    pub fn backward<F: Real>(
        &self,
        ps: &ParamStore<F>,
        cache: &PartCache<F>,
        dfields: &[F],
        mut grads: Option<&mut Gradients<F>>,
        need_dcode: bool,
    ) -> Option<Vec<F>> {
        let np = cache.points.len();
        let nodes = cache.nodes;
        let rl = self.raw_len();
        let rows = nodes * np;
        let mut draw = vec![F::zero(); rows * self.branches * rl];
        for n in 0..nodes {
            for (pi, p) in cache.points.iter().enumerate() {
                let off = (n * np + pi) * self.branches * rl;
                for b in 0..self.branches {
                    let fi = (n * self.branches + b) * np + pi;
                    let s = off + b * rl;
                    head_backward(
                        self.head,
                        &cache.raw[s..s + rl],
                        *p,
                        cache.fields[fi],
                        dfields[fi],
                        &mut draw[s..s + rl],
                    );
                }
            }
        }
        let da2 = self
            .l3
            .backward(ps, &cache.a2, &draw, rows, grads.as_deref_mut(), true)
            .unwrap();
        let dh2: Vec<F> = da2
            .iter()
            .zip(&cache.h2_pre)
            .map(|(&d, &p)| d * leaky_grad(p))
            .collect();
        let da1 = self
            .l2
            .backward(ps, &cache.a1, &dh2, rows, grads.as_deref_mut(), true)
            .unwrap();
        let h1 = self.l1.outputs;
        let c = self.code_dim;
        let dh1: Vec<F> = da1
            .iter()
            .zip(&cache.h1_pre)
            .map(|(&d, &p)| d * leaky_grad(p))
            .collect();
        // Per-node sums of dh1 carry the code and bias gradients.
        let mut node_sum = vec![F::zero(); nodes * h1];
        for n in 0..nodes {
            let acc = &mut node_sum[n * h1..(n + 1) * h1];
            for pi in 0..np {
                let row = &dh1[(n * np + pi) * h1..(n * np + pi + 1) * h1];
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        if let Some(g) = grads {
            let mut dpoint_w = vec![[F::zero(); 3]; h1];
            for n in 0..nodes {
                for (pi, p) in cache.points.iter().enumerate() {
                    let row = &dh1[(n * np + pi) * h1..(n * np + pi + 1) * h1];
                    for (acc, &v) in dpoint_w.iter_mut().zip(row) {
                        acc[0] += v * p[0];
                        acc[1] += v * p[1];
                        acc[2] += v * p[2];
                    }
                }
            }
            let gw = g.get_mut(self.l1.weight);
            for h in 0..h1 {
                let row = &mut gw[h * (c + 3)..(h + 1) * (c + 3)];
                for n in 0..nodes {
                    let s = node_sum[n * h1 + h];
                    let code = &cache.codes[n * c..(n + 1) * c];
                    for (w, &x) in row[..c].iter_mut().zip(code) {
                        *w += s * x;
                    }
                }
                for d in 0..3 {
                    row[c + d] += dpoint_w[h][d];
                }
            }
            let gb = g.get_mut(self.l1.bias);
            for n in 0..nodes {
                for h in 0..h1 {
                    gb[h] += node_sum[n * h1 + h];
                }
            }
        }
        need_dcode.then(|| {
            let w1 = ps.get(self.l1.weight);
            let mut dcode = vec![F::zero(); nodes * c];
            for n in 0..nodes {
                let out = &mut dcode[n * c..(n + 1) * c];
                for h in 0..h1 {
                    let s = node_sum[n * h1 + h];
                    let row = &w1[h * (c + 3)..h * (c + 3) + c];
                    for (o, &w) in out.iter_mut().zip(row) {
                        *o += s * w;
                    }
                }
            }
            dcode
        })
    }
}
