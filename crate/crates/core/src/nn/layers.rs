use super::params::{Gradients, Init, ParamGroup, ParamId, ParamStore};
use super::real::{matmul, Mat, Real};

/// Fully connected layer `y = x·Wᵀ + b`, weights stored `outputs × inputs`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        group: ParamGroup,
        inputs: usize,
        outputs: usize,
        std: f64,
        seed: u64,
    ) -> Self {
        let weight = store.add(
            &format!("{name}.weight"),
            group,
            &[outputs, inputs],
            Init::Normal(std),
            seed,
        );
        let bias = store.add(&format!("{name}.bias"), group, &[outputs], Init::Zeros, seed);
        Linear {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    /// `x` is `batch × inputs`, row-major.
    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, x: &[F], batch: usize) -> Vec<F> {
        assert_eq!(x.len(), batch * self.inputs);
        let bias = ps.get(self.bias);
        let mut out = Vec::with_capacity(batch * self.outputs);
        for _ in 0..batch {
            out.extend_from_slice(bias);
        }
        matmul(
            &mut out,
            Mat::new(x, batch, self.inputs),
            Mat::new(ps.get(self.weight), self.outputs, self.inputs).t(),
            F::one(),
        );
        out
    }

    /// Accumulates parameter gradients (when `grads` is given) and returns `dL/dx` if requested.
    pub fn backward<F: Real>(
        &self,
        ps: &ParamStore<F>,
        x: &[F],
        dy: &[F],
        batch: usize,
        grads: Option<&mut Gradients<F>>,
        need_dx: bool,
    ) -> Option<Vec<F>> {
        assert_eq!(dy.len(), batch * self.outputs);
        if let Some(g) = grads {
            matmul(
                g.get_mut(self.weight),
                Mat::new(dy, batch, self.outputs).t(),
                Mat::new(x, batch, self.inputs),
                F::one(),
            );
            let gb = g.get_mut(self.bias);
            for row in dy.chunks_exact(self.outputs) {
                for (b, d) in gb.iter_mut().zip(row) {
                    *b += *d;
                }
            }
        }
        need_dx.then(|| {
            let mut dx = vec![F::zero(); batch * self.inputs];
            matmul(
                &mut dx,
                Mat::new(dy, batch, self.outputs),
                Mat::new(ps.get(self.weight), self.outputs, self.inputs),
                F::zero(),
            );
            dx
        })
    }
}

/// Dense 3D convolution over a single sample laid out `channels × d × h × w`.
///
/// 2D convolutions are expressed with depth 1 and a unit kernel along the first axis.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<F> {
    pub cols: Vec<F>,
    pub in_dims: [usize; 3],
}

impl Conv3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        group: ParamGroup,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        std: f64,
        seed: u64,
    ) -> Self {
        let kvol: usize = kernel.iter().product();
        let weight = store.add(
            &format!("{name}.weight"),
            group,
            &[out_channels, in_channels, kernel[0], kernel[1], kernel[2]],
            Init::Normal(std),
            seed,
        );
        let bias = store.add(&format!("{name}.bias"), group, &[out_channels], Init::Zeros, seed);
        debug_assert!(kvol > 0);
        Conv3d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_dims(&self, in_dims: [usize; 3]) -> [usize; 3] {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = in_dims[a] + 2 * self.pad[a];
            assert!(padded >= self.kernel[a], "input too small for kernel");
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        out
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Visits every (patch row, output column, input index) triple of the unfolded input.
    fn for_each_tap(&self, in_dims: [usize; 3], mut f: impl FnMut(usize, usize)) {
        let od = self.out_dims(in_dims);
        let out_vol = od[0] * od[1] * od[2];
        let [kd, kh, kw] = self.kernel;
        let in_vol = in_dims[0] * in_dims[1] * in_dims[2];
        for c in 0..self.in_channels {
            for a in 0..kd {
                for b in 0..kh {
                    for e in 0..kw {
                        let row = ((c * kd + a) * kh + b) * kw + e;
                        for z in 0..od[0] {
                            let iz = (z * self.stride[0] + a) as isize - self.pad[0] as isize;
                            if iz < 0 || iz >= in_dims[0] as isize {
                                continue;
                            }
                            for y in 0..od[1] {
                                let iy = (y * self.stride[1] + b) as isize - self.pad[1] as isize;
                                if iy < 0 || iy >= in_dims[1] as isize {
                                    continue;
                                }
                                for x in 0..od[2] {
                                    let ix = (x * self.stride[2] + e) as isize - self.pad[2] as isize;
                                    if ix < 0 || ix >= in_dims[2] as isize {
                                        continue;
                                    }
                                    let col = (z * od[1] + y) * od[2] + x;
                                    let src = c * in_vol
                                        + (iz as usize * in_dims[1] + iy as usize) * in_dims[2]
                                        + ix as usize;
                                    f(row * out_vol + col, src);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Returns the output (`out_channels × out_vol`) and the cache for [`Conv3d::backward`].
    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, x: &[F], in_dims: [usize; 3]) -> (Vec<F>, ConvCache<F>) {
        let in_vol: usize = in_dims.iter().product();
        assert_eq!(x.len(), self.in_channels * in_vol);
        let od = self.out_dims(in_dims);
        let out_vol: usize = od.iter().product();
        let mut cols = vec![F::zero(); self.patch_len() * out_vol];
        self.for_each_tap(in_dims, |dst, src| cols[dst] = x[src]);
        let bias = ps.get(self.bias);
        let mut out = Vec::with_capacity(self.out_channels * out_vol);
        for &b in bias {
            out.extend(std::iter::repeat_n(b, out_vol));
        }
        matmul(
            &mut out,
            Mat::new(ps.get(self.weight), self.out_channels, self.patch_len()),
            Mat::new(&cols, self.patch_len(), out_vol),
            F::one(),
        );
        (out, ConvCache { cols, in_dims })
    }

    pub fn backward<F: Real>(
        &self,
        ps: &ParamStore<F>,
        cache: &ConvCache<F>,
        dy: &[F],
        grads: Option<&mut Gradients<F>>,
        need_dx: bool,
    ) -> Option<Vec<F>> {
        let od = self.out_dims(cache.in_dims);
        let out_vol: usize = od.iter().product();
        assert_eq!(dy.len(), self.out_channels * out_vol);
        if let Some(g) = grads {
            matmul(
                g.get_mut(self.weight),
                Mat::new(dy, self.out_channels, out_vol),
                Mat::new(&cache.cols, self.patch_len(), out_vol).t(),
                F::one(),
            );
            let gb = g.get_mut(self.bias);
            for (b, row) in gb.iter_mut().zip(dy.chunks_exact(out_vol)) {
                *b += row.iter().copied().sum::<F>();
            }
        }
        need_dx.then(|| {
            let mut dcols = vec![F::zero(); self.patch_len() * out_vol];
            matmul(
                &mut dcols,
                Mat::new(ps.get(self.weight), self.out_channels, self.patch_len()).t(),
                Mat::new(dy, self.out_channels, out_vol),
                F::zero(),
            );
            let in_vol: usize = cache.in_dims.iter().product();
            let mut dx = vec![F::zero(); self.in_channels * in_vol];
            self.for_each_tap(cache.in_dims, |col, src| dx[src] += dcols[col]);
            dx
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(conv: &Conv3d, ps: &ParamStore<f64>, x: &[f64], dims: [usize; 3]) -> Vec<f64> {
        let od = conv.out_dims(dims);
        let w = ps.get(conv.weight);
        let b = ps.get(conv.bias);
        let [kd, kh, kw] = conv.kernel;
        let mut out = vec![0.0; conv.out_channels * od.iter().product::<usize>()];
        for o in 0..conv.out_channels {
            for z in 0..od[0] {
                for y in 0..od[1] {
                    for xx in 0..od[2] {
                        let mut acc = b[o];
                        for c in 0..conv.in_channels {
                            for a in 0..kd {
                                for bb in 0..kh {
                                    for e in 0..kw {
                                        let iz = (z * conv.stride[0] + a) as isize - conv.pad[0] as isize;
                                        let iy = (y * conv.stride[1] + bb) as isize - conv.pad[1] as isize;
                                        let ix = (xx * conv.stride[2] + e) as isize - conv.pad[2] as isize;
                                        if iz < 0 || iy < 0 || ix < 0 {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        if iz >= dims[0] || iy >= dims[1] || ix >= dims[2] {
                                            continue;
                                        }
                                        let wi = (((o * conv.in_channels + c) * kd + a) * kh + bb) * kw + e;
                                        let xi = ((c * dims[0] + iz) * dims[1] + iy) * dims[2] + ix;
                                        acc += w[wi] * x[xi];
                                    }
                                }
                            }
                        }
                        out[((o * od[0] + z) * od[1] + y) * od[2] + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_summation() {
        let mut ps = ParamStore::<f64>::new();
        let conv = Conv3d::new(
            &mut ps,
            "c",
            ParamGroup::Encoder,
            2,
            3,
            [4, 4, 4],
            [2, 2, 2],
            [1, 1, 1],
            0.5,
            1,
        );
        for v in ps.get_mut(conv.bias) {
            *v = 0.25;
        }
        let dims = [6, 6, 6];
        let x: Vec<f64> = (0..2 * 216).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let (y, _) = conv.forward(&ps, &x, dims);
        let want = direct_conv(&conv, &ps, &x, dims);
        assert_eq!(conv.out_dims(dims), [3, 3, 3]);
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut ps = ParamStore::<f64>::new();
        let conv = Conv3d::new(
            &mut ps,
            "c",
            ParamGroup::Encoder,
            2,
            2,
            [1, 3, 3],
            [1, 2, 2],
            [0, 1, 1],
            0.5,
            3,
        );
        let dims = [1, 5, 5];
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        // L = Σ y·r for a fixed random r.
        let (y, cache) = conv.forward(&ps, &x, dims);
        let r: Vec<f64> = (0..y.len()).map(|i| (i as f64 * 1.7).cos()).collect();
        let mut g = Gradients::zeros_like(&ps);
        let dx = conv.backward(&ps, &cache, &r, Some(&mut g), true).unwrap();
        let loss = |ps: &ParamStore<f64>, x: &[f64]| -> f64 {
            let (y, _) = conv.forward(ps, x, dims);
            y.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&ps, &xp) - loss(&ps, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7, "dx[{i}]");
        }
        for i in 0..ps.get(conv.weight).len() {
            let mut pp = ps.clone();
            pp.get_mut(conv.weight)[i] += h;
            let mut pm = ps.clone();
            pm.get_mut(conv.weight)[i] -= h;
            let fd = (loss(&pp, &x) - loss(&pm, &x)) / (2.0 * h);
            assert!((fd - g.get(conv.weight)[i]).abs() < 1e-7, "dw[{i}]");
        }
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut ps = ParamStore::<f64>::new();
        let lin = Linear::new(&mut ps, "l", ParamGroup::Encoder, 3, 4, 0.7, 5);
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.2 - 0.5).collect();
        let r: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let loss =
            |ps: &ParamStore<f64>, x: &[f64]| -> f64 { lin.forward(ps, x, 2).iter().zip(&r).map(|(a, b)| a * b).sum() };
        let mut g = Gradients::zeros_like(&ps);
        let dx = lin.backward(&ps, &x, &r, 2, Some(&mut g), true).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            assert!(((loss(&ps, &xp) - loss(&ps, &xm)) / (2.0 * h) - dx[i]).abs() < 1e-8);
        }
        for id in [lin.weight, lin.bias] {
            for i in 0..ps.get(id).len() {
                let mut pp = ps.clone();
                pp.get_mut(id)[i] += h;
                let mut pm = ps.clone();
                pm.get_mut(id)[i] -= h;
                assert!(((loss(&pp, &x) - loss(&pm, &x)) / (2.0 * h) - g.get(id)[i]).abs() < 1e-8);
            }
        }
    }
}
