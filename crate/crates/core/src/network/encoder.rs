use crate::nn::{leaky, leaky_grad, sigmoid, Conv3d, ConvCache, Gradients, ParamGroup, ParamStore, Real};

/// Stack of stride-2, kernel-4 convolutions with LeakyReLU between layers,
/// spatial averaging of the last layer, and a sigmoid on the resulting code.
///
/// All layers but the last pad by one (halving the resolution); the last is
/// unpadded. A `4·2^(L−1)` voxel input therefore reaches a single cell.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub layers: Vec<Conv3d>,
    pub input_dims: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct EncoderCache<F> {
    convs: Vec<ConvCache<F>>,
    pre: Vec<Vec<F>>,
    code: Vec<F>,
}

impl<F> EncoderCache<F> {
    pub fn code(&self) -> &[F] {
        &self.code
    }
}

impl ConvEncoder {
    #[allow(clippy::too_many_arguments)]
    fn build<F: Real>(
        store: &mut ParamStore<F>,
        prefix: &str,
        group: ParamGroup,
        channels: &[usize],
        input_dims: [usize; 3],
        planar: bool,
        std: f64,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::with_capacity(channels.len());
        let mut cin = 1;
        for (i, &cout) in channels.iter().enumerate() {
            let last = i + 1 == channels.len();
            let p = if last { 0 } else { 1 };
            let (kernel, stride, pad) = if planar {
                ([1, 4, 4], [1, 2, 2], [0, p, p])
            } else {
                ([4; 3], [2; 3], [p; 3])
            };
            layers.push(Conv3d::new(
                store,
                &format!("{prefix}.conv{}", i + 1),
                group,
                cin,
                cout,
                kernel,
                stride,
                pad,
                std,
                seed,
            ));
            cin = cout;
        }
        ConvEncoder { layers, input_dims }
    }

    /// 3D encoder over a `dim³` single-channel voxel grid.
    pub fn voxel<F: Real>(store: &mut ParamStore<F>, channels: &[usize], dim: usize, std: f64, seed: u64) -> Self {
        Self::build(
            store,
            "encoder",
            ParamGroup::Encoder,
            channels,
            [dim; 3],
            false,
            std,
            seed,
        )
    }

    /// 2D encoder over a `dim × dim` single-channel image; tensor names start with `prefix`.
    pub fn image<F: Real>(
        store: &mut ParamStore<F>,
        prefix: &str,
        channels: &[usize],
        dim: usize,
        std: f64,
        seed: u64,
    ) -> Self {
        Self::build(
            store,
            prefix,
            ParamGroup::ImageEncoder,
            channels,
            [1, dim, dim],
            true,
            std,
            seed,
        )
    }

    pub fn code_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    pub fn input_len(&self) -> usize {
        self.input_dims.iter().product()
    }

    pub fn forward<F: Real>(&self, ps: &ParamStore<F>, input: &[F]) -> (Vec<F>, EncoderCache<F>) {
        assert_eq!(input.len(), self.input_len());
        let mut dims = self.input_dims;
        let mut x = input.to_vec();
        let mut convs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(ps, &x, dims);
            dims = layer.out_dims(dims);
            convs.push(cache);
            if i + 1 < self.layers.len() {
                x = y.iter().map(|&v| leaky(v)).collect();
            }
            pre.push(y);
        }
        let last = pre.last().expect("at least one layer");
        let vol: usize = dims.iter().product();
        let inv = F::one() / F::c(vol as f64);
        let code: Vec<F> = last
            .chunks_exact(vol)
            .map(|c| sigmoid(c.iter().copied().sum::<F>() * inv))
            .collect();
        (code.clone(), EncoderCache { convs, pre, code })
    }

    pub fn encode<F: Real>(&self, ps: &ParamStore<F>, input: &[F]) -> Vec<F> {
        self.forward(ps, input).0
    }

    /// Accumulates parameter gradients for `dL/dcode`.
    pub fn backward<F: Real>(
        &self,
        ps: &ParamStore<F>,
        cache: &EncoderCache<F>,
        dcode: &[F],
        grads: &mut Gradients<F>,
    ) {
        let n = self.layers.len();
        let vol = cache.pre[n - 1].len() / self.code_dim();
        let inv = F::one() / F::c(vol as f64);
        let mut dy: Vec<F> = cache
            .code
            .iter()
            .zip(dcode)
            .flat_map(|(&c, &d)| std::iter::repeat_n(d * c * (F::one() - c) * inv, vol))
            .collect();
        for i in (0..n).rev() {
            let dx = self.layers[i].backward(ps, &cache.convs[i], &dy, Some(grads), i > 0);
            if let Some(dx) = dx {
                dy = dx
                    .iter()
                    .zip(&cache.pre[i - 1])
                    .map(|(&g, &p)| g * leaky_grad(p))
                    .collect();
            }
        }
    }
}
