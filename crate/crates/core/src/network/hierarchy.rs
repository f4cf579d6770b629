use super::config::NetworkConfig;
use super::decoders::{FeatureCache, FeatureDecoder, PartCache, PartDecoder};
use super::encoder::{ConvEncoder, EncoderCache};
use super::head::{map_params, GaussianParams, HeadKind};
use crate::data::VoxelGrid;
use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamGroup, ParamStore, Real};

/// Node fields for a point batch, plus the feature codes that produced them.
///
/// `fields[j - 1]` is level `j`, laid out `nodes × batch`; node `i` (1-based) is row `i − 1`.
/// `codes[k]` holds the level-`k` codes, `nodes × code_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTree<F> {
    pub batch: usize,
    pub fields: Vec<Vec<F>>,
    pub codes: Vec<Vec<F>>,
}

impl<F: Real> FieldTree<F> {
    /// Builds a tree from per-level rows, e.g. for constructed loss oracles.
    pub fn from_rows(levels: Vec<Vec<Vec<F>>>) -> Self {
        let batch = levels.first().and_then(|l| l.first()).map_or(0, Vec::len);
        let fields = levels
            .into_iter()
            .map(|rows| {
                assert!(rows.iter().all(|r| r.len() == batch), "ragged field rows");
                rows.concat()
            })
            .collect();
        FieldTree {
            batch,
            fields,
            codes: Vec::new(),
        }
    }

    /// Number of field levels held.
    pub fn levels(&self) -> usize {
        self.fields.len()
    }

    pub fn nodes(&self, level: usize) -> usize {
        self.fields[level - 1].len().checked_div(self.batch).unwrap_or(0)
    }

    /// All node values at `level`, `nodes × batch`.
    pub fn level(&self, level: usize) -> &[F] {
        &self.fields[level - 1]
    }

    /// Values of node `i` (1-based) at `level`.
    pub fn field(&self, i: usize, level: usize) -> &[F] {
        &self.fields[level - 1][(i - 1) * self.batch..i * self.batch]
    }

    /// Union value `max_i f_{i,j}(p)` for every point.
    pub fn union(&self, level: usize) -> Vec<F> {
        let mut out = vec![F::neg_infinity(); self.batch];
        for row in self.level(level).chunks_exact(self.batch) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = o.max(v);
            }
        }
        out
    }
}

/// Argmax part per point (0-based node index, i.e. node `i + 1`), `None` when the
/// largest field does not exceed `tau`. Ties go to the lowest index.
pub fn classify_points<F: Real>(tree: &FieldTree<F>, level: usize, tau: f64) -> Vec<Option<usize>> {
    classify_rows(tree.level(level), tree.batch, tau)
}

pub(crate) fn classify_rows<F: Real>(rows: &[F], batch: usize, tau: f64) -> Vec<Option<usize>> {
    let nodes = rows.len().checked_div(batch).unwrap_or(0);
    (0..batch)
        .map(|p| {
            let (best, v) = argmax_at(rows, batch, nodes, p);
            (v.f64() > tau).then_some(best)
        })
        .collect()
}

pub(crate) fn argmax_at<F: Real>(rows: &[F], batch: usize, nodes: usize, p: usize) -> (usize, F) {
    let mut best = 0;
    let mut v = rows[p];
    for n in 1..nodes {
        let x = rows[n * batch + p];
        if x > v {
            best = n;
            v = x;
        }
    }
    (best, v)
}

/// Intermediate values kept for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    encoder: Option<EncoderCache<F>>,
    features: Vec<FeatureCache<F>>,
    parts: Vec<PartCache<F>>,
}

/// Encoder, feature decoders and part decoders over one parameter store.
#[derive(Debug, Clone)]
pub struct Network<F> {
    pub config: NetworkConfig,
    pub store: ParamStore<F>,
    pub encoder: ConvEncoder,
    /// `feature_decoders[j - 1]` maps level `j − 1` codes to level `j` codes.
    pub feature_decoders: Vec<FeatureDecoder>,
    /// `part_decoders[j - 1]` maps level `j − 1` codes to level `j` fields.
    pub part_decoders: Vec<PartDecoder>,
}

impl<F: Real> Network<F> {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let (std, seed) = (config.init_std, config.seed);
        let encoder = ConvEncoder::voxel(&mut store, &config.encoder_channels, config.input_dim, std, seed);
        let feature_decoders = (1..=config.feature_decoder_count())
            .map(|j| FeatureDecoder::new(&mut store, j, config.code_dim, config.fd_hidden, std, seed))
            .collect();
        let part_decoders = (1..=config.part_decoder_count())
            .map(|j| {
                PartDecoder::new(
                    &mut store,
                    j,
                    config.code_dim,
                    config.pd_hidden,
                    config.branches(),
                    config.head_kind,
                    std,
                    seed,
                )
            })
            .collect();
        Ok(Network {
            config,
            store,
            encoder,
            feature_decoders,
            part_decoders,
        })
    }

    /// Same architecture with parameters converted to another float type.
    pub fn cast<G: Real>(&self) -> Network<G> {
        Network {
            config: self.config.clone(),
            store: self.store.cast(),
            encoder: self.encoder.clone(),
            feature_decoders: self.feature_decoders.clone(),
            part_decoders: self.part_decoders.clone(),
        }
    }

    pub fn head_kind(&self) -> HeadKind {
        self.config.head_kind
    }

    pub fn field_levels(&self) -> usize {
        self.config.field_levels()
    }

    pub fn code_dim(&self) -> usize {
        self.config.code_dim
    }

    /// Every parameter group, in instantiation order.
    pub fn groups(&self) -> Vec<ParamGroup> {
        self.store.groups()
    }

    fn mode(&self) -> &'static str {
        if self.config.is_flat() {
            "flat"
        } else {
            "hierarchical"
        }
    }

    fn check_level(&self, level: usize, max: usize) -> Result<()> {
        if level == 0 || level > max {
            Err(Error::LevelOutOfRange { level, max })
        } else {
            Ok(())
        }
    }

    /// Converts a voxel grid to the encoder's input layout.
    pub fn grid_input(&self, grid: &VoxelGrid) -> Result<Vec<F>> {
        if grid.dim != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                actual: grid.dim,
                context: "voxel grid resolution".into(),
            });
        }
        Ok(grid.occupancy.iter().map(|&v| F::c(v as f64)).collect())
    }

    pub fn encode(&self, grid: &VoxelGrid) -> Result<Vec<F>> {
        Ok(self.encoder.encode(&self.store, &self.grid_input(grid)?))
    }

    /// Children codes `(left, right)` of one parent at feature-decoder level `level`.
    pub fn decode_features(&self, parent: &[F], level: usize) -> Result<(Vec<F>, Vec<F>)> {
        self.check_level(level, self.feature_decoders.len())?;
        self.check_code(parent)?;
        let (out, _) = self.feature_decoders[level - 1].forward(&self.store, parent, 1);
        let c = self.code_dim();
        Ok((out[..c].to_vec(), out[c..].to_vec()))
    }

    /// Per-point, per-branch Gaussian parameters from part decoder `level`.
    pub fn part_decode(&self, parent: &[F], points: &[[F; 3]], level: usize) -> Result<Vec<Vec<GaussianParams<F>>>> {
        self.check_level(level, self.part_decoders.len())?;
        self.check_code(parent)?;
        if self.head_kind() == HeadKind::Point {
            return Err(Error::InvalidInput("point head has no Gaussian parameters".into()));
        }
        let pd = &self.part_decoders[level - 1];
        let (_, cache) = pd.forward(&self.store, parent, 1, points, true);
        let cache = cache.expect("cache requested");
        let rl = self.head_kind().raw_len();
        Ok(cache
            .raw()
            .chunks_exact(rl * pd.branches)
            .map(|r| r.chunks_exact(rl).map(|b| map_params(self.head_kind(), b)).collect())
            .collect())
    }

    fn check_code(&self, code: &[F]) -> Result<()> {
        if code.len() != self.code_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.code_dim(),
                actual: code.len(),
                context: "latent code".into(),
            });
        }
        Ok(())
    }

    /// Codes for levels `0..field_levels()`, starting from a root code.
    pub fn codes(&self, root: &[F]) -> Vec<Vec<F>> {
        let mut codes = vec![root.to_vec()];
        for (k, fd) in self.feature_decoders.iter().enumerate() {
            let (children, _) = fd.forward(&self.store, &codes[k], 1 << k);
            codes.push(children);
        }
        codes
    }

    /// Level-`level` fields for `points` given the code tree from [`Network::codes`].
    pub fn level_fields(&self, codes: &[Vec<F>], level: usize, points: &[[F; 3]]) -> Vec<F> {
        let input = &codes[level - 1];
        let nodes = input.len() / self.code_dim();
        self.part_decoders[level - 1]
            .forward(&self.store, input, nodes, points, false)
            .0
    }

    /// Fields for levels `1..=upto` from a root code, without the 3D encoder.
    pub fn forward_from_code(&self, root: &[F], points: &[[F; 3]], upto: usize) -> FieldTree<F> {
        let codes = self.codes(root);
        let fields = (1..=upto).map(|j| self.level_fields(&codes, j, points)).collect();
        FieldTree {
            batch: points.len(),
            fields,
            codes,
        }
    }

    /// Full recursive evaluation of every level.
    pub fn forward_hierarchy(&self, grid: &VoxelGrid, points: &[[F; 3]]) -> Result<FieldTree<F>> {
        if self.config.is_flat() {
            return Err(Error::ModeMismatch {
                expected: "hierarchical",
                actual: self.mode(),
            });
        }
        let root = self.encode(grid)?;
        Ok(self.forward_from_code(&root, points, self.field_levels()))
    }

    /// Evaluates levels `1..=upto` keeping caches for [`Network::backward`].
    ///
    /// `input` is either an encoder input (`from_code == false`) or a root code.
    pub fn forward_train(
        &self,
        input: &[F],
        from_code: bool,
        points: &[[F; 3]],
        upto: usize,
    ) -> (FieldTree<F>, ForwardCache<F>) {
        let (root, encoder) = if from_code {
            (input.to_vec(), None)
        } else {
            let (code, cache) = self.encoder.forward(&self.store, input);
            (code, Some(cache))
        };
        let mut codes = vec![root];
        let mut features = Vec::new();
        for k in 1..upto {
            let (children, cache) = self.feature_decoders[k - 1].forward(&self.store, &codes[k - 1], 1 << (k - 1));
            codes.push(children);
            features.push(cache);
        }
        let mut fields = Vec::with_capacity(upto);
        let mut parts = Vec::with_capacity(upto);
        for j in 1..=upto {
            let nodes = codes[j - 1].len() / self.code_dim();
            let (f, cache) = self.part_decoders[j - 1].forward(&self.store, &codes[j - 1], nodes, points, true);
            fields.push(f);
            parts.push(cache.expect("cache requested"));
        }
        (
            FieldTree {
                batch: points.len(),
                fields,
                codes,
            },
            ForwardCache {
                encoder,
                features,
                parts,
            },
        )
    }

    /// Parameter gradients for `dL/dfields` (one entry per evaluated level).
    ///
    /// Only groups listed in `trainable` receive gradients; backpropagation stops as soon
    /// as nothing upstream is trainable.
    pub fn backward(&self, cache: &ForwardCache<F>, dfields: &[Vec<F>], trainable: &[ParamGroup]) -> Gradients<F> {
        let mut grads = Gradients::zeros_like(&self.store);
        let upto = cache.parts.len();
        let is = |g: ParamGroup| trainable.contains(&g);
        let enc = cache.encoder.is_some() && is(ParamGroup::Encoder);
        // code_grad[k]: something trainable produces the level-k codes
        let mut code_grad = vec![enc; upto];
        for k in 1..upto {
            code_grad[k] = code_grad[k - 1] || is(ParamGroup::FeatureDecoder(k));
        }
        let c = self.code_dim();
        let mut dcodes: Vec<Vec<F>> = (0..upto).map(|k| vec![F::zero(); (1 << k) * c]).collect();
        for j in 1..=upto {
            let pd_train = is(ParamGroup::PartDecoder(j));
            if !pd_train && !code_grad[j - 1] {
                continue;
            }
            let g = pd_train.then_some(&mut grads);
            let dc = self.part_decoders[j - 1].backward(
                &self.store,
                &cache.parts[j - 1],
                &dfields[j - 1],
                g,
                code_grad[j - 1],
            );
            if let Some(dc) = dc {
                if dcodes[j - 1].len() != dc.len() {
                    dcodes[j - 1] = vec![F::zero(); dc.len()];
                }
                for (a, b) in dcodes[j - 1].iter_mut().zip(dc) {
                    *a += b;
                }
            }
        }
        for k in (1..upto).rev() {
            if !code_grad[k] {
                continue;
            }
            let fd_train = is(ParamGroup::FeatureDecoder(k));
            let g = fd_train.then_some(&mut grads);
            let dk = std::mem::take(&mut dcodes[k]);
            if let Some(dp) =
                self.feature_decoders[k - 1].backward(&self.store, &cache.features[k - 1], &dk, g, code_grad[k - 1])
            {
                for (a, b) in dcodes[k - 1].iter_mut().zip(dp) {
                    *a += b;
                }
            }
        }
        if enc {
            if let Some(ec) = &cache.encoder {
                self.encoder.backward(&self.store, ec, &dcodes[0], &mut grads);
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::head::HeadKind;

    fn tiny(levels: usize) -> NetworkConfig {
        NetworkConfig {
            levels,
            ..NetworkConfig::tiny()
        }
    }

    fn points(n: usize) -> Vec<[f64; 3]> {
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                [t - 0.5, 0.3 * (7.0 * t).sin(), 0.2 * (3.0 * t).cos()]
            })
            .collect()
    }

    #[test]
    fn levels_hold_two_to_the_j_fields() {
        for n in 1..=4 {
            let net = Network::<f64>::new(tiny(n)).unwrap();
            let grid = VoxelGrid::empty(16);
            let tree = net.forward_hierarchy(&grid, &points(5)).unwrap();
            assert_eq!(tree.levels(), n);
            for j in 1..=n {
                assert_eq!(tree.nodes(j), 1 << j);
                assert!(tree.level(j).iter().all(|&v| v > 0.0 && v <= 1.0));
            }
        }
    }

    #[test]
    fn decoder_census() {
        for n in 1..=4 {
            let net = Network::<f32>::new(tiny(n)).unwrap();
            let groups = net.groups();
            let pd = groups
                .iter()
                .filter(|g| matches!(g, ParamGroup::PartDecoder(_)))
                .count();
            let fd = groups
                .iter()
                .filter(|g| matches!(g, ParamGroup::FeatureDecoder(_)))
                .count();
            assert_eq!((pd, fd), (n, n - 1));
        }
    }

    #[test]
    fn flat_mode_rejects_hierarchy() {
        let cfg = NetworkConfig {
            flat_branches: Some(4),
            ..tiny(3)
        };
        let net = Network::<f32>::new(cfg).unwrap();
        assert_eq!(net.part_decoders.len(), 1);
        assert!(net.feature_decoders.is_empty());
        let err = net.forward_hierarchy(&VoxelGrid::empty(16), &[[0.0; 3]]).unwrap_err();
        assert!(matches!(err, Error::ModeMismatch { .. }));
        let root = vec![0.5f32; 8];
        let tree = net.forward_from_code(&root, &[[0.0; 3]], 1);
        assert_eq!(tree.nodes(1), 4);
    }

    #[test]
    fn children_rows_follow_parent_order() {
        // the two fields of part decoder j for parent n sit at rows 2n and 2n + 1
        let net = Network::<f64>::new(tiny(3)).unwrap();
        let root = net.encode(&VoxelGrid::empty(16)).unwrap();
        let pts = points(4);
        let tree = net.forward_from_code(&root, &pts, 3);
        let codes = &tree.codes[2];
        let c = net.code_dim();
        for n in 0..4 {
            let single = net.part_decoders[2]
                .forward(&net.store, &codes[n * c..(n + 1) * c], 1, &pts, false)
                .0;
            assert_eq!(&single[..4], tree.field(2 * n + 1, 3));
            assert_eq!(&single[4..], tree.field(2 * n + 2, 3));
        }
        let (l, r) = net.decode_features(&tree.codes[1][..c], 2).unwrap();
        assert_eq!(l, tree.codes[2][..c]);
        assert_eq!(r, tree.codes[2][c..2 * c]);
    }

    #[test]
    fn codes_are_open_unit_interval() {
        let net = Network::<f32>::new(NetworkConfig::desk()).unwrap();
        let mut grid = VoxelGrid::empty(32);
        let k = grid.index(10, 12, 14);
        grid.occupancy[k] = 1;
        let code = net.encode(&grid).unwrap();
        assert_eq!(code.len(), 128);
        assert!(code.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(code, net.encode(&grid).unwrap());
    }

    #[test]
    fn encode_rejects_wrong_resolution() {
        let net = Network::<f32>::new(tiny(2)).unwrap();
        assert!(matches!(
            net.encode(&VoxelGrid::empty(32)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn level_range_is_checked() {
        let net = Network::<f32>::new(tiny(2)).unwrap();
        let code = vec![0.5; 8];
        assert!(matches!(
            net.decode_features(&code, 2),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(matches!(
            net.part_decode(&code, &[[0.0; 3]], 3),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(net.part_decode(&code, &[[0.0; 3]], 2).is_ok());
    }

    #[test]
    fn theta_depends_on_point() {
        let mut net = Network::<f64>::new(tiny(1)).unwrap();
        for t in net.store.tensors_mut() {
            for (k, v) in t.value.iter_mut().enumerate() {
                *v += 0.3 * ((k * 7 + t.name.len()) as f64).sin();
            }
        }
        let code = vec![0.4; 8];
        let h = 1e-5;
        let a = net.part_decode(&code, &[[0.1, 0.0, 0.0]], 1).unwrap();
        let b = net.part_decode(&code, &[[0.1 + h, 0.0, 0.0]], 1).unwrap();
        let d = (b[0][0].c[0] - a[0][0].c[0]).abs() + (b[0][0].s - a[0][0].s).abs();
        assert!(d / h > 1e-6);
    }

    #[test]
    fn initial_radii_near_quarter() {
        let net = Network::<f64>::new(tiny(2)).unwrap();
        let th = net.part_decode(&[0.5; 8], &[[0.0; 3]], 1).unwrap();
        for b in &th[0] {
            for r in b.r {
                assert!((r - 0.25).abs() < 0.02, "{r}");
            }
        }
    }

    #[test]
    fn classify_examples() {
        let t = FieldTree::from_rows(vec![vec![vec![0.9, 0.3, 0.7], vec![0.2, 0.3, 0.7]]]);
        assert_eq!(classify_points(&t, 1, 0.5), vec![Some(0), None, Some(0)]);
    }

    #[test]
    fn point_head_range() {
        let cfg = NetworkConfig {
            head_kind: HeadKind::Point,
            ..tiny(2)
        };
        let net = Network::<f64>::new(cfg).unwrap();
        let tree = net.forward_from_code(&[0.5; 8], &points(3), 2);
        assert!(tree.fields.iter().flatten().all(|&v| v > 0.0 && v < 1.0));
    }
}
