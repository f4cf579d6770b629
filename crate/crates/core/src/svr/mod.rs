//! Single-view reconstruction: toy projections, an image encoder regressed onto the
//! frozen 3D latent codes, and hierarchy inference from images.

pub mod encoder;
pub mod render;

pub use encoder::{
    dataset_mse, latent_mse, train_image_encoder, ImageEncoder, SvrConfig, SvrDataset, SvrTrainReport, SVR_VERSION,
};
pub use render::{read_images, render_views, write_images, ImageManifest, View, ViewImage, IMAGE_SIZE};

use crate::data::VoxelGrid;
use crate::error::Result;
use crate::evaluation::volumetric_iou;
use crate::extraction::eval_union_grid;
use crate::network::{FieldTree, Network};

/// Decodes the image encoder's code through the 3D network's decoders.
pub fn svr_infer(
    enc: &ImageEncoder,
    images: &[ViewImage],
    net: &Network<f32>,
    points: &[[f32; 3]],
) -> Result<FieldTree<f32>> {
    let code = enc.encode(images)?;
    Ok(net.forward_from_code(&code, points, net.field_levels()))
}

/// IoU between the deepest-level union field decoded from `root` and `gt`, on `gt`'s grid.
pub fn code_iou(net: &Network<f32>, root: &[f32], gt: &VoxelGrid) -> Result<f64> {
    let level = net.field_levels();
    let pred = eval_union_grid(net, root, level, gt.dim).binarize(net.config.inside_threshold);
    volumetric_iou(&pred, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_toy_shape, voxelize, Category};
    use crate::network::NetworkConfig;

    #[test]
    fn encoder_code_path_matches_autoencoder() {
        let net = Network::<f32>::new(NetworkConfig::tiny()).unwrap();
        let grid = voxelize(&gen_toy_shape(Category::Table, 2), 16);
        let pts = [[0.1f32, -0.2, 0.3], [0.0, 0.0, 0.0]];
        let ae = net.forward_hierarchy(&grid, &pts).unwrap();
        let code = net.encode(&grid).unwrap();
        let via = net.forward_from_code(&code, &pts, net.field_levels());
        assert_eq!(ae.fields, via.fields);

        let enc = ImageEncoder::new(
            SvrConfig {
                channels: vec![4, 8, 8],
                ..Default::default()
            },
            8,
        )
        .unwrap();
        let imgs = render_views(&grid, &[View::FRONT], true);
        let a = svr_infer(&enc, &imgs, &net, &pts).unwrap();
        let b = svr_infer(&enc, &imgs.clone(), &net, &pts).unwrap();
        assert_eq!(a.fields, b.fields);
        assert_eq!(a.levels(), 2);
    }
}
