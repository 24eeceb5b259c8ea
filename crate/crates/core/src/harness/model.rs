use crate::error::Result;
use crate::fusion::{
    neighborhood_registry, search_registry, L2rFusion, QbfConfig, QhfConfig, PSI_INPUTS,
};
use crate::grid::LIDAR_POINT_FEATURES;
use crate::harness::config::{PipelineConfig, WeightInit};
use crate::head::{BevEncoder, DetectionHead};
use crate::tensor::{seeded_rng, Conv2d, Dense, Mlp};

/// Heatmap logit gain on the smoothed occupancy channel in identity-like mode.
pub const IDENTITY_GAIN: f64 = 4.0;
/// Heatmap logit offset in identity-like mode.
pub const IDENTITY_OFFSET: f64 = 6.0;
/// Heatmap bias of random weights: logit of a 0.01 prior, so an untrained
/// head starts from near-empty heatmaps.
pub const HEATMAP_PRIOR_BIAS: f64 = -4.59511985013459;

/// Every learnable block of the pipeline.
#[derive(Clone)]
pub struct Model {
    pub voxel_mlp: Mlp,
    pub zstack_mlp: Mlp,
    pub pillar_mlp: Mlp,
    pub l2r: L2rFusion,
    pub encoder: BevEncoder,
    pub head: DetectionHead,
}

impl Model {
    /// Builds the network for a validated config.
    pub fn build(cfg: &PipelineConfig) -> Result<Self> {
        let grids = cfg.grids()?;
        let ch = &cfg.channels;
        let mut rng = seeded_rng(cfg.weight_seed);
        let voxel_mlp = Mlp::random(&mut rng, &[LIDAR_POINT_FEATURES, ch.voxel], true)?;
        let zstack_mlp = Mlp::random(&mut rng, &[ch.voxel * grids.lidar.nz(), ch.c1], false)?;
        let pillar_mlp = Mlp::random(
            &mut rng,
            &[cfg.radar_variant.point_features(), ch.c2],
            false,
        )?;
        let psi = Mlp::random(
            &mut rng,
            &[PSI_INPUTS, cfg.qhf.psi_hidden, cfg.qhf.psi_width],
            true,
        )?;
        let qhf_head = Mlp::random(
            &mut rng,
            &[cfg.num_segments() * cfg.qhf.psi_width, cfg.qhf.eta_width],
            false,
        )?;
        let psi_prime = Mlp::random(&mut rng, &[ch.voxel + 2, cfg.qbf.eta_width], true)?;
        let qhf = QhfConfig::new(
            cfg.qhf.r,
            cfg.pillar_height(),
            cfg.range_min[2],
            cfg.qhf.ball_radius,
            cfg.qhf.max_group,
            psi,
            qhf_head,
        )?;
        let qbf = QbfConfig::new(
            (cfg.qbf.window[0], cfg.qbf.window[1]),
            cfg.qbf.max_group,
            psi_prime,
        )?;
        let l2r = L2rFusion {
            qhf,
            qbf,
            search: search_registry().get(&cfg.qhf.search)?,
            neighborhood: neighborhood_registry().get(&cfg.qbf.distance_mode)?,
        };
        let fused = ch.c1 + l2r.enhanced_width(ch.c2);
        let e = ch.encoder;
        let mut conv = |o, i, k| Conv2d::random(&mut rng, o, i, k, 1, k / 2);
        let encoder = BevEncoder::new([
            conv(e[0], fused, 3),
            conv(e[1], e[0], 3),
            conv(e[2], e[1], 3),
        ])?;
        let mut head = DetectionHead {
            trunk: vec![conv(ch.trunk, e[2], 3), conv(ch.trunk, ch.trunk, 3)],
            heatmap: conv(cfg.num_classes, ch.trunk, 1),
            offset: conv(2, ch.trunk, 1),
            z: conv(1, ch.trunk, 1),
            size: conv(3, ch.trunk, 1),
            rot: conv(2, ch.trunk, 1),
            vel: conv(2, ch.trunk, 1),
        };
        head.heatmap.bias.fill(HEATMAP_PRIOR_BIAS);
        head.validate(e[2])?;
        let mut model = Self {
            voxel_mlp,
            zstack_mlp,
            pillar_mlp,
            l2r,
            encoder,
            head,
        };
        if cfg.weights == WeightInit::IdentityLike {
            model.make_identity_like(cfg, grids.lidar.nz())?;
        }
        Ok(model)
    }

    fn make_identity_like(&mut self, cfg: &PipelineConfig, nz: usize) -> Result<()> {
        let ch = &cfg.channels;
        // every occupied voxel gets feature e0
        let mut voxel = Dense::zeros(LIDAR_POINT_FEATURES, ch.voxel);
        voxel.bias[0] = 1.0;
        self.voxel_mlp = Mlp::new(vec![voxel], true)?;
        // M_L channel 0 counts occupied z slots in the column
        let mut zstack = Dense::zeros(ch.voxel * nz, ch.c1);
        for k in 0..nz {
            zstack.weight[k * ch.voxel] = 1.0;
        }
        self.zstack_mlp = Mlp::new(vec![zstack], false)?;

        let blocks = self.encoder.blocks();
        let e = [
            box_average(blocks[0].out_channels, blocks[0].in_channels),
            box_average(blocks[1].out_channels, blocks[1].in_channels),
            box_average(blocks[2].out_channels, blocks[2].in_channels),
        ];
        self.encoder = BevEncoder::new(e)?;
        let t = ch.trunk;
        self.head.trunk = vec![box_average(t, ENCODER_OUT), box_average(t, t)];
        let mut hm = Conv2d::zeros(cfg.num_classes, t, 1, 1, 0);
        hm.kernel[0] = IDENTITY_GAIN;
        hm.bias.fill(-IDENTITY_OFFSET);
        for c in 1..cfg.num_classes {
            hm.bias[c] = -4.0 * IDENTITY_OFFSET;
        }
        self.head.heatmap = hm;
        for head in [
            &mut self.head.offset,
            &mut self.head.z,
            &mut self.head.size,
            &mut self.head.rot,
            &mut self.head.vel,
        ] {
            *head = Conv2d::zeros(head.out_channels, t, 1, 1, 0);
        }
        self.head.validate(ENCODER_OUT)
    }
}

const ENCODER_OUT: usize = crate::head::ENCODER_CHANNELS;

/// 3x3 mean of input channel 0 into output channel 0; everything else zero.
fn box_average(out: usize, inp: usize) -> Conv2d {
    let mut c = Conv2d::same(out, inp, 3);
    for ky in 0..3 {
        for kx in 0..3 {
            let idx = c.kernel_index(0, 0, ky, kx);
            c.kernel[idx] = 1.0 / 9.0;
        }
    }
    c
}
