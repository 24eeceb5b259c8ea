use crate::error::{Error, Result};
use crate::tensor::{relu, Conv2d, FeatureMap};

/// Heatmap probabilities are clamped to `[HEATMAP_CLAMP, 1 - HEATMAP_CLAMP]`.
pub const HEATMAP_CLAMP: f64 = 1e-4;

/// Radar-to-LiDAR fusion: LiDAR channels first, then the enhanced Radar
/// channels. When the Radar map is coarser by an integer factor it is
/// upsampled by nearest-neighbour replication first.
pub fn r2l_concat(m_l: &FeatureMap, enhanced_radar: &FeatureMap) -> Result<FeatureMap> {
    let radar = if enhanced_radar.height() == m_l.height() && enhanced_radar.width() == m_l.width()
    {
        enhanced_radar.clone()
    } else {
        let fy = m_l.height() / enhanced_radar.height().max(1);
        let fx = m_l.width() / enhanced_radar.width().max(1);
        if fy != fx
            || fy == 0
            || enhanced_radar.height() * fy != m_l.height()
            || enhanced_radar.width() * fx != m_l.width()
        {
            return Err(Error::shape(format!(
                "radar map {}x{} cannot be replicated onto lidar map {}x{}",
                enhanced_radar.height(),
                enhanced_radar.width(),
                m_l.height(),
                m_l.width()
            )));
        }
        enhanced_radar.replicate(fy)?
    };
    FeatureMap::concat_channels(&[m_l, &radar])
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw head maps. `heatmap` is the clamped sigmoid of `logits`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub logits: FeatureMap,
    pub heatmap: FeatureMap,
    /// BEV center offset from the cell center, meters.
    pub offset: FeatureMap,
    pub z: FeatureMap,
    /// `ln l, ln w, ln h`.
    pub size: FeatureMap,
    /// `sin yaw, cos yaw`.
    pub rot: FeatureMap,
    pub vel: FeatureMap,
}

impl HeadOutputs {
    pub fn from_logits(
        logits: FeatureMap,
        offset: FeatureMap,
        z: FeatureMap,
        size: FeatureMap,
        rot: FeatureMap,
        vel: FeatureMap,
    ) -> Result<Self> {
        let (h, w) = (logits.height(), logits.width());
        for (name, m, c) in [
            ("offset", &offset, 2),
            ("z", &z, 1),
            ("size", &size, 3),
            ("rot", &rot, 2),
            ("vel", &vel, 2),
        ] {
            if m.shape() != [c, h, w] {
                return Err(Error::shape(format!(
                    "{name} map is {:?}, expected {:?}",
                    m.shape(),
                    [c, h, w]
                )));
            }
        }
        let heatmap = logits.map(|x| sigmoid(x).clamp(HEATMAP_CLAMP, 1.0 - HEATMAP_CLAMP));
        Ok(Self {
            logits,
            heatmap,
            offset,
            z,
            size,
            rot,
            vel,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.logits.channels()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.logits.height(), self.logits.width())
    }
}

/// Shared conv trunk followed by 1x1 heads for the class heatmaps and the
/// class-agnostic regression maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionHead {
    pub trunk: Vec<Conv2d>,
    pub heatmap: Conv2d,
    pub offset: Conv2d,
    pub z: Conv2d,
    pub size: Conv2d,
    pub rot: Conv2d,
    pub vel: Conv2d,
}

impl DetectionHead {
    pub fn validate(&self, in_channels: usize) -> Result<()> {
        let mut c = in_channels;
        for (k, b) in self.trunk.iter().enumerate() {
            if b.in_channels != c
                || b.stride != 1
                || b.padding != b.kh / 2
                || b.kh != b.kw
                || b.kh % 2 == 0
            {
                return Err(Error::shape(format!(
                    "detection trunk block {k} does not chain"
                )));
            }
            c = b.out_channels;
        }
        for (name, head, out) in [
            ("offset", &self.offset, 2),
            ("z", &self.z, 1),
            ("size", &self.size, 3),
            ("rot", &self.rot, 2),
            ("vel", &self.vel, 2),
        ] {
            if head.in_channels != c || head.out_channels != out || head.kh != 1 || head.kw != 1 {
                return Err(Error::shape(format!("{name} head must be 1x1 {c}->{out}")));
            }
        }
        if self.heatmap.in_channels != c || self.heatmap.kh != 1 || self.heatmap.kw != 1 {
            return Err(Error::shape(format!(
                "heatmap head must be 1x1 from {c} channels"
            )));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.heatmap.out_channels
    }

    pub fn forward(&self, features: &FeatureMap) -> Result<HeadOutputs> {
        self.validate(features.channels())?;
        let mut x = features.clone();
        for b in &self.trunk {
            x = b.forward(&x)?.map(relu);
        }
        HeadOutputs::from_logits(
            self.heatmap.forward(&x)?,
            self.offset.forward(&x)?,
            self.z.forward(&x)?,
            self.size.forward(&x)?,
            self.rot.forward(&x)?,
            self.vel.forward(&x)?,
        )
    }
}
