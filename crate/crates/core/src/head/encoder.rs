use crate::error::{Error, Result};
use crate::tensor::{relu, Conv2d, FeatureMap};

/// Output width of the BEV encoder.
pub const ENCODER_CHANNELS: usize = 512;

/// Three conv + rectifier blocks that take the fused map to 512 channels at
/// unchanged resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BevEncoder {
    blocks: [Conv2d; 3],
}

impl BevEncoder {
    pub fn new(blocks: [Conv2d; 3]) -> Result<Self> {
        for (k, b) in blocks.iter().enumerate() {
            if b.stride != 1 || b.kh != b.kw || b.kh % 2 == 0 || b.padding != b.kh / 2 {
                return Err(Error::shape(format!(
                    "encoder block {k} must be an odd square kernel with stride 1 and same padding"
                )));
            }
        }
        for k in 0..2 {
            if blocks[k].out_channels != blocks[k + 1].in_channels {
                return Err(Error::shape(format!(
                    "encoder block {k} outputs {} channels, block {} expects {}",
                    blocks[k].out_channels,
                    k + 1,
                    blocks[k + 1].in_channels
                )));
            }
        }
        if blocks[2].out_channels != ENCODER_CHANNELS {
            return Err(Error::shape(format!(
                "encoder must output {ENCODER_CHANNELS} channels, got {}",
                blocks[2].out_channels
            )));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Conv2d; 3] {
        &self.blocks
    }

    pub fn in_channels(&self) -> usize {
        self.blocks[0].in_channels
    }

    pub fn forward(&self, fused: &FeatureMap) -> Result<FeatureMap> {
        let mut x = fused.clone();
        for b in &self.blocks {
            x = b.forward(&x)?.map(relu);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::seeded_rng;

    fn encoder(zero: bool) -> BevEncoder {
        let mut rng = seeded_rng(0);
        let mk = |rng: &mut _, o, i| {
            if zero {
                Conv2d::same(o, i, 3)
            } else {
                Conv2d::random(rng, o, i, 3, 1, 1)
            }
        };
        BevEncoder::new([mk(&mut rng, 8, 6), mk(&mut rng, 8, 8), mk(&mut rng, 512, 8)]).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let out = encoder(true).forward(&FeatureMap::zeros(6, 5, 4)).unwrap();
        assert_eq!(out.shape(), [512, 5, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn always_512_channels_same_dims() {
        let data: Vec<f64> = (0..6 * 7 * 3).map(|i| (i as f64).cos()).collect();
        let out = encoder(false)
            .forward(&FeatureMap::from_vec(6, 7, 3, data).unwrap())
            .unwrap();
        assert_eq!(out.shape(), [512, 7, 3]);
        assert!(out.all_finite());
    }

    #[test]
    fn wrong_final_width_rejected() {
        let r = BevEncoder::new([
            Conv2d::same(8, 6, 3),
            Conv2d::same(8, 8, 3),
            Conv2d::same(256, 8, 3),
        ]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn broken_chain_rejected() {
        let r = BevEncoder::new([
            Conv2d::same(8, 6, 3),
            Conv2d::same(8, 4, 3),
            Conv2d::same(512, 8, 3),
        ]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
