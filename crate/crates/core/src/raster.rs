//! Shared raster types: RGB images, depth maps, validity masks.
//!
//! Rasters are stored as `f32` planes (matching the on-disk float formats);
//! the network stack converts to `f64` at its boundary.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

/// Which procedural domain profile a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainTag {
    IndoorLike,
    OutdoorLike,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::IndoorLike => "indoor_like",
            DomainTag::OutdoorLike => "outdoor_like",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "indoor_like" => Ok(DomainTag::IndoorLike),
            "outdoor_like" => Ok(DomainTag::OutdoorLike),
            other => Err(Error::Config(format!("unknown domain tag `{other}`"))),
        }
    }
}

/// H×W×3 float image, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage(pub Array3<f32>);

/// H×W metric depth in meters, positive where valid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap(pub Array2<f32>);

/// H×W per-pixel validity.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask(pub Array2<bool>);

impl RgbImage {
    pub fn height(&self) -> usize {
        self.0.shape()[0]
    }
    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn flip_horizontal(&self) -> RgbImage {
        let (h, w, c) = (self.height(), self.width(), 3);
        let mut out = Array3::zeros((h, w, c));
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    out[[i, j, k]] = self.0[[i, w - 1 - j, k]];
                }
            }
        }
        RgbImage(out)
    }
}

impl DepthMap {
    pub fn height(&self) -> usize {
        self.0.shape()[0]
    }
    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn flip_horizontal(&self) -> DepthMap {
        let (h, w) = (self.height(), self.width());
        DepthMap(Array2::from_shape_fn((h, w), |(i, j)| {
            self.0[[i, w - 1 - j]]
        }))
    }
}

impl ValidityMask {
    pub fn all_true(h: usize, w: usize) -> ValidityMask {
        ValidityMask(Array2::from_elem((h, w), true))
    }

    pub fn count_valid(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn flip_horizontal(&self) -> ValidityMask {
        let (h, w) = (self.0.shape()[0], self.0.shape()[1]);
        ValidityMask(Array2::from_shape_fn((h, w), |(i, j)| {
            self.0[[i, w - 1 - j]]
        }))
    }
}

/// One RGB-D training or evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub mask: ValidityMask,
    pub domain_tag: DomainTag,
    pub far_plane: f32,
}

impl Sample {
    /// Checks the cross-plane invariants: shared dims, positive valid depth,
    /// far-plane bound for outdoor scenes.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.depth.height(), self.depth.width());
        if self.rgb.height() != h || self.rgb.width() != w {
            return Err(Error::Shape(format!(
                "rgb is {}x{} but depth is {}x{}",
                self.rgb.height(),
                self.rgb.width(),
                h,
                w
            )));
        }
        if self.mask.0.shape() != [h, w] {
            return Err(Error::Shape(format!(
                "mask is {:?} but depth is {}x{}",
                self.mask.0.shape(),
                h,
                w
            )));
        }
        for ((i, j), &m) in self.mask.0.indexed_iter() {
            if m {
                let d = self.depth.0[[i, j]];
                if !(d > 0.0) {
                    return Err(Error::Domain(format!(
                        "valid pixel ({i},{j}) has nonpositive depth {d}"
                    )));
                }
                if self.domain_tag == DomainTag::OutdoorLike && d > self.far_plane + 1e-4 {
                    return Err(Error::Domain(format!(
                        "outdoor pixel ({i},{j}) exceeds far plane: {d} > {}",
                        self.far_plane
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn flip_horizontal(&self) -> Sample {
        Sample {
            rgb: self.rgb.flip_horizontal(),
            depth: self.depth.flip_horizontal(),
            mask: self.mask.flip_horizontal(),
            domain_tag: self.domain_tag,
            far_plane: self.far_plane,
        }
    }
}
