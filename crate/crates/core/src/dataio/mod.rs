//! Procedural RGB-D sample generation, dataset file I/O, domain mixing, and
//! augmentation.
//!
//! On-disk layout: `<root>/<split>/<id>/{rgb.ppm, depth.pfm, mask.pgm, meta.txt}`
//! where `meta.txt` carries `domain=` and `far_plane=` lines.

pub mod formats;
pub mod scene;

pub use scene::{generate_scene, generate_scene_opts, GenOptions, CODEC_FACTOR, OUTDOOR_FAR_PLANE};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, DomainTag, RgbImage, Sample, ValidityMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

pub const RGB_FILE: &str = "rgb.ppm";
pub const DEPTH_FILE: &str = "depth.pfm";
pub const MASK_FILE: &str = "mask.pgm";
pub const META_FILE: &str = "meta.txt";

/// Writes one sample into `dir`, returning the paths written.
pub fn write_sample(sample: &Sample, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rgb = dir.join(RGB_FILE);
    let depth = dir.join(DEPTH_FILE);
    let mask = dir.join(MASK_FILE);
    let meta = dir.join(META_FILE);
    formats::write_ppm(&rgb, &sample.rgb.0)?;
    formats::write_pfm(&depth, &sample.depth.0)?;
    formats::write_pgm(&mask, &sample.mask.0)?;
    let meta_text = format!(
        "domain={}\nfar_plane={}\n",
        sample.domain_tag.as_str(),
        sample.far_plane
    );
    std::fs::write(&meta, meta_text).map_err(|e| Error::io(&meta, e))?;
    Ok(vec![rgb, depth, mask, meta])
}

/// Reads one sample directory written by [`write_sample`].
pub fn read_sample(dir: &Path) -> Result<Sample> {
    let rgb_path = dir.join(RGB_FILE);
    let depth_path = dir.join(DEPTH_FILE);
    let mask_path = dir.join(MASK_FILE);
    let meta_path = dir.join(META_FILE);

    let rgb = formats::read_ppm(&rgb_path)?;
    let depth = formats::read_pfm(&depth_path)?;
    let mask = formats::read_pgm(&mask_path)?;

    let (h, w) = (depth.shape()[0], depth.shape()[1]);
    if rgb.shape()[0] != h || rgb.shape()[1] != w {
        return Err(Error::parse(
            &rgb_path,
            format!(
                "rgb dims {}x{} disagree with depth {h}x{w}",
                rgb.shape()[0],
                rgb.shape()[1]
            ),
        ));
    }
    if mask.shape() != [h, w] {
        return Err(Error::parse(
            &mask_path,
            format!("mask dims {:?} disagree with depth {h}x{w}", mask.shape()),
        ));
    }

    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut domain = None;
    let mut far_plane = None;
    for line in meta.lines() {
        let line = line.trim();
        if let Some(v) = line.strip_prefix("domain=") {
            domain = Some(DomainTag::parse(v)?);
        } else if let Some(v) = line.strip_prefix("far_plane=") {
            far_plane = Some(
                v.parse::<f32>()
                    .map_err(|_| Error::parse(&meta_path, format!("bad far_plane `{v}`")))?,
            );
        }
    }
    let domain_tag =
        domain.ok_or_else(|| Error::parse(&meta_path, "missing domain= line"))?;
    let far_plane =
        far_plane.ok_or_else(|| Error::parse(&meta_path, "missing far_plane= line"))?;

    Ok(Sample {
        rgb: RgbImage(rgb),
        depth: DepthMap(depth),
        mask: ValidityMask(mask),
        domain_tag,
        far_plane,
    })
}

/// Writes `samples` under `<root>/<split>/<%06d>/`.
pub fn write_dataset(root: &Path, split: &str, samples: &[Sample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        write_sample(s, &root.join(split).join(format!("{i:06}")))?;
    }
    Ok(())
}

/// Reads every sample directory under `<root>/<split>/`, sorted by id.
pub fn read_dataset(root: &Path, split: &str) -> Result<Vec<Sample>> {
    let dir = root.join(split);
    let mut ids: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Config(format!(
            "no sample directories under {}",
            dir.display()
        )));
    }
    ids.iter().map(|p| read_sample(p)).collect()
}

/// Deterministic weighted source mixer. Each draw picks source `i` with
/// probability `ratio_i / sum(ratios)`, then a uniform element index.
pub struct MixtureStream {
    rng: ChaCha8Rng,
    cumulative: Vec<f64>,
    sizes: Vec<usize>,
}

pub fn make_mixture(sizes: &[usize], ratios: &[f64], seed: u64) -> Result<MixtureStream> {
    if sizes.is_empty() {
        return Err(Error::Config("mixture needs at least one source".into()));
    }
    if sizes.len() != ratios.len() {
        return Err(Error::Config(format!(
            "{} sources but {} ratios",
            sizes.len(),
            ratios.len()
        )));
    }
    if ratios.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Config("every mixture ratio must be > 0".into()));
    }
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::Config("mixture source dataset is empty".into()));
    }
    let total: f64 = ratios.iter().sum();
    let mut acc = 0.0;
    let cumulative = ratios
        .iter()
        .map(|r| {
            acc += r / total;
            acc
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x31);
    Ok(MixtureStream {
        rng,
        cumulative,
        sizes: sizes.to_vec(),
    })
}

impl MixtureStream {
    /// Next (source index, element index) pair.
    pub fn draw(&mut self) -> (usize, usize) {
        let u: f64 = self.rng.gen();
        let mut source = self.cumulative.len() - 1;
        for (i, &c) in self.cumulative.iter().enumerate() {
            if u < c {
                source = i;
                break;
            }
        }
        let idx = self.rng.gen_range(0..self.sizes[source]);
        (source, idx)
    }
}

impl Iterator for MixtureStream {
    type Item = (usize, usize);
    fn next(&mut self) -> Option<(usize, usize)> {
        Some(self.draw())
    }
}

/// Mirrors `rgb`, `depth`, and `mask` together along the width with
/// probability `p`.
pub fn augment_hflip(sample: &Sample, p: f64, rng: &mut ChaCha8Rng) -> Sample {
    let u: f64 = rng.gen();
    if u < p {
        sample.flip_horizontal()
    } else {
        sample.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_sample(seed: u64) -> Sample {
        generate_scene(seed, DomainTag::IndoorLike, (32, 32)).unwrap()
    }

    #[test]
    fn sample_round_trip_depth_bit_exact() {
        let dir = tempdir().unwrap();
        let s = small_sample(11);
        write_sample(&s, dir.path()).unwrap();
        let back = read_sample(dir.path()).unwrap();
        assert_eq!(s.depth, back.depth);
        assert_eq!(s.mask, back.mask);
        assert_eq!(s.domain_tag, back.domain_tag);
        assert_eq!(s.far_plane, back.far_plane);
        let max_err = s
            .rgb
            .0
            .iter()
            .zip(back.rgb.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 255.0);
    }

    #[test]
    fn read_sample_reports_dim_mismatch_with_file_name() {
        let dir = tempdir().unwrap();
        let s = small_sample(3);
        write_sample(&s, dir.path()).unwrap();
        // Overwrite the mask with the wrong size.
        let bad = ndarray::Array2::from_elem((16, 16), true);
        formats::write_pgm(&dir.path().join(MASK_FILE), &bad).unwrap();
        let err = read_sample(dir.path()).unwrap_err();
        assert!(err.to_string().contains(MASK_FILE), "{err}");
    }

    #[test]
    fn mixture_nine_to_one_within_three_sigma() {
        let mut m = make_mixture(&[100, 100], &[9.0, 1.0], 1234).unwrap();
        let n = 10_000;
        let zeros = (0..n).map(|_| m.draw()).filter(|&(s, _)| s == 0).count();
        // sigma = sqrt(10000 * 0.9 * 0.1) = 30
        assert!(
            (zeros as f64 - 9000.0).abs() <= 90.0,
            "source-0 count {zeros}"
        );
    }

    #[test]
    fn mixture_single_source_and_determinism() {
        let mut a = make_mixture(&[5], &[1.0], 9).unwrap();
        assert!((0..100).all(|_| a.draw().0 == 0));

        let seq1: Vec<_> = make_mixture(&[7, 3], &[2.0, 1.0], 42)
            .unwrap()
            .take(50)
            .collect();
        let seq2: Vec<_> = make_mixture(&[7, 3], &[2.0, 1.0], 42)
            .unwrap()
            .take(50)
            .collect();
        assert_eq!(seq1, seq2);
    }

    #[test]
    fn mixture_rejects_bad_configs() {
        assert!(make_mixture(&[], &[], 0).is_err());
        assert!(make_mixture(&[3], &[0.0], 0).is_err());
        assert!(make_mixture(&[0], &[1.0], 0).is_err());
        assert!(make_mixture(&[3, 3], &[1.0], 0).is_err());
    }

    #[test]
    fn mixture_chi_square_alpha_01() {
        // Two-source chi-square with df=1; critical value at alpha=0.01.
        let mut m = make_mixture(&[10, 10], &[9.0, 1.0], 777).unwrap();
        let n = 20_000usize;
        let zeros = (0..n).map(|_| m.draw()).filter(|&(s, _)| s == 0).count();
        let ones = n - zeros;
        let e0 = n as f64 * 0.9;
        let e1 = n as f64 * 0.1;
        let chi2 = (zeros as f64 - e0).powi(2) / e0 + (ones as f64 - e1).powi(2) / e1;
        assert!(chi2 < 6.635, "chi2 = {chi2}");
    }

    #[test]
    fn hflip_contract() {
        let s = small_sample(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        let same = augment_hflip(&s, 0.0, &mut rng);
        assert_eq!(same, s);

        let flipped = augment_hflip(&s, 1.0, &mut rng);
        let w = s.depth.width();
        for i in 0..s.depth.height() {
            for j in 0..w {
                assert_eq!(flipped.depth.0[[i, j]], s.depth.0[[i, w - 1 - j]]);
            }
        }
        let twice = augment_hflip(&flipped, 1.0, &mut rng);
        assert_eq!(twice, s);
    }

    #[test]
    fn hflip_moves_rgb_and_depth_edges_together() {
        let s = small_sample(21);
        let f = s.flip_horizontal();
        let (h, w) = (s.depth.height(), s.depth.width());
        // Interior central-difference magnitudes commute with the mirror.
        for i in 1..h - 1 {
            for j in 1..w - 1 {
                let gd = (s.depth.0[[i, j + 1]] - s.depth.0[[i, j - 1]]).abs();
                let gdf = (f.depth.0[[i, w - 1 - j + 1]] - f.depth.0[[i, w - 1 - j - 1]]).abs();
                assert_eq!(gd, gdf);
                let gl = (s.rgb.0[[i, j + 1, 0]] - s.rgb.0[[i, j - 1, 0]]).abs();
                let glf = (f.rgb.0[[i, w - 1 - j + 1, 0]] - f.rgb.0[[i, w - 1 - j - 1, 0]]).abs();
                assert_eq!(gl, glf);
            }
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempdir().unwrap();
        let samples: Vec<Sample> = (0..3).map(small_sample).collect();
        write_dataset(dir.path(), "train", &samples).unwrap();
        let back = read_dataset(dir.path(), "train").unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].depth, samples[1].depth);
    }
}
