//! Per-superpixel visual descriptors and train-set standardization.
//!
//! The default catalog (`sp60-v1`) has 60 dimensions:
//!
//! | group            | dims | contents                                          |
//! |------------------|------|---------------------------------------------------|
//! | `rgb_stats`      | 6    | mean and std of R, G, B (scaled to [0, 1])        |
//! | `hsv_stats`      | 6    | circular hue mean, hue concentration, S/V mean+std |
//! | `rgb_hist`       | 24   | 8 bins per channel, each channel L1-normalized    |
//! | `grad_mag`       | 2    | Sobel magnitude mean and std on grayscale         |
//! | `grad_orient`    | 8    | magnitude-weighted orientation histogram          |
//! | `lbp_hist`       | 10   | rotation-invariant uniform LBP, popcount 0..8 + 1 |
//! | `centroid`       | 2    | (row + 0.5) / H, (col + 0.5) / W                  |
//! | `area`           | 1    | pixel count / (H·W)                               |
//! | `aspect`         | 1    | bounding-box width / height                       |

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::imagedata::LabeledImage;
use crate::superpix::SuperpixelMap;

pub const CATALOG_VERSION: &str = "sp60-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descriptor {
    pub name: &'static str,
    pub dims: usize,
    pub extractor: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureCatalog {
    pub version: &'static str,
    pub entries: Vec<Descriptor>,
}

impl Default for FeatureCatalog {
    fn default() -> Self {
        let d = |name, dims, extractor| Descriptor { name, dims, extractor };
        Self {
            version: CATALOG_VERSION,
            entries: vec![
                d("rgb_stats", 6, "rgb_mean_std"),
                d("hsv_stats", 6, "hsv_circular"),
                d("rgb_hist", 24, "rgb_hist8"),
                d("grad_mag", 2, "sobel_mag"),
                d("grad_orient", 8, "sobel_orient8"),
                d("lbp_hist", 10, "lbp_riu2"),
                d("centroid", 2, "centroid"),
                d("area", 1, "area"),
                d("aspect", 1, "bbox_aspect"),
            ],
        }
    }
}

impl FeatureCatalog {
    pub fn len(&self) -> usize {
        self.entries.iter().map(|d| d.dims).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Look up a catalog by version string.
    pub fn by_version(version: &str) -> Option<Self> {
        (version == CATALOG_VERSION).then(Self::default)
    }

    /// Column names, one per dimension.
    pub fn column_names(&self) -> Vec<String> {
        const RGB: [&str; 3] = ["r", "g", "b"];
        let mut out = Vec::with_capacity(self.len());
        for d in &self.entries {
            match d.name {
                "rgb_stats" => {
                    for ch in RGB {
                        out.push(format!("rgb_mean_{ch}"));
                    }
                    for ch in RGB {
                        out.push(format!("rgb_std_{ch}"));
                    }
                }
                "hsv_stats" => out.extend(
                    ["hue_mean", "hue_concentration", "sat_mean", "sat_std", "val_mean", "val_std"]
                        .map(String::from),
                ),
                "rgb_hist" => {
                    for ch in RGB {
                        for b in 0..8 {
                            out.push(format!("hist_{ch}{b}"));
                        }
                    }
                }
                "grad_mag" => out.extend(["grad_mean", "grad_std"].map(String::from)),
                "centroid" => out.extend(["centroid_row", "centroid_col"].map(String::from)),
                name if d.dims == 1 => out.push(name.to_string()),
                name => out.extend((0..d.dims).map(|i| format!("{name}{i}"))),
            }
        }
        out
    }

    /// Index ranges of the histogram groups that sum to one.
    pub fn histogram_groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for d in &self.entries {
            match d.name {
                "rgb_hist" => (0..3).for_each(|c| out.push(start + 8 * c..start + 8 * c + 8)),
                "grad_orient" | "lbp_hist" => out.push(start..start + d.dims),
                _ => {}
            }
            start += d.dims;
        }
        out
    }
}

/// Per-pixel quantities shared by every superpixel of one image.
struct PixelMaps {
    grad_mag: Vec<f64>,
    grad_dir: Vec<f64>,
    lbp_bin: Vec<u8>,
    hsv: Vec<[f64; 3]>,
}

fn rgb_to_hsv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    [hue, sat, max]
}

/// Rotation-invariant uniform LBP bin: the popcount for patterns with at most
/// two circular 0/1 transitions, 9 otherwise.
pub fn lbp_riu2(code: u8) -> u8 {
    let transitions = (code ^ code.rotate_left(1)).count_ones();
    if transitions <= 2 {
        code.count_ones() as u8
    } else {
        9
    }
}

impl PixelMaps {
    fn new(img: &LabeledImage) -> Self {
        let (w, h) = (img.width, img.height);
        let gray: Vec<f64> = img
            .pixels
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect();
        let at = |r: isize, c: isize| {
            let r = r.clamp(0, h as isize - 1) as usize;
            let c = c.clamp(0, w as isize - 1) as usize;
            gray[r * w + c]
        };
        let mut grad_mag = Vec::with_capacity(w * h);
        let mut grad_dir = Vec::with_capacity(w * h);
        let mut lbp_bin = Vec::with_capacity(w * h);
        // clockwise from top-left
        const RING: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)];
        for r in 0..h as isize {
            for c in 0..w as isize {
                let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                    - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
                let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                    - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
                grad_mag.push((gx * gx + gy * gy).sqrt());
                grad_dir.push(gy.atan2(gx).rem_euclid(2.0 * PI));
                let center = at(r, c);
                let mut code = 0u8;
                for (bit, (dr, dc)) in RING.iter().enumerate() {
                    if at(r + dr, c + dc) >= center {
                        code |= 1 << bit;
                    }
                }
                lbp_bin.push(lbp_riu2(code));
            }
        }
        let hsv = img
            .pixels
            .chunks_exact(3)
            .map(|p| rgb_to_hsv([p[0], p[1], p[2]]))
            .collect();
        Self {
            grad_mag,
            grad_dir,
            lbp_bin,
            hsv,
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    // shifted by the first value so constant inputs give exact results
    let Some(k) = values.clone().next() else { return (0.0, 0.0) };
    let n = values.clone().count() as f64;
    let (s, s2) = values.fold((0.0, 0.0), |(s, s2), v| (s + (v - k), s2 + (v - k) * (v - k)));
    let d = s / n;
    (k + d, (s2 / n - d * d).max(0.0).sqrt())
}

fn normalize_or_uniform(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 1e-12 {
        hist.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / hist.len() as f64;
        hist.iter_mut().for_each(|v| *v = u);
    }
}

fn describe(img: &LabeledImage, maps: &PixelMaps, members: &[usize], out: &mut Vec<f64>) {
    let (w, h) = (img.width, img.height);
    let px = |i: usize, ch: usize| img.pixels[3 * i + ch] as f64 / 255.0;

    // rgb_stats
    let stats: Vec<(f64, f64)> = (0..3).map(|ch| mean_std(members.iter().map(move |&i| px(i, ch)))).collect();
    out.extend(stats.iter().map(|s| s.0));
    out.extend(stats.iter().map(|s| s.1));

    // hsv_stats
    let n = members.len() as f64;
    let (sin, cos) = members.iter().fold((0.0, 0.0), |(s, c), &i| {
        let a = 2.0 * PI * maps.hsv[i][0];
        (s + a.sin(), c + a.cos())
    });
    let (sin, cos) = (sin / n, cos / n);
    let concentration = (sin * sin + cos * cos).sqrt();
    let hue_mean = if concentration > 1e-12 { sin.atan2(cos).rem_euclid(2.0 * PI) / (2.0 * PI) } else { 0.0 };
    let (s_mean, s_std) = mean_std(members.iter().map(|&i| maps.hsv[i][1]));
    let (v_mean, v_std) = mean_std(members.iter().map(|&i| maps.hsv[i][2]));
    out.extend([hue_mean, concentration, s_mean, s_std, v_mean, v_std]);

    // rgb_hist
    for ch in 0..3 {
        let mut hist = [0.0; 8];
        for &i in members {
            hist[img.pixels[3 * i + ch] as usize / 32] += 1.0;
        }
        normalize_or_uniform(&mut hist);
        out.extend(hist);
    }

    // grad_mag
    let (gm, gs) = mean_std(members.iter().map(|&i| maps.grad_mag[i]));
    out.extend([gm, gs]);

    // grad_orient
    let mut orient = [0.0; 8];
    for &i in members {
        let bin = ((maps.grad_dir[i] / (2.0 * PI) * 8.0) as usize).min(7);
        orient[bin] += maps.grad_mag[i];
    }
    normalize_or_uniform(&mut orient);
    out.extend(orient);

    // lbp_hist
    let mut lbp = [0.0; 10];
    for &i in members {
        lbp[maps.lbp_bin[i] as usize] += 1.0;
    }
    normalize_or_uniform(&mut lbp);
    out.extend(lbp);

    // geometry
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    let (mut rs, mut cs) = (0.0, 0.0);
    for &i in members {
        let (r, c) = (i / w, i % w);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
        rs += r as f64 + 0.5;
        cs += c as f64 + 0.5;
    }
    out.extend([rs / n / h as f64, cs / n / w as f64]);
    out.push(n / (w * h) as f64);
    out.push((c1 - c0 + 1) as f64 / (r1 - r0 + 1) as f64);
}

/// One feature vector per superpixel using the default catalog.
pub fn extract_features(img: &LabeledImage, map: &SuperpixelMap) -> Result<Vec<Vec<f64>>> {
    if (map.width, map.height) != (img.width, img.height) {
        return Err(Error::data(format!(
            "{}: superpixel map is {}x{} but image is {}x{}",
            img.id, map.width, map.height, img.width, img.height
        )));
    }
    let dims = FeatureCatalog::default().len();
    let maps = PixelMaps::new(img);
    Ok(map
        .members()
        .iter()
        .map(|members| {
            let mut v = Vec::with_capacity(dims);
            describe(img, &maps, members, &mut v);
            debug_assert_eq!(v.len(), dims);
            v
        })
        .collect())
}

/// Per-dimension affine standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::data("standardizer needs at least two training vectors"));
        }
        let dims = rows[0].len();
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::data("feature rows differ in length"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dims];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dims];
        for r in rows {
            var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2));
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Feature matrix as CSV with a header of catalog column names.
pub fn write_feature_csv<W: Write>(mut out: W, catalog: &FeatureCatalog, rows: &[Vec<f64>]) -> std::io::Result<()> {
    writeln!(out, "{}", catalog.column_names().join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpix::segment_grid;

    fn offset(name: &str) -> usize {
        let cat = FeatureCatalog::default();
        let mut o = 0;
        for d in &cat.entries {
            if d.name == name {
                return o;
            }
            o += d.dims;
        }
        panic!("no group {name}");
    }

    #[test]
    fn catalog_has_sixty_named_columns() {
        let cat = FeatureCatalog::default();
        assert_eq!(cat.len(), 60);
        let names = cat.column_names();
        assert_eq!(names.len(), 60);
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), 60);
    }

    #[test]
    fn uniform_gray_region() {
        let img = LabeledImage::unlabeled("g", 8, 8, vec![120; 192]).unwrap();
        let map = segment_grid(&img, 4, 1).unwrap();
        let f = extract_features(&img, &map).unwrap();
        for v in &f {
            assert_eq!(&v[3..6], &[0.0; 3]);
            assert_eq!(v[offset("grad_mag")], 0.0);
            let o = offset("grad_orient");
            assert!(v[o..o + 8].iter().all(|&x| (x - 0.125).abs() < 1e-15));
        }
    }

    #[test]
    fn full_image_geometry() {
        let img = LabeledImage::unlabeled("g", 7, 5, vec![10; 105]).unwrap();
        let map = crate::superpix::SuperpixelMap::from_assignment(7, 5, &[0; 35], 1).unwrap();
        let v = &extract_features(&img, &map).unwrap()[0];
        let o = offset("centroid");
        assert!((v[o] - 0.5).abs() < 1e-12 && (v[o + 1] - 0.5).abs() < 1e-12);
        assert_eq!(v[offset("area")], 1.0);
        assert!((v[offset("aspect")] - 7.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_histogram_splits_evenly() {
        let mut px = Vec::new();
        for r in 0..4 {
            for c in 0..4 {
                px.extend_from_slice(if (r + c) % 2 == 0 { &[10, 10, 10] } else { &[240, 240, 240] });
            }
        }
        let img = LabeledImage::unlabeled("c", 4, 4, px).unwrap();
        let map = crate::superpix::SuperpixelMap::from_assignment(4, 4, &[0; 16], 1).unwrap();
        let v = &extract_features(&img, &map).unwrap()[0];
        let o = offset("rgb_hist");
        for ch in 0..3 {
            let hist = &v[o + 8 * ch..o + 8 * ch + 8];
            assert_eq!(hist[0], 0.5);
            assert_eq!(hist[7], 0.5);
            assert_eq!(hist.iter().filter(|&&x| x > 0.0).count(), 2);
        }
    }

    #[test]
    fn circular_hue_mean_wraps() {
        // hues near 0.95 and 0.05 average to ~0.0, not 0.5
        let a = rgb_to_hsv([255, 0, 77]); // ~0.95
        let b = rgb_to_hsv([255, 77, 0]); // ~0.05
        assert!(a[0] > 0.9 && b[0] < 0.1);
        let mut px = Vec::new();
        for i in 0..4 {
            px.extend_from_slice(if i % 2 == 0 { &[255, 0, 77] } else { &[255, 77, 0] });
        }
        let img = LabeledImage::unlabeled("h", 2, 2, px).unwrap();
        let map = crate::superpix::SuperpixelMap::from_assignment(2, 2, &[0; 4], 1).unwrap();
        let v = &extract_features(&img, &map).unwrap()[0];
        let hue = v[offset("hsv_stats")];
        assert!(!(0.01..=0.99).contains(&hue), "hue mean {hue}");
    }

    #[test]
    fn lbp_bins() {
        assert_eq!(lbp_riu2(0), 0);
        assert_eq!(lbp_riu2(0xFF), 8);
        assert_eq!(lbp_riu2(0b0000_0111), 3);
        assert_eq!(lbp_riu2(0b0101_0101), 9);
    }

    #[test]
    fn standardizer_two_points() {
        let s = Standardizer::fit(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        assert_eq!(s.apply(&[0.0]), vec![-1.0]);
        assert_eq!(s.apply(&[2.0]), vec![1.0]);
    }

    #[test]
    fn standardizer_constant_dimension_passes_through() {
        let s = Standardizer::fit(&[vec![3.0, 1.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.apply(&[3.0, 1.0])[0], 0.0);
        assert_eq!(s.apply(&[4.5, 1.0])[0], 1.5);
    }

    #[test]
    fn standardizer_needs_two_rows() {
        assert!(Standardizer::fit(&[vec![1.0]]).is_err());
    }

    #[test]
    fn csv_header_matches_catalog() {
        let cat = FeatureCatalog::default();
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &cat, &[vec![0.5; 60]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 60);
        assert_eq!(lines.next().unwrap().split(',').count(), 60);
    }
}
