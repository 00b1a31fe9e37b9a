//! Superpixel partitions: a deterministic tile grid and SLIC-style clustering,
//! plus 4-connected adjacency and the block grid used by the context layer.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imagedata::LabeledImage;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    pub width: usize,
    pub height: usize,
    /// Row-major superpixel index per pixel, dense in `[0, n)`.
    pub assignment: Vec<u32>,
    pub n: usize,
    /// Mean (row, col) of each superpixel's pixel indices.
    pub centroids: Vec<(f64, f64)>,
    /// Sorted 4-connected neighbour lists.
    pub neighbors: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    pub blocks: BlockGrid,
    pub block_of: Vec<usize>,
}

/// `g`×`g` equal rectangles tiling the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub g: usize,
    pub width: usize,
    pub height: usize,
}

impl BlockGrid {
    pub fn new(g: usize, width: usize, height: usize) -> Result<Self> {
        if g < 1 {
            return Err(Error::config("block grid needs at least one block per side"));
        }
        Ok(Self { g, width, height })
    }

    pub fn n_blocks(&self) -> usize {
        self.g * self.g
    }

    /// Block containing the real-valued point (row, col).
    pub fn block_at(&self, row: f64, col: f64) -> usize {
        let cell = |v: f64, extent: usize| ((v * self.g as f64 / extent as f64).floor().max(0.0) as usize).min(self.g - 1);
        cell(row, self.height) * self.g + cell(col, self.width)
    }

    /// Pixel rectangle `(row0, row1, col0, col1)`, half-open, of block `b`.
    pub fn bounds(&self, b: usize) -> (usize, usize, usize, usize) {
        let (br, bc) = (b / self.g, b % self.g);
        let edge = |i: usize, extent: usize| (i * extent).div_ceil(self.g);
        (edge(br, self.height), edge(br + 1, self.height), edge(bc, self.width), edge(bc + 1, self.width))
    }
}

impl SuperpixelMap {
    /// Build a map from a raw assignment, relabelling indices densely in
    /// first-appearance (scan) order.
    pub fn from_assignment(width: usize, height: usize, raw: &[u32], g: usize) -> Result<Self> {
        if raw.len() != width * height || raw.is_empty() {
            return Err(Error::data("assignment does not match image size"));
        }
        let max = *raw.iter().max().unwrap() as usize;
        let mut remap = vec![u32::MAX; max + 1];
        let mut next = 0u32;
        let assignment: Vec<u32> = raw
            .iter()
            .map(|&s| {
                let slot = &mut remap[s as usize];
                if *slot == u32::MAX {
                    *slot = next;
                    next += 1;
                }
                *slot
            })
            .collect();
        let n = next as usize;
        let mut sums = vec![(0.0, 0.0); n];
        let mut sizes = vec![0usize; n];
        for (i, &s) in assignment.iter().enumerate() {
            let s = s as usize;
            sums[s].0 += (i / width) as f64;
            sums[s].1 += (i % width) as f64;
            sizes[s] += 1;
        }
        let centroids = sums
            .iter()
            .zip(&sizes)
            .map(|(&(r, c), &k)| (r / k as f64, c / k as f64))
            .collect();
        let mut map = Self {
            width,
            height,
            assignment,
            n,
            centroids,
            neighbors: Vec::new(),
            sizes,
            blocks: BlockGrid::new(1, width, height)?,
            block_of: vec![0; n],
        };
        map.neighbors = build_adjacency(&map);
        map.assign_blocks(g)?;
        Ok(map)
    }

    /// Recompute `block_of` for a `g`×`g` block grid.
    pub fn assign_blocks(&mut self, g: usize) -> Result<()> {
        self.blocks = BlockGrid::new(g, self.width, self.height)?;
        self.block_of = assign_blocks(self, &self.blocks);
        Ok(())
    }

    /// Pixel indices belonging to each superpixel.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&k| Vec::with_capacity(k)).collect();
        for (i, &s) in self.assignment.iter().enumerate() {
            out[s as usize].push(i);
        }
        out
    }

    /// Broadcast one label per superpixel to a pixel map.
    pub fn pixelize<T: Copy>(&self, per_superpixel: &[T]) -> Vec<T> {
        self.assignment.iter().map(|&s| per_superpixel[s as usize]).collect()
    }

    /// Majority non-negative label of each superpixel, or `None` when all of
    /// its pixels are unknown. Ties go to the lowest class index.
    pub fn majority_labels(&self, labels: &[i32], n_classes: usize) -> Vec<Option<usize>> {
        let mut counts = vec![0usize; self.n * n_classes];
        for (&s, &l) in self.assignment.iter().zip(labels) {
            if l >= 0 && (l as usize) < n_classes {
                counts[s as usize * n_classes + l as usize] += 1;
            }
        }
        counts
            .chunks(n_classes)
            .map(|row| {
                let mut best = 0;
                for c in 1..n_classes {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                (row[best] > 0).then_some(best)
            })
            .collect()
    }

    /// Write the assignment as a 16-bit binary PGM.
    pub fn write_pgm16(&self, path: &Path) -> Result<()> {
        if self.n > u16::MAX as usize {
            return Err(Error::data("too many superpixels for a 16-bit PGM"));
        }
        let mut bytes = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &s in &self.assignment {
            bytes.extend_from_slice(&(s as u16).to_be_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Copy of `pixels` with superpixel boundaries painted white.
    pub fn boundary_overlay(&self, pixels: &[u8]) -> Vec<u8> {
        let mut out = pixels.to_vec();
        for r in 0..self.height {
            for c in 0..self.width {
                let s = self.assignment[r * self.width + c];
                let edge = (c + 1 < self.width && self.assignment[r * self.width + c + 1] != s)
                    || (r + 1 < self.height && self.assignment[(r + 1) * self.width + c] != s);
                if edge {
                    out[3 * (r * self.width + c)..3 * (r * self.width + c) + 3].fill(255);
                }
            }
        }
        out
    }
}

/// Tile counts (rows, cols) for `n` requested superpixels.
fn tile_counts(width: usize, height: usize, n: usize) -> (usize, usize) {
    let k = (n as f64).sqrt().ceil() as usize;
    let mut rows = k.min(height);
    let mut cols = k.min(width);
    if rows * cols < n {
        cols = n.div_ceil(rows).min(width);
    }
    if rows * cols < n {
        // width-limited: grow the other side instead
        rows = n.div_ceil(cols).min(height);
    }
    (rows, cols)
}

fn check_count(width: usize, height: usize, n: usize) -> Result<()> {
    if n < 4 || n > width * height {
        return Err(Error::config(format!(
            "superpixel count {n} outside [4, {}]",
            width * height
        )));
    }
    Ok(())
}

fn grid_assignment(width: usize, height: usize, n: usize) -> Vec<u32> {
    let (rows, cols) = tile_counts(width, height, n);
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let tr = r * rows / height;
        for c in 0..width {
            out.push((tr * cols + c * cols / width) as u32);
        }
    }
    out
}

/// Near-square tiles from a ⌈√n⌉-per-side partition.
pub fn segment_grid(img: &LabeledImage, n: usize, g: usize) -> Result<SuperpixelMap> {
    check_count(img.width, img.height, n)?;
    SuperpixelMap::from_assignment(img.width, img.height, &grid_assignment(img.width, img.height, n), g)
}

/// sRGB (D65) to CIE L*a*b*.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = |v: u8| {
        let c = v as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    // D65 reference white
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub n: usize,
    pub compactness: f64,
    pub iters: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            n: 256,
            compactness: 10.0,
            iters: 10,
        }
    }
}

/// SLIC-style k-means in (L, a, b, row·m/S, col·m/S) seeded at the grid tile
/// centres, followed by 4-connectivity enforcement.
pub fn segment_slic(img: &LabeledImage, params: &SlicParams, g: usize) -> Result<SuperpixelMap> {
    let (w, h) = (img.width, img.height);
    check_count(w, h, params.n)?;
    if !(params.compactness > 0.0) {
        return Err(Error::config("SLIC compactness must be positive"));
    }
    if params.iters < 1 {
        return Err(Error::config("SLIC needs at least one iteration"));
    }

    let lab: Vec<[f64; 3]> = (0..w * h)
        .map(|i| rgb_to_lab([img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]]))
        .collect();
    let step = ((w * h) as f64 / params.n as f64).sqrt();
    let spatial = (params.compactness / step).powi(2);

    // Seeds: centroids of the grid tiles.
    let grid = grid_assignment(w, h, params.n);
    let k = *grid.iter().max().unwrap() as usize + 1;
    let mut centers = vec![[0.0f64; 5]; k];
    let mut counts = vec![0usize; k];
    for (i, &s) in grid.iter().enumerate() {
        let c = &mut centers[s as usize];
        for d in 0..3 {
            c[d] += lab[i][d];
        }
        c[3] += (i / w) as f64;
        c[4] += (i % w) as f64;
        counts[s as usize] += 1;
    }
    for (c, &n) in centers.iter_mut().zip(&counts) {
        if n > 0 {
            c.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    let mut alive: Vec<bool> = counts.iter().map(|&n| n > 0).collect();

    let radius = (2.0 * step).ceil() as isize;
    let mut label = vec![u32::MAX; w * h];
    let mut dist = vec![f64::INFINITY; w * h];
    for _ in 0..params.iters {
        label.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            if !alive[ci] {
                continue;
            }
            let (cr, cc) = (c[3].round() as isize, c[4].round() as isize);
            let r0 = (cr - radius).max(0) as usize;
            let r1 = ((cr + radius) as usize).min(h - 1);
            let c0 = (cc - radius).max(0) as usize;
            let c1 = ((cc + radius).max(0) as usize).min(w - 1);
            for r in r0..=r1 {
                for col in c0..=c1 {
                    let i = r * w + col;
                    let p = &lab[i];
                    let dc = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
                    let ds = (r as f64 - c[3]).powi(2) + (col as f64 - c[4]).powi(2);
                    let d = dc + spatial * ds;
                    if d < dist[i] {
                        dist[i] = d;
                        label[i] = ci as u32;
                    }
                }
            }
        }
        // Pixels outside every search window fall back to a full scan.
        for i in 0..w * h {
            if label[i] == u32::MAX {
                let (r, col) = ((i / w) as f64, (i % w) as f64);
                let mut best = (f64::INFINITY, 0);
                for (ci, c) in centers.iter().enumerate().filter(|(ci, _)| alive[*ci]) {
                    let p = &lab[i];
                    let d = (p[0] - c[0]).powi(2)
                        + (p[1] - c[1]).powi(2)
                        + (p[2] - c[2]).powi(2)
                        + spatial * ((r - c[3]).powi(2) + (col - c[4]).powi(2));
                    if d < best.0 {
                        best = (d, ci);
                    }
                }
                label[i] = best.1 as u32;
            }
        }
        let mut sums = vec![[0.0f64; 5]; k];
        let mut n = vec![0usize; k];
        for (i, &l) in label.iter().enumerate() {
            let s = &mut sums[l as usize];
            for d in 0..3 {
                s[d] += lab[i][d];
            }
            s[3] += (i / w) as f64;
            s[4] += (i % w) as f64;
            n[l as usize] += 1;
        }
        for ci in 0..k {
            alive[ci] = n[ci] > 0;
            if alive[ci] {
                centers[ci] = sums[ci].map(|v| v / n[ci] as f64);
            }
        }
    }

    let connected = enforce_connectivity(w, h, &label);
    SuperpixelMap::from_assignment(w, h, &connected, g)
}

/// Label 4-connected components of `label`. Returns per-pixel component ids
/// and the component count.
fn components(w: usize, h: usize, label: &[u32]) -> (Vec<usize>, usize) {
    let mut comp = vec![usize::MAX; w * h];
    let mut n = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = n;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && label[j] == label[i] {
                    comp[j] = n;
                    stack.push(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        n += 1;
    }
    (comp, n)
}

/// Keep the largest component of every cluster; each other component is
/// absorbed into the largest cluster it touches.
fn enforce_connectivity(w: usize, h: usize, label: &[u32]) -> Vec<u32> {
    let (comp, n_comp) = components(w, h, label);
    let mut comp_label = vec![0u32; n_comp];
    let mut comp_size = vec![0usize; n_comp];
    for (i, &c) in comp.iter().enumerate() {
        comp_label[c] = label[i];
        comp_size[c] += 1;
    }
    let n_labels = label.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut keeper = vec![usize::MAX; n_labels];
    for c in 0..n_comp {
        let l = comp_label[c] as usize;
        if keeper[l] == usize::MAX || comp_size[c] > comp_size[keeper[l]] {
            keeper[l] = c;
        }
    }
    let mut touching: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_comp];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w && comp[i] != comp[i + 1] {
                touching[comp[i]].insert(comp[i + 1]);
                touching[comp[i + 1]].insert(comp[i]);
            }
            if r + 1 < h && comp[i] != comp[i + w] {
                touching[comp[i]].insert(comp[i + w]);
                touching[comp[i + w]].insert(comp[i]);
            }
        }
    }

    // Resolved label of each component; orphans start unresolved.
    let mut resolved: Vec<Option<u32>> = (0..n_comp)
        .map(|c| (keeper[comp_label[c] as usize] == c).then_some(comp_label[c]))
        .collect();
    let mut label_size = vec![0usize; n_labels];
    for c in 0..n_comp {
        if let Some(l) = resolved[c] {
            label_size[l as usize] += comp_size[c];
        }
    }
    loop {
        let mut progress = false;
        let mut pending = false;
        for c in 0..n_comp {
            if resolved[c].is_some() {
                continue;
            }
            let best = touching[c]
                .iter()
                .filter_map(|&t| resolved[t])
                .max_by(|&a, &b| label_size[a as usize].cmp(&label_size[b as usize]).then(b.cmp(&a)));
            match best {
                Some(l) => {
                    resolved[c] = Some(l);
                    label_size[l as usize] += comp_size[c];
                    progress = true;
                }
                None => pending = true,
            }
        }
        if !pending || !progress {
            break;
        }
    }
    comp.iter()
        .map(|&c| resolved[c].unwrap_or(comp_label[c]))
        .collect()
}

/// `i ~ j` iff some pixel of `i` is 4-adjacent to a pixel of `j`, `i != j`.
pub fn build_adjacency(map: &SuperpixelMap) -> Vec<Vec<usize>> {
    let (w, h) = (map.width, map.height);
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); map.n];
    let a = &map.assignment;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let s = a[i] as usize;
            if c + 1 < w && a[i + 1] as usize != s {
                sets[s].insert(a[i + 1] as usize);
                sets[a[i + 1] as usize].insert(s);
            }
            if r + 1 < h && a[i + w] as usize != s {
                sets[s].insert(a[i + w] as usize);
                sets[a[i + w] as usize].insert(s);
            }
        }
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Block index of every superpixel centroid.
pub fn assign_blocks(map: &SuperpixelMap, grid: &BlockGrid) -> Vec<usize> {
    map.centroids
        .iter()
        .map(|&(r, c)| grid.block_at(r, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(w: usize, h: usize) -> LabeledImage {
        LabeledImage::unlabeled("b", w, h, vec![128; 3 * w * h]).unwrap()
    }

    #[test]
    fn grid_256_on_256() {
        let m = segment_grid(&blank(256, 256), 256, 4).unwrap();
        assert_eq!(m.n, 256);
        assert!(m.sizes.iter().all(|&s| s == 256));
        assert_eq!(m.assignment[0], m.assignment[15 * 256 + 15]);
        assert_ne!(m.assignment[0], m.assignment[16]);
    }

    #[test]
    fn grid_four_tiles_on_10x10() {
        let m = segment_grid(&blank(10, 10), 4, 1).unwrap();
        assert_eq!(m.n, 4);
        assert!(m.sizes.iter().all(|&s| s == 25));
        // 4-connectivity: diagonal tiles are not neighbours
        assert_eq!(m.neighbors, vec![vec![1, 2], vec![0, 3], vec![0, 3], vec![1, 2]]);
    }

    #[test]
    fn grid_one_pixel_each_at_maximum() {
        for (w, h) in [(6, 6), (3, 7), (8, 2)] {
            let m = segment_grid(&blank(w, h), w * h, 1).unwrap();
            assert_eq!(m.n, w * h);
            assert!(m.sizes.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn grid_count_in_range() {
        for n in 4..80 {
            let m = segment_grid(&blank(40, 40), n, 1).unwrap();
            let k = (n as f64).sqrt().ceil() as usize;
            assert!(m.n >= n && m.n <= k * k, "n={n} got {}", m.n);
        }
    }

    #[test]
    fn count_out_of_range() {
        assert!(segment_grid(&blank(4, 4), 3, 1).is_err());
        assert!(segment_grid(&blank(4, 4), 17, 1).is_err());
        let p = SlicParams { n: 2, ..Default::default() };
        assert!(segment_slic(&blank(4, 4), &p, 1).is_err());
    }

    #[test]
    fn slic_rejects_zero_iters_and_compactness() {
        let img = blank(16, 16);
        assert!(segment_slic(&img, &SlicParams { n: 4, compactness: 10.0, iters: 0 }, 1).is_err());
        assert!(segment_slic(&img, &SlicParams { n: 4, compactness: 0.0, iters: 3 }, 1).is_err());
    }

    #[test]
    fn slic_uniform_matches_grid() {
        let img = blank(32, 32);
        let slic = segment_slic(&img, &SlicParams { n: 16, compactness: 10.0, iters: 10 }, 1).unwrap();
        let grid = segment_grid(&img, 16, 1).unwrap();
        // Uniform colour leaves only the spatial term: the Voronoi cells of
        // the tile centres, which are the tiles themselves.
        assert_eq!(slic.assignment, grid.assignment);
    }

    #[test]
    fn slic_two_tone_regions_are_unions_of_superpixels() {
        // 4x4, left half red, right half blue, vanishing compactness
        let mut px = Vec::new();
        for _r in 0..4 {
            for c in 0..4 {
                px.extend_from_slice(if c < 2 { &[220, 20, 20] } else { &[20, 20, 220] });
            }
        }
        let img = LabeledImage::unlabeled("t", 4, 4, px).unwrap();
        let m = segment_slic(&img, &SlicParams { n: 4, compactness: 1e-9, iters: 1 }, 1).unwrap();
        for s in 0..m.n {
            let cols: BTreeSet<bool> = (0..16).filter(|&i| m.assignment[i] as usize == s).map(|i| i % 4 < 2).collect();
            assert_eq!(cols.len(), 1, "superpixel {s} straddles the colour edge");
        }
    }

    #[test]
    fn adjacency_corner_tiles_have_two() {
        let m = segment_grid(&blank(8, 8), 4, 1).unwrap();
        assert!(m.neighbors.iter().all(|n| n.len() == 2));
    }

    #[test]
    fn adjacency_single_superpixel_empty() {
        let m = SuperpixelMap::from_assignment(5, 5, &[0; 25], 1).unwrap();
        assert_eq!(m.neighbors, vec![Vec::<usize>::new()]);
    }

    #[test]
    fn blocks() {
        let m = segment_grid(&blank(16, 16), 16, 1).unwrap();
        assert!(m.block_of.iter().all(|&b| b == 0));
        let grid = BlockGrid::new(4, 256, 256).unwrap();
        assert_eq!(grid.block_at(10.0, 200.0), 3);
        let m = segment_grid(&blank(256, 256), 256, 4).unwrap();
        let mut per_block = [0usize; 16];
        m.block_of.iter().for_each(|&b| per_block[b] += 1);
        assert_eq!(per_block, [16; 16]);
        assert!(BlockGrid::new(0, 4, 4).is_err());
    }

    #[test]
    fn block_bounds_tile_image() {
        let grid = BlockGrid::new(3, 10, 7).unwrap();
        let mut cover = vec![0; 70];
        for b in 0..9 {
            let (r0, r1, c0, c1) = grid.bounds(b);
            for r in r0..r1 {
                for c in c0..c1 {
                    cover[r * 10 + c] += 1;
                    assert_eq!(grid.block_at(r as f64, c as f64), b);
                }
            }
        }
        assert!(cover.iter().all(|&k| k == 1));
    }

    #[test]
    fn majority_labels_skip_unknown() {
        let m = SuperpixelMap::from_assignment(4, 1, &[0, 0, 1, 1], 1).unwrap();
        assert_eq!(m.majority_labels(&[2, 2, -1, -1], 3), vec![Some(2), None]);
        assert_eq!(m.majority_labels(&[1, 0, -1, 2], 3), vec![Some(0), Some(2)]);
    }

    #[test]
    fn connectivity_absorbs_orphans() {
        // label 0 split into two pieces by label 1; the small piece joins 1
        let label = [0, 0, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let out = enforce_connectivity(4, 3, &label);
        let (_, n) = components(4, 3, &out);
        let distinct: BTreeSet<u32> = out.iter().copied().collect();
        assert_eq!(n, distinct.len());
    }
}
