//! Labeled images, class tables, dataset I/O, resizing, splitting and the
//! synthetic scene generator.
//!
//! On disk a dataset is `images/<id>.png|ppm` plus `labels/<id>.txt|pgm`.
//! Text label files carry an `H W` header followed by `H` rows of signed
//! integers. In PGM label maps the maximum sample value (255 or 65535) marks
//! an unknown pixel. Any negative label is canonicalized to [`UNKNOWN`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds;

/// Canonical unknown label.
pub const UNKNOWN: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major, `3 * width * height` bytes.
    pub pixels: Vec<u8>,
    /// Row-major class indices; [`UNKNOWN`] for unlabeled pixels.
    pub labels: Vec<i32>,
}

impl LabeledImage {
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        labels: Vec<i32>,
    ) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::data(format!("{id}: empty image")));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::data(format!(
                "{id}: pixel buffer has {} bytes, expected {}",
                pixels.len(),
                3 * width * height
            )));
        }
        if labels.len() != width * height {
            return Err(Error::data(format!(
                "{id}: label map is {} entries, image is {width}x{height}",
                labels.len()
            )));
        }
        let labels = labels.into_iter().map(|l| l.max(UNKNOWN)).collect();
        Ok(Self {
            id,
            width,
            height,
            pixels,
            labels,
        })
    }

    /// An image whose labels are all unknown.
    pub fn unlabeled(id: impl Into<String>, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(id, width, height, pixels, vec![UNKNOWN; width * height])
    }

    #[inline]
    pub fn rgb(&self, row: usize, col: usize) -> [u8; 3] {
        let o = 3 * (row * self.width + col);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> i32 {
        self.labels[row * self.width + col]
    }

    pub fn is_fully_unknown(&self) -> bool {
        self.labels.iter().all(|&l| l < 0)
    }
}

/// Ordered class names plus an optional raw-label grouping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
    grouping: Option<BTreeMap<i32, usize>>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        Self::with_grouping(names, None)
    }

    pub fn with_grouping(names: Vec<String>, grouping: Option<BTreeMap<i32, usize>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::config("class table has no classes"));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::config(format!("invalid class name {n:?}")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::config(format!("duplicate class name {n:?}")));
            }
        }
        if let Some(g) = &grouping {
            let used: BTreeSet<usize> = g.values().copied().collect();
            if let Some(&bad) = used.iter().find(|&&i| i >= names.len()) {
                return Err(Error::config(format!(
                    "grouping targets index {bad} but only {} classes are named",
                    names.len()
                )));
            }
            if used.len() != names.len() {
                return Err(Error::config("grouped indices must cover every class"));
            }
            if g.keys().any(|&k| k < 0) {
                return Err(Error::config("grouping keys must be non-negative raw labels"));
            }
        }
        Ok(Self { names, grouping })
    }

    pub fn n_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn grouping(&self) -> Option<&BTreeMap<i32, usize>> {
        self.grouping.as_ref()
    }

    /// Map a raw label to its class index, `UNKNOWN`, or an error when out
    /// of range.
    pub fn map_raw(&self, raw: i32) -> Result<i32> {
        if raw < 0 {
            return Ok(UNKNOWN);
        }
        match &self.grouping {
            Some(g) => Ok(g.get(&raw).map_or(UNKNOWN, |&i| i as i32)),
            None if (raw as usize) < self.names.len() => Ok(raw),
            None => Err(Error::data(format!(
                "label {raw} out of range for {} classes",
                self.names.len()
            ))),
        }
    }

    /// Parse the class config format: `name=<class>` lines in index order and
    /// optional `group <raw>-><idx>` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut grouping = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::config(format!("class config line {}: {line:?}", lineno + 1));
            if let Some(name) = line.strip_prefix("name=") {
                names.push(name.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("group ") {
                let (raw, idx) = rest.split_once("->").ok_or_else(bad)?;
                let raw: i32 = raw.trim().parse().map_err(|_| bad())?;
                let idx: usize = idx.trim().parse().map_err(|_| bad())?;
                if grouping.insert(raw, idx).is_some() {
                    return Err(Error::config(format!("raw label {raw} grouped twice")));
                }
            } else {
                return Err(bad());
            }
        }
        let grouping = (!grouping.is_empty()).then_some(grouping);
        Self::with_grouping(names, grouping)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for n in &self.names {
            let _ = writeln!(s, "name={n}");
        }
        if let Some(g) = &self.grouping {
            for (raw, idx) in g {
                let _ = writeln!(s, "group {raw}->{idx}");
            }
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The eleven-class CamVid grouping of the 32 raw CamVid labels, using the
    /// raw label order of the CamVid colour list.
    pub fn camvid11() -> Self {
        const NAMES: [&str; 11] = [
            "sky", "building", "pole", "road", "pavement", "tree", "signsymbol", "fence", "car",
            "pedestrian", "bicyclist",
        ];
        // raw: Animal Archway Bicyclist Bridge Building Car CartLuggagePram
        // Child Column_Pole Fence LaneMkgsDriv LaneMkgsNonDriv Misc_Text
        // MotorcycleScooter OtherMoving ParkingBlock Pedestrian Road
        // RoadShoulder Sidewalk SignSymbol Sky SUVPickupTruck TrafficCone
        // TrafficLight Train Tree Truck_Bus Tunnel VegetationMisc Void Wall
        const GROUP: [i32; 32] = [
            9, 1, 10, 1, 1, 8, 9, 9, 2, 7, 3, 3, 6, 10, 8, 4, 9, 3, 3, 4, 6, 0, 8, 2, 6, 8, 5, 8,
            1, 5, -1, 1,
        ];
        let grouping = GROUP
            .iter()
            .enumerate()
            .filter(|(_, &g)| g >= 0)
            .map(|(raw, &g)| (raw as i32, g as usize))
            .collect();
        Self::with_grouping(NAMES.iter().map(|s| s.to_string()).collect(), Some(grouping))
            .expect("static table is valid")
    }

    /// Stanford Background's eight classes, raw labels 0..7.
    pub fn stanford_background() -> Self {
        let names = ["sky", "tree", "road", "grass", "water", "building", "mountain", "foreground"];
        Self::new(names.iter().map(|s| s.to_string()).collect()).expect("static table is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub classes: ClassTable,
    pub images: Vec<LabeledImage>,
}

impl Dataset {
    pub fn ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledImage> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Images whose ids are listed, in list order.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&LabeledImage>> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .ok_or_else(|| Error::data(format!("image {id:?} not in dataset")))
            })
            .collect()
    }
}

const IMAGE_EXTS: [&str; 3] = ["png", "ppm", "pnm"];

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| IMAGE_EXTS.contains(&e.as_str())) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if out.insert(stem.to_string(), path.clone()).is_some() {
                    return Err(Error::data(format!("two images share the basename {stem:?}")));
                }
            }
        }
    }
    Ok(out)
}

/// Read an RGB image file; any colour type is converted to 8-bit RGB.
pub fn read_rgb(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    Ok((rgb.width() as usize, rgb.height() as usize, rgb.into_raw()))
}

pub fn write_png_rgb(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    image::save_buffer(path, pixels, width as u32, height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Parse a text label map: `H W` header then `H` rows of `W` integers.
pub fn parse_label_text(text: &str) -> Result<(usize, usize, Vec<i32>)> {
    let mut tokens = text.split_whitespace();
    let mut next_usize = |what: &str| -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::data(format!("label file: missing or invalid {what}")))
    };
    let h = next_usize("height")?;
    let w = next_usize("width")?;
    let values: Vec<i32> = tokens
        .map(|t| t.parse().map_err(|_| Error::data(format!("label file: bad value {t:?}"))))
        .collect::<Result<_>>()?;
    if values.len() != h * w {
        return Err(Error::data(format!(
            "label file: header says {h}x{w} but {} values follow",
            values.len()
        )));
    }
    Ok((w, h, values))
}

pub fn format_label_text(width: usize, height: usize, labels: &[i32]) -> String {
    let mut s = format!("{height} {width}\n");
    for row in labels.chunks(width) {
        let line: Vec<String> = row.iter().map(i32::to_string).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

fn read_labels(path: &Path) -> Result<(usize, usize, Vec<i32>)> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let labels = match img {
            image::DynamicImage::ImageLuma8(buf) => buf
                .into_raw()
                .into_iter()
                .map(|v| if v == u8::MAX { UNKNOWN } else { v as i32 })
                .collect(),
            image::DynamicImage::ImageLuma16(buf) => buf
                .into_raw()
                .into_iter()
                .map(|v| if v == u16::MAX { UNKNOWN } else { v as i32 })
                .collect(),
            _ => return Err(Error::data(format!("{}: label PGM must be grayscale", path.display()))),
        };
        Ok((w, h, labels))
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_label_text(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

fn find_label_file(dir: &Path, id: &str) -> Option<PathBuf> {
    ["txt", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

/// Load `root/images` and `root/labels`, remapping raw labels through the
/// class table.
pub fn load_dataset(root: &Path, classes: &ClassTable) -> Result<Dataset> {
    let image_dir = root.join("images");
    let label_dir = root.join("labels");
    let files: Vec<(String, PathBuf)> = image_files(&image_dir)?.into_iter().collect();
    let images = files
        .par_iter()
        .map(|(id, path)| {
            let label_path = find_label_file(&label_dir, id)
                .ok_or_else(|| Error::data(format!("no label file for image {id:?}")))?;
            let (w, h, pixels) = read_rgb(path)?;
            let (lw, lh, raw) = read_labels(&label_path)?;
            if (lw, lh) != (w, h) {
                return Err(Error::data(format!(
                    "{id}: image is {w}x{h} but label map is {lw}x{lh}"
                )));
            }
            let labels = raw
                .into_iter()
                .map(|r| classes.map_raw(r))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::data(format!("{id}: {e}")))?;
            LabeledImage::new(id.clone(), w, h, pixels, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    if images.is_empty() {
        return Err(Error::data(format!("no images found under {}", image_dir.display())));
    }
    Ok(Dataset {
        classes: classes.clone(),
        images,
    })
}

/// Load a dataset using `root/classes.cfg` as its class table.
pub fn load_dataset_dir(root: &Path) -> Result<Dataset> {
    let classes = ClassTable::load(&root.join("classes.cfg"))?;
    load_dataset(root, &classes)
}

/// Write PNG images, text label maps and `classes.cfg`. Labels are written
/// already grouped, so the saved class table carries no grouping.
pub fn save_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    let image_dir = root.join("images");
    let label_dir = root.join("labels");
    for dir in [&image_dir, &label_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let table = ClassTable::new(dataset.classes.names().to_vec())?;
    let cfg = root.join("classes.cfg");
    fs::write(&cfg, table.to_config_string()).map_err(|e| Error::io(&cfg, e))?;
    dataset.images.par_iter().try_for_each(|img| {
        write_png_rgb(&image_dir.join(format!("{}.png", img.id)), img.width, img.height, &img.pixels)?;
        let lp = label_dir.join(format!("{}.txt", img.id));
        fs::write(&lp, format_label_text(img.width, img.height, &img.labels))
            .map_err(|e| Error::io(&lp, e))
    })
}

fn bilinear_rgb(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<u8> {
    let mut out = vec![0u8; 3 * dw * dh];
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    for r in 0..dh {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for c in 0..dw {
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            for ch in 0..3 {
                let p = |y: usize, x: usize| src[3 * (y * sw + x) + ch] as f64;
                let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                let bot = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                let v = top * (1.0 - ty) + bot * ty;
                out[3 * (r * dw + c) + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Source index sampled by nearest-neighbour resizing from `src` to `dst`
/// samples along one axis.
#[inline]
pub fn nearest_index(dst_i: usize, src: usize, dst: usize) -> usize {
    (((2 * dst_i + 1) * src) / (2 * dst)).min(src - 1)
}

/// Nearest-neighbour resize of a categorical map.
pub fn resize_labels(labels: &[i32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<i32> {
    let mut out = Vec::with_capacity(dw * dh);
    for r in 0..dh {
        let y = nearest_index(r, sh, dh);
        for c in 0..dw {
            out.push(labels[y * sw + nearest_index(c, sw, dw)]);
        }
    }
    out
}

/// Resize to `side`×`side`: bilinear for pixels, nearest-neighbour for labels.
pub fn resize_image(img: &LabeledImage, side: usize) -> Result<LabeledImage> {
    if side < 16 {
        return Err(Error::config(format!("resize side must be >= 16, got {side}")));
    }
    if img.width == side && img.height == side {
        return Ok(img.clone());
    }
    Ok(LabeledImage {
        id: img.id.clone(),
        width: side,
        height: side,
        pixels: bilinear_rgb(&img.pixels, img.width, img.height, side, side),
        labels: resize_labels(&img.labels, img.width, img.height, side, side),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Seeded shuffle; the first `round(ratio * n)` ids train, the rest test.
pub fn split_dataset(ids: &[String], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if ids.is_empty() {
        return Err(Error::data("cannot split an empty dataset"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut seeds::rng(seed));
    let n_train = (ratio * ids.len() as f64).round() as usize;
    let test = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        test,
        seed,
    })
}

/// Parameters of the synthetic horizon-scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub side: usize,
    /// Between 4 and 6: sky, water, ground, then 1–3 foreground classes.
    pub n_classes: usize,
    pub n_scenes: usize,
    /// Lake rectangle edges snap to multiples of this many pixels.
    pub lattice: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            side: 128,
            n_classes: 5,
            n_scenes: 50,
            lattice: 16,
        }
    }
}

pub const SYNTH_SKY: i32 = 0;
pub const SYNTH_WATER: i32 = 1;
pub const SYNTH_GROUND: i32 = 2;

const SYNTH_NAMES: [&str; 6] = ["sky", "water", "ground", "object", "tree", "building"];
const FOREGROUND_COLORS: [[f64; 3]; 3] = [[200.0, 45.0, 40.0], [35.0, 115.0, 45.0], [150.0, 150.0, 160.0]];
const SKY_BASE: [f64; 3] = [95.0, 145.0, 215.0];
const GROUND_BASE: [f64; 3] = [125.0, 105.0, 65.0];
const PIXEL_NOISE: f64 = 18.0;

fn noisy(rng: &mut impl Rng, base: [f64; 3]) -> [u8; 3] {
    base.map(|b| (b + rng.gen_range(-PIXEL_NOISE..=PIXEL_NOISE)).round().clamp(0.0, 255.0) as u8)
}

fn synth_scene(spec: &SceneSpec, seed: u64, index: usize) -> LabeledImage {
    let mut rng = seeds::rng_stream(seed, index as u64);
    let side = spec.side;
    let sidef = side as f64;
    let lattice = spec.lattice.max(1);

    let horizon = (sidef * (0.5 + rng.gen_range(-0.15..=0.15))).round() as usize;
    // Water reflects the sky: the two share a colour distribution per scene.
    let tint: [f64; 3] = [0; 3].map(|_| rng.gen_range(-10.0..=10.0));
    let sky = [0, 1, 2].map(|i| SKY_BASE[i] + tint[i]);
    let ground_tint = rng.gen_range(-10.0..=10.0);
    let ground = GROUND_BASE.map(|g| g + ground_tint);

    let mut labels = vec![SYNTH_GROUND; side * side];
    for r in 0..horizon.min(side) {
        labels[r * side..(r + 1) * side].fill(SYNTH_SKY);
    }

    // A lake below the horizon separated from the sky by a strip of ground.
    let snap_up = |v: usize| v.div_ceil(lattice) * lattice;
    let lake_top = snap_up(horizon + 4);
    if lake_top + lattice <= side {
        let max_depth_cells = ((side - lake_top) / lattice).clamp(1, 3);
        let depth = lattice * rng.gen_range(1..=max_depth_cells);
        let cells_across = (side / lattice).max(1);
        let width_cells = rng.gen_range((cells_across / 4).max(1)..=(cells_across * 5 / 8).max(1));
        let left_cell = rng.gen_range(0..=cells_across - width_cells);
        let (c0, c1) = (left_cell * lattice, ((left_cell + width_cells) * lattice).min(side));
        for r in lake_top..(lake_top + depth).min(side) {
            labels[r * side + c0..r * side + c1].fill(SYNTH_WATER);
        }
    }

    let n_fg = spec.n_classes - 3;
    let n_blobs = rng.gen_range(1..=3);
    for _ in 0..n_blobs {
        let class = 3 + rng.gen_range(0..n_fg);
        let radius = rng.gen_range(8.0..=24.0f64);
        let cy = rng.gen_range(horizon as f64..sidef);
        let cx = rng.gen_range(0.0..sidef);
        let r2 = radius * radius;
        for r in 0..side {
            let dy = r as f64 + 0.5 - cy;
            if dy.abs() > radius {
                continue;
            }
            for c in 0..side {
                let dx = c as f64 + 0.5 - cx;
                if dx * dx + dy * dy <= r2 {
                    labels[r * side + c] = class as i32;
                }
            }
        }
    }

    let mut pixels = Vec::with_capacity(3 * side * side);
    for &l in &labels {
        let base = match l {
            SYNTH_SKY | SYNTH_WATER => sky,
            SYNTH_GROUND => ground,
            fg => FOREGROUND_COLORS[fg as usize - 3],
        };
        pixels.extend_from_slice(&noisy(&mut rng, base));
    }

    LabeledImage {
        id: format!("scene{index:04}"),
        width: side,
        height: side,
        pixels,
        labels,
    }
}

/// Seeded synthetic horizon scenes: sky above, ground below, a lake whose
/// colour matches the sky, and one to three coloured foreground blobs.
pub fn generate_synthetic(spec: &SceneSpec, seed: u64) -> Result<Dataset> {
    if !(4..=6).contains(&spec.n_classes) {
        return Err(Error::config(format!(
            "synthetic class count must be in 4..=6, got {}",
            spec.n_classes
        )));
    }
    if spec.side < 16 {
        return Err(Error::config(format!("synthetic side must be >= 16, got {}", spec.side)));
    }
    if spec.n_scenes == 0 {
        return Err(Error::config("synthetic scene count must be positive"));
    }
    let classes = ClassTable::new(SYNTH_NAMES[..spec.n_classes].iter().map(|s| s.to_string()).collect())?;
    let images = (0..spec.n_scenes)
        .into_par_iter()
        .map(|i| synth_scene(spec, seed, i))
        .collect();
    Ok(Dataset { classes, images })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negatives_canonicalize_to_unknown() {
        let img = LabeledImage::new("t", 2, 2, vec![0; 12], vec![0, 1, -3, 2]).unwrap();
        assert_eq!(img.labels, vec![0, 1, -1, 2]);
    }

    #[test]
    fn all_unknown_is_valid_and_flagged() {
        let img = LabeledImage::new("u", 3, 2, vec![9; 18], vec![-1; 6]).unwrap();
        assert!(img.is_fully_unknown());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(LabeledImage::new("x", 2, 2, vec![0; 12], vec![0; 3]).is_err());
        assert!(LabeledImage::new("x", 2, 2, vec![0; 11], vec![0; 4]).is_err());
    }

    #[test]
    fn camvid_grouping_maps_into_eleven_classes() {
        let t = ClassTable::camvid11();
        assert_eq!(t.n_classes(), 11);
        for raw in 0..32 {
            let l = t.map_raw(raw).unwrap();
            assert!((-1..11).contains(&l), "raw {raw} -> {l}");
        }
        assert_eq!(t.map_raw(30).unwrap(), UNKNOWN); // Void
        assert_eq!(t.map_raw(21).unwrap(), 0); // Sky
        assert_eq!(t.map_raw(99).unwrap(), UNKNOWN);
    }

    #[test]
    fn class_config_round_trip() {
        let text = "# classes\nname=sky\nname=ground\ngroup 5->0\ngroup 7->1\ngroup 8->1\n";
        let t = ClassTable::parse(text).unwrap();
        assert_eq!(t.n_classes(), 2);
        assert_eq!(t.map_raw(8).unwrap(), 1);
        assert_eq!(t.map_raw(6).unwrap(), UNKNOWN);
        assert_eq!(ClassTable::parse(&t.to_config_string()).unwrap(), t);
    }

    #[test]
    fn class_config_rejects_duplicates_and_sparse_groups() {
        assert!(ClassTable::parse("name=a\nname=a\n").is_err());
        assert!(ClassTable::parse("name=a\nname=b\ngroup 0->0\n").is_err());
        assert!(ClassTable::parse("name=a\ngroup 0->3\n").is_err());
        assert!(ClassTable::parse("bogus\n").is_err());
    }

    #[test]
    fn ungrouped_out_of_range_label_errors() {
        let t = ClassTable::new(vec!["a".into(), "b".into()]).unwrap();
        assert!(t.map_raw(2).is_err());
        assert_eq!(t.map_raw(-7).unwrap(), UNKNOWN);
    }

    #[test]
    fn nearest_upscale_replicates_blocks() {
        let out = resize_labels(&[0, 0, 1, 1], 2, 2, 4, 4);
        // brute-force: each destination pixel takes the source pixel whose
        // footprint contains the destination centre
        let mut expected = vec![0; 16];
        for r in 0..4 {
            for c in 0..4 {
                let sr = ((r as f64 + 0.5) / 2.0).floor() as usize;
                let sc = ((c as f64 + 0.5) / 2.0).floor() as usize;
                expected[r * 4 + c] = [0, 0, 1, 1][sr * 2 + sc];
            }
        }
        assert_eq!(out, expected);
        assert_eq!(&out[..8], &[0; 8]);
        assert_eq!(&out[8..], &[1; 8]);
    }

    #[test]
    fn resize_identity_and_shape() {
        let spec = SceneSpec { side: 32, n_scenes: 1, ..Default::default() };
        let ds = generate_synthetic(&spec, 1).unwrap();
        let img = &ds.images[0];
        assert_eq!(&resize_image(img, 32).unwrap(), img);
        let big = resize_image(img, 48).unwrap();
        assert_eq!((big.width, big.height, big.pixels.len(), big.labels.len()), (48, 48, 48 * 48 * 3, 48 * 48));
        assert!(resize_image(img, 15).is_err());
    }

    #[test]
    fn resize_non_square_to_square() {
        let img = LabeledImage::new("r", 48, 36, vec![100; 48 * 36 * 3], vec![2; 48 * 36]).unwrap();
        let out = resize_image(&img, 256).unwrap();
        assert_eq!((out.width, out.height), (256, 256));
        assert!(out.pixels.iter().all(|&p| p == 100));
        assert!(out.labels.iter().all(|&l| l == 2));
    }

    #[test]
    fn split_sizes() {
        let ids: Vec<String> = (0..715).map(|i| i.to_string()).collect();
        let s = split_dataset(&ids, 0.8, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (572, 143));
        let ids5: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let s5 = split_dataset(&ids5, 0.8, 3).unwrap();
        assert_eq!((s5.train.len(), s5.test.len()), (4, 1));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ids: Vec<String> = (0..10).map(|i| format!("im{i}")).collect();
        let a = split_dataset(&ids, 0.8, 42).unwrap();
        let b = split_dataset(&ids, 0.8, 42).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<_> = a.train.iter().chain(&a.test).cloned().collect();
        all.sort();
        let mut orig = ids.clone();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split_dataset(&[], 0.8, 1).is_err());
        assert!(split_dataset(&["a".into()], 1.0, 1).is_err());
        assert!(split_dataset(&["a".into()], 0.0, 1).is_err());
    }

    #[test]
    fn synthetic_contract() {
        let spec = SceneSpec { side: 128, n_scenes: 50, n_classes: 5, lattice: 16 };
        let a = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a.images.len(), 50);
        for img in &a.images {
            assert!(img.labels.iter().all(|&l| (0..5).contains(&l)));
        }
        let b = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_rejects_class_counts() {
        for n in [3, 7] {
            let spec = SceneSpec { n_classes: n, ..Default::default() };
            assert!(matches!(generate_synthetic(&spec, 1), Err(Error::Config(_))));
        }
    }

    #[test]
    fn sky_and_water_colours_are_confusable() {
        let spec = SceneSpec { side: 128, n_scenes: 20, ..Default::default() };
        let ds = generate_synthetic(&spec, 11).unwrap();
        // joint RGB histogram, 8 bins per channel
        let mut hist = [vec![0f64; 512], vec![0f64; 512]];
        for img in &ds.images {
            for (i, &l) in img.labels.iter().enumerate() {
                if l == SYNTH_SKY || l == SYNTH_WATER {
                    let p = &img.pixels[3 * i..3 * i + 3];
                    let bin = (p[0] as usize / 32) * 64 + (p[1] as usize / 32) * 8 + p[2] as usize / 32;
                    hist[l as usize][bin] += 1.0;
                }
            }
        }
        let (ns, nw): (f64, f64) = (hist[0].iter().sum(), hist[1].iter().sum());
        assert!(ns > 0.0 && nw > 0.0);
        let bc: f64 = hist[0].iter().zip(&hist[1]).map(|(a, b)| (a / ns * b / nw).sqrt()).sum();
        assert!(bc >= 0.9, "Bhattacharyya coefficient {bc}");
    }
}
