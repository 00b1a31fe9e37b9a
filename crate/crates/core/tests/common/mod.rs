//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sceneparse::imagedata::LabeledImage;
use sceneparse::superpix::SuperpixelMap;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random image of uniform noise with a few flat rectangles so that SLIC has
/// some structure to find.
pub fn random_image(seed: u64, width: usize, height: usize) -> LabeledImage {
    let mut r = rng(seed);
    let mut pixels: Vec<u8> = (0..width * height * 3).map(|_| r.gen()).collect();
    for _ in 0..3 {
        let (r0, c0) = (r.gen_range(0..height), r.gen_range(0..width));
        let (r1, c1) = (r.gen_range(r0..height) + 1, r.gen_range(c0..width) + 1);
        let col: [u8; 3] = r.gen();
        for row in r0..r1 {
            for c in c0..c1 {
                pixels[3 * (row * width + c)..3 * (row * width + c) + 3].copy_from_slice(&col);
            }
        }
    }
    let labels = (0..width * height).map(|_| r.gen_range(-1..3)).collect();
    LabeledImage::new(format!("rand{seed}"), width, height, pixels, labels).unwrap()
}

/// Unordered 4-adjacent superpixel pairs straight from the pixel grid.
pub fn brute_adjacency(map: &SuperpixelMap) -> BTreeSet<(usize, usize)> {
    let (w, h) = (map.width, map.height);
    let mut pairs = BTreeSet::new();
    for r in 0..h {
        for c in 0..w {
            let a = map.assignment[r * w + c] as usize;
            let mut visit = |b: usize| {
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            };
            if c + 1 < w {
                visit(map.assignment[r * w + c + 1] as usize);
            }
            if r + 1 < h {
                visit(map.assignment[(r + 1) * w + c] as usize);
            }
        }
    }
    pairs
}

/// Block of each superpixel from its pixel-mean centroid.
pub fn brute_blocks(map: &SuperpixelMap, g: usize) -> Vec<usize> {
    let mut sum = vec![(0.0f64, 0.0f64, 0usize); map.n];
    for (i, &s) in map.assignment.iter().enumerate() {
        let e = &mut sum[s as usize];
        e.0 += (i / map.width) as f64;
        e.1 += (i % map.width) as f64;
        e.2 += 1;
    }
    sum.iter()
        .map(|&(r, c, n)| {
            let (r, c) = (r / n as f64, c / n as f64);
            let br = ((r * g as f64 / map.height as f64) as usize).min(g - 1);
            let bc = ((c * g as f64 / map.width as f64) as usize).min(g - 1);
            br * g + bc
        })
        .collect()
}

/// Adjacency and block co-occurrence counts by direct pair enumeration.
pub fn brute_prior_counts(samples: &[(&SuperpixelMap, &[Option<usize>])], c: usize, g: usize) -> (Vec<u64>, Vec<u64>) {
    let b = g * g;
    let mut adj = vec![0u64; c * c];
    let mut blk = vec![0u64; b * c * b * c];
    for (map, labels) in samples {
        let pairs = brute_adjacency(map);
        let blocks = brute_blocks(map, g);
        for i in 0..map.n {
            for j in 0..map.n {
                let (Some(li), Some(lj)) = (labels[i], labels[j]) else { continue };
                if i != j && pairs.contains(&(i.min(j), i.max(j))) {
                    adj[li * c + lj] += 1;
                }
                if blocks[i] != blocks[j] {
                    blk[((blocks[i] * c + li) * b + blocks[j]) * c + lj] += 1;
                }
            }
        }
    }
    (adj, blk)
}

pub fn brute_confusion(pred: &[i32], gt: &[i32], c: usize) -> Vec<u64> {
    let mut m = vec![0u64; c * c];
    for a in 0..c {
        for b in 0..c {
            m[a * c + b] = pred.iter().zip(gt).filter(|&(&p, &g)| g == a as i32 && p == b as i32).count() as u64;
        }
    }
    m
}

/// 1-NN labels by a full distance table; ties to the lowest training row.
pub fn brute_1nn(train: &[Vec<f64>], labels: &[usize], query: &[Vec<f64>], cols: &[usize]) -> Vec<usize> {
    query
        .iter()
        .map(|q| {
            let d: Vec<f64> = train.iter().map(|t| cols.iter().map(|&k| (t[k] - q[k]).powi(2)).sum()).collect();
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            labels[d.iter().position(|&v| v == min).unwrap()]
        })
        .collect()
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// max |a - b| / max(|a|, |b|, floor) over coordinates.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Tabular task: two informative integer-valued columns (0, 1 by default
/// positions) determine a 4-class label; the rest is uniform noise on the
/// same range. Every train and validation row hits one of 16 cells and every
/// cell occurs in training, so 1-NN on the informative pair has error 0.
pub type Task = (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<usize>);

pub fn ga_recovery_task(seed: u64, n_train: usize, n_val: usize, dims: usize) -> Task {
    let mut r = rng(seed);
    let mut make = |n: usize| {
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let cell = i % 16;
            let (x0, x1) = ((cell / 4) as f64, (cell % 4) as f64);
            let mut row: Vec<f64> = (0..dims).map(|_| r.gen_range(0.0..4.0)).collect();
            row[0] = x0;
            row[1] = x1;
            rows.push(row);
            labels.push(2 * usize::from(x0 >= 2.0) + usize::from(x1 >= 2.0));
        }
        (rows, labels)
    };
    let (tr, trl) = make(n_train);
    let (va, val) = make(n_val);
    (tr, trl, va, val)
}
