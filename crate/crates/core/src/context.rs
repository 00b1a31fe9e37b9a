//! Relationship priors between superpixel classes and the votes they produce.
//!
//! The adjacency prior counts ordered pairs of 4-adjacent labelled
//! superpixels. The block prior counts ordered pairs of labelled superpixels
//! lying in different blocks of the block grid, keyed by both blocks. Both are
//! Laplace-smoothed (+1) and normalized per row. At inference every superpixel
//! votes with its visual argmax class.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::superpix::{assign_blocks, BlockGrid, SuperpixelMap};

/// Row-stochastic C×C neighbour co-occurrence prior.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyPrior {
    pub n_classes: usize,
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
}

impl AdjacencyPrior {
    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Self {
        let probs = smooth_rows(&counts, n_classes);
        Self {
            n_classes,
            counts,
            probs,
        }
    }

    /// Distribution of a neighbour's class given the voter's class `a`.
    pub fn row(&self, a: usize) -> &[f64] {
        &self.probs[a * self.n_classes..(a + 1) * self.n_classes]
    }

    pub fn count(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.n_classes + b]
    }

    /// Smoothed probabilities as a CSV grid.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut s = format!("class,{}\n", names.join(","));
        for (a, name) in names.iter().enumerate().take(self.n_classes) {
            let cells: Vec<String> = self.row(a).iter().map(|p| format!("{p:e}")).collect();
            s.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        s
    }
}

/// Block co-occurrence prior indexed `[p][a][q][c]`, row-stochastic over `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrior {
    pub n_blocks: usize,
    pub n_classes: usize,
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
}

impl BlockPrior {
    pub fn from_counts(n_blocks: usize, n_classes: usize, counts: Vec<u64>) -> Self {
        let probs = smooth_rows(&counts, n_classes);
        Self {
            n_blocks,
            n_classes,
            counts,
            probs,
        }
    }

    #[inline]
    fn offset(&self, p: usize, a: usize, q: usize) -> usize {
        ((p * self.n_classes + a) * self.n_blocks + q) * self.n_classes
    }

    /// Class distribution in block `q` given class `a` observed in block `p`.
    pub fn row(&self, p: usize, a: usize, q: usize) -> &[f64] {
        let o = self.offset(p, a, q);
        &self.probs[o..o + self.n_classes]
    }

    pub fn count(&self, p: usize, a: usize, q: usize, c: usize) -> u64 {
        self.counts[self.offset(p, a, q) + c]
    }
}

fn smooth_rows(counts: &[u64], width: usize) -> Vec<f64> {
    counts
        .chunks(width)
        .flat_map(|row| {
            let total = row.iter().sum::<u64>() as f64 + width as f64;
            row.iter().map(move |&k| (k as f64 + 1.0) / total)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextPriors {
    pub grid: usize,
    pub adjacency: AdjacencyPrior,
    pub block: BlockPrior,
}

impl ContextPriors {
    pub fn n_classes(&self) -> usize {
        self.adjacency.n_classes
    }
}

/// One training image: its superpixels and their majority labels.
pub type PriorSample<'a> = (&'a SuperpixelMap, &'a [Option<usize>]);

fn blocks_for(map: &SuperpixelMap, g: usize) -> Result<Vec<usize>> {
    if map.blocks.g == g {
        Ok(map.block_of.clone())
    } else {
        Ok(assign_blocks(map, &BlockGrid::new(g, map.width, map.height)?))
    }
}

fn image_counts(map: &SuperpixelMap, labels: &[Option<usize>], c: usize, g: usize) -> Result<(Vec<u64>, Vec<u64>)> {
    if labels.len() != map.n {
        return Err(Error::data("label count does not match superpixel count"));
    }
    if let Some(bad) = labels.iter().flatten().find(|&&l| l >= c) {
        return Err(Error::data(format!("superpixel label {bad} out of range for {c} classes")));
    }
    let mut adj = vec![0u64; c * c];
    for (i, nbrs) in map.neighbors.iter().enumerate() {
        let Some(a) = labels[i] else { continue };
        for &j in nbrs {
            if let Some(b) = labels[j] {
                adj[a * c + b] += 1;
            }
        }
    }
    // Pairs across different blocks factor through per-block histograms.
    let b = g * g;
    let block_of = blocks_for(map, g)?;
    let mut hist = vec![0u64; b * c];
    for (s, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            hist[block_of[s] * c + l] += 1;
        }
    }
    let mut blk = vec![0u64; b * c * b * c];
    for p in 0..b {
        for a in 0..c {
            let hp = hist[p * c + a];
            if hp == 0 {
                continue;
            }
            for q in (0..b).filter(|&q| q != p) {
                let o = ((p * c + a) * b + q) * c;
                for k in 0..c {
                    blk[o + k] += hp * hist[q * c + k];
                }
            }
        }
    }
    Ok((adj, blk))
}

/// Count and smooth both priors over the training images.
pub fn fit_priors(samples: &[PriorSample], n_classes: usize, g: usize) -> Result<ContextPriors> {
    if n_classes < 1 {
        return Err(Error::config("priors need at least one class"));
    }
    if g < 1 {
        return Err(Error::config("priors need at least one block per side"));
    }
    let c = n_classes;
    let b = g * g;
    let per_image = samples
        .par_iter()
        .map(|(map, labels)| image_counts(map, labels, c, g))
        .collect::<Result<Vec<_>>>()?;
    let mut adj = vec![0u64; c * c];
    let mut blk = vec![0u64; b * c * b * c];
    for (a, k) in per_image {
        adj.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        blk.iter_mut().zip(k).for_each(|(x, y)| *x += y);
    }
    Ok(ContextPriors {
        grid: g,
        adjacency: AdjacencyPrior::from_counts(c, adj),
        block: BlockPrior::from_counts(b, c, blk),
    })
}

/// Adjacent and blockwise vote distributions for one superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextProbability {
    pub p_adj: Vec<f64>,
    pub p_blk: Vec<f64>,
}

/// Votes for every superpixel given each superpixel's voter class (its
/// visual argmax).
pub fn predict_context(map: &SuperpixelMap, voters: &[usize], priors: &ContextPriors) -> Result<Vec<ContextProbability>> {
    let c = priors.n_classes();
    if voters.len() != map.n {
        return Err(Error::data("voter count does not match superpixel count"));
    }
    if voters.iter().any(|&v| v >= c) {
        return Err(Error::data("voter class out of range"));
    }
    let uniform = vec![1.0 / c as f64; c];
    let g = priors.grid;
    let b = g * g;
    let block_of = blocks_for(map, g)?;
    let mut hist = vec![0.0f64; b * c];
    for (s, &v) in voters.iter().enumerate() {
        hist[block_of[s] * c + v] += 1.0;
    }

    // Block votes depend only on the target block.
    let block_votes: Vec<Vec<f64>> = (0..b)
        .map(|q| {
            let mut acc = vec![0.0; c];
            for p in (0..b).filter(|&p| p != q) {
                for a in 0..c {
                    let h = hist[p * c + a];
                    if h > 0.0 {
                        for (x, y) in acc.iter_mut().zip(priors.block.row(p, a, q)) {
                            *x += h * y;
                        }
                    }
                }
            }
            let total: f64 = acc.iter().sum();
            if total > 0.0 {
                acc.iter_mut().for_each(|x| *x /= total);
                acc
            } else {
                uniform.clone()
            }
        })
        .collect();

    Ok((0..map.n)
        .map(|j| {
            let nbrs = &map.neighbors[j];
            let p_adj = if nbrs.is_empty() {
                uniform.clone()
            } else {
                let mut acc = vec![0.0; c];
                for &i in nbrs {
                    for (x, y) in acc.iter_mut().zip(priors.adjacency.row(voters[i])) {
                        *x += y;
                    }
                }
                acc.iter_mut().for_each(|x| *x /= nbrs.len() as f64);
                acc
            };
            ContextProbability {
                p_adj,
                p_blk: block_votes[block_of[j]].clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_adjacent_superpixels() {
        let map = SuperpixelMap::from_assignment(2, 1, &[0, 1], 1).unwrap();
        let labels = [Some(0), Some(1)];
        let pri = fit_priors(&[(&map, &labels[..])], 2, 1).unwrap();
        assert_eq!(pri.adjacency.counts, vec![0, 1, 1, 0]);
        let third = 1.0 / 3.0;
        assert!((pri.adjacency.row(0)[0] - third).abs() < 1e-15);
        assert!((pri.adjacency.row(0)[1] - 2.0 * third).abs() < 1e-15);
        assert!((pri.adjacency.row(1)[0] - 2.0 * third).abs() < 1e-15);
    }

    #[test]
    fn no_pairs_means_uniform() {
        let map = SuperpixelMap::from_assignment(3, 3, &[0; 9], 1).unwrap();
        let pri = fit_priors(&[(&map, &[Some(2)][..])], 4, 2).unwrap();
        assert!(pri.adjacency.probs.iter().all(|&p| p == 0.25));
        assert!(pri.block.probs.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn isolated_superpixel_votes_uniform() {
        let map = SuperpixelMap::from_assignment(3, 3, &[0; 9], 1).unwrap();
        let pri = fit_priors(&[], 3, 1).unwrap();
        let ctx = predict_context(&map, &[1], &pri).unwrap();
        assert_eq!(ctx[0].p_adj, vec![1.0 / 3.0; 3]);
        assert_eq!(ctx[0].p_blk, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn single_neighbor_copies_row() {
        let map = SuperpixelMap::from_assignment(2, 1, &[0, 1], 1).unwrap();
        let pri = fit_priors(&[(&map, &[Some(0), Some(1)][..])], 2, 1).unwrap();
        let ctx = predict_context(&map, &[0, 1], &pri).unwrap();
        assert_eq!(ctx[1].p_adj, pri.adjacency.row(0));
        assert_eq!(ctx[0].p_adj, pri.adjacency.row(1));
    }

    #[test]
    fn unknown_superpixels_do_not_count() {
        let map = SuperpixelMap::from_assignment(3, 1, &[0, 1, 2], 1).unwrap();
        let pri = fit_priors(&[(&map, &[Some(0), None, Some(1)][..])], 2, 1).unwrap();
        assert!(pri.adjacency.counts.iter().all(|&k| k == 0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let map = SuperpixelMap::from_assignment(2, 1, &[0, 1], 1).unwrap();
        assert!(fit_priors(&[(&map, &[Some(0)][..])], 2, 1).is_err());
        assert!(fit_priors(&[(&map, &[Some(0), Some(5)][..])], 2, 1).is_err());
        assert!(fit_priors(&[], 0, 1).is_err());
        assert!(fit_priors(&[], 2, 0).is_err());
        let pri = fit_priors(&[], 2, 1).unwrap();
        assert!(predict_context(&map, &[0], &pri).is_err());
        assert!(predict_context(&map, &[0, 2], &pri).is_err());
    }

    #[test]
    fn csv_shape() {
        let pri = fit_priors(&[], 2, 1).unwrap();
        let csv = pri.adjacency.to_csv(&["a".into(), "b".into()]);
        assert_eq!(csv.lines().count(), 3);
    }
}
