//! Genetic-algorithm feature selection.
//!
//! A chromosome is a bit mask over the feature catalog. Fitness is minimized:
//!
//! ```text
//! fitness = alpha * error + beta * S / T
//! ```
//!
//! where `error` is the 1-nearest-neighbour validation error using only the
//! selected columns, `S` the number of selected features and `T` the catalog
//! size. Selection is a roulette wheel over `f_max - f + 1e-9`, with
//! single-point crossover, per-bit mutation and elitism.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds;

const ROULETTE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureMask {
    bits: Vec<bool>,
}

impl FeatureMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all(len: usize) -> Self {
        Self { bits: vec![true; len] }
    }

    pub fn from_indices(len: usize, selected: &[usize]) -> Self {
        let mut bits = vec![false; len];
        selected.iter().for_each(|&i| bits[i] = true);
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of selected features.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    /// Selected columns of `row`.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.bits)
            .filter_map(|(&v, &b)| b.then_some(v))
            .collect()
    }

    /// Parse a string of `0`/`1` characters.
    pub fn parse(text: &str) -> Result<Self> {
        let bits = text
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::data(format!("feature mask contains {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::data("empty feature mask"));
        }
        Ok(Self { bits })
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub alpha: f64,
    pub beta: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 10,
            generations: 1000,
            p_crossover: 0.8,
            p_mutation: 0.1,
            alpha: 0.99,
            beta: 0.01,
            elitism: 1,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::config("GA population must be at least 2"));
        }
        if self.generations < 1 {
            return Err(Error::config("GA needs at least one generation"));
        }
        for (name, p) in [("p_crossover", self.p_crossover), ("p_mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("GA {name} must be in [0, 1], got {p}")));
            }
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::config("GA fitness weights must be positive"));
        }
        if self.elitism >= self.population {
            return Err(Error::config("GA elitism must be smaller than the population"));
        }
        Ok(())
    }
}

/// `alpha * error + beta * selected / total`.
#[inline]
pub fn fitness_value(error: f64, selected: usize, total: usize, alpha: f64, beta: f64) -> f64 {
    alpha * error + beta * (selected as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessRecord {
    pub mask: FeatureMask,
    pub error: f64,
    pub fitness: f64,
}

/// Feature rows with class labels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledRows<'a> {
    pub rows: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

impl<'a> LabeledRows<'a> {
    pub fn new(rows: &'a [Vec<f64>], labels: &'a [usize]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::data("row and label counts differ"));
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn width(&self) -> Option<usize> {
        self.rows.first().map(Vec::len)
    }
}

/// Index of the nearest training row over `columns`; ties go to the lowest
/// index.
pub fn nearest_neighbor(train: &[Vec<f64>], query: &[f64], columns: &[usize]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, row) in train.iter().enumerate() {
        let mut d = 0.0;
        for &c in columns {
            let t = row[c] - query[c];
            d += t * t;
            if d >= best.0 {
                break;
            }
        }
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Fraction of validation rows whose 1-NN label is wrong.
pub fn one_nn_error(mask: &FeatureMask, train: LabeledRows, val: LabeledRows) -> Result<f64> {
    if mask.count() == 0 {
        return Err(Error::data("fitness of an empty feature mask is undefined"));
    }
    if val.is_empty() {
        return Err(Error::data("empty validation set"));
    }
    if train.is_empty() {
        return Err(Error::data("empty training set"));
    }
    if train.width() != Some(mask.len()) || val.width() != Some(mask.len()) {
        return Err(Error::data("feature mask length does not match the feature columns"));
    }
    let columns = mask.indices();
    let wrong = val
        .rows
        .par_iter()
        .zip(val.labels.par_iter())
        .filter(|(row, &label)| train.labels[nearest_neighbor(train.rows, row, &columns)] != label)
        .count();
    Ok(wrong as f64 / val.len() as f64)
}

pub fn fitness(mask: &FeatureMask, train: LabeledRows, val: LabeledRows, cfg: &GaConfig) -> Result<FitnessRecord> {
    let error = one_nn_error(mask, train, val)?;
    Ok(FitnessRecord {
        mask: mask.clone(),
        error,
        fitness: fitness_value(error, mask.count(), mask.len(), cfg.alpha, cfg.beta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness in this generation's population.
    pub best: f64,
    pub mean: f64,
    /// Best fitness seen so far.
    pub best_ever: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: FitnessRecord,
    pub history: Vec<GenerationStats>,
    pub final_population: Vec<FeatureMask>,
    /// Distinct masks evaluated.
    pub evaluations: usize,
}

impl GaOutcome {
    /// `generation,best,mean` CSV.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("generation,best,mean\n");
        for h in &self.history {
            s.push_str(&format!("{},{:e},{:e}\n", h.generation, h.best, h.mean));
        }
        s
    }
}

fn random_mask(t: usize, rng: &mut impl Rng) -> FeatureMask {
    loop {
        let bits: Vec<bool> = (0..t).map(|_| rng.gen_bool(0.5)).collect();
        if bits.iter().any(|&b| b) {
            return FeatureMask { bits };
        }
    }
}

fn repair(mask: &mut FeatureMask, rng: &mut impl Rng) {
    if mask.count() == 0 {
        let i = rng.gen_range(0..mask.len());
        mask.bits[i] = true;
    }
}

fn roulette(weights: &[f64], total: f64, rng: &mut impl Rng) -> usize {
    let mut r = rng.gen_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

/// Generic generational loop over masks of length `t`. `evaluate` returns
/// the fitness record of a mask; identical masks are evaluated once.
pub fn evolve<F>(t: usize, cfg: &GaConfig, initial: Option<Vec<FeatureMask>>, evaluate: F) -> Result<GaOutcome>
where
    F: Fn(&FeatureMask) -> Result<FitnessRecord> + Sync,
{
    cfg.validate()?;
    if t < 1 {
        return Err(Error::config("GA needs at least one feature"));
    }
    let mut population = match initial {
        Some(p) => {
            if p.len() != cfg.population || p.iter().any(|m| m.len() != t || m.count() == 0) {
                return Err(Error::config("initial population does not match the configuration"));
            }
            p
        }
        None => {
            let mut rng = seeds::rng_stream(cfg.seed, 0);
            (0..cfg.population).map(|_| random_mask(t, &mut rng)).collect()
        }
    };

    let mut cache: HashMap<FeatureMask, FitnessRecord> = HashMap::new();
    let mut history = Vec::with_capacity(cfg.generations);
    let mut best: Option<FitnessRecord> = None;

    for generation in 0..cfg.generations {
        let mut fresh: Vec<&FeatureMask> = population.iter().filter(|m| !cache.contains_key(*m)).collect();
        fresh.sort_by(|a, b| a.bits.cmp(&b.bits));
        fresh.dedup();
        let records = fresh.par_iter().map(|m| evaluate(m)).collect::<Result<Vec<_>>>()?;
        for r in records {
            cache.insert(r.mask.clone(), r);
        }
        let scores: Vec<f64> = population.iter().map(|m| cache[m].fitness).collect();

        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let gen_best = &cache[&population[order[0]]];
        if best.as_ref().is_none_or(|b| gen_best.fitness < b.fitness) {
            best = Some(gen_best.clone());
        }
        history.push(GenerationStats {
            generation,
            best: gen_best.fitness,
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            best_ever: best.as_ref().unwrap().fitness,
        });
        if generation + 1 == cfg.generations {
            break;
        }

        let mut rng = seeds::rng_stream(cfg.seed, generation as u64 + 1);
        let f_max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|f| f_max - f + ROULETTE_EPS).collect();
        let total: f64 = weights.iter().sum();

        let mut next: Vec<FeatureMask> = order[..cfg.elitism].iter().map(|&i| population[i].clone()).collect();
        while next.len() < cfg.population {
            let a = &population[roulette(&weights, total, &mut rng)];
            let b = &population[roulette(&weights, total, &mut rng)];
            let (mut c1, mut c2) = if t > 1 && rng.gen_bool(cfg.p_crossover) {
                let point = rng.gen_range(1..t);
                let mut x = a.bits[..point].to_vec();
                x.extend_from_slice(&b.bits[point..]);
                let mut y = b.bits[..point].to_vec();
                y.extend_from_slice(&a.bits[point..]);
                (FeatureMask { bits: x }, FeatureMask { bits: y })
            } else {
                (a.clone(), b.clone())
            };
            for child in [&mut c1, &mut c2] {
                for bit in child.bits.iter_mut() {
                    if rng.gen_bool(cfg.p_mutation) {
                        *bit = !*bit;
                    }
                }
                repair(child, &mut rng);
            }
            next.push(c1);
            if next.len() < cfg.population {
                next.push(c2);
            }
        }
        population = next;
    }

    Ok(GaOutcome {
        best: best.expect("at least one generation ran"),
        history,
        final_population: population,
        evaluations: cache.len(),
    })
}

/// Select a feature subset with 1-NN validation fitness.
pub fn run_ga(train: LabeledRows, val: LabeledRows, cfg: &GaConfig) -> Result<GaOutcome> {
    run_ga_from(train, val, cfg, None)
}

pub fn run_ga_from(
    train: LabeledRows,
    val: LabeledRows,
    cfg: &GaConfig,
    initial: Option<Vec<FeatureMask>>,
) -> Result<GaOutcome> {
    let t = train
        .width()
        .ok_or_else(|| Error::data("GA needs training rows"))?;
    if t < 2 {
        return Err(Error::config("GA needs at least two features"));
    }
    evolve(t, cfg, initial, |m| fitness(m, train, val, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitness_arithmetic() {
        assert_eq!(fitness_value(0.2, 50, 100, 0.99, 0.01), 0.203);
        assert_eq!(fitness_value(0.0, 60, 60, 0.99, 0.01), 0.01);
    }

    #[test]
    fn zero_distance_neighbor_is_correct_under_any_mask() {
        let train = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let tl = [0, 1];
        let val = vec![vec![4.0, 5.0, 6.0]];
        let vl = [1];
        let cfg = GaConfig::default();
        for bits in [[true, false, false], [false, true, true], [true, true, true]] {
            let m = FeatureMask::new(bits.to_vec());
            let r = fitness(&m, LabeledRows::new(&train, &tl).unwrap(), LabeledRows::new(&val, &vl).unwrap(), &cfg).unwrap();
            assert_eq!(r.error, 0.0);
            assert_eq!(r.fitness, fitness_value(0.0, m.count(), 3, 0.99, 0.01));
        }
    }

    #[test]
    fn ties_go_to_lowest_row() {
        let train = vec![vec![1.0], vec![-1.0]];
        assert_eq!(nearest_neighbor(&train, &[0.0], &[0]), 0);
    }

    #[test]
    fn empty_mask_and_empty_validation_rejected() {
        let train = vec![vec![1.0, 2.0]];
        let cfg = GaConfig::default();
        let tr = LabeledRows::new(&train, &[0]).unwrap();
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(fitness(&FeatureMask::new(vec![false, false]), tr, tr, &cfg).is_err());
        assert!(fitness(&FeatureMask::all(2), tr, LabeledRows::new(&empty, &[]).unwrap(), &cfg).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let m = FeatureMask::from_indices(6, &[0, 3, 5]);
        assert_eq!(m.to_string(), "100101");
        assert_eq!(FeatureMask::parse("100101\n").unwrap(), m);
        assert!(FeatureMask::parse("10x").is_err());
    }

    #[test]
    fn identical_population_is_a_fixed_point() {
        let cfg = GaConfig {
            population: 6,
            generations: 20,
            p_mutation: 0.0,
            p_crossover: 0.7,
            seed: 5,
            ..Default::default()
        };
        let m = FeatureMask::from_indices(8, &[1, 4, 6]);
        let out = evolve(8, &cfg, Some(vec![m.clone(); 6]), |mask| {
            Ok(FitnessRecord { mask: mask.clone(), error: 0.0, fitness: mask.count() as f64 })
        })
        .unwrap();
        assert!(out.final_population.iter().all(|x| *x == m));
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig { population: 1, ..Default::default() }.validate().is_err());
        assert!(GaConfig { p_mutation: 1.5, ..Default::default() }.validate().is_err());
        assert!(GaConfig { elitism: 10, ..Default::default() }.validate().is_err());
        assert!(GaConfig::default().validate().is_ok());
    }

    #[test]
    fn children_never_empty() {
        let cfg = GaConfig { population: 8, generations: 30, p_mutation: 0.9, seed: 1, ..Default::default() };
        let out = evolve(2, &cfg, None, |mask| {
            assert!(mask.count() > 0);
            Ok(FitnessRecord { mask: mask.clone(), error: 0.0, fitness: mask.count() as f64 })
        })
        .unwrap();
        assert_eq!(out.best.mask.count(), 1);
    }
}
