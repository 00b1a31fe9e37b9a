//! Versioned text serialization of a trained model.
//!
//! ```text
//! sceneparse-bundle 1
//! section <name>
//! <key> <values...>
//! end <name>
//! ...
//! end-of-bundle
//! ```
//!
//! Arrays are written as `<key> <len> <v0> <v1> ...` with floats in shortest
//! round-trip exponent form, so reloading is bit-exact and re-saving is
//! byte-identical. Prior probabilities are not stored; they are recomputed
//! from the integer counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::context::{AdjacencyPrior, BlockPrior, ContextPriors};
use crate::error::{Error, Result};
use crate::features::{FeatureCatalog, Standardizer};
use crate::gasel::FeatureMask;
use crate::imagedata::ClassTable;
use crate::integrate::IntegrationMlp;
use crate::visual::BinaryClassifier;

pub const FORMAT_MAGIC: &str = "sceneparse-bundle";
pub const FORMAT_VERSION: u32 = 1;

const SECTIONS: [&str; 7] = ["config", "classes", "features", "mask", "visual", "priors", "mlp"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: RunConfig,
    pub classes: ClassTable,
    pub catalog_version: String,
    pub standardizer: Standardizer,
    pub mask: FeatureMask,
    pub classifiers: Vec<BinaryClassifier>,
    pub priors: ContextPriors,
    pub mlp: IntegrationMlp,
}

fn floats(out: &mut String, key: &str, values: &[f64]) {
    let _ = write!(out, "{key} {}", values.len());
    for v in values {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}

fn ints(out: &mut String, key: &str, values: &[u64]) {
    let _ = write!(out, "{key} {}", values.len());
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

struct Section<'a> {
    name: &'a str,
    lines: Vec<(&'a str, Vec<&'a str>)>,
}

impl<'a> Section<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::model(self.name, msg)
    }

    fn fields(&self, key: &str) -> Result<&[&'a str]> {
        self.lines
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| self.err(format!("missing `{key}`")))
    }

    fn all<'s>(&'s self, key: &'s str) -> impl Iterator<Item = &'s [&'a str]> + 's {
        self.lines.iter().filter(move |(k, _)| *k == key).map(|(_, v)| v.as_slice())
    }

    fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        match self.fields(key)? {
            [v] => v.parse().map_err(|_| self.err(format!("bad `{key}` value {v:?}"))),
            _ => Err(self.err(format!("`{key}` expects one value"))),
        }
    }

    fn array<T: std::str::FromStr>(&self, fields: &[&str], key: &str) -> Result<Vec<T>> {
        let (len, values) = fields
            .split_first()
            .ok_or_else(|| self.err(format!("`{key}` has no length")))?;
        let len: usize = len.parse().map_err(|_| self.err(format!("bad `{key}` length")))?;
        if values.len() != len {
            return Err(self.err(format!("`{key}` declares {len} values, found {}", values.len())));
        }
        values
            .iter()
            .map(|v| v.parse().map_err(|_| self.err(format!("bad `{key}` entry {v:?}"))))
            .collect()
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let v: Vec<f64> = self.array(self.fields(key)?, key)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.err(format!("`{key}` has non-finite values")));
        }
        Ok(v)
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<&str, Section<'_>>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let mut parts = header.split_whitespace();
    if parts.next() != Some(FORMAT_MAGIC) {
        return Err(Error::model("header", "not a sceneparse model bundle"));
    }
    match parts.next().and_then(|v| v.parse::<u32>().ok()) {
        Some(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::model(
                "header",
                format!("format version {v} is not supported (expected {FORMAT_VERSION})"),
            ))
        }
        None => return Err(Error::model("header", "missing format version")),
    }

    let mut sections = BTreeMap::new();
    let mut current: Option<Section> = None;
    let mut finished = false;
    for line in lines {
        if finished {
            if !line.trim().is_empty() {
                return Err(Error::model("trailer", "content after end-of-bundle"));
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else { continue };
        match (key, current.as_mut()) {
            ("section", None) => {
                let name = tokens.next().ok_or_else(|| Error::model("header", "unnamed section"))?;
                current = Some(Section { name, lines: Vec::new() });
            }
            ("section", Some(sec)) => return Err(sec.err("section not closed before the next one")),
            ("end", Some(sec)) => {
                if tokens.next() != Some(sec.name) {
                    return Err(sec.err("mismatched end marker"));
                }
                let sec = current.take().unwrap();
                sections.insert(sec.name, sec);
            }
            ("end-of-bundle", None) => finished = true,
            (_, Some(sec)) => sec.lines.push((key, tokens.collect())),
            (k, None) if "end-of-bundle".starts_with(k) => {
                return Err(Error::model("trailer", "truncated end-of-bundle marker"))
            }
            (_, None) => return Err(Error::model("header", format!("stray line {line:?} outside sections"))),
        }
    }
    if let Some(sec) = current {
        return Err(sec.err("truncated: section is not closed"));
    }
    if let Some(missing) = SECTIONS.iter().find(|s| !sections.contains_key(*s)) {
        return Err(Error::model(*missing, "section missing (truncated bundle?)"));
    }
    if !finished {
        return Err(Error::model("trailer", "truncated: missing end-of-bundle"));
    }
    Ok(sections)
}

impl ModelBundle {
    pub fn n_classes(&self) -> usize {
        self.classes.n_classes()
    }

    /// Internal dimensional consistency.
    pub fn validate(&self) -> Result<()> {
        let catalog = FeatureCatalog::by_version(&self.catalog_version).ok_or_else(|| {
            Error::model("features", format!("unknown feature catalog version {:?}", self.catalog_version))
        })?;
        let t = catalog.len();
        let c = self.n_classes();
        if self.mask.len() != t || self.standardizer.mean.len() != t || self.standardizer.std.len() != t {
            return Err(Error::model("mask", format!("mask/standardizer length differs from catalog size {t}")));
        }
        if self.mask.count() == 0 {
            return Err(Error::model("mask", "no features selected"));
        }
        if self.classifiers.len() != c {
            return Err(Error::model("visual", format!("{} classifiers for {c} classes", self.classifiers.len())));
        }
        let s = self.mask.count();
        for (i, h) in self.classifiers.iter().enumerate() {
            if h.class_index != i || h.weights.len() != s + 1 {
                return Err(Error::model("visual", format!("classifier {i} does not match the mask")));
            }
        }
        if self.priors.n_classes() != c
            || self.priors.grid != self.config.blocks
            || self.priors.block.n_blocks != self.priors.grid * self.priors.grid
            || self.priors.block.counts.len() != (self.priors.grid * self.priors.grid * c).pow(2)
        {
            return Err(Error::model("priors", "prior shapes do not match classes and block grid"));
        }
        if self.mlp.n_in != 3 * c || self.mlp.n_out != c {
            return Err(Error::model("mlp", format!("MLP is {}->{}, expected {}->{c}", self.mlp.n_in, self.mlp.n_out, 3 * c)));
        }
        self.mlp.validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{FORMAT_MAGIC} {FORMAT_VERSION}\n");

        s.push_str("section config\n");
        for line in self.config.to_text().lines() {
            let (k, v) = line.split_once(" = ").expect("config lines are key = value");
            let _ = writeln!(s, "{k} {v}");
        }
        s.push_str("end config\n");

        s.push_str("section classes\n");
        let _ = writeln!(s, "count {}", self.n_classes());
        for n in self.classes.names() {
            let _ = writeln!(s, "name {n}");
        }
        if let Some(g) = self.classes.grouping() {
            for (raw, idx) in g {
                let _ = writeln!(s, "group {raw} {idx}");
            }
        }
        s.push_str("end classes\n");

        s.push_str("section features\n");
        let _ = writeln!(s, "catalog {}", self.catalog_version);
        floats(&mut s, "mean", &self.standardizer.mean);
        floats(&mut s, "std", &self.standardizer.std);
        s.push_str("end features\n");

        s.push_str("section mask\n");
        let _ = writeln!(s, "bits {}", self.mask);
        s.push_str("end mask\n");

        s.push_str("section visual\n");
        for h in &self.classifiers {
            let _ = writeln!(s, "classifier {} {} {:e}", h.class_index, u8::from(h.degenerate), h.l2);
            floats(&mut s, "weights", &h.weights);
        }
        s.push_str("end visual\n");

        s.push_str("section priors\n");
        let _ = writeln!(s, "grid {}", self.priors.grid);
        ints(&mut s, "adjacency", &self.priors.adjacency.counts);
        ints(&mut s, "block", &self.priors.block.counts);
        s.push_str("end priors\n");

        s.push_str("section mlp\n");
        let _ = writeln!(s, "shape {} {} {}", self.mlp.n_in, self.mlp.hidden, self.mlp.n_out);
        floats(&mut s, "w1", &self.mlp.w1);
        floats(&mut s, "b1", &self.mlp.b1);
        floats(&mut s, "w2", &self.mlp.w2);
        floats(&mut s, "b2", &self.mlp.b2);
        s.push_str("end mlp\n");

        s.push_str("end-of-bundle\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let sections = split_sections(text)?;

        let sec = &sections["config"];
        let mut config = RunConfig::default();
        for (k, v) in &sec.lines {
            config
                .set(k, &v.join(" "))
                .map_err(|e| sec.err(e.to_string()))?;
        }
        config.validate().map_err(|e| sec.err(e.to_string()))?;

        let sec = &sections["classes"];
        let count: usize = sec.scalar("count")?;
        let names: Vec<String> = sec
            .all("name")
            .map(|v| v.first().map(|s| s.to_string()).ok_or_else(|| sec.err("empty name")))
            .collect::<Result<_>>()?;
        if names.len() != count {
            return Err(sec.err(format!("count {count} but {} names", names.len())));
        }
        let mut grouping = BTreeMap::new();
        for g in sec.all("group") {
            match g {
                [raw, idx] => {
                    let raw = raw.parse().map_err(|_| sec.err("bad group"))?;
                    let idx = idx.parse().map_err(|_| sec.err("bad group"))?;
                    grouping.insert(raw, idx);
                }
                _ => return Err(sec.err("bad group line")),
            }
        }
        let classes = ClassTable::with_grouping(names, (!grouping.is_empty()).then_some(grouping))
            .map_err(|e| sec.err(e.to_string()))?;
        let c = classes.n_classes();

        let sec = &sections["features"];
        let catalog_version: String = sec.scalar("catalog")?;
        let standardizer = Standardizer {
            mean: sec.floats("mean")?,
            std: sec.floats("std")?,
        };

        let sec = &sections["mask"];
        let bits: String = sec.scalar("bits")?;
        let mask = FeatureMask::parse(&bits).map_err(|e| sec.err(e.to_string()))?;

        let sec = &sections["visual"];
        let mut classifiers = Vec::with_capacity(c);
        let mut pending: Option<(usize, bool, f64)> = None;
        for (k, v) in &sec.lines {
            match (*k, pending.take()) {
                ("classifier", None) => {
                    let [idx, deg, l2] = v.as_slice() else {
                        return Err(sec.err("bad classifier header"));
                    };
                    let idx = idx.parse().map_err(|_| sec.err("bad classifier index"))?;
                    let deg = match *deg {
                        "0" => false,
                        "1" => true,
                        _ => return Err(sec.err("bad degenerate flag")),
                    };
                    let l2 = l2.parse().map_err(|_| sec.err("bad l2"))?;
                    pending = Some((idx, deg, l2));
                }
                ("weights", Some((class_index, degenerate, l2))) => {
                    let weights: Vec<f64> = sec.array(v, "weights")?;
                    if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
                        return Err(sec.err("invalid weights"));
                    }
                    classifiers.push(BinaryClassifier { class_index, weights, l2, degenerate });
                }
                _ => return Err(sec.err(format!("unexpected `{k}`"))),
            }
        }
        if pending.is_some() {
            return Err(sec.err("classifier without weights"));
        }

        let sec = &sections["priors"];
        let grid: usize = sec.scalar("grid")?;
        let adjacency: Vec<u64> = sec.array(sec.fields("adjacency")?, "adjacency")?;
        let block: Vec<u64> = sec.array(sec.fields("block")?, "block")?;
        let b = grid * grid;
        if grid < 1 || adjacency.len() != c * c || block.len() != b * c * b * c {
            return Err(sec.err("count arrays do not match classes and grid"));
        }
        let priors = ContextPriors {
            grid,
            adjacency: AdjacencyPrior::from_counts(c, adjacency),
            block: BlockPrior::from_counts(b, c, block),
        };

        let sec = &sections["mlp"];
        let shape = sec.fields("shape")?;
        let dims: Vec<usize> = shape
            .iter()
            .map(|v| v.parse().map_err(|_| sec.err("bad shape")))
            .collect::<Result<_>>()?;
        let [n_in, hidden, n_out] = dims[..] else {
            return Err(sec.err("shape expects three values"));
        };
        let mlp = IntegrationMlp {
            n_in,
            hidden,
            n_out,
            w1: sec.floats("w1")?,
            b1: sec.floats("b1")?,
            w2: sec.floats("w2")?,
            b2: sec.floats("b2")?,
        };

        let bundle = Self {
            config,
            classes,
            catalog_version,
            standardizer,
            mask,
            classifiers,
            priors,
            mlp,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
