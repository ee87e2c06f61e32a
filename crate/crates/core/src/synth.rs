//! Bundled synthetic classification corpus.
//!
//! Dataset `i` of a corpus generated with seed `s` is drawn from a ChaCha8
//! stream seeded with `s + i`, so any single dataset can be regenerated on
//! its own. Kinds cycle through Gaussian blobs, XOR, concentric rings,
//! imbalanced mixtures, noisy linear boundaries and blobs with a categorical
//! column.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{parse_csv, CsvOptions, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_CORPUS_SIZE: usize = 24;
pub const DEFAULT_CORPUS_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Blobs,
    Xor,
    Rings,
    Imbalanced,
    NoisyLinear,
    Categorical,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Blobs,
        Kind::Xor,
        Kind::Rings,
        Kind::Imbalanced,
        Kind::NoisyLinear,
        Kind::Categorical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Blobs => "blobs",
            Kind::Xor => "xor",
            Kind::Rings => "rings",
            Kind::Imbalanced => "imbalanced",
            Kind::NoisyLinear => "linear",
            Kind::Categorical => "categorical",
        }
    }
}

/// A generated dataset in CSV form: header plus rows, label last.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SynthTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Encode and standardize, exactly as loading the CSV from disk would.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let opts = CsvOptions {
            has_header: true,
            label_col: None,
        };
        Ok(parse_csv(&self.name, &self.to_csv(), &opts)?.standardized())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generate one dataset of the given kind.
pub fn generate(kind: Kind, index: usize, seed: u64) -> SynthTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(80..=400);
    let p = rng.random_range(2..=12);
    let mut x = vec![vec![0.0; p]; n];
    let mut y = vec![0usize; n];
    let mut cat: Option<Vec<String>> = None;

    match kind {
        Kind::Blobs | Kind::Categorical => {
            let classes = rng.random_range(2..=4);
            let spread = rng.random_range(0.8..2.5);
            let centers: Vec<Vec<f64>> = (0..classes).map(|_| (0..p).map(|_| spread * gauss(&mut rng)).collect()).collect();
            for i in 0..n {
                y[i] = i % classes;
                for f in 0..p {
                    x[i][f] = centers[y[i]][f] + gauss(&mut rng);
                }
            }
            if kind == Kind::Categorical {
                let levels = ["red", "green", "blue", "amber"];
                cat = Some(
                    y.iter()
                        .map(|&c| {
                            let l = if rng.random::<f64>() < 0.7 { c } else { rng.random_range(0..levels.len()) };
                            levels[l % levels.len()].to_owned()
                        })
                        .collect(),
                );
            }
        }
        Kind::Xor => {
            let noise = rng.random_range(0.05..0.4);
            for i in 0..n {
                for f in 0..p {
                    x[i][f] = rng.random_range(-1.0..1.0);
                }
                y[i] = usize::from((x[i][0] > 0.0) != (x[i][1] > 0.0));
                x[i][0] += noise * gauss(&mut rng);
                x[i][1] += noise * gauss(&mut rng);
            }
        }
        Kind::Rings => {
            let width = rng.random_range(0.1..0.5);
            for i in 0..n {
                y[i] = i % 2;
                let r = 1.0 + y[i] as f64 + width * gauss(&mut rng);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                x[i][0] = r * a.cos();
                x[i][1] = r * a.sin();
                for f in 2..p {
                    x[i][f] = gauss(&mut rng);
                }
            }
        }
        Kind::Imbalanced => {
            let minority = rng.random_range(0.08..0.25);
            let shift = rng.random_range(1.0..3.0);
            for i in 0..n {
                y[i] = usize::from((i as f64 + 0.5) / (n as f64) < minority);
                for f in 0..p {
                    let center = if y[i] == 1 && f < 2 { shift } else { 0.0 };
                    x[i][f] = center + gauss(&mut rng);
                }
            }
        }
        Kind::NoisyLinear => {
            let flip = rng.random_range(0.0..0.2);
            let w: Vec<f64> = (0..p).map(|_| gauss(&mut rng)).collect();
            for i in 0..n {
                for f in 0..p {
                    x[i][f] = gauss(&mut rng);
                }
                let s: f64 = x[i].iter().zip(&w).map(|(a, b)| a * b).sum();
                y[i] = usize::from(s > 0.0);
                if rng.random::<f64>() < flip {
                    y[i] = 1 - y[i];
                }
            }
        }
    }
    // a degenerate draw must still have two classes
    if y.iter().all(|&c| c == y[0]) {
        y[0] = 1 - y[0].min(1);
    }

    let mut header: Vec<String> = (0..p).map(|f| format!("f{f}")).collect();
    if cat.is_some() {
        header.push("colour".into());
    }
    header.push("label".into());
    let rows = (0..n)
        .map(|i| {
            let mut r: Vec<String> = x[i].iter().map(f64::to_string).collect();
            if let Some(c) = &cat {
                r.push(c[i].clone());
            }
            r.push(y[i].to_string());
            r
        })
        .collect();
    SynthTable {
        name: format!("synth-{index:02}-{}", kind.name()),
        header,
        rows,
    }
}

/// `size` datasets, kinds in rotation, dataset `i` seeded with `seed + i`.
pub fn corpus_tables(size: usize, seed: u64) -> Vec<SynthTable> {
    (0..size)
        .map(|i| generate(Kind::ALL[i % Kind::ALL.len()], i, seed.wrapping_add(i as u64)))
        .collect()
}

pub fn bundled_corpus(size: usize, seed: u64) -> Result<Vec<Dataset>> {
    corpus_tables(size, seed).iter().map(SynthTable::to_dataset).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_sized() {
        let a = corpus_tables(DEFAULT_CORPUS_SIZE, DEFAULT_CORPUS_SEED);
        let b = corpus_tables(DEFAULT_CORPUS_SIZE, DEFAULT_CORPUS_SEED);
        assert_eq!(a, b);
        for t in &a {
            assert!((80..=400).contains(&t.rows.len()));
            let d = t.to_dataset().unwrap();
            assert!(d.n_classes() >= 2);
            assert!(d.p_features() >= 2);
        }
    }

    #[test]
    fn single_dataset_regenerates_alone() {
        let all = corpus_tables(8, 5);
        assert_eq!(all[7], generate(Kind::ALL[7 % 6], 7, 12));
    }

    #[test]
    fn categorical_kind_is_one_hot_encoded() {
        let t = generate(Kind::Categorical, 5, 99);
        let d = t.to_dataset().unwrap();
        assert!(d.feature_names.iter().any(|f| f.starts_with("colour=")));
    }

    #[test]
    fn imbalanced_kind_has_a_minority() {
        let d = generate(Kind::Imbalanced, 3, 4).to_dataset().unwrap();
        let counts = d.class_counts();
        assert!(counts[1] * 3 < counts[0]);
    }
}
