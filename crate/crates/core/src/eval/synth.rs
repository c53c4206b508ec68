//! Synthetic CTE1 streams with planted semantic shifts.
//!
//! Every word gets a random unit direction; each usage is that direction
//! plus isotropic Gaussian noise. Planted words have their direction rotated
//! by `theta` in the second period, so their period means drift apart while
//! all other words stay put up to sampling noise.

use std::io::Write;

use rand_distr::{Distribution, Normal, StandardNormal};

use super::{EvalError, GoldRecord};
use crate::embedding_io::{SequenceBlock, StreamHeader, TokenRecord};
use crate::rng;
use crate::tokenizer::DEFAULT_CONTENT_LIMIT;

pub const SYNTH_PERIODS: [&str; 2] = ["t0", "t1"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub dim: usize,
    pub usages: usize,
    pub sigma: f64,
    pub planted: usize,
    pub theta: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            vocab_size: 20,
            dim: 16,
            usages: 200,
            sigma: 0.1,
            planted: 1,
            theta: std::f64::consts::FRAC_PI_2,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Synth(m.to_string()));
        if self.dim < 2 || self.dim > u16::MAX as usize {
            return bad("dim must be in [2, 65535]");
        }
        if self.vocab_size == 0 || self.usages == 0 {
            return bad("vocab_size and usages must be positive");
        }
        if self.planted > self.vocab_size {
            return bad("more planted words than vocabulary");
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return bad("sigma must be finite and non-negative");
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return bad("theta must lie in [0, pi]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub header: StreamHeader,
    pub blocks: Vec<SequenceBlock>,
    /// Planted words at index 1, everything else at 0.
    pub gold: Vec<GoldRecord>,
    pub planted: Vec<String>,
}

fn gaussian_unit<R: rand::RngCore>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `d` rotated by `theta` towards a random direction orthogonal to it.
fn rotate<R: rand::RngCore>(d: &[f64], theta: f64, rng: &mut R) -> Vec<f64> {
    let u = loop {
        let r = gaussian_unit(d.len(), rng);
        let along: f64 = r.iter().zip(d).map(|(a, b)| a * b).sum();
        let perp: Vec<f64> = r.iter().zip(d).map(|(a, b)| a - along * b).collect();
        let norm = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            break perp.into_iter().map(|x| x / norm).collect::<Vec<_>>();
        }
    };
    d.iter().zip(&u).map(|(a, b)| theta.cos() * a + theta.sin() * b).collect()
}

pub fn synth_stream(spec: &SynthSpec) -> Result<SynthOutput, EvalError> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let width = (spec.vocab_size - 1).to_string().len();
    let words: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i:0width$}")).collect();

    let mut order: Vec<usize> = (0..spec.vocab_size).collect();
    rng::fisher_yates(&mut order, &mut rng);
    let mut is_planted = vec![false; spec.vocab_size];
    for &i in &order[..spec.planted] {
        is_planted[i] = true;
    }

    let before: Vec<Vec<f64>> = (0..spec.vocab_size).map(|_| gaussian_unit(spec.dim, &mut rng)).collect();
    let after: Vec<Vec<f64>> = before
        .iter()
        .zip(&is_planted)
        .map(|(d, &p)| if p { rotate(d, spec.theta, &mut rng) } else { d.clone() })
        .collect();

    let blocks_per_period = (spec.vocab_size * spec.usages).div_ceil(DEFAULT_CONTENT_LIMIT);
    let mut strings: Vec<String> = SYNTH_PERIODS.iter().map(|s| s.to_string()).collect();
    strings.extend(words.iter().cloned());
    let doc_base = strings.len();
    for period in SYNTH_PERIODS {
        strings.extend((0..blocks_per_period).map(|k| format!("synth-{period}-{k}")));
    }

    let noise = Normal::new(0.0, spec.sigma).map_err(|e| EvalError::Synth(e.to_string()))?;
    let mut blocks = Vec::with_capacity(2 * blocks_per_period);
    for (p, directions) in [&before, &after].into_iter().enumerate() {
        let mut usages: Vec<usize> =
            (0..spec.vocab_size).flat_map(|w| std::iter::repeat_n(w, spec.usages)).collect();
        rng::fisher_yates(&mut usages, &mut rng);
        for (k, chunk) in usages.chunks(DEFAULT_CONTENT_LIMIT).enumerate() {
            let tokens = chunk
                .iter()
                .enumerate()
                .map(|(instance, &w)| TokenRecord {
                    word_ref: (SYNTH_PERIODS.len() + w) as u32,
                    word_instance: instance as u32,
                    token_id: w as u32 + 5,
                    vectors: directions[w]
                        .iter()
                        .map(|&x| (x + noise.sample(&mut rng)) as f32)
                        .collect(),
                })
                .collect();
            blocks.push(SequenceBlock {
                doc_ref: (doc_base + p * blocks_per_period + k) as u32,
                period_ref: p as u32,
                tokens,
            });
        }
    }

    let gold = words
        .iter()
        .zip(&is_planted)
        .map(|(w, &p)| GoldRecord { word: w.clone(), shift_index: if p { 1.0 } else { 0.0 } })
        .collect();
    let planted = words.iter().zip(&is_planted).filter(|(_, &p)| p).map(|(w, _)| w.clone()).collect();
    Ok(SynthOutput {
        header: StreamHeader { dim: spec.dim as u16, layer_count: 1, strings },
        blocks,
        gold,
        planted,
    })
}

pub fn write_gold<W: Write>(gold: &[GoldRecord], mut sink: W) -> std::io::Result<()> {
    for g in gold {
        writeln!(sink, "{}\t{}", g.word, g.shift_index)?;
    }
    sink.flush()
}
