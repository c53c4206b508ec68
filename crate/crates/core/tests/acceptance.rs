//! Acceptance criteria for the primary pipeline. Each criterion prints one
//! PASS/FAIL line; the process exits non-zero if any criterion fails.
//!
//! The optional full-corpus check runs only when `SEMSHIFT_FULLRUN_DIR`
//! points at a directory holding `representations.tsr` and `gold.tsv`
//! produced from the LiverpoolFC corpus.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semshift_core::aggregate::{
    accumulate_stream, build_representations, read_store_set, write_store_set, AggregateOptions,
    Representation, RepresentationStore, StoreSet, GLOBAL_SCOPE,
};
use semshift_core::embedding_io::{
    read_stream, write_stream, SequenceBlock, StreamError, StreamHeader, TokenRecord,
};
use semshift_core::eval::{
    evaluate, load_gold, p_value_permutation, p_value_t, pearson, synth_stream, PValueMethod,
    SynthSpec, SYNTH_PERIODS,
};
use semshift_core::shift::{levenshtein, neighbors, norm_levenshtein, rank_shifts};
use semshift_core::tokenizer::{chunk, wordpiece_tokenize, SubwordToken, TokenizedSequence, Vocab};

type Outcome = Result<(), String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

// ---------------------------------------------------------------------------
// Streaming aggregation vs brute-force grouping

/// Exact mean: f32 inputs of magnitude <= 10 are integers in 2^-100 fixed
/// point, so the i128 sum is exact and only the final division rounds.
fn exact_mean(values: &[f32]) -> f64 {
    let scale = 2f64.powi(100);
    let total: i128 = values
        .iter()
        .map(|&x| {
            let fixed = x as f64 * scale;
            assert_eq!(fixed.fract(), 0.0, "input {x} below fixed-point resolution");
            fixed as i128
        })
        .sum();
    total as f64 / scale / values.len() as f64
}

struct FuzzStream {
    header: StreamHeader,
    blocks: Vec<SequenceBlock>,
    /// (period, word) -> usage vectors in stream order
    usages: HashMap<(String, String), Vec<Vec<f32>>>,
}

fn fuzz_stream(rng: &mut ChaCha8Rng) -> FuzzStream {
    let dim = rng.random_range(1..=32usize);
    let n_periods = rng.random_range(1..=3usize);
    let n_words = rng.random_range(1..=12usize);
    let mut strings: Vec<String> = (0..n_periods).map(|p| format!("p{p}")).collect();
    strings.extend((0..n_words).map(|w| format!("word{w}")));
    strings.push("doc".into());
    let doc_ref = (strings.len() - 1) as u32;
    let mut usages: HashMap<(String, String), Vec<Vec<f32>>> = HashMap::new();
    let mut blocks = Vec::new();
    for _ in 0..rng.random_range(1..=6) {
        let period = rng.random_range(0..n_periods);
        let mut tokens = Vec::new();
        for instance in 0..rng.random_range(0..=40u32) {
            let w = rng.random_range(0..n_words);
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-10.0f32..=10.0)).collect();
            usages
                .entry((strings[period].clone(), strings[n_periods + w].clone()))
                .or_default()
                .push(v.clone());
            tokens.push(TokenRecord {
                word_ref: (n_periods + w) as u32,
                word_instance: instance,
                token_id: w as u32,
                vectors: v,
            });
        }
        blocks.push(SequenceBlock { doc_ref, period_ref: period as u32, tokens });
    }
    FuzzStream { header: StreamHeader { dim: dim as u16, layer_count: 1, strings }, blocks, usages }
}

fn as_results(blocks: &[SequenceBlock]) -> Vec<Result<SequenceBlock, StreamError>> {
    blocks.iter().cloned().map(Ok).collect()
}

fn criterion_streaming_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_200_101);
    let opts = AggregateOptions { min_count: 1, ..Default::default() };
    for case in 0..1000 {
        let s = fuzz_stream(&mut rng);
        let whole = accumulate_stream(&s.header, as_results(&s.blocks), &opts).map_err(|e| e.to_string())?;

        // shards: consecutive split at a random block boundary, built in parallel
        let cut = rng.random_range(0..=s.blocks.len());
        let shards = vec![
            (s.header.clone(), as_results(&s.blocks[..cut])),
            (s.header.clone(), as_results(&s.blocks[cut..])),
        ];
        let (sharded, _) = build_representations(shards, &opts).map_err(|e| e.to_string())?;
        let mut left = accumulate_stream(&s.header, as_results(&s.blocks[..cut]), &opts).unwrap();
        left.merge(accumulate_stream(&s.header, as_results(&s.blocks[cut..]), &opts).unwrap())
            .map_err(|e| e.to_string())?;

        let mut global: HashMap<String, Vec<Vec<f32>>> = HashMap::new();
        for ((period, word), vs) in &s.usages {
            global.entry(word.clone()).or_default().extend(vs.iter().cloned());
            let expected_scope = [(period.as_str(), vs)];
            check_group(case, &whole, &left, &sharded, &expected_scope, word)?;
        }
        for (word, vs) in &global {
            check_group(case, &whole, &left, &sharded, &[(GLOBAL_SCOPE, vs)], word)?;
            let period_total: u64 = sharded
                .period_labels()
                .filter_map(|p| sharded.get(p).unwrap().get(word))
                .map(|r| r.count)
                .sum();
            ensure(period_total == vs.len() as u64, || format!("case {case}: GLOBAL count of {word} != sum of periods"))?;
        }
    }
    Ok(())
}

fn check_group(
    case: usize,
    whole: &semshift_core::aggregate::Accumulation,
    merged: &semshift_core::aggregate::Accumulation,
    stores: &StoreSet,
    groups: &[(&str, &Vec<Vec<f32>>)],
    word: &str,
) -> Outcome {
    for (scope, vs) in groups {
        let dim = vs[0].len();
        let oracle: Vec<f64> = (0..dim)
            .map(|i| exact_mean(&vs.iter().map(|v| v[i]).collect::<Vec<_>>()))
            .collect();
        for (label, acc) in [("single", whole), ("merged", merged)] {
            let acc = acc.accumulator(scope, word).ok_or_else(|| format!("case {case}: {word} missing"))?;
            ensure(acc.count() == vs.len() as u64, || format!("case {case}: count mismatch"))?;
            for (m, o) in acc.mean().unwrap().iter().zip(&oracle) {
                ensure(rel_close(*m, *o, 1e-9), || {
                    format!("case {case} {label} {scope}/{word}: mean {m} vs oracle {o}")
                })?;
            }
        }
        let rep = stores
            .get(scope)
            .and_then(|s| s.get(word))
            .ok_or_else(|| format!("case {case}: store lacks {scope}/{word}"))?;
        for (v, o) in rep.vector.iter().zip(&oracle) {
            // storage narrowing to f32 adds at most half an f32 ulp
            ensure(rel_close(*v as f64, *o, f32::EPSILON as f64), || {
                format!("case {case} sharded store {scope}/{word}: {v} vs oracle {o}")
            })?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Levenshtein metric axioms

/// Recursive edit distance on (head, tail) decompositions, memoized over the
/// closed set of all strings of length <= 6 over {a, b, c}.
struct RecursiveOracle {
    strings: Vec<String>,
    index: HashMap<String, usize>,
    memo: Vec<u8>,
}

impl RecursiveOracle {
    fn new() -> Self {
        let mut strings = vec![String::new()];
        let mut frontier = vec![String::new()];
        for _ in 0..6 {
            let mut next = Vec::new();
            for s in &frontier {
                for c in ['a', 'b', 'c'] {
                    next.push(format!("{s}{c}"));
                }
            }
            strings.extend(next.iter().cloned());
            frontier = next;
        }
        let index = strings.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let n = strings.len();
        Self { strings, index, memo: vec![u8::MAX; n * n] }
    }

    fn distance(&mut self, a: usize, b: usize) -> u8 {
        let n = self.strings.len();
        if self.memo[a * n + b] != u8::MAX {
            return self.memo[a * n + b];
        }
        let (sa, sb) = (self.strings[a].clone(), self.strings[b].clone());
        let d = if sa.is_empty() {
            sb.len() as u8
        } else if sb.is_empty() {
            sa.len() as u8
        } else {
            let ta = self.index[&sa[1..]];
            let tb = self.index[&sb[1..]];
            let substitute = self.distance(ta, tb) + u8::from(sa.as_bytes()[0] != sb.as_bytes()[0]);
            let delete = self.distance(ta, b) + 1;
            let insert = self.distance(a, tb) + 1;
            substitute.min(delete).min(insert)
        };
        self.memo[a * n + b] = d;
        d
    }
}

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

fn criterion_levenshtein_axioms() -> Outcome {
    let mut oracle = RecursiveOracle::new();
    let n = oracle.strings.len();
    for a in 0..n {
        for b in 0..n {
            let expected = oracle.distance(a, b) as usize;
            let got = levenshtein(&oracle.strings[a], &oracle.strings[b]);
            ensure(got == expected, || {
                format!("LD({:?}, {:?}) = {got}, oracle {expected}", oracle.strings[a], oracle.strings[b])
            })?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let alphabet = ['a', 'b', 'c', 'č', 'ž', 'Z'];
    for _ in 0..10_000 {
        let (x, y, z) = (
            random_word(&mut rng, &alphabet, 8),
            random_word(&mut rng, &alphabet, 8),
            random_word(&mut rng, &alphabet, 8),
        );
        let (xy, yx, yz, xz) = (levenshtein(&x, &y), levenshtein(&y, &x), levenshtein(&y, &z), levenshtein(&x, &z));
        ensure(xy == yx, || format!("asymmetric on {x:?}, {y:?}"))?;
        ensure(xz <= xy + yz, || format!("triangle violated on {x:?}, {y:?}, {z:?}"))?;
        ensure((xy == 0) == (x == y), || format!("identity violated on {x:?}, {y:?}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Formula checks

/// `n` pairs whose sample correlation is exactly `r` up to rounding.
fn data_with_correlation(r: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standardize = |v: Vec<f64>| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.into_iter().map(|x| x / norm).collect()
    };
    let x = standardize((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    let noise = standardize((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    let along: f64 = noise.iter().zip(&x).map(|(a, b)| a * b).sum();
    let perp = standardize(noise.iter().zip(&x).map(|(e, xi)| e - along * xi).collect());
    let y = x.iter().zip(&perp).map(|(a, b)| r * a + (1.0 - r * r).sqrt() * b).collect();
    (x, y)
}

fn criterion_formulas() -> Outcome {
    let nld = norm_levenshtein("brexit", "brexiteers");
    ensure((nld - 0.6).abs() < 1e-12, || format!("normLD(brexit, brexiteers) = {nld}"))?;
    let mut store = RepresentationStore::new(GLOBAL_SCOPE, 2);
    for (w, v) in [("brexit", [1.0, 0.0]), ("brexiteers", [1.0, 0.01]), ("deal", [1.0, 0.5])] {
        store.entries.insert(w.into(), Representation { vector: v.to_vec(), count: 9 });
    }
    let n = neighbors("brexit", &store, 50, 0.5, |_| false).map_err(|e| e.to_string())?;
    let words: Vec<&str> = n.entries.iter().map(|e| e.word.as_str()).collect();
    ensure(words == ["deal"], || format!("neighbors kept {words:?}"))?;

    let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    ensure((r - 0.8).abs() <= 1e-12, || format!("pearson = {r}"))?;

    let p_t = p_value_t(0.47, 97).map_err(|e| e.to_string())?;
    ensure(p_t < 0.001, || format!("t-dist p = {p_t}"))?;
    let (x, y) = data_with_correlation(0.47, 97, 7);
    let r = pearson(&x, &y).unwrap();
    ensure((r - 0.47).abs() < 1e-12, || format!("constructed r = {r}"))?;
    let p_perm = p_value_permutation(&x, &y, 10_000, 2020).map_err(|e| e.to_string())?;
    ensure((p_perm - p_t).abs() < 0.01, || format!("permutation p {p_perm} vs t-dist {p_t}"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Round trips and corruption

fn random_blocks(rng: &mut ChaCha8Rng) -> (StreamHeader, Vec<SequenceBlock>) {
    let dim = rng.random_range(1..=24u16);
    let layer_count = rng.random_range(1..=4u8);
    let strings: Vec<String> = (0..rng.random_range(1..=10))
        .map(|i| format!("s{i}-{}", random_word(rng, &['x', 'é', '字', ' '], 5)))
        .collect();
    let table = strings.len() as u32;
    let header = StreamHeader { dim, layer_count, strings };
    let floats = header.floats_per_token();
    let blocks = (0..rng.random_range(0..=8))
        .map(|_| SequenceBlock {
            doc_ref: rng.random_range(0..table),
            period_ref: rng.random_range(0..table),
            tokens: (0..rng.random_range(0..=12))
                .map(|i| TokenRecord {
                    word_ref: rng.random_range(0..table),
                    word_instance: i,
                    token_id: rng.next_u32(),
                    // arbitrary bit patterns, NaNs included
                    vectors: (0..floats).map(|_| f32::from_bits(rng.next_u32())).collect(),
                })
                .collect(),
        })
        .collect();
    (header, blocks)
}

type TokenBits = (u32, u32, u32, Vec<u32>);

fn bits(blocks: &[SequenceBlock]) -> Vec<(u32, u32, Vec<TokenBits>)> {
    blocks
        .iter()
        .map(|b| {
            let toks = b
                .tokens
                .iter()
                .map(|t| (t.word_ref, t.word_instance, t.token_id, t.vectors.iter().map(|x| x.to_bits()).collect()))
                .collect();
            (b.doc_ref, b.period_ref, toks)
        })
        .collect()
}

type EntryBits = (String, u64, Vec<u32>);

fn store_bits(set: &StoreSet) -> Vec<(String, Vec<EntryBits>)> {
    set.stores
        .iter()
        .map(|s| {
            let entries = s
                .entries
                .iter()
                .map(|(w, r)| (w.clone(), r.count, r.vector.iter().map(|x| x.to_bits()).collect()))
                .collect();
            (s.scope.clone(), entries)
        })
        .collect()
}

fn criterion_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000_003);
    let mut corruptions = 0;
    for case in 0..100 {
        let (header, blocks) = random_blocks(&mut rng);
        let mut buf = Vec::new();
        write_stream(&header, &blocks, &mut buf).map_err(|e| e.to_string())?;
        let reader = read_stream(buf.as_slice()).map_err(|e| e.to_string())?;
        ensure(reader.header() == &header, || format!("case {case}: header differs"))?;
        let back: Vec<SequenceBlock> = reader.collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        ensure(bits(&back) == bits(&blocks), || format!("case {case}: CTE1 blocks differ"))?;

        // block byte ranges
        let mut header_only = Vec::new();
        write_stream(&header, &[], &mut header_only).unwrap();
        let mut offsets = vec![header_only.len()];
        for b in &blocks {
            let body = 12 + b.tokens.len() * (12 + 4 * header.floats_per_token());
            offsets.push(offsets.last().unwrap() + body + 4);
        }
        if !blocks.is_empty() {
            let target = rng.random_range(0..blocks.len());
            let (start, end) = (offsets[target], offsets[target + 1]);
            let at = rng.random_range(start..end);
            let mut bad = buf.clone();
            bad[at] ^= rng.random_range(1..=255u8);
            let results: Vec<_> = read_stream(bad.as_slice()).map_err(|e| e.to_string())?.collect();
            ensure(results[..target].iter().all(Result::is_ok), || format!("case {case}: early block failed"))?;
            let in_count_field = (start + 8..start + 12).contains(&at);
            let detected = match &results[target] {
                Err(StreamError::Crc { block, .. }) => *block == target,
                // a damaged token count can also run the block past end of file
                Err(StreamError::Truncated { block: Some(block) }) => in_count_field && *block == target,
                _ => false,
            };
            ensure(detected, || format!("case {case}: corruption at byte {at} in block {target} gave {:?}", results[target]))?;
            corruptions += 1;
        }

        let set = random_store_set(&mut rng);
        let mut sbuf = Vec::new();
        write_store_set(&set, &mut sbuf).map_err(|e| e.to_string())?;
        let back = read_store_set(sbuf.as_slice()).map_err(|e| e.to_string())?;
        ensure(back.dim == set.dim && store_bits(&back) == store_bits(&set), || {
            format!("case {case}: TSR1 store differs")
        })?;
    }
    ensure(corruptions >= 80, || format!("only {corruptions} corruption cases exercised"))
}

fn random_store_set(rng: &mut ChaCha8Rng) -> StoreSet {
    let dim = rng.random_range(1..=32usize);
    let mut set = StoreSet::new(dim);
    let n_scopes = rng.random_range(1..=4);
    for s in 0..n_scopes {
        let label = if s + 1 == n_scopes { GLOBAL_SCOPE.to_string() } else { format!("period{s}") };
        let mut store = RepresentationStore::new(label, dim);
        for _ in 0..rng.random_range(1..=20) {
            let word = random_word(rng, &['a', 'b', 'ž', ',', '"'], 7);
            let vector = (0..dim).map(|_| f32::from_bits(rng.next_u32())).collect();
            store.entries.insert(word, Representation { vector, count: rng.next_u64() });
        }
        set.stores.push(store);
    }
    set
}

// ---------------------------------------------------------------------------
// End-to-end synthetic recovery

fn synthetic_run(spec: &SynthSpec) -> Result<(StoreSet, Vec<semshift_core::eval::GoldRecord>, Vec<String>), String> {
    let out = synth_stream(spec).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    write_stream(&out.header, &out.blocks, &mut bytes).map_err(|e| e.to_string())?;
    let reader = read_stream(bytes.as_slice()).map_err(|e| e.to_string())?;
    let header = reader.header().clone();
    let blocks: Vec<_> = reader.collect();
    let (stores, _) = build_representations(vec![(header, blocks)], &AggregateOptions::default())
        .map_err(|e| e.to_string())?;
    Ok((stores, out.gold, out.planted))
}

fn criterion_end_to_end_synthetic() -> Outcome {
    let [t0, t1] = SYNTH_PERIODS;
    let base = SynthSpec {
        vocab_size: 20,
        dim: 16,
        usages: 200,
        sigma: 0.1,
        planted: 1,
        theta: std::f64::consts::FRAC_PI_2,
        seed: 42,
    };
    let (stores, gold, planted) = synthetic_run(&base)?;
    let ranked = rank_shifts(t0, t1, &stores).map_err(|e| e.to_string())?;
    ensure(ranked.len() == 20, || format!("{} words scored", ranked.len()))?;
    ensure(ranked[0].word == planted[0], || format!("seed 42: top word {} is not planted {}", ranked[0].word, planted[0]))?;
    let report = evaluate(&stores, &gold, t0, t1, PValueMethod::TDist).map_err(|e| e.to_string())?;
    ensure(report.pearson_r > 0.9, || format!("synthetic gold r = {}", report.pearson_r))?;

    let mut hits = 0;
    for seed in 42..62 {
        let (stores, _, planted) = synthetic_run(&SynthSpec { seed, ..base.clone() })?;
        let ranked = rank_shifts(t0, t1, &stores).map_err(|e| e.to_string())?;
        hits += usize::from(ranked[0].word == planted[0]);
    }
    ensure(hits == 20, || format!("precision@1 = {hits}/20"))?;

    // no planted rotation: every distance stays within three times the
    // expected sampling distance (dim - 1) * sigma^2 / usages
    let null = SynthSpec { theta: 0.0, ..base.clone() };
    let (stores, _, _) = synthetic_run(&null)?;
    let bound = 3.0 * base.dim as f64 * base.sigma.powi(2) / base.usages as f64;
    let ranked = rank_shifts(t0, t1, &stores).map_err(|e| e.to_string())?;
    ensure(ranked.iter().all(|s| s.distance < bound), || {
        format!("null run max distance {} exceeds {bound}", ranked[0].distance)
    })
}

// ---------------------------------------------------------------------------
// Tokenizer properties

fn random_vocab(rng: &mut ChaCha8Rng) -> Vocab {
    let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"].map(String::from).to_vec();
    for _ in 0..rng.random_range(1..40) {
        let piece = random_word(rng, &['a', 'b', 'c', 'é'], 4);
        if piece.is_empty() {
            continue;
        }
        let tok = if rng.random_bool(0.5) { format!("##{piece}") } else { piece };
        if !tokens.contains(&tok) {
            tokens.push(tok);
        }
    }
    Vocab::from_tokens(tokens).expect("valid fuzz vocab")
}

fn criterion_tokenizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(254);
    let mut checked = 0;
    for _ in 0..300 {
        let vocab = random_vocab(&mut rng);
        for _ in 0..50 {
            let word = random_word(&mut rng, &['a', 'b', 'c', 'é'], 10);
            if word.is_empty() {
                continue;
            }
            let ids = wordpiece_tokenize(&word, &vocab);
            if ids == [vocab.unk_id] {
                continue;
            }
            checked += 1;
            let longest = word
                .char_indices()
                .map(|(i, c)| &word[..i + c.len_utf8()])
                .filter(|p| vocab.id(p).is_some())
                .max_by_key(|p| p.len());
            ensure(longest == vocab.token(ids[0]), || format!("{word:?}: first piece not the longest prefix"))?;
            let joined: String = ids.iter().map(|&i| vocab.token(i).unwrap().trim_start_matches("##")).collect();
            ensure(joined == word, || format!("{word:?} detokenized to {joined:?}"))?;
        }
    }
    ensure(checked > 1000, || format!("only {checked} UNK-free words exercised"))?;

    for case in 0..500 {
        let mut doc = TokenizedSequence {
            doc_id: format!("d{case}"),
            period_label: "p".into(),
            surfaces: Vec::new(),
            tokens: Vec::new(),
        };
        for w in 0..rng.random_range(0..1200u32) {
            doc.surfaces.push(format!("w{w}"));
            for _ in 0..rng.random_range(1..=8) {
                doc.tokens.push(SubwordToken { token_id: rng.next_u32(), word_instance: w, word_ref: w });
            }
        }
        let chunks = chunk(&doc, 254).map_err(|e| e.to_string())?;
        ensure(chunks.iter().all(|c| !c.is_empty() && c.len() <= 254), || format!("case {case}: chunk size out of bounds"))?;
        let mut flat: Vec<(u32, u32, String)> = chunks
            .iter()
            .flat_map(|c| c.tokens.iter().map(move |t| (t.token_id, t.word_instance, c.surface(t).to_string())))
            .collect();
        let mut orig: Vec<(u32, u32, String)> =
            doc.tokens.iter().map(|t| (t.token_id, t.word_instance, doc.surface(t).to_string())).collect();
        ensure(flat == orig, || format!("case {case}: chunking reordered tokens"))?;
        flat.sort();
        orig.sort();
        ensure(flat == orig, || format!("case {case}: token multiset changed"))?;
        for c in &chunks {
            ensure(c.tokens.windows(2).all(|w| w[0].word_instance <= w[1].word_instance), || {
                format!("case {case}: word_instance decreases")
            })?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Optional full-corpus run

enum FullRun {
    Skipped(String),
    Ran(Outcome),
}

fn criterion_full_run() -> FullRun {
    let Ok(dir) = std::env::var("SEMSHIFT_FULLRUN_DIR") else {
        return FullRun::Skipped("SEMSHIFT_FULLRUN_DIR not set".into());
    };
    let dir = std::path::PathBuf::from(dir);
    let run = || -> Outcome {
        let file = std::fs::File::open(dir.join("representations.tsr")).map_err(|e| e.to_string())?;
        let stores = read_store_set(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
        let gold = load_gold(&dir.join("gold.tsv"), true).map_err(|e| e.to_string())?;
        let report = evaluate(&stores, &gold, "2013", "2017", PValueMethod::TDist).map_err(|e| e.to_string())?;
        ensure((report.pearson_r - 0.47).abs() <= 0.05, || format!("r = {}", report.pearson_r))?;
        ensure(report.p_value < 0.001, || format!("p = {}", report.p_value))?;
        let max = report.pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
        ensure(max <= 0.35, || format!("max gold-word distance {max}"))
    };
    FullRun::Ran(run())
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("streaming aggregation matches brute-force oracle", Duration::from_secs(30), criterion_streaming_aggregation),
        ("levenshtein oracle equality and metric axioms", Duration::from_secs(60), criterion_levenshtein_axioms),
        ("normLD, pearson and p-value formulas", Duration::from_secs(60), criterion_formulas),
        ("CTE1/TSR1 round trip and CRC corruption detection", Duration::from_secs(60), criterion_round_trip),
        ("end-to-end synthetic planted shift recovery", Duration::from_secs(60), criterion_end_to_end_synthetic),
        ("tokenizer greedy, detokenization and chunking properties", Duration::from_secs(30), criterion_tokenizer),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|()| {
            ensure(elapsed <= budget, || format!("took {elapsed:.1?}, budget {budget:?}"))
        });
        match outcome {
            Ok(()) => println!("PASS  {name} ({elapsed:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name} ({elapsed:.2?}): {msg}");
            }
        }
    }
    match criterion_full_run() {
        FullRun::Skipped(why) => println!("SKIP  full LiverpoolFC run ({why})"),
        FullRun::Ran(Ok(())) => println!("PASS  full LiverpoolFC run"),
        FullRun::Ran(Err(msg)) => {
            failed += 1;
            println!("FAIL  full LiverpoolFC run: {msg}");
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
