//! Taint inference: scan outbound buffers for approximate occurrences of
//! registered sensitive byte patterns.
//!
//! The scan is a two-stage pipeline. A cheap coarse filter slides windows of
//! `window_size` octets at `stride` across the buffer and keeps those whose
//! distinct q-gram overlap with the pattern's q-gram set reaches
//! `coarse_threshold` (a fraction of the pattern's distinct q-grams). Each
//! surviving window, padded by `pattern length + max_edit_distance` on both
//! sides so spans crossing window boundaries are never cut, then goes through
//! the fine matcher: substring edit distance (free start and end within the
//! buffer) computed by dynamic programming with origin tracking.
//!
//! Match semantics are deterministic: candidate spans are reduced to one
//! minimal `(distance, start)` per end position, then overlapping spans per
//! pattern are deduplicated greedily by `(distance, offset, length)` — lowest
//! distance first, then leftmost, then shortest.
//!
//! Recall guarantee (the preconditions [`Scanner::new`] enforces): every true
//! match with edit distance ≤ k is found provided the matched span fits a
//! window net of stride overlap — `pattern length + k ≤ window_size − stride
//! + 1` — and the threshold is permissive for the pattern, i.e. at most
//! `1 − k·q / (distinct q-grams of the pattern)`. Buffers shorter than one
//! q-gram bypass the coarse filter entirely.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Shortest registrable pattern.
pub const MIN_PATTERN_LEN: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum TaintError {
    #[error("pattern `{id}` is {len} octets; patterns must be at least {MIN_PATTERN_LEN}")]
    PatternTooShort { id: String, len: usize },
    #[error("invalid taint config: {0}")]
    Config(String),
    #[error("invalid pattern registry line {line}: {message}")]
    Registry { line: usize, message: String },
}

/// One registered sensitive byte sequence. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensitivePattern {
    id: String,
    bytes: Vec<u8>,
}

impl SensitivePattern {
    pub fn new(id: impl Into<String>, bytes: Vec<u8>) -> Result<SensitivePattern, TaintError> {
        let id = id.into();
        if bytes.len() < MIN_PATTERN_LEN {
            return Err(TaintError::PatternTooShort {
                id,
                len: bytes.len(),
            });
        }
        Ok(SensitivePattern { id, bytes })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Tuning knobs for the coarse/fine pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaintConfig {
    pub window_size: usize,
    pub stride: usize,
    /// Fraction of the pattern's distinct q-grams that must appear in a
    /// window for it to reach the fine matcher; in (0, 1].
    pub coarse_threshold: f64,
    pub max_edit_distance: usize,
    pub qgram_size: usize,
}

impl Default for TaintConfig {
    fn default() -> TaintConfig {
        TaintConfig {
            window_size: 1024,
            stride: 512,
            coarse_threshold: 0.5,
            max_edit_distance: 2,
            qgram_size: 4,
        }
    }
}

impl TaintConfig {
    pub fn validate(&self) -> Result<(), TaintError> {
        if self.stride == 0 || self.stride > self.window_size {
            return Err(TaintError::Config(format!(
                "stride {} must satisfy 1 <= stride <= window size {}",
                self.stride, self.window_size
            )));
        }
        if !(self.coarse_threshold > 0.0 && self.coarse_threshold <= 1.0) {
            return Err(TaintError::Config(format!(
                "coarse threshold {} must lie in (0, 1]",
                self.coarse_threshold
            )));
        }
        if self.qgram_size == 0 {
            return Err(TaintError::Config("q-gram size must be positive".into()));
        }
        Ok(())
    }
}

/// One detected (approximate) pattern occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintMatch {
    pub pattern_id: String,
    pub buffer_offset: usize,
    pub span_length: usize,
    pub edit_distance: usize,
}

/// Windows of `window_size` at `stride` whose distinct q-gram overlap with
/// the pattern meets the threshold, as `(offset, length)` pairs. Buffers or
/// patterns shorter than one q-gram bypass the filter (the whole buffer
/// becomes the single candidate); an empty buffer yields no candidates.
pub fn coarse_scan(
    buffer: &[u8],
    pattern: &SensitivePattern,
    config: &TaintConfig,
) -> Vec<(usize, usize)> {
    let q = config.qgram_size;
    if buffer.is_empty() {
        return Vec::new();
    }
    if buffer.len() < q || pattern.bytes.len() < q {
        return vec![(0, buffer.len())];
    }
    let pattern_grams: HashSet<&[u8]> = pattern.bytes.windows(q).collect();
    let needed = (pattern_grams.len() as f64 * config.coarse_threshold).ceil() as usize;
    let mut out = Vec::new();
    let mut off = 0;
    loop {
        let end = (off + config.window_size).min(buffer.len());
        let window = &buffer[off..end];
        if window.len() >= q {
            let window_grams: HashSet<&[u8]> = window.windows(q).collect();
            let present = pattern_grams
                .iter()
                .filter(|g| window_grams.contains(*g))
                .count();
            if present >= needed {
                out.push((off, end - off));
            }
        }
        if end == buffer.len() {
            // Later windows are strict suffixes of this one and cannot add
            // coverage.
            break;
        }
        off += config.stride;
    }
    out
}

/// For each end position `j` in `slice` (0..=len), the minimal
/// `(distance, origin)` over all alignments of the whole pattern against
/// `slice[origin..j]`, lexicographically: lowest distance, then leftmost
/// origin. Semi-global dynamic programming with origin tracking.
fn per_end_candidates(slice: &[u8], pattern: &[u8]) -> Vec<(usize, usize)> {
    let n = slice.len();
    let mut dist: Vec<usize> = vec![0; n + 1];
    let mut orig: Vec<usize> = (0..=n).collect();
    for (i, &pc) in pattern.iter().enumerate() {
        let mut diag_dist = dist[0];
        let mut diag_orig = orig[0];
        dist[0] = i + 1;
        for j in 1..=n {
            let next_diag_dist = dist[j];
            let next_diag_orig = orig[j];
            let sub = diag_dist + usize::from(slice[j - 1] != pc);
            let del = dist[j] + 1; // pattern octet unmatched
            let ins = dist[j - 1] + 1; // slice octet unmatched
            let (mut d, mut o) = (sub, diag_orig);
            if del < d || (del == d && orig[j] < o) {
                d = del;
                o = orig[j];
            }
            if ins < d || (ins == d && orig[j - 1] < o) {
                d = ins;
                o = orig[j - 1];
            }
            dist[j] = d;
            orig[j] = o;
            diag_dist = next_diag_dist;
            diag_orig = next_diag_orig;
        }
    }
    dist.into_iter().zip(orig).collect()
}

/// Minimum edit distance of the whole pattern against any substring of
/// `slice`, returned iff it is ≤ `k`, together with one minimizing span —
/// tie-break: lowest distance, then leftmost start, then shortest span.
pub fn fine_match(
    slice: &[u8],
    pattern: &SensitivePattern,
    k: usize,
) -> Option<(usize, Range<usize>)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for (end, (d, o)) in per_end_candidates(slice, &pattern.bytes).into_iter().enumerate() {
        if d <= k && end > o {
            let cand = (d, o, end);
            if best.map_or(true, |b| cand < b) {
                best = Some(cand);
            }
        }
    }
    best.map(|(d, start, end)| (d, start..end))
}

/// Full pipeline over one buffer: coarse filter per pattern, fine matching on
/// padded candidate windows, then per-pattern span deduplication. The result
/// is sorted by buffer offset (then span length, then pattern id) and is a
/// pure function of its inputs.
pub fn scan(
    buffer: &[u8],
    patterns: &[SensitivePattern],
    config: &TaintConfig,
) -> Vec<TaintMatch> {
    let k = config.max_edit_distance;
    let mut out = Vec::new();
    for pattern in patterns {
        let pad = pattern.bytes.len() + k;
        // Candidates from all surviving windows, reduced to the minimal
        // (distance, start) per end position — window overlap would otherwise
        // surface truncated-origin duplicates of the same end.
        let mut per_end: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (off, len) in coarse_scan(buffer, pattern, config) {
            let start = off.saturating_sub(pad);
            let end = (off + len + pad).min(buffer.len());
            for (j, (d, o)) in per_end_candidates(&buffer[start..end], &pattern.bytes)
                .into_iter()
                .enumerate()
            {
                if d > k || j <= o {
                    continue;
                }
                let cand = (d, start + o);
                per_end
                    .entry(start + j)
                    .and_modify(|best| {
                        if cand < *best {
                            *best = cand;
                        }
                    })
                    .or_insert(cand);
            }
        }
        let candidates: BTreeSet<(usize, usize, usize)> = per_end
            .into_iter()
            .map(|(end, (d, s))| (d, s, end - s))
            .collect();
        let mut accepted: Vec<(usize, usize, usize)> = Vec::new();
        for (d, s, l) in candidates {
            let disjoint = accepted
                .iter()
                .all(|&(_, s2, l2)| s + l <= s2 || s2 + l2 <= s);
            if disjoint {
                accepted.push((d, s, l));
            }
        }
        for (d, s, l) in accepted {
            out.push(TaintMatch {
                pattern_id: pattern.id.clone(),
                buffer_offset: s,
                span_length: l,
                edit_distance: d,
            });
        }
    }
    out.sort_by(|a, b| {
        (a.buffer_offset, a.span_length, &a.pattern_id).cmp(&(
            b.buffer_offset,
            b.span_length,
            &b.pattern_id,
        ))
    });
    out
}

/// A validated (patterns, config) pair: the form the bridge consumes.
///
/// Construction checks the recall preconditions for every pattern, so a
/// scanner that exists cannot silently miss in-band matches.
#[derive(Debug, Clone)]
pub struct Scanner {
    patterns: Vec<SensitivePattern>,
    config: TaintConfig,
}

impl Scanner {
    pub fn new(
        patterns: Vec<SensitivePattern>,
        config: TaintConfig,
    ) -> Result<Scanner, TaintError> {
        config.validate()?;
        let mut seen = HashSet::new();
        for p in &patterns {
            if !seen.insert(p.id.clone()) {
                return Err(TaintError::Config(format!("duplicate pattern id `{}`", p.id)));
            }
            if config.qgram_size > p.bytes.len() {
                return Err(TaintError::Config(format!(
                    "q-gram size {} exceeds the length of pattern `{}` ({})",
                    config.qgram_size,
                    p.id,
                    p.bytes.len()
                )));
            }
            let span_budget = config.window_size - config.stride + 1;
            if p.bytes.len() + config.max_edit_distance > span_budget {
                return Err(TaintError::Config(format!(
                    "pattern `{}` ({} octets) plus distance {} exceeds the {} octets a \
                     window can guarantee at this stride; grow the window or shrink the stride",
                    p.id,
                    p.bytes.len(),
                    config.max_edit_distance,
                    span_budget
                )));
            }
        }
        Ok(Scanner { patterns, config })
    }

    pub fn scan(&self, buffer: &[u8]) -> Vec<TaintMatch> {
        scan(buffer, &self.patterns, &self.config)
    }

    pub fn patterns(&self) -> &[SensitivePattern] {
        &self.patterns
    }

    pub fn config(&self) -> &TaintConfig {
        &self.config
    }
}

/// Parses a pattern registry: lines `id<TAB>hex-encoded-bytes`; blank lines
/// and `#` comments allowed.
pub fn load_patterns(text: &str) -> Result<Vec<SensitivePattern>, TaintError> {
    let mut out: Vec<SensitivePattern> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, hex_bytes) = line.split_once('\t').ok_or(TaintError::Registry {
            line: i + 1,
            message: "expected `id<TAB>hex-encoded-bytes`".into(),
        })?;
        let bytes = hex::decode(hex_bytes.trim()).map_err(|e| TaintError::Registry {
            line: i + 1,
            message: format!("bad hex: {e}"),
        })?;
        if out.iter().any(|p| p.id == id) {
            return Err(TaintError::Registry {
                line: i + 1,
                message: format!("duplicate pattern id `{id}`"),
            });
        }
        out.push(SensitivePattern::new(id, bytes)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn pat(id: &str, bytes: &[u8]) -> SensitivePattern {
        SensitivePattern::new(id, bytes.to_vec()).unwrap()
    }

    /// Exhaustive per-substring oracle: naive edit-distance DP per start row,
    /// reduced to the minimal (distance, origin) per end — independent of the
    /// production matcher's single-pass formulation.
    fn oracle_per_end(slice: &[u8], pattern: &[u8]) -> Vec<(usize, usize)> {
        let n = slice.len();
        let mut best: Vec<(usize, usize)> = (0..=n).map(|_| (usize::MAX, usize::MAX)).collect();
        for start in 0..=n {
            // dist[j] = edit distance of pattern against slice[start..start+j]
            let tail = &slice[start..];
            let mut prev: Vec<usize> = (0..=tail.len()).collect();
            let mut cur = vec![0usize; tail.len() + 1];
            // row 0 is the empty pattern: distance j; we need full pattern,
            // so iterate rows over pattern characters.
            let mut rows = vec![prev.clone()];
            for (i, &pc) in pattern.iter().enumerate() {
                cur[0] = i + 1;
                for j in 1..=tail.len() {
                    let sub = rows[i][j - 1] + usize::from(tail[j - 1] != pc);
                    cur[j] = sub.min(rows[i][j] + 1).min(cur[j - 1] + 1);
                }
                rows.push(cur.clone());
            }
            prev = rows.pop().unwrap();
            for (j, &d) in prev.iter().enumerate() {
                let end = start + j;
                if (d, start) < best[end] {
                    best[end] = (d, start);
                }
            }
        }
        best
    }

    fn oracle_scan(buffer: &[u8], patterns: &[SensitivePattern], k: usize) -> Vec<TaintMatch> {
        let mut out = Vec::new();
        for p in patterns {
            let candidates: BTreeSet<(usize, usize, usize)> = oracle_per_end(buffer, p.bytes())
                .into_iter()
                .enumerate()
                .filter(|&(end, (d, o))| d <= k && end > o)
                .map(|(end, (d, o))| (d, o, end - o))
                .collect();
            let mut accepted: Vec<(usize, usize, usize)> = Vec::new();
            for (d, s, l) in candidates {
                if accepted.iter().all(|&(_, s2, l2)| s + l <= s2 || s2 + l2 <= s) {
                    accepted.push((d, s, l));
                }
            }
            for (d, s, l) in accepted {
                out.push(TaintMatch {
                    pattern_id: p.id().to_string(),
                    buffer_offset: s,
                    span_length: l,
                    edit_distance: d,
                });
            }
        }
        out.sort_by(|a, b| {
            (a.buffer_offset, a.span_length, &a.pattern_id).cmp(&(
                b.buffer_offset,
                b.span_length,
                &b.pattern_id,
            ))
        });
        out
    }

    #[test]
    fn short_patterns_are_rejected() {
        assert!(matches!(
            SensitivePattern::new("tiny", b"abc".to_vec()),
            Err(TaintError::PatternTooShort { len: 3, .. })
        ));
    }

    #[test]
    fn fine_match_exact_occurrence() {
        let p = pat("p", b"SECRET");
        let (d, span) = fine_match(b"xx SECRET yy SECRET", &p, 2).unwrap();
        assert_eq!((d, span), (0, 3..9), "leftmost exact span wins");
    }

    #[test]
    fn fine_match_one_substitution() {
        // Computed with an independent full-DP oracle over all substrings:
        // the leftmost minimal span drops the unmatched trailing octet, so
        // the span is 8 long starting at offset 2.
        let p = pat("p", b"SECRETKEY");
        let (d, span) = fine_match(b"xxSECRETKEXzz", &p, 1).unwrap();
        assert_eq!(d, 1);
        assert_eq!(span, 2..10);
    }

    #[test]
    fn fine_match_exact_only_at_k0() {
        let p = pat("p", b"SECRETKEY");
        assert!(fine_match(b"xxSECRETKEXzz", &p, 0).is_none());
        assert!(fine_match(b"xxSECRETKEYzz", &p, 0).is_some());
    }

    #[test]
    fn fine_match_agrees_with_exhaustive_oracle_on_random_slices() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let alphabet = b"abcd";
        for trial in 0..200 {
            let slice: Vec<u8> = (0..40)
                .map(|_| alphabet[(rng.next_u32() % 4) as usize])
                .collect();
            let pattern: Vec<u8> = (0..6)
                .map(|_| alphabet[(rng.next_u32() % 4) as usize])
                .collect();
            let got = per_end_candidates(&slice, &pattern);
            let want = oracle_per_end(&slice, &pattern);
            assert_eq!(got, want, "trial {trial}: per-end candidates diverged");
        }
    }

    #[test]
    fn coarse_identical_buffer_is_one_candidate() {
        let p = pat("p", b"SECRETKEY");
        let cfg = TaintConfig {
            coarse_threshold: 1.0,
            ..TaintConfig::default()
        };
        assert_eq!(coarse_scan(p.bytes(), &p, &cfg), vec![(0, 9)]);
        assert_eq!(coarse_scan(b"", &p, &cfg), Vec::<(usize, usize)>::new());
    }

    #[test]
    fn coarse_finds_the_planting_window_in_a_large_buffer() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut buffer = vec![0u8; 64 * 1024];
        rng.fill_bytes(&mut buffer);
        let mut pattern = vec![0u8; 24];
        rng.fill_bytes(&mut pattern);
        let plant_at = 40_000;
        buffer[plant_at..plant_at + 24].copy_from_slice(&pattern);
        let p = pat("p", &pattern);
        let cfg = TaintConfig::default();
        let candidates = coarse_scan(&buffer, &p, &cfg);
        // Brute-force oracle: recompute the overlap for every window.
        let pattern_grams: HashSet<&[u8]> = pattern.windows(4).collect();
        let mut expected = Vec::new();
        let mut off = 0;
        loop {
            let end = (off + cfg.window_size).min(buffer.len());
            let grams: HashSet<&[u8]> = buffer[off..end].windows(4).collect();
            let present = pattern_grams.iter().filter(|g| grams.contains(*g)).count();
            if present * 2 >= pattern_grams.len() {
                expected.push((off, end - off));
            }
            if end == buffer.len() {
                break;
            }
            off += cfg.stride;
        }
        assert_eq!(candidates, expected);
        assert!(
            candidates
                .iter()
                .any(|&(off, len)| off <= plant_at && plant_at + 24 <= off + len),
            "planting window missing from {candidates:?}"
        );
    }

    #[test]
    fn scan_finds_two_disjoint_plants() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut buffer = vec![0u8; 3000];
        rng.fill_bytes(&mut buffer);
        let pattern = b"HIGH-ENTROPY-SECRET-0042";
        buffer[100..100 + pattern.len()].copy_from_slice(pattern);
        buffer[2200..2200 + pattern.len()].copy_from_slice(pattern);
        let p = pat("secret", pattern);
        let matches = scan(&buffer, &[p], &TaintConfig::default());
        assert_eq!(matches.len(), 2);
        assert_eq!(
            (matches[0].buffer_offset, matches[0].edit_distance),
            (100, 0)
        );
        assert_eq!(matches[1].buffer_offset, 2200);
    }

    #[test]
    fn scan_without_patterns_is_empty() {
        assert!(scan(b"anything at all", &[], &TaintConfig::default()).is_empty());
    }

    #[test]
    fn plant_sweep_across_stride_boundaries_matches_oracle() {
        // Small geometry stresses window handling: W=32, S=16 → every plant
        // position interacts with a boundary somewhere in the sweep.
        let cfg = TaintConfig {
            window_size: 32,
            stride: 16,
            coarse_threshold: 0.25,
            max_edit_distance: 2,
            qgram_size: 4,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let pattern: Vec<u8> = (0..12).map(|_| (rng.next_u32() % 256) as u8).collect();
        let p = pat("p", &pattern);
        let mut base = vec![0u8; 200];
        rng.fill_bytes(&mut base);
        for offset in 0..=(200 - pattern.len()) {
            let mut buffer = base.clone();
            buffer[offset..offset + pattern.len()].copy_from_slice(&pattern);
            let got = scan(&buffer, std::slice::from_ref(&p), &cfg);
            let want = oracle_scan(&buffer, std::slice::from_ref(&p), cfg.max_edit_distance);
            assert_eq!(got, want, "divergence with plant at {offset}");
            assert!(
                got.iter().any(|m| m.buffer_offset <= offset
                    && offset + pattern.len() <= m.buffer_offset + m.span_length + cfg.max_edit_distance),
                "plant at {offset} not matched: {got:?}"
            );
        }
    }

    #[test]
    fn scanner_validates_geometry_and_patterns() {
        let p = pat("p", b"0123456789abcdef");
        assert!(Scanner::new(vec![p.clone()], TaintConfig::default()).is_ok());
        let cramped = TaintConfig {
            window_size: 16,
            stride: 16,
            ..TaintConfig::default()
        };
        assert!(matches!(
            Scanner::new(vec![p.clone()], cramped),
            Err(TaintError::Config(_))
        ));
        let bad_q = TaintConfig {
            qgram_size: 17,
            ..TaintConfig::default()
        };
        assert!(matches!(
            Scanner::new(vec![p.clone()], bad_q),
            Err(TaintError::Config(_))
        ));
        assert!(matches!(
            Scanner::new(vec![p.clone(), p], TaintConfig::default()),
            Err(TaintError::Config(_))
        ));
    }

    #[test]
    fn pattern_registry_parsing() {
        let text = "# registered secrets\nkey_a\t53454352455431\nkey_b\tdeadbeef\n";
        let patterns = load_patterns(text).unwrap();
        assert_eq!(patterns.len(), 2);
        assert_eq!(patterns[0].bytes(), b"SECRET1");
        assert!(matches!(
            load_patterns("key\tzzzz\n"),
            Err(TaintError::Registry { line: 1, .. })
        ));
        assert!(matches!(
            load_patterns("a\tdeadbeef\na\tdeadbeef\n"),
            Err(TaintError::Registry { line: 2, .. })
        ));
    }

    proptest! {
        /// Identical inputs always produce identical match lists, and a
        /// buffer with one plant always reports it under a permissive config.
        #[test]
        fn scan_is_deterministic_and_recalls_single_plants(
            seed in 0u64..5000,
            offset in 0usize..180,
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let pattern: Vec<u8> = (0..10).map(|_| (rng.next_u32() % 256) as u8).collect();
            let mut buffer = vec![0u8; 200];
            rng.fill_bytes(&mut buffer);
            buffer[offset..offset + 10].copy_from_slice(&pattern);
            let p = SensitivePattern::new("p", pattern).unwrap();
            let cfg = TaintConfig {
                window_size: 64,
                stride: 32,
                coarse_threshold: 0.3,
                max_edit_distance: 1,
                qgram_size: 4,
            };
            let a = scan(&buffer, std::slice::from_ref(&p), &cfg);
            let b = scan(&buffer, std::slice::from_ref(&p), &cfg);
            prop_assert_eq!(&a, &b);
            prop_assert!(a.iter().any(|m| m.edit_distance == 0));
        }

        /// Lowering the threshold or the stride never removes matches.
        #[test]
        fn permissive_configs_only_add_matches(
            seed in 0u64..2000,
            offset in 0usize..150,
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let pattern: Vec<u8> = (0..10).map(|_| (rng.next_u32() % 256) as u8).collect();
            let mut buffer = vec![0u8; 160];
            rng.fill_bytes(&mut buffer);
            buffer[offset..offset + 10].copy_from_slice(&pattern);
            let p = SensitivePattern::new("p", pattern).unwrap();
            let strict = TaintConfig {
                window_size: 64,
                stride: 32,
                coarse_threshold: 0.6,
                max_edit_distance: 1,
                qgram_size: 4,
            };
            let lower_threshold = TaintConfig { coarse_threshold: 0.2, ..strict };
            let lower_stride = TaintConfig { stride: 16, ..strict };
            let base = scan(&buffer, std::slice::from_ref(&p), &strict);
            for permissive in [lower_threshold, lower_stride] {
                let wider = scan(&buffer, std::slice::from_ref(&p), &permissive);
                for m in &base {
                    prop_assert!(
                        wider.contains(m),
                        "match {:?} lost under {:?}", m, permissive
                    );
                }
            }
        }
    }
}
