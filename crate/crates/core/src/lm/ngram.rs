//! Count-based n-gram model with interpolated absolute discounting, held in
//! backoff form so it can be written as an ARPA-style listing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const SENT_START: &str = "<s>";
pub const SENT_END: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_DISCOUNT: f64 = 0.75;

/// Written in place of `log10(0)`.
const LOG10_ZERO: f64 = -99.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    discount: f64,
    /// Every predictable symbol: training words, `</s>` and `<unk>`.
    vocab: BTreeSet<String>,
    /// `probs[n-1]` maps an n-gram to `p(last | rest)`.
    probs: Vec<HashMap<Vec<String>, f64>>,
    /// Backoff weight of each context that has continuations.
    backoff: HashMap<Vec<String>, f64>,
}

type Counts = HashMap<Vec<String>, BTreeMap<String, usize>>;

/// Trains on word-level sentences. Each sentence is framed by `<s>` and
/// `</s>`; every position is predicted from up to `order - 1` previous
/// symbols.
pub fn ngram_train<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, discount: f64) -> Result<NgramModel> {
    if corpus.is_empty() {
        return Err(Error::domain("n-gram training corpus is empty"));
    }
    if order == 0 {
        return Err(Error::domain("n-gram order must be at least 1"));
    }
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::domain(format!("discount {discount} outside [0, 1]")));
    }
    let mut counts: Vec<Counts> = vec![HashMap::new(); order];
    let mut vocab: BTreeSet<String> = [SENT_END, UNK].iter().map(|s| s.to_string()).collect();
    for sent in corpus {
        let mut seq: Vec<String> = vec![SENT_START.to_string()];
        seq.extend(sent.iter().map(|t| t.as_ref().to_string()));
        seq.push(SENT_END.to_string());
        for i in 1..seq.len() {
            vocab.insert(seq[i].clone());
            let max_hist = (order - 1).min(i);
            for h in 0..=max_hist {
                let ctx = seq[i - h..i].to_vec();
                *counts[h].entry(ctx).or_default().entry(seq[i].clone()).or_default() += 1;
            }
        }
    }
    if vocab.contains(SENT_START) {
        return Err(Error::domain("training text contains the sentence-start marker"));
    }

    let base = 1.0 / vocab.len() as f64;
    let mut probs: Vec<HashMap<Vec<String>, f64>> = vec![HashMap::new(); order];
    let mut backoff = HashMap::new();
    let stats = |c: &BTreeMap<String, usize>| {
        let total: usize = c.values().sum();
        (total as f64, c.len() as f64)
    };

    let (total, distinct) = stats(&counts[0][&Vec::new()]);
    let bow = discount * distinct / total;
    backoff.insert(Vec::new(), bow);
    for w in &vocab {
        let c = counts[0][&Vec::new()].get(w).copied().unwrap_or(0) as f64;
        probs[0].insert(vec![w.clone()], (c - discount).max(0.0) / total + bow * base);
    }
    for n in 2..=order {
        let (lower, higher) = probs.split_at_mut(n - 1);
        let lower = &lower[n - 2];
        let table = &mut higher[0];
        for (ctx, cont) in &counts[n - 1] {
            let (total, distinct) = stats(cont);
            let bow = discount * distinct / total;
            backoff.insert(ctx.clone(), bow);
            for (w, &c) in cont {
                let mut key = ctx.clone();
                key.push(w.clone());
                // The suffix n-gram was counted at the same position, so the
                // lower table always holds it.
                let lower_p = lower[&key[1..]];
                let p = (c as f64 - discount).max(0.0) / total + bow * lower_p;
                table.insert(key, p);
            }
        }
    }
    Ok(NgramModel {
        order,
        discount,
        vocab,
        probs,
        backoff,
    })
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    /// Observed contexts, for exhaustive normalization checks.
    pub fn contexts(&self) -> Vec<Vec<String>> {
        let mut v: Vec<Vec<String>> = self.backoff.keys().cloned().collect();
        v.sort();
        v
    }

    /// `p(word | history)`; only the last `order - 1` history symbols are
    /// used. Unknown words are treated as `<unk>`.
    pub fn prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        let word = if self.vocab.contains(word) { word } else { UNK };
        let start = history.len().saturating_sub(self.order - 1);
        let hist: Vec<String> = history[start..]
            .iter()
            .map(|h| {
                let h = h.as_ref();
                if h == SENT_START || self.vocab.contains(h) {
                    h.to_string()
                } else {
                    UNK.to_string()
                }
            })
            .collect();
        self.prob_inner(&hist, word)
    }

    fn prob_inner(&self, hist: &[String], word: &str) -> f64 {
        let mut key = hist.to_vec();
        key.push(word.to_string());
        if let Some(&p) = self.probs[hist.len()].get(&key) {
            return p;
        }
        if hist.is_empty() {
            return 0.0;
        }
        let bow = self.backoff.get(hist).copied().unwrap_or(1.0);
        bow * self.prob_inner(&hist[1..], word)
    }

    /// Natural-log probability of a sentence including its end marker.
    /// Zero probabilities are floored at `1/|V|` so the result is finite.
    pub fn logprob<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let floor = 1.0 / self.vocab.len() as f64;
        let mut hist: Vec<String> = vec![SENT_START.to_string()];
        let mut total = 0.0;
        let words = tokens.iter().map(|t| t.as_ref()).chain(std::iter::once(SENT_END));
        for w in words {
            let p = self.prob(&hist, w);
            total += if p > 0.0 { p.ln() } else { floor.ln() };
            hist.push(w.to_string());
        }
        total
    }

    /// ARPA-style listing: `log10prob<TAB>ngram<TAB>log10backoff`.
    pub fn to_arpa(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\data\\");
        let _ = writeln!(out, "order {}", self.order);
        let _ = writeln!(out, "discount {}", self.discount);
        let start_entry = vec![SENT_START.to_string()];
        let has_start = self.backoff.contains_key(&start_entry);
        for (n, table) in self.probs.iter().enumerate() {
            let extra = usize::from(n == 0 && has_start);
            let _ = writeln!(out, "ngram {}={}", n + 1, table.len() + extra);
        }
        for (n, table) in self.probs.iter().enumerate() {
            let _ = writeln!(out, "\n\\{}-grams:", n + 1);
            let mut keys: Vec<&Vec<String>> = table.keys().collect();
            if n == 0 && has_start {
                keys.push(&start_entry);
            }
            keys.sort();
            for k in keys {
                let p = table.get(k).map_or(LOG10_ZERO, |p| log10_or_zero(*p));
                let _ = write!(out, "{}\t{}", p, k.join(" "));
                if let Some(b) = self.backoff.get(k) {
                    let _ = write!(out, "\t{}", log10_or_zero(*b));
                }
                out.push('\n');
            }
        }
        let empty_bow = self.backoff.get(&Vec::new()).copied().unwrap_or(0.0);
        let _ = writeln!(out, "\n\\unigram-backoff\\ {}", log10_or_zero(empty_bow));
        let _ = writeln!(out, "\\end\\");
        out
    }

    pub fn from_arpa(text: &str) -> Result<Self> {
        let bad = |n: usize, what: &str| Error::format("n-gram LM file", format!("line {}: {what}", n + 1));
        let mut order = None;
        let mut discount = None;
        let mut probs: Vec<HashMap<Vec<String>, f64>> = Vec::new();
        let mut backoff = HashMap::new();
        let mut section: Option<usize> = None;
        let mut ended = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line == "\\data\\" {
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                break;
            }
            if let Some(v) = line.strip_prefix("order ") {
                let o: usize = v.parse().map_err(|_| bad(n, "bad order"))?;
                if o == 0 {
                    return Err(bad(n, "order must be at least 1"));
                }
                probs = vec![HashMap::new(); o];
                order = Some(o);
            } else if let Some(v) = line.strip_prefix("discount ") {
                discount = Some(v.parse::<f64>().map_err(|_| bad(n, "bad discount"))?);
            } else if line.starts_with("ngram ") {
                continue;
            } else if let Some(v) = line.strip_prefix("\\unigram-backoff\\ ") {
                let b: f64 = v.parse().map_err(|_| bad(n, "bad backoff"))?;
                backoff.insert(Vec::new(), exp10_or_zero(b));
            } else if let Some(v) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                let k: usize = v.parse().map_err(|_| bad(n, "bad section header"))?;
                if k == 0 || k > probs.len() {
                    return Err(bad(n, "section outside model order"));
                }
                section = Some(k - 1);
            } else {
                let k = section.ok_or_else(|| bad(n, "entry before any section"))?;
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() < 2 || fields.len() > 3 {
                    return Err(bad(n, "expected log10prob, ngram and optional backoff"));
                }
                let p: f64 = fields[0].parse().map_err(|_| bad(n, "bad probability"))?;
                let key: Vec<String> = fields[1].split(' ').map(str::to_string).collect();
                if key.len() != k + 1 {
                    return Err(bad(n, "n-gram length does not match section"));
                }
                if let Some(b) = fields.get(2) {
                    let b: f64 = b.parse().map_err(|_| bad(n, "bad backoff"))?;
                    backoff.insert(key.clone(), exp10_or_zero(b));
                }
                if !(k == 0 && key[0] == SENT_START) {
                    probs[k].insert(key, exp10_or_zero(p));
                }
            }
        }
        let order = order.ok_or_else(|| Error::format("n-gram LM file", "missing order"))?;
        let discount = discount.ok_or_else(|| Error::format("n-gram LM file", "missing discount"))?;
        if !ended {
            return Err(Error::format("n-gram LM file", "missing \\end\\ marker"));
        }
        let vocab: BTreeSet<String> = probs[0].keys().map(|k| k[0].clone()).collect();
        if !vocab.contains(UNK) || !vocab.contains(SENT_END) {
            return Err(Error::format("n-gram LM file", "unigram table lacks <unk> or </s>"));
        }
        Ok(NgramModel {
            order,
            discount,
            vocab,
            probs,
            backoff,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_arpa()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_arpa(&text)
    }
}

fn log10_or_zero(p: f64) -> f64 {
    if p > 0.0 {
        p.log10()
    } else {
        LOG10_ZERO
    }
}

fn exp10_or_zero(l: f64) -> f64 {
    if l <= LOG10_ZERO {
        0.0
    } else {
        10f64.powf(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn unigram_relative_frequencies_without_discount() {
        let m = ngram_train(&corpus(&["a a b"]), 1, 0.0).unwrap();
        let none: [&str; 0] = [];
        assert_eq!(m.prob(&none, "a"), 2.0 / 4.0);
        assert_eq!(m.prob(&none, "b"), 1.0 / 4.0);
        assert_eq!(m.prob(&none, SENT_END), 1.0 / 4.0);
        assert_eq!(m.prob(&none, "zzz"), 0.0);
        let expected = (0.5f64).ln() + (0.5f64).ln() + (0.25f64).ln() + (0.25f64).ln();
        assert!((m.logprob(&["a", "a", "b"]) - expected).abs() < 1e-15);
        assert!(m.logprob(&["zzz"]).is_finite());
    }

    #[test]
    fn discounting_gives_unseen_words_mass() {
        let m = ngram_train(&corpus(&["a a b"]), 1, 0.75).unwrap();
        let none: [&str; 0] = [];
        assert!(m.prob(&none, "zzz") > 0.0);
        let total: f64 = m.vocab().iter().map(|w| m.prob(&none, w)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sentence_scores_end_marker_only() {
        let m = ngram_train(&corpus(&["a b", ""]), 2, 0.0).unwrap();
        assert_eq!(m.logprob::<&str>(&[]), (0.5f64).ln());
    }

    #[test]
    fn arpa_round_trip() {
        let m = ngram_train(&corpus(&["a b c", "a c", "b b a c"]), 3, 0.75).unwrap();
        let text = m.to_arpa();
        let back = NgramModel::from_arpa(&text).unwrap();
        assert_eq!(back.order(), 3);
        for s in [vec!["a", "b"], vec!["c", "zzz", "a"], vec![]] {
            assert!((m.logprob(&s) - back.logprob(&s)).abs() < 1e-12);
        }
        assert_eq!(back.to_arpa(), text);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ngram_train::<String>(&[], 2, 0.75).is_err());
        assert!(ngram_train(&corpus(&["a"]), 0, 0.75).is_err());
        assert!(NgramModel::from_arpa("order 2\n").is_err());
    }
}
