//! Mixed error rate: English scored by word, Mandarin by character.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::vocab::{classify_token_language, is_cjk_ideograph, is_language_tag, tag_language, LanguageAttr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringUnit {
    pub text: String,
    pub lang: LanguageAttr,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScoringUnitSequence {
    pub units: Vec<ScoringUnit>,
    /// Index of the input token each unit came from.
    pub source: Vec<usize>,
}

impl ScoringUnitSequence {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.units.iter().map(|u| u.text.as_str()).collect()
    }
}

/// Splits Mandarin tokens into characters and keeps everything else whole.
/// Language-ID tokens are dropped.
pub fn tokenize_mixed<S: AsRef<str>>(tokens: &[S]) -> ScoringUnitSequence {
    let mut seq = ScoringUnitSequence::default();
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        if is_language_tag(tok) || tok.is_empty() {
            continue;
        }
        let lang = classify_token_language(tok).unwrap_or(LanguageAttr::Neutral);
        if lang == LanguageAttr::Mandarin {
            for c in tok.chars() {
                let lang = if is_cjk_ideograph(c) {
                    LanguageAttr::Mandarin
                } else {
                    classify_token_language(c.encode_utf8(&mut [0; 4])).unwrap_or(LanguageAttr::Neutral)
                };
                seq.units.push(ScoringUnit {
                    text: c.to_string(),
                    lang,
                });
                seq.source.push(i);
            }
        } else {
            seq.units.push(ScoringUnit {
                text: tok.to_string(),
                lang,
            });
            seq.source.push(i);
        }
    }
    seq
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    /// Reference and hypothesis indices of a correct pair.
    Match(usize, usize),
    Substitute(usize, usize),
    /// Hypothesis index of an extra unit.
    Insert(usize),
    /// Reference index of a missing unit.
    Delete(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    fn add(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
    }
}

/// Minimum-cost unit-weight alignment of `hyp` against `reference`, in
/// reference order. Among equal-cost backtraces, substitution is preferred
/// over insertion over deletion.
pub fn align<T: PartialEq>(reference: &[T], hyp: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let ins = d[i * w + j - 1] + 1;
            let del = d[(i - 1) * w + j] + 1;
            d[i * w + j] = sub.min(ins).min(del);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                ops.push(if same {
                    EditOp::Match(i - 1, j - 1)
                } else {
                    EditOp::Substitute(i - 1, j - 1)
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            ops.push(EditOp::Insert(j - 1));
            j -= 1;
        } else {
            ops.push(EditOp::Delete(i - 1));
            i -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn count_ops(ops: &[EditOp]) -> EditCounts {
    let mut c = EditCounts::default();
    for op in ops {
        match op {
            EditOp::Match(..) => {}
            EditOp::Substitute(..) => c.substitutions += 1,
            EditOp::Insert(_) => c.insertions += 1,
            EditOp::Delete(_) => c.deletions += 1,
        }
    }
    c
}

pub fn edit_distance(reference: &ScoringUnitSequence, hyp: &ScoringUnitSequence) -> EditCounts {
    count_ops(&align(&reference.texts(), &hyp.texts()))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LanguageBreakdown {
    pub ref_units: usize,
    pub counts: EditCounts,
}

impl LanguageBreakdown {
    pub fn rate(&self) -> f64 {
        percent(self.counts.total(), self.ref_units)
    }
}

/// Corpus-level scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MerReport {
    pub ref_units: usize,
    pub counts: EditCounts,
    pub mandarin: LanguageBreakdown,
    pub english: LanguageBreakdown,
    pub utterances: usize,
}

/// `100 · errors / units`; a zero denominator counts as one unit.
fn percent(errors: usize, units: usize) -> f64 {
    100.0 * errors as f64 / units.max(1) as f64
}

impl MerReport {
    pub fn mer(&self) -> f64 {
        percent(self.counts.total(), self.ref_units)
    }
}

impl fmt::Display for MerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MER {:.2}", self.mer())?;
        writeln!(f, "MAN_ERR {:.2}", self.mandarin.rate())?;
        writeln!(f, "ENG_ERR {:.2}", self.english.rate())?;
        writeln!(
            f,
            "S {} I {} D {}",
            self.counts.substitutions, self.counts.insertions, self.counts.deletions
        )?;
        writeln!(f, "UNITS {} UTTERANCES {}", self.ref_units, self.utterances)
    }
}

fn check_ids<'a>(refs: impl Iterator<Item = &'a str>, hyps: impl Iterator<Item = &'a str>) -> Result<()> {
    let r: BTreeSet<&str> = refs.collect();
    let h: BTreeSet<&str> = hyps.collect();
    if r != h {
        return Err(Error::IdMismatch {
            missing: r.difference(&h).map(|s| s.to_string()).collect(),
            extra: h.difference(&r).map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

fn breakdown_for(lang: LanguageAttr, report: &mut MerReport) -> Option<&mut LanguageBreakdown> {
    match lang {
        LanguageAttr::Mandarin => Some(&mut report.mandarin),
        LanguageAttr::English => Some(&mut report.english),
        LanguageAttr::Neutral => None,
    }
}

/// Scores hypotheses against references, both given as `(utt_id, tokens)`.
/// Language-ID tokens are ignored on both sides. Errors are attributed to
/// the language of the reference unit; insertions to the language of the
/// inserted hypothesis unit.
pub fn mer_score<S: AsRef<str>>(refs: &[(String, Vec<S>)], hyps: &[(String, Vec<S>)]) -> Result<MerReport> {
    check_ids(
        refs.iter().map(|(i, _)| i.as_str()),
        hyps.iter().map(|(i, _)| i.as_str()),
    )?;
    let hyp_map: BTreeMap<&str, &Vec<S>> = hyps.iter().map(|(i, t)| (i.as_str(), t)).collect();
    let mut report = MerReport::default();
    for (id, ref_tokens) in refs {
        let r = tokenize_mixed(ref_tokens);
        let h = tokenize_mixed(hyp_map[id.as_str()]);
        let ops = align(&r.texts(), &h.texts());
        report.utterances += 1;
        report.ref_units += r.len();
        for u in &r.units {
            if let Some(b) = breakdown_for(u.lang, &mut report) {
                b.ref_units += 1;
            }
        }
        report.counts.add(&count_ops(&ops));
        for op in ops {
            let (lang, counts) = match op {
                EditOp::Match(..) => continue,
                EditOp::Substitute(i, _) => (
                    r.units[i].lang,
                    EditCounts {
                        substitutions: 1,
                        ..Default::default()
                    },
                ),
                EditOp::Delete(i) => (
                    r.units[i].lang,
                    EditCounts {
                        deletions: 1,
                        ..Default::default()
                    },
                ),
                EditOp::Insert(j) => (
                    h.units[j].lang,
                    EditCounts {
                        insertions: 1,
                        ..Default::default()
                    },
                ),
            };
            if let Some(b) = breakdown_for(lang, &mut report) {
                b.counts.add(&counts);
            }
        }
    }
    Ok(report)
}

/// How often an emitted language-ID token agrees with the reference language
/// of the unit that follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LidAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl LidAccuracy {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            return 1.0;
        }
        self.correct as f64 / self.total as f64
    }
}

/// For every language-ID token in a hypothesis, the next hypothesis unit is
/// mapped through the alignment to its reference unit; the tag counts as
/// correct when that reference unit has the tag's language. Tags followed
/// by nothing or by an inserted unit count as wrong.
pub fn lid_accuracy<S: AsRef<str>>(refs: &[(String, Vec<S>)], hyps: &[(String, Vec<S>)]) -> Result<LidAccuracy> {
    check_ids(
        refs.iter().map(|(i, _)| i.as_str()),
        hyps.iter().map(|(i, _)| i.as_str()),
    )?;
    let ref_map: BTreeMap<&str, &Vec<S>> = refs.iter().map(|(i, t)| (i.as_str(), t)).collect();
    let mut acc = LidAccuracy::default();
    for (id, hyp_tokens) in hyps {
        let r = tokenize_mixed(ref_map[id.as_str()]);
        let h = tokenize_mixed(hyp_tokens);
        let ops = align(&r.texts(), &h.texts());
        let mut hyp_to_ref = vec![None; h.len()];
        for op in ops {
            if let EditOp::Match(i, j) | EditOp::Substitute(i, j) = op {
                hyp_to_ref[j] = Some(i);
            }
        }
        for (pos, tok) in hyp_tokens.iter().enumerate() {
            let Some(lang) = tag_language(tok.as_ref()) else {
                continue;
            };
            acc.total += 1;
            let next_unit = h.source.iter().position(|&s| s > pos);
            let ref_lang = next_unit.and_then(|j| hyp_to_ref[j]).map(|i| r.units[i].lang);
            if ref_lang == Some(lang) {
                acc.correct += 1;
            }
        }
    }
    Ok(acc)
}
