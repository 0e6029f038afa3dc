//! `utt_id<TAB>rank<TAB>log_prob<TAB>tokens`, ranks starting at 1.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NbestEntry {
    pub utt_id: String,
    pub rank: usize,
    pub log_prob: f64,
    pub tokens: Vec<String>,
}

/// Groups consecutive entries by utterance, keeping file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NbestList {
    pub utterances: Vec<(String, Vec<NbestEntry>)>,
}

impl NbestList {
    pub fn push(&mut self, entry: NbestEntry) {
        match self.utterances.last_mut() {
            Some((id, list)) if *id == entry.utt_id => list.push(entry),
            _ => self.utterances.push((entry.utt_id.clone(), vec![entry])),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &NbestEntry> {
        self.utterances.iter().flat_map(|(_, l)| l.iter())
    }
}

pub fn format_nbest(list: &NbestList) -> String {
    let mut out = String::new();
    for e in list.entries() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.utt_id, e.rank, e.log_prob, e.tokens.join(" "));
    }
    out
}

pub fn parse_nbest(text: &str) -> Result<NbestList> {
    let mut list = NbestList::default();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| Error::format("n-best file", format!("line {}: {what}", n + 1));
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() < 3 {
            return Err(bad("expected utt_id, rank, log_prob and tokens"));
        }
        let rank = fields[1].parse().map_err(|_| bad("rank is not an integer"))?;
        let log_prob: f64 = fields[2].parse().map_err(|_| bad("log_prob is not a number"))?;
        let tokens = fields
            .get(3)
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default();
        list.push(NbestEntry {
            utt_id: fields[0].to_string(),
            rank,
            log_prob,
            tokens,
        });
    }
    Ok(list)
}

pub fn read_nbest(path: &Path) -> Result<NbestList> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nbest(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "u1\t1\t-1.25\t<chn> 我 <eng> go\nu1\t2\t-3.0000000000000004\t我\nu2\t1\t-0.5\t\n";
        let list = parse_nbest(text).unwrap();
        assert_eq!(list.utterances.len(), 2);
        assert_eq!(list.utterances[0].1[1].log_prob, -3.0000000000000004);
        assert!(list.utterances[1].1[0].tokens.is_empty());
        assert_eq!(format_nbest(&list), text);
        assert!(parse_nbest("u1\tx\t0\ta\n").is_err());
    }
}
