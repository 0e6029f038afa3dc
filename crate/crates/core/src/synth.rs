//! Synthetic bilingual corpus with anchor-vector acoustic features, and
//! feature-domain speed perturbation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::vocab::LanguageAttr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_train: usize,
    pub num_dev: usize,
    pub num_test: usize,
    pub mandarin_vocab: usize,
    pub english_vocab: usize,
    pub p_switch: f64,
    /// Mean frames per Mandarin character.
    pub mandarin_frames: usize,
    /// Mean frames per letter of an English word.
    pub english_frames_per_char: usize,
    pub feature_dim: usize,
    pub noise: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            num_train: 2000,
            num_dev: 100,
            num_test: 200,
            mandarin_vocab: 30,
            english_vocab: 30,
            p_switch: 0.3,
            mandarin_frames: 8,
            english_frames_per_char: 3,
            feature_dim: 16,
            noise: 0.1,
            min_tokens: 4,
            max_tokens: 12,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_switch > 0.0 && self.p_switch < 1.0) {
            return Err(Error::domain(format!(
                "p_switch must lie in (0, 1), got {}",
                self.p_switch
            )));
        }
        let counts = [
            ("num_train", self.num_train),
            ("num_test", self.num_test),
            ("mandarin_vocab", self.mandarin_vocab),
            ("english_vocab", self.english_vocab),
            ("mandarin_frames", self.mandarin_frames),
            ("english_frames_per_char", self.english_frames_per_char),
            ("feature_dim", self.feature_dim),
            ("min_tokens", self.min_tokens),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::domain(format!("synth {name} must be at least 1")));
            }
        }
        if self.max_tokens < self.min_tokens {
            return Err(Error::domain("synth max_tokens is below min_tokens"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::domain("synth noise must be finite and >= 0"));
        }
        if self.mandarin_vocab > 1000 || self.english_vocab > 1000 {
            return Err(Error::domain("synth vocabularies are limited to 1000 symbols each"));
        }
        Ok(())
    }

    pub fn mandarin_words(&self) -> Vec<String> {
        (0..self.mandarin_vocab).map(mandarin_word).collect()
    }

    pub fn english_words(&self) -> Vec<String> {
        (0..self.english_vocab).map(english_word).collect()
    }

    /// Index of a token in the combined synthetic vocabulary (Mandarin
    /// first), which also seeds its anchor vector.
    pub fn token_index(&self, token: &str) -> Option<usize> {
        if let Some(i) = (0..self.mandarin_vocab).find(|&i| mandarin_word(i) == token) {
            return Some(i);
        }
        (0..self.english_vocab)
            .find(|&i| english_word(i) == token)
            .map(|i| self.mandarin_vocab + i)
    }
}

const MANDARIN: &str = "我你他她们的是不了在有个人这上中大来到说去学校家吃饭看书好天";
const ENGLISH: [&str; 30] = [
    "go", "home", "school", "meeting", "lunch", "today", "very", "good", "okay", "work", "class", "phone", "money",
    "time", "later", "maybe", "actually", "project", "deadline", "weekend", "coffee", "movie", "friend", "happy",
    "because", "really", "email", "office", "boss", "shopping",
];

fn mandarin_word(i: usize) -> String {
    match MANDARIN.chars().nth(i) {
        Some(c) => c.to_string(),
        None => char::from_u32(0x4E00 + 0x101 * i as u32)
            .expect("CJK code point")
            .to_string(),
    }
}

fn english_word(i: usize) -> String {
    if let Some(w) = ENGLISH.get(i) {
        return w.to_string();
    }
    // Pronounceable fillers: consonant-vowel pairs spelled from the index.
    let (cons, vows) = (b"bdfklmnprstv", b"aeiou");
    let mut n = i;
    let mut w = String::new();
    for _ in 0..3 {
        w.push(cons[n % cons.len()] as char);
        n /= cons.len();
        w.push(vows[n % vows.len()] as char);
        n /= vows.len();
    }
    w
}

/// SplitMix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn code(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Dev => 2,
            Split::Test => 3,
        }
    }

    pub fn count(self, config: &SynthConfig) -> usize {
        match self {
            Split::Train => config.num_train,
            Split::Dev => config.num_dev,
            Split::Test => config.num_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTranscript {
    pub id: String,
    pub tokens: Vec<(String, LanguageAttr)>,
}

impl SynthTranscript {
    pub fn words(&self) -> Vec<String> {
        self.tokens.iter().map(|(w, _)| w.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub transcript: SynthTranscript,
    pub features: Tensor2,
}

/// Transcripts of one split: a two-state language chain that switches with
/// probability `p_switch` before each token after the first, with tokens
/// drawn uniformly from the current language.
pub fn gen_transcripts(config: &SynthConfig, split: Split) -> Result<Vec<SynthTranscript>> {
    config.validate()?;
    let man = config.mandarin_words();
    let eng = config.english_words();
    let out = (0..split.count(config))
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, split.code(), i as u64, 0]));
            let len = rng.gen_range(config.min_tokens..=config.max_tokens);
            let mut english = rng.gen_bool(0.5);
            let mut tokens = Vec::with_capacity(len);
            for k in 0..len {
                if k > 0 && rng.gen_bool(config.p_switch) {
                    english = !english;
                }
                tokens.push(if english {
                    (eng[rng.gen_range(0..eng.len())].clone(), LanguageAttr::English)
                } else {
                    (man[rng.gen_range(0..man.len())].clone(), LanguageAttr::Mandarin)
                });
            }
            SynthTranscript {
                id: format!("{}-{:05}", split.name(), i),
                tokens,
            }
        })
        .collect();
    Ok(out)
}

/// Fixed anchor vector of a token, unit-variance Gaussian entries.
pub fn anchor(config: &SynthConfig, token_index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 0xA1C4, token_index as u64]));
    (0..config.feature_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// Frame-count range `(lo, hi)` of a token.
pub fn duration_bounds(config: &SynthConfig, token: &str) -> Result<(usize, usize)> {
    let idx = config
        .token_index(token)
        .ok_or_else(|| Error::domain(format!("token {token:?} is not in the synthetic vocabulary")))?;
    let mean = if idx < config.mandarin_vocab {
        config.mandarin_frames
    } else {
        config.english_frames_per_char * token.chars().count()
    };
    Ok((mean.saturating_sub(1).max(1), mean + 1))
}

/// Each token holds its anchor (plus Gaussian noise) for a duration drawn
/// uniformly from its bounds. Values are rounded to `f32`.
pub fn gen_features<R: Rng + ?Sized>(config: &SynthConfig, tokens: &[String], rng: &mut R) -> Result<Tensor2> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for tok in tokens {
        let idx = config
            .token_index(tok)
            .ok_or_else(|| Error::domain(format!("token {tok:?} is not in the synthetic vocabulary")))?;
        let (lo, hi) = duration_bounds(config, tok)?;
        let frames = rng.gen_range(lo..=hi);
        let a = anchor(config, idx);
        for _ in 0..frames {
            rows.push(
                a.iter()
                    .map(|&v| {
                        let n: f64 = StandardNormal.sample(rng);
                        (v + config.noise * n) as f32 as f64
                    })
                    .collect(),
            );
        }
    }
    Tensor2::from_rows(&rows, config.feature_dim)
}

/// Transcripts and features of one split.
pub fn gen_split(config: &SynthConfig, split: Split) -> Result<Vec<SynthUtterance>> {
    gen_transcripts(config, split)?
        .into_par_iter()
        .enumerate()
        .map(|(i, transcript)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, split.code(), i as u64, 1]));
            let features = gen_features(config, &transcript.words(), &mut rng)?;
            Ok(SynthUtterance { transcript, features })
        })
        .collect()
}

/// Linear time-axis resampling to `round(T / rate)` frames. The first and
/// last frames are kept; output frame `j` samples input position
/// `j · (T-1) / (T'-1)`.
pub fn perturb_features(features: &Tensor2, rate: f64) -> Result<Tensor2> {
    if !(rate > 0.5 && rate < 2.0) {
        return Err(Error::domain(format!("speed rate {rate} outside (0.5, 2)")));
    }
    let t = features.rows();
    if t < 2 {
        return Err(Error::domain(format!(
            "speed perturbation needs at least 2 frames, got {t}"
        )));
    }
    if rate == 1.0 {
        return Ok(features.clone());
    }
    let out_t = ((t as f64 / rate).round() as usize).max(1);
    let f = features.cols();
    let mut out = Tensor2::zeros(out_t, f);
    for j in 0..out_t {
        let s = if out_t == 1 {
            0.0
        } else {
            j as f64 * (t - 1) as f64 / (out_t - 1) as f64
        };
        let i0 = (s.floor() as usize).min(t - 1);
        let i1 = (i0 + 1).min(t - 1);
        let w = s - i0 as f64;
        let (a, b) = (features.row(i0), features.row(i1));
        for (k, o) in out.row_mut(j).iter_mut().enumerate() {
            *o = ((1.0 - w) * a[k] + w * b[k]) as f32 as f64;
        }
    }
    Ok(out)
}

pub const DEFAULT_SPEED_RATES: [f64; 3] = [0.9, 1.0, 1.1];

/// Every utterance at every rate; ids gain a `-sp<rate>` suffix except at
/// rate 1.
pub fn augment_speed(utts: &[SynthUtterance], rates: &[f64]) -> Result<Vec<SynthUtterance>> {
    let mut out = Vec::with_capacity(utts.len() * rates.len());
    for u in utts {
        for &r in rates {
            let mut transcript = u.transcript.clone();
            if r != 1.0 {
                transcript.id = format!("{}-sp{r}", transcript.id);
            }
            out.push(SynthUtterance {
                transcript,
                features: perturb_features(&u.features, r)?,
            });
        }
    }
    Ok(out)
}

pub const FEATURE_MAGIC: &[u8; 4] = b"CSFT";

pub fn encode_features(features: &Tensor2) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + features.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for &v in features.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor2> {
    let bad = |d: &str| Error::format("feature file", d);
    if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing CSFT header"));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + t * f * 4 {
        return Err(bad("size does not match T x F"));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor2::from_vec(t, f, data)
}

pub fn write_features(path: &Path, features: &Tensor2) -> Result<()> {
    std::fs::write(path, encode_features(features)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Tensor2> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes).map_err(|e| match e {
        Error::Format { what, detail } => Error::format(what, format!("{}: {detail}", path.display())),
        other => other,
    })
}

/// `utt_id<TAB>path` lines; relative paths resolve against the manifest's
/// directory.
pub fn format_manifest(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (id, p) in entries {
        let _ = writeln!(out, "{id}\t{p}");
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (id, p) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("manifest", format!("line {}: expected utt_id<TAB>path", n + 1)))?;
        out.push((id.to_string(), base.join(p)));
    }
    Ok(out)
}
