//! CMU pronouncing dictionary parsing and grapheme-to-phoneme lookup.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// The 39 base phonemes of the CMU inventory (ARPAbet, stress digits removed).
pub const PHONEME_INVENTORY: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

const UNKNOWN_BASE: u8 = PHONEME_INVENTORY.len() as u8;
pub const UNKNOWN_SYMBOL: &str = "<unk>";
pub const PAD_SYMBOL: &str = "<pad>";

const FIXTURE: &str = include_str!("../data/cmudict-fixture.dict");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phoneme {
    base: u8,
    stress: Option<u8>,
}

impl Phoneme {
    /// Placeholder emitted when a word cannot be converted at all.
    pub const UNKNOWN: Phoneme = Phoneme {
        base: UNKNOWN_BASE,
        stress: None,
    };

    pub fn new(base: &str, stress: Option<u8>) -> Option<Self> {
        let idx = PHONEME_INVENTORY.iter().position(|b| *b == base)?;
        if matches!(stress, Some(s) if s > 2) {
            return None;
        }
        Some(Phoneme {
            base: idx as u8,
            stress,
        })
    }

    /// Parses an ARPAbet symbol such as `AY1` or `F`.
    pub fn parse(symbol: &str) -> Option<Self> {
        match symbol.as_bytes().last() {
            Some(d @ b'0'..=b'9') => Phoneme::new(&symbol[..symbol.len() - 1], Some(d - b'0')),
            Some(_) => Phoneme::new(symbol, None),
            None => None,
        }
    }

    pub fn base(&self) -> &'static str {
        PHONEME_INVENTORY
            .get(self.base as usize)
            .copied()
            .unwrap_or(UNKNOWN_SYMBOL)
    }

    pub fn stress(&self) -> Option<u8> {
        self.stress
    }

    pub fn is_unknown(&self) -> bool {
        self.base == UNKNOWN_BASE
    }

    pub fn symbol(&self) -> String {
        match self.stress {
            Some(s) => format!("{}{}", self.base(), s),
            None => self.base().to_string(),
        }
    }

    fn same_base(&self, other: &Phoneme) -> bool {
        self.base == other.base
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base())?;
        if let Some(s) = self.stress {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Pronunciation of one word. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhonemeSeq(Vec<Phoneme>);

impl PhonemeSeq {
    pub fn new(phonemes: Vec<Phoneme>) -> Result<Self> {
        if phonemes.is_empty() {
            return Err(Error::Argument("phoneme sequence must be non-empty".into()));
        }
        Ok(PhonemeSeq(phonemes))
    }

    /// Parses a whitespace separated list of ARPAbet symbols.
    pub fn parse(symbols: &str) -> Result<Self> {
        let phonemes = symbols
            .split_whitespace()
            .map(|s| Phoneme::parse(s).ok_or_else(|| Error::Argument(format!("unknown phoneme {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        PhonemeSeq::new(phonemes)
    }

    pub fn unknown() -> Self {
        PhonemeSeq(vec![Phoneme::UNKNOWN])
    }

    pub fn phonemes(&self) -> &[Phoneme] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> Vec<String> {
        self.0.iter().map(Phoneme::symbol).collect()
    }
}

impl fmt::Display for PhonemeSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Lowercase word -> pronunciations, primary first.
#[derive(Debug, Clone, Default)]
pub struct PronDict {
    entries: HashMap<String, Vec<PhonemeSeq>>,
}

impl PronDict {
    /// The trimmed dictionary bundled with the crate.
    pub fn fixture() -> Self {
        parse_cmu_dict(FIXTURE).expect("bundled dictionary fixture parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_cmu_dict_named(&text, &path.display().to_string())
    }

    pub fn get(&self, word: &str) -> Option<&[PhonemeSeq]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn parse_cmu_dict(text: &str) -> Result<PronDict> {
    parse_cmu_dict_named(text, "<cmudict>")
}

fn parse_cmu_dict_named(text: &str, source: &str) -> Result<PronDict> {
    let mut entries: HashMap<String, Vec<PhonemeSeq>> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with(";;;") {
            continue;
        }
        let mut fields = line.split_whitespace();
        let head = fields.next().unwrap_or_default();
        let word = strip_variant(head).to_lowercase();
        let mut phonemes = Vec::new();
        for sym in fields {
            let p = Phoneme::parse(sym).ok_or_else(|| {
                Error::parse(source, line_no, format!("unknown phoneme symbol {sym:?} in entry {head}"))
            })?;
            phonemes.push(p);
        }
        if phonemes.is_empty() {
            return Err(Error::parse(source, line_no, format!("entry {head} has no phonemes")));
        }
        entries.entry(word).or_default().push(PhonemeSeq(phonemes));
    }
    Ok(PronDict { entries })
}

/// `WORD(2)` -> `WORD`
fn strip_variant(head: &str) -> &str {
    if let Some(open) = head.rfind('(') {
        let inner = &head[open + 1..];
        if inner.len() > 1 && inner.ends_with(')') && inner[..inner.len() - 1].bytes().all(|b| b.is_ascii_digit()) {
            return &head[..open];
        }
    }
    head
}

/// Dictionary lookup with letter-name spell-out for out-of-vocabulary words.
pub fn g2p(word: &str, dict: &PronDict) -> PhonemeSeq {
    let word = word.to_lowercase();
    if let Some(prons) = dict.get(&word) {
        return prons[0].clone();
    }
    let mut spelled = Vec::new();
    let mut buf = [0u8; 4];
    for ch in word.chars().filter(|c| c.is_alphabetic()) {
        if let Some(prons) = dict.get(ch.encode_utf8(&mut buf)) {
            spelled.extend_from_slice(prons[0].phonemes());
        }
    }
    if spelled.is_empty() {
        PhonemeSeq::unknown()
    } else {
        PhonemeSeq(spelled)
    }
}

/// Unit-cost Levenshtein distance over phoneme symbols.
pub fn phoneme_edit_distance(a: &PhonemeSeq, b: &PhonemeSeq, ignore_stress: bool) -> usize {
    let eq = |x: &Phoneme, y: &Phoneme| {
        if ignore_stress {
            x.same_base(y)
        } else {
            x == y
        }
    };
    let (a, b) = (a.phonemes(), b.phonemes());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, pa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, pb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(!eq(pa, pb));
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Integer ids for phoneme embedding lookup.
///
/// Id 0 is padding, id 1 is unknown; every base symbol with and without a
/// stress digit follows in inventory order.
#[derive(Debug, Clone)]
pub struct PhonemeVocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeVocab {
    pub const PAD: usize = 0;
    pub const UNKNOWN: usize = 1;

    pub fn cmu() -> Self {
        let mut symbols = vec![PAD_SYMBOL.to_string(), UNKNOWN_SYMBOL.to_string()];
        for base in PHONEME_INVENTORY {
            symbols.push(base.to_string());
            for s in 0..=2 {
                symbols.push(format!("{base}{s}"));
            }
        }
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        PhonemeVocab { symbols, index }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, p: &Phoneme) -> usize {
        if p.is_unknown() {
            return Self::UNKNOWN;
        }
        self.index.get(&p.symbol()).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn ids(&self, seq: &PhonemeSeq) -> Vec<usize> {
        seq.phonemes().iter().map(|p| self.id(p)).collect()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }
}
