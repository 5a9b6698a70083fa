use crate::error::{Error, Result};

/// How text is cut into hashed units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenUnit {
    /// Whitespace-separated words.
    #[default]
    Word,
    /// Character trigrams of each word padded with `#` on both sides.
    CharTrigram,
}

impl std::str::FromStr for TokenUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(TokenUnit::Word),
            "trigram" | "char_trigram" => Ok(TokenUnit::CharTrigram),
            other => Err(Error::config("ngram", format!("unknown unit `{other}`"))),
        }
    }
}

impl std::fmt::Display for TokenUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TokenUnit::Word => "word",
            TokenUnit::CharTrigram => "trigram",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerConfig {
    /// Vocabulary size V; every id is `< hash_buckets`.
    pub hash_buckets: usize,
    pub max_len: usize,
    pub lowercase: bool,
    pub unit: TokenUnit,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            hash_buckets: 1 << 14,
            max_len: 32,
            lowercase: true,
            unit: TokenUnit::Word,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hash_buckets < 2 {
            return Err(Error::config("hash_buckets", "must be at least 2"));
        }
        if self.max_len == 0 {
            return Err(Error::config("max_len", "must be at least 1"));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashes `text` into at most `cfg.max_len` ids in `0..cfg.hash_buckets`.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<u32> {
    let lowered;
    let text = if cfg.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let bucket = |unit: &[u8]| (fnv1a(unit) % cfg.hash_buckets as u64) as u32;
    let mut ids = Vec::new();
    'words: for word in text.split_whitespace() {
        match cfg.unit {
            TokenUnit::Word => {
                ids.push(bucket(word.as_bytes()));
                if ids.len() == cfg.max_len {
                    break;
                }
            }
            TokenUnit::CharTrigram => {
                let chars: Vec<char> = std::iter::once('#')
                    .chain(word.chars())
                    .chain(std::iter::once('#'))
                    .collect();
                let mut buf = String::new();
                for w in chars.windows(3) {
                    buf.clear();
                    buf.extend(w);
                    ids.push(bucket(buf.as_bytes()));
                    if ids.len() == cfg.max_len {
                        break 'words;
                    }
                }
            }
        }
    }
    ids
}
