//! Token dictionaries: printable ASCII runs harvested from seed files.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::MutationError;
use crate::mdp::Input;

pub const DEFAULT_MIN_TOKEN_LEN: usize = 4;
pub const DEFAULT_MAX_TOKENS: usize = 512;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenDictionary {
    tokens: Vec<Vec<u8>>,
}

fn is_printable(b: u8) -> bool {
    (0x20..=0x7e).contains(&b)
}

impl TokenDictionary {
    /// Builds a dictionary from explicit tokens, dropping duplicates while
    /// keeping first-occurrence order.
    pub fn from_tokens<I, T>(tokens: I) -> Result<Self, MutationError>
    where
        I: IntoIterator<Item = T>,
        T: Into<Vec<u8>>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for token in tokens {
            let token = token.into();
            if token.is_empty() {
                return Err(MutationError::Dictionary("empty token".into()));
            }
            if seen.insert(token.clone()) {
                out.push(token);
            }
        }
        Ok(Self { tokens: out })
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One token per line. Backslashes and any byte outside printable ASCII
    /// are escaped as `\\` and `\xHH`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for token in &self.tokens {
            for &b in token {
                match b {
                    b'\\' => out.push_str("\\\\"),
                    b if is_printable(b) => out.push(b as char),
                    b => {
                        let _ = write!(out, "\\x{b:02x}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MutationError> {
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            tokens.push(unescape(line).map_err(|msg| {
                MutationError::Dictionary(format!("line {}: {msg}", lineno + 1))
            })?);
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self, MutationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MutationError::Dictionary(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

fn unescape(line: &str) -> Result<Vec<u8>, String> {
    let bytes = line.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        match bytes.get(i + 1) {
            Some(b'\\') => {
                out.push(b'\\');
                i += 2;
            }
            Some(b'x') => {
                let hex = bytes
                    .get(i + 2..i + 4)
                    .and_then(|h| std::str::from_utf8(h).ok())
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| format!("bad \\x escape at column {}", i + 1))?;
                out.push(hex);
                i += 4;
            }
            _ => return Err(format!("dangling backslash at column {}", i + 1)),
        }
    }
    Ok(out)
}

/// Maximal runs of printable ASCII at least `min_len` bytes long, in order of
/// first occurrence across `seeds`, capped at `max_tokens`.
pub fn build_dictionary(
    seeds: &[Input],
    min_len: usize,
    max_tokens: usize,
) -> Result<TokenDictionary, MutationError> {
    if min_len == 0 {
        return Err(MutationError::Dictionary(
            "minimum token length must be at least 1".into(),
        ));
    }
    let mut seen = HashSet::new();
    let mut tokens = Vec::new();
    'seeds: for seed in seeds {
        for run in seed.as_bytes().split(|&b| !is_printable(b)) {
            if tokens.len() >= max_tokens {
                break 'seeds;
            }
            if run.len() >= min_len && seen.insert(run) {
                tokens.push(run.to_vec());
            }
        }
    }
    Ok(TokenDictionary { tokens })
}
