use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;

const SPECIALS: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<unk>"];
const LITERALS: [&str; 3] = [":", "---", "\n"];

/// Lowercases and splits `text` into word tokens. Characters outside
/// `[a-z0-9']` separate words; `:`, a newline and an exact `---` run are kept
/// as tokens of their own.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(std::mem::take(word));
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            'a'..='z' | '0'..='9' | '\'' => word.push(c),
            ':' => {
                flush(&mut word, &mut out);
                out.push(":".into());
            }
            '\n' => {
                flush(&mut word, &mut out);
                out.push("\n".into());
            }
            '-' => {
                flush(&mut word, &mut out);
                let run = chars[i..].iter().take_while(|&&c| c == '-').count();
                if run == 3 {
                    out.push("---".into());
                }
                i += run;
                continue;
            }
            _ => flush(&mut word, &mut out),
        }
        i += 1;
    }
    flush(&mut word, &mut out);
    out
}

/// Token/id bijection. Specials occupy ids 0..4, followed by the prompt
/// literals and words, then the sorted corpus words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn build<'a>(captions: impl IntoIterator<Item = &'a str>) -> Result<Self, ModelError> {
        let mut words = BTreeSet::new();
        let mut any = false;
        for c in captions {
            any = true;
            words.extend(normalize_tokens(c));
        }
        if !any {
            return Err(ModelError::EmptyCorpus);
        }
        let mut tokens: Vec<String> = SPECIALS.iter().chain(&LITERALS).map(|s| s.to_string()).collect();
        for w in super::splice::PROMPT_PREFIX.iter().chain(&super::splice::PROMPT_SUFFIX) {
            if !tokens.iter().any(|t| t == w) {
                tokens.push(w.to_string());
            }
        }
        for w in words {
            if !tokens.contains(&w) {
                tokens.push(w);
            }
        }
        Ok(Self::from(tokens))
    }

    /// Checks the fixed special layout after deserialization.
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.tokens.len() >= SPECIALS.len()
            && SPECIALS.iter().enumerate().all(|(i, s)| self.tokens[i] == *s)
            && self.index.len() == self.tokens.len();
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig("vocabulary is not a valid special-prefixed bijection".into()))
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        normalize_tokens(text).iter().map(|t| self.id(t)).collect()
    }

    /// Space-joined tokens; `<bos>`, `<eos>` and `<pad>` are dropped.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| !matches!(i, BOS | EOS | PAD))
            .map(|&i| self.token(i).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
