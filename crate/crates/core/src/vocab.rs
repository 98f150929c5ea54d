//! SMILES token vocabulary with reserved special markers.

use std::collections::{BTreeSet, HashMap};

use exprmol_chem::tokenize;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

pub const SOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: [&str; 4] = ["<SOS>", "<EOS>", "<PAD>", "<UNK>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = CoreError;

    fn try_from(tokens: Vec<String>) -> Result<Self, CoreError> {
        Vocab::from_tokens(tokens)
    }
}

impl Vocab {
    /// Specials first, then every distinct corpus token in sorted order.
    pub fn from_corpus<'a>(smiles: impl IntoIterator<Item = &'a str>) -> Result<Self, CoreError> {
        let mut seen = BTreeSet::new();
        for s in smiles {
            for t in tokenize(s)? {
                seen.insert(t.text);
            }
        }
        let tokens = SPECIALS.iter().map(|s| s.to_string()).chain(seen).collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CoreError> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(a, b)| a != b) {
            return Err(CoreError::Data(format!("vocabulary must start with {SPECIALS:?}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CoreError::Data(format!("token '{t}' listed twice")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `<SOS> tokens… <EOS>`. Unknown tokens map to `<UNK>` only when
    /// `allow_unk` is set.
    pub fn encode(&self, smiles: &str, allow_unk: bool) -> Result<Vec<usize>, CoreError> {
        let mut ids = vec![SOS];
        for t in tokenize(smiles)? {
            match self.id(&t.text) {
                Some(i) if i >= SPECIALS.len() => ids.push(i),
                _ if allow_unk => ids.push(UNK),
                _ => return Err(CoreError::UnknownToken(t.text)),
            }
        }
        ids.push(EOS);
        Ok(ids)
    }

    /// Concatenated lexemes; special markers are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i >= SPECIALS.len())
            .map(|&i| self.tokens[i].as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_encode_decode() {
        let v = Vocab::from_corpus(["CCO", "c1ccccc1Cl", "[C@@H](N)O"]).unwrap();
        assert_eq!(&v.tokens()[..4], &SPECIALS);
        for t in v.tokens() {
            assert_eq!(v.token(v.id(t).unwrap()), t);
        }
        let ids = v.encode("OCCl", false).unwrap();
        assert_eq!(ids.first(), Some(&SOS));
        assert_eq!(ids.last(), Some(&EOS));
        assert_eq!(v.decode(&ids), "OCCl");
        assert!(matches!(v.encode("CBr", false), Err(CoreError::UnknownToken(t)) if t == "Br"));
        assert_eq!(v.encode("CBr", true).unwrap(), vec![SOS, v.id("C").unwrap(), UNK, EOS]);
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let v = Vocab::from_corpus(["CN"]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"["<SOS>","<EOS>","<PAD>","<UNK>","C","N"]"#);
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocab>(r#"["C"]"#).is_err());
        assert!(Vocab::from_tokens(SPECIALS.iter().map(|s| s.to_string()).chain(["C".into(), "C".into()]).collect()).is_err());
    }
}
