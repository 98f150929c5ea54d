//! SMILES lexer.
//!
//! Maximal munch: a bracket expression is one token, `Cl` and `Br` are read
//! greedily, `%NN` is a single ring-closure token and every other accepted
//! character is a token of its own.

use crate::error::SmilesError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Atom,
    BracketAtom,
    Bond,
    RingClosure,
    BranchOpen,
    BranchClose,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset of the first character in the source string.
    pub offset: usize,
}

impl Token {
    /// Ring label for a ring-closure token (1-9 or 10-99 for `%NN`).
    pub fn ring_label(&self) -> Option<u8> {
        if self.kind != TokenKind::RingClosure {
            return None;
        }
        match self.text.strip_prefix('%') {
            Some(rest) => rest.parse().ok(),
            None => self.text.parse().ok(),
        }
    }
}

pub fn tokenize(smiles: &str) -> Result<Vec<Token>, SmilesError> {
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let c = bytes[i];
        let (kind, len) = match c {
            b'[' => {
                let close = bytes[i + 1..]
                    .iter()
                    .position(|&b| b == b']' || b == b'[')
                    .filter(|&p| bytes[i + 1 + p] == b']')
                    .ok_or_else(|| SmilesError::Lex {
                        offset: start,
                        reason: "unterminated bracket atom".into(),
                    })?;
                (TokenKind::BracketAtom, close + 2)
            }
            b'C' if bytes.get(i + 1) == Some(&b'l') => (TokenKind::Atom, 2),
            b'B' if bytes.get(i + 1) == Some(&b'r') => (TokenKind::Atom, 2),
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => (TokenKind::Atom, 1),
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => (TokenKind::Atom, 1),
            b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => (TokenKind::Bond, 1),
            b'0'..=b'9' => (TokenKind::RingClosure, 1),
            b'%' => {
                let digits = bytes.get(i + 1..i + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
                match digits {
                    Some(_) => (TokenKind::RingClosure, 3),
                    None => {
                        return Err(SmilesError::Lex {
                            offset: start,
                            reason: "'%' must be followed by two digits".into(),
                        })
                    }
                }
            }
            b'(' => (TokenKind::BranchOpen, 1),
            b')' => (TokenKind::BranchClose, 1),
            b'.' => (TokenKind::Dot, 1),
            _ => {
                // report the whole (possibly multi-byte) character
                let ch = smiles[start..].chars().next().unwrap_or('?');
                return Err(SmilesError::Lex {
                    offset: start,
                    reason: format!("illegal character {ch:?}"),
                });
            }
        };
        tokens.push(Token {
            kind,
            text: smiles[start..start + len].to_string(),
            offset: start,
        });
        i += len;
    }
    Ok(tokens)
}
