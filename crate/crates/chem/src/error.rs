use thiserror::Error;

/// Failure to turn a SMILES string into a valid molecular graph.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("lex error at byte {offset}: {reason}")]
    Lex { offset: usize, reason: String },
    #[error("empty input")]
    Empty,
    #[error("syntax error at byte {offset}: {reason}")]
    Syntax { offset: usize, reason: String },
    #[error("ring closure {label} is never closed")]
    UnclosedRing { label: u8 },
    #[error("unmatched branch parenthesis at byte {offset}")]
    UnmatchedBranch { offset: usize },
    #[error("ring bond conflict at byte {offset}: {reason}")]
    RingBondConflict { offset: usize, reason: String },
    #[error("valence violation on atom {atom} ({element}): bond order sum {valence} exceeds allowed")]
    Valence {
        atom: usize,
        element: String,
        valence: u32,
    },
    #[error("aromaticity error on atom {atom}: {reason}")]
    Aromaticity { atom: usize, reason: String },
    #[error("unsupported SMILES feature at byte {offset}: {feature}")]
    Unsupported { offset: usize, feature: String },
}

/// Coarse classification of [`SmilesError`], used for reporting and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Lex,
    Empty,
    Syntax,
    UnclosedRing,
    UnmatchedBranch,
    RingBondConflict,
    Valence,
    Aromaticity,
    Unsupported,
}

impl SmilesError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SmilesError::Lex { .. } => ErrorKind::Lex,
            SmilesError::Empty => ErrorKind::Empty,
            SmilesError::Syntax { .. } => ErrorKind::Syntax,
            SmilesError::UnclosedRing { .. } => ErrorKind::UnclosedRing,
            SmilesError::UnmatchedBranch { .. } => ErrorKind::UnmatchedBranch,
            SmilesError::RingBondConflict { .. } => ErrorKind::RingBondConflict,
            SmilesError::Valence { .. } => ErrorKind::Valence,
            SmilesError::Aromaticity { .. } => ErrorKind::Aromaticity,
            SmilesError::Unsupported { .. } => ErrorKind::Unsupported,
        }
    }
}

impl std::str::FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "lex" => ErrorKind::Lex,
            "empty" => ErrorKind::Empty,
            "syntax" => ErrorKind::Syntax,
            "unclosed_ring" => ErrorKind::UnclosedRing,
            "unmatched_branch" => ErrorKind::UnmatchedBranch,
            "ring_bond_conflict" => ErrorKind::RingBondConflict,
            "valence" => ErrorKind::Valence,
            "aromaticity" => ErrorKind::Aromaticity,
            "unsupported" => ErrorKind::Unsupported,
            other => return Err(format!("unknown error kind '{other}'")),
        })
    }
}

/// Errors from the scoring layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("fingerprint width mismatch: {0} vs {1} bits")]
    WidthMismatch(usize, usize),
    #[error("fragment table is empty")]
    EmptyFragmentTable,
    #[error("{0}")]
    EmptyInput(&'static str),
    #[error("malformed parameter table: {0}")]
    BadTable(String),
}
