//! Cheminformatics for generated-molecule evaluation: a SMILES reader and
//! writer with valence validation, canonical SMILES, circular fingerprints,
//! drug-likeness (QED) and synthetic accessibility scores, and the
//! generated-set statistics (validity, uniqueness, novelty).

pub mod alerts;
pub mod canon;
pub mod corpus;
pub mod descriptors;
pub mod element;
pub mod error;
pub mod exec;
pub mod fingerprint;
pub mod mol;
pub mod parse;
pub mod qed;
pub mod rings;
pub mod sa;
pub mod stats;
pub mod token;
pub mod write;

pub use canon::{canonical_smiles, canonicalize};
pub use descriptors::{descriptors, Descriptors};
pub use element::Element;
pub use error::{ErrorKind, MetricsError, SmilesError};
pub use exec::Exec;
pub use fingerprint::{bulk_tanimoto, ecfp, ecfp4, tanimoto, Fingerprint};
pub use mol::{Atom, Bond, BondOrder, BondStereo, Chirality, MolGraph};
pub use parse::{parse, parse_smiles};
pub use qed::{qed, QedTables};
pub use sa::{sa_score, SaTables};
pub use stats::{corpus_stats, evaluate, select_candidate, CorpusStats, MetricsReport};
pub use token::{tokenize, Token, TokenKind};
pub use write::{write_ranked, write_smiles};
