//! Quantitative estimate of drug-likeness.
//!
//! Each descriptor is mapped through an asymmetric double sigmoid
//! desirability curve and the results are combined as a weighted geometric
//! mean. Curve parameters and weights live in `data/qed_ads.tsv`.

use crate::descriptors::{descriptors, Descriptors};
use crate::error::MetricsError;
use crate::mol::MolGraph;

const BUNDLED: &str = include_str!("../data/qed_ads.tsv");
const FLOOR: f64 = 1e-6;

pub const QED_PROPERTIES: [&str; 8] = ["MW", "ALOGP", "HBA", "HBD", "PSA", "ROTB", "AROM", "ALERTS"];

/// Parameters of one desirability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ads {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub dmax: f64,
}

impl Ads {
    pub fn desirability(&self, x: f64) -> f64 {
        let rise = 1.0 + (-(x - self.c + self.d / 2.0) / self.e).exp();
        let fall = 1.0 - 1.0 / (1.0 + (-(x - self.c - self.d / 2.0) / self.f).exp());
        (self.a + self.b / rise * fall) / self.dmax
    }
}

/// Desirability curves and weights in the order of [`QED_PROPERTIES`].
#[derive(Debug, Clone, PartialEq)]
pub struct QedTables {
    pub curves: [Ads; 8],
    pub weights: [f64; 8],
}

impl QedTables {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled QED table is well formed")
    }

    /// Reads a tab-separated table: property name, A..F, DMAX, weight.
    /// Lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let bad = |m: String| MetricsError::BadTable(m);
        let mut curves: [Option<Ads>; 8] = [None; 8];
        let mut weights = [0.0; 8];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 9 {
                return Err(bad(format!("expected 9 columns, got {}: {line}", cols.len())));
            }
            let idx = QED_PROPERTIES
                .iter()
                .position(|p| *p == cols[0])
                .ok_or_else(|| bad(format!("unknown property {}", cols[0])))?;
            if curves[idx].is_some() {
                return Err(bad(format!("duplicate property {}", cols[0])));
            }
            let v: Vec<f64> = cols[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| bad(format!("{c}: {e}"))))
                .collect::<Result<_, _>>()?;
            if v[7] <= 0.0 {
                return Err(bad(format!("weight for {} must be positive", cols[0])));
            }
            curves[idx] = Some(Ads {
                a: v[0],
                b: v[1],
                c: v[2],
                d: v[3],
                e: v[4],
                f: v[5],
                dmax: v[6],
            });
            weights[idx] = v[7];
        }
        let mut out = [Ads { a: 0.0, b: 0.0, c: 0.0, d: 0.0, e: 1.0, f: 1.0, dmax: 1.0 }; 8];
        for (i, c) in curves.iter().enumerate() {
            out[i] = c.ok_or_else(|| bad(format!("missing property {}", QED_PROPERTIES[i])))?;
        }
        Ok(QedTables { curves: out, weights })
    }
}

/// Score from precomputed descriptor values.
pub fn qed_from_descriptors(d: &Descriptors, tables: &QedTables) -> f64 {
    let values = d.as_array();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..8 {
        let di = tables.curves[i].desirability(values[i]).max(FLOOR);
        num += tables.weights[i] * di.ln();
        den += tables.weights[i];
    }
    (num / den).exp().clamp(0.0, 1.0)
}

pub fn qed(g: &MolGraph, tables: &QedTables) -> f64 {
    qed_from_descriptors(&descriptors(g), tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_smiles;
    use proptest::prelude::*;

    // Independent restatement of the published curves and mean weights.
    fn oracle(props: [f64; 8]) -> f64 {
        const P: [[f64; 7]; 8] = [
            [2.817065973, 392.5754953, 290.7489764, 2.419764353, 49.22325677, 65.37051707, 104.9805561],
            [3.172690585, 137.8624751, 2.534937431, 4.581497897, 0.822739154, 0.576295591, 131.3186604],
            [2.948620388, 160.4605972, 3.615294657, 4.435986202, 0.290141953, 1.300669958, 148.7763046],
            [1.618662227, 1010.051101, 0.985094388, 0.000000001, 0.713820843, 0.920922555, 258.1632616],
            [1.876861559, 125.2232657, 62.90773554, 87.83366614, 12.01999824, 28.51324732, 104.5686167],
            [0.010000000, 272.4121427, 2.558379970, 1.565547684, 1.271567166, 2.758063707, 105.4420403],
            [3.217788970, 957.7374108, 2.274627939, 0.000000001, 1.317690384, 0.375760881, 312.3372610],
            [0.010000000, 1199.094025, -0.09002883, 0.000000001, 0.185904477, 0.875193782, 417.7253140],
        ];
        const W: [f64; 8] = [0.66, 0.46, 0.05, 0.61, 0.06, 0.65, 0.48, 0.95];
        let mut acc = 0.0;
        for i in 0..8 {
            let [a, b, c, d, e, f, dmax] = P[i];
            let x = props[i];
            let y = a + b / (1.0 + f64::exp(-1.0 * (x - c + d / 2.0) / e))
                * (1.0 - 1.0 / (1.0 + f64::exp(-1.0 * (x - c - d / 2.0) / f)));
            acc += W[i] * f64::max(y / dmax, 1e-6).ln();
        }
        (acc / W.iter().sum::<f64>()).exp()
    }

    fn desc(p: [f64; 8]) -> Descriptors {
        Descriptors {
            mw: p[0],
            alogp: p[1],
            hba: p[2] as u32,
            hbd: p[3] as u32,
            psa: p[4],
            rotb: p[5] as u32,
            arom: p[6] as u32,
            alerts: p[7] as u32,
        }
    }

    #[test]
    fn bundled_table_has_eight_positive_weights() {
        let t = QedTables::bundled();
        assert!(t.weights.iter().all(|&w| w > 0.0));
        assert!((t.weights.iter().sum::<f64>() - 3.92).abs() < 1e-12);
    }

    #[test]
    fn ibuprofen_against_oracle() {
        // hand-derived: C13H18O2, one carboxylic acid, one benzene ring
        let p = [206.285, 3.0732, 2.0, 1.0, 37.3, 4.0, 1.0, 0.0];
        let expected = oracle(p);
        assert!((qed_from_descriptors(&desc(p), &QedTables::bundled()) - expected).abs() < 1e-12);
        let g = parse_smiles("CC(C)Cc1ccc(cc1)C(C)C(=O)O").unwrap();
        let got = qed(&g, &QedTables::bundled());
        assert!((got - expected).abs() < 0.02, "{got} vs {expected}");
    }

    #[test]
    fn scores_real_molecules_in_range() {
        let t = QedTables::bundled();
        for s in ["CC(=O)Oc1ccccc1C(=O)O", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "C", "CCCCCCCCCCCCCCCCCCCC"] {
            let q = qed(&parse_smiles(s).unwrap(), &t);
            assert!((0.0..=1.0).contains(&q), "{s}: {q}");
        }
        let ibuprofen = qed(&parse_smiles("CC(C)Cc1ccc(cc1)C(C)C(=O)O").unwrap(), &t);
        let methane = qed(&parse_smiles("C").unwrap(), &t);
        assert!(ibuprofen > methane);
    }

    #[test]
    fn table_errors() {
        assert!(matches!(QedTables::parse(""), Err(MetricsError::BadTable(_))));
        let dup = format!("{BUNDLED}\nMW\t1\t1\t1\t1\t1\t1\t1\t1\n");
        assert!(QedTables::parse(&dup).is_err());
        let neg = BUNDLED.replace("\t0.66", "\t-0.66");
        assert!(QedTables::parse(&neg).is_err());
    }

    proptest! {
        #[test]
        fn matches_oracle_everywhere(
            mw in 0.0f64..900.0, logp in -5.0f64..10.0, hba in 0u32..15, hbd in 0u32..10,
            psa in 0.0f64..250.0, rotb in 0u32..20, arom in 0u32..6, alerts in 0u32..5,
        ) {
            let p = [mw, logp, hba as f64, hbd as f64, psa, rotb as f64, arom as f64, alerts as f64];
            let got = qed_from_descriptors(&desc(p), &QedTables::bundled());
            prop_assert!((got - oracle(p)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&got));
        }
    }
}
