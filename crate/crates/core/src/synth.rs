//! Synthetic expression profiles for demos and tests.

use exprmol_chem::{ecfp4, parse_smiles};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::CoreError;
use crate::profiles::{Profile, ProfileSet};
use crate::rng::{stream, SYNTH};

pub const LANDMARK_GENES: usize = 978;

pub fn gene_ids(genes: usize) -> Vec<String> {
    (1..=genes).map(|j| format!("G{j:04}")).collect()
}

/// Number of hidden expression programs behind [`fingerprint_profiles`].
pub const PROGRAMS: usize = 16;

/// One profile per molecule. ECFP4 bits drive [`PROGRAMS`] latent
/// activities through a fixed random map; the activities are spread over
/// the genes by a second random map and Gaussian noise is added. Similar
/// molecules therefore get similar profiles. Sample ids are `m0`, `m1`, ...
pub fn fingerprint_profiles(smiles: &[&str], genes: usize, noise: f64, seed: u64) -> Result<ProfileSet, CoreError> {
    let mut rng = stream(seed, SYNTH);
    let loadings: Vec<f64> = (0..PROGRAMS * genes).map(|_| rng.sample(StandardNormal)).collect();
    let mut drive: Option<(usize, Vec<f64>)> = None;
    let mut profiles = Vec::with_capacity(smiles.len());
    for (i, s) in smiles.iter().enumerate() {
        let fp = ecfp4(&parse_smiles(s)?);
        let (nbits, w) = drive.get_or_insert_with(|| {
            let nbits = fp.nbits();
            (nbits, (0..nbits * PROGRAMS).map(|_| rng.sample(StandardNormal)).collect())
        });
        let on: Vec<usize> = fp.ones().filter(|&b| b < *nbits).collect();
        let scale = 1.0 / (on.len().max(1) as f64).sqrt();
        let activity: Vec<f64> = (0..PROGRAMS)
            .map(|k| on.iter().map(|&b| w[b * PROGRAMS + k]).sum::<f64>() * scale)
            .collect();
        let values = (0..genes)
            .map(|j| {
                let signal: f64 = (0..PROGRAMS).map(|k| activity[k] * loadings[k * genes + j]).sum();
                signal + noise * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        profiles.push(Profile {
            sample_id: format!("m{i}"),
            values,
        });
    }
    Ok(ProfileSet {
        gene_ids: gene_ids(genes),
        profiles,
        stats: None,
    })
}

/// `sizes[k]` noisy copies of cluster center `k`; sample ids are
/// `c{k}_{i}`. Centers are independent standard normal vectors.
pub fn cluster_profiles(sizes: &[usize], genes: usize, noise: f64, seed: u64) -> ProfileSet {
    let mut rng = stream(seed, SYNTH);
    let centers: Vec<Vec<f64>> = sizes
        .iter()
        .map(|_| (0..genes).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut profiles = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let values = centers[k]
                .iter()
                .map(|c| c + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            profiles.push(Profile {
                sample_id: format!("c{k}_{i}"),
                values,
            });
        }
    }
    ProfileSet {
        gene_ids: gene_ids(genes),
        profiles,
        stats: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similar_molecules_get_closer_profiles() {
        let s = fingerprint_profiles(&["CCCCCCO", "CCCCCCCO", "c1ccc2ccccc2c1"], 64, 0.0, 1).unwrap();
        let d = |a: usize, b: usize| -> f64 {
            s.profiles[a]
                .values
                .iter()
                .zip(&s.profiles[b].values)
                .map(|(x, y)| (x - y).powi(2))
                .sum()
        };
        assert!(d(0, 1) < d(0, 2));
        assert_eq!(s.gene_ids[0], "G0001");
        assert_eq!(s, fingerprint_profiles(&["CCCCCCO", "CCCCCCCO", "c1ccc2ccccc2c1"], 64, 0.0, 1).unwrap());
    }

    #[test]
    fn clusters_are_separated() {
        let s = cluster_profiles(&[5, 5], 50, 0.3, 2);
        assert_eq!(s.len(), 10);
        assert_eq!(s.profiles[5].sample_id, "c1_0");
        let d = |a: usize, b: usize| -> f64 {
            s.profiles[a]
                .values
                .iter()
                .zip(&s.profiles[b].values)
                .map(|(x, y)| (x - y).powi(2))
                .sum()
        };
        assert!(d(0, 1) < d(0, 5));
    }
}
