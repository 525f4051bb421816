//! Writes the synthetic separable fixture used by the end-to-end tests.
//!
//! Sixty peptides of length 6 to 10 are drawn over twelve background
//! monomers with mostly private fingerprint features. Half of them carry a
//! three-monomer motif built from monomers that never occur in the
//! background, placed at the start of the sequence; exactly those are
//! permeable. Two thirds of the impermeable peptides open with a one- or
//! two-monomer prefix of the motif as a decoy.
//!
//! ```text
//! cargo run -p pepgak --example make_fixture -- crates/core/tests/data/separable.jsonl
//! ```

use std::collections::BTreeMap;

use pepgak::repr::{write_dataset, Dataset, MonomerRecord, PeptideRecord, SparseCountVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240611;
const N_PEPTIDES: usize = 60;
const N_BACKGROUND: usize = 12;
const MOTIF: [&str; 3] = ["M1", "M2", "M3"];

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/data/separable.jsonl".to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut monomers = Vec::new();
    for b in 0..N_BACKGROUND {
        // four private features plus three from a small shared pool
        let base = 100 * (b as u64 + 1);
        let mut pool: Vec<u64> = (0..6).collect();
        pool.shuffle(&mut rng);
        let fp = SparseCountVector::from_counts(
            (base..base + 4)
                .map(|f| (f, rng.gen_range(1..=3)))
                .chain(pool[..3].iter().map(|&f| (f, 1))),
        );
        monomers.push(MonomerRecord {
            id: format!("B{b}"),
            fingerprint: fp,
        });
    }
    for (k, m) in MOTIF.iter().enumerate() {
        let base = 5000 + 10 * k as u64;
        monomers.push(MonomerRecord {
            id: m.to_string(),
            fingerprint: SparseCountVector::from_counts(
                (base..base + 6).map(|f| (f, 2)).chain([(k as u64, 1), (k as u64 + 3, 1)]),
            ),
        });
    }
    let fp_of: BTreeMap<String, SparseCountVector> = monomers
        .iter()
        .map(|m| (m.id.clone(), m.fingerprint.clone()))
        .collect();

    let mut peptides = Vec::new();
    for i in 0..N_PEPTIDES {
        let positive = i % 2 == 0;
        let len = rng.gen_range(6..=10);
        let mut seq: Vec<String> = (0..len)
            .map(|_| format!("B{}", rng.gen_range(0..N_BACKGROUND)))
            .collect();
        // positives open with the full motif; two thirds of the negatives
        // open with a truncated decoy of it
        let prefix = if positive {
            MOTIF.len()
        } else {
            (i / 2) % 3
        };
        for (k, m) in MOTIF.iter().take(prefix).enumerate() {
            seq[k] = m.to_string();
        }
        let perm = if positive {
            rng.gen_range(-5.5..-4.5)
        } else {
            rng.gen_range(-8.0..-6.5)
        };
        let mut mol: BTreeMap<u64, u32> = BTreeMap::new();
        for m in &seq {
            for &(f, c) in fp_of[m].entries() {
                *mol.entry(f).or_default() += c;
            }
        }
        let scaffold = {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for m in seq.iter().filter(|m| !MOTIF.contains(&m.as_str())) {
                *counts.entry(m).or_default() += 1;
            }
            let top = counts.iter().max_by_key(|(m, c)| (**c, std::cmp::Reverse(**m))).unwrap();
            format!("S-{}", top.0)
        };
        peptides.push(PeptideRecord {
            id: format!("P{i:02}"),
            monomers: seq,
            permeability: (perm * 1000.0_f64).round() / 1000.0,
            molecule_fingerprint: Some(SparseCountVector::from_counts(mol)),
            group_id: format!("G{:02}", i / 3),
            scaffold_id: Some(scaffold),
            force_train: false,
        });
    }
    let ds = Dataset::new(monomers, peptides).expect("fixture is valid");
    let f = std::fs::File::create(&out).expect("create output");
    write_dataset(&ds, std::io::BufWriter::new(f)).expect("write fixture");
    eprintln!("wrote {} peptides to {out}", ds.len());
}
