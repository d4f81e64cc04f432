//! The signature-to-filter transform against frozen golden vectors.
//!
//! The vectors in tests/data/transform_golden.txt were produced once by an
//! independent reference implementation (tools/transform_oracle.py) and
//! must never be regenerated from this crate's own output.

use eegmark::filter::{dims_from_string, transform, HashSuite};
use eegmark::identity::{Signature, SCHEME_ED25519};

struct GoldenCase {
    sig: Vec<u8>,
    shape: Vec<usize>,
    block: (usize, usize),
    num_labels: usize,
    label: usize,
    row: usize,
    col: usize,
    bits_hex: String,
}

fn load_golden() -> Vec<GoldenCase> {
    let text = include_str!("data/transform_golden.txt");
    let mut cases = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(f.len(), 8, "golden line `{line}`");
        let block = dims_from_string(f[2]).unwrap();
        cases.push(GoldenCase {
            sig: hex::decode(f[0]).unwrap(),
            shape: dims_from_string(f[1]).unwrap(),
            block: (block[0], block[1]),
            num_labels: f[3].parse().unwrap(),
            label: f[4].parse().unwrap(),
            row: f[5].parse().unwrap(),
            col: f[6].parse().unwrap(),
            bits_hex: f[7].to_string(),
        });
    }
    assert!(cases.len() >= 8, "golden file should hold the full fixture set");
    cases
}

#[test]
fn transform_matches_independent_oracle() {
    let suite = HashSuite::default();
    for case in load_golden() {
        let sig = Signature::from_bytes(case.sig.clone(), SCHEME_ED25519);
        let filter = transform(
            &sig,
            &case.shape,
            case.num_labels,
            case.block,
            &suite,
            2000.0,
        )
        .unwrap();
        assert_eq!(filter.target_label(), case.label, "label for {case:?}");
        assert_eq!(filter.position(), (case.row, case.col), "position");
        assert_eq!(filter.bits().to_hex(), case.bits_hex, "bit pattern");
    }
}

impl std::fmt::Debug for GoldenCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "sig[0]={:02x} shape={:?} block={:?} labels={}",
            self.sig[0], self.shape, self.block, self.num_labels
        )
    }
}
