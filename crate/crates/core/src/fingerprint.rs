//! Circular (Morgan/ECFP-style) fingerprints and Tanimoto similarity.
//!
//! # Hash
//!
//! All atom codes come from one fixed 64-bit hash over a sequence of words,
//! with no per-process seeding:
//!
//! ```text
//! mix(z)   = z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!            z ^= z >> 27; z *= 0x94d049bb133111eb; z ^ (z >> 31)
//! hash(ws) = h = 0x243f6a8885a308d3 ^ (len(ws) * 0x9e3779b97f4a7c15)
//!            for w in ws: h = mix((h ^ w) + 0x9e3779b97f4a7c15)
//! ```
//!
//! (all arithmetic wrapping, modulo 2^64).
//!
//! Round 0 hashes `[element, heavy degree, hydrogen count, formal charge
//! (two's complement), aromatic, isotope or 0]`. Round `r` hashes the
//! previous code followed by the sorted `(bond tag, neighbour code)` pairs,
//! bond tags being 1/2/3/4 for single/double/triple/aromatic. An atom's code
//! at round `r > 0` is emitted only if its bond environment grew since
//! round `r - 1`. Each emitted code sets bit `code mod nbits`.
//!
//! # Serialized layout
//!
//! A fingerprint serializes as `nbits / 64` little-endian `u64` words; bit
//! `i` lives in word `i / 64` at position `i % 64`.

use thiserror::Error;

use crate::smiles::Molecule;

pub const DEFAULT_NBITS: usize = 2048;
pub const DEFAULT_RADIUS: usize = 3;

const HASH_SEED: u64 = 0x243f_6a88_85a3_08d3;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("fingerprint length {0} must be a power of two >= 64")]
    BadLength(usize),
    #[error("serialized fingerprint has {got} bytes, expected {expected}")]
    BadBytes { got: usize, expected: usize },
    #[error("no context fingerprints")]
    NoContexts,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The normative word hash used for atom codes.
pub fn stable_hash(words: &[u64]) -> u64 {
    let mut h = HASH_SEED ^ (words.len() as u64).wrapping_mul(GOLDEN);
    for &w in words {
        h = mix64((h ^ w).wrapping_add(GOLDEN));
    }
    h
}

/// Fixed-length bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint {
    words: Vec<u64>,
    nbits: usize,
}

impl Fingerprint {
    pub fn new(nbits: usize) -> Result<Self, FingerprintError> {
        if nbits < 64 || !nbits.is_power_of_two() {
            return Err(FingerprintError::BadLength(nbits));
        }
        Ok(Fingerprint {
            words: vec![0; nbits / 64],
            nbits,
        })
    }

    pub fn from_indices(nbits: usize, indices: &[usize]) -> Result<Self, FingerprintError> {
        let mut fp = Self::new(nbits)?;
        for &i in indices {
            fp.set(i % nbits);
        }
        Ok(fp)
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    pub fn union(&self, other: &Fingerprint) -> Result<Fingerprint, FingerprintError> {
        self.check_len(other)?;
        Ok(Fingerprint {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
            nbits: self.nbits,
        })
    }

    fn check_len(&self, other: &Fingerprint) -> Result<(), FingerprintError> {
        if self.nbits != other.nbits {
            return Err(FingerprintError::LengthMismatch(self.nbits, other.nbits));
        }
        Ok(())
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(nbits: usize, bytes: &[u8]) -> Result<Self, FingerprintError> {
        let mut fp = Self::new(nbits)?;
        if bytes.len() != nbits / 8 {
            return Err(FingerprintError::BadBytes {
                got: bytes.len(),
                expected: nbits / 8,
            });
        }
        for (w, chunk) in fp.words.iter_mut().zip(bytes.chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
        Ok(fp)
    }

    /// Bits as 0/1 reals, written into `out` (length `nbits`).
    pub fn write_dense<T: Copy>(&self, out: &mut [T], zero: T, one: T) {
        debug_assert_eq!(out.len(), self.nbits);
        out.fill(zero);
        for i in self.ones() {
            out[i] = one;
        }
    }
}

/// Round-0 atom invariants, hashed.
fn initial_codes(mol: &Molecule) -> Vec<u64> {
    mol.atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            stable_hash(&[
                a.element as u64,
                mol.degree(i) as u64,
                a.explicit_h as u64,
                a.formal_charge as i64 as u64,
                a.aromatic as u64,
                a.isotope.unwrap_or(0) as u64,
            ])
        })
        .collect()
}

/// All codes that survive environment deduplication, per round.
pub fn atom_codes(mol: &Molecule, radius: usize) -> Vec<u64> {
    let n = mol.atom_count();
    let nwords = mol.bonds().len().div_ceil(64).max(1);
    let mut codes = initial_codes(mol);
    let mut emitted = codes.clone();
    let mut env = vec![vec![0u64; nwords]; n];
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    let mut words: Vec<u64> = Vec::new();

    for _ in 0..radius {
        let mut next_codes = Vec::with_capacity(n);
        let mut next_env = env.clone();
        for i in 0..n {
            pairs.clear();
            for &(j, b) in mol.neighbors(i) {
                pairs.push((mol.bonds()[b].order.tag(), codes[j]));
                let target = &mut next_env[i];
                for (t, s) in target.iter_mut().zip(&env[j]) {
                    *t |= s;
                }
                target[b / 64] |= 1 << (b % 64);
            }
            pairs.sort_unstable();
            words.clear();
            words.push(codes[i]);
            words.extend(pairs.iter().flat_map(|&(t, c)| [t, c]));
            next_codes.push(stable_hash(&words));
        }
        for i in 0..n {
            if next_env[i] != env[i] {
                emitted.push(next_codes[i]);
            }
        }
        codes = next_codes;
        env = next_env;
    }
    emitted
}

/// Morgan fingerprint folded to `nbits` by `code mod nbits`.
pub fn morgan_fingerprint(
    mol: &Molecule,
    radius: usize,
    nbits: usize,
) -> Result<Fingerprint, FingerprintError> {
    let mut fp = Fingerprint::new(nbits)?;
    for code in atom_codes(mol, radius) {
        fp.set((code % nbits as u64) as usize);
    }
    Ok(fp)
}

/// `|a ∧ b| / |a ∨ b|`, with two empty fingerprints scoring 0.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    a.check_len(b)?;
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Highest similarity between the query and any context.
pub fn tanimoto_baseline_score<'a, I>(contexts: I, query: &Fingerprint) -> Result<f64, FingerprintError>
where
    I: IntoIterator<Item = &'a Fingerprint>,
{
    let mut best: Option<f64> = None;
    for c in contexts {
        let s = tanimoto(c, query)?;
        best = Some(best.map_or(s, |b: f64| b.max(s)));
    }
    best.ok_or(FingerprintError::NoContexts)
}
