//! Encoding circuits for polar and branching-MERA codes.
//!
//! Scale `s` acts independently on `2^s` interleaved blocks; block `b` holds
//! wires `b + k * 2^s` for local index `k`. Each block gets an optional
//! disentangler sublayer followed by a tree sublayer, all CNOTs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitMatrix;
use crate::pauli::PauliOp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Polar,
    Bmera,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polar" => Ok(Family::Polar),
            "bmera" => Ok(Family::Bmera),
            _ => Err(Error::Parse(format!("unknown family {s:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Polar => "polar",
            Family::Bmera => "bmera",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    pub control: usize,
    pub target: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SublayerKind {
    Disentangler,
    Tree,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sublayer {
    pub scale: usize,
    pub kind: SublayerKind,
    pub gates: Vec<Gate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeCircuit {
    pub family: Family,
    pub n: usize,
    pub levels: usize,
    pub layers: Vec<Sublayer>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Encode,
    Decode,
}

/// Whether disentanglers are controlled from the higher local index of their pair.
pub const DISENTANGLER_CONTROL_HIGH: bool = false;

/// Tree pair of local index `k`: partner and whether `k` is the control.
pub fn tree_pair(k: usize) -> (usize, bool) {
    (k ^ 1, k & 1 == 0)
}

/// Disentangler pair of local index `k` in a block of `m` wires, if any.
pub fn disentangler_pair(k: usize, m: usize) -> Option<(usize, bool)> {
    if m < 4 || k == 0 || k + 1 >= m {
        return None;
    }
    // pairs are (2j+1, 2j+2)
    let (lo, hi) = if k & 1 == 1 { (k, k + 1) } else { (k - 1, k) };
    let high_is_control = DISENTANGLER_CONTROL_HIGH;
    if k == hi {
        Some((lo, high_is_control))
    } else {
        Some((hi, !high_is_control))
    }
}

pub fn build_polar(levels: usize) -> Result<CodeCircuit> {
    build(Family::Polar, levels)
}

pub fn build_bmera(levels: usize) -> Result<CodeCircuit> {
    build(Family::Bmera, levels)
}

pub fn build(family: Family, levels: usize) -> Result<CodeCircuit> {
    if levels == 0 || levels > 24 {
        return Err(Error::InvalidConfig(format!("levels must be in 1..=24, got {levels}")));
    }
    let n = 1usize << levels;
    let mut layers = Vec::new();
    for s in 0..levels {
        let m = n >> s;
        let blocks = 1usize << s;
        let wire = |b: usize, k: usize| b + (k << s);
        if family == Family::Bmera && m >= 4 {
            let mut gates = Vec::new();
            for b in 0..blocks {
                for j in 0..m / 2 - 1 {
                    let (lo, hi) = (wire(b, 2 * j + 1), wire(b, 2 * j + 2));
                    let (control, target) = if DISENTANGLER_CONTROL_HIGH { (hi, lo) } else { (lo, hi) };
                    gates.push(Gate { control, target });
                }
            }
            layers.push(Sublayer { scale: s, kind: SublayerKind::Disentangler, gates });
        }
        let mut gates = Vec::new();
        for b in 0..blocks {
            for j in 0..m / 2 {
                gates.push(Gate { control: wire(b, 2 * j), target: wire(b, 2 * j + 1) });
            }
        }
        layers.push(Sublayer { scale: s, kind: SublayerKind::Tree, gates });
    }
    let c = CodeCircuit { family, n, levels, layers };
    c.validate()?;
    Ok(c)
}

/// Drop every disentangler sublayer; the result is labelled as a polar circuit.
pub fn strip_disentanglers(c: &CodeCircuit) -> CodeCircuit {
    CodeCircuit {
        family: Family::Polar,
        n: c.n,
        levels: c.levels,
        layers: c.layers.iter().filter(|l| l.kind == SublayerKind::Tree).cloned().collect(),
    }
}

impl CodeCircuit {
    pub fn validate(&self) -> Result<()> {
        for layer in &self.layers {
            let mut used = vec![false; self.n];
            for g in &layer.gates {
                if g.control == g.target || g.control >= self.n || g.target >= self.n {
                    return Err(Error::InvalidGate(format!("{g:?} on {} wires", self.n)));
                }
                for w in [g.control, g.target] {
                    if std::mem::replace(&mut used[w], true) {
                        return Err(Error::InvalidGate(format!("wire {w} reused in one sublayer")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn gates(&self) -> impl DoubleEndedIterator<Item = &Gate> {
        self.layers.iter().flat_map(|l| l.gates.iter())
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(|l| l.gates.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: CodeCircuit = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}

/// Conjugate a Pauli through the circuit. `Decode` runs the gates in reverse.
pub fn apply_circuit(e: &PauliOp, c: &CodeCircuit, dir: Direction) -> Result<PauliOp> {
    if e.len() != c.n {
        return Err(Error::InvalidConfig(format!("operator on {} wires, circuit on {}", e.len(), c.n)));
    }
    let mut out = e.clone();
    match dir {
        Direction::Encode => {
            for g in c.gates() {
                out.cnot_conjugate(g.control, g.target)?;
            }
        }
        Direction::Decode => {
            for g in c.gates().rev() {
                out.cnot_conjugate(g.control, g.target)?;
            }
        }
    }
    Ok(out)
}

/// `(Mx, Mz)` with `x_out = Mx x_in` and `z_out = Mz z_in` in the encode direction.
pub fn gf2_matrices(c: &CodeCircuit) -> (BitMatrix, BitMatrix) {
    let mut mx = BitMatrix::identity(c.n);
    let mut mz = BitMatrix::identity(c.n);
    for g in c.gates() {
        mx.add_row(g.control, g.target);
        mz.add_row(g.target, g.control);
    }
    (mx, mz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;

    #[test]
    fn polar_l1_is_one_cnot() {
        let c = build_polar(1).unwrap();
        assert_eq!(c.gate_count(), 1);
        let g = c.gates().next().unwrap();
        assert_eq!((g.control, g.target), (0, 1));
        let (mx, mz) = gf2_matrices(&c);
        assert!(mx.get(1, 0) && !mx.get(0, 1));
        assert!(mz.get(0, 1) && !mz.get(1, 0));
    }

    #[test]
    fn gate_counts() {
        let p = build_polar(4).unwrap();
        assert_eq!(p.gate_count(), 4 * 8);
        let b = build_bmera(4).unwrap();
        // disentanglers: m/2 - 1 per block at scales with m >= 4
        let d = (16 / 2 - 1) + 2 * (8 / 2 - 1) + 4 * (4 / 2 - 1);
        assert_eq!(b.gate_count(), 4 * 8 + d);
    }

    #[test]
    fn pair_helpers_match_built_gates() {
        let c = build_bmera(3).unwrap();
        let d0 = &c.layers[0];
        assert_eq!(d0.kind, SublayerKind::Disentangler);
        for g in &d0.gates {
            assert_eq!(disentangler_pair(g.control, 8), Some((g.target, true)));
            assert_eq!(disentangler_pair(g.target, 8), Some((g.control, false)));
        }
        assert_eq!(disentangler_pair(0, 8), None);
        assert_eq!(disentangler_pair(7, 8), None);
        assert_eq!(disentangler_pair(1, 2), None);
        assert_eq!(tree_pair(4), (5, true));
    }

    #[test]
    fn encode_decode_inverse() {
        let c = build_bmera(3).unwrap();
        let e: PauliOp = "XIZYIIXZ".parse().unwrap();
        let enc = apply_circuit(&e, &c, Direction::Encode).unwrap();
        assert_eq!(apply_circuit(&enc, &c, Direction::Decode).unwrap(), e);
        assert!(apply_circuit(&PauliOp::identity(4), &c, Direction::Encode).is_err());
    }

    #[test]
    fn matrices_agree_with_conjugation() {
        let c = build_bmera(3).unwrap();
        let (mx, mz) = gf2_matrices(&c);
        let e = PauliOp::from_paulis(vec![Pauli::Y, Pauli::I, Pauli::X, Pauli::Z, Pauli::I, Pauli::Y, Pauli::I, Pauli::X]);
        let out = apply_circuit(&e, &c, Direction::Encode).unwrap();
        assert_eq!(out.x_bits(), mx.mul_vec(&e.x_bits()));
        assert_eq!(out.z_bits(), mz.mul_vec(&e.z_bits()));
    }

    #[test]
    fn json_roundtrip() {
        let c = build_bmera(2).unwrap();
        let back = CodeCircuit::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_levels() {
        assert!(build_polar(0).is_err());
    }
}
