//! Phase-free Pauli algebra.
//!
//! Labels are ordered (I, X, Y, Z) everywhere a 4-vector appears. Internally a
//! single-qubit Pauli is also packed as `x | z << 1`, so I=0, X=1, Z=2, Y=3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

pub const ALL_PAULIS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

impl Pauli {
    /// Position in the (I, X, Y, Z) label order.
    pub fn label(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub fn from_label(l: usize) -> Pauli {
        ALL_PAULIS[l & 3]
    }

    pub fn x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn z(self) -> bool {
        matches!(self, Pauli::Y | Pauli::Z)
    }

    pub fn from_xz(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Packed `x | z << 1`.
    pub fn bits(self) -> u8 {
        self.x() as u8 | (self.z() as u8) << 1
    }

    pub fn from_bits(b: u8) -> Pauli {
        Pauli::from_xz(b & 1 != 0, b & 2 != 0)
    }

    pub fn compose(self, other: Pauli) -> Pauli {
        Pauli::from_bits(self.bits() ^ other.bits())
    }
}

/// Conjugate a two-qubit Pauli by CNOT with control `c` and target `t`.
///
/// X on the control spreads to the target; Z on the target spreads back to the control.
pub fn cnot_pair(c: Pauli, t: Pauli) -> (Pauli, Pauli) {
    let xt = t.x() ^ c.x();
    let zc = c.z() ^ t.z();
    (Pauli::from_xz(c.x(), zc), Pauli::from_xz(xt, t.z()))
}

/// An n-qubit Pauli operator without phase.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliOp {
    ops: Vec<Pauli>,
}

impl PauliOp {
    pub fn identity(n: usize) -> Self {
        PauliOp { ops: vec![Pauli::I; n] }
    }

    pub fn from_paulis(ops: Vec<Pauli>) -> Self {
        PauliOp { ops }
    }

    pub fn from_xz(x: &[bool], z: &[bool]) -> Self {
        assert_eq!(x.len(), z.len());
        PauliOp {
            ops: x.iter().zip(z).map(|(&a, &b)| Pauli::from_xz(a, b)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, w: usize) -> Pauli {
        self.ops[w]
    }

    pub fn set(&mut self, w: usize, p: Pauli) {
        self.ops[w] = p;
    }

    pub fn paulis(&self) -> &[Pauli] {
        &self.ops
    }

    pub fn x_bits(&self) -> Vec<bool> {
        self.ops.iter().map(|p| p.x()).collect()
    }

    pub fn z_bits(&self) -> Vec<bool> {
        self.ops.iter().map(|p| p.z()).collect()
    }

    pub fn weight(&self) -> usize {
        self.ops.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn compose(&self, other: &PauliOp) -> Result<PauliOp> {
        if self.len() != other.len() {
            return Err(Error::InvalidConfig(format!(
                "length mismatch {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(PauliOp {
            ops: self.ops.iter().zip(&other.ops).map(|(a, b)| a.compose(*b)).collect(),
        })
    }

    /// In-place conjugation by CNOT(c -> t).
    pub fn cnot_conjugate(&mut self, c: usize, t: usize) -> Result<()> {
        let n = self.len();
        if c == t || c >= n || t >= n {
            return Err(Error::InvalidGate(format!("cnot({c}, {t}) on {n} wires")));
        }
        let (a, b) = cnot_pair(self.ops[c], self.ops[t]);
        self.ops[c] = a;
        self.ops[t] = b;
        Ok(())
    }
}

impl std::fmt::Display for PauliOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in &self.ops {
            let c = match p {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PauliOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ops = s
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                _ => Err(Error::Parse(format!("bad pauli char {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PauliOp { ops })
    }
}

pub const KNOWN_X: u8 = 1;
pub const KNOWN_Z: u8 = 2;

/// Nonnegative weight on each single-qubit label, in (I, X, Y, Z) order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafTensor(pub [f64; 4]);

impl LeafTensor {
    /// Syndrome 0 in the z basis: x known to be 0.
    pub fn bz() -> Self {
        LeafTensor([1.0, 0.0, 0.0, 1.0])
    }

    pub fn bz_bar() -> Self {
        LeafTensor([0.0, 1.0, 1.0, 0.0])
    }

    /// z known to be 0.
    pub fn bx() -> Self {
        LeafTensor([1.0, 1.0, 0.0, 0.0])
    }

    pub fn bx_bar() -> Self {
        LeafTensor([0.0, 0.0, 1.0, 1.0])
    }

    pub fn uniform() -> Self {
        LeafTensor([1.0; 4])
    }

    pub fn point(p: Pauli) -> Self {
        let mut w = [0.0; 4];
        w[p.label()] = 1.0;
        LeafTensor(w)
    }

    /// Leaf pinning the x bit (`bz` for 0, `bz_bar` for 1).
    pub fn x_known(x: bool) -> Self {
        if x {
            Self::bz_bar()
        } else {
            Self::bz()
        }
    }

    /// Leaf pinning the z bit (`bx` for 0, `bx_bar` for 1).
    pub fn z_known(z: bool) -> Self {
        if z {
            Self::bx_bar()
        } else {
            Self::bx()
        }
    }

    /// Build an indicator leaf from a known-bit mask and packed values.
    pub fn indicator(known: u8, value: u8) -> Self {
        let mut w = [0.0; 4];
        for p in ALL_PAULIS {
            if p.bits() & known == value & known {
                w[p.label()] = 1.0;
            }
        }
        LeafTensor(w)
    }

    pub fn weight(&self, p: Pauli) -> f64 {
        self.0[p.label()]
    }

    /// If this leaf is a 0/1 indicator of "some bits equal fixed values", return
    /// `(known_mask, packed_values)`.
    pub fn as_indicator(&self) -> Option<(u8, u8)> {
        for known in 0..4u8 {
            for value in 0..4u8 {
                if value & !known != 0 {
                    continue;
                }
                if Self::indicator(known, value) == *self {
                    return Some((known, value));
                }
            }
        }
        None
    }
}

/// Joint distribution over the labels of a few wires.
///
/// `weights` has 4^w entries, wire-major: the first listed wire is the most
/// significant base-4 digit. Mass is `sum(weights) * exp(log_scale)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadDist {
    pub wires: Vec<usize>,
    pub weights: Vec<f64>,
    pub log_scale: f64,
}

const RENORM_FLOOR: f64 = 1e-30;

impl QuadDist {
    pub fn new(wires: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != 1usize << (2 * wires.len()) {
            return Err(Error::InvalidConfig(format!(
                "{} weights for {} wires",
                weights.len(),
                wires.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        Ok(QuadDist { wires, weights, log_scale: 0.0 })
    }

    pub fn single(wire: usize, leaf: &LeafTensor) -> Self {
        QuadDist { wires: vec![wire], weights: leaf.0.to_vec(), log_scale: 0.0 }
    }

    pub fn uniform(wires: Vec<usize>) -> Self {
        let len = 1usize << (2 * wires.len());
        QuadDist { wires, weights: vec![1.0; len], log_scale: 0.0 }
    }

    fn pos(&self, wire: usize) -> Result<usize> {
        self.wires
            .iter()
            .position(|&w| w == wire)
            .ok_or_else(|| Error::InvalidGate(format!("wire {wire} not in window")))
    }

    fn digit_shift(&self, pos: usize) -> usize {
        2 * (self.wires.len() - 1 - pos)
    }

    /// Label of wire at window position `pos` inside flat index `idx`.
    pub fn label_at(&self, idx: usize, pos: usize) -> usize {
        (idx >> self.digit_shift(pos)) & 3
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.log_scale.exp()
    }

    /// Push the distribution through CNOT(c -> t); both wires must be in the window.
    pub fn apply_cnot(&mut self, c: usize, t: usize) -> Result<()> {
        if c == t {
            return Err(Error::InvalidGate(format!("cnot({c}, {t})")));
        }
        let (pc, pt) = (self.pos(c)?, self.pos(t)?);
        let (sc, st) = (self.digit_shift(pc), self.digit_shift(pt));
        let mut out = vec![0.0; self.weights.len()];
        for (idx, &w) in self.weights.iter().enumerate() {
            let a = Pauli::from_label((idx >> sc) & 3);
            let b = Pauli::from_label((idx >> st) & 3);
            let (a2, b2) = cnot_pair(a, b);
            let j = idx & !(3 << sc) & !(3 << st) | a2.label() << sc | b2.label() << st;
            out[j] += w;
        }
        self.weights = out;
        Ok(())
    }

    /// Multiply by a leaf on one wire and sum that wire out. Returns the removed mass.
    pub fn condition(&mut self, wire: usize, leaf: &LeafTensor) -> Result<f64> {
        let before = self.mass();
        let p = self.pos(wire)?;
        let sh = self.digit_shift(p);
        let keep: Vec<usize> = self.wires.iter().copied().filter(|&w| w != wire).collect();
        let mut out = vec![0.0; 1usize << (2 * keep.len())];
        for (idx, &w) in self.weights.iter().enumerate() {
            let l = (idx >> sh) & 3;
            let lo = idx & ((1 << sh) - 1);
            let hi = idx >> (sh + 2);
            out[hi << sh | lo] += w * leaf.0[l];
        }
        self.wires = keep;
        self.weights = out;
        let after = self.mass();
        if after <= 0.0 {
            return Err(Error::InconsistentEvidence(format!("conditioning wire {wire}")));
        }
        self.renormalize();
        Ok(before - after)
    }

    /// Sum out a wire.
    pub fn marginalize(&mut self, wire: usize) -> Result<()> {
        self.condition(wire, &LeafTensor::uniform()).map(|_| ())
    }

    /// Tensor product of two windows on disjoint wires.
    pub fn product(&self, other: &QuadDist) -> Result<QuadDist> {
        if self.wires.iter().any(|w| other.wires.contains(w)) {
            return Err(Error::InvalidConfig("product of overlapping windows".into()));
        }
        let mut wires = self.wires.clone();
        wires.extend(&other.wires);
        let sh = 2 * other.wires.len();
        let mut weights = vec![0.0; 1usize << (2 * wires.len())];
        for (i, &a) in self.weights.iter().enumerate() {
            for (j, &b) in other.weights.iter().enumerate() {
                weights[i << sh | j] = a * b;
            }
        }
        let mut d = QuadDist { wires, weights, log_scale: self.log_scale + other.log_scale };
        d.renormalize();
        Ok(d)
    }

    /// Marginal of a single wire as a (I, X, Y, Z) vector, normalized.
    pub fn marginal(&self, wire: usize) -> Result<[f64; 4]> {
        let p = self.pos(wire)?;
        let mut m = [0.0; 4];
        for (idx, &w) in self.weights.iter().enumerate() {
            m[self.label_at(idx, p)] += w;
        }
        let s: f64 = m.iter().sum();
        if s <= 0.0 {
            return Err(Error::InconsistentEvidence("zero mass".into()));
        }
        Ok(m.map(|v| v / s))
    }

    fn renormalize(&mut self) {
        let s: f64 = self.weights.iter().sum();
        if s > 0.0 && s < RENORM_FLOOR {
            self.weights.iter_mut().for_each(|w| *w /= s);
            self.log_scale += s.ln();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_roundtrip() {
        for p in ALL_PAULIS {
            assert_eq!(Pauli::from_bits(p.bits()), p);
            assert_eq!(Pauli::from_label(p.label()), p);
        }
        assert_eq!(Pauli::X.compose(Pauli::Z), Pauli::Y);
    }

    #[test]
    fn worked_cnot_example() {
        assert_eq!(cnot_pair(Pauli::Z, Pauli::Y), (Pauli::I, Pauli::Y));
    }

    #[test]
    fn leaf_indicators() {
        assert_eq!(LeafTensor::bz().as_indicator(), Some((KNOWN_X, 0)));
        assert_eq!(LeafTensor::bz_bar().as_indicator(), Some((KNOWN_X, 1)));
        assert_eq!(LeafTensor::bx_bar().as_indicator(), Some((KNOWN_Z, 2)));
        assert_eq!(LeafTensor::uniform().as_indicator(), Some((0, 0)));
        assert_eq!(LeafTensor::point(Pauli::Y).as_indicator(), Some((3, 3)));
        assert_eq!(LeafTensor([0.5, 0.5, 0.0, 0.0]).as_indicator(), None);
    }

    #[test]
    fn bad_gate_rejected() {
        let mut p = PauliOp::identity(3);
        assert!(p.cnot_conjugate(1, 1).is_err());
        assert!(p.cnot_conjugate(0, 3).is_err());
    }

    #[test]
    fn window_cnot_and_condition() {
        // X on control with nothing on target spreads to XX.
        let mut d = QuadDist::single(0, &LeafTensor::point(Pauli::X))
            .product(&QuadDist::single(1, &LeafTensor::point(Pauli::I)))
            .unwrap();
        d.apply_cnot(0, 1).unwrap();
        assert_eq!(d.marginal(1).unwrap(), [0.0, 1.0, 0.0, 0.0]);
        let removed = d.condition(0, &LeafTensor::bx()).unwrap();
        assert_eq!(removed, 0.0);
        assert!(d.condition(1, &LeafTensor::bz()).is_err());
    }

    #[test]
    fn tiny_mass_rescaled() {
        let mut d = QuadDist::new(vec![3], vec![1e-40, 0.0, 0.0, 1e-40]).unwrap();
        d.marginalize(3).unwrap();
        assert_eq!(d.weights, vec![1.0]);
        let mut d = QuadDist::new(vec![3, 4], vec![1e-32; 16]).unwrap();
        d.condition(4, &LeafTensor::point(Pauli::I)).unwrap();
        assert!((d.mass() / 4e-32 - 1.0).abs() < 1e-12);
        assert!(d.log_scale < 0.0);
    }
}
