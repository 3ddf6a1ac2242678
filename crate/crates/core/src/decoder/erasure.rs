//! Exact successive cancellation on the erasure channel.
//!
//! Erased qubits carry a uniformly random Pauli and everything else is clean,
//! so each de-encoded bit is a GF(2) linear functional of the unknown erased
//! bits. The state of knowledge is the row-reduced span of what has been
//! learned so far: a queried bit is either determined or exactly a fair coin.

use super::sc::{steps, DecodeResult, Decision, Schedule};
use super::Quadrature;
use crate::circuit::{gf2_matrices, CodeCircuit};
use crate::error::{Error, Result};
use crate::gf2::{Basis, BitMatrix, Knowledge};
use crate::pauli::{Pauli, PauliOp};
use crate::polarization::Role;

/// Knowledge about one quadrature of the de-encoded error given an erasure pattern.
pub struct KnowledgeState<'a> {
    /// Rows of the de-encoding map for this quadrature.
    map: &'a BitMatrix,
    cols: Vec<usize>,
    basis: Basis,
}

impl<'a> KnowledgeState<'a> {
    fn new(map: &'a BitMatrix, erased: &[bool]) -> Self {
        let cols: Vec<usize> = (0..erased.len()).filter(|&w| erased[w]).collect();
        let basis = Basis::new(cols.len());
        KnowledgeState { map, cols, basis }
    }

    fn row(&self, w: usize) -> Vec<u64> {
        let mut r = vec![0u64; self.cols.len().div_ceil(64).max(1)];
        for (k, &c) in self.cols.iter().enumerate() {
            if self.map.get(w, c) {
                r[k / 64] |= 1 << (k % 64);
            }
        }
        r
    }

    /// What is known about de-encoded bit `w`.
    pub fn query(&self, w: usize) -> Knowledge {
        self.basis.query(&self.row(w))
    }

    /// Record that de-encoded bit `w` equals `value`.
    pub fn learn(&mut self, w: usize, value: bool) -> Result<()> {
        let r = self.row(w);
        self.basis.insert(&r, value)
    }
}

/// De-encoding maps of a circuit, shared across trials.
pub struct ErasureDecoder {
    n: usize,
    schedule: Schedule,
    /// x' = ax * x_phys
    ax: BitMatrix,
    /// z' = az * z_phys
    az: BitMatrix,
}

impl ErasureDecoder {
    pub fn new(c: &CodeCircuit, schedule: Schedule) -> Result<Self> {
        let (mx, _) = gf2_matrices(c);
        let ax = mx.inverse()?;
        // Mz = (Mx^-1)^T, so its inverse is Mx^T.
        let az = mx.transpose();
        Ok(ErasureDecoder { n: c.n, schedule, ax, az })
    }

    /// Genie indicators: 0 when determined, 1/2 when undetermined.
    pub fn genie(&self, erased: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(erased)?;
        let mut ks_x = KnowledgeState::new(&self.ax, erased);
        let mut ks_z = KnowledgeState::new(&self.az, erased);
        let mut ix = vec![0.0; self.n];
        let mut iz = vec![0.0; self.n];
        for st in steps(self.schedule, self.n) {
            let (ks, ind) = match st.quad {
                Quadrature::X => (&mut ks_x, &mut ix),
                Quadrature::Z => (&mut ks_z, &mut iz),
            };
            if ks.query(st.wire) == Knowledge::Undetermined {
                ind[st.wire] = 0.5;
                // Determinedness does not depend on the values, and zero is
                // always a consistent assignment.
                ks.learn(st.wire, false)?;
            }
        }
        Ok((ix, iz))
    }

    /// Honest decoding: syndrome bits on frozen quadratures, undetermined bits decided as 0.
    pub fn decode(&self, erased: &[bool], roles: &[Role], syndrome: &[Option<bool>]) -> Result<DecodeResult> {
        self.check(erased)?;
        if roles.len() != self.n || syndrome.len() != self.n {
            return Err(Error::InvalidConfig("roles/syndrome length mismatch".into()));
        }
        let mut ks_x = KnowledgeState::new(&self.ax, erased);
        let mut ks_z = KnowledgeState::new(&self.az, erased);
        let mut est = [vec![false; self.n], vec![false; self.n]];
        let mut decisions = Vec::new();
        for st in steps(self.schedule, self.n) {
            let (ks, qi) = match st.quad {
                Quadrature::X => (&mut ks_x, 0),
                Quadrature::Z => (&mut ks_z, 1),
            };
            let w = st.wire;
            let value = if roles[w].frozen_quadrature() == Some(st.quad) {
                let v = syndrome[w].ok_or_else(|| Error::InvalidConfig(format!("no syndrome bit for wire {w}")))?;
                // A contradiction means an earlier guess was wrong; the block
                // is lost either way, so keep the earlier constraints.
                let _ = ks.learn(w, v);
                v
            } else {
                let (p1, bit) = match ks.query(w) {
                    Knowledge::Determined(v) => (if v { 1.0 } else { 0.0 }, v),
                    Knowledge::Undetermined => {
                        ks.learn(w, false)?;
                        (0.5, false)
                    }
                };
                decisions.push(Decision { wire: w, quad: st.quad, p1, bit });
                bit
            };
            est[qi][w] = value;
        }
        let estimate = PauliOp::from_paulis((0..self.n).map(|w| Pauli::from_xz(est[0][w], est[1][w])).collect());
        Ok(DecodeResult { estimate, decisions })
    }

    fn check(&self, erased: &[bool]) -> Result<()> {
        if erased.len() != self.n {
            return Err(Error::InvalidConfig(format!("pattern of {} for {} wires", erased.len(), self.n)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{apply_circuit, build_bmera, build_polar, Direction};
    use crate::decoder::sc::extract_syndrome;

    #[test]
    fn nothing_erased_everything_determined() {
        let d = ErasureDecoder::new(&build_polar(3).unwrap(), Schedule::Standard).unwrap();
        let (ix, iz) = d.genie(&[false; 8]).unwrap();
        assert!(ix.iter().chain(&iz).all(|&v| v == 0.0));
    }

    #[test]
    fn single_cnot_rates() {
        // n=2: x'_1 = x_0 ^ x_1 decided first, x'_0 = x_0 next.
        let d = ErasureDecoder::new(&build_polar(1).unwrap(), Schedule::Standard).unwrap();
        assert_eq!(d.genie(&[true, false]).unwrap().0, vec![0.0, 0.5]);
        assert_eq!(d.genie(&[false, true]).unwrap().0, vec![0.0, 0.5]);
        assert_eq!(d.genie(&[true, true]).unwrap().0, vec![0.5, 0.5]);
        // z'_0 = z_0 ^ z_1 decided first.
        assert_eq!(d.genie(&[false, true]).unwrap().1, vec![0.5, 0.0]);
    }

    #[test]
    fn honest_decode_recovers_determined_bits() {
        let c = build_bmera(3).unwrap();
        let d = ErasureDecoder::new(&c, Schedule::Standard).unwrap();
        let erased = [false, true, false, false, false, false, true, false];
        let e: PauliOp = "IYIIIIXI".parse().unwrap();
        let truth = apply_circuit(&e, &c, Direction::Decode).unwrap();
        let roles = vec![Role::Freeze0, Role::Freezeplus, Role::Freeze0, Role::Data, Role::Freezeplus, Role::Freeze0, Role::Freezeplus, Role::Freeze0];
        let syn = extract_syndrome(&truth, &roles);
        let r = d.decode(&erased, &roles, &syn).unwrap();
        // Until the first guess, everything decided is forced and correct.
        for dcs in r.decisions.iter().take_while(|d| d.p1 != 0.5) {
            assert_eq!(dcs.bit, dcs.quad.of(truth.get(dcs.wire)));
        }
        assert!(r.decisions.iter().any(|d| d.p1 != 0.5));
    }
}
