//! Successive-cancellation decoding by exact tensor-network contraction.

pub mod engine;
pub mod erasure;
pub mod sc;

use serde::{Deserialize, Serialize};

use crate::circuit::{apply_circuit, CodeCircuit, Direction};
use crate::error::{Error, Result};
use crate::pauli::{LeafTensor, Pauli, PauliOp, ALL_PAULIS, KNOWN_X, KNOWN_Z};
use engine::{segs_from_cells, Cell, Engine};

pub use sc::{DecodeResult, Decision, GenieRecord, Schedule, ScDecoder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    Z,
}

impl Quadrature {
    pub fn mask(self) -> u8 {
        match self {
            Quadrature::X => KNOWN_X,
            Quadrature::Z => KNOWN_Z,
        }
    }

    pub fn of(self, p: Pauli) -> bool {
        match self {
            Quadrature::X => p.x(),
            Quadrature::Z => p.z(),
        }
    }
}

/// Leaves on every input wire plus the one bit being asked about.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafAssignment {
    pub leaves: Vec<LeafTensor>,
    pub query: usize,
    pub quad: Quadrature,
}

impl LeafAssignment {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.leaves.len() != n {
            return Err(Error::InvalidLeaf(format!("{} leaves for {n} wires", self.leaves.len())));
        }
        if self.query >= n {
            return Err(Error::InvalidQuery(format!("query wire {} out of range", self.query)));
        }
        Ok(())
    }
}

/// Convert per-wire (I, X, Y, Z) priors to packed-bit order.
pub(crate) fn priors_to_bits(priors: &[[f64; 4]]) -> Vec<[f64; 4]> {
    priors
        .iter()
        .map(|p| {
            let mut out = [0.0; 4];
            for q in ALL_PAULIS {
                out[q.bits() as usize] = p[q.label()];
            }
            out
        })
        .collect()
}

fn prior_for(priors: &[[f64; 4]], w: usize) -> &[f64; 4] {
    if priors.len() == 1 {
        &priors[0]
    } else {
        &priors[w]
    }
}

/// `(P(bit = 0), P(bit = 1))` for the queried bit, by windowed contraction.
///
/// Every leaf must be an indicator (`b_z`, `b_x`, their complements, uniform or
/// a point mass). `priors` holds one (I, X, Y, Z) vector per physical wire, or
/// a single shared one.
pub fn decision_marginal(c: &CodeCircuit, la: &LeafAssignment, priors: &[[f64; 4]]) -> Result<(f64, f64)> {
    let (p0, p1, _) = decision_marginal_traced(c, la, priors)?;
    Ok((p0, p1))
}

/// As [`decision_marginal`], also returning the widest window used.
pub fn decision_marginal_traced(
    c: &CodeCircuit,
    la: &LeafAssignment,
    priors: &[[f64; 4]],
) -> Result<(f64, f64, engine::WindowStats)> {
    la.validate(c.n)?;
    let mut eng = Engine::new(c, priors_to_bits(priors))?;
    let mut cells = Vec::with_capacity(c.n);
    for (w, leaf) in la.leaves.iter().enumerate() {
        let (known, value) = leaf
            .as_indicator()
            .ok_or_else(|| Error::InvalidLeaf(format!("wire {w}: {:?} is not an indicator", leaf.0)))?;
        let open = if w == la.query {
            let q = la.quad.mask();
            if known & q != 0 {
                return Err(Error::InvalidQuery(format!("leaf on wire {w} already fixes the queried bit")));
            }
            q
        } else {
            0
        };
        if known != 0 {
            eng.set_top(w, known, value);
        }
        cells.push(Cell::new(known, open));
    }
    let m = eng.root(&segs_from_cells(&cells))?;
    Ok((m[0], m[1], eng.stats()))
}

/// Reference marginal by summing over all 4^n de-encoded errors. Only for n ≤ 10.
pub fn brute_force_marginal(c: &CodeCircuit, la: &LeafAssignment, priors: &[[f64; 4]]) -> Result<(f64, f64)> {
    la.validate(c.n)?;
    if c.n > 10 {
        return Err(Error::InvalidConfig(format!("brute force needs n <= 10, got {}", c.n)));
    }
    if priors.len() != 1 && priors.len() != c.n {
        return Err(Error::InvalidConfig(format!("{} priors for {} wires", priors.len(), c.n)));
    }
    let n = c.n;
    let mut acc = [0.0f64; 2];
    let mut labels = vec![0usize; n];
    for code in 0..1usize << (2 * n) {
        let mut w = 1.0;
        for (i, l) in labels.iter_mut().enumerate() {
            *l = (code >> (2 * i)) & 3;
            w *= la.leaves[i].0[*l];
        }
        if w == 0.0 {
            continue;
        }
        let e = PauliOp::from_paulis(labels.iter().map(|&l| Pauli::from_label(l)).collect());
        let phys = apply_circuit(&e, c, Direction::Encode)?;
        for (j, p) in phys.paulis().iter().enumerate() {
            w *= prior_for(priors, j)[p.label()];
        }
        acc[la.quad.of(e.get(la.query)) as usize] += w;
    }
    let s = acc[0] + acc[1];
    if !(s > 0.0) {
        return Err(Error::InconsistentEvidence("leaves have zero probability".into()));
    }
    Ok((acc[0] / s, acc[1] / s))
}
