//! Cross-checks of the decoders against independent references.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use crate::channel::batch_rng;
use crate::circuit::CodeCircuit;
use crate::decoder::erasure::ErasureDecoder;
use crate::decoder::sc::steps;
use crate::decoder::{brute_force_marginal, decision_marginal, LeafAssignment, Schedule};
use crate::error::Result;
use crate::pauli::{LeafTensor, Pauli, KNOWN_X, KNOWN_Z};

/// Leaves of a decoder partway through `schedule`: bits decided before step
/// `t` are pinned to the values in `truth`, the step's bit is the query.
pub fn schedule_state(schedule: Schedule, t: usize, truth: &[Pauli]) -> LeafAssignment {
    let n = truth.len();
    let st = steps(schedule, n)[t];
    let leaves = (0..n)
        .map(|w| {
            let mut known = 0;
            if w >= st.xa {
                known |= KNOWN_X;
            }
            if w < st.zb {
                known |= KNOWN_Z;
            }
            LeafTensor::indicator(known, truth[w].bits())
        })
        .collect();
    LeafAssignment { leaves, query: st.wire, quad: st.quad }
}

/// A uniformly random step of `schedule` with uniformly random earlier values.
pub fn random_schedule_state<R: Rng>(rng: &mut R, schedule: Schedule, n: usize) -> LeafAssignment {
    let truth: Vec<Pauli> = (0..n).map(|_| Pauli::from_bits(rng.random_range(0..4))).collect();
    schedule_state(schedule, rng.random_range(0..2 * n), &truth)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OracleReport {
    pub checked: u64,
    /// States the brute force rejected as impossible; the engine must reject them too.
    pub impossible: u64,
    pub max_diff: f64,
    pub mismatches: u64,
}

impl OracleReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.mismatches == 0 && self.max_diff <= tol
    }
}

/// Compare [`decision_marginal`] with [`brute_force_marginal`] on `states`
/// random schedule states. Disagreement on feasibility counts as a mismatch.
pub fn oracle_check(c: &CodeCircuit, priors: &[[f64; 4]], schedule: Schedule, states: u64, seed: u64) -> Result<OracleReport> {
    let mut rng = batch_rng(seed, 0);
    let mut rep = OracleReport::default();
    for _ in 0..states {
        let la = random_schedule_state(&mut rng, schedule, c.n);
        rep.checked += 1;
        match (decision_marginal(c, &la, priors), brute_force_marginal(c, &la, priors)) {
            (Ok(a), Ok(b)) => {
                let d = (a.0 - b.0).abs().max((a.1 - b.1).abs());
                rep.max_diff = rep.max_diff.max(d);
            }
            (Err(_), Err(_)) => rep.impossible += 1,
            _ => rep.mismatches += 1,
        }
    }
    Ok(rep)
}

/// Exact genie error rates `(x, z)` on the erasure channel, summing over all
/// `2^n` erasure patterns with their probabilities.
pub fn erasure_genie_exhaustive(c: &CodeCircuit, eps: &BigRational) -> Result<(Vec<BigRational>, Vec<BigRational>)> {
    let n = c.n;
    let dec = ErasureDecoder::new(c, Schedule::Standard)?;
    // undetermined counts per wire, split by number of erased wires
    let mut cx = vec![vec![0u64; n + 1]; n];
    let mut cz = vec![vec![0u64; n + 1]; n];
    for pat in 0u64..1 << n {
        let erased: Vec<bool> = (0..n).map(|w| pat >> w & 1 == 1).collect();
        let k = pat.count_ones() as usize;
        let (ix, iz) = dec.genie(&erased)?;
        for w in 0..n {
            cx[w][k] += u64::from(ix[w] > 0.0);
            cz[w][k] += u64::from(iz[w] > 0.0);
        }
    }
    let keep = BigRational::one() - eps;
    let weight: Vec<BigRational> = (0..=n)
        .map(|k| num_traits::pow(eps.clone(), k) * num_traits::pow(keep.clone(), n - k))
        .collect();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let rate = |counts: &Vec<u64>| {
        let mut r = BigRational::zero();
        for (k, &m) in counts.iter().enumerate() {
            r += &weight[k] * BigRational::from_integer(BigInt::from(m));
        }
        r * &half
    };
    Ok((cx.iter().map(rate).collect(), cz.iter().map(rate).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_bmera, build_polar};
    use crate::polarization::bec_density_evolution_exact;

    #[test]
    fn small_oracle_runs() {
        let c = build_bmera(2).unwrap();
        let r = oracle_check(&c, &[[0.85, 0.05, 0.05, 0.05]], Schedule::Symmetric, 200, 1).unwrap();
        assert_eq!(r.checked, 200);
        assert!(r.passed(1e-9), "{r:?}");
    }

    #[test]
    fn exhaustive_erasure_equals_de_n4() {
        let c = build_polar(2).unwrap();
        let eps = BigRational::new(BigInt::from(1), BigInt::from(3));
        assert_eq!(erasure_genie_exhaustive(&c, &eps).unwrap(), bec_density_evolution_exact(2, &eps));
    }
}
