//! Memoryless noise models and error sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliOp, ALL_PAULIS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelModel {
    /// Single-qubit Pauli channel, probabilities in (I, X, Y, Z) order.
    Pauli { probs: [f64; 4] },
    /// Each qubit is erased with probability `eps`; an erased qubit suffers a
    /// uniformly random Pauli and its position is known.
    Erasure { eps: f64 },
}

const SUM_TOL: f64 = 1e-12;

impl ChannelModel {
    pub fn pauli(probs: [f64; 4]) -> Result<Self> {
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidConfig(format!("probabilities out of range: {probs:?}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidConfig(format!("probabilities sum to {s}")));
        }
        Ok(ChannelModel::Pauli { probs })
    }

    pub fn depolarizing(p: f64) -> Result<Self> {
        Self::pauli([1.0 - p, p / 3.0, p / 3.0, p / 3.0])
    }

    /// Depolarizing channel as `rho -> (1 - p) rho + p I/2`: each of X, Y, Z
    /// with probability `p/4`. In this form 9.92% is where the coherent
    /// information drops to 1/2.
    pub fn depolarizing_rate(p: f64) -> Result<Self> {
        Self::pauli([1.0 - 0.75 * p, p / 4.0, p / 4.0, p / 4.0])
    }

    pub fn independent_xz(px: f64, pz: f64) -> Result<Self> {
        Self::pauli([(1.0 - px) * (1.0 - pz), px * (1.0 - pz), px * pz, (1.0 - px) * pz])
    }

    pub fn erasure(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidConfig(format!("erasure rate {eps} out of range")));
        }
        Ok(ChannelModel::Erasure { eps })
    }

    pub fn is_erasure(&self) -> bool {
        matches!(self, ChannelModel::Erasure { .. })
    }

    /// Per-qubit Pauli marginal in (I, X, Y, Z) order. Erasure averages over
    /// the erasure flag.
    pub fn pauli_probs(&self) -> [f64; 4] {
        match *self {
            ChannelModel::Pauli { probs } => probs,
            ChannelModel::Erasure { eps } => {
                [1.0 - 0.75 * eps, eps / 4.0, eps / 4.0, eps / 4.0]
            }
        }
    }

    /// Same distribution indexed by packed bits `x | z << 1`.
    pub fn prior_bits(&self) -> [f64; 4] {
        let p = self.pauli_probs();
        let mut out = [0.0; 4];
        for q in ALL_PAULIS {
            out[q.bits() as usize] = p[q.label()];
        }
        out
    }

    pub fn sample_pauli<R: Rng>(&self, rng: &mut R, n: usize) -> PauliOp {
        match *self {
            ChannelModel::Pauli { probs } => {
                PauliOp::from_paulis((0..n).map(|_| draw(rng, &probs)).collect())
            }
            ChannelModel::Erasure { .. } => self.sample_erasure(rng, n).1,
        }
    }

    /// Erasure pattern plus the error; non-erased qubits are untouched.
    pub fn sample_erasure<R: Rng>(&self, rng: &mut R, n: usize) -> (Vec<bool>, PauliOp) {
        let eps = match *self {
            ChannelModel::Erasure { eps } => eps,
            ChannelModel::Pauli { .. } => 0.0,
        };
        let mut erased = Vec::with_capacity(n);
        let mut ops = Vec::with_capacity(n);
        for _ in 0..n {
            let e = rng.random::<f64>() < eps;
            erased.push(e);
            ops.push(if e { Pauli::from_label(rng.random_range(0..4)) } else { Pauli::I });
        }
        (erased, PauliOp::from_paulis(ops))
    }
}

fn draw<R: Rng>(rng: &mut R, probs: &[f64; 4]) -> Pauli {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Pauli::from_label(i);
        }
    }
    // rounding slack: fall back to the last label with mass
    Pauli::from_label(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

impl std::str::FromStr for ChannelModel {
    type Err = Error;

    /// `depol:p`, `xz:px,pz`, `pauli:pI,pX,pY,pZ` or `erasure:eps`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("channel {s:?}: expected kind:params")))?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|e| Error::Parse(format!("channel {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let want = |k: usize| {
            if nums.len() == k {
                Ok(())
            } else {
                Err(Error::Parse(format!("channel {s:?}: expected {k} parameters")))
            }
        };
        match kind {
            "depol" => {
                want(1)?;
                Self::depolarizing(nums[0])
            }
            "depolrate" => {
                want(1)?;
                Self::depolarizing_rate(nums[0])
            }
            "xz" => {
                want(2)?;
                Self::independent_xz(nums[0], nums[1])
            }
            "pauli" => {
                want(4)?;
                Self::pauli([nums[0], nums[1], nums[2], nums[3]])
            }
            "erasure" => {
                want(1)?;
                Self::erasure(nums[0])
            }
            _ => Err(Error::Parse(format!("unknown channel kind {kind:?}"))),
        }
    }
}

impl std::fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelModel::Pauli { probs } => {
                let [_, x, y, z] = *probs;
                if x == y && y == z {
                    write!(f, "depol:{}", 3.0 * x)
                } else {
                    write!(f, "pauli:{},{},{},{}", probs[0], x, y, z)
                }
            }
            ChannelModel::Erasure { eps } => write!(f, "erasure:{eps}"),
        }
    }
}

/// Generator for batch `stream` of a run seeded with `seed`.
pub fn batch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        let d: ChannelModel = "depol:0.0992".parse().unwrap();
        let p = d.pauli_probs();
        assert!((p[0] - 0.9008).abs() < 1e-12);
        assert!((p[1] - 0.0992 / 3.0).abs() < 1e-15);
        let xz: ChannelModel = "xz:0.1,0.2".parse().unwrap();
        assert!((xz.pauli_probs()[2] - 0.02).abs() < 1e-15);
        assert!("erasure:0.25".parse::<ChannelModel>().unwrap().is_erasure());
        assert!("depol".parse::<ChannelModel>().is_err());
        assert!("depol:1.5".parse::<ChannelModel>().is_err());
        assert!("pauli:0.5,0.5,0.5,0.5".parse::<ChannelModel>().is_err());
        assert!("bogus:0.1".parse::<ChannelModel>().is_err());
    }

    #[test]
    fn depolarizing_rate_hashing_point() {
        let c: ChannelModel = "depolrate:0.0992".parse().unwrap();
        let h: f64 = c.pauli_probs().iter().map(|&q| -q * q.log2()).sum();
        assert!((1.0 - h - 0.5).abs() < 2e-3, "{}", 1.0 - h);
        assert_eq!(c, ChannelModel::depolarizing(0.0744).unwrap());
    }

    #[test]
    fn prior_bits_reorders() {
        let c = ChannelModel::pauli([0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(c.prior_bits(), [0.4, 0.3, 0.1, 0.2]);
    }

    #[test]
    fn sampling_frequencies() {
        let c = ChannelModel::pauli([0.7, 0.1, 0.05, 0.15]).unwrap();
        let mut rng = batch_rng(7, 0);
        let e = c.sample_pauli(&mut rng, 200_000);
        let mut counts = [0usize; 4];
        for p in e.paulis() {
            counts[p.label()] += 1;
        }
        for (k, &want) in c.pauli_probs().iter().enumerate() {
            let got = counts[k] as f64 / 200_000.0;
            assert!((got - want).abs() < 0.005, "label {k}: {got} vs {want}");
        }
    }

    #[test]
    fn erasure_pattern_only_on_erased() {
        let c = ChannelModel::erasure(0.3).unwrap();
        let mut rng = batch_rng(1, 2);
        let (erased, e) = c.sample_erasure(&mut rng, 1000);
        for (w, &er) in erased.iter().enumerate() {
            if !er {
                assert_eq!(e.get(w), Pauli::I);
            }
        }
        let k = erased.iter().filter(|&&b| b).count();
        assert!((250..350).contains(&k));
    }

    #[test]
    fn streams_are_independent_and_repeatable() {
        let a: u64 = batch_rng(5, 0).random();
        let b: u64 = batch_rng(5, 1).random();
        let a2: u64 = batch_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
