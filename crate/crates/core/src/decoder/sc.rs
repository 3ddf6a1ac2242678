//! Standard and symmetric successive-cancellation schedules.

use serde::{Deserialize, Serialize};

use super::engine::{Cell, Engine, Segs, WindowStats};
use super::{priors_to_bits, Quadrature};
use crate::channel::ChannelModel;
use crate::circuit::CodeCircuit;
use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliOp, KNOWN_X, KNOWN_Z};
use crate::polarization::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// All x bits from the last wire down, then all z bits from wire 0 up.
    Standard,
    /// x at wire n-1-t and z at wire t, alternating.
    Symmetric,
}

impl std::str::FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Schedule::Standard),
            "symmetric" => Ok(Schedule::Symmetric),
            _ => Err(Error::Parse(format!("unknown schedule {s:?}"))),
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Schedule::Standard => "standard",
            Schedule::Symmetric => "symmetric",
        })
    }
}

/// Visit order of `(wire, quadrature)` steps. `xa`/`zb` describe what is known
/// before the step: x on wires `>= xa`, z on wires `< zb`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub wire: usize,
    pub quad: Quadrature,
    pub xa: usize,
    pub zb: usize,
}

pub fn steps(schedule: Schedule, n: usize) -> Vec<Step> {
    let mut out = Vec::with_capacity(2 * n);
    match schedule {
        Schedule::Standard => {
            for i in (0..n).rev() {
                out.push(Step { wire: i, quad: Quadrature::X, xa: i + 1, zb: 0 });
            }
            for j in 0..n {
                out.push(Step { wire: j, quad: Quadrature::Z, xa: 0, zb: j });
            }
        }
        Schedule::Symmetric => {
            for t in 0..n {
                let i = n - 1 - t;
                out.push(Step { wire: i, quad: Quadrature::X, xa: i + 1, zb: t });
                out.push(Step { wire: t, quad: Quadrature::Z, xa: i, zb: t });
            }
        }
    }
    out
}

fn step_segs(n: usize, st: &Step) -> Segs {
    let mut pts = [0, st.xa, st.zb, st.wire, st.wire + 1];
    pts.sort_unstable();
    let mut segs = Segs::new();
    for &p in pts.iter() {
        if p >= n {
            continue;
        }
        let mut known = 0;
        if p >= st.xa {
            known |= KNOWN_X;
        }
        if p < st.zb {
            known |= KNOWN_Z;
        }
        let open = if p == st.wire { st.quad.mask() } else { 0 };
        let c = Cell::new(known & !open, open);
        if segs.last().map(|l: &(u32, Cell)| l.1) != Some(c) {
            segs.push((p as u32, c));
        }
    }
    segs
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub wire: usize,
    pub quad: Quadrature,
    /// Posterior probability that the bit is 1.
    pub p1: f64,
    pub bit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// Estimated error after de-encoding.
    pub estimate: PauliOp,
    pub decisions: Vec<Decision>,
}

impl DecodeResult {
    /// Both quadratures agree with `truth` on every data wire.
    pub fn data_ok(&self, truth: &PauliOp, roles: &[Role]) -> bool {
        roles
            .iter()
            .enumerate()
            .all(|(w, r)| *r != Role::Data || self.estimate.get(w) == truth.get(w))
    }

    /// Some frozen wire's decided (degenerate) quadrature disagrees with `truth`.
    pub fn degenerate_mismatch(&self, truth: &PauliOp, roles: &[Role]) -> bool {
        roles.iter().enumerate().any(|(w, r)| match r.decided_quadrature() {
            Some(q) if *r != Role::Data => q.of(self.estimate.get(w)) != q.of(truth.get(w)),
            _ => false,
        })
    }
}

/// Per-decision error indicators of the genie decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct GenieRecord {
    pub x_wrong: Vec<bool>,
    pub z_wrong: Vec<bool>,
}

/// Reusable decoder for one circuit, schedule and noise model.
pub struct ScDecoder {
    n: usize,
    schedule: Schedule,
    steps: Vec<Step>,
    /// Root plan per step, resolved on first use.
    roots: Vec<Option<u32>>,
    engine: Engine,
}

enum Run<'a> {
    Honest { roles: &'a [Role], syndrome: &'a [Option<bool>], stop_truth: Option<&'a PauliOp> },
    Genie { truth: &'a PauliOp },
}

impl ScDecoder {
    pub fn new(c: &CodeCircuit, schedule: Schedule, channel: &ChannelModel) -> Result<Self> {
        Self::with_priors(c, schedule, &[channel.pauli_probs()])
    }

    /// `priors` in (I, X, Y, Z) order, one per wire or a single shared vector.
    pub fn with_priors(c: &CodeCircuit, schedule: Schedule, priors: &[[f64; 4]]) -> Result<Self> {
        Ok(ScDecoder {
            n: c.n,
            schedule,
            steps: steps(schedule, c.n),
            roots: vec![None; 2 * c.n],
            engine: Engine::new(c, priors_to_bits(priors))?,
        })
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn window_stats(&self) -> WindowStats {
        self.engine.stats()
    }

    /// Distinct block layouts planned so far.
    pub fn plan_count(&self) -> usize {
        self.engine.plan_count()
    }

    pub fn plan_bytes(&self) -> usize {
        self.engine.plan_bytes()
    }

    /// Honest decoding from a syndrome. `syndrome[w]` must be set on every frozen wire.
    pub fn decode(&mut self, roles: &[Role], syndrome: &[Option<bool>]) -> Result<DecodeResult> {
        let r = self.run(Run::Honest { roles, syndrome, stop_truth: None })?;
        Ok(r.expect("no early stop without truth"))
    }

    /// Honest decoding that gives up (returns `None`) at the first wrong data decision.
    pub fn decode_until_error(
        &mut self,
        roles: &[Role],
        syndrome: &[Option<bool>],
        truth: &PauliOp,
    ) -> Result<Option<DecodeResult>> {
        self.run(Run::Honest { roles, syndrome, stop_truth: Some(truth) })
    }

    /// Decide every bit of every wire, conditioning on the true values of earlier steps.
    pub fn genie(&mut self, truth: &PauliOp) -> Result<GenieRecord> {
        let r = self.run(Run::Genie { truth })?.expect("genie runs to completion");
        let mut rec = GenieRecord { x_wrong: vec![false; self.n], z_wrong: vec![false; self.n] };
        for d in &r.decisions {
            let t = d.quad.of(truth.get(d.wire));
            match d.quad {
                Quadrature::X => rec.x_wrong[d.wire] = d.bit != t,
                Quadrature::Z => rec.z_wrong[d.wire] = d.bit != t,
            }
        }
        Ok(rec)
    }

    fn run(&mut self, run: Run) -> Result<Option<DecodeResult>> {
        let n = self.n;
        match &run {
            Run::Honest { roles, syndrome, stop_truth } => {
                if roles.len() != n || syndrome.len() != n || stop_truth.is_some_and(|t| t.len() != n) {
                    return Err(Error::InvalidConfig("roles/syndrome length mismatch".into()));
                }
            }
            Run::Genie { truth } => {
                if truth.len() != n {
                    return Err(Error::InvalidConfig("truth length mismatch".into()));
                }
            }
        }
        self.engine.reset();
        let mut est_x = vec![false; n];
        let mut est_z = vec![false; n];
        let mut decisions = Vec::with_capacity(2 * n);
        for (t, st) in self.steps.iter().enumerate() {
            let (w, q) = (st.wire, st.quad);
            let mask = q.mask();
            let frozen_value = match &run {
                Run::Honest { roles, syndrome, .. } if roles[w].frozen_quadrature() == Some(q) => {
                    Some(syndrome[w].ok_or_else(|| Error::InvalidConfig(format!("no syndrome bit for wire {w}")))?)
                }
                _ => None,
            };
            let value = match frozen_value {
                Some(v) => v,
                None => {
                    let id = match self.roots[t] {
                        Some(id) => id,
                        None => *self.roots[t].insert(self.engine.root_plan(&step_segs(n, st))?),
                    };
                    let msg = self.engine.eval(id)?;
                    let p1 = msg[1];
                    let bit = p1 > 0.5;
                    decisions.push(Decision { wire: w, quad: q, p1, bit });
                    match &run {
                        Run::Genie { truth } => q.of(truth.get(w)),
                        Run::Honest { roles, stop_truth: Some(t), .. } => {
                            if roles[w] == Role::Data && bit != q.of(t.get(w)) {
                                return Ok(None);
                            }
                            bit
                        }
                        Run::Honest { .. } => bit,
                    }
                }
            };
            self.engine.set_top(w, mask, if value { mask } else { 0 });
            match q {
                Quadrature::X => est_x[w] = value,
                Quadrature::Z => est_z[w] = value,
            }
        }
        let estimate = PauliOp::from_paulis((0..n).map(|w| Pauli::from_xz(est_x[w], est_z[w])).collect());
        Ok(Some(DecodeResult { estimate, decisions }))
    }
}

/// Syndrome bits read off a de-encoded error: x on freeze-0 wires, z on freeze-plus wires.
pub fn extract_syndrome(dec: &PauliOp, roles: &[Role]) -> Vec<Option<bool>> {
    roles
        .iter()
        .enumerate()
        .map(|(w, r)| r.frozen_quadrature().map(|q| q.of(dec.get(w))))
        .collect()
}
