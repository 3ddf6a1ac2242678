//! Channel selection, frozen maps, error bounds and erasure density evolution.

use std::io::{BufRead, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::decoder::Quadrature;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Data,
    /// Prepared in |0>: its x bit is read from the syndrome.
    Freeze0,
    /// Prepared in |+>: its z bit is read from the syndrome.
    Freezeplus,
}

impl Role {
    pub fn frozen_quadrature(self) -> Option<Quadrature> {
        match self {
            Role::Data => None,
            Role::Freeze0 => Some(Quadrature::X),
            Role::Freezeplus => Some(Quadrature::Z),
        }
    }

    /// The quadrature the decoder still has to guess on a frozen wire.
    pub fn decided_quadrature(self) -> Option<Quadrature> {
        match self {
            Role::Data => None,
            Role::Freeze0 => Some(Quadrature::Z),
            Role::Freezeplus => Some(Quadrature::X),
        }
    }
}

/// Per-wire genie error rates of each quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub err_x: Vec<f64>,
    pub err_z: Vec<f64>,
    /// Monte Carlo trials behind the rates; 0 for analytic values.
    pub trials: u64,
}

const CSV_HEADER: &str = "wire,err_x,err_z,trials";

impl ChannelStats {
    pub fn new(err_x: Vec<f64>, err_z: Vec<f64>, trials: u64) -> Result<Self> {
        if err_x.len() != err_z.len() {
            return Err(Error::InvalidConfig("err_x and err_z differ in length".into()));
        }
        if err_x.iter().chain(&err_z).any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidConfig("error rate outside [0, 1]".into()));
        }
        Ok(ChannelStats { err_x, err_z, trials })
    }

    pub fn n(&self) -> usize {
        self.err_x.len()
    }

    pub fn worst(&self, w: usize) -> f64 {
        self.err_x[w].max(self.err_z[w])
    }

    /// CSV with optional leading `# key=value` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[(&str, String)]) -> Result<()> {
        for (k, v) in comments {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{CSV_HEADER}")?;
        for w in 0..self.n() {
            writeln!(out, "{w},{:.8e},{:.8e},{}", self.err_x[w], self.err_z[w], self.trials)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen_header = false;
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != CSV_HEADER {
                    return Err(Error::Parse(format!("expected header {CSV_HEADER:?}, got {line:?}")));
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("bad stats row {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            let w: usize = f[0].parse().map_err(|e| Error::Parse(format!("{:?}: {e}", f[0])))?;
            let t: u64 = f[3].parse().map_err(|e| Error::Parse(format!("{:?}: {e}", f[3])))?;
            rows.push((w, num(f[1])?, num(f[2])?, t));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::Parse("wires must be 0..n-1 exactly once".into()));
        }
        let trials = rows.first().map_or(0, |r| r.3);
        ChannelStats::new(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect(), trials)
    }
}

/// Which quadrature gets frozen on a non-data wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeRule {
    /// Freeze the worse quadrature; the better one is decided (and degenerate).
    #[default]
    FreezeWorse,
    /// Freeze the better quadrature, leaving the worse one to be decided.
    FreezeBetter,
}

impl std::str::FromStr for FreezeRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freeze-worse" => Ok(FreezeRule::FreezeWorse),
            "freeze-better" => Ok(FreezeRule::FreezeBetter),
            _ => Err(Error::Parse(format!("unknown freeze rule {s:?}"))),
        }
    }
}

/// Rank wires by worst-quadrature rate (ties by index) and keep the best `k` as data.
pub fn select_channels(s: &ChannelStats, k: usize, rule: FreezeRule) -> Result<Vec<Role>> {
    let n = s.n();
    if k > n {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds n = {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.worst(a).total_cmp(&s.worst(b)).then(a.cmp(&b)));
    let mut roles = vec![Role::Data; n];
    for &w in &order[k..] {
        let z_worse = s.err_z[w] >= s.err_x[w];
        let freeze_z = match rule {
            FreezeRule::FreezeWorse => z_worse,
            FreezeRule::FreezeBetter => !z_worse,
        };
        roles[w] = if freeze_z { Role::Freezeplus } else { Role::Freeze0 };
    }
    Ok(roles)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub raw: f64,
    pub clamped: f64,
}

/// Sum of genie error rates of every decision the decoder makes.
pub fn union_bound(s: &ChannelStats, roles: &[Role]) -> Result<Bound> {
    if roles.len() != s.n() {
        return Err(Error::InvalidConfig("frozen map and stats differ in length".into()));
    }
    let mut raw = 0.0;
    for (w, r) in roles.iter().enumerate() {
        raw += match r {
            Role::Data => s.err_x[w] + s.err_z[w],
            Role::Freeze0 => s.err_z[w],
            Role::Freezeplus => s.err_x[w],
        };
    }
    Ok(Bound { raw, clamped: raw.clamp(0.0, 1.0) })
}

/// Sum over wires of the better quadrature's rate.
pub fn degenerate_bound(s: &ChannelStats) -> f64 {
    (0..s.n()).map(|w| s.err_x[w].min(s.err_z[w])).sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenMap {
    pub n: usize,
    pub k: usize,
    pub channel: String,
    pub family: String,
    pub decoder: String,
    pub roles: Vec<Role>,
}

impl FrozenMap {
    pub fn validate(&self) -> Result<()> {
        if self.roles.len() != self.n {
            return Err(Error::InvalidConfig(format!("{} roles for n = {}", self.roles.len(), self.n)));
        }
        let k = self.roles.iter().filter(|r| **r == Role::Data).count();
        if k != self.k {
            return Err(Error::InvalidConfig(format!("k = {} but {k} data wires", self.k)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FrozenMap = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// Erasure probability of each de-encoded x bit for the polar family, in wire order.
/// z rates are the mirror image: `P_z(i) = P_x(n - 1 - i)`.
pub fn bec_x_rates(levels: usize, eps: f64) -> Vec<f64> {
    bec_x_rates_generic(levels, eps, |z| 2.0 * z - z * z, |z| z * z)
}

pub fn bec_x_rates_exact(levels: usize, eps: &BigRational) -> Vec<BigRational> {
    let two = BigRational::from_integer(BigInt::from(2));
    bec_x_rates_generic(levels, eps.clone(), |z| &two * &z - &z * &z, |z| &z * &z)
}

fn bec_x_rates_generic<T: Clone>(levels: usize, eps: T, minus: impl Fn(T) -> T, plus: impl Fn(T) -> T) -> Vec<T> {
    // Transforms are applied from the top bit of the wire index down: a 1 bit
    // combines two erasures ("minus"), a 0 bit uses the side information ("plus").
    let mut rates = vec![eps];
    for _ in 0..levels {
        rates = rates
            .iter()
            .flat_map(|r| [plus(r.clone()), minus(r.clone())])
            .collect();
    }
    rates
}

/// Genie statistics from density evolution: decision error = erasure / 2.
pub fn bec_density_evolution(levels: usize, eps: f64) -> Result<ChannelStats> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidConfig(format!("eps = {eps} out of range")));
    }
    let x = bec_x_rates(levels, eps);
    let err_x: Vec<f64> = x.iter().map(|r| r / 2.0).collect();
    let err_z: Vec<f64> = err_x.iter().rev().copied().collect();
    ChannelStats::new(err_x, err_z, 0)
}

/// Exact genie error rates `(x, z)` as rationals.
pub fn bec_density_evolution_exact(levels: usize, eps: &BigRational) -> (Vec<BigRational>, Vec<BigRational>) {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let x: Vec<BigRational> = bec_x_rates_exact(levels, eps).into_iter().map(|r| r * &half).collect();
    let z = x.iter().rev().cloned().collect();
    (x, z)
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(rows: &[(f64, f64)]) -> ChannelStats {
        ChannelStats::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect(), 10).unwrap()
    }

    #[test]
    fn selection_two_wires() {
        let s = stats(&[(0.0, 0.5), (0.4, 0.4)]);
        let roles = select_channels(&s, 1, FreezeRule::FreezeWorse).unwrap();
        assert_eq!(roles, vec![Role::Freezeplus, Role::Data]);
        let roles = select_channels(&s, 1, FreezeRule::FreezeBetter).unwrap();
        assert_eq!(roles, vec![Role::Freeze0, Role::Data]);
        assert!(select_channels(&s, 3, FreezeRule::FreezeWorse).is_err());
    }

    #[test]
    fn ties_broken_by_index() {
        let s = stats(&[(0.1, 0.1), (0.1, 0.1), (0.1, 0.1)]);
        let roles = select_channels(&s, 2, FreezeRule::FreezeWorse).unwrap();
        assert_eq!(&roles[..2], &[Role::Data, Role::Data]);
    }

    #[test]
    fn bounds() {
        let s = stats(&[(0.0, 0.5), (0.4, 0.3), (0.01, 0.02)]);
        let roles = vec![Role::Freezeplus, Role::Freeze0, Role::Data];
        let b = union_bound(&s, &roles).unwrap();
        assert!((b.raw - (0.0 + 0.3 + 0.03)).abs() < 1e-15);
        assert!((degenerate_bound(&s) - 0.31).abs() < 1e-15);
        let none = vec![Role::Freezeplus, Role::Freeze0, Role::Freeze0];
        let b = union_bound(&s, &none).unwrap();
        assert!((b.raw - 0.32).abs() < 1e-15);
    }

    #[test]
    fn csv_roundtrip() {
        let s = stats(&[(0.123456789, 0.5), (1e-7, 0.0)]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &[("config_hash", "abc".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# config_hash=abc\nwire,err_x,err_z,trials\n"));
        let back = ChannelStats::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, s);
        assert!(ChannelStats::read_csv("w,x\n".as_bytes()).is_err());
    }

    #[test]
    fn frozen_map_json() {
        let m = FrozenMap {
            n: 2,
            k: 1,
            channel: "depol:0.1".into(),
            family: "polar".into(),
            decoder: "standard".into(),
            roles: vec![Role::Data, Role::Freeze0],
        };
        let j = m.to_json().unwrap();
        assert!(j.contains("\"freeze0\""));
        assert_eq!(FrozenMap::from_json(&j).unwrap(), m);
        let bad = j.replace("\"k\": 1", "\"k\": 2");
        assert!(FrozenMap::from_json(&bad).is_err());
    }

    #[test]
    fn de_small_cases() {
        let s = bec_density_evolution(1, 0.5).unwrap();
        assert_eq!(s.err_x, vec![0.125, 0.375]);
        let r = bec_x_rates(2, 0.5);
        assert_eq!(r, vec![0.0625, 0.4375, 0.5625, 0.9375]);
    }
}
