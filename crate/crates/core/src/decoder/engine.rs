//! Exact contraction of the decoding network by recursion over circuit blocks.
//!
//! At scale `s` the circuit splits into `2^s` independent blocks. A block is
//! described by one [`Cell`] per local wire giving, per Pauli bit, whether the
//! bit is pinned to a known value, free (summed with a uniform leaf) or open
//! (part of a window whose joint distribution is being computed). Pushing the
//! cells through one scale of gates yields the cells of the two child blocks;
//! homogeneous runs pass through unchanged, so only a few wires near domain
//! walls and open wires ever become open. A block's message is the
//! distribution over its open bits, built from its children's messages.

use std::collections::HashMap;

use smallvec::{smallvec, SmallVec};

use crate::circuit::{disentangler_pair, tree_pair, CodeCircuit, Family};
use crate::error::{Error, Result};

const XB: u8 = 1;
const ZB: u8 = 2;

/// Per-wire bit status. Bits in neither mask are free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Cell {
    pub known: u8,
    pub open: u8,
}

impl Cell {
    pub const FREE: Cell = Cell { known: 0, open: 0 };

    pub fn new(known: u8, open: u8) -> Self {
        debug_assert!(known & open == 0 && (known | open) < 4);
        Cell { known, open }
    }

    fn cls(self, bit: u8) -> Cls {
        if self.known & bit != 0 {
            Cls::K
        } else if self.open & bit != 0 {
            Cls::O
        } else {
            Cls::F
        }
    }

    fn from_cls(x: Cls, z: Cls) -> Cell {
        let mut c = Cell::FREE;
        for (cls, bit) in [(x, XB), (z, ZB)] {
            match cls {
                Cls::K => c.known |= bit,
                Cls::O => c.open |= bit,
                Cls::F => {}
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cls {
    K,
    F,
    O,
}

/// One bit-plane of a CNOT where `a` is copied and `b` becomes `a ^ b`.
fn xfer(a: Cls, b: Cls) -> (Cls, Cls) {
    let a2 = match a {
        Cls::K => Cls::K,
        Cls::O => Cls::O,
        Cls::F if b == Cls::F => Cls::F,
        Cls::F => Cls::O,
    };
    let b2 = match (a, b) {
        (_, Cls::F) => Cls::F,
        (Cls::K, x) => x,
        _ => Cls::O,
    };
    (a2, b2)
}

/// Cells after CNOT(control -> target).
pub fn gate_cells(c: Cell, t: Cell) -> (Cell, Cell) {
    let (cx, tx) = xfer(c.cls(XB), t.cls(XB));
    let (tz, cz) = xfer(t.cls(ZB), c.cls(ZB));
    (Cell::from_cls(cx, cz), Cell::from_cls(tx, tz))
}

/// Run-length cells of a block: `(start, cell)`, sorted, first start 0.
pub type Segs = SmallVec<[(u32, Cell); 8]>;

pub fn segs_from_cells(cells: &[Cell]) -> Segs {
    let mut s = Segs::new();
    for (i, &c) in cells.iter().enumerate() {
        if s.last().map(|l| l.1) != Some(c) {
            s.push((i as u32, c));
        }
    }
    s
}

fn cell_at(segs: &Segs, k: usize) -> Cell {
    let i = segs.partition_point(|&(st, _)| st as usize <= k);
    segs[i - 1].1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindowStats {
    /// Most wires in any message passed between scales.
    pub max_width: usize,
    /// Most open bits in any message.
    pub max_bits: usize,
    pub messages: u64,
}

/// Normalized distribution over the open bits of a window.
pub type Dist = SmallVec<[f64; 8]>;

/// Entries of a linear message are exactly zero or at least this, so a
/// product of two never leaves the normal range.
const LINEAR_FLOOR: f64 = 1e-150;

/// A block message: probabilities, or their logarithms when the spread
/// between entries is too wide for products to stay representable.
#[derive(Clone, Debug, Default)]
struct Msg {
    log: bool,
    v: Dist,
}

impl Msg {
    fn one() -> Msg {
        Msg { log: false, v: smallvec![1.0] }
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    fn ln_at(&self, i: usize) -> f64 {
        if self.log {
            self.v[i]
        } else {
            self.v[i].ln()
        }
    }

    /// Normalize raw non-negative weights.
    fn from_linear(mut v: Dist) -> Result<Msg> {
        let s: f64 = v.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InconsistentEvidence("window has zero mass".into()));
        }
        v.iter_mut().for_each(|x| *x /= s);
        if v.iter().all(|&x| x == 0.0 || x >= LINEAR_FLOOR) {
            Ok(Msg { log: false, v })
        } else {
            v.iter_mut().for_each(|x| *x = x.ln());
            Ok(Msg { log: true, v })
        }
    }

    /// Normalize log weights (`-inf` for zero).
    fn from_logs(mut v: Dist) -> Result<Msg> {
        let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY || top.is_nan() {
            return Err(Error::InconsistentEvidence("window has zero mass".into()));
        }
        let lse = top + v.iter().map(|&l| (l - top).exp()).sum::<f64>().ln();
        v.iter_mut().for_each(|l| *l -= lse);
        if v.iter().all(|&l| l == f64::NEG_INFINITY || l >= LINEAR_FLOOR.ln()) {
            v.iter_mut().for_each(|l| *l = l.exp());
            Ok(Msg { log: false, v })
        } else {
            Ok(Msg { log: true, v })
        }
    }

    fn into_dist(self) -> Dist {
        if self.log {
            self.v.into_iter().map(f64::exp).collect()
        } else {
            self.v
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Clone, Copy)]
struct Geom {
    n: usize,
    levels: usize,
    bmera: bool,
}

impl Geom {
    fn block_len(&self, s: usize) -> usize {
        self.n >> s
    }

    fn dpair(&self, k: usize, m: usize) -> Option<(usize, bool)> {
        if self.bmera {
            disentangler_pair(k, m)
        } else {
            None
        }
    }
}

/// Value-independent part of a block contraction, shared by every block and
/// trial with the same cell layout at the same scale.
enum Plan {
    Leaf(Cell),
    Inner(Inner),
}

const HEADER: usize = 6;
const LEAF_FLAG: u32 = 1 << 31;

impl Plan {
    /// Flatten into arena words: child ids, cmask, two count words, then the
    /// known lists, gates, ext and the table columns (two words each).
    fn encode(&self, out: &mut Vec<u32>) {
        match self {
            Plan::Leaf(c) => out.extend_from_slice(&[c.known as u32, c.open as u32, 0, 0, 0, LEAF_FLAG]),
            Plan::Inner(p) => {
                let lg = |t: &SmallVec<[u64; 4]>| t.len() as u32;
                out.extend_from_slice(&[
                    p.child[0],
                    p.child[1],
                    p.cmask as u32,
                    (p.cmask >> 32) as u32,
                    p.gates.len() as u32
                        | (p.child_known.len() as u32) << 8
                        | (p.parent_known.len() as u32) << 16
                        | (p.ext.len() as u32) << 24,
                    lg(&p.te) | lg(&p.to) << 8 | p.wires << 16,
                ]);
                out.extend_from_slice(&p.child_known);
                out.extend_from_slice(&p.parent_known);
                out.extend(p.gates.iter().map(|&(c, t)| c as u32 | (t as u32) << 8));
                out.extend(p.ext.iter().map(|&e| e as u32));
                for &v in p.te.iter().chain(&p.to) {
                    out.extend_from_slice(&[v as u32, (v >> 32) as u32]);
                }
            }
        }
    }
}

/// View of an encoded plan.
#[derive(Clone, Copy)]
struct PlanRef<'a> {
    w: &'a [u32],
}

impl<'a> PlanRef<'a> {
    fn leaf(&self) -> Option<Cell> {
        (self.w[5] & LEAF_FLAG != 0).then(|| Cell { known: self.w[0] as u8, open: self.w[1] as u8 })
    }

    #[inline]
    fn child(&self, i: usize) -> u32 {
        self.w[i]
    }

    #[inline]
    fn cmask(&self) -> u64 {
        self.w[2] as u64 | (self.w[3] as u64) << 32
    }

    #[inline]
    fn count(&self, k: usize) -> usize {
        (self.w[4 + k / 4] >> (8 * (k % 4)) & 0xff) as usize
    }

    fn wires(&self) -> usize {
        (self.w[5] >> 16) as usize
    }

    #[inline]
    fn section(&self, k: usize) -> &'a [u32] {
        // order: child_known, parent_known, gates, ext
        let start = HEADER + (0..k).map(|j| self.count([1, 2, 0, 3][j])).sum::<usize>();
        &self.w[start..start + self.count([1, 2, 0, 3][k])]
    }

    fn child_known(&self) -> &'a [u32] {
        self.section(0)
    }

    fn parent_known(&self) -> &'a [u32] {
        self.section(1)
    }

    fn ext(&self) -> &'a [u32] {
        self.section(3)
    }

    fn tables(&self) -> (&'a [u32], &'a [u32]) {
        let start = HEADER + self.count(0) + self.count(1) + self.count(2) + self.count(3);
        let ne = 2 * self.count(4);
        let no = 2 * self.count(5);
        (&self.w[start..start + ne], &self.w[start + ne..start + ne + no])
    }

    #[inline]
    fn pull(&self, mut v: u64) -> u64 {
        for &g in self.section(2) {
            let (c, t) = (g & 0xff, g >> 8);
            v ^= ((v >> (2 * c)) & 1) << (2 * t);
            v ^= ((v >> (2 * t + 1)) & 1) << (2 * c + 1);
        }
        v
    }
}

/// All XOR combinations of the encoded columns in `t`, offset by `base`.
fn expand(t: &[u32], base: u64) -> SmallVec<[u64; 8]> {
    let k = t.len() / 2;
    let mut out: SmallVec<[u64; 8]> = smallvec![base; 1 << k];
    for y in 1..out.len() {
        let c = y.trailing_zeros() as usize;
        out[y] = out[y & (y - 1)] ^ table_at(t, c);
    }
    out
}

fn table_at(t: &[u32], i: usize) -> u64 {
    t[2 * i] as u64 | (t[2 * i + 1] as u64) << 32
}

const NO_CHILD: u32 = u32::MAX;

/// Known bit reference packed as `position << 8 | slot << 2 | mask`.
fn pack_known(pos: usize, slot: usize, mask: u8) -> u32 {
    debug_assert!(pos < 1 << 24 && slot < 32);
    (pos as u32) << 8 | (slot as u32) << 2 | mask as u32
}

struct Inner {
    /// Plans of the even and odd child blocks, `NO_CHILD` when they have no open bits.
    child: [u32; 2],
    cmask: u64,
    /// Inverse gates on slot indices.
    gates: SmallVec<[(u8, u8); 8]>,
    /// Known child-side bits.
    child_known: SmallVec<[u32; 4]>,
    /// Known parent-side bits, checked against the pulled-back values.
    parent_known: SmallVec<[u32; 4]>,
    /// Slot bits making up the output index.
    ext: SmallVec<[u8; 8]>,
    /// Pulled-back images of the even and odd child window bits.
    te: SmallVec<[u64; 4]>,
    to: SmallVec<[u64; 4]>,
    wires: u32,
}

impl Inner {
    fn pull(&self, mut v: u64) -> u64 {
        for &(c, t) in &self.gates {
            v ^= ((v >> (2 * c)) & 1) << (2 * t);
            v ^= ((v >> (2 * t + 1)) & 1) << (2 * c + 1);
        }
        v
    }
}

struct Planner {
    g: Geom,
    /// Encoded plans; a plan id is its offset.
    arena: Vec<u32>,
    count: usize,
    index: HashMap<(u8, Segs), u32>,
}

impl Planner {
    fn mid_cell(&self, segs: &Segs, v: usize, m: usize) -> Cell {
        let c = cell_at(segs, v);
        match self.g.dpair(v, m) {
            None => c,
            Some((p, ctrl)) => {
                let pc = cell_at(segs, p);
                if ctrl {
                    gate_cells(c, pc).0
                } else {
                    gate_cells(pc, c).1
                }
            }
        }
    }

    fn out_cell(&self, segs: &Segs, k: usize, m: usize) -> Cell {
        let (p, ctrl) = tree_pair(k);
        let a = self.mid_cell(segs, k, m);
        let b = self.mid_cell(segs, p, m);
        if ctrl {
            gate_cells(a, b).0
        } else {
            gate_cells(b, a).1
        }
    }

    /// Cells of the even and odd child blocks.
    fn push_children(&self, segs: &Segs, m: usize) -> (Segs, Segs) {
        let mut hot: SmallVec<[usize; 32]> = SmallVec::new();
        let mut mark = |lo: isize, hi: isize| {
            for k in lo.max(0)..=hi.min(m as isize - 1) {
                hot.push(k as usize);
            }
        };
        for (i, &(st, c)) in segs.iter().enumerate() {
            let st = st as isize;
            if st > 0 {
                mark(st - 3, st + 2);
            }
            if c.open != 0 {
                let end = segs.get(i + 1).map_or(m, |x| x.0 as usize) as isize;
                mark(st - 3, end + 2);
            }
        }
        hot.sort_unstable();
        hot.dedup();
        let outs: SmallVec<[Cell; 32]> = hot.iter().map(|&k| self.out_cell(segs, k, m)).collect();
        let child_cell = |k: usize| match hot.binary_search(&k) {
            Ok(i) => outs[i],
            Err(_) => cell_at(segs, k),
        };
        let half = m / 2;
        let build = |parity: usize| {
            let mut ev: SmallVec<[usize; 64]> = SmallVec::new();
            ev.push(0);
            for &(st, _) in segs.iter().skip(1) {
                ev.push((st as usize + 1 - parity) / 2);
            }
            for &k in hot.iter().filter(|&&k| k & 1 == parity) {
                ev.push(k >> 1);
                ev.push((k >> 1) + 1);
            }
            ev.sort_unstable();
            ev.dedup();
            let mut out = Segs::new();
            for &j in ev.iter().filter(|&&j| j < half) {
                let c = child_cell(2 * j + parity);
                if out.last().map(|l| l.1) != Some(c) {
                    out.push((j as u32, c));
                }
            }
            out
        };
        (build(0), build(1))
    }

    /// Push the positions coupled to `k` by one scale of gates.
    fn closure(&self, k: usize, m: usize, out: &mut SmallVec<[usize; 32]>) {
        let (tp, _) = tree_pair(k);
        out.push(k);
        out.push(tp);
        if let Some((p, _)) = self.g.dpair(k, m) {
            out.push(p);
        }
        if let Some((p, _)) = self.g.dpair(tp, m) {
            out.push(p);
        }
    }

    /// Plan id for a block layout at scale `s`, building it (and its children) on first use.
    fn plan(&mut self, s: usize, segs: &Segs) -> Result<u32> {
        let key = (s as u8, segs.clone());
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        let plan = if s == self.g.levels {
            Plan::Leaf(segs[0].1)
        } else {
            Plan::Inner(self.build_inner(s, segs)?)
        };
        let id = u32::try_from(self.arena.len()).map_err(|_| Error::InvalidConfig("plan arena full".into()))?;
        plan.encode(&mut self.arena);
        self.count += 1;
        self.index.insert(key, id);
        Ok(id)
    }

    fn build_inner(&mut self, s: usize, segs: &Segs) -> Result<Inner> {
        let m = self.g.block_len(s);
        let (se, so) = self.push_children(segs, m);

        // Parent window wires and child window wires (in parent positions).
        let mut wpos: SmallVec<[(usize, Cell); 8]> = SmallVec::new();
        for_open(segs, m, |k, c| wpos.push((k, c)));
        let mut cwin: [SmallVec<[(usize, Cell); 8]>; 2] = [SmallVec::new(), SmallVec::new()];
        let half = m / 2;
        for (par, cs) in [(0, &se), (1, &so)] {
            for_open(cs, half, |j, c| cwin[par].push((2 * j + par, c)));
        }
        let ce = if cwin[0].is_empty() { NO_CHILD } else { self.plan(s + 1, &se)? };
        let co = if cwin[1].is_empty() { NO_CHILD } else { self.plan(s + 1, &so)? };

        // R: parent positions whose input bits depend on child window bits, plus the window.
        let mut r: SmallVec<[usize; 32]> = wpos.iter().map(|&(k, _)| k).collect();
        for &(k, _) in cwin[0].iter().chain(cwin[1].iter()) {
            self.closure(k, m, &mut r);
        }
        r.sort_unstable();
        r.dedup();
        // Q: output positions needed to reconstruct the inputs on R.
        let mut q: SmallVec<[usize; 32]> = SmallVec::new();
        for &p in &r {
            self.closure(p, m, &mut q);
        }
        q.sort_unstable();
        q.dedup();
        if q.len() > 32 {
            return Err(Error::InvalidConfig(format!("window too wide at scale {s}: {} wires", q.len())));
        }
        let slot_of = |k: usize| q.binary_search(&k).expect("position in Q");

        // Inverse gate list on slots: tree layer first, then disentanglers.
        let mut gates = SmallVec::new();
        for (i, &k) in q.iter().enumerate() {
            if k & 1 == 0 {
                if let Ok(j) = q.binary_search(&(k + 1)) {
                    gates.push((i as u8, j as u8));
                }
            }
        }
        for (i, &k) in q.iter().enumerate() {
            if let Some((p, true)) = self.g.dpair(k, m) {
                if let Ok(j) = q.binary_search(&p) {
                    gates.push((i as u8, j as u8));
                }
            }
        }

        let mut child_known = SmallVec::new();
        for (i, &k) in q.iter().enumerate() {
            let cs = if k & 1 == 0 { &se } else { &so };
            let c = cell_at(cs, k >> 1);
            if c.known != 0 {
                child_known.push(pack_known(k, i, c.known));
            }
        }
        let mut parent_known = SmallVec::new();
        let mut cmask = 0u64;
        for &p in &r {
            let c = cell_at(segs, p);
            if c.known != 0 {
                let i = slot_of(p);
                cmask |= (c.known as u64) << (2 * i);
                parent_known.push(pack_known(p, i, c.known));
            }
        }
        let mut ext = SmallVec::new();
        for &(k, c) in &wpos {
            let i = slot_of(k) as u8;
            if c.open & XB != 0 {
                ext.push(2 * i);
            }
            if c.open & ZB != 0 {
                ext.push(2 * i + 1);
            }
        }
        let mut inner = Inner {
            child: [ce, co],
            cmask,
            gates,
            child_known,
            parent_known,
            ext,
            te: SmallVec::new(),
            to: SmallVec::new(),
            wires: wpos.len() as u32,
        };
        let table = |inner: &Inner, win: &SmallVec<[(usize, Cell); 8]>| {
            let mut cols: SmallVec<[u64; 4]> = SmallVec::new();
            for &(k, c) in win {
                let i = slot_of(k);
                if c.open & XB != 0 {
                    cols.push(inner.pull(1 << (2 * i)));
                }
                if c.open & ZB != 0 {
                    cols.push(inner.pull(1 << (2 * i + 1)));
                }
            }
            cols
        };
        inner.te = table(&inner, &cwin[0]);
        inner.to = table(&inner, &cwin[1]);
        Ok(inner)
    }
}

const EMPTY: u32 = u32::MAX;

/// Last message computed for one block. Consecutive queries revisit a block
/// with its most recent layout, so one entry is enough.
#[derive(Clone, Copy)]
struct Slot {
    /// Payload when the message is linear with two entries; otherwise in `State::big`.
    data: [f64; 2],
    plan: u32,
    inline: bool,
}

const EMPTY_SLOT: Slot = Slot { data: [0.0; 2], plan: EMPTY, inline: false };

/// Pinned values and cached messages of one decoding run.
struct State {
    g: Geom,
    prior: Vec<[f64; 4]>,
    /// Per scale, block and position: value bits, and which of them are set
    /// shifted up by 2.
    bits: Vec<u8>,
    slots: Vec<Slot>,
    big: Vec<Msg>,
    stats: WindowStats,
}

impl State {
    fn prior(&self, w: usize) -> &[f64; 4] {
        if self.prior.len() == 1 {
            &self.prior[0]
        } else {
            &self.prior[w]
        }
    }

    /// Value bits `mask` of wire `w` at scale `s` (after `s` scales of gates).
    /// Only valid for bits whose cell class is known.
    #[inline]
    fn val(&mut self, s: usize, w: usize, mask: u8) -> u8 {
        // block-major within a scale, so a block's positions share cache lines
        let i = s * self.g.n + ((w & ((1 << s) - 1)) << (self.g.levels - s) | w >> s);
        let cur = self.bits[i];
        if (cur >> 2) & mask == mask {
            return cur & mask;
        }
        assert!(s > 0, "input wire {w} read before being pinned");
        let need = mask & !(cur >> 2);
        let ps = s - 1;
        let blk = w & ((1 << ps) - 1);
        let k = w >> ps;
        let m = self.g.block_len(ps);
        let mut out = 0u8;
        if need & XB != 0 {
            let (tp, ctrl) = tree_pair(k);
            let mut x = self.mid_x(ps, blk, k, m);
            if !ctrl {
                x ^= self.mid_x(ps, blk, tp, m);
            }
            out |= x;
        }
        if need & ZB != 0 {
            let (tp, ctrl) = tree_pair(k);
            let mut z = self.mid_z(ps, blk, k, m);
            if ctrl {
                z ^= self.mid_z(ps, blk, tp, m);
            }
            out |= z << 1;
        }
        let now = self.bits[i] | out | need << 2;
        self.bits[i] = now;
        now & mask
    }

    fn mid_x(&mut self, s: usize, blk: usize, v: usize, m: usize) -> u8 {
        let mut x = self.val(s, blk + (v << s), XB);
        if let Some((p, false)) = self.g.dpair(v, m) {
            x ^= self.val(s, blk + (p << s), XB);
        }
        x
    }

    fn mid_z(&mut self, s: usize, blk: usize, v: usize, m: usize) -> u8 {
        let mut z = self.val(s, blk + (v << s), ZB) >> 1;
        if let Some((p, true)) = self.g.dpair(v, m) {
            z ^= self.val(s, blk + (p << s), ZB) >> 1;
        }
        z
    }

    /// Distribution over the open bits of block `b` at scale `s` whose layout
    /// has plan `id`, indexed by open bits in wire order, x before z within a
    /// wire. Normalized.
    fn message(&mut self, arena: &[u32], s: usize, b: usize, id: u32) -> Result<Msg> {
        if s == self.g.levels {
            // cheaper to recompute than to cache
            let cell = PlanRef { w: &arena[id as usize..] }.leaf().expect("leaf plan at the last scale");
            return self.leaf_message(b, cell);
        }
        let slot = (1 << s) - 1 + b;
        let sl = &self.slots[slot];
        if sl.plan == id {
            return Ok(if sl.inline {
                Msg { log: false, v: Dist::from_slice(&sl.data) }
            } else {
                self.big[slot].clone()
            });
        }
        let msg = self.combine(arena, s, b, PlanRef { w: &arena[id as usize..] })?;
        let sl = &mut self.slots[slot];
        sl.plan = id;
        sl.inline = msg.len() == 2 && !msg.log;
        if sl.inline {
            sl.data = [msg.v[0], msg.v[1]];
        } else {
            self.big[slot].clone_from(&msg);
        }
        Ok(msg)
    }

    fn record(&mut self, wires: usize, bits: usize) {
        self.stats.messages += 1;
        self.stats.max_width = self.stats.max_width.max(wires);
        self.stats.max_bits = self.stats.max_bits.max(bits);
    }

    fn leaf_message(&mut self, w: usize, cell: Cell) -> Result<Msg> {
        let known = if cell.known != 0 { self.val(self.g.levels, w, cell.known) } else { 0 };
        let nb = cell.open.count_ones() as usize;
        let mut out: Dist = smallvec![0.0; 1 << nb];
        let prior = *self.prior(w);
        for v in 0..4u8 {
            if v & cell.known != known {
                continue;
            }
            out[extract_cell(v, cell.open)] += prior[v as usize];
        }
        self.record(usize::from(cell.open != 0), nb);
        Msg::from_linear(out)
    }

    fn combine(&mut self, arena: &[u32], s: usize, b: usize, p: PlanRef) -> Result<Msg> {
        let a = match p.child(0) {
            NO_CHILD => Msg::one(),
            id => self.message(arena, s + 1, b, id)?,
        };
        let bm = match p.child(1) {
            NO_CHILD => Msg::one(),
            id => self.message(arena, s + 1, b + (1 << s), id)?,
        };
        let (te, to) = p.tables();
        debug_assert_eq!(a.len(), 1 << (te.len() / 2));
        debug_assert_eq!(bm.len(), 1 << (to.len() / 2));

        let mut ystar = 0u64;
        for &ck in p.child_known() {
            let v = self.val(s + 1, b + (((ck >> 8) as usize) << s), (ck & 3) as u8);
            ystar |= (v as u64) << (2 * ((ck >> 2) & 31));
        }
        let te = expand(te, p.pull(ystar));
        let to = expand(to, 0);
        let mut ctarget = 0u64;
        for &pk in p.parent_known() {
            let v = self.val(s, b + (((pk >> 8) as usize) << s), (pk & 3) as u8);
            ctarget |= (v as u64) << (2 * ((pk >> 2) & 31));
        }
        let cmask = p.cmask();
        let ext = p.ext();

        let index = |v: u64| {
            let mut idx = 0usize;
            for (bit, &e) in ext.iter().enumerate() {
                idx |= ((v >> e) as usize & 1) << bit;
            }
            idx
        };
        self.record(p.wires(), ext.len());
        if !a.log && !bm.log {
            let mut out: Dist = smallvec![0.0; 1 << ext.len()];
            for (ye, &pa) in a.v.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let base = te[ye];
                for (yo, &pb) in bm.v.iter().enumerate() {
                    let v = base ^ to[yo];
                    if v & cmask == ctarget {
                        out[index(v)] += pa * pb;
                    }
                }
            }
            return Msg::from_linear(out);
        }
        let mut out: Dist = smallvec![f64::NEG_INFINITY; 1 << ext.len()];
        for ye in 0..a.len() {
            let la = a.ln_at(ye);
            if la == f64::NEG_INFINITY {
                continue;
            }
            let base = te[ye];
            for yo in 0..bm.len() {
                let v = base ^ to[yo];
                if v & cmask == ctarget {
                    let o = &mut out[index(v)];
                    *o = log_add(*o, la + bm.ln_at(yo));
                }
            }
        }
        Msg::from_logs(out)
    }
}

pub struct Engine {
    planner: Planner,
    state: State,
}

impl Engine {
    /// `prior[w]` is indexed by packed bits `x | z << 1`; one entry means all wires share it.
    pub fn new(c: &CodeCircuit, prior: Vec<[f64; 4]>) -> Result<Self> {
        if prior.len() != 1 && prior.len() != c.n {
            return Err(Error::InvalidConfig(format!("{} priors for {} wires", prior.len(), c.n)));
        }
        let g = Geom { n: c.n, levels: c.levels, bmera: c.family == Family::Bmera };
        // inner blocks only
        let slots = c.n - 1;
        Ok(Engine {
            planner: Planner { g, arena: Vec::new(), count: 0, index: HashMap::new() },
            state: State {
                g,
                prior,
                bits: vec![0; (c.levels + 1) * c.n],
                slots: vec![EMPTY_SLOT; slots],
                big: vec![Msg::default(); slots],
                stats: WindowStats::default(),
            },
        })
    }

    pub fn n(&self) -> usize {
        self.state.g.n
    }

    pub fn stats(&self) -> WindowStats {
        self.state.stats
    }

    /// Number of distinct block layouts seen so far.
    pub fn plan_count(&self) -> usize {
        self.planner.count
    }

    /// Bytes held by encoded plans.
    pub fn plan_bytes(&self) -> usize {
        4 * self.planner.arena.len()
    }

    /// Forget all pinned values and cached messages. Layout plans are kept.
    pub fn reset(&mut self) {
        let st = &mut self.state;
        st.bits.fill(0);
        st.slots.fill(EMPTY_SLOT);
    }

    /// Pin bits of an input wire. Pinned values must never change before `reset`.
    pub fn set_top(&mut self, w: usize, mask: u8, value: u8) {
        let st = &mut self.state;
        let cur = st.bits[w];
        debug_assert!((cur >> 2) & mask & (cur ^ value) == 0, "top value of wire {w} changed");
        st.bits[w] = cur & !mask | value & mask | mask << 2;
    }

    pub fn top_value(&self, w: usize) -> (u8, u8) {
        let b = self.state.bits[w];
        (b >> 2, b & 3)
    }

    /// Marginal over the open bits of a full set of input cells.
    pub fn root(&mut self, cells: &Segs) -> Result<Dist> {
        let id = self.root_plan(cells)?;
        self.eval(id)
    }

    /// Plan id of a full set of input cells, for repeated use with [`Engine::eval`].
    pub fn root_plan(&mut self, cells: &Segs) -> Result<u32> {
        self.planner.plan(0, cells)
    }

    /// Marginal for a plan returned by [`Engine::root_plan`] on this engine.
    pub fn eval(&mut self, id: u32) -> Result<Dist> {
        Ok(self.state.message(&self.planner.arena, 0, 0, id)?.into_dist())
    }
}

fn for_open(segs: &Segs, m: usize, mut f: impl FnMut(usize, Cell)) {
    for (i, &(st, c)) in segs.iter().enumerate() {
        if c.open != 0 {
            let end = segs.get(i + 1).map_or(m, |x| x.0 as usize);
            for k in st as usize..end {
                f(k, c);
            }
        }
    }
}

fn extract_cell(v: u8, open: u8) -> usize {
    let mut idx = 0;
    let mut bit = 0;
    for q in [XB, ZB] {
        if open & q != 0 {
            idx |= usize::from(v & q != 0) << bit;
            bit += 1;
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(known: u8, open: u8) -> Cell {
        Cell::new(known, open)
    }

    #[test]
    fn same_kind_pairs_pass_through() {
        for k in 0..4 {
            assert_eq!(gate_cells(c(k, 0), c(k, 0)), (c(k, 0), c(k, 0)));
        }
    }

    #[test]
    fn mixed_kind_pairs() {
        let (bz, bx, e) = (c(XB, 0), c(ZB, 0), c(0, 0));
        // b_z target leaves the uniform control alone.
        assert_eq!(gate_cells(bz, e), (bz, e));
        assert_eq!(gate_cells(e, bx), (e, bx));
        // uniform control into known-x target couples the pair
        let (a, b) = gate_cells(e, bz);
        assert!(a.open & XB != 0 && b.open & XB != 0);
        let (a, b) = gate_cells(bx, e);
        assert!(a.open & ZB != 0 && b.open & ZB != 0);
    }

    #[test]
    fn open_bits_spread_only_when_needed() {
        let q = c(0, XB);
        let e = Cell::FREE;
        // open control, free target: target stays free
        assert_eq!(gate_cells(q, e), (q, e));
        // free control, open target: both open
        let (a, b) = gate_cells(e, q);
        assert_eq!((a.open, b.open), (XB, XB));
    }

    #[test]
    fn segs_roundtrip() {
        let cells = [c(0, 0), c(0, 0), c(0, XB), c(XB, 0), c(XB, 0)];
        let s = segs_from_cells(&cells);
        assert_eq!(s.len(), 3);
        for (k, &want) in cells.iter().enumerate() {
            assert_eq!(cell_at(&s, k), want);
        }
    }
}
