//! The generator `A f(x) = Σ_{v in V(x)} theta(v) ∇_v f(x)` on continuous
//! piecewise-linear test functions, evaluated combinatorially.
//!
//! Coordinates are 0-based throughout. A point `x` lies in the cell of the
//! weak ordering obtained by grouping equal coordinates and listing the groups
//! in increasing order of value.

use crate::analytics::kappa;
use crate::error::{invalid, Error, Result};
use crate::npoint::sample_partial_coalescing;
use crate::rng::child_seed;
use crate::stats::{EstimateWithError, TestReport};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Ordered partition of `{0, .., n-1}`; blocks are listed from the smallest
/// coordinate value to the largest and each block is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeakOrdering {
    blocks: Vec<Vec<usize>>,
}

impl WeakOrdering {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(invalid("blocks", "empty block"));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= n || seen[i] {
                    return Err(invalid("blocks", format!("index {i} repeated or out of range")));
                }
                seen[i] = true;
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block position of each coordinate.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.n()];
        for (j, b) in self.blocks.iter().enumerate() {
            for &i in b {
                r[i] = j;
            }
        }
        r
    }

    /// A point of the cell: block `j` at value `j`.
    pub fn representative(&self) -> Vec<f64> {
        self.ranks().into_iter().map(|r| r as f64).collect()
    }

    /// The cell entered from this one along direction `v`: each block is split
    /// by the values of `v`, smaller `v` first.
    pub fn refine_by(&self, v: &[f64]) -> WeakOrdering {
        let mut blocks = Vec::with_capacity(self.n());
        for b in &self.blocks {
            let mut idx = b.clone();
            idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]).then(i.cmp(&j)));
            let mut cur = vec![idx[0]];
            for w in idx.windows(2) {
                if v[w[1]] == v[w[0]] {
                    cur.push(w[1]);
                } else {
                    cur.sort_unstable();
                    blocks.push(std::mem::replace(&mut cur, vec![w[1]]));
                }
            }
            cur.sort_unstable();
            blocks.push(cur);
        }
        WeakOrdering { blocks }
    }

    /// Strict ordering inside this cell's closure, ties broken by index.
    fn strict_refinement(&self) -> WeakOrdering {
        WeakOrdering { blocks: self.blocks.iter().flat_map(|b| b.iter().map(|&i| vec![i])).collect() }
    }

    /// Every weak ordering of `n` coordinates (ordered set partitions).
    pub fn all(n: usize) -> Vec<WeakOrdering> {
        fn rec(rest: &[usize], acc: &mut Vec<Vec<usize>>, out: &mut Vec<WeakOrdering>) {
            if rest.is_empty() {
                out.push(WeakOrdering { blocks: acc.clone() });
                return;
            }
            let m = rest.len();
            for mask in 1u32..(1u32 << m) {
                let block: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| rest[i]).collect();
                let remaining: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 0).map(|i| rest[i]).collect();
                acc.push(block);
                rec(&remaining, acc, out);
                acc.pop();
            }
        }
        let mut out = Vec::new();
        let idx: Vec<usize> = (0..n).collect();
        rec(&idx, &mut Vec::new(), &mut out);
        out
    }
}

/// Cell of `x`: coordinates within `tol` of a neighbour in sorted order share
/// a block. `tol = 0` groups exactly equal values.
pub fn cell_of(x: &[f64], tol: f64) -> WeakOrdering {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(i.cmp(&j)));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (pos, &i) in idx.iter().enumerate() {
        if pos > 0 && x[i] - x[idx[pos - 1]] <= tol {
            blocks.last_mut().expect("nonempty").push(i);
        } else {
            blocks.push(vec![i]);
        }
    }
    for b in &mut blocks {
        b.sort_unstable();
    }
    WeakOrdering { blocks }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VVector {
    /// Coordinates moved up.
    pub i_set: Vec<usize>,
    /// Coordinates moved down.
    pub j_set: Vec<usize>,
    pub v: Vec<f64>,
}

fn block_vectors(block: &[usize], n: usize, out: &mut Vec<VVector>) {
    let m = block.len();
    for mask in 0u64..(1u64 << m) {
        let mut v = vec![0.0; n];
        let mut i_set = Vec::new();
        let mut j_set = Vec::new();
        for (pos, &c) in block.iter().enumerate() {
            if mask >> pos & 1 == 1 {
                v[c] = 1.0;
                i_set.push(c);
            } else {
                v[c] = -1.0;
                j_set.push(c);
            }
        }
        out.push(VVector { i_set, j_set, v });
    }
}

/// `V(x)`: for every block `C` of the cell of `x`, all `2^|C|` splits
/// `(I, C \ I)` with `v = +1` on `I`, `-1` on `C \ I`, 0 elsewhere.
pub fn vectors_v(x: &[f64], tol: f64) -> Vec<VVector> {
    let cell = cell_of(x, tol);
    let mut out = Vec::new();
    for b in cell.blocks() {
        block_vectors(b, x.len(), &mut out);
    }
    out
}

/// `c + Σ a_i x_i + Σ_{i<j} b_ij |x_i - x_j|`. Only the strict upper triangle
/// of `b` is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub c: f64,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
}

impl ClosedForm {
    fn pair(&self, i: usize, j: usize) -> f64 {
        if i < j { self.b[i][j] } else { self.b[j][i] }
    }

    /// Gradient on the cell with block ranks `rank` (ties contribute 0).
    fn cell_gradient(&self, rank: &[usize]) -> Vec<f64> {
        let n = self.a.len();
        (0..n)
            .map(|k| {
                let mut g = self.a[k];
                for j in 0..n {
                    if j != k {
                        g += self.pair(k, j) * sign_usize(rank[k], rank[j]);
                    }
                }
                g
            })
            .collect()
    }
}

fn sign_usize(a: usize, b: usize) -> f64 {
    match a.cmp(&b) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPiece {
    pub gradient: Vec<f64>,
    pub offset: f64,
}

impl CellPiece {
    fn eval(&self, x: &[f64]) -> f64 {
        self.offset + self.gradient.iter().zip(x).map(|(g, v)| g * v).sum::<f64>()
    }
}

/// Cell-wise linear pieces. Every strict ordering must be present; a
/// lower-dimensional cell without its own entry uses the piece of its
/// index-ordered strict refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    pub n: usize,
    pub pieces: BTreeMap<WeakOrdering, CellPiece>,
}

impl CellTable {
    fn piece(&self, cell: &WeakOrdering) -> Result<&CellPiece> {
        self.pieces
            .get(cell)
            .or_else(|| self.pieces.get(&cell.strict_refinement()))
            .ok_or_else(|| Error::InvalidFunction(format!("no piece for cell {:?}", cell.blocks())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PwLinear {
    Closed(ClosedForm),
    Table(CellTable),
}

/// Facet continuity tolerance for cell tables.
pub const CONTINUITY_TOL: f64 = 1e-12;

impl PwLinear {
    pub fn closed(c: f64, a: Vec<f64>, b: Vec<Vec<f64>>) -> Result<Self> {
        let f = PwLinear::Closed(ClosedForm { c, a, b });
        f.validate()?;
        Ok(f)
    }

    /// `g(x) = Σ_{i<j} |x_i - x_j|`.
    pub fn pairwise_distance_sum(n: usize) -> Self {
        PwLinear::Closed(ClosedForm { c: 0.0, a: vec![0.0; n], b: vec![vec![1.0; n]; n] })
    }

    pub fn linear(c: f64, a: Vec<f64>) -> Self {
        let n = a.len();
        PwLinear::Closed(ClosedForm { c, a, b: vec![vec![0.0; n]; n] })
    }

    pub fn table(n: usize, pieces: BTreeMap<WeakOrdering, CellPiece>) -> Result<Self> {
        let f = PwLinear::Table(CellTable { n, pieces });
        f.validate()?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        match self {
            PwLinear::Closed(cf) => cf.a.len(),
            PwLinear::Table(t) => t.n,
        }
    }

    /// Shape checks; for tables also completeness and facet continuity.
    pub fn validate(&self) -> Result<()> {
        match self {
            PwLinear::Closed(cf) => {
                let n = cf.a.len();
                if n == 0 || cf.b.len() != n || cf.b.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidFunction("closed form needs a of length n and b of shape n x n".into()));
                }
                let finite = cf.c.is_finite() && cf.a.iter().chain(cf.b.iter().flatten()).all(|v| v.is_finite());
                if !finite {
                    return Err(Error::InvalidFunction("non-finite coefficient".into()));
                }
                Ok(())
            }
            PwLinear::Table(t) => validate_table(t),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(invalid("x", format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        Ok(match self {
            PwLinear::Closed(cf) => {
                let n = x.len();
                let mut s = cf.c;
                for i in 0..n {
                    s += cf.a[i] * x[i];
                    for j in i + 1..n {
                        s += cf.b[i][j] * (x[i] - x[j]).abs();
                    }
                }
                s
            }
            PwLinear::Table(t) => t.piece(&cell_of(x, 0.0))?.eval(x),
        })
    }

    /// The same function as a cell table over every weak ordering.
    pub fn to_table(&self) -> Result<PwLinear> {
        match self {
            PwLinear::Table(_) => Ok(self.clone()),
            PwLinear::Closed(cf) => {
                let n = cf.a.len();
                let pieces = WeakOrdering::all(n)
                    .into_iter()
                    .map(|w| {
                        let gradient = cf.cell_gradient(&w.ranks());
                        (w, CellPiece { gradient, offset: cf.c })
                    })
                    .collect();
                Ok(PwLinear::Table(CellTable { n, pieces }))
            }
        }
    }

    /// JSON of the closed form: `{"c": .., "a": [..], "b": [[..]]}`.
    pub fn to_json(&self) -> Result<String> {
        match self {
            PwLinear::Closed(cf) => Ok(serde_json::to_string(cf)?),
            PwLinear::Table(_) => Err(Error::InvalidFunction("only the closed form has a JSON encoding".into())),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cf: ClosedForm = serde_json::from_str(s)?;
        let f = PwLinear::Closed(cf);
        f.validate()?;
        Ok(f)
    }
}

/// Points spanning the cell `w`: its representative and, for each block,
/// the representative with that block and all later ones lifted by one.
fn cell_samples(w: &WeakOrdering) -> Vec<Vec<f64>> {
    let ranks = w.ranks();
    let m = w.blocks().len();
    let mut pts = vec![ranks.iter().map(|&r| 2.0 * r as f64).collect::<Vec<_>>()];
    for j in 0..m {
        pts.push(ranks.iter().map(|&r| 2.0 * r as f64 + if r >= j { 1.0 } else { 0.0 }).collect());
    }
    pts
}

fn validate_table(t: &CellTable) -> Result<()> {
    if t.n == 0 {
        return Err(Error::InvalidFunction("table of dimension 0".into()));
    }
    for (w, p) in &t.pieces {
        if w.n() != t.n || p.gradient.len() != t.n {
            return Err(Error::InvalidFunction(format!("piece {:?} has the wrong dimension", w.blocks())));
        }
    }
    let all = WeakOrdering::all(t.n);
    for w in &all {
        t.piece(w)?;
    }
    // Adjacent pairs: merging two consecutive blocks of a finer cell.
    for fine in &all {
        let b = fine.blocks();
        for j in 0..b.len().saturating_sub(1) {
            let mut blocks = b.to_vec();
            let next = blocks.remove(j + 1);
            blocks[j].extend(next);
            let coarse = WeakOrdering::new(blocks)?;
            let (pf, pc) = (t.piece(fine)?, t.piece(&coarse)?);
            for x in cell_samples(&coarse) {
                let (a, c) = (pf.eval(&x), pc.eval(&x));
                if (a - c).abs() > CONTINUITY_TOL * (1.0 + a.abs()) {
                    return Err(Error::InvalidFunction(format!(
                        "discontinuous across the facet {:?} of {:?}: {a} vs {c}",
                        coarse.blocks(),
                        fine.blocks()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// One-sided derivative along `v` with equality decided by `cell`.
fn gradient_in_cell(f: &PwLinear, cell: &WeakOrdering, v: &[f64]) -> Result<f64> {
    match f {
        PwLinear::Closed(cf) => {
            let rank = cell.ranks();
            let n = v.len();
            let mut s: f64 = cf.a.iter().zip(v).map(|(a, v)| a * v).sum();
            for i in 0..n {
                for j in i + 1..n {
                    let dv = v[i] - v[j];
                    let term = if rank[i] == rank[j] { dv.abs() } else { sign_usize(rank[i], rank[j]) * dv };
                    s += cf.b[i][j] * term;
                }
            }
            Ok(s)
        }
        PwLinear::Table(t) => {
            let entered = cell.refine_by(v);
            let p = t.piece(&entered)?;
            Ok(p.gradient.iter().zip(v).map(|(g, v)| g * v).sum())
        }
    }
}

/// `lim_{e -> 0+} (f(x + e v) - f(x)) / e`, computed from the cell entered
/// along `v` rather than by finite differences.
pub fn directional_gradient(f: &PwLinear, x: &[f64], v: &[f64]) -> Result<f64> {
    f.validate()?;
    if x.len() != f.dim() || v.len() != f.dim() {
        return Err(invalid("x/v", "dimension mismatch"));
    }
    gradient_in_cell(f, &cell_of(x, 0.0), v)
}

/// Parameters `theta(k:l)` for `0 <= k, l <= k_max`, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFamily {
    pub k_max: usize,
    /// Row-major, `values[k * (k_max + 1) + l] = theta(k:l)`.
    pub values: Vec<f64>,
}

impl ThetaFamily {
    pub fn zeros(k_max: usize) -> Self {
        Self { k_max, values: vec![0.0; (k_max + 1) * (k_max + 1)] }
    }

    pub fn get(&self, k: usize, l: usize) -> Option<f64> {
        (k <= self.k_max && l <= self.k_max).then(|| self.values[k * (self.k_max + 1) + l])
    }

    pub fn set(&mut self, k: usize, l: usize, v: f64) {
        assert!(k <= self.k_max && l <= self.k_max, "index out of range");
        self.values[k * (self.k_max + 1) + l] = v;
    }

    /// `theta(v)` for `v = v_{IJ}`: `theta(|I| : |J|)`.
    pub fn theta_of_vector(&self, v: &VVector) -> Result<f64> {
        let (k, l) = (v.i_set.len(), v.j_set.len());
        self.get(k, l).ok_or(Error::FamilyTooSmall { k_max: self.k_max, block: k + l })
    }

    /// Adds `delta` to `theta(n:0)` and `theta(0:n)` for every `n >= 1`.
    pub fn shifted_boundary(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for n in 1..=self.k_max {
            out.set(n, 0, self.get(n, 0).expect("in range") + delta);
            out.set(0, n, self.get(0, n).expect("in range") + delta);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ThetaFamily = serde_json::from_str(s)?;
        if f.values.len() != (f.k_max + 1) * (f.k_max + 1) {
            return Err(Error::Decode(format!("expected {} values", (f.k_max + 1) * (f.k_max + 1))));
        }
        Ok(f)
    }
}

/// `Σ_{v in V(x)} theta(v) ∇_v f(x)` with coordinates within `tol` treated as
/// equal. The two whole-block moves of a block `C` enter as
/// `(theta(n:0) - theta(0:n)) ∇_{1_C} f`, their one-sided gradients being
/// exact negatives of each other.
pub fn apply_generator(family: &ThetaFamily, f: &PwLinear, x: &[f64], tol: f64) -> Result<f64> {
    let n = f.dim();
    if x.len() != n {
        return Err(invalid("x", format!("expected {n} coordinates, got {}", x.len())));
    }
    let cell = cell_of(x, tol);
    let mut total = 0.0;
    let mut v = vec![0.0; n];
    for block in cell.blocks() {
        let m = block.len();
        if m > family.k_max {
            return Err(Error::FamilyTooSmall { k_max: family.k_max, block: m });
        }
        if m >= 64 {
            return Err(invalid("x", "block too large to enumerate"));
        }
        v.iter_mut().for_each(|e| *e = 0.0);
        for &c in block {
            v[c] = 1.0;
        }
        let whole = family.get(m, 0).expect("checked") - family.get(0, m).expect("checked");
        if whole != 0.0 {
            total += whole * gradient_in_cell(f, &cell, &v)?;
        }
        for mask in 1u64..(1u64 << m) - 1 {
            let k = mask.count_ones() as usize;
            let th = family.get(k, m - k).expect("checked");
            if th == 0.0 {
                continue;
            }
            for (pos, &c) in block.iter().enumerate() {
                v[c] = if mask >> pos & 1 == 1 { 1.0 } else { -1.0 };
            }
            total += th * gradient_in_cell(f, &cell, &v)?;
        }
        for &c in block {
            v[c] = 0.0;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub l: usize,
    /// Consistency: `theta(k:l) - theta(k+1:l) - theta(k:l+1)`; positivity: the value.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub level: usize,
    pub relations_checked: usize,
    /// False when some relation with `k + l <= level` needed an entry beyond `k_max`.
    pub complete: bool,
    pub consistency: Vec<Violation>,
    pub positivity: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn pass(&self) -> bool {
        self.complete && self.consistency.is_empty() && self.positivity.is_empty()
    }

    pub fn to_test_report(&self) -> TestReport {
        let bad = (self.consistency.len() + self.positivity.len()) as f64 + if self.complete { 0.0 } else { 1.0 };
        TestReport::new(
            bad,
            0.0,
            format!(
                "consistency and positivity for k+l <= {}: {} relations, {} consistency and {} positivity violations{}",
                self.level,
                self.relations_checked,
                self.consistency.len(),
                self.positivity.len(),
                if self.complete { "" } else { ", family too small for the level" }
            ),
        )
    }
}

/// Relative rounding budget of [`consistency_check`]. Boundary values are
/// integer multiples of `theta / 2` built by repeated subtraction; unless
/// `theta` has a short mantissa those multiples are rounded.
pub const CONSISTENCY_ROUNDING: f64 = 4.0 * f64::EPSILON;

/// Checks `theta(k:l) = theta(k+1:l) + theta(k:l+1)` for all `k + l <= level`
/// up to [`CONSISTENCY_ROUNDING`] relative to the magnitudes involved, and
/// `theta(k:l) >= 0` for `k, l >= 1`, `k + l <= level`. The consistency
/// relation at `(k, l)` reads entries `k + 1` and `l + 1`, so a complete check
/// needs `level < k_max`.
pub fn consistency_check(family: &ThetaFamily, level: usize) -> ConsistencyReport {
    consistency_check_within(family, level, CONSISTENCY_ROUNDING)
}

/// [`consistency_check`] with an explicit relative budget; `0.0` demands
/// exact float equality.
pub fn consistency_check_within(family: &ThetaFamily, level: usize, rel_tol: f64) -> ConsistencyReport {
    let mut rep = ConsistencyReport {
        level,
        relations_checked: 0,
        complete: true,
        consistency: Vec::new(),
        positivity: Vec::new(),
    };
    for k in 0..=level {
        for l in 0..=level - k {
            match (family.get(k, l), family.get(k + 1, l), family.get(k, l + 1)) {
                (Some(a), Some(b), Some(c)) => {
                    rep.relations_checked += 1;
                    let slack = rel_tol * (a.abs() + b.abs() + c.abs());
                    if a != b + c && (a - (b + c)).abs() > slack {
                        rep.consistency.push(Violation { k, l, amount: a - b - c });
                    }
                }
                _ => rep.complete = false,
            }
            if k >= 1 && l >= 1 {
                if let Some(v) = family.get(k, l) {
                    if !(v >= 0.0) {
                        rep.positivity.push(Violation { k, l, amount: v });
                    }
                }
            }
        }
    }
    rep
}

fn closed_form_of(f: &PwLinear) -> Result<&ClosedForm> {
    match f {
        PwLinear::Closed(cf) => Ok(cf),
        PwLinear::Table(_) => Err(Error::InvalidFunction(
            "the kappa representation needs the closed form (constant, linear and pairwise terms)".into(),
        )),
    }
}

/// `psi^k_t f(x) = Σ_{i != k} beta^k_i kappa_t(x_i - x_k)`, `k` 0-based.
///
/// On the region where all coordinates other than `k` keep their order, the
/// closed form is `Σ_{i != k} b_{ik} |x_i - x_k|` plus a linear function, so
/// `beta^k_i = b_{min(i,k), max(i,k)}`. Relabelling coordinates into
/// decreasing order permutes `b` with them, so the sum is the same at every
/// `x`, sorted or not.
pub fn psi_closed_form(f: &PwLinear, x: &[f64], k: usize, t: f64) -> Result<f64> {
    let cf = closed_form_of(f)?;
    let n = cf.a.len();
    if x.len() != n || k >= n {
        return Err(invalid("x/k", "dimension mismatch or k out of range"));
    }
    let mut s = 0.0;
    for i in 0..n {
        if i != k {
            s += cf.pair(i, k) * kappa(t, x[i] - x[k])?;
        }
    }
    Ok(s)
}

/// `psi_t f = Σ_k psi^k_t f`.
pub fn psi_total_closed_form(f: &PwLinear, x: &[f64], t: f64) -> Result<f64> {
    (0..f.dim()).map(|k| psi_closed_form(f, x, k, t)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiMonteCarloConfig {
    pub replicas: usize,
    pub sub_steps: usize,
    pub seed: u64,
}

/// Monte Carlo `E[f(Z(t)) - f(x)]` where coordinate `k` moves independently and
/// the others coalesce among themselves.
pub fn psi_monte_carlo(f: &PwLinear, x: &[f64], k: usize, t: f64, cfg: &PsiMonteCarloConfig) -> Result<EstimateWithError> {
    f.validate()?;
    if cfg.replicas == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    let f0 = f.eval(x)?;
    let mut s = Vec::with_capacity(cfg.replicas);
    let mut state = vec![0.0; x.len()];
    for r in 0..cfg.replicas {
        let b = sample_partial_coalescing(x, k, t, cfg.sub_steps, child_seed(cfg.seed, r as u64))?;
        b.state_into(b.grid.n_steps, &mut state);
        s.push(f.eval(&state)? - f0);
    }
    Ok(EstimateWithError::from_samples(&s))
}
