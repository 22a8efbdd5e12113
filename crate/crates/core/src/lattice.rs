//! The discrete model: i.i.d. arrows on the even sublattice, coalescing walks
//! traced through them, the resampling dynamics, and the exactly computable
//! discrete flow of kernels.
//!
//! Sites are `(k, n)` with `k + n` even; `n` is time. A window is inclusive in
//! both coordinates. Signs are stored one bit per site (1 for `+1`) in
//! row-major order: rows by increasing `n`, sites in a row by increasing `k`.

use crate::error::{invalid, Error, Result};
use crate::paths::io::{read_f64, read_u32, read_u64};
use crate::rng::{stream, streams};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub k_min: i64,
    pub k_max: i64,
    pub n_min: i64,
    pub n_max: i64,
}

impl Window {
    pub fn new(k_min: i64, k_max: i64, n_min: i64, n_max: i64) -> Result<Self> {
        let w = Self { k_min, k_max, n_min, n_max };
        if k_min > k_max || n_min > n_max || (k_min == k_max && n_min == n_max && (k_min + n_min) % 2 != 0) {
            return Err(Error::EmptyWindow);
        }
        Ok(w)
    }

    pub fn contains(&self, k: i64, n: i64) -> bool {
        (self.k_min..=self.k_max).contains(&k) && (self.n_min..=self.n_max).contains(&n)
    }

    fn first_k(&self, n: i64) -> i64 {
        if (self.k_min + n).rem_euclid(2) == 0 { self.k_min } else { self.k_min + 1 }
    }

    fn row_len(&self, n: i64) -> usize {
        let k0 = self.first_k(n);
        if k0 > self.k_max { 0 } else { ((self.k_max - k0) / 2 + 1) as usize }
    }

    pub fn n_sites(&self) -> usize {
        (self.n_min..=self.n_max).map(|n| self.row_len(n)).sum()
    }

    fn describe(&self) -> String {
        format!("k in [{}, {}], n in [{}, {}]", self.k_min, self.k_max, self.n_min, self.n_max)
    }
}

/// One sign per even site of a window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrowField {
    window: Window,
    seed_id: u64,
    row_offset: Vec<usize>,
    n_sites: usize,
    bits: Vec<u64>,
}

impl ArrowField {
    fn empty(window: Window, seed_id: u64) -> Self {
        let mut row_offset = Vec::with_capacity((window.n_max - window.n_min + 1) as usize);
        let mut acc = 0usize;
        for n in window.n_min..=window.n_max {
            row_offset.push(acc);
            acc += window.row_len(n);
        }
        Self { window, seed_id, row_offset, n_sites: acc, bits: vec![0; acc.div_ceil(64)] }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn seed_id(&self) -> u64 {
        self.seed_id
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn index(&self, k: i64, n: i64) -> Option<usize> {
        if !self.window.contains(k, n) || (k + n).rem_euclid(2) != 0 {
            return None;
        }
        let row = (n - self.window.n_min) as usize;
        Some(self.row_offset[row] + ((k - self.window.first_k(n)) / 2) as usize)
    }

    #[inline]
    fn bit(&self, idx: usize) -> bool {
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    /// `xi_{k,n}` or `None` outside the window or on an odd site.
    pub fn sign(&self, k: i64, n: i64) -> Option<i64> {
        self.index(k, n).map(|i| if self.bit(i) { 1 } else { -1 })
    }

    fn sign_or_exit(&self, k: i64, n: i64) -> Result<i64> {
        self.sign(k, n).ok_or_else(|| Error::WindowExit { k, n, window: self.window.describe() })
    }

    /// Signs in storage order.
    pub fn signs(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.n_sites).map(|i| if self.bit(i) { 1 } else { -1 })
    }

    /// Field with every sign `+1`, useful for tests.
    pub fn constant(window: Window, plus: bool) -> Result<Self> {
        let window = Window::new(window.k_min, window.k_max, window.n_min, window.n_max)?;
        let mut f = Self::empty(window, 0);
        if plus {
            f.bits.iter_mut().for_each(|w| *w = u64::MAX);
            f.clear_tail();
        }
        Ok(f)
    }

    /// Field from explicit signs in storage order.
    pub fn from_signs(window: Window, seed_id: u64, signs: &[i64]) -> Result<Self> {
        let mut f = Self::empty(window, seed_id);
        if signs.len() != f.n_sites {
            return Err(invalid("signs", format!("expected {} signs, got {}", f.n_sites, signs.len())));
        }
        for (i, &s) in signs.iter().enumerate() {
            match s {
                1 => f.bits[i / 64] |= 1 << (i % 64),
                -1 => {}
                _ => return Err(invalid("signs", format!("sign {s} is not +-1"))),
            }
        }
        Ok(f)
    }

    fn clear_tail(&mut self) {
        let r = self.n_sites % 64;
        if r != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    /// Fraction of sites where two fields on the same window agree.
    pub fn agreement(&self, other: &ArrowField) -> Result<f64> {
        if self.window != other.window {
            return Err(invalid("other", "windows differ"));
        }
        let differ: u64 = self.bits.iter().zip(&other.bits).map(|(a, b)| u64::from((a ^ b).count_ones())).sum();
        Ok(1.0 - differ as f64 / self.n_sites as f64)
    }
}

/// I.i.d. uniform signs on `window` from the arrow stream of `seed`.
pub fn sample_arrow_field(window: Window, seed: u64) -> Result<ArrowField> {
    let window = Window::new(window.k_min, window.k_max, window.n_min, window.n_max)?;
    let mut f = ArrowField::empty(window, seed);
    if f.n_sites == 0 {
        return Err(Error::EmptyWindow);
    }
    let mut rng = stream(seed, streams::ARROWS);
    for w in f.bits.iter_mut() {
        *w = rng.random();
    }
    f.clear_tail();
    Ok(f)
}

/// Probability that a rate-1 flip chain shows the same sign after time `u`.
pub fn agreement_probability(u: f64) -> f64 {
    0.5 * (1.0 + (-2.0 * u).exp())
}

/// Elapsed dynamics time and the resulting agreement probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleClock {
    pub u: f64,
    pub agreement: f64,
}

impl ResampleClock {
    pub fn new(u: f64) -> Result<Self> {
        if !(u >= 0.0) {
            return Err(invalid("u", format!("must be non-negative, got {u}")));
        }
        Ok(Self { u, agreement: agreement_probability(u) })
    }
}

/// The field after dynamics time `u`: each sign flips independently with
/// probability `(1 - exp(-2u))/2`.
pub fn evolve_arrow_field(field: &ArrowField, u: f64, seed: u64) -> Result<ArrowField> {
    let clock = ResampleClock::new(u)?;
    let mut out = field.clone();
    out.seed_id = seed;
    if u == 0.0 {
        return Ok(out);
    }
    let flip = 1.0 - clock.agreement;
    let mut rng = stream(seed, streams::DYNAMICS);
    for i in 0..out.n_sites {
        if rng.random::<f64>() < flip {
            out.bits[i / 64] ^= 1 << (i % 64);
        }
    }
    Ok(out)
}

/// Path `k(n), k(n+1), ..` following `k -> k + xi_{k,n}` for `n_steps` steps.
pub fn trace_walk(field: &ArrowField, start: (i64, i64), n_steps: usize) -> Result<Vec<i64>> {
    let (mut k, mut n) = start;
    let mut path = Vec::with_capacity(n_steps + 1);
    path.push(k);
    for _ in 0..n_steps {
        k += field.sign_or_exit(k, n)?;
        n += 1;
        path.push(k);
    }
    if !field.window.contains(k, n) {
        return Err(Error::WindowExit { k, n, window: field.window.describe() });
    }
    Ok(path)
}

/// A probability vector on `k_lo, k_lo + 2, ..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub k_lo: i64,
    pub probs: Vec<f64>,
}

impl KernelRow {
    pub fn get(&self, k: i64) -> f64 {
        let d = k - self.k_lo;
        if d < 0 || d % 2 != 0 {
            return 0.0;
        }
        self.probs.get((d / 2) as usize).copied().unwrap_or(0.0)
    }

    pub fn k_hi(&self) -> i64 {
        self.k_lo + 2 * (self.probs.len() as i64 - 1)
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(j, &p)| (self.k_lo + 2 * j as i64, p))
    }

    fn trimmed(mut self) -> Self {
        let first = self.probs.iter().position(|&p| p != 0.0).unwrap_or(0);
        let last = self.probs.iter().rposition(|&p| p != 0.0).unwrap_or(0);
        self.k_lo += 2 * first as i64;
        self.probs = self.probs[first..=last].to_vec();
        self
    }
}

/// Rows `n = m, m+1, ..` of the kernel started at `(k, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteKernel {
    pub start: (i64, i64),
    pub q: f64,
    pub field_seed: u64,
    pub rows: Vec<KernelRow>,
}

impl DiscreteKernel {
    pub fn last_row(&self) -> i64 {
        self.start.1 + self.rows.len() as i64 - 1
    }

    pub fn row(&self, n: i64) -> Option<&KernelRow> {
        let i = n - self.start.1;
        (i >= 0).then(|| self.rows.get(i as usize)).flatten()
    }

    /// Largest absolute entry difference over matching rows.
    pub fn max_abs_diff(&self, other: &DiscreteKernel) -> f64 {
        let mut d: f64 = if self.rows.len() == other.rows.len() { 0.0 } else { f64::INFINITY };
        for (a, b) in self.rows.iter().zip(&other.rows) {
            let lo = a.k_lo.min(b.k_lo);
            let hi = a.k_hi().max(b.k_hi());
            let mut k = lo;
            while k <= hi {
                d = d.max((a.get(k) - b.get(k)).abs());
                k += 2;
            }
        }
        d
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"EFDK")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&self.start.0.to_le_bytes())?;
        w.write_all(&self.start.1.to_le_bytes())?;
        w.write_all(&self.q.to_le_bytes())?;
        w.write_all(&self.field_seed.to_le_bytes())?;
        w.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        for r in &self.rows {
            w.write_all(&r.k_lo.to_le_bytes())?;
            w.write_all(&(r.probs.len() as u64).to_le_bytes())?;
            for p in &r.probs {
                w.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"EFDK" || read_u32(&mut r)? != 1 {
            return Err(Error::Decode("not a version-1 kernel".into()));
        }
        let k = read_u64(&mut r)? as i64;
        let m = read_u64(&mut r)? as i64;
        let q = read_f64(&mut r)?;
        let field_seed = read_u64(&mut r)?;
        let n_rows = read_u64(&mut r)? as usize;
        let mut rows = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let k_lo = read_u64(&mut r)? as i64;
            let len = read_u64(&mut r)? as usize;
            let probs = (0..len).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            rows.push(KernelRow { k_lo, probs });
        }
        Ok(Self { start: (k, m), q, field_seed, rows })
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&q) {
        return Err(invalid("q", format!("must lie in [1/2, 1], got {q}")));
    }
    Ok(())
}

/// One DP step from row `n`: mass at `k` sends `q` to `k + xi` and `1 - q` to `k - xi`.
fn kernel_step(field: &ArrowField, q: f64, row: &KernelRow, n: i64) -> Result<KernelRow> {
    let k_lo = row.k_lo - 1;
    let mut probs = vec![0.0; row.probs.len() + 1];
    for (j, &mass) in row.probs.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let k = row.k_lo + 2 * j as i64;
        let xi = field.sign_or_exit(k, n)?;
        // Index j is k - 1, index j + 1 is k + 1.
        let (up, down) = if xi > 0 { (q, 1.0 - q) } else { (1.0 - q, q) };
        probs[j + 1] += mass * up;
        probs[j] += mass * down;
    }
    let out = KernelRow { k_lo, probs }.trimmed();
    for (k, p) in out.support() {
        if p != 0.0 && !field.window.contains(k, n + 1) {
            return Err(Error::WindowExit { k, n: n + 1, window: field.window.describe() });
        }
    }
    Ok(out)
}

/// The discrete kernel `K_{m, m + n_rows}(k, .)` of the field at agreement `q`.
pub fn exact_kernel(field: &ArrowField, q: f64, start: (i64, i64), n_rows: usize) -> Result<DiscreteKernel> {
    check_q(q)?;
    let (k, m) = start;
    field.sign_or_exit(k, m)?;
    let mut rows = Vec::with_capacity(n_rows + 1);
    rows.push(KernelRow { k_lo: k, probs: vec![1.0] });
    for i in 0..n_rows {
        let next = kernel_step(field, q, &rows[i], m + i as i64)?;
        rows.push(next);
    }
    Ok(DiscreteKernel { start, q, field_seed: field.seed_id, rows })
}

/// Extends `kernel` (rows `m..=t`) to row `n` by mixing the kernels started
/// from each support point of row `t` with its weight.
pub fn kernel_compose(kernel: &DiscreteKernel, field: &ArrowField, q: f64, n: i64) -> Result<DiscreteKernel> {
    check_q(q)?;
    let t = kernel.last_row();
    if n < t || q != kernel.q || field.seed_id != kernel.field_seed {
        return Err(Error::RowMismatch { kernel_row: t, requested: n });
    }
    let steps = (n - t) as usize;
    let last = &kernel.rows[kernel.rows.len() - 1];
    let mut acc: Vec<KernelRow> = (1..=steps)
        .map(|s| KernelRow { k_lo: last.k_lo - s as i64, probs: vec![0.0; last.probs.len() + s] })
        .collect();
    for (j, w) in last.support() {
        if w == 0.0 {
            continue;
        }
        let sub = exact_kernel(field, q, (j, t), steps)?;
        for (s, row) in sub.rows.iter().skip(1).enumerate() {
            let dst = &mut acc[s];
            for (k, p) in row.support() {
                dst.probs[((k - dst.k_lo) / 2) as usize] += w * p;
            }
        }
    }
    let mut rows = kernel.rows.clone();
    rows.extend(acc.into_iter().map(KernelRow::trimmed));
    Ok(DiscreteKernel { start: kernel.start, q, field_seed: kernel.field_seed, rows })
}

/// `N` walkers from `starts`, all at row `starts[0].1`, moving conditionally
/// independently given the field: each step goes to `k + xi` with probability
/// `q`, otherwise to `k - xi`.
pub fn discrete_npoint_sample(
    field: &ArrowField,
    q: f64,
    starts: &[(i64, i64)],
    n_steps: usize,
    seed: u64,
) -> Result<Vec<Vec<i64>>> {
    check_q(q)?;
    if starts.is_empty() {
        return Err(invalid("starts", "need at least one walker"));
    }
    let n0 = starts[0].1;
    if starts.iter().any(|s| s.1 != n0) {
        return Err(invalid("starts", "all walkers must start on the same row"));
    }
    let mut rng = stream(seed, streams::WALKERS);
    let mut paths: Vec<Vec<i64>> = starts.iter().map(|s| vec![s.0]).collect();
    for step in 0..n_steps {
        let n = n0 + step as i64;
        for p in paths.iter_mut() {
            let k = *p.last().expect("nonempty");
            let xi = field.sign_or_exit(k, n)?;
            let follow = q == 1.0 || rng.random::<f64>() < q;
            p.push(if follow { k + xi } else { k - xi });
        }
    }
    Ok(paths)
}

/// Time scaled by `eps`, space by `sqrt(eps)`: `(eps (n0 + j), sqrt(eps) k_j)`.
pub fn diffusive_rescale(path: &[i64], n0: i64, eps: f64) -> Result<Vec<(f64, f64)>> {
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("must be positive, got {eps}")));
    }
    let s = eps.sqrt();
    Ok(path.iter().enumerate().map(|(j, &k)| (eps * (n0 + j as i64) as f64, s * k as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCompositionReport {
    pub sites: usize,
    pub u1: f64,
    pub u2: f64,
    /// Agreement of the twice-evolved field with the original.
    pub agreement: f64,
    pub expected: f64,
    /// `|agreement - expected| / sd`, `sd = sqrt(expected (1 - expected) / sites)`.
    pub z: f64,
    /// `|q(u1) q(u2) + (1 - q(u1))(1 - q(u2)) - q(u1 + u2)|`.
    pub semigroup_residual: f64,
    /// Agreement with the original among sites the first step flipped, and its
    /// standardised distance from `1 - q(u2)`.
    pub flipped_agreement: f64,
    pub flipped_z: f64,
}

impl MarkovCompositionReport {
    pub fn pass(&self, z_max: f64) -> bool {
        self.z <= z_max && self.flipped_z <= z_max && self.semigroup_residual < 1e-14
    }
}

/// Evolves a fresh field by `u1`, then independently by `u2`, and compares
/// with the one-step prediction at `u1 + u2`.
pub fn markov_composition_check(window: Window, u1: f64, u2: f64, seed: u64) -> Result<MarkovCompositionReport> {
    let f0 = sample_arrow_field(window, seed)?;
    let f1 = evolve_arrow_field(&f0, u1, crate::rng::child_seed(seed, 1))?;
    let f2 = evolve_arrow_field(&f1, u2, crate::rng::child_seed(seed, 2))?;
    let n = f0.n_sites;
    let agreement = f0.agreement(&f2)?;
    let (q1, q2) = (agreement_probability(u1), agreement_probability(u2));
    let expected = agreement_probability(u1 + u2);
    let sd = (expected * (1.0 - expected) / n as f64).sqrt();
    let z = if sd > 0.0 { (agreement - expected).abs() / sd } else if agreement == expected { 0.0 } else { f64::INFINITY };
    let mut flipped = 0usize;
    let mut flipped_agree = 0usize;
    for i in 0..n {
        if f0.bit(i) != f1.bit(i) {
            flipped += 1;
            if f0.bit(i) == f2.bit(i) {
                flipped_agree += 1;
            }
        }
    }
    let (flipped_agreement, flipped_z) = if flipped == 0 {
        (f64::NAN, 0.0)
    } else {
        let a = flipped_agree as f64 / flipped as f64;
        let e = 1.0 - q2;
        let s = (e * (1.0 - e) / flipped as f64).sqrt();
        (a, if s > 0.0 { (a - e).abs() / s } else if a == e { 0.0 } else { f64::INFINITY })
    };
    Ok(MarkovCompositionReport {
        sites: n,
        u1,
        u2,
        agreement,
        expected,
        z,
        semigroup_residual: (q1 * q2 + (1.0 - q1) * (1.0 - q2) - expected).abs(),
        flipped_agreement,
        flipped_z,
    })
}

impl ArrowField {
    /// Binary layout (little-endian): `b"EFAF" | version u32 = 1 | k_min, k_max,
    /// n_min, n_max i64 | seed_id u64 | word count u64 | words u64`, bit `i` of
    /// the stream being site `i` in storage order, 1 for `+1`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"EFAF")?;
        w.write_all(&1u32.to_le_bytes())?;
        for v in [self.window.k_min, self.window.k_max, self.window.n_min, self.window.n_max] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.seed_id.to_le_bytes())?;
        w.write_all(&(self.bits.len() as u64).to_le_bytes())?;
        for b in &self.bits {
            w.write_all(&b.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"EFAF" || read_u32(&mut r)? != 1 {
            return Err(Error::Decode("not a version-1 arrow field".into()));
        }
        let mut c = [0i64; 4];
        for v in c.iter_mut() {
            *v = read_u64(&mut r)? as i64;
        }
        let window = Window::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::Decode(e.to_string()))?;
        let seed_id = read_u64(&mut r)?;
        let mut f = ArrowField::empty(window, seed_id);
        let words = read_u64(&mut r)? as usize;
        if words != f.bits.len() {
            return Err(Error::Decode(format!("expected {} words, got {words}", f.bits.len())));
        }
        for b in f.bits.iter_mut() {
            *b = read_u64(&mut r)?;
        }
        let before = f.bits.clone();
        f.clear_tail();
        if before != f.bits {
            return Err(Error::Decode("padding bits set".into()));
        }
        Ok(f)
    }

    /// Debug JSON: window, seed and one `+`/`-` string per row.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<FieldRowJson> = (self.window.n_min..=self.window.n_max)
            .map(|n| {
                let k_first = self.window.first_k(n);
                let signs = (0..self.window.row_len(n))
                    .map(|j| if self.sign(k_first + 2 * j as i64, n) == Some(1) { '+' } else { '-' })
                    .collect();
                FieldRowJson { n, k_first, signs }
            })
            .collect();
        Ok(serde_json::to_string(&FieldJson { window: self.window, seed_id: self.seed_id, rows })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: FieldJson = serde_json::from_str(s)?;
        let window = Window::new(j.window.k_min, j.window.k_max, j.window.n_min, j.window.n_max)?;
        let mut signs = Vec::with_capacity(window.n_sites());
        for row in &j.rows {
            for c in row.signs.chars() {
                signs.push(match c {
                    '+' => 1,
                    '-' => -1,
                    _ => return Err(Error::Decode(format!("bad sign character {c:?}"))),
                });
            }
        }
        ArrowField::from_signs(window, j.seed_id, &signs)
    }
}

#[derive(Serialize, Deserialize)]
struct FieldRowJson {
    n: i64,
    k_first: i64,
    signs: String,
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    window: Window,
    seed_id: u64,
    rows: Vec<FieldRowJson>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_normal;

    fn win(k: i64, n: i64) -> Window {
        Window::new(-k, k, 0, n).unwrap()
    }

    fn binomial_row(n: usize) -> Vec<f64> {
        // Pascal's triangle scaled by 2^-n, built by repeated halving.
        let mut row = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; row.len() + 1];
            for (j, &p) in row.iter().enumerate() {
                next[j] += 0.5 * p;
                next[j + 1] += 0.5 * p;
            }
            row = next;
        }
        row
    }

    #[test]
    fn window_site_counts() {
        let w = Window::new(0, 3, 0, 1).unwrap();
        // Row 0: k = 0, 2; row 1: k = 1, 3.
        assert_eq!(w.n_sites(), 4);
        assert!(Window::new(1, 0, 0, 0).is_err());
        assert!(Window::new(1, 1, 0, 0).is_err());
        assert!(sample_arrow_field(Window { k_min: 0, k_max: -1, n_min: 0, n_max: 0 }, 1).is_err());
    }

    #[test]
    fn field_is_deterministic_and_balanced() {
        let w = Window::new(-1000, 999, 0, 999).unwrap();
        let a = sample_arrow_field(w, 5).unwrap();
        assert_eq!(a, sample_arrow_field(w, 5).unwrap());
        assert_eq!(a.n_sites(), 1_000_000);
        let mean = a.signs().sum::<i64>() as f64 / a.n_sites() as f64;
        assert!(mean.abs() < 4.0 / 1000.0, "{mean}");
        // A field from another seed is uncorrelated with this one.
        let b = sample_arrow_field(w, 6).unwrap();
        let corr = a.signs().zip(b.signs()).map(|(x, y)| x * y).sum::<i64>() as f64 / a.n_sites() as f64;
        assert!(corr.abs() < 4.0 / 1000.0, "{corr}");
    }

    #[test]
    fn evolution_agreement() {
        let w = Window::new(-1000, 999, 0, 999).unwrap();
        let f = sample_arrow_field(w, 1).unwrap();
        assert_eq!(evolve_arrow_field(&f, 0.0, 2).unwrap().agreement(&f).unwrap(), 1.0);
        let n = f.n_sites() as f64;
        for u in [0.5, 50.0] {
            let a = evolve_arrow_field(&f, u, 3).unwrap().agreement(&f).unwrap();
            let e = agreement_probability(u);
            assert!((a - e).abs() < 4.0 * (e * (1.0 - e) / n).sqrt(), "u={u}: {a} vs {e}");
        }
        assert!(evolve_arrow_field(&f, -1.0, 2).is_err());
        assert!(ResampleClock::new(0.3).unwrap().agreement < 1.0);
    }

    #[test]
    fn walks_follow_arrows_and_coalesce() {
        let w = win(50, 50);
        let plus = ArrowField::constant(w, true).unwrap();
        assert_eq!(trace_walk(&plus, (0, 0), 5).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        let f = sample_arrow_field(w, 11).unwrap();
        let a = trace_walk(&f, (-4, 0), 40).unwrap();
        let b = trace_walk(&f, (4, 0), 40).unwrap();
        if let Some(i) = (0..=40).find(|&i| a[i] == b[i]) {
            assert_eq!(a[i..], b[i..]);
        }
        assert!(matches!(trace_walk(&plus, (45, 0), 10), Err(Error::WindowExit { .. })));
    }

    #[test]
    fn walk_displacement_variance() {
        let n = 400usize;
        let reps = 10_000;
        let w = win(120, n as i64);
        let mut s2 = 0.0;
        for r in 0..reps {
            let f = sample_arrow_field(w, 1000 + r).unwrap();
            let p = trace_walk(&f, (0, 0), n).unwrap();
            s2 += (p[n] * p[n]) as f64;
        }
        let var = s2 / reps as f64;
        // sd of the sample second moment is n sqrt(2/reps) ~ 1.4% of n.
        assert!((var / n as f64 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn kernel_examples() {
        let w = win(20, 20);
        let f = sample_arrow_field(w, 3).unwrap();
        let k1 = exact_kernel(&f, 1.0, (0, 0), 15).unwrap();
        let walk = trace_walk(&f, (0, 0), 15).unwrap();
        for (row, &k) in k1.rows.iter().zip(&walk) {
            assert_eq!(row.probs, vec![1.0]);
            assert_eq!(row.k_lo, k);
        }
        let plus = ArrowField::constant(w, true).unwrap();
        let k = exact_kernel(&plus, 0.8, (0, 0), 1).unwrap();
        assert_eq!(k.rows[1].get(1), 0.8);
        assert!((k.rows[1].get(-1) - 0.2).abs() < 1e-16);
        let half = exact_kernel(&f, 0.5, (0, 0), 15).unwrap();
        for (n, row) in half.rows.iter().enumerate() {
            assert_eq!(row.k_lo, -(n as i64));
            assert_eq!(row.probs, binomial_row(n));
        }
        assert!(exact_kernel(&f, 0.4, (0, 0), 2).is_err());
        assert!(exact_kernel(&f, 0.7, (0, 0), 25).is_err());
    }

    #[test]
    fn kernel_rows_are_probability_vectors() {
        let w = win(60, 60);
        for seed in 0..5 {
            let f = sample_arrow_field(w, seed).unwrap();
            let k = exact_kernel(&f, 0.7, (0, 0), 50).unwrap();
            for (n, row) in k.rows.iter().enumerate() {
                let s: f64 = row.probs.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(row.k_lo >= -(n as i64) && row.k_hi() <= n as i64);
                assert_eq!((row.k_lo + n as i64).rem_euclid(2), 0);
            }
        }
    }

    #[test]
    fn composition_matches_direct_dp() {
        let w = win(30, 30);
        for seed in 0..10 {
            let f = sample_arrow_field(w, seed).unwrap();
            for q in [0.6, 0.9, 1.0] {
                let direct = exact_kernel(&f, q, (0, 0), 10).unwrap();
                let first = exact_kernel(&f, q, (0, 0), 5).unwrap();
                let composed = kernel_compose(&first, &f, q, 10).unwrap();
                assert!(composed.max_abs_diff(&direct) <= 1e-12);
                let same = kernel_compose(&first, &f, q, 5).unwrap();
                assert_eq!(same, first);
            }
        }
        let f = sample_arrow_field(w, 0).unwrap();
        let k = exact_kernel(&f, 0.6, (0, 0), 5).unwrap();
        assert!(matches!(kernel_compose(&k, &f, 0.6, 4), Err(Error::RowMismatch { .. })));
    }

    #[test]
    fn npoint_degenerate_cases() {
        let w = win(40, 40);
        let f = sample_arrow_field(w, 9).unwrap();
        let paths = discrete_npoint_sample(&f, 1.0, &[(0, 0), (2, 0), (0, 0)], 30, 1).unwrap();
        assert_eq!(paths[0], trace_walk(&f, (0, 0), 30).unwrap());
        assert_eq!(paths[1], trace_walk(&f, (2, 0), 30).unwrap());
        assert_eq!(paths[0], paths[2]);
        assert!(discrete_npoint_sample(&f, 1.0, &[(0, 0), (1, 1)], 3, 1).is_err());
    }

    #[test]
    fn npoint_meeting_probability_matches_kernel_products() {
        // P(two walkers from 0 sit together at row n) = E_field Σ_k K(0,k)^2.
        let w = win(40, 20);
        let n = 12usize;
        let q = 0.8;
        let reps = 4_000u64;
        let mut hits = 0.0;
        let mut kernel_sum = 0.0;
        for r in 0..reps {
            let f = sample_arrow_field(w, 7_000 + r).unwrap();
            let p = discrete_npoint_sample(&f, q, &[(0, 0), (0, 0)], n, r).unwrap();
            if p[0][n] == p[1][n] {
                hits += 1.0;
            }
            let k = exact_kernel(&f, q, (0, 0), n).unwrap();
            kernel_sum += k.rows[n].probs.iter().map(|p| p * p).sum::<f64>();
        }
        let (ph, pk) = (hits / reps as f64, kernel_sum / reps as f64);
        let sd = (pk * (1.0 - pk) / reps as f64).sqrt();
        assert!((ph - pk).abs() < 4.0 * sd * 2f64.sqrt(), "{ph} vs {pk}");
    }

    #[test]
    fn rescaling() {
        let p = vec![0, 1, 2, 3, 4];
        let id = diffusive_rescale(&p, 0, 1.0).unwrap();
        assert_eq!(id[3], (3.0, 3.0));
        let r = diffusive_rescale(&p, 0, 0.25).unwrap();
        assert_eq!(r[4], (1.0, 2.0));
        assert!(diffusive_rescale(&p, 0, 0.0).is_err());
    }

    #[test]
    fn rescaled_walks_are_approximately_normal() {
        let n = 2_500usize;
        let w = Window::new(-300, 300, 0, n as i64).unwrap();
        let ends: Vec<f64> = (0..2_000u64)
            .map(|r| {
                let f = sample_arrow_field(w, r).unwrap();
                let p = trace_walk(&f, (0, 0), n).unwrap();
                // Spread the lattice value uniformly over its cell of width 2.
                let jitter = 2.0 * (rand::Rng::random::<f64>(&mut stream(r, streams::ESTIMATOR)) - 0.5);
                diffusive_rescale(&p, 0, 1.0 / n as f64).unwrap()[n].1 + jitter / (n as f64).sqrt()
            })
            .collect();
        assert!(ks_normal(&ends, 0.0, 1.0, 0.01).unwrap().pass);
    }

    #[test]
    fn markov_composition() {
        let w = Window::new(-1000, 999, 0, 999).unwrap();
        let rep = markov_composition_check(w, 0.25, 0.25, 4).unwrap();
        assert!(rep.pass(4.0), "{rep:?}");
        assert!((rep.expected - agreement_probability(0.5)).abs() < 1e-15);
        let rep = markov_composition_check(w, 0.3, 0.0, 4).unwrap();
        assert!(rep.pass(4.0));
        let rep = markov_composition_check(w, 10.0, 10.0, 4).unwrap();
        assert!((rep.agreement - 0.5).abs() < 0.005);
    }

    #[test]
    fn codecs_round_trip() {
        let w = Window::new(-7, 9, 2, 11).unwrap();
        let f = sample_arrow_field(w, 17).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(ArrowField::read_binary(buf.as_slice()).unwrap(), f);
        assert_eq!(ArrowField::from_json(&f.to_json().unwrap()).unwrap(), f);
        let k = exact_kernel(&f, 0.75, (1, 3), 6).unwrap();
        let mut kb = Vec::new();
        k.write_binary(&mut kb).unwrap();
        assert_eq!(DiscreteKernel::read_binary(kb.as_slice()).unwrap(), k);
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<DiscreteKernel>(&s).unwrap(), k);
    }
}
