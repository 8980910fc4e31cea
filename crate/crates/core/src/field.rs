//! Prime-field arithmetic and the vector/matrix operations behind the affine
//! encoders.
//!
//! Vectors over GF(p) of length `n` are identified with integers in
//! `[0, p^n)` by reading the entries as base-`p` digits, first entry most
//! significant. Integer order is therefore lexicographic order on sequences,
//! which the decoder's lexicographic tie rule relies on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on the number of states any exhaustive enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

/// Upper bound on exhaustive enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationCap(pub u64);

impl Default for EnumerationCap {
    fn default() -> Self {
        EnumerationCap(DEFAULT_ENUMERATION_CAP)
    }
}

impl EnumerationCap {
    /// Returns `base^exp` when it fits under the cap.
    pub fn check_power(&self, what: &str, base: u64, exp: u64) -> Result<u64> {
        let size = (base as f64).powf(exp as f64);
        match checked_pow(base, exp) {
            Some(v) if v <= self.0 => Ok(v),
            _ => Err(Error::CapExceeded {
                what: what.to_string(),
                size,
                cap: self.0,
            }),
        }
    }

    pub fn check(&self, what: &str, size: f64) -> Result<()> {
        if size <= self.0 as f64 {
            Ok(())
        } else {
            Err(Error::CapExceeded {
                what: what.to_string(),
                size,
                cap: self.0,
            })
        }
    }
}

pub(crate) fn checked_pow(base: u64, exp: u64) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Independent RNG stream `stream` derived from `seed`.
///
/// Workers never share a generator; each one asks for its own stream so the
/// result of a parallel run does not depend on scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= p as u64 {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// A prime field GF(p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FieldSpec {
    modulus: u32,
}

impl TryFrom<u32> for FieldSpec {
    type Error = Error;
    fn try_from(p: u32) -> Result<Self> {
        FieldSpec::new(p)
    }
}

impl From<FieldSpec> for u32 {
    fn from(f: FieldSpec) -> u32 {
        f.modulus
    }
}

impl FieldSpec {
    pub fn new(modulus: u32) -> Result<Self> {
        if !is_prime(modulus) {
            return Err(Error::usage(format!("field modulus {modulus} is not prime")));
        }
        Ok(FieldSpec { modulus })
    }

    pub fn binary() -> Self {
        FieldSpec { modulus: 2 }
    }

    #[inline]
    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.modulus as usize
    }

    /// `ln |X|`.
    pub fn ln_size(&self) -> f64 {
        (self.modulus as f64).ln()
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.modulus as u64) as u32
    }

    /// Number of vectors of length `len`, if it fits in a `u64`.
    pub fn count(&self, len: usize) -> Option<u64> {
        checked_pow(self.modulus as u64, len as u64)
    }
}

/// A row vector over GF(p).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldVector {
    spec: FieldSpec,
    entries: Vec<u32>,
}

impl FieldVector {
    pub fn new(spec: FieldSpec, entries: Vec<u32>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|&&e| e >= spec.modulus) {
            return Err(Error::usage(format!(
                "entry {bad} is not an element of GF({})",
                spec.modulus
            )));
        }
        Ok(FieldVector { spec, entries })
    }

    pub fn zeros(spec: FieldSpec, len: usize) -> Self {
        FieldVector {
            spec,
            entries: vec![0; len],
        }
    }

    /// Inverse of [`FieldVector::index`].
    pub fn from_index(spec: FieldSpec, len: usize, mut index: u64) -> Self {
        let p = spec.modulus as u64;
        let mut entries = vec![0u32; len];
        for e in entries.iter_mut().rev() {
            *e = (index % p) as u32;
            index /= p;
        }
        FieldVector { spec, entries }
    }

    /// Position of this vector in lexicographic order.
    pub fn index(&self) -> u64 {
        digits_to_index(self.spec, &self.entries)
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0)
    }

    fn check_compatible(&self, other: &FieldVector) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::usage("vectors live in different fields"));
        }
        if self.len() != other.len() {
            return Err(Error::usage(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &FieldVector) -> Result<FieldVector> {
        self.check_compatible(other)?;
        let spec = self.spec;
        Ok(FieldVector {
            spec,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| spec.add(a, b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &FieldVector) -> Result<FieldVector> {
        self.check_compatible(other)?;
        let spec = self.spec;
        Ok(FieldVector {
            spec,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| spec.sub(a, b))
                .collect(),
        })
    }
}

pub(crate) fn digits_to_index(spec: FieldSpec, digits: &[u32]) -> u64 {
    let p = spec.modulus as u64;
    digits.iter().fold(0u64, |acc, &d| acc * p + d as u64)
}

pub(crate) fn index_to_digits(spec: FieldSpec, mut index: u64, out: &mut [u32]) {
    let p = spec.modulus as u64;
    for e in out.iter_mut().rev() {
        *e = (index % p) as u32;
        index /= p;
    }
}

/// Componentwise `a ⊕ b`.
pub fn field_add(a: &FieldVector, b: &FieldVector) -> Result<FieldVector> {
    a.add(b)
}

/// Componentwise `a ⊖ b = a ⊕ (−b)`.
pub fn field_sub(a: &FieldVector, b: &FieldVector) -> Result<FieldVector> {
    a.sub(b)
}

/// An `rows × cols` matrix over GF(p), stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldMatrix {
    spec: FieldSpec,
    rows: usize,
    cols: usize,
    entries: Vec<u32>,
}

impl FieldMatrix {
    pub fn new(spec: FieldSpec, rows: usize, cols: usize, entries: Vec<u32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::usage("matrix dimensions must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(Error::usage(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|&&e| e >= spec.modulus) {
            return Err(Error::usage(format!(
                "matrix entry {bad} is not an element of GF({})",
                spec.modulus
            )));
        }
        Ok(FieldMatrix {
            spec,
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(spec: FieldSpec, rows: &[Vec<u32>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::usage("ragged matrix rows"));
        }
        FieldMatrix::new(spec, r, c, rows.concat())
    }

    pub fn zeros(spec: FieldSpec, rows: usize, cols: usize) -> Result<Self> {
        FieldMatrix::new(spec, rows, cols, vec![0; rows * cols])
    }

    pub fn identity(spec: FieldSpec, n: usize) -> Result<Self> {
        let mut entries = vec![0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1;
        }
        FieldMatrix::new(spec, n, n, entries)
    }

    /// The all-ones matrix: with one column this is the parity check map.
    pub fn ones(spec: FieldSpec, rows: usize, cols: usize) -> Result<Self> {
        FieldMatrix::new(spec, rows, cols, vec![1; rows * cols])
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    /// `x A` on raw digits, without validation.
    pub(crate) fn apply_raw(&self, x: &[u32], out: &mut [u32]) {
        let p = self.spec.modulus as u64;
        out.iter_mut().for_each(|o| *o = 0);
        let mut acc = vec![0u64; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0 {
                continue;
            }
            for (a, &e) in acc.iter_mut().zip(self.row(i)) {
                *a += xi as u64 * e as u64;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = (a % p) as u32;
        }
    }
}

/// Row-vector times matrix over GF(p): `x A`.
pub fn mat_apply(x: &FieldVector, a: &FieldMatrix) -> Result<FieldVector> {
    if x.spec != a.spec {
        return Err(Error::usage("vector and matrix live in different fields"));
    }
    if x.len() != a.rows {
        return Err(Error::usage(format!(
            "vector of length {} cannot multiply a {}x{} matrix",
            x.len(),
            a.rows,
            a.cols
        )));
    }
    let mut out = vec![0u32; a.cols];
    a.apply_raw(&x.entries, &mut out);
    Ok(FieldVector {
        spec: a.spec,
        entries: out,
    })
}

/// Draws `A` (row-major) and then `b` with i.i.d. uniform entries.
pub fn random_affine<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    spec: FieldSpec,
    rng: &mut R,
) -> Result<(FieldMatrix, FieldVector)> {
    if n == 0 || m == 0 {
        return Err(Error::usage("random_affine needs n, m >= 1"));
    }
    let p = spec.modulus;
    let a: Vec<u32> = (0..n * m).map(|_| rng.gen_range(0..p)).collect();
    let b: Vec<u32> = (0..m).map(|_| rng.gen_range(0..p)).collect();
    Ok((
        FieldMatrix::new(spec, n, m, a)?,
        FieldVector { spec, entries: b },
    ))
}

/// The full ensemble of affine maps `k ↦ kA ⊕ b` with `A` of shape `n × m`.
#[derive(Debug, Clone, Copy)]
pub struct AffineEnsemble {
    spec: FieldSpec,
    n: usize,
    m: usize,
    size: u64,
}

/// Enumerates every `(A, b)` pair exactly once, refusing when `p^(nm+m)`
/// exceeds the cap.
pub fn exhaust_affine(
    n: usize,
    m: usize,
    spec: FieldSpec,
    cap: EnumerationCap,
) -> Result<AffineEnsemble> {
    if n == 0 || m == 0 {
        return Err(Error::usage("exhaust_affine needs n, m >= 1"));
    }
    let size = cap.check_power("affine ensemble", spec.modulus as u64, (n * m + m) as u64)?;
    Ok(AffineEnsemble { spec, n, m, size })
}

impl AffineEnsemble {
    pub fn len(&self) -> u64 {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// The `index`-th member: the first `nm` digits are `A` row-major, the
    /// last `m` digits are `b`.
    pub fn get(&self, index: u64) -> (FieldMatrix, FieldVector) {
        let nm = self.n * self.m;
        let mut digits = vec![0u32; nm + self.m];
        index_to_digits(self.spec, index, &mut digits);
        let b = digits.split_off(nm);
        (
            FieldMatrix {
                spec: self.spec,
                rows: self.n,
                cols: self.m,
                entries: digits,
            },
            FieldVector {
                spec: self.spec,
                entries: b,
            },
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (FieldMatrix, FieldVector)> + '_ {
        (0..self.size).map(move |i| self.get(i))
    }
}

/// All `x` with `x A = target`, in lexicographic order.
pub fn coset_preimages(
    a: &FieldMatrix,
    target: &FieldVector,
    cap: EnumerationCap,
) -> Result<Vec<FieldVector>> {
    if target.spec != a.spec || target.len() != a.cols {
        return Err(Error::usage("target does not match the matrix codomain"));
    }
    let spec = a.spec;
    let total = cap.check_power("coset enumeration", spec.modulus as u64, a.rows as u64)?;
    let mut x = vec![0u32; a.rows];
    let mut img = vec![0u32; a.cols];
    let mut out = Vec::new();
    for idx in 0..total {
        index_to_digits(spec, idx, &mut x);
        a.apply_raw(&x, &mut img);
        if img == target.entries {
            out.push(FieldVector {
                spec,
                entries: x.clone(),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exhaustive ensemble counts
// ---------------------------------------------------------------------------

enum Step {
    /// The current assignment is complete and should be tallied.
    Visit,
    /// Digit `d` was incremented by 1 (mod p).
    Bump(usize),
}

/// Walks every assignment of `digits` values in GF(p) in odometer order.
/// Every digit change adds exactly 1 (mod p) to the changed digit, so callers
/// can maintain images incrementally instead of recomputing them.
fn odometer<F: FnMut(Step)>(spec: FieldSpec, digits: usize, mut f: F) {
    let p = spec.modulus;
    let mut state = vec![0u32; digits];
    loop {
        f(Step::Visit);
        let mut d = 0;
        loop {
            if d == digits {
                return;
            }
            state[d] += 1;
            f(Step::Bump(d));
            if state[d] == p {
                state[d] = 0;
                d += 1;
            } else {
                break;
            }
        }
    }
}

/// Running image `s A ⊕ b` of one input under the enumerated ensemble.
struct RunningImage {
    coeffs: Vec<u32>,
    img: Vec<u32>,
    code: u64,
}

impl RunningImage {
    fn new(coeffs: &[u32], m: usize) -> Self {
        RunningImage {
            coeffs: coeffs.to_vec(),
            img: vec![0; m],
            code: 0,
        }
    }

    /// Adds `c` to image coordinate `col`.
    #[inline]
    fn bump(&mut self, spec: FieldSpec, col: usize, c: u32, weights: &[u64]) {
        if c == 0 {
            return;
        }
        let old = self.img[col];
        let new = spec.add(old, c);
        self.img[col] = new;
        self.code = self.code + new as u64 * weights[col] - old as u64 * weights[col];
    }

    /// Applies a unit change of ensemble digit `digit` (A row-major, then b).
    #[inline]
    fn apply(&mut self, spec: FieldSpec, n: usize, m: usize, digit: usize, weights: &[u64]) {
        if digit < n * m {
            let (row, col) = (digit / m, digit % m);
            let c = self.coeffs[row];
            self.bump(spec, col, c, weights);
        } else {
            self.bump(spec, digit - n * m, 1, weights);
        }
    }
}

fn code_weights(spec: FieldSpec, m: usize) -> Vec<u64> {
    let p = spec.modulus as u64;
    let mut w = vec![1u64; m];
    for j in 1..m {
        w[j] = w[j - 1] * p;
    }
    w
}

/// For each `d`, the number of matrices `A` (out of `p^(nm)`) with `d A = 0`,
/// counted by enumerating every matrix.
pub fn count_linear_collisions(
    spec: FieldSpec,
    n: usize,
    m: usize,
    diffs: &[FieldVector],
    cap: EnumerationCap,
) -> Result<Vec<u64>> {
    cap.check_power("linear ensemble", spec.modulus as u64, (n * m) as u64)?;
    if diffs.iter().any(|d| d.len() != n || d.spec != spec) {
        return Err(Error::usage("difference vectors must have length n"));
    }
    let weights = code_weights(spec, m);
    let mut imgs: Vec<RunningImage> = diffs.iter().map(|d| RunningImage::new(&d.entries, m)).collect();
    let mut counts = vec![0u64; diffs.len()];
    odometer(spec, n * m, |step| match step {
        Step::Visit => {
            for (c, r) in counts.iter_mut().zip(&imgs) {
                if r.code == 0 {
                    *c += 1;
                }
            }
        }
        Step::Bump(d) => imgs.iter_mut().for_each(|r| r.apply(spec, n, m, d, &weights)),
    });
    Ok(counts)
}

/// For each `s`, the histogram over `s̃` of `#{(A, b) : s A ⊕ b = s̃}`,
/// counted by enumerating the whole affine ensemble.
pub fn count_affine_images(
    spec: FieldSpec,
    n: usize,
    m: usize,
    points: &[FieldVector],
    cap: EnumerationCap,
) -> Result<Vec<Vec<u64>>> {
    cap.check_power("affine ensemble", spec.modulus as u64, (n * m + m) as u64)?;
    if points.iter().any(|s| s.len() != n || s.spec != spec) {
        return Err(Error::usage("points must have length n"));
    }
    let codomain = spec.count(m).ok_or_else(|| Error::usage("codomain too large"))? as usize;
    let weights = code_weights(spec, m);
    let mut imgs: Vec<RunningImage> = points.iter().map(|s| RunningImage::new(&s.entries, m)).collect();
    let mut hist = vec![vec![0u64; codomain]; points.len()];
    odometer(spec, n * m + m, |step| match step {
        Step::Visit => {
            for (h, r) in hist.iter_mut().zip(&imgs) {
                h[r.code as usize] += 1;
            }
        }
        Step::Bump(d) => imgs.iter_mut().for_each(|r| r.apply(spec, n, m, d, &weights)),
    });
    Ok(hist)
}

/// For each pair `(s, t)`, the histogram over `s̃` of
/// `#{(A, b) : s A ⊕ b = t A ⊕ b = s̃}`, counted by enumerating the whole
/// affine ensemble.
pub fn count_affine_pair_images(
    spec: FieldSpec,
    n: usize,
    m: usize,
    pairs: &[(FieldVector, FieldVector)],
    cap: EnumerationCap,
) -> Result<Vec<Vec<u64>>> {
    cap.check_power("affine ensemble", spec.modulus as u64, (n * m + m) as u64)?;
    if pairs
        .iter()
        .any(|(s, t)| s.len() != n || t.len() != n || s.spec != spec || t.spec != spec)
    {
        return Err(Error::usage("pair members must have length n"));
    }
    let codomain = spec.count(m).ok_or_else(|| Error::usage("codomain too large"))? as usize;
    let weights = code_weights(spec, m);
    let mut imgs: Vec<(RunningImage, RunningImage)> = pairs
        .iter()
        .map(|(s, t)| (RunningImage::new(&s.entries, m), RunningImage::new(&t.entries, m)))
        .collect();
    let mut hist = vec![vec![0u64; codomain]; pairs.len()];
    odometer(spec, n * m + m, |step| match step {
        Step::Visit => {
            for (h, (rs, rt)) in hist.iter_mut().zip(&imgs) {
                if rs.code == rt.code {
                    h[rs.code as usize] += 1;
                }
            }
        }
        Step::Bump(d) => {
            for (rs, rt) in imgs.iter_mut() {
                rs.apply(spec, n, m, d, &weights);
                rt.apply(spec, n, m, d, &weights);
            }
        }
    });
    Ok(hist)
}
