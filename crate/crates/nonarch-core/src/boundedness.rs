//! Boundedness certification for finitely generated subgroups of GL_n(Q_p).
//!
//! A subgroup is bounded iff it stabilizes a lattice, iff no element has an
//! eigenvalue of non-unit absolute value together with entry growth. The
//! certifier combines a cheap sufficient unboundedness test (Newton polygon
//! slopes of word characteristic polynomials) with lattice-closure iteration
//! from Z_p^n, and reports a three-valued verdict: stabilization proves
//! boundedness, a nonzero Newton slope proves unboundedness, and everything
//! else stays Inconclusive rather than guessing.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{Lattice, Matrix};
use crate::normspace::SplitNorm;
use crate::padic::{ExtRat, FieldSpec, Scalar, Valuation};

/// Signed generator indices: letter `k` is the k-th generator (1-based),
/// `-k` its inverse. The empty word is the identity.
pub type Word = Vec<i32>;

pub const DEFAULT_MAX_ITER: usize = 64;
pub const DEFAULT_MAX_WORD_LEN: usize = 4;

/// Closure iteration budget: `NONARCH_MAX_ITER` when set, else 64.
pub fn default_max_iter() -> usize {
    std::env::var("NONARCH_MAX_ITER")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_MAX_ITER)
}

/// A finitely generated subgroup of GL_n(Q_p), given by its generators. The
/// group itself is never enumerated; inverses are cached on construction.
#[derive(Debug, Clone)]
pub struct MatGroup {
    field: FieldSpec,
    dim: usize,
    gens: Vec<Matrix>,
    invs: Vec<Matrix>,
}

impl MatGroup {
    pub fn new(field: FieldSpec, generators: Vec<Matrix>) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::InvalidInput("a matrix group needs at least one generator".into()));
        };
        if !first.is_square() {
            return Err(Error::DimensionMismatch("generators must be square".into()));
        }
        let dim = first.rows();
        crate::linalg::check_dim(dim)?;
        let mut invs = Vec::with_capacity(generators.len());
        for g in &generators {
            if g.rows() != dim || g.cols() != dim {
                return Err(Error::DimensionMismatch("generators of mixed dimensions".into()));
            }
            invs.push(g.inv()?);
        }
        Ok(MatGroup {
            field,
            dim,
            gens: generators,
            invs,
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Matrix] {
        &self.gens
    }

    pub fn inverses(&self) -> &[Matrix] {
        &self.invs
    }

    /// Letters in enumeration order: 1, -1, 2, -2, …
    pub fn letters(&self) -> Vec<i32> {
        (1..=self.gens.len() as i32).flat_map(|k| [k, -k]).collect()
    }

    pub fn letter_matrix(&self, letter: i32) -> Result<&Matrix> {
        let idx = letter.unsigned_abs() as usize;
        if letter == 0 || idx > self.gens.len() {
            return Err(Error::InvalidInput(format!("letter {letter} out of range")));
        }
        Ok(if letter > 0 { &self.gens[idx - 1] } else { &self.invs[idx - 1] })
    }

    /// Product of the letters, left to right; identity for the empty word.
    pub fn word_matrix(&self, word: &[i32]) -> Result<Matrix> {
        let mut m = Matrix::identity(self.dim);
        for &letter in word {
            m = m.mul(self.letter_matrix(letter)?)?;
        }
        Ok(m)
    }
}

/// Reduced words in length-lex order (letters ordered 1, -1, 2, -2, …; a
/// letter is never directly followed by its inverse), starting with the empty
/// word. Every group element of word length ≤ max_len is covered because
/// cancelling a letter pair shortens a word.
pub fn words_up_to(gen_count: usize, max_len: usize) -> Vec<Word> {
    let letters: Vec<i32> = (1..=gen_count as i32).flat_map(|k| [k, -k]).collect();
    let mut out: Vec<Word> = vec![Vec::new()];
    let mut frontier: Vec<Word> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for &l in &letters {
                if w.last() == Some(&-l) {
                    continue;
                }
                let mut ext = w.clone();
                ext.push(l);
                next.push(ext);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// (word, matrix) pairs for every reduced word of length ≤ radius, in the
/// same length-lex order as `words_up_to`; products are built incrementally.
pub fn word_ball(group: &MatGroup, radius: usize) -> Result<Vec<(Word, Matrix)>> {
    let letters = group.letters();
    let mut out: Vec<(Word, Matrix)> = vec![(Vec::new(), Matrix::identity(group.dim))];
    let mut frontier: Vec<usize> = vec![0];
    for _ in 0..radius {
        let mut next = Vec::new();
        for &i in &frontier {
            for &l in &letters {
                if out[i].0.last() == Some(&-l) {
                    continue;
                }
                let mut w = out[i].0.clone();
                w.push(l);
                let m = out[i].1.mul(group.letter_matrix(l)?)?;
                next.push(out.len());
                out.push((w, m));
            }
        }
        frontier = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnboundedReason {
    NewtonSlope,
    EntryBlowup,
}

impl UnboundedReason {
    fn as_str(self) -> &'static str {
        match self {
            UnboundedReason::NewtonSlope => "newton-slope",
            UnboundedReason::EntryBlowup => "entry-blowup",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Bounded {
        lattice: Lattice,
        norm: SplitNorm,
    },
    Unbounded {
        witness: Word,
        reason: UnboundedReason,
        /// Root valuation from the Newton polygon, when that was the reason.
        slope: Option<BigRational>,
    },
    Inconclusive {
        iterations: usize,
    },
}

#[derive(Debug, Clone)]
pub struct BoundednessCert {
    field: FieldSpec,
    verdict: Verdict,
    /// Closure iterations actually performed (0 when Newton short-circuits).
    iterations: usize,
}

impl BoundednessCert {
    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn verdict(&self) -> &Verdict {
        &self.verdict
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.verdict, Verdict::Bounded { .. })
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self.verdict, Verdict::Unbounded { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self.verdict, Verdict::Inconclusive { .. })
    }

    pub fn invariant_lattice(&self) -> Option<&Lattice> {
        match &self.verdict {
            Verdict::Bounded { lattice, .. } => Some(lattice),
            _ => None,
        }
    }

    pub fn invariant_norm(&self) -> Option<&SplitNorm> {
        match &self.verdict {
            Verdict::Bounded { norm, .. } => Some(norm),
            _ => None,
        }
    }

    /// Exact soundness check of a Bounded verdict: every generator and every
    /// inverse maps the lattice into itself (hence onto itself).
    pub fn verify_bounded(&self, group: &MatGroup) -> Result<bool> {
        let Some(lat) = self.invariant_lattice() else {
            return Ok(false);
        };
        for m in group.generators().iter().chain(group.inverses()) {
            if !lat.contains_lattice(&lat.transformed(m)?)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn to_json(&self) -> Value {
        match &self.verdict {
            Verdict::Bounded { lattice, .. } => json!({
                "verdict": "bounded",
                "lattice": lattice.basis(),
                "iterations": self.iterations,
            }),
            Verdict::Unbounded { witness, reason, .. } => json!({
                "verdict": "unbounded",
                "reason": reason.as_str(),
                "witness": witness,
            }),
            Verdict::Inconclusive { iterations } => json!({
                "verdict": "inconclusive",
                "iterations": iterations,
            }),
        }
    }
}

fn bounded_cert(f: FieldSpec, lattice: Lattice, iterations: usize) -> Result<BoundednessCert> {
    let norm = SplitNorm::lattice_norm(&lattice);
    Ok(BoundednessCert {
        field: f,
        verdict: Verdict::Bounded { lattice, norm },
        iterations,
    })
}

/// Max finite entry valuation minus min, per matrix.
fn entry_val_spread(f: &FieldSpec, m: &Matrix) -> i64 {
    let vals: Vec<i64> = m.entries().filter_map(|x| f.val(x).finite()).collect();
    match (vals.iter().max(), vals.iter().min()) {
        (Some(hi), Some(lo)) => hi - lo,
        _ => 0,
    }
}

/// Iterate L_0 = Z_p^n, L_{k+1} = L_k + Σ_i (g_i L_k + g_i^{-1} L_k) through
/// Hermite-form lattice sums. Stabilization yields a Bounded certificate (the
/// fixed lattice is invariant under every generator). If the minimal entry
/// valuation of the iterate drops below −max_iter × (max entry-valuation
/// spread over generators and inverses), the run is cut off as
/// Unbounded(entry-blowup) carrying the trace of letters that drove the
/// deepest entries; otherwise the verdict is Inconclusive. Nonstabilization
/// alone is never reported as unbounded.
pub fn lattice_closure(group: &MatGroup, max_iter: usize) -> Result<BoundednessCert> {
    if max_iter < 1 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let f = group.field();
    let spread = group
        .gens
        .iter()
        .chain(&group.invs)
        .map(|m| entry_val_spread(&f, m))
        .max()
        .unwrap_or(0);
    let threshold = -(max_iter as i64) * spread;

    let mut lat = Lattice::standard(f, group.dim())?;
    let mut trace: Word = Vec::new();
    for k in 0..max_iter {
        let mut next = lat.clone();
        let mut deepest: Option<(Valuation, i32)> = None;
        for letter in group.letters() {
            let image = lat.transformed(group.letter_matrix(letter)?)?;
            let v = image.basis().min_entry_val(&f);
            if deepest.as_ref().is_none_or(|(best, _)| v < *best) {
                deepest = Some((v, letter));
            }
            next = next.sum(&image)?;
        }
        if next == lat {
            return bounded_cert(f, lat, k);
        }
        if next.basis().min_entry_val(&f) < lat.basis().min_entry_val(&f) {
            if let Some((_, letter)) = deepest {
                trace.push(letter);
            }
        }
        lat = next;
        if lat.basis().min_entry_val(&f) < Valuation::Finite(threshold) {
            return Ok(BoundednessCert {
                field: f,
                verdict: Verdict::Unbounded {
                    witness: trace,
                    reason: UnboundedReason::EntryBlowup,
                    slope: None,
                },
                iterations: k + 1,
            });
        }
    }
    Ok(BoundednessCert {
        field: f,
        verdict: Verdict::Inconclusive { iterations: max_iter },
        iterations: max_iter,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonWitness {
    pub word: Word,
    /// Valuation of a non-unit eigenvalue: the negated slope of the first
    /// sloped segment of the Newton polygon of the word's char poly.
    pub slope: BigRational,
}

/// Scan reduced words in length-lex order; the first whose characteristic
/// polynomial has a Newton-polygon segment of nonzero slope is returned with
/// the corresponding root valuation. Such an eigenvalue of non-unit absolute
/// value makes the powers of the word unbounded, so this is a sound
/// unboundedness witness. None means every scanned word has all-unit
/// eigenvalues (e.g. unipotents), which proves nothing either way.
pub fn newton_witness(group: &MatGroup, max_word_len: usize) -> Result<Option<NewtonWitness>> {
    if max_word_len < 1 {
        return Err(Error::InvalidInput("max_word_len must be at least 1".into()));
    }
    let f = group.field();
    for (word, m) in word_ball(group, max_word_len)? {
        if word.is_empty() {
            continue;
        }
        let coeffs = m.char_poly()?;
        if let Some(slope) = nonunit_root_valuation(&f, &coeffs) {
            return Ok(Some(NewtonWitness { word, slope }));
        }
    }
    Ok(None)
}

/// First nonzero root valuation of a polynomial with ascending coefficients,
/// read off the lower Newton polygon over (i, val c_i); zero coefficients are
/// skipped. Segments of slope s carry roots of valuation −s.
fn nonunit_root_valuation(f: &FieldSpec, coeffs: &[Scalar]) -> Option<BigRational> {
    let pts: Vec<(i64, i64)> = coeffs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| f.val(c).finite().map(|v| (i as i64, v)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    // lower convex hull, monotone chain over x-ascending points
    let cross = |a: (i64, i64), b: (i64, i64), c: (i64, i64)| -> i64 {
        (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
    };
    let mut hull: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    for seg in hull.windows(2) {
        let (x1, y1) = seg[0];
        let (x2, y2) = seg[1];
        if y1 != y2 {
            let slope = BigRational::new(BigInt::from(y2 - y1), BigInt::from(x2 - x1));
            return Some(-slope);
        }
    }
    None
}

/// Decision pipeline: Newton witness first (cheap, sound for unboundedness),
/// then lattice closure. Bounded certificates carry the invariant lattice and
/// its lattice norm.
pub fn certify(group: &MatGroup, max_iter: usize, max_word_len: usize) -> Result<BoundednessCert> {
    if let Some(w) = newton_witness(group, max_word_len)? {
        return Ok(BoundednessCert {
            field: group.field(),
            verdict: Verdict::Unbounded {
                witness: w.word,
                reason: UnboundedReason::NewtonSlope,
                slope: Some(w.slope),
            },
            iterations: 0,
        });
    }
    lattice_closure(group, max_iter)
}

/// Lattice norm whose unit ball is the Z_p-span of S. Any group that permutes
/// S preserves the span and hence this norm. Errors when S does not span.
pub fn invariant_norm_from_bounded_set(
    f: FieldSpec,
    n: usize,
    vectors: &[Vec<Scalar>],
) -> Result<SplitNorm> {
    let nonzero: Vec<Vec<Scalar>> = vectors
        .iter()
        .filter(|v| !v.iter().all(Scalar::is_zero))
        .cloned()
        .collect();
    let lat = Lattice::from_generators(f, n, &nonzero)?;
    Ok(SplitNorm::lattice_norm(&lat))
}

/// Operator-norm exponent of (a − b) adapted to the invariant lattice of a
/// Bounded certificate: log_p sup_{x ∈ L \ 0} n_L((a−b)x) / n_L(x), which for
/// a lattice norm is −(min entry valuation of B^{-1}(a−b)B). NegInf for
/// a = b. Left and right translation by lattice-preserving elements leaves
/// the value unchanged, making this a bi-invariant metric in exponent form.
pub fn bi_invariant_metric(cert: &BoundednessCert, a: &Matrix, b: &Matrix) -> Result<ExtRat> {
    let Some(lat) = cert.invariant_lattice() else {
        return Err(Error::InvalidInput(
            "bi-invariant metric requires a Bounded certificate".into(),
        ));
    };
    let f = cert.field();
    let diff = a.sub(b)?;
    let conj = lat.basis().inv()?.mul(&diff)?.mul(lat.basis())?;
    match conj.min_entry_val(&f) {
        Valuation::Infinite => Ok(ExtRat::NegInf),
        Valuation::Finite(v) => Ok(ExtRat::from_int(-v)),
    }
}

/// Bounds certified by the GL_n ↪ M_n × A¹ embedding M ↦ (M, det M^{-1}) on a
/// finite set, all exponents log_p: the entry bound together with the
/// det-inverse bound controls the inverse entries through the adjugate, which
/// is cross-checked against directly computed inverses.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedCheck {
    pub bounded: bool,
    /// log_p max |entry| over the set.
    pub entry_exp: ExtRat,
    /// log_p max |det(M)^{-1}| over the set.
    pub det_inv_exp: ExtRat,
    /// log_p max |entry| over the inverses (definition-side bound).
    pub inv_entry_exp: ExtRat,
}

pub fn gl_embed_bounded_check(f: &FieldSpec, mats: &[Matrix]) -> Result<EmbedCheck> {
    let mut entry = ExtRat::NegInf;
    let mut det_inv = ExtRat::NegInf;
    let mut inv_entry = ExtRat::NegInf;
    let mut n = 0usize;
    for m in mats {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("embedding check needs square matrices".into()));
        }
        n = m.rows();
        let minv = m.inv()?;
        let max_of = |mat: &Matrix| match mat.min_entry_val(f) {
            Valuation::Infinite => ExtRat::NegInf,
            Valuation::Finite(v) => ExtRat::from_int(-v),
        };
        entry = entry.max(max_of(m));
        inv_entry = inv_entry.max(max_of(&minv));
        // |det(M)^{-1}| = p^{val det M}
        let dv = f.val(&m.det()?).finite().expect("invertible: nonzero det");
        det_inv = det_inv.max(ExtRat::from_int(dv));
    }
    // Adjugate identity M^{-1} = adj(M)/det(M) bounds each inverse entry by
    // (entry bound)^(n-1) × det-inverse bound; exact arithmetic must agree.
    if let (Some(e), Some(d), Some(i)) = (entry.finite(), det_inv.finite(), inv_entry.finite()) {
        let adj_bound = e * BigRational::from(BigInt::from(n.saturating_sub(1) as i64)) + d;
        debug_assert!(i <= &adj_bound, "adjugate bound violated: {i} > {adj_bound}");
        if i > &adj_bound {
            return Err(Error::InvalidInput("embedding cross-check failed".into()));
        }
    }
    Ok(EmbedCheck {
        bounded: true,
        entry_exp: entry,
        det_inv_exp: det_inv,
        inv_entry_exp: inv_entry,
    })
}

/// Streaming variant of the embedding check over growing word balls. A
/// strictly larger entry or det-inverse bound at the final radius step flags
/// the family as growing (finite balls are always bounded; the flag is the
/// honest signal that the bound is not uniform in the radius).
#[derive(Debug, Clone)]
pub struct WordBallReport {
    pub radius: usize,
    /// Embedding bounds for the ball of each radius 0..=radius.
    pub per_radius: Vec<EmbedCheck>,
    pub growing: bool,
}

pub fn word_ball_embed_check(group: &MatGroup, radius: usize) -> Result<WordBallReport> {
    let f = group.field();
    let ball = word_ball(group, radius)?;
    let mut per_radius = Vec::with_capacity(radius + 1);
    for r in 0..=radius {
        let mats: Vec<Matrix> = ball
            .iter()
            .filter(|(w, _)| w.len() <= r)
            .map(|(_, m)| m.clone())
            .collect();
        per_radius.push(gl_embed_bounded_check(&f, &mats)?);
    }
    let growing = per_radius.len() >= 2 && {
        let last = &per_radius[per_radius.len() - 1];
        let prev = &per_radius[per_radius.len() - 2];
        last.entry_exp > prev.entry_exp || last.det_inv_exp > prev.det_inv_exp
    };
    Ok(WordBallReport {
        radius,
        per_radius,
        growing,
    })
}
