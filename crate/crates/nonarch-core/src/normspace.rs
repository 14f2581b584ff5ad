//! Splittable norms and seminorms on Q_p^n.
//!
//! A split norm is given by a basis b_1..b_n and rational weights w_1..w_n:
//! for x = sum c_i b_i its value is p^(-q(x)) with q(x) = min_i (w_i + val c_i).
//! Values are always handled on the exponent side, so everything stays
//! rational. Seminorms admit +inf weights; those basis directions form the
//! kernel. The distance between two norms is the Goldman-Iwahori metric
//!   d(n1, n2) = log sup_{x,y} n1(x) n2(y) / (n2(x) n1(y)),
//! reported in units of log p as an exact rational. It is computed by the
//! weighted elimination in `linalg`: the two norms are brought into a common
//! apartment and d is the spread of the diagonal offsets.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{
    check_dim, echelon_span, hermite_columns, weighted_exponents, Lattice, Matrix, Subspace,
};
use crate::padic::{ExtRat, FieldSpec, Scalar, Valuation};


/// A norm on Q_p^n split by an explicit basis. The inverse basis is cached so
/// evaluation is a single matrix-vector product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitNorm {
    field: FieldSpec,
    basis: Matrix,
    inv_basis: Matrix,
    weights: Vec<BigRational>,
}

impl SplitNorm {
    pub fn new(field: FieldSpec, basis: Matrix, weights: Vec<BigRational>) -> Result<Self> {
        if !basis.is_square() {
            return Err(Error::DimensionMismatch("norm basis must be square".into()));
        }
        check_dim(basis.rows())?;
        if weights.len() != basis.rows() {
            return Err(Error::DimensionMismatch("one weight per basis column".into()));
        }
        let inv_basis = basis.inv()?;
        Ok(SplitNorm {
            field,
            basis,
            inv_basis,
            weights,
        })
    }

    /// The max norm split by the standard basis: the gauge of Z_p^n.
    pub fn standard(field: FieldSpec, n: usize) -> Result<Self> {
        SplitNorm::new(field, Matrix::identity(n), vec![BigRational::zero(); n])
    }

    /// The gauge norm of a lattice: basis = lattice basis, zero weights. Its
    /// unit ball is exactly the lattice.
    pub fn lattice_norm(lattice: &Lattice) -> Self {
        SplitNorm::new(
            lattice.field(),
            lattice.basis().clone(),
            vec![BigRational::zero(); lattice.dim()],
        )
        .expect("lattice basis is invertible")
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    /// Least common denominator of the weights.
    pub fn weight_denominator(&self) -> BigInt {
        self.weights
            .iter()
            .fold(BigInt::from(1), |acc, w| num_integer::lcm(acc, w.denom().abs()))
    }

    /// Exponent q with n(x) = p^(-q); +inf iff x = 0.
    pub fn evaluate(&self, x: &[Scalar]) -> Result<ExtRat> {
        let coords = self.inv_basis.mat_vec(x)?;
        let mut q = ExtRat::PosInf;
        for (w, c) in self.weights.iter().zip(coords.iter()) {
            let term = ExtRat::Finite(w.clone()).plus_val(self.field.val(c));
            q = q.min(term);
        }
        Ok(q)
    }

    /// The homothety p^t . n: all weights shifted by t.
    pub fn shifted(&self, t: &BigRational) -> SplitNorm {
        let weights = self.weights.iter().map(|w| w + t).collect();
        SplitNorm {
            field: self.field,
            basis: self.basis.clone(),
            inv_basis: self.inv_basis.clone(),
            weights,
        }
    }

    /// The pushforward g . n with (g . n)(x) = n(g^-1 x): basis columns move
    /// by g, weights stay.
    pub fn transformed(&self, g: &Matrix) -> Result<SplitNorm> {
        SplitNorm::new(self.field, g.mul(&self.basis)?, self.weights.clone())
    }

    /// Goldman-Iwahori distance in units of log p.
    ///
    /// With A = B1^-1 B2 and the two weight lists as row/column weights, the
    /// weighted elimination produces offsets gamma_k; bringing both norms
    /// into the common apartment shows
    ///   log_p sup n1/n2 = -min gamma,  log_p sup n2/n1 = max gamma,
    /// so d = max gamma - min gamma.
    pub fn gi_distance(&self, other: &SplitNorm) -> Result<BigRational> {
        let (s12, s21) = self.equivalence_constant(other)?;
        Ok(s12 + s21)
    }

    /// The pair (log_p sup n1/n2, log_p sup n2/n1); the sum is gi_distance.
    pub fn equivalence_constant(&self, other: &SplitNorm) -> Result<(BigRational, BigRational)> {
        self.field.require_same(&other.field)?;
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("norms on different dimensions".into()));
        }
        let a = self.inv_basis.mul(&other.basis)?;
        let gammas = weighted_exponents(&self.field, &a, &self.weights, &other.weights)?;
        let min = gammas.iter().min().expect("nonempty").clone();
        let max = gammas.iter().max().expect("nonempty").clone();
        Ok((-min, max))
    }

    pub fn is_homothetic(&self, other: &SplitNorm) -> Result<bool> {
        Ok(self.gi_distance(other)?.is_zero())
    }

    pub fn canonicalize(&self) -> Result<HomothetyClass> {
        self.as_seminorm().canonicalize()
    }

    pub fn as_seminorm(&self) -> Seminorm {
        Seminorm {
            field: self.field,
            basis: self.basis.clone(),
            inv_basis: self.inv_basis.clone(),
            weights: self.weights.iter().cloned().map(ExtRat::Finite).collect(),
        }
    }

    pub fn to_json(&self) -> Value {
        norm_json(&self.basis, &self.weights.iter().cloned().map(ExtRat::Finite).collect::<Vec<_>>())
    }

    pub fn from_json(field: FieldSpec, v: &Value) -> Result<Self> {
        let (basis, weights) = parse_norm_json(v)?;
        let finite: Option<Vec<BigRational>> = weights
            .into_iter()
            .map(|w| match w {
                ExtRat::Finite(r) => Some(r),
                _ => None,
            })
            .collect();
        let Some(weights) = finite else {
            return Err(Error::InvalidInput("norm weights must be finite; use a seminorm for \"inf\"".into()));
        };
        SplitNorm::new(field, basis, weights)
    }
}

/// A nonzero seminorm split by a basis; +inf weights span the kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seminorm {
    field: FieldSpec,
    basis: Matrix,
    inv_basis: Matrix,
    weights: Vec<ExtRat>,
}

impl Seminorm {
    pub fn new(field: FieldSpec, basis: Matrix, weights: Vec<ExtRat>) -> Result<Self> {
        if !basis.is_square() {
            return Err(Error::DimensionMismatch("seminorm basis must be square".into()));
        }
        check_dim(basis.rows())?;
        if weights.len() != basis.rows() {
            return Err(Error::DimensionMismatch("one weight per basis column".into()));
        }
        if weights.iter().any(|w| matches!(w, ExtRat::NegInf)) {
            return Err(Error::InvalidInput("-inf is not a seminorm weight".into()));
        }
        if weights.iter().all(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("the zero seminorm is excluded; need a finite weight".into()));
        }
        let inv_basis = basis.inv()?;
        Ok(Seminorm {
            field,
            basis,
            inv_basis,
            weights,
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn weights(&self) -> &[ExtRat] {
        &self.weights
    }

    /// Exponent q with s(x) = p^(-q); +inf iff x lies in the kernel.
    pub fn evaluate(&self, x: &[Scalar]) -> Result<ExtRat> {
        let coords = self.inv_basis.mat_vec(x)?;
        let mut q = ExtRat::PosInf;
        for (w, c) in self.weights.iter().zip(coords.iter()) {
            let term = match w {
                ExtRat::PosInf => ExtRat::PosInf,
                ExtRat::Finite(_) => w.plus_val(self.field.val(c)),
                ExtRat::NegInf => unreachable!("validated"),
            };
            q = q.min(term);
        }
        Ok(q)
    }

    /// Canonical subspace spanned by the infinite-weight basis columns.
    pub fn kernel(&self) -> Result<Subspace> {
        let cols: Vec<Vec<Scalar>> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_finite())
            .map(|(j, _)| self.basis.col(j))
            .collect();
        echelon_span(self.dim(), &cols)
    }

    /// Kernel dimension; the seminorm lives on the stratum S_d(E).
    pub fn stratum(&self) -> usize {
        self.weights.iter().filter(|w| !w.is_finite()).count()
    }

    pub fn shifted(&self, t: &BigRational) -> Seminorm {
        let weights = self
            .weights
            .iter()
            .map(|w| match w {
                ExtRat::Finite(r) => ExtRat::Finite(r + t),
                other => other.clone(),
            })
            .collect();
        Seminorm {
            field: self.field,
            basis: self.basis.clone(),
            inv_basis: self.inv_basis.clone(),
            weights,
        }
    }

    /// Canonical homothety-class representative.
    ///
    /// The minimal finite weight is shifted to 0 and the columns are put in
    /// weight-sorted order. Within each equal-weight group every GL(Z_p)
    /// recombination preserves the seminorm, so the group is replaced by the
    /// canonical Hermite basis of the Z_(p)-module it spans (ties inside a
    /// group are thereby resolved by the Hermite pivot rows, i.e.
    /// lexicographically). Kernel columns are replaced by the canonical
    /// echelon basis of the kernel and placed last; finite columns are first
    /// reduced modulo the kernel, which is also norm-preserving.
    ///
    /// Finally the residual p-power freedom is fixed: scaling every
    /// finite-weight column by the same power of p is a homothety, so the
    /// representative is rescaled until the minimal entry valuation over the
    /// finite columns is 0. Lattice norms (all weights equal) therefore get a
    /// fully canonical class: L and p^k L collapse to one representative.
    ///
    /// The form is presentation-canonical: invariant under weight shifts,
    /// uniform p-power basis scalings, column permutations, unit scalings and
    /// same-weight recombinations. Presentations trading weight differences
    /// against per-column p-powers across distinct weight groups are
    /// identified by `is_homothetic`, not necessarily by bit equality.
    pub fn canonicalize(&self) -> Result<HomothetyClass> {
        let f = &self.field;
        let n = self.dim();
        let min_finite = self
            .weights
            .iter()
            .filter_map(|w| w.finite())
            .min()
            .expect("validated: some finite weight")
            .clone();

        // Split into finite-weight columns (shifted) and the kernel.
        let mut finite: Vec<(BigRational, Vec<Scalar>)> = Vec::new();
        for (j, w) in self.weights.iter().enumerate() {
            if let ExtRat::Finite(r) = w {
                finite.push((r - &min_finite, self.basis.col(j)));
            }
        }
        let kernel = self.kernel()?;

        // Reduce finite columns modulo the kernel: adding any kernel multiple
        // is a norm-preserving change, so pivot rows of the kernel are zeroed.
        if let Some(kb) = kernel.basis() {
            for (_, col) in finite.iter_mut() {
                for j in 0..kb.cols() {
                    let pivot_row = (0..n).find(|&i| kb[(i, j)].is_one()).expect("echelon pivot");
                    let c = col[pivot_row].clone();
                    if c.is_zero() {
                        continue;
                    }
                    for i in 0..n {
                        let t = &c * &kb[(i, j)];
                        col[i] = std::mem::take(&mut col[i]) - t;
                    }
                }
            }
        }

        finite.sort_by(|a, b| a.0.cmp(&b.0));
        let mut cols: Vec<Vec<Scalar>> = Vec::with_capacity(n);
        let mut weights: Vec<ExtRat> = Vec::with_capacity(n);
        let mut i = 0;
        while i < finite.len() {
            let mut j = i;
            while j < finite.len() && finite[j].0 == finite[i].0 {
                j += 1;
            }
            let group: Vec<Vec<Scalar>> = finite[i..j].iter().map(|(_, c)| c.clone()).collect();
            let canon = hermite_columns(f, n, &group)?;
            debug_assert_eq!(canon.len(), group.len(), "basis columns are independent");
            for c in canon {
                cols.push(c);
                weights.push(ExtRat::Finite(finite[i].0.clone()));
            }
            i = j;
        }
        // Fix the scale: min entry valuation over the finite columns = 0.
        let m = cols
            .iter()
            .flatten()
            .filter_map(|x| f.val(x).finite())
            .min()
            .expect("finite columns are nonzero");
        if m != 0 {
            let scale = f.pow(-m);
            for col in cols.iter_mut() {
                for x in col.iter_mut() {
                    *x = std::mem::take(x) * &scale;
                }
            }
        }
        if let Some(kb) = kernel.basis() {
            for j in 0..kb.cols() {
                cols.push(kb.col(j));
                weights.push(ExtRat::PosInf);
            }
        }
        Ok(HomothetyClass {
            field: self.field,
            basis: Matrix::from_cols(n, &cols)?,
            weights,
        })
    }

    pub fn to_json(&self) -> Value {
        norm_json(&self.basis, &self.weights)
    }

    pub fn from_json(field: FieldSpec, v: &Value) -> Result<Self> {
        let (basis, weights) = parse_norm_json(v)?;
        Seminorm::new(field, basis, weights)
    }
}

/// Weighted column-Hermite reduction, in place.
///
/// Canonical representative of a homothety class of seminorms. Two norms are
/// homothetic exactly when gi_distance vanishes; this struct gives each class
/// a deterministic bit-comparable form (minimal finite weight 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomothetyClass {
    field: FieldSpec,
    basis: Matrix,
    weights: Vec<ExtRat>,
}

impl HomothetyClass {
    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn weights(&self) -> &[ExtRat] {
        &self.weights
    }

    pub fn representative(&self) -> Result<Seminorm> {
        Seminorm::new(self.field, self.basis.clone(), self.weights.clone())
    }

    /// The representative as a norm, when the class has no kernel.
    pub fn norm_representative(&self) -> Option<SplitNorm> {
        let weights: Option<Vec<BigRational>> = self.weights.iter().map(|w| w.finite().cloned()).collect();
        Some(SplitNorm::new(self.field, self.basis.clone(), weights?).expect("canonical data is valid"))
    }
}

fn norm_json(basis: &Matrix, weights: &[ExtRat]) -> Value {
    let denom = weights
        .iter()
        .filter_map(|w| w.finite())
        .fold(BigInt::from(1), |acc, w| num_integer::lcm(acc, w.denom().abs()));
    json!({
        "basis": basis,
        "weights": weights.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        "denominator": denom.to_string(),
    })
}

fn parse_norm_json(v: &Value) -> Result<(Matrix, Vec<ExtRat>)> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidInput("norm JSON must be an object".into()))?;
    let basis: Matrix = serde_json::from_value(
        obj.get("basis")
            .ok_or_else(|| Error::InvalidInput("norm JSON needs \"basis\"".into()))?
            .clone(),
    )
    .map_err(|e| Error::InvalidInput(format!("bad basis: {e}")))?;
    let raw = obj
        .get("weights")
        .and_then(|w| w.as_array())
        .ok_or_else(|| Error::InvalidInput("norm JSON needs a \"weights\" array".into()))?;
    let weights: Vec<ExtRat> = raw
        .iter()
        .map(|w| {
            w.as_str()
                .ok_or_else(|| Error::InvalidInput("weights are strings".into()))
                .and_then(|s| s.parse::<ExtRat>())
        })
        .collect::<Result<_>>()?;
    // the optional denominator field is cross-checked, not trusted
    if let Some(d) = obj.get("denominator") {
        let stated: BigInt = match d {
            Value::Number(n) => BigInt::from(n.as_u64().ok_or_else(|| Error::InvalidInput("denominator must be a positive integer".into()))?),
            Value::String(s) => s
                .parse()
                .map_err(|_| Error::InvalidInput("denominator must be an integer".into()))?,
            _ => return Err(Error::InvalidInput("denominator must be an integer".into())),
        };
        let lcm = weights
            .iter()
            .filter_map(|w| w.finite())
            .fold(BigInt::from(1), |acc, w| num_integer::lcm(acc, w.denom().abs()));
        if stated.is_zero() || !(&stated % &lcm).is_zero() {
            return Err(Error::InvalidInput(format!(
                "stated denominator {stated} is not a multiple of the weight denominator {lcm}"
            )));
        }
    }
    Ok((basis, weights))
}

/// Exponent q with dist(x, V) = p^(-q) in the standard max norm; +inf iff
/// x lies in V.
///
/// The distance to a subspace is the quotient norm of the image of x, and the
/// quotient of the standard lattice norm is the gauge of the projected
/// lattice: project along V onto the standard coordinates complementary to
/// the echelon pivot rows of V, and evaluate the image lattice's norm there.
pub fn dist_to_subspace_exp(f: &FieldSpec, v: &Subspace, x: &[Scalar]) -> Result<ExtRat> {
    let n = v.ambient();
    if x.len() != n {
        return Err(Error::DimensionMismatch("vector length vs ambient dimension".into()));
    }
    let Some(basis) = v.basis() else {
        // V = 0: plain max-norm exponent
        let q = x.iter().map(|c| f.val(c)).min().unwrap_or(Valuation::Infinite);
        return Ok(match q {
            Valuation::Infinite => ExtRat::PosInf,
            Valuation::Finite(k) => ExtRat::from_int(k),
        });
    };
    let d = basis.cols();
    if d == n {
        return Ok(ExtRat::PosInf);
    }
    let pivot_rows: Vec<usize> = (0..d)
        .map(|j| (0..n).find(|&i| basis[(i, j)].is_one()).expect("echelon pivot"))
        .collect();
    let other_rows: Vec<usize> = (0..n).filter(|i| !pivot_rows.contains(i)).collect();

    // projection along V: y - B * y_J, read off the complement rows
    let project = |y: &[Scalar]| -> Vec<Scalar> {
        let mut out = y.to_vec();
        for (j, &pr) in pivot_rows.iter().enumerate() {
            let c = out[pr].clone();
            if c.is_zero() {
                continue;
            }
            for i in 0..n {
                let t = &c * &basis[(i, j)];
                out[i] = std::mem::take(&mut out[i]) - t;
            }
        }
        other_rows.iter().map(|&i| out[i].clone()).collect()
    };

    // image of Z_p^n under the projection, as a lattice in the complement
    let gens: Vec<Vec<Scalar>> = (0..n)
        .map(|k| {
            let mut e = vec![Scalar::zero(); n];
            e[k] = Scalar::one();
            project(&e)
        })
        .collect();
    let image = Lattice::from_generators(*f, other_rows.len(), &gens)?;
    SplitNorm::lattice_norm(&image).evaluate(&project(x))
}

/// Kernel-map Lipschitz probe on a finite sample.
///
/// Both seminorms must live on the same stratum. The probe compares, on the
/// supplied sample, the displacement between the kernels against the uniform
/// seminorm distance:
///   - rho = max over sample y of |s1(y) - s2(y)| (exact values p^-q, so
///     every evaluated exponent must be an integer);
///   - delta = max over sample points x in either kernel with standard norm
///     <= 1 of the distance from x to the other kernel (for such x the
///     nearest point of the other kernel's unit ball is a nearest point of
///     the kernel itself, by the ultrametric inequality).
///
/// Passes iff delta <= C * rho, vacuously on an empty or kernel-free sample.
pub fn kernel_lipschitz_probe(
    s1: &Seminorm,
    s2: &Seminorm,
    sample: &[Vec<Scalar>],
    c: &Scalar,
) -> Result<bool> {
    s1.field().require_same(&s2.field())?;
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch("seminorms on different dimensions".into()));
    }
    if s1.stratum() != s2.stratum() {
        return Err(Error::StratumMismatch);
    }
    let f = s1.field();
    let k1 = s1.kernel()?;
    let k2 = s2.kernel()?;

    let exact_value = |q: ExtRat| -> Result<BigRational> {
        match q {
            ExtRat::PosInf => Ok(BigRational::zero()),
            ExtRat::Finite(r) => {
                if !r.is_integer() {
                    return Err(Error::OffGrid(format!(
                        "p^(-{r}) is irrational; the probe needs integer exponents"
                    )));
                }
                let k = i64::try_from(r.to_integer()).map_err(|_| Error::OffGrid("exponent overflow".into()))?;
                Ok(f.pow(-k).into_rational())
            }
            ExtRat::NegInf => unreachable!("seminorm values are never -inf"),
        }
    };

    let mut rho = BigRational::zero();
    for y in sample {
        let v1 = exact_value(s1.evaluate(y)?)?;
        let v2 = exact_value(s2.evaluate(y)?)?;
        rho = rho.max((v1 - v2).abs());
    }

    let mut delta = BigRational::zero();
    for x in sample {
        let in_ball = x.iter().all(|t| f.val(t) >= Valuation::Finite(0));
        if !in_ball {
            continue;
        }
        for (own, opposite) in [(&k1, &k2), (&k2, &k1)] {
            if own.contains(x)? {
                let dist = exact_value(dist_to_subspace_exp(&f, opposite, x)?)?;
                delta = delta.clone().max(dist);
            }
        }
    }

    Ok(delta <= c.as_rational() * rho)
}

/// Evaluation-based oracles for the one-sided sup ratios, independent of the
/// elimination path used by `gi_distance`.
pub mod oracle {
    use super::*;

    /// Certified oracle for pairs of lattice norms (zero weights).
    ///
    /// log_p sup n1/n2 = sup_x (q2 - q1)(x) is attained at a basis column of
    /// n2's lattice: normalizing q2(x) = 0 means x generates a line in
    /// L2 \ p L2, and the gauge q1 is minimized over L2 \ p L2 at one of the
    /// generators because q1(sum a_j b_j) >= min_j q1(b_j) for a in Z_p.
    /// Symmetrically the other side is attained at a column of n1's basis.
    /// Extra candidate vectors (standard vectors, small combinations) are
    /// thrown in as a robustness margin; they can only confirm the sup.
    pub fn sup_ratio_exponents(n1: &SplitNorm, n2: &SplitNorm) -> Result<(BigRational, BigRational)> {
        n1.field().require_same(&n2.field())?;
        if n1.dim() != n2.dim() {
            return Err(Error::DimensionMismatch("norms on different dimensions".into()));
        }
        let f = n1.field();
        let n = n1.dim();
        let p = f.p() as i64;

        let mut candidates: Vec<Vec<Scalar>> = Vec::new();
        for j in 0..n {
            candidates.push(n1.basis().col(j));
            candidates.push(n2.basis().col(j));
        }
        for k in 0..n {
            let mut e = vec![Scalar::zero(); n];
            e[k] = Scalar::one();
            candidates.push(e);
        }
        // depth-1 residue combinations of each basis
        for b in [n1.basis(), n2.basis()] {
            let cols = b.columns();
            let mut stack = vec![vec![Scalar::zero(); n]];
            for col in &cols {
                let mut next = Vec::new();
                for acc in &stack {
                    for r in 0..p {
                        let mut v = acc.clone();
                        if r != 0 {
                            for (vi, ci) in v.iter_mut().zip(col.iter()) {
                                let t = Scalar::from_int(r) * ci;
                                *vi = std::mem::take(vi) + t;
                            }
                        }
                        next.push(v);
                    }
                }
                stack = next;
            }
            candidates.extend(stack);
        }

        let mut s12: Option<BigRational> = None; // sup (q2 - q1)
        let mut s21: Option<BigRational> = None; // sup (q1 - q2)
        for x in &candidates {
            if x.iter().all(|c| c.is_zero()) {
                continue;
            }
            let q1 = n1.evaluate(x)?;
            let q2 = n2.evaluate(x)?;
            let (ExtRat::Finite(q1), ExtRat::Finite(q2)) = (q1, q2) else {
                unreachable!("norms vanish only at 0");
            };
            let d12 = &q2 - &q1;
            let d21 = -d12.clone();
            if s12.as_ref().is_none_or(|b| d12 > *b) {
                s12 = Some(d12);
            }
            if s21.as_ref().is_none_or(|b| d21 > *b) {
                s21 = Some(d21);
            }
        }
        Ok((s12.expect("candidates nonempty"), s21.expect("candidates nonempty")))
    }

    /// Literal grid oracle: evaluates the two ratios over every vector whose
    /// coordinates are 0 or p^v * m with v in [-range, range] and m a unit
    /// digit pattern of the given depth. Exponential in n and depth; meant
    /// for small spot checks of the certified oracle.
    pub fn grid_sup_ratio(
        n1: &SplitNorm,
        n2: &SplitNorm,
        range: i64,
        depth: u32,
    ) -> Result<(BigRational, BigRational)> {
        n1.field().require_same(&n2.field())?;
        let f = n1.field();
        let n = n1.dim();
        let p = f.p() as i64;
        let pk = p.pow(depth);
        let mut coords: Vec<Scalar> = vec![Scalar::zero()];
        for v in -range..=range {
            for m in 1..pk {
                if m % p == 0 {
                    continue;
                }
                coords.push(Scalar::from_int(m) * f.pow(v));
            }
        }
        let mut s12: Option<BigRational> = None;
        let mut s21: Option<BigRational> = None;
        let mut idx = vec![0usize; n];
        loop {
            let x: Vec<Scalar> = idx.iter().map(|&i| coords[i].clone()).collect();
            if x.iter().any(|c| !c.is_zero()) {
                let (ExtRat::Finite(q1), ExtRat::Finite(q2)) = (n1.evaluate(&x)?, n2.evaluate(&x)?) else {
                    unreachable!("norms vanish only at 0");
                };
                let d12 = &q2 - &q1;
                let d21 = -d12.clone();
                if s12.as_ref().is_none_or(|b| d12 > *b) {
                    s12 = Some(d12);
                }
                if s21.as_ref().is_none_or(|b| d21 > *b) {
                    s21 = Some(d21);
                }
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == n {
                    return Ok((s12.expect("grid nonempty"), s21.expect("grid nonempty")));
                }
                idx[i] += 1;
                if idx[i] < coords.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }
}
