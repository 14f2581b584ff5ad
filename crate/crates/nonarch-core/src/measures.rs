//! Finitely supported measures on exact metric point sets, with Prokhorov
//! and Wasserstein distances computed as exact rationals.
//!
//! Supported spaces: Q_p^n with the max ultrametric, the projective line
//! with the p-adic chordal metric, the space of norms on Q_p^n under the
//! Goldman-Iwahori metric (log_p scale, where that metric natively lives),
//! explicit finite metric tables, and binary products with the max metric.
//! Distances stay rational throughout: p-adic absolute values are exact
//! powers of p and the GI metric is already an exponent.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use crate::boundedness::{word_ball, MatGroup, Word};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::normspace::{HomothetyClass, SplitNorm};
use crate::padic::{rational_string, FieldSpec, Scalar, Valuation};

fn parse_rational(v: &Value) -> Result<BigRational> {
    match v {
        Value::String(s) => Ok(s
            .parse::<Scalar>()
            .map_err(|_| Error::InvalidInput(format!("bad rational {s:?}")))?
            .into_rational()),
        Value::Number(n) => n
            .as_i64()
            .map(|k| BigRational::from_integer(BigInt::from(k)))
            .ok_or_else(|| Error::InvalidInput(format!("bad rational {n}"))),
        _ => Err(Error::InvalidInput("rational must be a string or integer".into())),
    }
}

/// |x| as an exact rational p^{-val(x)}.
fn abs_rational(f: &FieldSpec, x: &Scalar) -> BigRational {
    match f.val(x) {
        Valuation::Infinite => BigRational::zero(),
        Valuation::Finite(v) => f.pow(-v).into_rational(),
    }
}

/// A point of one of the supported metric spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Point {
    /// Vector in Q_p^n (also the points of a finite metric table by index
    /// would be wrong — labels are their own variant below).
    Vec(Vec<Scalar>),
    /// Finite point of P¹(Q_p).
    Proj(Scalar),
    /// The point at infinity of P¹(Q_p).
    Infinity,
    /// Label into a finite metric table.
    Label(String),
    /// Homothety class of a norm on Q_p^n, stored canonically.
    Norm(HomothetyClass),
    /// Point of a product space.
    Pair(Box<Point>, Box<Point>),
}

impl Point {
    pub fn vec(coords: &[&str]) -> Point {
        Point::Vec(coords.iter().map(|c| c.parse().expect("rational literal")).collect())
    }

    pub fn proj(z: &str) -> Point {
        if z == "inf" {
            Point::Infinity
        } else {
            Point::Proj(z.parse().expect("rational literal"))
        }
    }

    pub fn label(s: &str) -> Point {
        Point::Label(s.to_string())
    }

    pub fn norm(n: &SplitNorm) -> Result<Point> {
        Ok(Point::Norm(n.canonicalize()?))
    }

    pub fn pair(a: Point, b: Point) -> Point {
        Point::Pair(Box::new(a), Box::new(b))
    }

    fn variant_rank(&self) -> u8 {
        match self {
            Point::Vec(_) => 0,
            Point::Proj(_) => 1,
            Point::Infinity => 2,
            Point::Label(_) => 3,
            Point::Norm(_) => 4,
            Point::Pair(..) => 5,
        }
    }
}

fn cmp_scalar_slice(a: &[Scalar], b: &[Scalar]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for (x, y) in a.iter().zip(b) {
            let c = x.as_rational().cmp(y.as_rational());
            if c != Ordering::Equal {
                return c;
            }
        }
        Ordering::Equal
    })
}

fn cmp_matrix(a: &Matrix, b: &Matrix) -> Ordering {
    a.rows()
        .cmp(&b.rows())
        .then_with(|| a.cols().cmp(&b.cols()))
        .then_with(|| {
            for (x, y) in a.entries().zip(b.entries()) {
                let c = x.as_rational().cmp(y.as_rational());
                if c != Ordering::Equal {
                    return c;
                }
            }
            Ordering::Equal
        })
}

impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        self.variant_rank().cmp(&other.variant_rank()).then_with(|| match (self, other) {
            (Point::Vec(a), Point::Vec(b)) => cmp_scalar_slice(a, b),
            (Point::Proj(a), Point::Proj(b)) => a.as_rational().cmp(b.as_rational()),
            (Point::Infinity, Point::Infinity) => Ordering::Equal,
            (Point::Label(a), Point::Label(b)) => a.cmp(b),
            (Point::Norm(a), Point::Norm(b)) => a
                .weights()
                .cmp(b.weights())
                .then_with(|| cmp_matrix(a.basis(), b.basis())),
            (Point::Pair(a1, a2), Point::Pair(b1, b2)) => a1.cmp(b1).then_with(|| a2.cmp(b2)),
            _ => unreachable!("variant ranks equal"),
        })
    }
}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One of the supported exact metric spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricSpace {
    /// Q_p^n with d(x,y) = max_i |x_i − y_i| (an ultrametric).
    QpVec { field: FieldSpec, dim: usize },
    /// P¹(Q_p) with the chordal metric
    /// δ(x,y) = |x−y| / (max(1,|x|)·max(1,|y|)), δ(x,∞) = 1/max(1,|x|).
    ProjLine { field: FieldSpec },
    /// Homothety classes of splittable norms on Q_p^n under the
    /// Goldman-Iwahori metric (values in log_p units).
    NormSpace { field: FieldSpec, dim: usize },
    /// Explicit finite metric table.
    FinitePoints {
        labels: Vec<String>,
        distances: Vec<Vec<BigRational>>,
    },
    /// Binary product with the max metric.
    Product(Box<MetricSpace>, Box<MetricSpace>),
}

impl MetricSpace {
    pub fn qp_vec(field: FieldSpec, dim: usize) -> Result<MetricSpace> {
        crate::linalg::check_dim(dim)?;
        Ok(MetricSpace::QpVec { field, dim })
    }

    pub fn proj_line(field: FieldSpec) -> MetricSpace {
        MetricSpace::ProjLine { field }
    }

    pub fn norm_space(field: FieldSpec, dim: usize) -> Result<MetricSpace> {
        crate::linalg::check_dim(dim)?;
        Ok(MetricSpace::NormSpace { field, dim })
    }

    /// Validates the table as an exact metric: symmetric, zero diagonal,
    /// positive off-diagonal, triangle inequality.
    pub fn finite_points(labels: Vec<String>, distances: Vec<Vec<BigRational>>) -> Result<MetricSpace> {
        let k = labels.len();
        if k == 0 {
            return Err(Error::InvalidInput("finite metric space needs at least one point".into()));
        }
        if labels.iter().collect::<BTreeSet<_>>().len() != k {
            return Err(Error::InvalidInput("finite metric space labels must be distinct".into()));
        }
        if distances.len() != k || distances.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("distance table must be square over the labels".into()));
        }
        for i in 0..k {
            if !distances[i][i].is_zero() {
                return Err(Error::InvalidInput("distance table diagonal must be zero".into()));
            }
            for j in 0..k {
                if distances[i][j] != distances[j][i] {
                    return Err(Error::InvalidInput("distance table must be symmetric".into()));
                }
                if i != j && distances[i][j] <= BigRational::zero() {
                    return Err(Error::InvalidInput("off-diagonal distances must be positive".into()));
                }
                for l in 0..k {
                    if distances[i][j] > &distances[i][l] + &distances[l][j] {
                        return Err(Error::InvalidInput("distance table violates the triangle inequality".into()));
                    }
                }
            }
        }
        Ok(MetricSpace::FinitePoints { labels, distances })
    }

    pub fn product(left: MetricSpace, right: MetricSpace) -> MetricSpace {
        MetricSpace::Product(Box::new(left), Box::new(right))
    }

    pub fn field(&self) -> Option<FieldSpec> {
        match self {
            MetricSpace::QpVec { field, .. }
            | MetricSpace::ProjLine { field }
            | MetricSpace::NormSpace { field, .. } => Some(*field),
            MetricSpace::FinitePoints { .. } => None,
            MetricSpace::Product(l, r) => l.field().or_else(|| r.field()),
        }
    }

    /// Whether distinct stored points can sit at distance zero (norm classes
    /// can, across canonical-form boundaries), requiring semantic dedup.
    fn needs_semantic_dedup(&self) -> bool {
        match self {
            MetricSpace::NormSpace { .. } => true,
            MetricSpace::Product(l, r) => l.needs_semantic_dedup() || r.needs_semantic_dedup(),
            _ => false,
        }
    }

    pub fn validate_point(&self, p: &Point) -> Result<()> {
        match (self, p) {
            (MetricSpace::QpVec { dim, .. }, Point::Vec(coords)) => {
                if coords.len() != *dim {
                    return Err(Error::DimensionMismatch(format!(
                        "point has {} coordinates, space has dimension {dim}",
                        coords.len()
                    )));
                }
                Ok(())
            }
            (MetricSpace::ProjLine { .. }, Point::Proj(_) | Point::Infinity) => Ok(()),
            (MetricSpace::NormSpace { field, dim }, Point::Norm(class)) => {
                field.require_same(&class.field())?;
                if class.basis().rows() != *dim {
                    return Err(Error::DimensionMismatch("norm dimension vs space dimension".into()));
                }
                if class.weights().iter().any(|w| !w.is_finite()) {
                    return Err(Error::InvalidInput(
                        "norm-space points must be genuine norms (no kernel)".into(),
                    ));
                }
                Ok(())
            }
            (MetricSpace::FinitePoints { labels, .. }, Point::Label(l)) => {
                if labels.contains(l) {
                    Ok(())
                } else {
                    Err(Error::UndefinedPoint(l.clone()))
                }
            }
            (MetricSpace::Product(ls, rs), Point::Pair(lp, rp)) => {
                ls.validate_point(lp)?;
                rs.validate_point(rp)
            }
            _ => Err(Error::SpaceMismatch),
        }
    }

    /// Exact distance between two points of this space.
    pub fn distance(&self, a: &Point, b: &Point) -> Result<BigRational> {
        self.validate_point(a)?;
        self.validate_point(b)?;
        match (self, a, b) {
            (MetricSpace::QpVec { field, .. }, Point::Vec(x), Point::Vec(y)) => {
                let mut best = BigRational::zero();
                for (xi, yi) in x.iter().zip(y) {
                    let d = abs_rational(field, &(xi - yi));
                    if d > best {
                        best = d;
                    }
                }
                Ok(best)
            }
            (MetricSpace::ProjLine { field }, a, b) => Ok(chordal(field, a, b)),
            (MetricSpace::NormSpace { .. }, Point::Norm(n1), Point::Norm(n2)) => {
                let r1 = n1.norm_representative().expect("validated: no kernel");
                let r2 = n2.norm_representative().expect("validated: no kernel");
                r1.gi_distance(&r2)
            }
            (MetricSpace::FinitePoints { labels, distances }, Point::Label(x), Point::Label(y)) => {
                let i = labels.iter().position(|l| l == x).expect("validated");
                let j = labels.iter().position(|l| l == y).expect("validated");
                Ok(distances[i][j].clone())
            }
            (MetricSpace::Product(ls, rs), Point::Pair(x1, x2), Point::Pair(y1, y2)) => {
                Ok(ls.distance(x1, y1)?.max(rs.distance(x2, y2)?))
            }
            _ => Err(Error::SpaceMismatch),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            MetricSpace::QpVec { dim, .. } => json!({"kind": "qp_vec", "dim": dim}),
            MetricSpace::ProjLine { .. } => json!({"kind": "proj_line"}),
            MetricSpace::NormSpace { dim, .. } => json!({"kind": "norm_space", "dim": dim}),
            MetricSpace::FinitePoints { labels, distances } => json!({
                "kind": "finite_points",
                "labels": labels,
                "distances": distances
                    .iter()
                    .map(|row| row.iter().map(rational_string).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            }),
            MetricSpace::Product(l, r) => json!({
                "kind": "product", "left": l.to_json(), "right": r.to_json(),
            }),
        }
    }

    pub fn from_json(field: FieldSpec, v: &Value) -> Result<MetricSpace> {
        let kind = v
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidInput("space JSON needs a \"kind\"".into()))?;
        let dim = || -> Result<usize> {
            v.get("dim")
                .and_then(Value::as_u64)
                .map(|d| d as usize)
                .ok_or_else(|| Error::InvalidInput("space JSON needs a \"dim\"".into()))
        };
        match kind {
            "qp_vec" => MetricSpace::qp_vec(field, dim()?),
            "proj_line" => Ok(MetricSpace::proj_line(field)),
            "norm_space" => MetricSpace::norm_space(field, dim()?),
            "finite_points" => {
                let labels: Vec<String> = serde_json::from_value(
                    v.get("labels").cloned().ok_or_else(|| Error::InvalidInput("missing labels".into()))?,
                )
                .map_err(|e| Error::InvalidInput(format!("bad labels: {e}")))?;
                let rows = v
                    .get("distances")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::InvalidInput("missing distances".into()))?;
                let mut distances = Vec::with_capacity(rows.len());
                for row in rows {
                    let row = row
                        .as_array()
                        .ok_or_else(|| Error::InvalidInput("distance rows must be arrays".into()))?;
                    distances.push(row.iter().map(parse_rational).collect::<Result<Vec<_>>>()?);
                }
                MetricSpace::finite_points(labels, distances)
            }
            "product" => {
                let l = v.get("left").ok_or_else(|| Error::InvalidInput("missing left".into()))?;
                let r = v.get("right").ok_or_else(|| Error::InvalidInput("missing right".into()))?;
                Ok(MetricSpace::product(
                    MetricSpace::from_json(field, l)?,
                    MetricSpace::from_json(field, r)?,
                ))
            }
            other => Err(Error::InvalidInput(format!("unknown space kind {other:?}"))),
        }
    }

    pub fn point_to_json(&self, p: &Point) -> Value {
        match p {
            Point::Vec(coords) => json!(coords.iter().map(|c| c.to_string()).collect::<Vec<_>>()),
            Point::Proj(z) => json!(z.to_string()),
            Point::Infinity => json!("inf"),
            Point::Label(l) => json!(l),
            Point::Norm(class) => class
                .norm_representative()
                .map(|n| n.to_json())
                .unwrap_or(Value::Null),
            Point::Pair(a, b) => match self {
                MetricSpace::Product(ls, rs) => json!([ls.point_to_json(a), rs.point_to_json(b)]),
                _ => Value::Null,
            },
        }
    }

    pub fn point_from_json(&self, v: &Value) -> Result<Point> {
        let p = match self {
            MetricSpace::QpVec { .. } => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| Error::InvalidInput("vector point must be an array".into()))?;
                let coords = arr
                    .iter()
                    .map(|c| parse_rational(c).map(Scalar::new))
                    .collect::<Result<Vec<_>>>()?;
                Point::Vec(coords)
            }
            MetricSpace::ProjLine { .. } => match v {
                Value::String(s) if s == "inf" => Point::Infinity,
                other => Point::Proj(Scalar::new(parse_rational(other)?)),
            },
            MetricSpace::NormSpace { field, .. } => {
                let norm = SplitNorm::from_json(*field, v)?;
                Point::Norm(norm.canonicalize()?)
            }
            MetricSpace::FinitePoints { .. } => Point::Label(
                v.as_str()
                    .ok_or_else(|| Error::InvalidInput("finite point must be a label string".into()))?
                    .to_string(),
            ),
            MetricSpace::Product(ls, rs) => {
                let arr = v
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| Error::InvalidInput("product point must be a pair".into()))?;
                Point::pair(ls.point_from_json(&arr[0])?, rs.point_from_json(&arr[1])?)
            }
        };
        self.validate_point(&p)?;
        Ok(p)
    }
}

/// Chordal metric on P¹(Q_p); an exact ultrametric.
fn chordal(f: &FieldSpec, a: &Point, b: &Point) -> BigRational {
    let height = |z: &Scalar| -> BigRational {
        // max(1, |z|)
        abs_rational(f, z).max(BigRational::one())
    };
    match (a, b) {
        (Point::Infinity, Point::Infinity) => BigRational::zero(),
        (Point::Proj(z), Point::Infinity) | (Point::Infinity, Point::Proj(z)) => {
            BigRational::one() / height(z)
        }
        (Point::Proj(x), Point::Proj(y)) => {
            abs_rational(f, &(x - y)) / (height(x) * height(y))
        }
        _ => unreachable!("validated projective points"),
    }
}

/// A finitely supported measure with positive rational atom masses. Masses
/// need not sum to 1: sub-probability restrictions are first-class, and the
/// zero measure is allowed (it is the continuous part of every atomic
/// decomposition here). Atoms are kept sorted with distinct points, so equal
/// measures are structurally equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMeasure {
    space: MetricSpace,
    atoms: Vec<(Point, BigRational)>,
}

impl FiniteMeasure {
    pub fn new(space: MetricSpace, atoms: Vec<(Point, BigRational)>) -> Result<Self> {
        for (p, mass) in &atoms {
            space.validate_point(p)?;
            if *mass <= BigRational::zero() {
                return Err(Error::InvalidInput("atom masses must be positive".into()));
            }
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        // merge equal points
        let mut merged: Vec<(Point, BigRational)> = Vec::with_capacity(atoms.len());
        for (p, mass) in atoms {
            match merged.last_mut() {
                Some((q, m)) if *q == p => *m += mass,
                _ => merged.push((p, mass)),
            }
        }
        // norm classes may be homothetic without being bit-equal; merge any
        // residual distance-zero pairs so the identity axiom stays exact
        if space.needs_semantic_dedup() {
            let mut i = 0;
            while i < merged.len() {
                let mut j = i + 1;
                while j < merged.len() {
                    if space.distance(&merged[i].0, &merged[j].0)?.is_zero() {
                        let (_, m) = merged.remove(j);
                        merged[i].1 += m;
                    } else {
                        j += 1;
                    }
                }
                i += 1;
            }
        }
        Ok(FiniteMeasure { space, atoms: merged })
    }

    pub fn zero(space: MetricSpace) -> Self {
        FiniteMeasure { space, atoms: Vec::new() }
    }

    pub fn dirac(space: MetricSpace, point: Point) -> Result<Self> {
        FiniteMeasure::new(space, vec![(point, BigRational::one())])
    }

    pub fn uniform(space: MetricSpace, points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("uniform measure needs at least one point".into()));
        }
        let mass = BigRational::new(BigInt::one(), BigInt::from(points.len() as i64));
        FiniteMeasure::new(space, points.iter().map(|p| (p.clone(), mass.clone())).collect())
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn atoms(&self) -> &[(Point, BigRational)] {
        &self.atoms
    }

    pub fn support(&self) -> impl Iterator<Item = &Point> {
        self.atoms.iter().map(|(p, _)| p)
    }

    pub fn total(&self) -> BigRational {
        self.atoms.iter().map(|(_, m)| m).sum()
    }

    pub fn is_probability(&self) -> bool {
        self.total().is_one()
    }

    pub fn mass_at(&self, p: &Point) -> BigRational {
        self.atoms
            .iter()
            .find(|(q, _)| q == p)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(BigRational::zero)
    }

    /// Mass of a point set, matched by exact point equality.
    pub fn mass_of(&self, set: &[Point]) -> BigRational {
        self.atoms
            .iter()
            .filter(|(p, _)| set.contains(p))
            .map(|(_, m)| m.clone())
            .sum()
    }

    /// Sub-measure keeping the atoms whose point satisfies the predicate.
    pub fn restricted(&self, keep: impl Fn(&Point) -> bool) -> FiniteMeasure {
        FiniteMeasure {
            space: self.space.clone(),
            atoms: self.atoms.iter().filter(|(p, _)| keep(p)).cloned().collect(),
        }
    }

    pub fn scaled(&self, c: &BigRational) -> Result<FiniteMeasure> {
        if c.is_zero() {
            return Ok(FiniteMeasure::zero(self.space.clone()));
        }
        if c < &BigRational::zero() {
            return Err(Error::InvalidInput("measures cannot be scaled negatively".into()));
        }
        Ok(FiniteMeasure {
            space: self.space.clone(),
            atoms: self.atoms.iter().map(|(p, m)| (p.clone(), m * c)).collect(),
        })
    }

    pub fn normalized(&self) -> Result<FiniteMeasure> {
        let t = self.total();
        if t.is_zero() {
            return Err(Error::InvalidInput("cannot normalize the zero measure".into()));
        }
        self.scaled(&(BigRational::one() / t))
    }

    /// Sum of measures on the same space.
    pub fn add(&self, other: &FiniteMeasure) -> Result<FiniteMeasure> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        FiniteMeasure::new(self.space.clone(), atoms)
    }

    /// Image measure under a point map into another space; colliding images
    /// accumulate mass.
    pub fn pushforward_to(
        &self,
        target: MetricSpace,
        f: impl Fn(&Point) -> Result<Point>,
    ) -> Result<FiniteMeasure> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (p, mass) in &self.atoms {
            atoms.push((f(p)?, mass.clone()));
        }
        FiniteMeasure::new(target, atoms)
    }

    /// Image measure under a self-map of the space.
    pub fn pushforward(&self, f: impl Fn(&Point) -> Result<Point>) -> Result<FiniteMeasure> {
        self.pushforward_to(self.space.clone(), f)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "space": self.space.to_json(),
            "atoms": self.atoms.iter().map(|(p, m)| json!({
                "point": self.space.point_to_json(p),
                "mass": rational_string(m),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(field: FieldSpec, v: &Value) -> Result<FiniteMeasure> {
        let space = MetricSpace::from_json(
            field,
            v.get("space").ok_or_else(|| Error::InvalidInput("measure JSON needs a space".into()))?,
        )?;
        let atoms_json = v
            .get("atoms")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidInput("measure JSON needs an atoms array".into()))?;
        let mut atoms = Vec::with_capacity(atoms_json.len());
        for a in atoms_json {
            let point = space.point_from_json(
                a.get("point").ok_or_else(|| Error::InvalidInput("atom needs a point".into()))?,
            )?;
            let mass = parse_rational(
                a.get("mass").ok_or_else(|| Error::InvalidInput("atom needs a mass".into()))?,
            )?;
            atoms.push((point, mass));
        }
        FiniteMeasure::new(space, atoms)
    }
}

/// Product measure on the product space (max metric).
pub fn product(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<FiniteMeasure> {
    let space = MetricSpace::product(mu.space.clone(), nu.space.clone());
    let mut atoms = Vec::with_capacity(mu.atoms.len() * nu.atoms.len());
    for (x, mx) in &mu.atoms {
        for (y, my) in &nu.atoms {
            atoms.push((Point::pair(x.clone(), y.clone()), mx * my));
        }
    }
    FiniteMeasure::new(space, atoms)
}

fn require_comparable(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<()> {
    if mu.space != nu.space {
        return Err(Error::SpaceMismatch);
    }
    let (tm, tn) = (mu.total(), nu.total());
    if tm != tn {
        return Err(Error::MassMismatch(rational_string(&tm), rational_string(&tn)));
    }
    Ok(())
}

/// Exact Prokhorov distance between equal-mass measures:
/// inf { ε : μ(A) ≤ ν(A_ε) + ε and symmetrically, for all A }, with closed
/// ε-neighborhoods. By Strassen's theorem the one-sided condition is
/// equivalent to a coupling leaving at most ε mass on pairs farther than ε,
/// so feasibility at ε is a max-flow question over the edges d(x,y) ≤ ε.
/// The flow value is a step function jumping only at support distances, so
/// the infimum equals min over candidate distances d_k of
/// max(d_k, total − flow(d_k)) — an exact rational, no bisection tolerance.
pub fn prokhorov(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<BigRational> {
    require_comparable(mu, nu)?;
    let total = mu.total();
    if total.is_zero() {
        return Ok(BigRational::zero());
    }
    let m = mu.atoms.len();
    let k = nu.atoms.len();
    let mut dist = vec![vec![BigRational::zero(); k]; m];
    let mut candidates: BTreeSet<BigRational> = BTreeSet::new();
    candidates.insert(BigRational::zero());
    for (i, row) in dist.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let d = mu.space.distance(&mu.atoms[i].0, &nu.atoms[j].0)?;
            candidates.insert(d.clone());
            *cell = d;
        }
    }
    let mut best: Option<BigRational> = None;
    for eps in candidates {
        let matched = transport::max_flow_within(
            &mu.atoms.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>(),
            &nu.atoms.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>(),
            |i, j| dist[i][j] <= eps,
        );
        let value = eps.max(&total - &matched);
        if best.as_ref().is_none_or(|b| value < *b) {
            best = Some(value);
        }
    }
    Ok(best.expect("candidate set nonempty"))
}

/// Brute-force Prokhorov oracle: for every subset A of either support, the
/// minimal ε validating A's inequality is min over neighborhood thresholds t
/// of max(t, μ(A) − ν(A_t)); the distance is the max over all A of both
/// sides. Exponential in the support size, capped at 12 atoms.
pub fn prokhorov_oracle(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<BigRational> {
    require_comparable(mu, nu)?;
    const CAP: usize = 12;
    for m in [mu, nu] {
        if m.atoms.len() > CAP {
            return Err(Error::SupportCap(m.atoms.len(), CAP));
        }
    }
    let one_side = |a: &FiniteMeasure, b: &FiniteMeasure| -> Result<BigRational> {
        let mut worst = BigRational::zero();
        let n = a.atoms.len();
        for mask in 1u32..(1 << n) {
            let subset: Vec<&Point> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| &a.atoms[i].0)
                .collect();
            let mass_a: BigRational = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| a.atoms[i].1.clone())
                .sum();
            // distance of each b-atom to the subset
            let mut reach: Vec<(BigRational, BigRational)> = Vec::with_capacity(b.atoms.len());
            for (q, mass) in &b.atoms {
                let mut d_min: Option<BigRational> = None;
                for p in &subset {
                    let d = a.space.distance(p, q)?;
                    if d_min.as_ref().is_none_or(|m| d < *m) {
                        d_min = Some(d);
                    }
                }
                reach.push((d_min.expect("subset nonempty"), mass.clone()));
            }
            let mut thresholds: BTreeSet<BigRational> = BTreeSet::new();
            thresholds.insert(BigRational::zero());
            thresholds.extend(reach.iter().map(|(d, _)| d.clone()));
            let mut eps_a: Option<BigRational> = None;
            for t in thresholds {
                let covered: BigRational = reach
                    .iter()
                    .filter(|(d, _)| *d <= t)
                    .map(|(_, m)| m.clone())
                    .sum();
                let need = t.max(&mass_a - &covered);
                if eps_a.as_ref().is_none_or(|e| need < *e) {
                    eps_a = Some(need);
                }
            }
            let eps_a = eps_a.expect("threshold set nonempty");
            if eps_a > worst {
                worst = eps_a;
            }
        }
        Ok(worst)
    };
    Ok(one_side(mu, nu)?.max(one_side(nu, mu)?))
}

/// Exact 1-Wasserstein distance with the metric truncated at 1 (the bounded
/// metric of the weak-* setting): min-cost transport of μ onto ν.
pub fn wasserstein(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<BigRational> {
    require_comparable(mu, nu)?;
    if mu.total().is_zero() {
        return Ok(BigRational::zero());
    }
    let m = mu.atoms.len();
    let k = nu.atoms.len();
    let mut cost = vec![vec![BigRational::zero(); k]; m];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = mu
                .space
                .distance(&mu.atoms[i].0, &nu.atoms[j].0)?
                .min(BigRational::one());
        }
    }
    Ok(transport::min_cost_transport(
        &mu.atoms.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>(),
        &nu.atoms.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>(),
        &cost,
    ))
}

/// min over the family of μ(K); 1 for the empty family by convention.
pub fn tightness_check(family: &[FiniteMeasure], k_set: &[Point]) -> BigRational {
    family
        .iter()
        .map(|mu| mu.mass_of(k_set))
        .min()
        .unwrap_or_else(BigRational::one)
}

#[derive(Debug, Clone)]
pub struct AtomLevel {
    pub lambda: BigRational,
    /// Base points whose ν-mass is exactly λ.
    pub base_points: Vec<Point>,
    /// Restriction of μ to the preimage of those base points.
    pub part: FiniteMeasure,
}

/// μ = Σ_λ μ_λ + μ_c, grouped by the atom masses of ν = π_*μ. In this
/// finite-support model the continuous part is identically zero; the field
/// is kept so the decomposition identity is tested in its stated shape.
#[derive(Debug, Clone)]
pub struct AtomicDecomposition {
    pub base: FiniteMeasure,
    pub levels: Vec<AtomLevel>,
    pub continuous_part: FiniteMeasure,
}

pub fn decompose_atoms(
    mu: &FiniteMeasure,
    base_space: MetricSpace,
    pi: impl Fn(&Point) -> Result<Point>,
) -> Result<AtomicDecomposition> {
    let nu = mu.pushforward_to(base_space, &pi)?;
    let mut lambdas: Vec<BigRational> = nu.atoms.iter().map(|(_, m)| m.clone()).collect();
    lambdas.sort();
    lambdas.dedup();
    lambdas.reverse(); // larger atoms first
    let mut levels = Vec::with_capacity(lambdas.len());
    let mut reconstructed = FiniteMeasure::zero(mu.space.clone());
    for lambda in lambdas {
        let base_points: Vec<Point> = nu
            .atoms
            .iter()
            .filter(|(_, m)| *m == lambda)
            .map(|(p, _)| p.clone())
            .collect();
        let mut kept: Vec<(Point, BigRational)> = Vec::new();
        for (p, mass) in &mu.atoms {
            if base_points.contains(&pi(p)?) {
                kept.push((p.clone(), mass.clone()));
            }
        }
        let part = FiniteMeasure::new(mu.space.clone(), kept)?;
        reconstructed = reconstructed.add(&part)?;
        levels.push(AtomLevel { lambda, base_points, part });
    }
    let continuous_part = FiniteMeasure::zero(mu.space.clone());
    debug_assert_eq!(&reconstructed, mu, "finite measures decompose exactly");
    if &reconstructed != mu {
        return Err(Error::InvalidInput("atomic decomposition failed to reconstruct".into()));
    }
    Ok(AtomicDecomposition { base: nu, levels, continuous_part })
}

/// A finite fibration p: V → U with listed total and base point sets; the
/// map must cover every listed base point.
#[derive(Debug, Clone)]
pub struct Fibration {
    total_space: MetricSpace,
    base_space: MetricSpace,
    pairs: Vec<(Point, Point)>,
    base: Vec<Point>,
}

impl Fibration {
    pub fn new(
        total_space: MetricSpace,
        base_space: MetricSpace,
        pairs: Vec<(Point, Point)>,
        base: Vec<Point>,
    ) -> Result<Self> {
        for (v, u) in &pairs {
            total_space.validate_point(v)?;
            base_space.validate_point(u)?;
            if !base.contains(u) {
                return Err(Error::InvalidFibration("image point missing from the base list".into()));
            }
        }
        for u in &base {
            base_space.validate_point(u)?;
            if !pairs.iter().any(|(_, img)| img == u) {
                return Err(Error::InvalidFibration("fibration must be surjective onto the base".into()));
            }
        }
        let mut seen: Vec<&Point> = Vec::with_capacity(pairs.len());
        for (v, _) in &pairs {
            if seen.contains(&v) {
                return Err(Error::InvalidFibration("total points must be distinct".into()));
            }
            seen.push(v);
        }
        Ok(Fibration { total_space, base_space, pairs, base })
    }

    pub fn base_space(&self) -> &MetricSpace {
        &self.base_space
    }

    pub fn total_space(&self) -> &MetricSpace {
        &self.total_space
    }

    pub fn base(&self) -> &[Point] {
        &self.base
    }

    pub fn apply(&self, v: &Point) -> Result<Point> {
        self.pairs
            .iter()
            .find(|(p, _)| p == v)
            .map(|(_, u)| u.clone())
            .ok_or_else(|| Error::UndefinedPoint(format!("{v:?} is not in the fibration total")))
    }
}

/// ν = p_*μ together with the conditional probability μ_u on each charged
/// fiber; Σ_u ν(u)·μ_u = μ exactly.
pub fn disintegrate(
    mu: &FiniteMeasure,
    fib: &Fibration,
) -> Result<(FiniteMeasure, Vec<(Point, FiniteMeasure)>)> {
    if &mu.space != fib.total_space() {
        return Err(Error::SpaceMismatch);
    }
    let nu = mu.pushforward_to(fib.base_space().clone(), |p| fib.apply(p))?;
    let mut family = Vec::with_capacity(nu.atoms.len());
    let mut reconstructed = FiniteMeasure::zero(mu.space.clone());
    for (u, mass_u) in &nu.atoms {
        let mut kept = Vec::new();
        for (v, mass) in &mu.atoms {
            if &fib.apply(v)? == u {
                kept.push((v.clone(), mass / mass_u));
            }
        }
        let mu_u = FiniteMeasure::new(mu.space.clone(), kept)?;
        debug_assert!(mu_u.is_probability());
        reconstructed = reconstructed.add(&mu_u.scaled(mass_u)?)?;
        family.push((u.clone(), mu_u));
    }
    if &reconstructed != mu {
        return Err(Error::InvalidFibration("disintegration failed to reconstruct".into()));
    }
    Ok((nu, family))
}

/// Möbius action of an invertible 2×2 matrix on P¹(Q_p).
pub fn moebius(g: &Matrix, z: &Point) -> Result<Point> {
    if g.rows() != 2 || g.cols() != 2 {
        return Err(Error::DimensionMismatch("projective action needs a 2x2 matrix".into()));
    }
    if g.det()?.is_zero() {
        return Err(Error::Singular);
    }
    let (a, b, c, d) = (&g[(0, 0)], &g[(0, 1)], &g[(1, 0)], &g[(1, 1)]);
    Ok(match z {
        Point::Infinity => {
            if c.is_zero() {
                Point::Infinity
            } else {
                Point::Proj(a.div(c)?)
            }
        }
        Point::Proj(z) => {
            let den = c * z + d;
            if den.is_zero() {
                Point::Infinity
            } else {
                Point::Proj((a * z + b).div(&den)?)
            }
        }
        _ => return Err(Error::SpaceMismatch),
    })
}

/// Pushforward of μ along the natural action of g on the space kind:
/// linear on Q_p^n, Möbius on P¹, norm transport n ↦ g·n on norm classes.
pub fn apply_group(mu: &FiniteMeasure, g: &Matrix) -> Result<FiniteMeasure> {
    match &mu.space {
        MetricSpace::QpVec { dim, .. } => {
            if g.rows() != *dim || g.cols() != *dim {
                return Err(Error::DimensionMismatch("matrix vs space dimension".into()));
            }
            mu.pushforward(|p| match p {
                Point::Vec(x) => Ok(Point::Vec(g.mat_vec(x)?)),
                _ => Err(Error::SpaceMismatch),
            })
        }
        MetricSpace::ProjLine { .. } => mu.pushforward(|p| moebius(g, p)),
        MetricSpace::NormSpace { .. } => {
            if g.det()?.is_zero() {
                return Err(Error::Singular);
            }
            mu.pushforward(|p| match p {
                Point::Norm(class) => {
                    let rep = class.norm_representative().expect("validated: no kernel");
                    Point::norm(&rep.transformed(g)?)
                }
                _ => Err(Error::SpaceMismatch),
            })
        }
        _ => Err(Error::InvalidInput("no matrix action on this space kind".into())),
    }
}

/// All reduced words of length ≤ word_len (including the empty word) whose
/// action fixes μ exactly, as atom-set and mass equality.
pub fn stab_search(mu: &FiniteMeasure, group: &MatGroup, word_len: usize) -> Result<Vec<Word>> {
    if word_len < 1 {
        return Err(Error::InvalidInput("word_len must be at least 1".into()));
    }
    let mut found = Vec::new();
    for (word, mat) in word_ball(group, word_len)? {
        if &apply_group(mu, &mat)? == mu {
            found.push(word);
        }
    }
    Ok(found)
}

/// Per-fiber stabilizer word sets of a disintegrated measure, their
/// intersection, and the directly computed stabilizer of the whole family;
/// the lemma-shaped identity "family stabilizer = intersection of fiber
/// stabilizers" is checked exactly at this word length.
#[derive(Debug, Clone)]
pub struct FiberedStabReport {
    pub per_fiber: Vec<(Point, Vec<Word>)>,
    pub intersection: Vec<Word>,
    pub family: Vec<Word>,
    pub identity_holds: bool,
}

pub fn stab_search_fibered(
    mu: &FiniteMeasure,
    fib: &Fibration,
    group: &MatGroup,
    word_len: usize,
) -> Result<FiberedStabReport> {
    let (_, family_measures) = disintegrate(mu, fib)?;
    let mut per_fiber = Vec::with_capacity(family_measures.len());
    for (u, mu_u) in &family_measures {
        per_fiber.push((u.clone(), stab_search(mu_u, group, word_len)?));
    }
    let mut intersection: Option<Vec<Word>> = None;
    for (_, words) in &per_fiber {
        intersection = Some(match intersection {
            None => words.clone(),
            Some(acc) => acc.into_iter().filter(|w| words.contains(w)).collect(),
        });
    }
    let intersection = intersection.unwrap_or_default();
    // direct pass: words fixing every fiber measure simultaneously
    let mut family = Vec::new();
    for (word, mat) in word_ball(group, word_len)? {
        let mut ok = true;
        for (_, mu_u) in &family_measures {
            if &apply_group(mu_u, &mat)? != mu_u {
                ok = false;
                break;
            }
        }
        if ok {
            family.push(word);
        }
    }
    let identity_holds = family == intersection;
    Ok(FiberedStabReport { per_fiber, intersection, family, identity_holds })
}

/// Exact network primitives for the distance engines.
mod transport {
    use super::*;

    /// Maximum mass matchable between supplies and demands along admissible
    /// pairs (Edmonds-Karp on the bipartite graph; exact rational capacities).
    pub fn max_flow_within(
        supply: &[BigRational],
        demand: &[BigRational],
        admissible: impl Fn(usize, usize) -> bool,
    ) -> BigRational {
        let m = supply.len();
        let k = demand.len();
        // nodes: 0 = source, 1..=m supplies, m+1..=m+k demands, m+k+1 = sink
        let n = m + k + 2;
        let (src, sink) = (0, m + k + 1);
        let big: BigRational = supply.iter().chain(demand).sum::<BigRational>() + BigRational::one();
        let mut cap = vec![vec![BigRational::zero(); n]; n];
        for (i, s) in supply.iter().enumerate() {
            cap[src][1 + i] = s.clone();
        }
        for (j, d) in demand.iter().enumerate() {
            cap[m + 1 + j][sink] = d.clone();
        }
        for i in 0..m {
            for j in 0..k {
                if admissible(i, j) {
                    cap[1 + i][m + 1 + j] = big.clone();
                }
            }
        }
        let mut flow = BigRational::zero();
        loop {
            // BFS for a shortest augmenting path
            let mut parent = vec![usize::MAX; n];
            parent[src] = src;
            let mut queue = std::collections::VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                if u == sink {
                    break;
                }
                for v in 0..n {
                    if parent[v] == usize::MAX && cap[u][v] > BigRational::zero() {
                        parent[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if parent[sink] == usize::MAX {
                return flow;
            }
            let mut bottleneck: Option<BigRational> = None;
            let mut v = sink;
            while v != src {
                let u = parent[v];
                if bottleneck.as_ref().is_none_or(|b| cap[u][v] < *b) {
                    bottleneck = Some(cap[u][v].clone());
                }
                v = u;
            }
            let aug = bottleneck.expect("path has at least one edge");
            let mut v = sink;
            while v != src {
                let u = parent[v];
                cap[u][v] -= &aug;
                let back = cap[v][u].clone() + &aug;
                cap[v][u] = back;
                v = u;
            }
            flow += aug;
        }
    }

    /// Exact min-cost transport of the full supply onto the demand
    /// (successive shortest augmenting paths; Bellman-Ford handles the
    /// negative reverse-edge costs, and the SSP invariant rules out negative
    /// cycles). Totals must be equal.
    pub fn min_cost_transport(
        supply: &[BigRational],
        demand: &[BigRational],
        cost: &[Vec<BigRational>],
    ) -> BigRational {
        let m = supply.len();
        let k = demand.len();
        let mut remaining_s = supply.to_vec();
        let mut remaining_d = demand.to_vec();
        // flow[i][j] currently shipped; residual forward cap is unlimited
        let mut flow = vec![vec![BigRational::zero(); k]; m];
        let mut total_cost = BigRational::zero();
        loop {
            if remaining_s.iter().all(|s| s.is_zero()) {
                return total_cost;
            }
            // Bellman-Ford over nodes: supplies 0..m, demands m..m+k; source
            // feeds every unsaturated supply at cost 0.
            let n = m + k;
            let mut dist: Vec<Option<BigRational>> = vec![None; n];
            let mut pred: Vec<Option<usize>> = vec![None; n];
            for (i, s) in remaining_s.iter().enumerate() {
                if s > &BigRational::zero() {
                    dist[i] = Some(BigRational::zero());
                }
            }
            for _ in 0..n {
                let mut changed = false;
                for i in 0..m {
                    for j in 0..k {
                        // forward edge i -> m+j, cost c_ij
                        if let Some(di) = dist[i].clone() {
                            let cand = di + &cost[i][j];
                            if dist[m + j].as_ref().is_none_or(|d| cand < *d) {
                                dist[m + j] = Some(cand);
                                pred[m + j] = Some(i);
                                changed = true;
                            }
                        }
                        // reverse edge m+j -> i, cost −c_ij, cap flow[i][j]
                        if flow[i][j] > BigRational::zero() {
                            if let Some(dj) = dist[m + j].clone() {
                                let cand = dj - &cost[i][j];
                                if dist[i].as_ref().is_none_or(|d| cand < *d) {
                                    dist[i] = Some(cand);
                                    pred[i] = Some(m + j);
                                    changed = true;
                                }
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            // cheapest reachable unsaturated demand
            let mut target: Option<usize> = None;
            for j in 0..k {
                if remaining_d[j] > BigRational::zero()
                    && dist[m + j].is_some()
                    && target.is_none_or(|t| dist[m + j] < dist[m + t])
                {
                    target = Some(j);
                }
            }
            let j = target.expect("equal totals guarantee an augmenting path");
            // walk predecessors to find the path and its bottleneck
            let mut path = Vec::new();
            let mut node = m + j;
            while let Some(p) = pred[node] {
                path.push((p, node));
                node = p;
            }
            path.reverse();
            let start_supply = node;
            let mut bottleneck = remaining_s[start_supply]
                .clone()
                .min(remaining_d[j].clone());
            for &(u, v) in &path {
                if u >= m {
                    // reverse edge (demand u-m) -> (supply v)
                    bottleneck = bottleneck.min(flow[v][u - m].clone());
                }
            }
            for &(u, v) in &path {
                if u < m {
                    flow[u][v - m] += &bottleneck;
                    total_cost += &bottleneck * &cost[u][v - m];
                } else {
                    flow[v][u - m] -= &bottleneck;
                    total_cost -= &bottleneck * &cost[v][u - m];
                }
            }
            remaining_s[start_supply] -= &bottleneck;
            remaining_d[j] -= &bottleneck;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn f(p: u64) -> FieldSpec {
        FieldSpec::new(p).unwrap()
    }

    fn line(p: u64) -> MetricSpace {
        MetricSpace::proj_line(f(p))
    }

    fn plane(p: u64) -> MetricSpace {
        MetricSpace::qp_vec(f(p), 2).unwrap()
    }

    fn two_points(d: BigRational) -> MetricSpace {
        MetricSpace::finite_points(
            vec!["a".into(), "b".into()],
            vec![
                vec![BigRational::zero(), d.clone()],
                vec![d, BigRational::zero()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn chordal_metric_values() {
        let sp = line(3);
        let d = |a: &str, b: &str| sp.distance(&Point::proj(a), &Point::proj(b)).unwrap();
        assert_eq!(d("0", "1"), ratio(1, 1));
        assert_eq!(d("0", "3"), ratio(1, 3));
        assert_eq!(d("0", "inf"), ratio(1, 1));
        assert_eq!(d("1/3", "inf"), ratio(1, 3));
        assert_eq!(d("inf", "inf"), ratio(0, 1));
        // 9 is p-adically small at p = 3: near 0, far from infinity
        assert_eq!(d("9", "0"), ratio(1, 9));
        assert_eq!(d("9", "inf"), ratio(1, 1));
        assert_eq!(d("1/9", "inf"), ratio(1, 9));
        assert_eq!(d("1/9", "0"), ratio(1, 1));
    }

    #[test]
    fn chordal_is_an_ultrametric() {
        let sp = line(3);
        let pts: Vec<Point> = ["0", "1", "3", "1/3", "2/9", "inf", "5", "1/9"]
            .iter()
            .map(|s| Point::proj(s))
            .collect();
        for x in &pts {
            for y in &pts {
                let dxy = sp.distance(x, y).unwrap();
                assert_eq!(dxy, sp.distance(y, x).unwrap());
                assert_eq!(dxy.is_zero(), x == y);
                for z in &pts {
                    let strong = sp.distance(x, z).unwrap().max(sp.distance(z, y).unwrap());
                    assert!(dxy <= strong, "ultrametric triangle failed");
                }
            }
        }
    }

    #[test]
    fn vector_distance_is_max_of_coordinates() {
        let sp = plane(3);
        let d = sp
            .distance(&Point::vec(&["1", "0"]), &Point::vec(&["1", "9"]))
            .unwrap();
        assert_eq!(d, ratio(1, 9));
        let d = sp
            .distance(&Point::vec(&["1/3", "0"]), &Point::vec(&["0", "0"]))
            .unwrap();
        assert_eq!(d, ratio(3, 1));
    }

    #[test]
    fn norm_space_distance_is_goldman_iwahori() {
        let sp = MetricSpace::norm_space(f(3), 2).unwrap();
        let std = Point::norm(&SplitNorm::standard(f(3), 2).unwrap()).unwrap();
        let diag = Point::norm(
            &SplitNorm::new(
                f(3),
                Matrix::identity(2),
                vec![ratio(0, 1), ratio(1, 1)],
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(sp.distance(&std, &diag).unwrap(), ratio(1, 1));
        assert!(sp.distance(&std, &std).unwrap().is_zero());
    }

    #[test]
    fn measure_constructor_merges_and_sorts() {
        let sp = two_points(ratio(1, 1));
        let mu = FiniteMeasure::new(
            sp.clone(),
            vec![
                (Point::label("b"), ratio(1, 4)),
                (Point::label("a"), ratio(1, 2)),
                (Point::label("b"), ratio(1, 4)),
            ],
        )
        .unwrap();
        assert_eq!(mu.atoms().len(), 2);
        assert_eq!(mu.atoms()[0].0, Point::label("a"));
        assert_eq!(mu.mass_at(&Point::label("b")), ratio(1, 2));
        assert!(mu.is_probability());

        assert!(FiniteMeasure::new(sp, vec![(Point::label("a"), ratio(0, 1))]).is_err());
    }

    #[test]
    fn pushforward_examples() {
        let sp = line(3);
        let mu = FiniteMeasure::dirac(sp.clone(), Point::proj("1")).unwrap();
        let nu = mu.pushforward(|p| moebius(&Matrix::from_int_rows(&[&[1, 1], &[0, 1]]), p)).unwrap();
        assert_eq!(nu, FiniteMeasure::dirac(sp.clone(), Point::proj("2")).unwrap());

        let uni = FiniteMeasure::uniform(sp.clone(), &[Point::proj("0"), Point::proj("1")]).unwrap();
        let collapsed = uni.pushforward(|_| Ok(Point::proj("5"))).unwrap();
        assert_eq!(collapsed, FiniteMeasure::dirac(sp.clone(), Point::proj("5")).unwrap());

        let four = FiniteMeasure::uniform(
            sp.clone(),
            &[Point::proj("0"), Point::proj("1"), Point::proj("2"), Point::proj("3")],
        )
        .unwrap();
        let two = four
            .pushforward(|p| match p {
                Point::Proj(z) if f(3).val(z) >= Valuation::Finite(1) || z.is_zero() => Ok(Point::proj("0")),
                _ => Ok(Point::proj("1")),
            })
            .unwrap();
        assert_eq!(two, FiniteMeasure::uniform(sp, &[Point::proj("0"), Point::proj("1")]).unwrap());
    }

    #[test]
    fn pushforward_is_functorial() {
        let sp = plane(3);
        let mu = FiniteMeasure::uniform(
            sp.clone(),
            &[Point::vec(&["1", "0"]), Point::vec(&["0", "1"]), Point::vec(&["1", "1"])],
        )
        .unwrap();
        let g1 = Matrix::from_int_rows(&[&[1, 1], &[0, 1]]);
        let g2 = Matrix::from_int_rows(&[&[0, 1], &[1, 0]]);
        let step = apply_group(&apply_group(&mu, &g1).unwrap(), &g2).unwrap();
        let composed = apply_group(&mu, &g2.mul(&g1).unwrap()).unwrap();
        assert_eq!(step, composed);
    }

    #[test]
    fn product_examples() {
        let sp = two_points(ratio(1, 1));
        let da = FiniteMeasure::dirac(sp.clone(), Point::label("a")).unwrap();
        let db = FiniteMeasure::dirac(sp.clone(), Point::label("b")).unwrap();
        let prod = product(&da, &db).unwrap();
        assert_eq!(prod.atoms().len(), 1);
        assert_eq!(prod.atoms()[0].0, Point::pair(Point::label("a"), Point::label("b")));

        let uni = FiniteMeasure::uniform(sp.clone(), &[Point::label("a"), Point::label("b")]).unwrap();
        let prod = product(&uni, &uni).unwrap();
        assert_eq!(prod.atoms().len(), 4);
        assert!(prod.is_probability());
        assert!(prod.atoms().iter().all(|(_, m)| *m == ratio(1, 4)));
    }

    #[test]
    fn prokhorov_examples() {
        let sp = two_points(ratio(1, 1));
        let da = FiniteMeasure::dirac(sp.clone(), Point::label("a")).unwrap();
        let db = FiniteMeasure::dirac(sp.clone(), Point::label("b")).unwrap();
        let uni = FiniteMeasure::uniform(sp.clone(), &[Point::label("a"), Point::label("b")]).unwrap();
        assert!(prokhorov(&da, &da).unwrap().is_zero());
        assert_eq!(prokhorov(&da, &db).unwrap(), ratio(1, 1));
        assert_eq!(prokhorov(&uni, &da).unwrap(), ratio(1, 2));

        // diracs at distance beyond 1 cap at 1; at small distance give d
        let far = two_points(ratio(9, 1));
        let da = FiniteMeasure::dirac(far.clone(), Point::label("a")).unwrap();
        let db = FiniteMeasure::dirac(far, Point::label("b")).unwrap();
        assert_eq!(prokhorov(&da, &db).unwrap(), ratio(1, 1));
        let near = two_points(ratio(1, 9));
        let da = FiniteMeasure::dirac(near.clone(), Point::label("a")).unwrap();
        let db = FiniteMeasure::dirac(near, Point::label("b")).unwrap();
        assert_eq!(prokhorov(&da, &db).unwrap(), ratio(1, 9));
    }

    #[test]
    fn prokhorov_requires_equal_mass_and_space() {
        let sp = two_points(ratio(1, 1));
        let da = FiniteMeasure::dirac(sp.clone(), Point::label("a")).unwrap();
        let half = da.scaled(&ratio(1, 2)).unwrap();
        assert!(matches!(prokhorov(&da, &half), Err(Error::MassMismatch(..))));
        let other = FiniteMeasure::dirac(line(3), Point::proj("0")).unwrap();
        assert!(matches!(prokhorov(&da, &other), Err(Error::SpaceMismatch)));
    }

    fn random_measure_pair(
        rng: &mut ChaCha12Rng,
        p: u64,
        support: usize,
    ) -> (FiniteMeasure, FiniteMeasure) {
        let sp = plane(p);
        let mut pts: Vec<Point> = Vec::new();
        while pts.len() < support {
            let c1 = rng.gen_range(-4i64..=4);
            let c2 = rng.gen_range(-4i64..=4);
            let pt = Point::Vec(vec![
                Scalar::from_ratio(c1, 3).unwrap(),
                Scalar::from_int(c2),
            ]);
            if !pts.contains(&pt) {
                pts.push(pt);
            }
        }
        let n_nu = support.saturating_sub(rng.gen_range(0..2)).max(1);
        let mut make = |n: usize| {
            let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=6)).collect();
            let total: i64 = weights.iter().sum();
            let atoms = weights
                .iter()
                .enumerate()
                .map(|(i, w)| (pts[i].clone(), ratio(*w, total)))
                .collect();
            FiniteMeasure::new(sp.clone(), atoms).unwrap()
        };
        let mu = make(support);
        let nu = make(n_nu);
        (mu, nu)
    }

    #[test]
    fn prokhorov_flow_agrees_with_subset_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x906);
        for _ in 0..25 {
            let support = rng.gen_range(1..=5);
            let (mu, nu) = random_measure_pair(&mut rng, 3, support);
            assert_eq!(prokhorov(&mu, &nu).unwrap(), prokhorov_oracle(&mu, &nu).unwrap());
        }
    }

    #[test]
    fn prokhorov_metric_axioms_sample() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x907);
        for _ in 0..15 {
            let (mu, nu) = random_measure_pair(&mut rng, 3, 4);
            let (rho, _) = random_measure_pair(&mut rng, 3, 3);
            let dmn = prokhorov(&mu, &nu).unwrap();
            assert_eq!(dmn, prokhorov(&nu, &mu).unwrap());
            assert!(prokhorov(&mu, &mu).unwrap().is_zero());
            assert_eq!(dmn.is_zero(), mu == nu);
            let through = prokhorov(&mu, &rho).unwrap() + prokhorov(&rho, &nu).unwrap();
            assert!(dmn <= through, "triangle inequality failed");
        }
    }

    #[test]
    fn prokhorov_is_isometry_invariant() {
        // GL_2(Z_p) acts on Q_p^2 by max-norm isometries
        let mut rng = ChaCha12Rng::seed_from_u64(0x908);
        let gs = [
            Matrix::from_int_rows(&[&[0, 1], &[1, 0]]),
            Matrix::from_int_rows(&[&[1, 1], &[0, 1]]),
            Matrix::from_int_rows(&[&[2, 3], &[1, 2]]),
        ];
        for _ in 0..10 {
            let (mu, nu) = random_measure_pair(&mut rng, 3, 4);
            let base = prokhorov(&mu, &nu).unwrap();
            for g in &gs {
                let d = prokhorov(&apply_group(&mu, g).unwrap(), &apply_group(&nu, g).unwrap()).unwrap();
                assert_eq!(d, base);
            }
        }
    }

    #[test]
    fn proper_action_probe() {
        // masses > 1/2 on K for both μ and gμ force gK ∩ K ≠ ∅
        let mut rng = ChaCha12Rng::seed_from_u64(0x909);
        let g = Matrix::from_int_rows(&[&[1, 1], &[0, 1]]);
        for _ in 0..20 {
            let (mu, _) = random_measure_pair(&mut rng, 3, 4);
            let k_set: Vec<Point> = mu.support().take(3).cloned().collect();
            let gmu = apply_group(&mu, &g).unwrap();
            if mu.mass_of(&k_set) > ratio(1, 2) && gmu.mass_of(&k_set) > ratio(1, 2) {
                let gk: Vec<Point> = k_set
                    .iter()
                    .map(|p| match p {
                        Point::Vec(x) => Point::Vec(g.mat_vec(x).unwrap()),
                        _ => unreachable!(),
                    })
                    .collect();
                assert!(gk.iter().any(|p| k_set.contains(p)), "translates must overlap");
            }
        }
    }

    #[test]
    fn wasserstein_examples() {
        let sp = two_points(ratio(1, 1));
        let da = FiniteMeasure::dirac(sp.clone(), Point::label("a")).unwrap();
        let db = FiniteMeasure::dirac(sp.clone(), Point::label("b")).unwrap();
        let uni = FiniteMeasure::uniform(sp, &[Point::label("a"), Point::label("b")]).unwrap();
        assert!(wasserstein(&da, &da).unwrap().is_zero());
        assert_eq!(wasserstein(&da, &db).unwrap(), ratio(1, 1));
        assert_eq!(wasserstein(&uni, &da).unwrap(), ratio(1, 2));

        let far = two_points(ratio(9, 1));
        let da = FiniteMeasure::dirac(far.clone(), Point::label("a")).unwrap();
        let db = FiniteMeasure::dirac(far, Point::label("b")).unwrap();
        assert_eq!(wasserstein(&da, &db).unwrap(), ratio(1, 1), "cost truncates at 1");
    }

    #[test]
    fn wasserstein_metric_axioms_sample() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x90A);
        for _ in 0..10 {
            let (mu, nu) = random_measure_pair(&mut rng, 3, 4);
            let (rho, _) = random_measure_pair(&mut rng, 3, 3);
            let dmn = wasserstein(&mu, &nu).unwrap();
            assert_eq!(dmn, wasserstein(&nu, &mu).unwrap());
            assert_eq!(dmn.is_zero(), mu == nu);
            let through = wasserstein(&mu, &rho).unwrap() + wasserstein(&rho, &nu).unwrap();
            assert!(dmn <= through);
        }
    }

    #[test]
    fn tightness_examples() {
        let sp = two_points(ratio(1, 1));
        let uni = FiniteMeasure::uniform(sp.clone(), &[Point::label("a"), Point::label("b")]).unwrap();
        let da = FiniteMeasure::dirac(sp.clone(), Point::label("a")).unwrap();
        let both = vec![Point::label("a"), Point::label("b")];
        let only_a = vec![Point::label("a")];
        assert_eq!(tightness_check(&[uni.clone(), da.clone()], &both), ratio(1, 1));
        assert_eq!(tightness_check(&[uni.clone(), da], &only_a), ratio(1, 2));
        let quarter_out = FiniteMeasure::new(
            sp,
            vec![(Point::label("a"), ratio(3, 4)), (Point::label("b"), ratio(1, 4))],
        )
        .unwrap();
        assert_eq!(tightness_check(&[quarter_out], &only_a), ratio(3, 4));
        assert_eq!(tightness_check(&[], &only_a), ratio(1, 1));
    }

    fn label_space(k: usize) -> MetricSpace {
        let labels: Vec<String> = (0..k).map(|i| format!("x{i}")).collect();
        let distances: Vec<Vec<BigRational>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { BigRational::zero() } else { ratio(1, 1) })
                    .collect()
            })
            .collect();
        MetricSpace::finite_points(labels, distances).unwrap()
    }

    #[test]
    fn decompose_atoms_examples() {
        let total = label_space(4);
        let base = label_space(3);
        let mu = FiniteMeasure::new(
            total.clone(),
            vec![
                (Point::label("x0"), ratio(1, 2)),
                (Point::label("x1"), ratio(1, 4)),
                (Point::label("x2"), ratio(1, 4)),
            ],
        )
        .unwrap();
        // π carries each label to the same label of the smaller base space
        let pi = |p: &Point| -> Result<Point> { Ok(p.clone()) };
        let dec = decompose_atoms(&mu, base.clone(), pi).unwrap();
        assert_eq!(dec.levels.len(), 2);
        assert_eq!(dec.levels[0].lambda, ratio(1, 2));
        assert_eq!(dec.levels[0].base_points.len(), 1);
        assert_eq!(dec.levels[1].lambda, ratio(1, 4));
        assert_eq!(dec.levels[1].base_points.len(), 2);
        assert!(dec.continuous_part.atoms().is_empty());

        // uniform over an injective map: single level
        let uni = FiniteMeasure::uniform(
            total.clone(),
            &[Point::label("x0"), Point::label("x1"), Point::label("x2")],
        )
        .unwrap();
        let dec = decompose_atoms(&uni, base.clone(), pi).unwrap();
        assert_eq!(dec.levels.len(), 1);
        assert_eq!(dec.levels[0].lambda, ratio(1, 3));
        assert_eq!(dec.levels[0].part, uni);

        let dirac = FiniteMeasure::dirac(total, Point::label("x1")).unwrap();
        let dec = decompose_atoms(&dirac, base, pi).unwrap();
        assert_eq!(dec.levels.len(), 1);
        assert_eq!(dec.levels[0].lambda, ratio(1, 1));
        assert_eq!(dec.levels[0].part, dirac);
    }

    #[test]
    fn disintegration_examples_and_roundtrip() {
        let total = label_space(4);
        let base = label_space(2);
        let pairs = vec![
            (Point::label("x0"), Point::label("x0")),
            (Point::label("x1"), Point::label("x0")),
            (Point::label("x2"), Point::label("x1")),
            (Point::label("x3"), Point::label("x1")),
        ];
        let fib = Fibration::new(
            total.clone(),
            base.clone(),
            pairs,
            vec![Point::label("x0"), Point::label("x1")],
        )
        .unwrap();

        let mu = FiniteMeasure::uniform(
            total.clone(),
            &[Point::label("x0"), Point::label("x1"), Point::label("x2"), Point::label("x3")],
        )
        .unwrap();
        let (nu, family) = disintegrate(&mu, &fib).unwrap();
        assert_eq!(nu, FiniteMeasure::uniform(base.clone(), &[Point::label("x0"), Point::label("x1")]).unwrap());
        assert_eq!(family.len(), 2);
        for (_, mu_u) in &family {
            assert!(mu_u.is_probability());
            assert_eq!(mu_u.atoms().len(), 2);
            assert!(mu_u.atoms().iter().all(|(_, m)| *m == ratio(1, 2)));
        }

        let dirac = FiniteMeasure::dirac(total.clone(), Point::label("x2")).unwrap();
        let (nu, family) = disintegrate(&dirac, &fib).unwrap();
        assert_eq!(nu, FiniteMeasure::dirac(base.clone(), Point::label("x1")).unwrap());
        assert_eq!(family.len(), 1);
        assert_eq!(family[0].1, dirac);

        let weighted = FiniteMeasure::new(
            total,
            vec![
                (Point::label("x0"), ratio(1, 2)),
                (Point::label("x2"), ratio(1, 4)),
                (Point::label("x3"), ratio(1, 4)),
            ],
        )
        .unwrap();
        let (nu, family) = disintegrate(&weighted, &fib).unwrap();
        assert_eq!(nu.mass_at(&Point::label("x0")), ratio(1, 2));
        assert_eq!(nu.mass_at(&Point::label("x1")), ratio(1, 2));
        let fiber1 = &family.iter().find(|(u, _)| u == &Point::label("x1")).unwrap().1;
        assert!(fiber1.atoms().iter().all(|(_, m)| *m == ratio(1, 2)));
    }

    #[test]
    fn fibration_validation() {
        let total = label_space(2);
        let base = label_space(2);
        // not surjective onto the listed base
        let err = Fibration::new(
            total.clone(),
            base.clone(),
            vec![
                (Point::label("x0"), Point::label("x0")),
                (Point::label("x1"), Point::label("x0")),
            ],
            vec![Point::label("x0"), Point::label("x1")],
        );
        assert!(matches!(err, Err(Error::InvalidFibration(_))));
        // image outside the base list
        let err = Fibration::new(
            total,
            base,
            vec![(Point::label("x0"), Point::label("x1"))],
            vec![Point::label("x0")],
        );
        assert!(matches!(err, Err(Error::InvalidFibration(_))));
    }

    #[test]
    fn apply_group_examples() {
        let sp = plane(3);
        let mu = FiniteMeasure::dirac(sp, Point::vec(&["1", "1"])).unwrap();
        let stretched = apply_group(&mu, &Matrix::from_int_rows(&[&[3, 0], &[0, 1]])).unwrap();
        assert_eq!(stretched.atoms()[0].0, Point::vec(&["3", "1"]));

        let tri = FiniteMeasure::uniform(
            line(3),
            &[Point::proj("0"), Point::proj("1"), Point::proj("inf")],
        )
        .unwrap();
        let inverted = apply_group(&tri, &Matrix::from_int_rows(&[&[0, 1], &[1, 0]])).unwrap();
        assert_eq!(inverted, tri, "z -> 1/z permutes {{0,1,inf}}");

        let id = apply_group(&tri, &Matrix::identity(2)).unwrap();
        assert_eq!(id, tri);

        let singular = Matrix::from_int_rows(&[&[1, 0], &[0, 0]]);
        assert!(apply_group(&tri, &singular).is_err());
    }

    #[test]
    fn moebius_handles_infinity() {
        let g = Matrix::from_int_rows(&[&[0, 1], &[1, 0]]); // z -> 1/z
        assert_eq!(moebius(&g, &Point::proj("0")).unwrap(), Point::Infinity);
        assert_eq!(moebius(&g, &Point::Infinity).unwrap(), Point::proj("0"));
        assert_eq!(moebius(&g, &Point::proj("3")).unwrap(), Point::proj("1/3"));
        let translate = Matrix::from_int_rows(&[&[1, 1], &[0, 1]]);
        assert_eq!(moebius(&translate, &Point::Infinity).unwrap(), Point::Infinity);
    }

    #[test]
    fn stab_search_examples() {
        let sp = line(3);
        // both generators fix the point 1... use a point fixed by both
        let swap = Matrix::from_int_rows(&[&[0, 1], &[1, 0]]);
        let scale = Matrix::from_int_rows(&[&[3, 0], &[0, 1]]);

        // δ_1 under z -> 1/z: fixed; all words of the cyclic group stabilize
        let d1 = FiniteMeasure::dirac(sp.clone(), Point::proj("1")).unwrap();
        let g = MatGroup::new(f(3), vec![swap.clone()]).unwrap();
        let words = stab_search(&d1, &g, 3).unwrap();
        assert_eq!(words.len(), word_ball(&g, 3).unwrap().len());

        // uniform{0,1,inf} with {1/z, 1-z}: every word permutes the support
        let tri = FiniteMeasure::uniform(
            sp.clone(),
            &[Point::proj("0"), Point::proj("1"), Point::proj("inf")],
        )
        .unwrap();
        let one_minus = Matrix::from_int_rows(&[&[-1, 1], &[0, 1]]);
        let g = MatGroup::new(f(3), vec![swap, one_minus]).unwrap();
        let words = stab_search(&tri, &g, 3).unwrap();
        assert_eq!(words.len(), word_ball(&g, 3).unwrap().len());

        // z -> pz fixes 0 and inf pointwise
        let zero_inf = FiniteMeasure::uniform(sp.clone(), &[Point::proj("0"), Point::proj("inf")]).unwrap();
        let g = MatGroup::new(f(3), vec![scale]).unwrap();
        let words = stab_search(&zero_inf, &g, 3).unwrap();
        assert_eq!(words.len(), word_ball(&g, 3).unwrap().len());

        // z -> z+1 moves 0 off the support: only the empty word survives
        let translate = Matrix::from_int_rows(&[&[1, 1], &[0, 1]]);
        let g = MatGroup::new(f(3), vec![translate]).unwrap();
        let words = stab_search(&zero_inf, &g, 3).unwrap();
        assert_eq!(words, vec![Word::new()]);
    }

    #[test]
    fn fibered_stab_identity() {
        // fibration of {0, inf} ∪ {1} over two base labels; group = S_3 lifts
        let sp = line(3);
        let mu = FiniteMeasure::new(
            sp.clone(),
            vec![
                (Point::proj("0"), ratio(1, 4)),
                (Point::proj("inf"), ratio(1, 4)),
                (Point::proj("1"), ratio(1, 2)),
            ],
        )
        .unwrap();
        let base = label_space(2);
        let fib = Fibration::new(
            sp,
            base,
            vec![
                (Point::proj("0"), Point::label("x0")),
                (Point::proj("inf"), Point::label("x0")),
                (Point::proj("1"), Point::label("x1")),
            ],
            vec![Point::label("x0"), Point::label("x1")],
        )
        .unwrap();
        let swap = Matrix::from_int_rows(&[&[0, 1], &[1, 0]]);
        let one_minus = Matrix::from_int_rows(&[&[-1, 1], &[0, 1]]);
        let g = MatGroup::new(f(3), vec![swap, one_minus]).unwrap();
        let report = stab_search_fibered(&mu, &fib, &g, 2).unwrap();
        assert!(report.identity_holds);
        // z -> 1/z fixes both fiber measures, z -> 1-z does not fix {0,inf}
        assert!(report.family.contains(&vec![1]));
        assert!(!report.family.contains(&vec![2]));
    }

    #[test]
    fn measure_json_round_trip() {
        let sp = plane(3);
        let mu = FiniteMeasure::new(
            sp,
            vec![
                (Point::vec(&["1/3", "2"]), ratio(2, 3)),
                (Point::vec(&["0", "0"]), ratio(1, 3)),
            ],
        )
        .unwrap();
        let v = mu.to_json();
        assert_eq!(v["atoms"][1]["mass"], json!("2/3"));
        let back = FiniteMeasure::from_json(f(3), &v).unwrap();
        assert_eq!(back, mu);

        let line_mu = FiniteMeasure::uniform(
            line(5),
            &[Point::proj("0"), Point::proj("inf")],
        )
        .unwrap();
        let back = FiniteMeasure::from_json(f(5), &line_mu.to_json()).unwrap();
        assert_eq!(back, line_mu);

        let finite = FiniteMeasure::uniform(two_points(ratio(1, 2)), &[Point::label("a")]).unwrap();
        let back = FiniteMeasure::from_json(f(3), &finite.to_json()).unwrap();
        assert_eq!(back, finite);
    }

    #[test]
    fn norm_space_measures_dedup_homothetic_atoms() {
        let sp = MetricSpace::norm_space(f(3), 2).unwrap();
        let n = SplitNorm::standard(f(3), 2).unwrap();
        let shifted = n.shifted(&ratio(2, 1));
        let mu = FiniteMeasure::new(
            sp,
            vec![
                (Point::norm(&n).unwrap(), ratio(1, 2)),
                (Point::norm(&shifted).unwrap(), ratio(1, 2)),
            ],
        )
        .unwrap();
        assert_eq!(mu.atoms().len(), 1, "homothetic atoms merge");
        assert!(mu.is_probability());
    }
}
