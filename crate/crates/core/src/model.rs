//! Local Hilbert space, elementary operators and the Hamiltonian terms of the
//! cavity array.
//!
//! Every site hosts a four-level atom (levels `1..=4`) and a single cavity
//! mode truncated to `n_max` photons. The local basis is atom-major:
//! `index = (level - 1) * (n_max + 1) + n`.
//!
//! The polariton number `n_pol = 2 σ⁴⁴ + σ³³ + σ²² + a†a` is diagonal in this
//! basis and its sum over the chain is conserved by the Hamiltonian
//!
//! ```text
//! H = Σ_i [ Δ σ⁴⁴_i + (Ω σ²³_i + g₁ σ¹³_i a†_i + h.c.)
//!         + (−t a_i a†_{i+1} + g₂ σ²⁴_i a†_{i+1} + h.c.) ]
//! ```
//!
//! with open boundaries, so the bond part only runs over `i = 1..L-1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Integer polariton charge.
pub type Charge = i32;

/// Number of atomic levels per site.
pub const ATOM_LEVELS: usize = 4;

/// Polariton weight of each atomic level, `w(1..=4) = (0, 1, 1, 2)`.
const LEVEL_WEIGHT: [Charge; ATOM_LEVELS] = [0, 1, 1, 2];

/// Default dense/sparse assembly guard: total chain dimension `16^6`.
pub const DEFAULT_ASSEMBLY_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteBasis {
    n_max: usize,
    charges: Vec<Charge>,
}

impl SiteBasis {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParameter(format!(
                "photon cutoff must be at least 1, got {n_max}"
            )));
        }
        let mut charges = Vec::with_capacity(ATOM_LEVELS * (n_max + 1));
        for w in LEVEL_WEIGHT {
            for n in 0..=n_max {
                charges.push(w + n as Charge);
            }
        }
        Ok(Self { n_max, charges })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.charges.len()
    }

    /// Basis index of atom `level` (1-based) with `photons` in the cavity.
    pub fn index(&self, level: usize, photons: usize) -> usize {
        debug_assert!((1..=ATOM_LEVELS).contains(&level) && photons <= self.n_max);
        (level - 1) * (self.n_max + 1) + photons
    }

    /// Atom level (1-based) of a basis index.
    pub fn level(&self, index: usize) -> usize {
        index / (self.n_max + 1) + 1
    }

    pub fn photons(&self, index: usize) -> usize {
        index % (self.n_max + 1)
    }

    pub fn charge(&self, index: usize) -> Charge {
        self.charges[index]
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    /// Largest local polariton charge, `n_max + 2`.
    pub fn max_charge(&self) -> Charge {
        self.n_max as Charge + 2
    }

    /// The local polariton number operator.
    pub fn number_op(&self) -> LocalOperator {
        LocalOperator::diagonal(self.charges.iter().map(|&q| q as f64).collect())
    }

    pub fn identity(&self) -> LocalOperator {
        LocalOperator {
            matrix: DMatrix::identity(self.dim(), self.dim()),
            shift: ChargeShift::Homogeneous(0),
        }
    }

    /// Photon annihilation operator, identity on the atom.
    pub fn annihilation(&self) -> LocalOperator {
        let dim = self.dim();
        let mut matrix = DMatrix::zeros(dim, dim);
        for level in 1..=ATOM_LEVELS {
            for n in 1..=self.n_max {
                matrix[(self.index(level, n - 1), self.index(level, n))] = (n as f64).sqrt();
            }
        }
        LocalOperator {
            matrix,
            shift: ChargeShift::Homogeneous(-1),
        }
    }

    /// Photon creation operator, truncated so that `a†|n_max⟩ = 0`.
    pub fn creation(&self) -> LocalOperator {
        self.annihilation().adjoint()
    }

    /// Atomic transition operator `σ^{mn} = |m⟩⟨n|`, identity on the photon.
    pub fn atomic(&self, m: usize, n: usize) -> Result<LocalOperator> {
        for level in [m, n] {
            if !(1..=ATOM_LEVELS).contains(&level) {
                return Err(Error::InvalidParameter(format!(
                    "atomic level {level} outside 1..={ATOM_LEVELS}"
                )));
            }
        }
        let dim = self.dim();
        let mut matrix = DMatrix::zeros(dim, dim);
        for p in 0..=self.n_max {
            matrix[(self.index(m, p), self.index(n, p))] = 1.0;
        }
        Ok(LocalOperator {
            matrix,
            shift: ChargeShift::Homogeneous(LEVEL_WEIGHT[m - 1] - LEVEL_WEIGHT[n - 1]),
        })
    }
}

/// Change in polariton charge produced by an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChargeShift {
    Homogeneous(Charge),
    Mixed,
}

impl ChargeShift {
    pub fn value(self) -> Option<Charge> {
        match self {
            ChargeShift::Homogeneous(q) => Some(q),
            ChargeShift::Mixed => None,
        }
    }
}

/// A real matrix acting on a single site.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    matrix: DMatrix<f64>,
    shift: ChargeShift,
}

impl LocalOperator {
    /// A diagonal operator, which never changes the charge.
    pub fn diagonal(values: Vec<f64>) -> Self {
        Self {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values)),
            shift: ChargeShift::Homogeneous(0),
        }
    }

    /// Wraps a matrix, inferring its charge shift from the nonzero pattern.
    pub fn from_matrix(basis: &SiteBasis, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(Error::InvalidParameter(format!(
                "operator is {}x{}, basis has dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                basis.dim()
            )));
        }
        let mut shift = None;
        let mut mixed = false;
        for c in 0..matrix.ncols() {
            for r in 0..matrix.nrows() {
                if matrix[(r, c)] != 0.0 {
                    let q = basis.charge(r) - basis.charge(c);
                    match shift {
                        None => shift = Some(q),
                        Some(s) if s != q => mixed = true,
                        _ => {}
                    }
                }
            }
        }
        let shift = if mixed {
            ChargeShift::Mixed
        } else {
            ChargeShift::Homogeneous(shift.unwrap_or(0))
        };
        Ok(Self { matrix, shift })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn shift(&self) -> ChargeShift {
        self.shift
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            shift: match self.shift {
                ChargeShift::Homogeneous(q) => ChargeShift::Homogeneous(-q),
                ChargeShift::Mixed => ChargeShift::Mixed,
            },
        }
    }

    pub fn product(&self, rhs: &Self) -> Self {
        let shift = match (self.shift, rhs.shift) {
            (ChargeShift::Homogeneous(a), ChargeShift::Homogeneous(b)) => {
                ChargeShift::Homogeneous(a + b)
            }
            _ => ChargeShift::Mixed,
        };
        Self {
            matrix: &self.matrix * &rhs.matrix,
            shift,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            shift: self.shift,
        }
    }

    /// Sum of two operators. The shift stays homogeneous only if both agree
    /// (a zero operand adopts the other's shift).
    pub fn sum(&self, rhs: &Self) -> Self {
        let shift = if self.is_zero() {
            rhs.shift
        } else if rhs.is_zero() || self.shift == rhs.shift {
            self.shift
        } else {
            ChargeShift::Mixed
        };
        Self {
            matrix: &self.matrix + &rhs.matrix,
            shift,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&x| x == 0.0)
    }

    /// Nonzero entries as `(row, col, value)`, column-major order.
    pub fn nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for c in 0..self.matrix.ncols() {
            for r in 0..self.matrix.nrows() {
                let v = self.matrix[(r, c)];
                if v != 0.0 {
                    out.push((r, c, v));
                }
            }
        }
        out
    }
}

/// Hamiltonian couplings in units of the drive strength `omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub omega: f64,
    pub g1: f64,
    pub g2: f64,
    pub t: f64,
    pub delta: f64,
    pub n_max: usize,
    #[serde(rename = "L")]
    pub length: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            omega: 1.0,
            g1: 0.8,
            g2: 1.35,
            t: 0.25,
            delta: -2.0,
            n_max: 3,
            length: 4,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if self.length < 2 {
            return Err(Error::InvalidParameter(format!(
                "chain length must be at least 2, got {}",
                self.length
            )));
        }
        for (name, v) in [
            ("g1", self.g1),
            ("g2", self.g2),
            ("t", self.t),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    pub fn with_length(&self, length: usize) -> Self {
        Self {
            length,
            ..self.clone()
        }
    }

    pub fn with_g2(&self, g2: f64) -> Self {
        Self { g2, ..self.clone() }
    }

    pub fn with_t(&self, t: f64) -> Self {
        Self { t, ..self.clone() }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }
}

/// One product term `coeff · left ⊗ right` of a bond Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct BondTerm {
    pub left: LocalOperator,
    pub right: LocalOperator,
    pub coeff: f64,
}

/// Nearest-neighbour coupling as a sum of product terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BondOperator {
    pub terms: Vec<BondTerm>,
}

impl BondOperator {
    /// Two-site matrix in the basis `left_index * d + right_index`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.terms.first().map_or(0, |t| t.left.dim());
        let mut out = DMatrix::zeros(d * d, d * d);
        for term in &self.terms {
            out += term.left.matrix().kronecker(term.right.matrix()) * term.coeff;
        }
        out
    }
}

pub fn site_hamiltonian(params: &ModelParams, basis: &SiteBasis) -> LocalOperator {
    let s = |m, n| basis.atomic(m, n).expect("levels in range");
    let a = basis.annihilation();
    let ad = basis.creation();
    let matrix = s(4, 4).matrix() * params.delta
        + (s(2, 3).matrix() + s(3, 2).matrix()) * params.omega
        + (s(1, 3).product(&ad).matrix() + s(3, 1).product(&a).matrix()) * params.g1;
    LocalOperator {
        matrix,
        shift: ChargeShift::Homogeneous(0),
    }
}

/// Bond terms `−t (a ⊗ a† + a† ⊗ a) + g₂ (σ²⁴ ⊗ a† + σ⁴² ⊗ a)`, in that order.
pub fn bond_hamiltonian(params: &ModelParams, basis: &SiteBasis) -> BondOperator {
    let a = basis.annihilation();
    let ad = basis.creation();
    let s24 = basis.atomic(2, 4).expect("levels in range");
    let s42 = basis.atomic(4, 2).expect("levels in range");
    BondOperator {
        terms: vec![
            BondTerm {
                left: a.clone(),
                right: ad.clone(),
                coeff: -params.t,
            },
            BondTerm {
                left: ad.clone(),
                right: a.clone(),
                coeff: -params.t,
            },
            BondTerm {
                left: s24,
                right: ad,
                coeff: params.g2,
            },
            BondTerm {
                left: s42,
                right: a,
                coeff: params.g2,
            },
        ],
    }
}

/// A uniform open chain described by one site term and one bond term.
///
/// This is what the solvers consume; it is independent of the specific
/// cavity model so that tests can feed simpler chains through the same code.
#[derive(Debug, Clone)]
pub struct Chain {
    pub length: usize,
    pub charges: Vec<Charge>,
    pub site: LocalOperator,
    pub bond: BondOperator,
}

impl Chain {
    pub fn from_params(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let basis = SiteBasis::new(params.n_max)?;
        let bond = bond_hamiltonian(params, &basis);
        Ok(Self {
            length: params.length,
            charges: basis.charges().to_vec(),
            site: site_hamiltonian(params, &basis),
            bond: BondOperator {
                terms: bond.terms.into_iter().filter(|t| t.coeff != 0.0).collect(),
            },
        })
    }

    pub fn local_dim(&self) -> usize {
        self.charges.len()
    }

    pub fn max_charge(&self) -> Charge {
        self.charges.iter().copied().max().unwrap_or(0)
    }
}

/// Decodes a full-chain product index into local states, site 1 first.
pub fn decode_product(mut index: usize, length: usize, d: usize, out: &mut [usize]) {
    for slot in out[..length].iter_mut().rev() {
        *slot = index % d;
        index /= d;
    }
}

/// Assembles the Hamiltonian on the full `d^L` product space.
///
/// Product states are indexed site-major with site 1 the most significant
/// digit. Fails when `d^L` exceeds `limit`.
pub fn assemble_hamiltonian(params: &ModelParams, limit: usize) -> Result<CsrMatrix> {
    let chain = Chain::from_params(params)?;
    let d = chain.local_dim();
    let l = chain.length;
    let dim = (d as u128).pow(l as u32);
    if dim > limit as u128 {
        return Err(Error::DimensionLimit {
            dim: dim.min(usize::MAX as u128) as usize,
            limit,
        });
    }
    let dim = dim as usize;
    let site_nz = chain.site.nonzeros();
    let bond_nz: Vec<_> = chain
        .bond
        .terms
        .iter()
        .map(|t| (t.left.nonzeros(), t.right.nonzeros(), t.coeff))
        .collect();
    let stride: Vec<usize> = (0..l).map(|i| d.pow((l - 1 - i) as u32)).collect();
    let mut states = vec![0usize; l];
    let mut builder = crate::sparse::CsrBuilder::new(dim);
    let mut column = Vec::new();
    for col in 0..dim {
        decode_product(col, l, d, &mut states);
        column.clear();
        for (i, &s) in states.iter().enumerate() {
            for &(r, c, v) in &site_nz {
                if c == s {
                    column.push((col - s * stride[i] + r * stride[i], v));
                }
            }
        }
        for i in 0..l - 1 {
            let (si, sj) = (states[i], states[i + 1]);
            for (lnz, rnz, coeff) in &bond_nz {
                for &(ri, ci, vi) in lnz {
                    if ci != si {
                        continue;
                    }
                    for &(rj, cj, vj) in rnz {
                        if cj != sj {
                            continue;
                        }
                        let row = col - si * stride[i] - sj * stride[i + 1]
                            + ri * stride[i]
                            + rj * stride[i + 1];
                        column.push((row, coeff * vi * vj));
                    }
                }
            }
        }
        builder.push_column(col, &column);
    }
    Ok(builder.finish())
}

/// Diagonal of the total polariton number on the full product space.
pub fn total_charge_diagonal(basis: &SiteBasis, length: usize) -> Vec<Charge> {
    let d = basis.dim();
    let dim = d.pow(length as u32);
    let mut states = vec![0usize; length];
    (0..dim)
        .map(|idx| {
            decode_product(idx, length, d, &mut states);
            states.iter().map(|&s| basis.charge(s)).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_chain(length: usize) -> ModelParams {
        ModelParams {
            length,
            ..ModelParams::default()
        }
    }

    #[test]
    fn site_basis_dimensions_and_charges() {
        let b = SiteBasis::new(3).unwrap();
        assert_eq!(b.dim(), 16);
        assert_eq!(b.charge(b.index(1, 0)), 0);
        assert_eq!(b.charge(b.index(4, 1)), 3);
        assert_eq!(b.charge(b.index(2, 3)), 4);
        assert_eq!(b.max_charge(), 5);
        for idx in 0..b.dim() {
            assert_eq!(b.index(b.level(idx), b.photons(idx)), idx);
        }
        assert!(SiteBasis::new(0).is_err());
        assert_eq!(SiteBasis::new(1).unwrap().dim(), 8);
    }

    #[test]
    fn ladder_operator_elements() {
        let b = SiteBasis::new(3).unwrap();
        let a = b.annihilation();
        assert_eq!(a.shift(), ChargeShift::Homogeneous(-1));
        assert_eq!(a.matrix()[(b.index(1, 0), b.index(1, 1))], 1.0);
        assert!((a.matrix()[(b.index(3, 1), b.index(3, 2))] - 2f64.sqrt()).abs() < 1e-15);
        for lvl in 1..=4 {
            let col = b.index(lvl, 0);
            assert!(a.matrix().column(col).iter().all(|&x| x == 0.0));
        }
        let ad = b.creation();
        for lvl in 1..=4 {
            assert!(ad.matrix().column(b.index(lvl, 3)).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn atomic_operator_shifts() {
        let b = SiteBasis::new(3).unwrap();
        assert_eq!(b.atomic(2, 3).unwrap().shift(), ChargeShift::Homogeneous(0));
        assert_eq!(b.atomic(1, 3).unwrap().shift(), ChargeShift::Homogeneous(-1));
        assert_eq!(b.atomic(2, 4).unwrap().shift(), ChargeShift::Homogeneous(-1));
        let s44 = b.atomic(4, 4).unwrap();
        assert_eq!(s44.product(&s44).matrix(), s44.matrix());
        assert!(b.atomic(0, 1).is_err());
        assert!(b.atomic(1, 5).is_err());
    }

    #[test]
    fn operator_shift_inference() {
        let b = SiteBasis::new(3).unwrap();
        let a = b.annihilation();
        let inferred = LocalOperator::from_matrix(&b, a.matrix().clone()).unwrap();
        assert_eq!(inferred.shift(), ChargeShift::Homogeneous(-1));
        let mixed = a.sum(&b.creation());
        assert_eq!(mixed.shift(), ChargeShift::Mixed);
        let inferred = LocalOperator::from_matrix(&b, mixed.matrix().clone()).unwrap();
        assert_eq!(inferred.shift(), ChargeShift::Mixed);
    }

    #[test]
    fn site_hamiltonian_blocks() {
        let b = SiteBasis::new(3).unwrap();
        let p = ModelParams {
            g1: 0.0,
            omega: 1.0,
            delta: -2.0,
            ..ModelParams::default()
        };
        let h = site_hamiltonian(&p, &b);
        for n in 0..=3 {
            let (i2, i3) = (b.index(2, n), b.index(3, n));
            let m = h.matrix();
            let block = nalgebra::Matrix2::new(m[(i2, i2)], m[(i2, i3)], m[(i3, i2)], m[(i3, i3)]);
            let mut ev: Vec<f64> = block.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
        }
        let p = default_chain(2);
        let h = site_hamiltonian(&p, &b);
        assert_eq!(h.matrix()[(b.index(1, 1), b.index(3, 0))], 0.8);
        let asym = (h.matrix() - h.matrix().transpose()).amax();
        assert!(asym <= 1e-15);
        let n = b.number_op();
        let comm = h.matrix() * n.matrix() - n.matrix() * h.matrix();
        assert!(comm.amax() < 1e-14);
    }

    #[test]
    fn bond_hamiltonian_structure() {
        let b = SiteBasis::new(3).unwrap();
        let p = default_chain(2);
        let bond = bond_hamiltonian(&p, &b);
        assert_eq!(bond.terms.len(), 4);
        for term in &bond.terms {
            let (l, r) = (term.left.shift().value().unwrap(), term.right.shift().value().unwrap());
            assert_eq!(l + r, 0);
        }
        let m = bond.to_matrix();
        assert!((&m - m.transpose()).amax() < 1e-15);
        let d = b.dim();
        for n in 0..=3 {
            let row = b.index(2, n) * d + b.index(1, 1);
            let col = b.index(4, n) * d + b.index(1, 0);
            assert_eq!(m[(row, col)], 1.35);
        }
        let q = b.number_op();
        let id = b.identity();
        let total = q.matrix().kronecker(id.matrix()) + id.matrix().kronecker(q.matrix());
        assert!((&m * &total - &total * &m).amax() <= 1e-12);

        let hop = bond_hamiltonian(&p.with_g2(0.0), &b).to_matrix();
        let a = b.annihilation();
        let ad = b.creation();
        let expect = (a.matrix().kronecker(ad.matrix()) + ad.matrix().kronecker(a.matrix())) * -0.25;
        assert!((hop - expect).amax() < 1e-15);
    }

    #[test]
    fn assembled_two_site_dimension() {
        let h = assemble_hamiltonian(&default_chain(2), DEFAULT_ASSEMBLY_LIMIT).unwrap();
        assert_eq!(h.dim(), 256);
        assert!(h.max_asymmetry() <= 1e-12);
        let err = assemble_hamiltonian(&default_chain(7), DEFAULT_ASSEMBLY_LIMIT).unwrap_err();
        assert!(matches!(err, Error::DimensionLimit { .. }));
    }

    #[test]
    fn params_validation() {
        assert!(default_chain(2).validate().is_ok());
        assert!(default_chain(1).validate().is_err());
        assert!(ModelParams {
            omega: 0.0,
            ..default_chain(3)
        }
        .validate()
        .is_err());
        assert!(ModelParams {
            n_max: 0,
            ..default_chain(3)
        }
        .validate()
        .is_err());
    }
}
