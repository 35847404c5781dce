//! Charge-graded block bases and the operators living on them.

use nalgebra::DMatrix;

use crate::linalg::symmetric_eigen;
use crate::model::{BondTerm, Chain, Charge, LocalOperator};

/// Charge sectors of a basis, sorted by charge; every sector is nonempty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sectors {
    charges: Vec<Charge>,
    dims: Vec<usize>,
}

impl Sectors {
    pub fn new(mut pairs: Vec<(Charge, usize)>) -> Self {
        pairs.retain(|&(_, d)| d > 0);
        pairs.sort_by_key(|&(q, _)| q);
        debug_assert!(pairs.windows(2).all(|w| w[0].0 != w[1].0));
        Self {
            charges: pairs.iter().map(|p| p.0).collect(),
            dims: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// The one-dimensional charge-zero space of an empty block.
    pub fn trivial() -> Self {
        Self::new(vec![(0, 1)])
    }

    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn charge(&self, i: usize) -> Charge {
        self.charges[i]
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn find(&self, q: Charge) -> Option<usize> {
        self.charges.binary_search(&q).ok()
    }

    /// Relabels every charge `q` as `total - q`. Returns the new sectors and
    /// the map from old to new sector index.
    pub fn mirrored(&self, total: Charge) -> (Sectors, Vec<usize>) {
        let n = self.len();
        let new = Sectors {
            charges: self.charges.iter().rev().map(|&q| total - q).collect(),
            dims: self.dims.iter().rev().copied().collect(),
        };
        (new, (0..n).map(|i| n - 1 - i).collect())
    }
}

/// A charge-homogeneous operator on a sectored basis. `blocks[i]` holds the
/// target sector and the `target_dim × source_dim` matrix for source sector
/// `i`.
#[derive(Debug, Clone)]
pub struct BlockOp {
    pub shift: Charge,
    pub blocks: Vec<Option<(usize, DMatrix<f64>)>>,
}

impl BlockOp {
    pub fn block(&self, source: usize) -> Option<(usize, &DMatrix<f64>)> {
        self.blocks[source].as_ref().map(|(t, m)| (*t, m))
    }
}

/// One `(site state, block sector)` piece of an enlarged basis.
#[derive(Debug, Clone, Copy)]
pub struct Piece {
    pub site: usize,
    pub sector: usize,
    pub offset: usize,
    pub dim: usize,
}

/// Product of a block basis with one site, grouped by total charge.
///
/// Within a sector, pieces are ordered by site state and then by block
/// sector; each piece spans `dim` consecutive rows.
#[derive(Debug, Clone)]
pub struct Enlarged {
    pub sectors: Sectors,
    pub pieces: Vec<Vec<Piece>>,
    lookup: Vec<Option<(usize, usize)>>,
    block_sectors: usize,
}

impl Enlarged {
    pub fn new(block: &Sectors, site_charges: &[Charge]) -> Self {
        let mut by_charge: std::collections::BTreeMap<Charge, Vec<(usize, usize, usize)>> =
            Default::default();
        for (s, &c) in site_charges.iter().enumerate() {
            for b in 0..block.len() {
                by_charge
                    .entry(c + block.charge(b))
                    .or_default()
                    .push((s, b, block.dim(b)));
            }
        }
        let mut pairs = Vec::new();
        let mut pieces = Vec::new();
        let mut lookup = vec![None; site_charges.len() * block.len()];
        for (sec, (q, list)) in by_charge.into_iter().enumerate() {
            let mut offset = 0;
            let mut row = Vec::with_capacity(list.len());
            for (s, b, dim) in list {
                lookup[s * block.len() + b] = Some((sec, offset));
                row.push(Piece {
                    site: s,
                    sector: b,
                    offset,
                    dim,
                });
                offset += dim;
            }
            pairs.push((q, offset));
            pieces.push(row);
        }
        Self {
            sectors: Sectors::new(pairs),
            pieces,
            lookup,
            block_sectors: block.len(),
        }
    }

    /// Enlarged sector and row offset of piece `(site, block sector)`.
    pub fn locate(&self, site: usize, sector: usize) -> Option<(usize, usize)> {
        self.lookup[site * self.block_sectors + sector]
    }
}

/// Kept states of a block, expressed in the enlarged basis it grew from.
#[derive(Debug, Clone)]
pub struct Transform {
    pub enlarged: Enlarged,
    /// Enlarged sector of each kept block sector.
    pub source: Vec<usize>,
    /// Orthonormal columns, `enlarged dim × kept dim`, per kept sector.
    pub kept: Vec<DMatrix<f64>>,
}

/// Which end of the chain a block is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A renormalized block of sites.
///
/// Left blocks store, per bond term, the left factor acting on their
/// rightmost site; right blocks store the right factor on their leftmost
/// site. Charges count the polaritons inside the block.
#[derive(Debug, Clone)]
pub struct Block {
    pub side: Side,
    pub len: usize,
    pub basis: Sectors,
    pub ham: Vec<DMatrix<f64>>,
    pub edge: Vec<BlockOp>,
    pub transform: Option<Transform>,
}

impl Block {
    pub fn empty(side: Side) -> Self {
        Self {
            side,
            len: 0,
            basis: Sectors::trivial(),
            ham: vec![DMatrix::zeros(1, 1)],
            edge: Vec::new(),
            transform: None,
        }
    }

    pub fn kept(&self) -> usize {
        self.basis.total_dim()
    }

    pub fn charges(&self) -> Vec<Charge> {
        let mut out = Vec::with_capacity(self.kept());
        for i in 0..self.basis.len() {
            out.extend(std::iter::repeat(self.basis.charge(i)).take(self.basis.dim(i)));
        }
        out
    }
}

/// Site operator pieces for the enlarged bond between a block and the new site.
fn coupling_factor(term: &BondTerm, side: Side) -> &LocalOperator {
    match side {
        Side::Left => &term.right,
        Side::Right => &term.left,
    }
}

/// Factor a block must carry on its outer edge for later bonds.
fn edge_factor(term: &BondTerm, side: Side) -> &LocalOperator {
    match side {
        Side::Left => &term.left,
        Side::Right => &term.right,
    }
}

/// Dense Hamiltonian of each enlarged sector (block plus one site).
pub fn enlarged_hamiltonian(block: &Block, enlarged: &Enlarged, chain: &Chain) -> Vec<DMatrix<f64>> {
    let site = chain.site.matrix();
    let mut out = Vec::with_capacity(enlarged.sectors.len());
    for (sec, pieces) in enlarged.pieces.iter().enumerate() {
        let dim = enlarged.sectors.dim(sec);
        let mut h = DMatrix::zeros(dim, dim);
        for p in pieces {
            let mut view = h.view_mut((p.offset, p.offset), (p.dim, p.dim));
            view += &block.ham[p.sector];
            for q in pieces {
                if q.sector == p.sector {
                    let v = site[(q.site, p.site)];
                    if v != 0.0 {
                        for k in 0..p.dim {
                            h[(q.offset + k, p.offset + k)] += v;
                        }
                    }
                }
            }
        }
        for (k, term) in chain.bond.terms.iter().enumerate() {
            let Some(edge) = block.edge.get(k) else { break };
            let factor = coupling_factor(term, block.side).matrix();
            for p in pieces {
                let Some((target, e)) = edge.block(p.sector) else {
                    continue;
                };
                for s2 in 0..factor.nrows() {
                    let f = factor[(s2, p.site)];
                    if f == 0.0 {
                        continue;
                    }
                    let (tsec, toff) = enlarged
                        .locate(s2, target)
                        .expect("charge-conserving bond stays in sector");
                    debug_assert_eq!(tsec, sec);
                    let mut view = h.view_mut((toff, p.offset), (e.nrows(), e.ncols()));
                    view += e * (term.coeff * f);
                }
            }
        }
        out.push(h);
    }
    out
}

/// `1 ⊗ op` on the enlarged basis, mapped into the kept basis of the new block.
fn renormalize_site_op(
    op: &LocalOperator,
    enlarged: &Enlarged,
    new_basis: &Sectors,
    source: &[usize],
    kept: &[DMatrix<f64>],
) -> BlockOp {
    let shift = op.shift().value().expect("edge operators are charge-homogeneous");
    let m = op.matrix();
    let mut blocks = Vec::with_capacity(new_basis.len());
    for b in 0..new_basis.len() {
        let Some(tb) = new_basis.find(new_basis.charge(b) + shift) else {
            blocks.push(None);
            continue;
        };
        let (src, dst) = (source[b], source[tb]);
        let mut full = DMatrix::zeros(enlarged.sectors.dim(dst), enlarged.sectors.dim(src));
        for p in &enlarged.pieces[src] {
            for s2 in 0..m.nrows() {
                let v = m[(s2, p.site)];
                if v == 0.0 {
                    continue;
                }
                let (tsec, toff) = enlarged.locate(s2, p.sector).expect("piece exists");
                debug_assert_eq!(tsec, dst);
                for k in 0..p.dim {
                    full[(toff + k, p.offset + k)] += v;
                }
            }
        }
        let projected = kept[tb].transpose() * full * &kept[b];
        blocks.push(Some((tb, projected)));
    }
    BlockOp { shift, blocks }
}

/// Builds the block one site longer from kept states of its enlarged basis.
///
/// Within each kept sector the states are rotated to diagonalize the block
/// Hamiltonian, so `ham` is diagonal on every grown block.
pub fn grow_block(
    block: &Block,
    enlarged: Enlarged,
    enlarged_ham: &[DMatrix<f64>],
    source: Vec<usize>,
    kept: Vec<DMatrix<f64>>,
    chain: &Chain,
) -> Block {
    let basis = Sectors::new(
        source
            .iter()
            .zip(&kept)
            .map(|(&s, u)| (enlarged.sectors.charge(s), u.ncols()))
            .collect(),
    );
    let mut ham = Vec::with_capacity(kept.len());
    let mut rotated = Vec::with_capacity(kept.len());
    for (&s, u) in source.iter().zip(&kept) {
        let h = u.transpose() * &enlarged_ham[s] * u;
        let (values, w) = symmetric_eigen(&h);
        ham.push(DMatrix::from_diagonal(&values));
        rotated.push(u * w);
    }
    let kept = rotated;
    let edge = chain
        .bond
        .terms
        .iter()
        .map(|term| {
            renormalize_site_op(
                edge_factor(term, block.side),
                &enlarged,
                &basis,
                &source,
                &kept,
            )
        })
        .collect();
    Block {
        side: block.side,
        len: block.len + 1,
        basis,
        ham,
        edge,
        transform: Some(Transform {
            enlarged,
            source,
            kept,
        }),
    }
}
