//! The superblock `left block ⊗ site ⊗ site ⊗ right block` at fixed charge.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use super::davidson::axpy;
use super::block::{enlarged_hamiltonian, grow_block, Block, Enlarged, Side};
use crate::linalg::symmetric_eigen;
use crate::model::{Chain, Charge};

const NONE: usize = usize::MAX;

/// One dense piece `ψ[s1, s2, l ∈ left sector, r ∈ right sector]`.
#[derive(Debug, Clone, Copy)]
pub struct Entry {
    pub s1: usize,
    pub s2: usize,
    pub left: usize,
    pub right: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Left-enlarged sector and row offset of the `(s1, left)` piece.
    pub lsec: usize,
    pub loff: usize,
    /// Right-enlarged sector and column offset of the `(s2, right)` piece.
    pub rsec: usize,
    pub roff: usize,
}

/// Bond terms between the left block and `s1` that share one site operator,
/// with their block operators summed.
struct LeftGroup {
    site: Vec<Vec<(usize, f64)>>,
    block: Vec<Option<(usize, DMatrix<f64>)>>,
}

/// Bond terms between `s2` and the right block that share one block
/// operator (stored transposed), with their site operators summed.
struct RightGroup {
    site: Vec<Vec<(usize, f64)>>,
    block_t: Vec<Option<(usize, DMatrix<f64>)>>,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.ncols())
        .map(|c| {
            (0..m.nrows())
                .filter(|&r| m[(r, c)] != 0.0)
                .map(|r| (r, m[(r, c)]))
                .collect()
        })
        .collect()
}


pub struct Superblock<'a> {
    pub chain: &'a Chain,
    pub left: &'a Block,
    pub right: &'a Block,
    pub target: Charge,
    pub left_enl: Enlarged,
    pub right_enl: Enlarged,
    pub entries: Vec<Entry>,
    lookup: Vec<usize>,
    by_lsec: Vec<Vec<usize>>,
    /// Right-enlarged partner of each left-enlarged sector.
    pair_of_left: Vec<Option<usize>>,
    pair_of_right: Vec<Option<usize>>,
    dim: usize,
    /// `(s1, s2)` column of the two-site Hamiltonian as `(r1, r2, value)`.
    local: Vec<Vec<(usize, usize, f64)>>,
    left_groups: Vec<LeftGroup>,
    right_groups: Vec<RightGroup>,
    /// `H_L ⊗ 1 + 1 ⊗ H_R`, diagonal because block Hamiltonians are.
    block_diag: Vec<f64>,
}

impl<'a> Superblock<'a> {
    pub fn new(chain: &'a Chain, left: &'a Block, right: &'a Block, target: Charge) -> Self {
        let d = chain.local_dim();
        let charges = &chain.charges;
        let left_enl = Enlarged::new(&left.basis, charges);
        let right_enl = Enlarged::new(&right.basis, charges);
        let nl = left.basis.len();
        let mut entries = Vec::new();
        let mut lookup = vec![NONE; d * d * nl];
        let mut by_lsec = vec![Vec::new(); left_enl.sectors.len()];
        let mut offset = 0;
        for s1 in 0..d {
            for s2 in 0..d {
                for li in 0..nl {
                    let qr = target - left.basis.charge(li) - charges[s1] - charges[s2];
                    let Some(rj) = right.basis.find(qr) else {
                        continue;
                    };
                    let (lsec, loff) = left_enl.locate(s1, li).expect("piece exists");
                    let (rsec, roff) = right_enl.locate(s2, rj).expect("piece exists");
                    let (rows, cols) = (left.basis.dim(li), right.basis.dim(rj));
                    lookup[(s1 * d + s2) * nl + li] = entries.len();
                    by_lsec[lsec].push(entries.len());
                    entries.push(Entry {
                        s1,
                        s2,
                        left: li,
                        right: rj,
                        offset,
                        rows,
                        cols,
                        lsec,
                        loff,
                        rsec,
                        roff,
                    });
                    offset += rows * cols;
                }
            }
        }
        let pair_of_left: Vec<Option<usize>> = (0..left_enl.sectors.len())
            .map(|s| right_enl.sectors.find(target - left_enl.sectors.charge(s)))
            .collect();
        let pair_of_right = (0..right_enl.sectors.len())
            .map(|s| left_enl.sectors.find(target - right_enl.sectors.charge(s)))
            .collect();
        let local = two_site_columns(chain);
        let left_groups = left_groups(chain, left);
        let right_groups = right_groups(chain, right);
        let mut block_diag = vec![0.0; offset];
        for e in &entries {
            let (hl, hr) = (&left.ham[e.left], &right.ham[e.right]);
            debug_assert!(is_diagonal(hl) && is_diagonal(hr));
            for c in 0..e.cols {
                for r in 0..e.rows {
                    block_diag[e.offset + c * e.rows + r] = hl[(r, r)] + hr[(c, c)];
                }
            }
        }
        Self {
            chain,
            left,
            right,
            target,
            block_diag,
            left_enl,
            right_enl,
            entries,
            lookup,
            by_lsec,
            pair_of_left,
            pair_of_right,
            dim: offset,
            local,
            left_groups,
            right_groups,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.left.len + self.right.len + 2
    }

    fn find(&self, s1: usize, s2: usize, li: usize) -> usize {
        let d = self.chain.local_dim();
        self.lookup[(s1 * d + s2) * self.left.basis.len() + li]
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64], scratch: &mut Vec<f64>) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.block_diag) {
            *yi = di * xi;
        }
        let d = self.chain.local_dim();
        for e in &self.entries {
            let n = e.rows * e.cols;
            let xs = &x[e.offset..e.offset + n];
            let xv = DMatrixView::from_slice(xs, e.rows, e.cols);
            for &(r1, r2, v) in &self.local[e.s1 * d + e.s2] {
                let idx = self.find(r1, r2, e.left);
                if idx == NONE {
                    continue;
                }
                let dst = &self.entries[idx];
                axpy(v, xs, &mut y[dst.offset..dst.offset + n]);
            }
            for g in &self.left_groups {
                if g.site[e.s1].is_empty() {
                    continue;
                }
                let Some((li2, op)) = g.block[e.left].as_ref() else {
                    continue;
                };
                let rows2 = op.nrows();
                scratch.resize(rows2 * e.cols, 0.0);
                let mut tmp = DMatrixViewMut::from_slice(&mut scratch[..], rows2, e.cols);
                tmp.gemm(1.0, op, &xv, 0.0);
                for &(r, v) in &g.site[e.s1] {
                    let idx = self.find(r, e.s2, *li2);
                    if idx == NONE {
                        continue;
                    }
                    let dst = &self.entries[idx];
                    axpy(v, scratch, &mut y[dst.offset..dst.offset + dst.rows * dst.cols]);
                }
            }
            for g in &self.right_groups {
                if g.site[e.s2].is_empty() {
                    continue;
                }
                let Some((rj2, opt)) = g.block_t[e.right].as_ref() else {
                    continue;
                };
                let cols2 = opt.ncols();
                scratch.resize(e.rows * cols2, 0.0);
                let mut tmp = DMatrixViewMut::from_slice(&mut scratch[..], e.rows, cols2);
                tmp.gemm(1.0, &xv, opt, 0.0);
                for &(r, v) in &g.site[e.s2] {
                    let idx = self.find(e.s1, r, e.left);
                    if idx == NONE {
                        continue;
                    }
                    let dst = &self.entries[idx];
                    debug_assert_eq!(dst.right, *rj2);
                    axpy(v, scratch, &mut y[dst.offset..dst.offset + dst.rows * dst.cols]);
                }
            }
        }
    }

    /// Diagonal of the superblock Hamiltonian.
    pub fn diagonal(&self) -> Vec<f64> {
        let d = self.chain.local_dim();
        let mut diag = vec![0.0; self.dim];
        for e in &self.entries {
            let local: f64 = self.local[e.s1 * d + e.s2]
                .iter()
                .filter(|&&(r1, r2, _)| r1 == e.s1 && r2 == e.s2)
                .map(|t| t.2)
                .sum();
            let n = e.rows * e.cols;
            for (d, b) in diag[e.offset..e.offset + n]
                .iter_mut()
                .zip(&self.block_diag[e.offset..e.offset + n])
            {
                *d = local + b;
            }
        }
        diag
    }

    /// `ψ` as the dense `left-enlarged × right-enlarged` matrix of sector `lsec`.
    pub fn gather(&self, psi: &[f64], lsec: usize) -> Option<DMatrix<f64>> {
        let rsec = self.pair_of_left[lsec]?;
        let mut m = DMatrix::zeros(
            self.left_enl.sectors.dim(lsec),
            self.right_enl.sectors.dim(rsec),
        );
        for &idx in &self.by_lsec[lsec] {
            let e = &self.entries[idx];
            let block = DMatrixView::from_slice(&psi[e.offset..e.offset + e.rows * e.cols], e.rows, e.cols);
            m.view_mut((e.loff, e.roff), (e.rows, e.cols)).copy_from(&block);
        }
        Some(m)
    }

    /// Reduced density matrix of one side in each of its enlarged sectors,
    /// mixed over the targeted states with the given weights.
    pub fn density_matrices(&self, side: Side, states: &[Vec<f64>], weights: &[f64]) -> Vec<DMatrix<f64>> {
        let enl = match side {
            Side::Left => &self.left_enl,
            Side::Right => &self.right_enl,
        };
        let mut out: Vec<DMatrix<f64>> = (0..enl.sectors.len())
            .map(|s| DMatrix::zeros(enl.sectors.dim(s), enl.sectors.dim(s)))
            .collect();
        for (psi, &w) in states.iter().zip(weights) {
            for lsec in 0..self.left_enl.sectors.len() {
                let Some(m) = self.gather(psi, lsec) else {
                    continue;
                };
                match side {
                    Side::Left => out[lsec].gemm(w, &m, &m.transpose(), 1.0),
                    Side::Right => {
                        let rsec = self.pair_of_left[lsec].expect("gathered");
                        out[rsec].gemm_tr(w, &m, &m, 1.0)
                    }
                }
            }
        }
        out
    }

    /// Keeps the `m` most probable eigenstates of the mixed reduced density
    /// matrix of one side and builds the grown block.
    pub fn truncate(&self, side: Side, states: &[Vec<f64>], weights: &[f64], m: usize) -> Truncation {
        let rhos = self.density_matrices(side, states, weights);
        let (block, enl) = match side {
            Side::Left => (self.left, &self.left_enl),
            Side::Right => (self.right, &self.right_enl),
        };
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut vectors: Vec<DMatrix<f64>> = Vec::with_capacity(rhos.len());
        for (sec, rho) in rhos.into_iter().enumerate() {
            let (values, vecs) = symmetric_eigen(&rho);
            let n = values.len();
            let mut sorted = DMatrix::zeros(vecs.nrows(), n);
            for k in 0..n {
                sorted.set_column(k, &vecs.column(n - 1 - k));
                candidates.push((values[n - 1 - k], sec, k));
            }
            vectors.push(sorted);
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(enl.sectors.charge(a.1).cmp(&enl.sectors.charge(b.1)))
                .then(a.2.cmp(&b.2))
        });
        let keep = m.min(candidates.len());
        let total: f64 = candidates.iter().map(|c| c.0.max(0.0)).sum();
        let discarded: f64 = candidates[keep..].iter().map(|c| c.0.max(0.0)).sum();
        let mut counts = vec![0usize; vectors.len()];
        for c in &candidates[..keep] {
            counts[c.1] = counts[c.1].max(c.2 + 1);
        }
        let mut source = Vec::new();
        let mut kept = Vec::new();
        for (sec, &n) in counts.iter().enumerate() {
            if n > 0 {
                source.push(sec);
                kept.push(vectors[sec].columns(0, n).into_owned());
            }
        }
        let h_enl = enlarged_hamiltonian(block, enl, self.chain);
        let grown = grow_block(block, enl.clone(), &h_enl, source, kept, self.chain);
        let error = if total > 0.0 {
            (discarded / total).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Truncation {
            block: grown,
            discarded_weight: error,
        }
    }

    /// Transforms `ψ` into the superblock one site to the right, given the
    /// freshly grown left block.
    pub fn predict_right_move(&self, psi: &[f64], new_left: &Block, next: &Superblock<'_>) -> Vec<f64> {
        let mut out = vec![0.0; next.dim()];
        let u = new_left.transform.as_ref().expect("grown block");
        let v = self.right.transform.as_ref().expect("nonempty right block");
        for (b, &lsec) in u.source.iter().enumerate() {
            let Some(m) = self.gather(psi, lsec) else {
                continue;
            };
            let rsec = self.pair_of_left[lsec].expect("gathered");
            let x = u.kept[b].transpose() * m;
            for piece in &self.right_enl.pieces[rsec] {
                let xp = x.columns(piece.offset, piece.dim);
                let vsec = v.source[piece.sector];
                for p2 in &v.enlarged.pieces[vsec] {
                    let idx = next.find(piece.site, p2.site, b);
                    if idx == NONE {
                        continue;
                    }
                    let e = &next.entries[idx];
                    debug_assert_eq!(e.right, p2.sector);
                    let vp = v.kept[piece.sector].rows(p2.offset, p2.dim);
                    let mut dst = DMatrixViewMut::from_slice(&mut out[e.offset..e.offset + e.rows * e.cols], e.rows, e.cols);
                    dst.gemm(1.0, &xp, &vp.transpose(), 1.0);
                }
            }
        }
        out
    }

    /// Transforms `ψ` into the superblock one site to the left, given the
    /// freshly grown right block.
    pub fn predict_left_move(&self, psi: &[f64], new_right: &Block, next: &Superblock<'_>) -> Vec<f64> {
        let mut out = vec![0.0; next.dim()];
        let v = new_right.transform.as_ref().expect("grown block");
        let u = self.left.transform.as_ref().expect("nonempty left block");
        for (a, &rsec) in v.source.iter().enumerate() {
            let Some(lsec) = self.pair_of_right[rsec] else {
                continue;
            };
            let m = self.gather(psi, lsec).expect("paired sector");
            let y = m * &v.kept[a];
            for piece in &self.left_enl.pieces[lsec] {
                let yp = y.rows(piece.offset, piece.dim);
                let usec = u.source[piece.sector];
                for p2 in &u.enlarged.pieces[usec] {
                    let idx = next.find(p2.site, piece.site, p2.sector);
                    if idx == NONE {
                        continue;
                    }
                    let e = &next.entries[idx];
                    debug_assert_eq!(e.right, a);
                    let up = u.kept[piece.sector].rows(p2.offset, p2.dim);
                    let mut dst = DMatrixViewMut::from_slice(&mut out[e.offset..e.offset + e.rows * e.cols], e.rows, e.cols);
                    dst.gemm(1.0, &up, &yp, 1.0);
                }
            }
        }
        out
    }
}

fn two_site_columns(chain: &Chain) -> Vec<Vec<(usize, usize, f64)>> {
    let d = chain.local_dim();
    let site = chain.site.matrix();
    let mut h = DMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                h[(a * d + c, b * d + c)] += site[(a, b)];
                h[(c * d + a, c * d + b)] += site[(a, b)];
            }
        }
    }
    for t in &chain.bond.terms {
        for (r1, c1, v1) in t.left.nonzeros() {
            for (r2, c2, v2) in t.right.nonzeros() {
                h[(r1 * d + r2, c1 * d + c2)] += t.coeff * v1 * v2;
            }
        }
    }
    (0..d * d)
        .map(|c| {
            (0..d * d)
                .filter(|&r| h[(r, c)] != 0.0)
                .map(|r| (r / d, r % d, h[(r, c)]))
                .collect()
        })
        .collect()
}

fn add_blocks(acc: &mut [Option<(usize, DMatrix<f64>)>], op: &[Option<(usize, DMatrix<f64>)>], coeff: f64) {
    for (a, b) in acc.iter_mut().zip(op) {
        let Some((t, m)) = b else { continue };
        match a {
            Some((ta, ma)) => {
                debug_assert_eq!(ta, t);
                *ma += m * coeff;
            }
            None => *a = Some((*t, m * coeff)),
        }
    }
}

fn left_groups(chain: &Chain, left: &Block) -> Vec<LeftGroup> {
    let mut groups: Vec<(&DMatrix<f64>, LeftGroup)> = Vec::new();
    for (k, term) in chain.bond.terms.iter().enumerate() {
        let Some(edge) = left.edge.get(k) else { break };
        let key = term.right.matrix();
        let pos = match groups.iter().position(|(m, _)| *m == key) {
            Some(p) => p,
            None => {
                groups.push((
                    key,
                    LeftGroup {
                        site: columns(key),
                        block: vec![None; edge.blocks.len()],
                    },
                ));
                groups.len() - 1
            }
        };
        add_blocks(&mut groups[pos].1.block, &edge.blocks, term.coeff);
    }
    groups.into_iter().map(|g| g.1).collect()
}

fn right_groups(chain: &Chain, right: &Block) -> Vec<RightGroup> {
    let mut groups: Vec<(&DMatrix<f64>, DMatrix<f64>, Vec<Option<(usize, DMatrix<f64>)>>)> = Vec::new();
    for (k, term) in chain.bond.terms.iter().enumerate() {
        let Some(edge) = right.edge.get(k) else { break };
        let key = term.right.matrix();
        match groups.iter().position(|g| g.0 == key) {
            Some(p) => groups[p].1 += term.left.matrix() * term.coeff,
            None => groups.push((key, term.left.matrix() * term.coeff, edge
                .blocks
                .iter()
                .map(|b| b.as_ref().map(|(t, m)| (*t, m.transpose())))
                .collect())),
        }
    }
    groups
        .into_iter()
        .map(|(_, site, block_t)| RightGroup {
            site: columns(&site),
            block_t,
        })
        .collect()
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.ncols()).all(|c| (0..m.nrows()).all(|r| r == c || m[(r, c)] == 0.0))
}

pub struct Truncation {
    pub block: Block,
    pub discarded_weight: f64,
}
