//! Matrix-product form of a converged DMRG state, used for measurements.
//!
//! Bond charges count the polaritons to the left of the bond, so a site
//! tensor block `A[s]` maps left sector `q` to right sector `q + charge(s)`.

use nalgebra::DMatrix;

use super::block::{Block, Enlarged, Sectors};
use super::superblock::Superblock;
use crate::error::{Error, Result};
use crate::model::{Charge, LocalOperator};

#[derive(Debug, Clone)]
pub struct SiteTensor {
    left: Sectors,
    right: Sectors,
    /// `blocks[s * right.len() + b]` holds the left sector and the
    /// `left dim × right dim` matrix.
    blocks: Vec<Option<(usize, DMatrix<f64>)>>,
}

impl SiteTensor {
    fn empty(left: Sectors, right: Sectors, d: usize) -> Self {
        let n = right.len() * d;
        Self {
            left,
            right,
            blocks: vec![None; n],
        }
    }

    fn block(&self, s: usize, b: usize) -> Option<(usize, &DMatrix<f64>)> {
        self.blocks[s * self.right.len() + b]
            .as_ref()
            .map(|(a, m)| (*a, m))
    }

    fn set(&mut self, s: usize, b: usize, a: usize, m: DMatrix<f64>) {
        let idx = s * self.right.len() + b;
        self.blocks[idx] = Some((a, m));
    }

    /// Site tensor of a grown left block.
    pub(crate) fn from_left_block(prev: &Sectors, block: &Block, d: usize) -> Self {
        let t = block.transform.as_ref().expect("grown block");
        let mut out = Self::empty(prev.clone(), block.basis.clone(), d);
        for (b, &src) in t.source.iter().enumerate() {
            for p in &t.enlarged.pieces[src] {
                let m = t.kept[b].rows(p.offset, p.dim).into_owned();
                out.set(p.site, b, p.sector, m);
            }
        }
        out
    }

    /// Site tensor of a grown right block, relabelled to left-counted charges.
    pub(crate) fn from_right_block(prev: &Sectors, block: &Block, total: Charge, d: usize) -> Self {
        let t = block.transform.as_ref().expect("grown block");
        Self::from_right_parts(prev, &block.basis, &t.enlarged, &t.source, &t.kept, total, d)
    }

    fn from_right_parts(
        prev: &Sectors,
        basis: &Sectors,
        enlarged: &Enlarged,
        source: &[usize],
        kept: &[DMatrix<f64>],
        total: Charge,
        d: usize,
    ) -> Self {
        let (left, lmap) = basis.mirrored(total);
        let (right, rmap) = prev.mirrored(total);
        let mut out = Self::empty(left, right, d);
        for (a, &src) in source.iter().enumerate() {
            for p in &enlarged.pieces[src] {
                let m = kept[a].rows(p.offset, p.dim).transpose();
                out.set(p.site, rmap[p.sector], lmap[a], m);
            }
        }
        out
    }
}

/// Charge-homogeneous local operator as per-column nonzeros.
struct OpColumns {
    shift: Charge,
    cols: Vec<Vec<(usize, f64)>>,
}

impl OpColumns {
    fn new(op: &LocalOperator) -> Result<Self> {
        let shift = op.shift().value().ok_or(Error::NotChargeDiagonal)?;
        let m = op.matrix();
        let cols = (0..m.ncols())
            .map(|c| {
                (0..m.nrows())
                    .filter(|&r| m[(r, c)] != 0.0)
                    .map(|r| (r, m[(r, c)]))
                    .collect()
            })
            .collect();
        Ok(Self { shift, cols })
    }

    fn identity(d: usize) -> Self {
        Self {
            shift: 0,
            cols: (0..d).map(|s| vec![(s, 1.0)]).collect(),
        }
    }
}

/// Bra-ket environment on a bond; `blocks[b]` is `bra × ket` for ket sector
/// `b`, with the bra sector at charge `q_b + shift`.
#[derive(Debug, Clone)]
struct Env {
    shift: Charge,
    blocks: Vec<Option<DMatrix<f64>>>,
}

fn transfer_left(env: &Env, site: &SiteTensor, op: &OpColumns) -> Env {
    let shift = env.shift + op.shift;
    let mut out: Vec<Option<DMatrix<f64>>> = vec![None; site.right.len()];
    let d = op.cols.len();
    for s in 0..d {
        for b in 0..site.right.len() {
            let Some((a, ket)) = site.block(s, b) else {
                continue;
            };
            let Some(e) = env.blocks[a].as_ref() else {
                continue;
            };
            let Some(bb) = site.right.find(site.right.charge(b) + shift) else {
                continue;
            };
            let mut tmp: Option<DMatrix<f64>> = None;
            for &(s2, v) in &op.cols[s] {
                let Some((a2, bra)) = site.block(s2, bb) else {
                    continue;
                };
                debug_assert_eq!(site.left.charge(a2), site.left.charge(a) + env.shift);
                let tmp = tmp.get_or_insert_with(|| e * ket);
                let dst = out[b].get_or_insert_with(|| DMatrix::zeros(bra.ncols(), ket.ncols()));
                dst.gemm_tr(v, bra, tmp, 1.0);
            }
        }
    }
    Env { shift, blocks: out }
}

fn transfer_right(env: &Env, site: &SiteTensor) -> Env {
    debug_assert_eq!(env.shift, 0);
    let mut out: Vec<Option<DMatrix<f64>>> = vec![None; site.left.len()];
    let d = site.blocks.len() / site.right.len().max(1);
    for s in 0..d {
        for b in 0..site.right.len() {
            let (Some((a, m)), Some(f)) = (site.block(s, b), env.blocks[b].as_ref()) else {
                continue;
            };
            let tmp = m * f;
            let dst = out[a].get_or_insert_with(|| DMatrix::zeros(m.nrows(), m.nrows()));
            dst.gemm(1.0, &tmp, &m.transpose(), 1.0);
        }
    }
    Env {
        shift: 0,
        blocks: out,
    }
}

fn contract(left: &Env, right: &Env) -> f64 {
    if left.shift != 0 {
        return 0.0;
    }
    left.blocks
        .iter()
        .zip(&right.blocks)
        .filter_map(|(l, r)| Some(l.as_ref()?.dot(r.as_ref()?)))
        .sum()
}

/// A measurable state: site tensors plus cached left/right environments.
#[derive(Debug, Clone)]
pub struct MpsState {
    sites: Vec<SiteTensor>,
    total: Charge,
    local_dim: usize,
    left_envs: Vec<Env>,
    right_envs: Vec<Env>,
    norm: f64,
    /// Charge of each local basis state.
    charges: Vec<Charge>,
}

impl MpsState {
    /// Assembles the state from the blocks of the final superblock and its
    /// wavefunction. `left_blocks[k]` / `right_blocks[k]` hold `k` sites.
    pub(crate) fn from_superblock(
        left_blocks: &[&Block],
        right_blocks: &[&Block],
        sb: &Superblock<'_>,
        psi: &[f64],
    ) -> Self {
        let d = sb.chain.local_dim();
        let total = sb.target;
        let mut sites = Vec::with_capacity(sb.len());
        for k in 1..left_blocks.len() {
            sites.push(SiteTensor::from_left_block(
                &left_blocks[k - 1].basis,
                left_blocks[k],
                d,
            ));
        }
        let (center_right, rmap) = sb.right_enl.sectors.mirrored(total);
        let mut center = SiteTensor::empty(sb.left.basis.clone(), center_right, d);
        for e in &sb.entries {
            let b = rmap[e.rsec];
            let idx = e.s1 * center.right.len() + b;
            let slot = center.blocks[idx].get_or_insert_with(|| {
                (
                    e.left,
                    DMatrix::zeros(e.rows, sb.right_enl.sectors.dim(e.rsec)),
                )
            });
            let block = nalgebra::DMatrixView::from_slice(
                &psi[e.offset..e.offset + e.rows * e.cols],
                e.rows,
                e.cols,
            );
            slot.1.view_mut((0, e.roff), (e.rows, e.cols)).copy_from(&block);
        }
        sites.push(center);
        let ident_source: Vec<usize> = (0..sb.right_enl.sectors.len()).collect();
        let ident_kept: Vec<DMatrix<f64>> = (0..sb.right_enl.sectors.len())
            .map(|s| DMatrix::identity(sb.right_enl.sectors.dim(s), sb.right_enl.sectors.dim(s)))
            .collect();
        sites.push(SiteTensor::from_right_parts(
            &sb.right.basis,
            &sb.right_enl.sectors,
            &sb.right_enl,
            &ident_source,
            &ident_kept,
            total,
            d,
        ));
        for k in (1..right_blocks.len()).rev() {
            sites.push(SiteTensor::from_right_block(
                &right_blocks[k - 1].basis,
                right_blocks[k],
                total,
                d,
            ));
        }
        Self::from_sites(sites, total, sb.chain.charges.clone())
    }

    fn from_sites(sites: Vec<SiteTensor>, total: Charge, charges: Vec<Charge>) -> Self {
        let local_dim = charges.len();
        let n = sites.len();
        let ident = OpColumns::identity(local_dim);
        let mut left_envs = Vec::with_capacity(n + 1);
        left_envs.push(Env {
            shift: 0,
            blocks: vec![Some(DMatrix::identity(1, 1))],
        });
        for site in &sites {
            let next = transfer_left(left_envs.last().unwrap(), site, &ident);
            left_envs.push(next);
        }
        let mut right_envs = vec![
            Env {
                shift: 0,
                blocks: Vec::new()
            };
            n + 1
        ];
        right_envs[n] = Env {
            shift: 0,
            blocks: vec![Some(DMatrix::identity(1, 1))],
        };
        for k in (0..n).rev() {
            right_envs[k] = transfer_right(&right_envs[k + 1], &sites[k]);
        }
        let norm = contract(&left_envs[n], &right_envs[n]);
        Self {
            sites,
            total,
            local_dim,
            left_envs,
            right_envs,
            norm,
            charges,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn total_charge(&self) -> Charge {
        self.total
    }

    /// `⟨ψ|ψ⟩` before normalization of measurements.
    pub fn norm_squared(&self) -> f64 {
        self.norm
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.len() {
            return Err(Error::SiteOutOfRange {
                site,
                length: self.len(),
            });
        }
        Ok(())
    }

    /// `⟨O_site⟩` for a charge-conserving local operator.
    pub fn local(&self, op: &LocalOperator, site: usize) -> Result<f64> {
        self.check_site(site)?;
        let cols = OpColumns::new(op)?;
        if cols.shift != 0 {
            return Err(Error::NotChargeDiagonal);
        }
        let env = transfer_left(&self.left_envs[site], &self.sites[site], &cols);
        Ok(contract(&env, &self.right_envs[site + 1]) / self.norm)
    }

    /// The local charge-counting operator of this chain.
    pub fn number_op(&self) -> LocalOperator {
        let diag: Vec<f64> = self.charges.iter().map(|&q| q as f64).collect();
        LocalOperator::diagonal(diag)
    }

    /// `⟨n_i⟩` for every site.
    pub fn density_profile(&self) -> Result<Vec<f64>> {
        let n = self.number_op();
        (0..self.len()).map(|i| self.local(&n, i)).collect()
    }

    /// `⟨A_i B_j⟩`. Operators on distinct sites commute, so the order of the
    /// sites does not matter; `i == j` measures the product `A B`.
    pub fn two_point(&self, a: &LocalOperator, i: usize, b: &LocalOperator, j: usize) -> Result<f64> {
        self.check_site(i)?;
        self.check_site(j)?;
        if i == j {
            return self.local(&a.product(b), i);
        }
        let (first, fi, second, sj) = if i < j { (a, i, b, j) } else { (b, j, a, i) };
        let c1 = OpColumns::new(first)?;
        let c2 = OpColumns::new(second)?;
        if c1.shift + c2.shift != 0 {
            return Err(Error::NotChargeDiagonal);
        }
        let ident = OpColumns::identity(self.local_dim);
        let mut env = transfer_left(&self.left_envs[fi], &self.sites[fi], &c1);
        for k in fi + 1..sj {
            env = transfer_left(&env, &self.sites[k], &ident);
        }
        env = transfer_left(&env, &self.sites[sj], &c2);
        Ok(contract(&env, &self.right_envs[sj + 1]) / self.norm)
    }

    /// `⟨A_i B_j⟩` for every `j > i`, in one sweep to the right.
    pub fn correlation_row(&self, a: &LocalOperator, i: usize, b: &LocalOperator) -> Result<Vec<f64>> {
        self.check_site(i)?;
        let c1 = OpColumns::new(a)?;
        let c2 = OpColumns::new(b)?;
        if c1.shift + c2.shift != 0 {
            return Err(Error::NotChargeDiagonal);
        }
        let ident = OpColumns::identity(self.local_dim);
        let mut env = transfer_left(&self.left_envs[i], &self.sites[i], &c1);
        let mut out = Vec::with_capacity(self.len() - i - 1);
        for j in i + 1..self.len() {
            let closed = transfer_left(&env, &self.sites[j], &c2);
            out.push(contract(&closed, &self.right_envs[j + 1]) / self.norm);
            env = transfer_left(&env, &self.sites[j], &ident);
        }
        Ok(out)
    }
}
