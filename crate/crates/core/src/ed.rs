//! Exact diagonalization in a fixed total-polariton-number sector.
//!
//! This path is deliberately independent of the DMRG machinery: product
//! states are enumerated explicitly, the sector Hamiltonian is stored as a
//! sparse matrix and the lowest eigenpairs come from a Lanczos iteration with
//! full re-orthogonalization (or a dense solve for small sectors).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Chain, Charge, LocalOperator, ModelParams};
use crate::sparse::{CsrBuilder, CsrMatrix};

/// Fixed-charge subspace of a chain, enumerated lexicographically (site 0
/// is the most significant digit).
#[derive(Debug, Clone)]
pub struct SectorBasis {
    length: usize,
    local_dim: usize,
    total_charge: Charge,
    codes: Vec<u64>,
}

impl SectorBasis {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn total_charge(&self) -> Charge {
        self.total_charge
    }

    /// Local states of the `index`-th basis vector, site 0 first.
    pub fn state(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.length];
        self.decode(self.codes[index], &mut out);
        out
    }

    pub fn index_of(&self, states: &[usize]) -> Option<usize> {
        self.codes.binary_search(&self.encode(states)).ok()
    }

    fn encode(&self, states: &[usize]) -> u64 {
        states
            .iter()
            .fold(0u64, |acc, &s| acc * self.local_dim as u64 + s as u64)
    }

    fn decode(&self, mut code: u64, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = (code % self.local_dim as u64) as usize;
            code /= self.local_dim as u64;
        }
    }
}

/// Enumerates all product states of `length` sites whose charges sum to
/// `total_charge`. An impossible charge yields an empty basis.
pub fn enumerate_sector(length: usize, total_charge: Charge, charges: &[Charge]) -> SectorBasis {
    let d = charges.len();
    assert!(
        (d as f64).powi(length as i32) < u64::MAX as f64,
        "chain too long for 64-bit state codes"
    );
    let qmax = charges.iter().copied().max().unwrap_or(0);
    let qmin = charges.iter().copied().min().unwrap_or(0);
    let mut codes = Vec::new();
    let mut stack = vec![0usize; length];

    fn rec(
        site: usize,
        remaining: Charge,
        code: u64,
        ctx: (&[Charge], usize, Charge, Charge),
        stack: &mut [usize],
        codes: &mut Vec<u64>,
    ) {
        let (charges, length, qmin, qmax) = ctx;
        if site == length {
            if remaining == 0 {
                codes.push(code);
            }
            return;
        }
        let left = (length - site - 1) as Charge;
        for (s, &q) in charges.iter().enumerate() {
            let rest = remaining - q;
            if rest < qmin * left || rest > qmax * left {
                continue;
            }
            stack[site] = s;
            rec(
                site + 1,
                rest,
                code * charges.len() as u64 + s as u64,
                ctx,
                stack,
                codes,
            );
        }
    }

    rec(
        0,
        total_charge,
        0,
        (charges, length, qmin, qmax),
        &mut stack,
        &mut codes,
    );
    SectorBasis {
        length,
        local_dim: d,
        total_charge,
        codes,
    }
}

/// Sparse Hamiltonian of `chain` restricted to `sector`.
pub fn sector_hamiltonian(chain: &Chain, sector: &SectorBasis) -> CsrMatrix {
    let l = chain.length;
    let site_nz = chain.site.nonzeros();
    let bond_nz: Vec<_> = chain
        .bond
        .terms
        .iter()
        .map(|t| (t.left.nonzeros(), t.right.nonzeros(), t.coeff))
        .collect();
    let mut builder = CsrBuilder::new(sector.len());
    let mut states = vec![0usize; l];
    let mut target = vec![0usize; l];
    let mut column = Vec::new();
    for col in 0..sector.len() {
        sector.decode(sector.codes[col], &mut states);
        column.clear();
        for i in 0..l {
            for &(r, c, v) in &site_nz {
                if c != states[i] {
                    continue;
                }
                target.copy_from_slice(&states);
                target[i] = r;
                let row = sector.index_of(&target).expect("site term conserves charge");
                column.push((row, v));
            }
        }
        for i in 0..l.saturating_sub(1) {
            for (lnz, rnz, coeff) in &bond_nz {
                for &(ri, ci, vi) in lnz {
                    if ci != states[i] {
                        continue;
                    }
                    for &(rj, cj, vj) in rnz {
                        if cj != states[i + 1] {
                            continue;
                        }
                        target.copy_from_slice(&states);
                        target[i] = ri;
                        target[i + 1] = rj;
                        let row = sector
                            .index_of(&target)
                            .expect("bond term conserves charge");
                        column.push((row, coeff * vi * vj));
                    }
                }
            }
        }
        builder.push_column(col, &column);
    }
    builder.finish()
}

#[derive(Debug, Clone)]
pub struct EdConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Sectors smaller than this are solved densely.
    pub dense_below: usize,
    pub seed: u64,
}

impl Default for EdConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            dense_below: 4096,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub sector: SectorBasis,
    pub energies: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Lowest `k` eigenpairs of the Hamiltonian in the sector with `total_charge`
/// polaritons.
pub fn ed_lowest_states(
    params: &ModelParams,
    total_charge: Charge,
    k: usize,
    config: &EdConfig,
) -> Result<SpectrumResult> {
    let chain = Chain::from_params(params)?;
    lowest_states(&chain, total_charge, k, config)
}

pub fn lowest_states(
    chain: &Chain,
    total_charge: Charge,
    k: usize,
    config: &EdConfig,
) -> Result<SpectrumResult> {
    let sector = enumerate_sector(chain.length, total_charge, &chain.charges);
    if sector.is_empty() {
        return Err(Error::EmptySector(total_charge as i64));
    }
    let h = sector_hamiltonian(chain, &sector);
    let k = k.min(sector.len());
    let (energies, vectors) = if sector.len() < config.dense_below {
        dense_lowest(&h, k)
    } else {
        lanczos_lowest(&h, k, config)?
    };
    let residuals = vectors
        .iter()
        .zip(&energies)
        .map(|(v, &e)| residual_norm(&h, v, e))
        .collect();
    Ok(SpectrumResult {
        sector,
        energies,
        vectors,
        residuals,
    })
}

fn dense_lowest(h: &CsrMatrix, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (values, vecs) = crate::linalg::symmetric_eigen(&h.to_dense());
    let energies = values.iter().take(k).copied().collect();
    let vectors = (0..k).map(|i| vecs.column(i).iter().copied().collect()).collect();
    (energies, vectors)
}

fn residual_norm(h: &CsrMatrix, v: &[f64], e: f64) -> f64 {
    let mut hv = vec![0.0; v.len()];
    h.apply(v, &mut hv);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - e * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng, against: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..4 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        orthogonalize(&mut v, against);
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return Some(v);
        }
    }
    None
}

/// Lanczos with full re-orthogonalization. Breakdowns are continued with a
/// fresh random vector so degenerate multiplets are resolved.
fn lanczos_lowest(
    h: &CsrMatrix,
    k: usize,
    config: &EdConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dim = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut basis: Vec<Vec<f64>> = vec![random_unit(dim, &mut rng, &[]).expect("nonzero dim")];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut last_residuals = Vec::new();
    let max_iter = config.max_iter.min(dim);
    loop {
        let j = basis.len() - 1;
        h.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        let b = dot(&w, &w).sqrt();

        let m = alpha.len();
        if m >= k && (m % 5 == 0 || m == max_iter || b < 1e-12) {
            let t = tridiagonal(&alpha, &beta);
            let eig = t.symmetric_eigen();
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
            let est: Vec<f64> = order[..k]
                .iter()
                .map(|&i| (b * eig.eigenvectors[(m - 1, i)]).abs())
                .collect();
            let done = est.iter().all(|&r| r < config.tol * 0.1) || m == dim;
            if done || m == max_iter {
                let energies: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
                let vectors: Vec<Vec<f64>> = order[..k]
                    .iter()
                    .map(|&i| {
                        let mut v = vec![0.0; dim];
                        for (c, q) in basis.iter().enumerate() {
                            let y = eig.eigenvectors[(c, i)];
                            v.iter_mut().zip(q).for_each(|(x, qq)| *x += y * qq);
                        }
                        let n = dot(&v, &v).sqrt();
                        v.iter_mut().for_each(|x| *x /= n);
                        v
                    })
                    .collect();
                let residuals: Vec<f64> = vectors
                    .iter()
                    .zip(&energies)
                    .map(|(v, &e)| residual_norm(h, v, e))
                    .collect();
                if residuals.iter().all(|&r| r <= config.tol) {
                    return Ok((energies, vectors));
                }
                last_residuals = residuals;
                if m == max_iter || m == dim {
                    return Err(Error::NotConverged {
                        iterations: m,
                        residuals: last_residuals,
                    });
                }
            }
        }
        if m == max_iter {
            return Err(Error::NotConverged {
                iterations: m,
                residuals: last_residuals,
            });
        }
        if b < 1e-12 {
            beta.push(0.0);
            match random_unit(dim, &mut rng, &basis) {
                Some(v) => basis.push(v),
                None => {
                    return Err(Error::NotConverged {
                        iterations: m,
                        residuals: last_residuals,
                    })
                }
            }
        } else {
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
    }
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let m = alpha.len();
    let mut t = DMatrix::from_diagonal(&DVector::from_column_slice(alpha));
    for i in 0..m - 1 {
        t[(i, i + 1)] = beta[i];
        t[(i + 1, i)] = beta[i];
    }
    t
}

/// A charge-conserving observable evaluated in a sector. Sites are 0-based.
#[derive(Debug, Clone, Copy)]
pub enum Observable<'a> {
    Identity,
    Local {
        op: &'a LocalOperator,
        site: usize,
    },
    TwoPoint {
        a: &'a LocalOperator,
        i: usize,
        b: &'a LocalOperator,
        j: usize,
    },
}

/// `⟨v|O|v⟩` for a normalized sector vector.
pub fn ed_expectation(sector: &SectorBasis, v: &[f64], obs: Observable<'_>) -> Result<f64> {
    let factors: Vec<(usize, &LocalOperator)> = match obs {
        Observable::Identity => return Ok(dot(v, v)),
        Observable::Local { op, site } => vec![(site, op)],
        Observable::TwoPoint { a, i, b, j } => vec![(j, b), (i, a)],
    };
    let mut total_shift = 0;
    for &(site, op) in &factors {
        if site >= sector.length {
            return Err(Error::SiteOutOfRange {
                site,
                length: sector.length,
            });
        }
        total_shift += op.shift().value().ok_or(Error::NotChargeDiagonal)?;
    }
    if total_shift != 0 {
        return Err(Error::NotChargeDiagonal);
    }
    let nonzeros: Vec<_> = factors
        .iter()
        .map(|&(site, op)| (site, op.nonzeros()))
        .collect();
    let mut states = vec![0usize; sector.length];
    let mut acc = 0.0;
    for (col, &vc) in v.iter().enumerate() {
        if vc == 0.0 {
            continue;
        }
        sector.decode(sector.codes[col], &mut states);
        // apply the rightmost factor first: O = a_i b_j acts as a(b(v))
        let mut terms: Vec<(Vec<usize>, f64)> = vec![(states.clone(), vc)];
        for (site, nz) in &nonzeros {
            let mut next = Vec::new();
            for (st, amp) in &terms {
                for &(r, c, val) in nz {
                    if c == st[*site] {
                        let mut s2 = st.clone();
                        s2[*site] = r;
                        next.push((s2, amp * val));
                    }
                }
            }
            terms = next;
        }
        for (st, amp) in terms {
            if let Some(row) = sector.index_of(&st) {
                acc += v[row] * amp;
            }
        }
    }
    Ok(acc)
}

/// Golden-file rows `L,n_pol,g1,g2,t,delta,n_max,level_index,energy` with 15
/// significant digits.
pub fn golden_csv(params: &ModelParams, result: &SpectrumResult) -> String {
    let mut out = String::new();
    for (level, e) in result.energies.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            params.length,
            result.sector.total_charge(),
            params.g1,
            params.g2,
            params.t,
            params.delta,
            params.n_max,
            level,
            crate::format_sig(*e)
        );
    }
    out
}

pub const GOLDEN_HEADER: &str = "L,n_pol,g1,g2,t,delta,n_max,level_index,energy";
