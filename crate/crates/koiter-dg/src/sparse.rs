//! Sparse matrices (CSR), a quasi-definite LDL^T factorization with
//! elimination-tree symbolic analysis, a geometric nested-dissection
//! ordering, and a generalized Lanczos eigensolver.

use crate::{Error, Result};
use nalgebra::DMatrix;

/// Compressed sparse rows, general rectangular.
#[derive(Clone, Debug)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from coordinate triplets; duplicates are summed. Triplets are
    /// sorted first, so the result does not depend on their arrival order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(u32, u32, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut it = t.into_iter().peekable();
        while let Some((i, j, mut v)) = it.next() {
            while let Some(&(i2, j2, v2)) = it.peek() {
                if i2 == i && j2 == j {
                    v += v2;
                    it.next();
                } else {
                    break;
                }
            }
            indices.push(j);
            values.push(v);
            indptr[i as usize + 1] += 1;
        }
        for k in 0..nrows {
            indptr[k + 1] += indptr[k];
        }
        Csr { nrows, ncols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k] as usize];
            }
            y[i] = s;
        }
    }

    /// y += s * Aᵀ x.
    pub fn matvec_t_add(&self, x: &[f64], s: f64, y: &mut [f64]) {
        for i in 0..self.nrows {
            let xi = s * x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k] as usize] += self.values[k] * xi;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[k] as usize)] += self.values[k];
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `‖A - Aᵀ‖_max`, for symmetry checks.
    pub fn symmetry_error(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let a = self.indptr[i]..self.indptr[i + 1];
            let b = t.indptr[i]..t.indptr[i + 1];
            let ra: Vec<_> = a.map(|k| (self.indices[k], self.values[k])).collect();
            let rb: Vec<_> = b.map(|k| (t.indices[k], t.values[k])).collect();
            let mut ia = 0;
            let mut ib = 0;
            while ia < ra.len() || ib < rb.len() {
                match (ra.get(ia), rb.get(ib)) {
                    (Some(&(ca, va)), Some(&(cb, vb))) if ca == cb => {
                        worst = worst.max((va - vb).abs());
                        ia += 1;
                        ib += 1;
                    }
                    (Some(&(ca, va)), Some(&(cb, _))) if ca < cb => {
                        worst = worst.max(va.abs());
                        ia += 1;
                    }
                    (Some(_), Some(&(_, vb))) => {
                        worst = worst.max(vb.abs());
                        ib += 1;
                    }
                    (Some(&(_, va)), None) => {
                        worst = worst.max(va.abs());
                        ia += 1;
                    }
                    (None, Some(&(_, vb))) => {
                        worst = worst.max(vb.abs());
                        ib += 1;
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
        worst
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                t.push((self.indices[k], i as u32, self.values[k]));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, t)
    }

    /// Symmetric adjacency (pattern union with the transpose), excluding the
    /// diagonal; used by the ordering.
    fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.nrows.max(self.ncols)];
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k] as usize;
                if i != j {
                    adj[i].push(j as u32);
                    adj[j].push(i as u32);
                }
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }
}

/// Fill-reducing ordering for matrices whose unknowns carry 2D positions:
/// recursive coordinate bisection with a wide vertex separator ordered last.
/// Returns `perm` with `perm[new] = old`.
pub fn nested_dissection(a: &Csr, coords: &[[f64; 2]]) -> Vec<usize> {
    let n = a.nrows;
    assert_eq!(coords.len(), n);
    let adj = a.adjacency();
    let mut out = Vec::with_capacity(n);
    let mut side = vec![0u8; n];
    let all: Vec<u32> = (0..n as u32).collect();
    nd_recurse(&all, &adj, coords, &mut side, &mut out);
    debug_assert_eq!(out.len(), n);
    out
}

fn nd_recurse(
    set: &[u32],
    adj: &[Vec<u32>],
    coords: &[[f64; 2]],
    side: &mut [u8],
    out: &mut Vec<usize>,
) {
    const LEAF: usize = 48;
    if set.len() <= LEAF {
        out.extend(set.iter().map(|&v| v as usize));
        return;
    }
    // split on the axis with the larger extent, at the median
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for &v in set {
        for d in 0..2 {
            lo[d] = lo[d].min(coords[v as usize][d]);
            hi[d] = hi[d].max(coords[v as usize][d]);
        }
    }
    let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
    let mut vals: Vec<f64> = set.iter().map(|&v| coords[v as usize][axis]).collect();
    let mid = vals.len() / 2;
    vals.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let med = vals[mid];
    // side: 1 = A, 2 = B
    let mut na = 0usize;
    for &v in set {
        let s = if coords[v as usize][axis] < med { 1 } else { 2 };
        side[v as usize] = s;
        if s == 1 {
            na += 1;
        }
    }
    if na == 0 || na == set.len() {
        // degenerate split (many equal coordinates): fall back to natural order
        out.extend(set.iter().map(|&v| v as usize));
        for &v in set {
            side[v as usize] = 0;
        }
        return;
    }
    // wide separator: any vertex adjacent to the other part
    let mut a_part = Vec::with_capacity(na);
    let mut b_part = Vec::with_capacity(set.len() - na);
    let mut sep = Vec::new();
    for &v in set {
        let mine = side[v as usize];
        let crosses = adj[v as usize]
            .iter()
            .any(|&u| side[u as usize] != 0 && side[u as usize] != mine);
        if crosses {
            sep.push(v);
        } else if mine == 1 {
            a_part.push(v);
        } else {
            b_part.push(v);
        }
    }
    for &v in set {
        side[v as usize] = 0;
    }
    nd_recurse(&a_part, adj, coords, side, out);
    nd_recurse(&b_part, adj, coords, side, out);
    out.extend(sep.iter().map(|&v| v as usize));
}

/// LDL^T factorization of a symmetric matrix under a symmetric permutation;
/// no pivoting, which is exact for quasi-definite matrices. Keeps the pivot
/// sign counts (inertia).
pub struct LdlFactor {
    pub n: usize,
    pub perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
    dinv: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl LdlFactor {
    /// Factors the (full, symmetric) matrix `a`. `perm[new] = old`; pass the
    /// identity for natural ordering.
    pub fn new(a: &Csr, perm: Vec<usize>) -> Result<LdlFactor> {
        let n = a.nrows;
        assert_eq!(n, a.ncols);
        assert_eq!(n, perm.len());
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // permuted upper triangle in CSC, with a guaranteed diagonal
        let mut colcnt = vec![0usize; n];
        let mut has_diag = vec![false; n];
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[k] as usize;
                if j < i {
                    continue;
                }
                let (pi, pj) = (iperm[i], iperm[j]);
                let c = pi.max(pj);
                colcnt[c] += 1;
                if i == j {
                    has_diag[i] = true;
                }
            }
        }
        for (i, &hd) in has_diag.iter().enumerate() {
            if !hd {
                colcnt[iperm[i]] += 1;
            }
        }
        let mut ap = vec![0usize; n + 1];
        for c in 0..n {
            ap[c + 1] = ap[c] + colcnt[c];
        }
        let nnz = ap[n];
        let mut ai = vec![0u32; nnz];
        let mut ax = vec![0.0f64; nnz];
        let mut fill = ap.clone();
        for i in 0..n {
            for k in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[k] as usize;
                if j < i {
                    continue;
                }
                let (pi, pj) = (iperm[i], iperm[j]);
                let (r, c) = (pi.min(pj), pi.max(pj));
                ai[fill[c]] = r as u32;
                ax[fill[c]] = a.values[k];
                fill[c] += 1;
            }
        }
        for (i, &hd) in has_diag.iter().enumerate() {
            if !hd {
                let c = iperm[i];
                ai[fill[c]] = c as u32;
                ax[fill[c]] = 0.0;
                fill[c] += 1;
            }
        }

        // elimination tree and column counts of L
        const UNKNOWN: usize = usize::MAX;
        let mut work = vec![UNKNOWN; n];
        let mut lnz = vec![0usize; n];
        let mut etree = vec![UNKNOWN; n];
        for j in 0..n {
            work[j] = j;
            for k in ap[j]..ap[j + 1] {
                let mut i = ai[k] as usize;
                if i == j {
                    continue;
                }
                debug_assert!(i < j);
                while work[i] != j {
                    if etree[i] == UNKNOWN {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }

        let mut lp = vec![0usize; n + 1];
        for c in 0..n {
            lp[c + 1] = lp[c] + lnz[c];
        }
        let lnnz = lp[n];
        let mut li = vec![0u32; lnnz];
        let mut lx = vec![0.0f64; lnnz];
        let mut d = vec![0.0f64; n];
        let mut dinv = vec![0.0f64; n];

        let mut y_vals = vec![0.0f64; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = lp[..n].to_vec();

        let mut n_pos = 0usize;
        let mut n_neg = 0usize;
        for k in 0..n {
            let mut nnz_y = 0usize;
            d[k] = 0.0;
            for p in ap[k]..ap[k + 1] {
                let b = ai[p] as usize;
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y_vals[b] = ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut ne = 1usize;
                    let mut nx = etree[b];
                    while nx != UNKNOWN && nx < k {
                        if y_used[nx] {
                            break;
                        }
                        y_used[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for q in (0..nnz_y).rev() {
                let c = y_idx[q];
                let yc = y_vals[c];
                let t = next_space[c];
                for p in lp[c]..t {
                    y_vals[li[p] as usize] -= lx[p] * yc;
                }
                let lkc = yc * dinv[c];
                lx[t] = lkc;
                li[t] = k as u32;
                d[k] -= yc * lkc;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot at column {k}")));
            }
            if d[k] > 0.0 {
                n_pos += 1;
            } else {
                n_neg += 1;
            }
            dinv[k] = 1.0 / d[k];
        }

        Ok(LdlFactor { n, perm, lp, li, lx, dinv, n_pos, n_neg })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n];
        for new in 0..n {
            x[new] = b[self.perm[new]];
        }
        // (L+I) z = Pb
        for i in 0..n {
            let xi = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                x[self.li[p] as usize] -= self.lx[p] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        // (L+I)ᵀ y = z
        for i in (0..n).rev() {
            let mut s = 0.0;
            for p in self.lp[i]..self.lp[i + 1] {
                s += self.lx[p] * x[self.li[p] as usize];
            }
            x[i] -= s;
        }
        let mut out = vec![0.0; n];
        for new in 0..n {
            out[self.perm[new]] = x[new];
        }
        out
    }

    pub fn l_nnz(&self) -> usize {
        self.lx.len()
    }
}

pub fn identity_perm(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// All eigenvalues of the dense symmetric pencil `P x = λ Q x` with SPD `Q`,
/// ascending; reduction through the Cholesky factor of Q.
pub fn dense_generalized_eigs(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("Q not positive definite".into()))?;
    let l = chol.l();
    let li = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("singular Cholesky factor".into()))?;
    let s = &li * p * li.transpose();
    let sym = nalgebra::SymmetricEigen::new(0.5 * (&s + s.transpose()));
    let mut eigs: Vec<f64> = sym.eigenvalues.iter().cloned().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eigs)
}

/// Smallest `k` eigenvalues of the symmetric pencil `P x = λ Q x` with SPD
/// `Q` (and `P` at least on the shifted side).
///
/// If `P` admits a positive-pivot LDL^T the solver runs shift-invert Lanczos
/// on `P^{-1} Q` in the Q-inner product; otherwise it falls back to direct
/// Lanczos on `Q^{-1} P`, which still bounds the leftmost eigenvalue well
/// enough to detect indefiniteness.
pub fn min_generalized_eig(
    p: &Csr,
    q: &Csr,
    k: usize,
    coords: Option<&[[f64; 2]]>,
) -> Result<Vec<f64>> {
    let n = p.nrows;
    assert_eq!(n, q.nrows);
    if n <= 220 {
        let eigs = dense_generalized_eigs(&p.to_dense(), &q.to_dense())?;
        return Ok(eigs.into_iter().take(k).collect());
    }
    let perm = match coords {
        Some(c) => nested_dissection(p, c),
        None => identity_perm(n),
    };
    let p_fact = LdlFactor::new(p, perm.clone());
    match p_fact {
        Ok(f) if f.n_neg == 0 => lanczos_pencil(q, p, Some(&f), None, k, n),
        _ => {
            let qf = LdlFactor::new(q, perm)?;
            if qf.n_neg > 0 {
                return Err(Error::SingularSystem("Q is not positive definite".into()));
            }
            lanczos_pencil(q, p, None, Some(&qf), k, n)
        }
    }
}

/// Lanczos on `op` self-adjoint in the Q-inner product. With `p_fact` the
/// operator is `P^{-1} Q` (Ritz values 1/λ); with `q_fact` it is `Q^{-1} P`
/// (Ritz values λ).
fn lanczos_pencil(
    q: &Csr,
    p: &Csr,
    p_fact: Option<&LdlFactor>,
    q_fact: Option<&LdlFactor>,
    k: usize,
    n: usize,
) -> Result<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5EED);
    let mut m = (6 * k + 60).min(n);
    let max_m = (40 * k + 360).min(n);
    loop {
        let mut vs: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut qvs: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut alphas = Vec::with_capacity(m);
        let mut betas = Vec::with_capacity(m);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut qv = vec![0.0; n];
        q.matvec(&v, &mut qv);
        let nrm = dot(&v, &qv).sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
        qv.iter_mut().for_each(|x| *x /= nrm);
        vs.push(v);
        qvs.push(qv);
        let mut breakdown = false;
        for j in 0..m {
            // w = op v_j
            let w_raw = if let Some(f) = p_fact {
                f.solve(&qvs[j])
            } else {
                let mut pv = vec![0.0; n];
                p.matvec(&vs[j], &mut pv);
                q_fact.unwrap().solve(&pv)
            };
            let mut w = w_raw;
            let alpha = dot(&w, &qvs[j]);
            alphas.push(alpha);
            for (c, vv) in vs.iter().enumerate() {
                let h = if c == j {
                    alpha
                } else if c + 1 == j {
                    betas[j - 1]
                } else {
                    0.0
                };
                if h != 0.0 {
                    axpy(&mut w, vv, -h);
                }
            }
            // full reorthogonalization in the Q-inner product
            for (vv, qq) in vs.iter().zip(&qvs) {
                let h = dot(&w, qq);
                if h != 0.0 {
                    axpy(&mut w, vv, -h);
                }
            }
            let mut qw = vec![0.0; n];
            q.matvec(&w, &mut qw);
            let beta = dot(&w, &qw).sqrt();
            if !beta.is_finite() {
                return Err(Error::SingularSystem("Lanczos breakdown".into()));
            }
            if beta < 1e-13 {
                breakdown = true;
                break;
            }
            betas.push(beta);
            w.iter_mut().for_each(|x| *x /= beta);
            qw.iter_mut().for_each(|x| *x /= beta);
            vs.push(w);
            qvs.push(qw);
        }
        let steps = alphas.len();
        if steps == 0 {
            return Err(Error::NoConvergence(0));
        }
        let mut t = DMatrix::zeros(steps, steps);
        for i in 0..steps {
            t[(i, i)] = alphas[i];
            if i + 1 < steps {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let te = nalgebra::SymmetricEigen::new(t);
        // Ritz values -> pencil eigenvalues
        let mut pairs: Vec<(f64, usize)> = te
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(c, &mu)| {
                let lam = if p_fact.is_some() { 1.0 / mu } else { mu };
                (lam, c)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let take = k.min(pairs.len());
        let mut lams = Vec::with_capacity(take);
        let mut ok = true;
        for &(lam, c) in pairs.iter().take(take) {
            // assemble the Ritz vector and check the pencil residual
            let mut x = vec![0.0; n];
            for (j, vv) in vs.iter().take(steps).enumerate() {
                let s = te.eigenvectors[(j, c)];
                axpy(&mut x, vv, s);
            }
            let mut px = vec![0.0; n];
            p.matvec(&x, &mut px);
            let mut qx = vec![0.0; n];
            q.matvec(&x, &mut qx);
            let mut rnorm = 0.0f64;
            let mut scale = 0.0f64;
            for i in 0..n {
                rnorm += (px[i] - lam * qx[i]).powi(2);
                scale += px[i].powi(2) + (lam * qx[i]).powi(2);
            }
            if rnorm.sqrt() > 2e-6 * scale.sqrt().max(1e-300) {
                ok = false;
            }
            lams.push(lam);
        }
        if (ok && lams.len() == k) || breakdown || m >= max_m {
            if !ok && !breakdown && m >= max_m && p_fact.is_some() {
                return Err(Error::NoConvergence(m));
            }
            return Ok(lams);
        }
        m = (2 * m).min(max_m);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], x: &[f64], s: f64) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += s * xx;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> (Csr, DMatrix<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let spd = &a * a.transpose() + DMatrix::identity(n, n) * (n as f64);
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i as u32, j as u32, spd[(i, j)]));
            }
        }
        (Csr::from_triplets(n, n, t), spd)
    }

    #[test]
    fn triplet_duplicates_sum() {
        let a = Csr::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 0.5), (0, 1, -1.0)],
        );
        let d = a.to_dense();
        assert_relative_eq!(d[(0, 0)], 3.0);
        assert_relative_eq!(d[(1, 0)], 0.5);
        assert_relative_eq!(d[(0, 1)], -1.0);
    }

    #[test]
    fn ldl_solves_spd_system() {
        let (a, dense) = random_spd(60, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let b: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
        let f = LdlFactor::new(&a, identity_perm(60)).unwrap();
        assert_eq!(f.n_neg, 0);
        let x = f.solve(&b);
        let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..60 {
            assert_relative_eq!(x[i], xd[i], epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn ldl_quasidefinite_inertia() {
        // [[A, B^T], [B, -C]] with SPD A (4) and C (3)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let na = 4;
        let nc = 3;
        let n = na + nc;
        let mut d = DMatrix::zeros(n, n);
        let (_, a) = random_spd(na, 7);
        let (_, c) = random_spd(nc, 8);
        for i in 0..na {
            for j in 0..na {
                d[(i, j)] = a[(i, j)];
            }
        }
        for i in 0..nc {
            for j in 0..nc {
                d[(na + i, na + j)] = -c[(i, j)];
            }
        }
        for i in 0..nc {
            for j in 0..na {
                let v = rng.gen::<f64>() - 0.5;
                d[(na + i, j)] = v;
                d[(j, na + i)] = v;
            }
        }
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i as u32, j as u32, d[(i, j)]));
            }
        }
        let csr = Csr::from_triplets(n, n, t);
        // any symmetric permutation must keep the inertia
        let f = LdlFactor::new(&csr, vec![3, 0, 6, 1, 4, 2, 5]).unwrap();
        assert_eq!(f.n_pos, na);
        assert_eq!(f.n_neg, nc);
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x = f.solve(&b);
        let xd = d.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert_relative_eq!(x[i], xd[i], epsilon = 1e-9, max_relative = 1e-8);
        }
    }

    #[test]
    fn nested_dissection_is_permutation() {
        let m = crate::mesh::Mesh::unit_square(
            4,
            [crate::mesh::Marker::D, crate::mesh::Marker::F, crate::mesh::Marker::S, crate::mesh::Marker::S],
        );
        // graph: vertex adjacency via edges
        let mut t = Vec::new();
        for e in &m.interior_edges {
            t.push((e.v[0] as u32, e.v[1] as u32, 1.0));
            t.push((e.v[1] as u32, e.v[0] as u32, 1.0));
        }
        for v in 0..m.vertices.len() {
            t.push((v as u32, v as u32, 1.0));
        }
        let a = Csr::from_triplets(m.vertices.len(), m.vertices.len(), t);
        let perm = nested_dissection(&a, &m.vertices);
        let mut seen = vec![false; m.vertices.len()];
        for &p in &perm {
            assert!(!seen[p]);
            seen[p] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn eig_identity_pencils() {
        let (q, _) = random_spd(50, 11);
        let eigs = min_generalized_eig(&q, &q, 3, None).unwrap();
        for e in eigs {
            assert_relative_eq!(e, 1.0, epsilon = 1e-8);
        }
        let mut p2 = q.clone();
        p2.values.iter_mut().for_each(|v| *v *= 2.0);
        let eigs = min_generalized_eig(&p2, &q, 2, None).unwrap();
        for e in eigs {
            assert_relative_eq!(e, 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn eig_random_pair_matches_dense() {
        let (p, pd) = random_spd(50, 21);
        let (q, qd) = random_spd(50, 22);
        let lam = min_generalized_eig(&p, &q, 4, None).unwrap();
        let exact = dense_generalized_eigs(&pd, &qd).unwrap();
        for i in 0..4 {
            assert_relative_eq!(lam[i], exact[i], epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn eig_lanczos_large_matches_dense() {
        // large enough to exercise the Lanczos path
        let n = 300;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        // banded SPD pencil
        let mut tp = Vec::new();
        let mut tq = Vec::new();
        for i in 0..n {
            tp.push((i as u32, i as u32, 4.0 + rng.gen::<f64>()));
            tq.push((i as u32, i as u32, 1.0 + 0.1 * rng.gen::<f64>()));
            if i + 1 < n {
                let v = -1.0 + 0.1 * rng.gen::<f64>();
                tp.push((i as u32, (i + 1) as u32, v));
                tp.push(((i + 1) as u32, i as u32, v));
                let w = 0.05 * rng.gen::<f64>();
                tq.push((i as u32, (i + 1) as u32, w));
                tq.push(((i + 1) as u32, i as u32, w));
            }
        }
        let p = Csr::from_triplets(n, n, tp);
        let q = Csr::from_triplets(n, n, tq);
        let lam = min_generalized_eig(&p, &q, 3, None).unwrap();
        let exact = dense_generalized_eigs(&p.to_dense(), &q.to_dense()).unwrap();
        for i in 0..3 {
            assert_relative_eq!(lam[i], exact[i], max_relative = 1e-6);
        }
    }

    #[test]
    fn eig_indefinite_detects_negative() {
        // P = Q - 3I has negative leftmost eigenvalues against Q ~ I
        let n = 300;
        let mut tp = Vec::new();
        let mut tq = Vec::new();
        for i in 0..n {
            let qd = 1.0 + (i as f64 / n as f64);
            tq.push((i as u32, i as u32, qd));
            tp.push((i as u32, i as u32, qd - 3.0 * (i == 7) as u64 as f64 * qd));
        }
        let p = Csr::from_triplets(n, n, tp);
        let q = Csr::from_triplets(n, n, tq);
        let lam = min_generalized_eig(&p, &q, 1, None).unwrap();
        assert!(lam[0] < 0.0, "leftmost {} should be negative", lam[0]);
        assert_relative_eq!(lam[0], -2.0, max_relative = 1e-5);
    }
}
