//! Four-field block system, block preconditioners, restarted GMRES and the
//! Newton wrapper for nonlinear solids.
//!
//! Unknowns are stacked as `[u, p | X, lambda]`:
//!
//! ```text
//! A11 = [[A_f, -B^T], [-B, 0]]     A12 = [[0, C_f^T], [0, 0]]
//! A21 = [[0, 0], [C_f, 0]]         A22 = [[A_s, -C_s^T], [-C_s / dt, 0]]
//! ```

use std::time::Instant;

use faer::prelude::*;
use faer::sparse::linalg::LuError;
use faer::sparse::linalg::solvers::Lu;
use faer::MatMut;
use thiserror::Error;

use crate::mesh::{DofMap, Mesh};
use crate::solid::{assemble_solid_residual_tangent, SolidError, SolidModel};
use crate::sparse::{norm2, SparseMatrix, TripletBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("block {block} is singular: {reason}")]
    Singular { block: String, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("GMRES reached {its} iterations with relative residual {residual:.3e}")]
    GmresMaxIterations {
        its: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("Newton did not converge in {maxit} iterations; residual history {history:?}")]
    NewtonMaxIterations { maxit: usize, history: Vec<f64> },
    #[error(transparent)]
    Solid(#[from] SolidError),
}

/// Sparse LU with partial pivoting of one diagonal block.
pub struct DirectFactor {
    n: usize,
    lu: Lu<usize, f64>,
    fingerprint: u64,
}

impl std::fmt::Debug for DirectFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectFactor")
            .field("n", &self.n)
            .field("fingerprint", &format_args!("{:016x}", self.fingerprint))
            .finish()
    }
}

impl DirectFactor {
    /// Factorize `a`; `block` names it in errors.
    pub fn new(a: &SparseMatrix, block: &str) -> Result<Self, SolverError> {
        let singular = |reason: String| SolverError::Singular {
            block: block.to_string(),
            reason,
        };
        if a.nrows() != a.ncols() {
            return Err(SolverError::DimensionMismatch(format!(
                "block {block} is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let lu = a.to_faer().sp_lu().map_err(|e| match e {
            LuError::SymbolicSingular { index } => singular(format!("no pivot at step {index}")),
            LuError::Generic(g) => singular(format!("{g:?}")),
        })?;
        let f = Self {
            n,
            lu,
            fingerprint: a.fingerprint(),
        };
        // numerical singularity shows up as non-finite or inaccurate solves
        let ones = vec![1.0; n];
        let b = a.mul_vec(&ones);
        let x = f.solve(&b);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(singular("factorization produced non-finite values".into()));
        }
        let mut r = b.clone();
        a.mul_vec_add(-1.0, &x, &mut r);
        let rel = norm2(&r) / norm2(&b).max(f64::MIN_POSITIVE);
        if rel > 1e-6 {
            return Err(singular(format!("probe solve residual {rel:.3e}")));
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Fingerprint of the factorized matrix.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let m = MatMut::from_column_major_slice_mut(x, self.n, 1);
        self.lu.solve_in_place(m);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Sizes of the four fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_u: usize,
    pub n_p: usize,
    pub n_x: usize,
    pub n_l: usize,
}

impl Layout {
    pub fn n1(&self) -> usize {
        self.n_u + self.n_p
    }

    pub fn n2(&self) -> usize {
        self.n_x + self.n_l
    }

    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }
}

/// `[[A_f, -B^T], [-B, 0]]`, with a unit diagonal at the pinned pressure.
pub fn assemble_a11(a_f: &SparseMatrix, div: &SparseMatrix, pinned: Option<usize>) -> SparseMatrix {
    let (nu, np) = (a_f.nrows(), div.nrows());
    let mut b = TripletBuilder::with_capacity(nu + np, nu + np, a_f.nnz() + 2 * div.nnz() + 1);
    b.add_block(0, 0, a_f, 1.0);
    for (k, i, v) in div.triplets() {
        b.push(i, nu + k, -v);
        b.push(nu + k, i, -v);
    }
    if let Some(k) = pinned {
        b.push(nu + k, nu + k, 1.0);
    }
    b.build()
}

/// `[[0, C_f^T], [0, 0]]`
pub fn assemble_a12(cf: &SparseMatrix, layout: Layout) -> SparseMatrix {
    let mut b = TripletBuilder::with_capacity(layout.n1(), layout.n2(), cf.nnz());
    for (l, j, v) in cf.triplets() {
        b.push(j, layout.n_x + l, v);
    }
    b.build()
}

/// `[[0, 0], [C_f, 0]]`
pub fn assemble_a21(cf: &SparseMatrix, layout: Layout) -> SparseMatrix {
    let mut b = TripletBuilder::with_capacity(layout.n2(), layout.n1(), cf.nnz());
    b.add_block(layout.n_x, 0, cf, 1.0);
    b.build()
}

/// `[[A_s, -C_s^T], [-C_s / dt, 0]]`
pub fn assemble_a22(a_s: &SparseMatrix, c_s: &SparseMatrix, dt: f64) -> SparseMatrix {
    let n = a_s.nrows();
    let mut b = TripletBuilder::with_capacity(2 * n, 2 * n, a_s.nnz() + 2 * c_s.nnz());
    b.add_block(0, 0, a_s, 1.0);
    for (i, j, v) in c_s.triplets() {
        b.push(j, n + i, -v);
        b.push(n + i, j, -v / dt);
    }
    b.build()
}

/// The full operator with its right-hand side.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub layout: Layout,
    pub a11: SparseMatrix,
    pub a12: SparseMatrix,
    pub a21: SparseMatrix,
    pub a22: SparseMatrix,
    /// Stacked `[g1_u, 0_p, f_X, g2]`.
    pub rhs: Vec<f64>,
}

pub fn build_block_system(
    layout: Layout,
    a11: SparseMatrix,
    cf: &SparseMatrix,
    a22: SparseMatrix,
    rhs: Vec<f64>,
) -> Result<BlockSystem, SolverError> {
    let check = |what: &str, got: (usize, usize), want: (usize, usize)| {
        if got != want {
            Err(SolverError::DimensionMismatch(format!("{what} is {got:?}, expected {want:?}")))
        } else {
            Ok(())
        }
    };
    check("A11", (a11.nrows(), a11.ncols()), (layout.n1(), layout.n1()))?;
    check("C_f", (cf.nrows(), cf.ncols()), (layout.n_l, layout.n_u))?;
    check("A22", (a22.nrows(), a22.ncols()), (layout.n2(), layout.n2()))?;
    check("rhs", (rhs.len(), 1), (layout.n(), 1))?;
    Ok(BlockSystem {
        layout,
        a12: assemble_a12(cf, layout),
        a21: assemble_a21(cf, layout),
        a11,
        a22,
        rhs,
    })
}

impl BlockSystem {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n1 = self.layout.n1();
        let (x1, x2) = x.split_at(n1);
        let (y1, y2) = y.split_at_mut(n1);
        self.a11.mul_vec_into(x1, y1);
        self.a12.mul_vec_add(1.0, x2, y1);
        self.a22.mul_vec_into(x2, y2);
        self.a21.mul_vec_add(1.0, x1, y2);
    }

    /// Single sparse matrix of the whole operator.
    pub fn monolithic(&self) -> SparseMatrix {
        let n1 = self.layout.n1();
        let n = self.layout.n();
        let nnz = self.a11.nnz() + self.a12.nnz() + self.a21.nnz() + self.a22.nnz();
        let mut b = TripletBuilder::with_capacity(n, n, nnz);
        b.add_block(0, 0, &self.a11, 1.0);
        b.add_block(0, n1, &self.a12, 1.0);
        b.add_block(n1, 0, &self.a21, 1.0);
        b.add_block(n1, n1, &self.a22, 1.0);
        b.build()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecondKind {
    Diagonal,
    #[default]
    Triangular,
}

impl std::str::FromStr for PrecondKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "diag" | "diagonal" | "block-diag" => Ok(Self::Diagonal),
            "tri" | "triangular" | "block-tri" => Ok(Self::Triangular),
            other => Err(format!("unknown preconditioner `{other}` (expected diag or tri)")),
        }
    }
}

impl std::fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Diagonal => "diag",
            Self::Triangular => "tri",
        })
    }
}

/// `z = P^{-1} r` for the block-diagonal or block lower-triangular
/// preconditioner built from exact diagonal-block solves.
pub fn precond_apply(
    kind: PrecondKind,
    f11: &DirectFactor,
    f22: &DirectFactor,
    a21: &SparseMatrix,
    r: &[f64],
    z: &mut [f64],
) {
    let n1 = f11.dim();
    z.copy_from_slice(r);
    let (z1, z2) = z.split_at_mut(n1);
    f11.solve_in_place(z1);
    if kind == PrecondKind::Triangular {
        a21.mul_vec_add(-1.0, z1, z2);
    }
    f22.solve_in_place(z2);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresParams {
    pub tol: f64,
    pub restart: usize,
    pub maxit: usize,
}

impl Default for GmresParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            restart: 200,
            maxit: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Total inner iterations over all restart cycles.
    pub its: usize,
    /// True relative residual `||b - A x|| / ||b||` at exit.
    pub residual: f64,
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt.
///
/// Convergence is declared on the true relative residual, which is
/// recomputed at every restart and at exit.
pub fn gmres(
    apply_a: impl Fn(&[f64], &mut [f64]),
    apply_m: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    params: GmresParams,
) -> Result<GmresOutcome, SolverError> {
    assert!(params.tol > 0.0 && params.restart >= 1);
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            its: 0,
            residual: 0.0,
        });
    }
    let m = params.restart;
    let mut its = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    loop {
        apply_a(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= params.tol {
            return Ok(GmresOutcome { x, its, residual: rel });
        }
        if its >= params.maxit {
            return Err(SolverError::GmresMaxIterations {
                its,
                residual: rel,
                best: x,
            });
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        for j in 0..m {
            apply_m(&v[j], &mut z);
            apply_a(&z, &mut w);
            its += 1;
            for i in 0..=j {
                let hij = crate::sparse::dot(&w, &v[i]);
                h[i][j] = hij;
                w.iter_mut().zip(&v[i]).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let hn = norm2(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                k = j;
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k = j + 1;
            let breakdown = hn <= 1e-14 * d;
            if g[j + 1].abs() / bnorm <= params.tol || its >= params.maxit || breakdown {
                break;
            }
            v.push(w.iter().map(|wk| wk / hn).collect());
        }
        // back substitution on the k x k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        w.iter_mut().for_each(|wk| *wk = 0.0);
        for (yi, vi) in y.iter().zip(&v) {
            w.iter_mut().zip(vi).for_each(|(wk, vk)| *wk += yi * vk);
        }
        apply_m(&w, &mut z);
        x.iter_mut().zip(&z).for_each(|(xk, zk)| *xk += zk);
        if k == 0 {
            // no progress possible from this Krylov space
            apply_a(&x, &mut r);
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
            let rel = norm2(&r) / bnorm;
            return Err(SolverError::GmresMaxIterations { its, residual: rel, best: x });
        }
    }
}

/// Solve the block system with preconditioned GMRES.
pub fn solve_block_system(
    sys: &BlockSystem,
    f11: &DirectFactor,
    f22: &DirectFactor,
    kind: PrecondKind,
    params: GmresParams,
) -> Result<GmresOutcome, SolverError> {
    solve_with_rhs(sys, &sys.rhs, f11, f22, kind, params)
}

fn solve_with_rhs(
    sys: &BlockSystem,
    rhs: &[f64],
    f11: &DirectFactor,
    f22: &DirectFactor,
    kind: PrecondKind,
    params: GmresParams,
) -> Result<GmresOutcome, SolverError> {
    gmres(
        |x, y| sys.matvec(x, y),
        |r, z| precond_apply(kind, f11, f22, &sys.a21, r, z),
        rhs,
        None,
        params,
    )
}

/// Reuse `cache` if it factorizes the same matrix, otherwise refactorize.
pub fn refactor_if_changed(cache: &mut Option<DirectFactor>, a: &SparseMatrix, block: &str) -> Result<bool, SolverError> {
    if let Some(f) = cache {
        if f.fingerprint() == a.fingerprint() {
            return Ok(false);
        }
    }
    *cache = Some(DirectFactor::new(a, block)?);
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self { tol: 1e-6, maxit: 20 }
    }
}

/// One time step as a nonlinear problem in `z = [u, p, X, lambda]`: the
/// linear block system with `A_s X` replaced by the elastic residual.
pub struct StepProblem<'a> {
    pub layout: Layout,
    pub a11: &'a SparseMatrix,
    pub cf: &'a SparseMatrix,
    pub c_s: &'a SparseMatrix,
    pub dt: f64,
    pub solid: &'a Mesh,
    pub solid_dofs: &'a DofMap,
    pub model: &'a SolidModel,
    pub rhs: &'a [f64],
}

impl StepProblem<'_> {
    /// Jacobian block system at `z` and the residual `R(z) = F(z) - rhs`.
    pub fn linearize(&self, z: &[f64]) -> Result<(BlockSystem, Vec<f64>), SolverError> {
        let l = self.layout;
        let x = &z[l.n1()..l.n1() + l.n_x];
        let (r_s, k_t) = assemble_solid_residual_tangent(self.solid, self.solid_dofs, self.model, x)?;
        let a22 = assemble_a22(&k_t, self.c_s, self.dt);
        let sys = build_block_system(l, self.a11.clone(), self.cf, a22, self.rhs.to_vec())?;
        let mut r = vec![0.0; l.n()];
        sys.matvec(z, &mut r);
        // swap the tangent action for the true elastic residual
        let mut kx = vec![0.0; l.n_x];
        k_t.mul_vec_into(x, &mut kx);
        let o = l.n1();
        for i in 0..l.n_x {
            r[o + i] += r_s[i] - kx[i];
        }
        r.iter_mut().zip(self.rhs).for_each(|(ri, bi)| *ri -= bi);
        Ok((sys, r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub z: Vec<f64>,
    pub nit: usize,
    pub its_total: usize,
    /// Residual norms, starting with the initial one.
    pub history: Vec<f64>,
    /// Seconds spent in factorizations and GMRES.
    pub solve_seconds: f64,
}

impl NewtonOutcome {
    /// GMRES iterations per Newton iteration.
    pub fn avg_its(&self) -> f64 {
        if self.nit == 0 {
            0.0
        } else {
            self.its_total as f64 / self.nit as f64
        }
    }
}

/// Plain Newton from `z0`; stops when `||R|| <= tol ||R(z0)||`.
pub fn newton_solve(
    problem: &StepProblem<'_>,
    z0: &[f64],
    f11: &DirectFactor,
    f22_cache: &mut Option<DirectFactor>,
    kind: PrecondKind,
    newton: NewtonParams,
    params: GmresParams,
) -> Result<NewtonOutcome, SolverError> {
    let mut z = z0.to_vec();
    let mut history = Vec::new();
    let mut its_total = 0;
    let mut solve_seconds = 0.0;
    let mut r0 = None;
    for nit in 0..=newton.maxit {
        let (sys, r) = problem.linearize(&z)?;
        let rn = norm2(&r);
        history.push(rn);
        let r0n = *r0.get_or_insert(rn);
        if rn <= newton.tol * r0n || rn == 0.0 {
            return Ok(NewtonOutcome {
                z,
                nit,
                its_total,
                history,
                solve_seconds,
            });
        }
        if nit == newton.maxit {
            break;
        }
        let t = Instant::now();
        refactor_if_changed(f22_cache, &sys.a22, "A22")?;
        let f22 = f22_cache.as_ref().expect("factor present");
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let out = solve_with_rhs(&sys, &neg, f11, f22, kind, params)?;
        solve_seconds += t.elapsed().as_secs_f64();
        its_total += out.its;
        z.iter_mut().zip(&out.x).for_each(|(zi, di)| *zi += di);
    }
    Err(SolverError::NewtonMaxIterations {
        maxit: newton.maxit,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, m: usize, density: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
        let mut b = TripletBuilder::new(n, m);
        for i in 0..n {
            for j in 0..m {
                if rng.random::<f64>() < density {
                    b.push(i, j, rng.random_range(-1.0..1.0));
                }
            }
        }
        b.build()
    }

    fn dominant(n: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
        let r = random_sparse(n, n, 0.3, rng);
        r.add_scaled(1.0, &SparseMatrix::identity(n), n as f64)
    }

    fn toy(rng: &mut ChaCha8Rng) -> (BlockSystem, DirectFactor, DirectFactor) {
        let layout = Layout { n_u: 3, n_p: 1, n_x: 2, n_l: 2 };
        let a11 = dominant(4, rng);
        let a22 = dominant(4, rng);
        let cf = random_sparse(2, 3, 0.7, rng);
        let rhs = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sys = build_block_system(layout, a11, &cf, a22, rhs).unwrap();
        let f11 = DirectFactor::new(&sys.a11, "A11").unwrap();
        let f22 = DirectFactor::new(&sys.a22, "A22").unwrap();
        (sys, f11, f22)
    }

    #[test]
    fn identity_factor_returns_rhs() {
        let f = DirectFactor::new(&SparseMatrix::identity(5), "I").unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn factor_residual_on_random_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = dominant(60, &mut rng);
        let f = DirectFactor::new(&a, "A").unwrap();
        for _ in 0..5 {
            let b: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = f.solve(&b);
            let mut r = b.clone();
            a.mul_vec_add(-1.0, &x, &mut r);
            assert!(norm2(&r) / norm2(&b) < 1e-12);
        }
    }

    #[test]
    fn singular_blocks_are_named() {
        // numerically singular: two equal rows
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 1.0), (1, 1, 2.0)]);
        match DirectFactor::new(&a, "A22") {
            Err(SolverError::Singular { block, .. }) => assert_eq!(block, "A22"),
            other => panic!("{other:?}"),
        }
        // structurally singular: empty column
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(matches!(DirectFactor::new(&a, "A11"), Err(SolverError::Singular { .. })));
    }

    #[test]
    fn block_matvec_matches_monolithic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (sys, _, _) = toy(&mut rng);
        let mono = sys.monolithic();
        for _ in 0..10 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut y = vec![0.0; 8];
            sys.matvec(&x, &mut y);
            let ym = mono.mul_vec(&x);
            let scale = norm2(&ym);
            for (a, b) in y.iter().zip(&ym) {
                assert!((a - b).abs() <= 1e-14 * scale);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let layout = Layout { n_u: 3, n_p: 1, n_x: 2, n_l: 2 };
        let r = build_block_system(layout, SparseMatrix::identity(3), &SparseMatrix::zeros(2, 3), SparseMatrix::identity(4), vec![0.0; 8]);
        assert!(matches!(r, Err(SolverError::DimensionMismatch(_))));
    }

    #[test]
    fn preconditioners_match_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (sys, f11, f22) = toy(&mut rng);
        let a11 = sys.a11.to_dense();
        let a22 = sys.a22.to_dense();
        let a21 = sys.a21.to_dense();
        let mut pd = DMatrix::<f64>::zeros(8, 8);
        pd.view_mut((0, 0), (4, 4)).copy_from(&a11);
        pd.view_mut((4, 4), (4, 4)).copy_from(&a22);
        let mut pt = pd.clone();
        pt.view_mut((4, 0), (4, 4)).copy_from(&a21);
        let r: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rv = DVector::from_column_slice(&r);
        for (kind, p) in [(PrecondKind::Diagonal, pd), (PrecondKind::Triangular, pt)] {
            let mut z = vec![0.0; 8];
            precond_apply(kind, &f11, &f22, &sys.a21, &r, &mut z);
            let exact = p.lu().solve(&rv).unwrap();
            for i in 0..8 {
                assert!((z[i] - exact[i]).abs() < 1e-12, "{kind}");
            }
        }
    }

    #[test]
    fn kinds_agree_without_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut sys, f11, f22) = toy(&mut rng);
        sys.a21 = SparseMatrix::zeros(4, 4);
        let r: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut zd, mut zt) = (vec![0.0; 8], vec![0.0; 8]);
        precond_apply(PrecondKind::Diagonal, &f11, &f22, &sys.a21, &r, &mut zd);
        precond_apply(PrecondKind::Triangular, &f11, &f22, &sys.a21, &r, &mut zt);
        assert_eq!(zd, zt);
    }

    #[test]
    fn gmres_on_identity_takes_one_iteration() {
        let b = vec![1.0, -2.0, 3.0];
        let out = gmres(|x, y| y.copy_from_slice(x), |x, y| y.copy_from_slice(x), &b, None, GmresParams::default()).unwrap();
        assert_eq!(out.its, 1);
        assert!(out.residual < 1e-14);
    }

    #[test]
    fn exact_triangular_preconditioner_takes_one_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut sys, f11, f22) = toy(&mut rng);
        sys.a12 = SparseMatrix::zeros(4, 4);
        let out = solve_block_system(&sys, &f11, &f22, PrecondKind::Triangular, GmresParams::default()).unwrap();
        assert_eq!(out.its, 1);
        // the preconditioner alone already solves it
        let mut z = vec![0.0; 8];
        precond_apply(PrecondKind::Triangular, &f11, &f22, &sys.a21, &sys.rhs, &mut z);
        let mut r = vec![0.0; 8];
        sys.matvec(&z, &mut r);
        r.iter_mut().zip(&sys.rhs).for_each(|(a, b)| *a -= b);
        assert!(norm2(&r) < 1e-13);
    }

    #[test]
    fn gmres_matches_direct_solve_on_spd_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = DMatrix::<f64>::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose() + DMatrix::<f64>::identity(50, 50) * 5.0;
        let b: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            let r = &a * DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        };
        let out = gmres(apply, |x, y| y.copy_from_slice(x), &b, None, GmresParams { tol: 1e-10, restart: 10, maxit: 2000 }).unwrap();
        let exact = a.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&b));
        let err = (DVector::from_column_slice(&out.x) - &exact).norm() / exact.norm();
        assert!(err < 1e-7, "{err:e}");
        assert!(out.its > 10, "restarts exercised");
    }

    #[test]
    fn gmres_reports_max_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = dominant(40, &mut rng);
        let b = vec![1.0; 40];
        let r = gmres(|x, y| a.mul_vec_into(x, y), |x, y| y.copy_from_slice(x), &b, None, GmresParams { tol: 1e-14, restart: 2, maxit: 3 });
        match r {
            Err(SolverError::GmresMaxIterations { its, best, .. }) => {
                assert!(its <= 4);
                assert_eq!(best.len(), 40);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let out = gmres(|x, y| y.copy_from_slice(x), |x, y| y.copy_from_slice(x), &[0.0; 4], None, GmresParams::default()).unwrap();
        assert_eq!(out.its, 0);
        assert_eq!(out.x, vec![0.0; 4]);
    }

    #[test]
    fn refactor_only_when_matrix_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = dominant(10, &mut rng);
        let mut cache = None;
        assert!(refactor_if_changed(&mut cache, &a, "A").unwrap());
        let fp = cache.as_ref().unwrap().fingerprint();
        assert!(!refactor_if_changed(&mut cache, &a.clone(), "A").unwrap());
        let b = a.add_scaled(1.0, &SparseMatrix::identity(10), 1e-3);
        assert!(refactor_if_changed(&mut cache, &b, "A").unwrap());
        assert_ne!(cache.unwrap().fingerprint(), fp);
    }
}
