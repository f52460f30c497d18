use nalgebra::DMatrix;
use num_complex::Complex64;

use super::operators::{build_operators, BubbleOperators};
use crate::error::Result;
use crate::interaction::InteractionSummary;
use crate::params::PhysicalParams;
use crate::units::to_angular;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

/// Rates and couplings of the bubble model in rad/μs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleRates {
    pub delta_e: f64,
    pub delta_r: f64,
    pub delta_c: f64,
    pub gamma_e: f64,
    pub gamma_r: f64,
    pub gamma_s: f64,
    pub gamma_c: f64,
    pub omega_cf: f64,
    pub xi: f64,
    pub alpha: f64,
    /// Per-bubble coupling `g√n_b`.
    pub coupling: f64,
    /// `(N / n_b) g√n_b`, coupling of the whole ensemble of bubbles back onto the cavity.
    pub cavity_coupling: f64,
}

impl BubbleRates {
    pub fn from_params(params: &PhysicalParams, n_b: f64) -> Self {
        let d = params.detunings();
        let n = params.ensemble.atom_number as f64;
        let g_sqrt_nb = (params.collective_coupling().powi(2) * n_b / n).sqrt();
        BubbleRates {
            delta_e: to_angular(d.e.value().re),
            delta_r: to_angular(d.r.value().re),
            delta_c: to_angular(d.c.value().re),
            gamma_e: to_angular(params.ensemble.gamma_e),
            gamma_r: to_angular(params.rydberg.gamma_r),
            gamma_s: to_angular(params.gamma_s()),
            gamma_c: to_angular(params.cavity.gamma_c),
            omega_cf: to_angular(params.drive.omega_cf),
            xi: to_angular(params.rydberg.xi),
            alpha: to_angular(params.drive.alpha),
            coupling: to_angular(g_sqrt_nb),
            cavity_coupling: to_angular(n / n_b * g_sqrt_nb),
        }
    }
}

/// Row-major compressed sparse matrix acting on `vec(ρ)`.
#[derive(Debug, Clone, Default)]
struct SparseOp {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C>,
}

impl SparseOp {
    fn from_triplets(size: usize, mut triplets: Vec<(usize, usize, C)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut op = SparseOp {
            row_ptr: vec![0; size + 1],
            cols: Vec::with_capacity(triplets.len()),
            vals: Vec::with_capacity(triplets.len()),
        };
        let mut iter = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                iter.next();
            }
            if v.norm() != 0.0 {
                op.cols.push(c);
                op.vals.push(v);
                op.row_ptr[r + 1] += 1;
            }
        }
        for r in 0..size {
            op.row_ptr[r + 1] += op.row_ptr[r];
        }
        op
    }

    fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    fn apply_add(&self, coeff: C, x: &[C], y: &mut [C]) {
        if coeff == C::new(0.0, 0.0) || self.vals.is_empty() {
            return;
        }
        for (out, span) in y.iter_mut().zip(self.row_ptr.windows(2)) {
            let (cols, vals) = (&self.cols[span[0]..span[1]], &self.vals[span[0]..span[1]]);
            let acc: C = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
            *out += coeff * acc;
        }
    }
}

fn nonzeros(m: &DMatrix<C>) -> Vec<(usize, usize, C)> {
    let mut out = vec![];
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v.norm() != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Accumulates the superoperator of `ρ ↦ coeff · X ρ Y` in row-major `vec(ρ)`.
fn sandwich(
    dim: usize,
    out: &mut Vec<(usize, usize, C)>,
    coeff: C,
    x: &DMatrix<C>,
    y: &DMatrix<C>,
) {
    let xs = nonzeros(x);
    let ys = nonzeros(y);
    for &(i, k, xv) in &xs {
        for &(l, j, yv) in &ys {
            out.push((i * dim + j, k * dim + l, coeff * xv * yv));
        }
    }
}

fn commutator_terms(dim: usize, out: &mut Vec<(usize, usize, C)>, coeff: C, h: &DMatrix<C>) {
    let id = DMatrix::identity(dim, dim);
    // coeff · (−i)[H, ρ]
    sandwich(dim, out, -I * coeff, h, &id);
    sandwich(dim, out, I * coeff, &id, h);
}

fn dissipator_terms(dim: usize, out: &mut Vec<(usize, usize, C)>, rate: f64, l: &DMatrix<C>) {
    if rate == 0.0 {
        return;
    }
    let id = DMatrix::identity(dim, dim);
    let ld = l.adjoint();
    let ldl = &ld * l;
    let r = C::new(rate, 0.0);
    sandwich(dim, out, 2.0 * r, l, &ld);
    sandwich(dim, out, -r, &ldl, &id);
    sandwich(dim, out, -r, &id, &ldl);
}

/// Lindblad term `rate (2 L ρ L† − L†L ρ − ρ L†L)`.
pub fn dissipator(rate: f64, l: &DMatrix<C>, rho: &DMatrix<C>) -> DMatrix<C> {
    let ld = l.adjoint();
    let ldl = &ld * l;
    (l * rho * &ld * C::new(2.0, 0.0) - &ldl * rho - rho * &ldl) * C::new(rate, 0.0)
}

/// One Rydberg bubble coupled to the classical cavity amplitude.
#[derive(Debug, Clone)]
pub struct BubbleModel {
    pub ops: BubbleOperators,
    pub rates: BubbleRates,
    pub n_b: f64,
    pub bubble_count: f64,
    gen_static: SparseOp,
    gen_a_conj: SparseOp,
    gen_a: SparseOp,
    gen_nonlinear: SparseOp,
    /// `⟨β⟩ = Σ coeff · vec(ρ)[idx]`
    beta_trace: Vec<(usize, C)>,
    rr_diag: Vec<usize>,
    ss_diag: Vec<usize>,
}

impl BubbleModel {
    pub fn from_params(params: &PhysicalParams) -> Result<Self> {
        params.validate()?;
        let summary = InteractionSummary::from_params(params)?;
        Ok(Self::with_bubble_size(params, summary.n_b))
    }

    /// Model with an explicit number of atoms per bubble.
    pub fn with_bubble_size(params: &PhysicalParams, n_b: f64) -> Self {
        let ops = build_operators(params.bubble.n_max);
        let rates = BubbleRates::from_params(params, n_b);
        Self::assemble(ops, rates, n_b, params.ensemble.atom_number as f64 / n_b)
    }

    pub fn assemble(ops: BubbleOperators, rates: BubbleRates, n_b: f64, bubble_count: f64) -> Self {
        let dim = ops.dim();
        let size = dim * dim;

        let mut st = vec![];
        commutator_terms(
            dim,
            &mut st,
            C::new(1.0, 0.0),
            &Self::static_hamiltonian(&ops, &rates),
        );
        dissipator_terms(dim, &mut st, rates.gamma_e, &ops.beta);
        dissipator_terms(dim, &mut st, rates.gamma_r, &ops.sigma_gr);
        dissipator_terms(dim, &mut st, rates.gamma_s, &ops.sigma_gs);

        let mut lo = vec![];
        commutator_terms(dim, &mut lo, C::new(rates.coupling, 0.0), &ops.beta);
        let mut hi = vec![];
        commutator_terms(
            dim,
            &mut hi,
            C::new(rates.coupling, 0.0),
            &ops.beta.adjoint(),
        );

        let mut nl = vec![];
        if rates.xi != 0.0 {
            let id = DMatrix::identity(dim, dim);
            let xi = C::new(rates.xi, 0.0);
            sandwich(dim, &mut nl, 2.0 * xi, &ops.sigma_sr, &ops.sigma_rs);
            sandwich(dim, &mut nl, -xi, &ops.sigma_rr, &id);
            sandwich(dim, &mut nl, -xi, &id, &ops.sigma_rr);
        }

        // Tr(β ρ) = Σ_jk β_jk ρ_kj
        let beta_trace = nonzeros(&ops.beta)
            .into_iter()
            .map(|(j, k, v)| (k * dim + j, v))
            .collect();
        let diag = |p: &DMatrix<C>| {
            (0..dim)
                .filter(|&i| p[(i, i)].norm() != 0.0)
                .map(|i| i * dim + i)
                .collect::<Vec<_>>()
        };
        let rr_diag = diag(&ops.sigma_rr);
        let ss_diag = diag(&ops.sigma_ss);

        // dρ/dt is Hermitian: keep the rows of the upper triangle only
        let upper = |mut t: Vec<(usize, usize, C)>| {
            t.retain(|&(r, _, _)| r / dim <= r % dim);
            SparseOp::from_triplets(size, t)
        };
        BubbleModel {
            gen_static: upper(st),
            gen_a_conj: upper(lo),
            gen_a: upper(hi),
            gen_nonlinear: upper(nl),
            beta_trace,
            rr_diag,
            ss_diag,
            ops,
            rates,
            n_b,
            bubble_count,
        }
    }

    fn static_hamiltonian(ops: &BubbleOperators, rates: &BubbleRates) -> DMatrix<C> {
        let control = &ops.sigma_rg * &ops.beta * C::new(0.5 * rates.omega_cf, 0.0);
        &ops.sigma_rr * C::new(-rates.delta_r, 0.0)
            + ops.number() * C::new(-rates.delta_e, 0.0)
            + &control
            + control.adjoint()
    }

    /// Bubble Hamiltonian for a given classical cavity amplitude.
    pub fn hamiltonian(&self, a: C) -> DMatrix<C> {
        let drive = &self.ops.beta * (a.conj() * self.rates.coupling);
        Self::static_hamiltonian(&self.ops, &self.rates) + &drive + drive.adjoint()
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    /// Length of the flattened state `[vec(ρ), a]`.
    pub fn state_len(&self) -> usize {
        self.dim() * self.dim() + 1
    }

    pub fn generator_nnz(&self) -> usize {
        self.gen_static.nnz() + self.gen_a.nnz() + self.gen_a_conj.nnz() + self.gen_nonlinear.nnz()
    }

    /// Reference right-hand side, written directly as operator algebra.
    pub fn rhs(&self, rho: &DMatrix<C>, a: C) -> (DMatrix<C>, C) {
        let ops = &self.ops;
        let r = &self.rates;
        let h = self.hamiltonian(a);
        let mut d = (&h * rho - rho * &h) * (-I);
        d += dissipator(r.gamma_e, &ops.beta, rho);
        d += dissipator(r.gamma_r, &ops.sigma_gr, rho);
        d += dissipator(r.gamma_s, &ops.sigma_gs, rho);
        let p_rr = (&ops.sigma_rr * rho).trace().re;
        let transfer = &ops.sigma_sr * rho * &ops.sigma_rs * C::new(2.0, 0.0)
            - &ops.sigma_rr * rho
            - rho * &ops.sigma_rr;
        d += transfer * C::new(r.xi * p_rr, 0.0);

        let beta = (&ops.beta * rho).trace();
        let da = I * C::new(r.delta_c, r.gamma_c) * a - I * r.cavity_coupling * beta - I * r.alpha;
        (d, da)
    }

    pub fn expect_beta(&self, y: &[C]) -> C {
        self.beta_trace.iter().map(|&(k, v)| v * y[k]).sum()
    }

    pub fn population_r(&self, y: &[C]) -> f64 {
        self.rr_diag.iter().map(|&k| y[k].re).sum()
    }

    pub fn population_s(&self, y: &[C]) -> f64 {
        self.ss_diag.iter().map(|&k| y[k].re).sum()
    }

    /// Fast right-hand side on the flattened state, which must hold a
    /// Hermitian `ρ`.
    pub fn derivative(&self, y: &[C], dy: &mut [C]) {
        let size = self.dim() * self.dim();
        let (rho, a) = (&y[..size], y[size]);
        let out = &mut dy[..size];
        out.fill(C::new(0.0, 0.0));
        self.gen_static.apply_add(C::new(1.0, 0.0), rho, out);
        self.gen_a_conj.apply_add(a.conj(), rho, out);
        self.gen_a.apply_add(a, rho, out);
        let p_rr = self.population_r(y);
        self.gen_nonlinear.apply_add(C::new(p_rr, 0.0), rho, out);
        let dim = self.dim();
        for i in 0..dim {
            for j in i + 1..dim {
                out[j * dim + i] = out[i * dim + j].conj();
            }
        }

        let r = &self.rates;
        dy[size] = I * C::new(r.delta_c, r.gamma_c) * a
            - I * r.cavity_coupling * self.expect_beta(y)
            - I * r.alpha;
    }

    pub fn flatten(&self, rho: &DMatrix<C>, a: C) -> Vec<C> {
        let dim = self.dim();
        let mut y = Vec::with_capacity(self.state_len());
        for i in 0..dim {
            for j in 0..dim {
                y.push(rho[(i, j)]);
            }
        }
        y.push(a);
        y
    }

    pub fn unflatten(&self, y: &[C]) -> (DMatrix<C>, C) {
        let dim = self.dim();
        (
            DMatrix::from_fn(dim, dim, |i, j| y[i * dim + j]),
            y[dim * dim],
        )
    }

    /// Normalized transmission `γ_c² |a|² / α²`, zero without drive.
    pub fn transmission(&self, a: C) -> f64 {
        if self.rates.alpha == 0.0 {
            0.0
        } else {
            (self.rates.gamma_c / self.rates.alpha).powi(2) * a.norm_sqr()
        }
    }
}
