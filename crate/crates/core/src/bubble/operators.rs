use nalgebra::DMatrix;
use num_complex::Complex64;

/// Collective internal state of one bubble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Internal {
    G = 0,
    R = 1,
    S = 2,
}

/// Index of `|m⟩ ⊗ |s⟩` in the product basis.
#[inline]
pub fn basis_index(m: usize, s: Internal) -> usize {
    3 * m + s as usize
}

/// Operators on the truncated boson ⊗ {G, R, S} space.
#[derive(Debug, Clone)]
pub struct BubbleOperators {
    pub n_max: usize,
    /// Lowering operator of the intermediate-state boson mode.
    pub beta: DMatrix<Complex64>,
    pub sigma_gr: DMatrix<Complex64>,
    pub sigma_rg: DMatrix<Complex64>,
    pub sigma_rr: DMatrix<Complex64>,
    pub sigma_gs: DMatrix<Complex64>,
    pub sigma_sg: DMatrix<Complex64>,
    pub sigma_ss: DMatrix<Complex64>,
    pub sigma_sr: DMatrix<Complex64>,
    pub sigma_rs: DMatrix<Complex64>,
}

impl BubbleOperators {
    pub fn dim(&self) -> usize {
        3 * (self.n_max + 1)
    }

    pub fn identity(&self) -> DMatrix<Complex64> {
        DMatrix::identity(self.dim(), self.dim())
    }

    pub fn number(&self) -> DMatrix<Complex64> {
        self.beta.adjoint() * &self.beta
    }
}

/// `|to⟩⟨from|` on the internal factor, identity on the boson factor.
fn transition(n_max: usize, to: Internal, from: Internal) -> DMatrix<Complex64> {
    let dim = 3 * (n_max + 1);
    let mut op = DMatrix::zeros(dim, dim);
    for m in 0..=n_max {
        op[(basis_index(m, to), basis_index(m, from))] = Complex64::new(1.0, 0.0);
    }
    op
}

pub fn build_operators(n_max: usize) -> BubbleOperators {
    assert!(n_max >= 1, "boson cutoff must be at least 1");
    let dim = 3 * (n_max + 1);
    let mut beta = DMatrix::zeros(dim, dim);
    for m in 1..=n_max {
        let amp = Complex64::new((m as f64).sqrt(), 0.0);
        for s in [Internal::G, Internal::R, Internal::S] {
            beta[(basis_index(m - 1, s), basis_index(m, s))] = amp;
        }
    }
    use Internal::*;
    BubbleOperators {
        n_max,
        beta,
        sigma_gr: transition(n_max, G, R),
        sigma_rg: transition(n_max, R, G),
        sigma_rr: transition(n_max, R, R),
        sigma_gs: transition(n_max, G, S),
        sigma_sg: transition(n_max, S, G),
        sigma_ss: transition(n_max, S, S),
        sigma_sr: transition(n_max, S, R),
        sigma_rs: transition(n_max, R, S),
    }
}
