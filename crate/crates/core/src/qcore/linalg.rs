//! Small dense linear-algebra helpers on complex matrices.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{CMat, CVec, PureState, Register, C64};

/// Kronecker product `a ⊗ b` (`a` is the slow index).
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    a.kronecker(b)
}

/// Operator on a little-endian register from per-subsystem factors listed in
/// register order: `ops[0]` acts on the fastest subsystem.
pub fn kron_register_order(ops: &[CMat]) -> CMat {
    let mut acc = CMat::identity(1, 1);
    for op in ops {
        acc = kron(op, &acc);
    }
    acc
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], CMat::zeros(0, 0));
    }
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor kernel.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    if norm1 > 0.5 {
        s = (norm1 / 0.5).log2().ceil() as i32;
    }
    let scaled = m * C64::new(0.5f64.powi(s), 0.0);
    let mut term = CMat::identity(n, n);
    let mut acc = CMat::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled * C64::new(1.0 / k as f64, 0.0);
        acc += &term;
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    acc
}

/// exp(−i·t·H) for Hermitian `h`.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    expm(&(h * C64::new(0.0, -t)))
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Square Ginibre matrix; a convenient generic test input.
pub fn random_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    ginibre(d, d, rng)
}

/// Uniformly random unit vector of length `d`.
pub fn random_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    let g = ginibre(d, 1, rng);
    let v = CVec::from_column_slice(g.as_slice());
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Uniformly random unit state on `register`.
pub fn random_state<R: Rng + ?Sized>(register: Register, rng: &mut R) -> PureState {
    let d = register.total_dim();
    PureState::new(register, random_vector(d, rng)).expect("dimension matches by construction")
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = ginibre(d, d, rng);
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expm_matches_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 2, 5, 8] {
            let h = random_hermitian(d, &mut rng) * C64::new(3.0, 0.0);
            let (vals, vecs) = eigh(&h);
            let diag = CMat::from_diagonal(&CVec::from_iterator(
                d,
                vals.iter().map(|l| C64::new(0.0, -0.7 * l).exp()),
            ));
            let via_eig = &vecs * diag * vecs.adjoint();
            let via_taylor = expm_hermitian(&h, 0.7);
            assert!(max_abs(&(via_eig - via_taylor)) < 1e-12);
        }
    }

    #[test]
    fn eigh_sorted_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(6, &mut rng);
        let (vals, vecs) = eigh(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let diag = CMat::from_diagonal(&CVec::from_iterator(6, vals.iter().map(|&l| C64::new(l, 0.0))));
        assert!(max_abs(&(&vecs * diag * vecs.adjoint() - h)) < 1e-12);
    }

    #[test]
    fn register_order_kron_puts_first_factor_fast() {
        let a = CMat::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let id = CMat::identity(2, 2);
        let op = kron_register_order(&[a, id]);
        // flips the fast bit: |00> (index 0) -> |10> in (q0,q1) digits, index 1
        let mut v = CVec::zeros(4);
        v[0] = C64::new(1.0, 0.0);
        let w = op * v;
        assert_eq!(w[1], C64::new(1.0, 0.0));
    }
}
