//! Random model generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qbm_core::steadystate::is_hurwitz;
use qbm_core::{PhaseSpaceModel, TimeReversalSignature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `R Rᵀ / k + floor·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Mat {
    let r = gaussian_matrix(rng, k, k);
    &r * r.transpose() / k as f64 + Mat::identity(k, k) * floor
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = Mat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `A = (S − ½B) Q` with `S` time-odd antisymmetric: detailed balance at `V = Q⁻¹`.
    DetailedBalance,
    /// A detailed-balance drift plus a generic perturbation of this size.
    Perturbed(f64),
    /// Hurwitz drift with no structure.
    Generic,
}

/// Random model in `dof` degrees of freedom with time-even diffusion
/// (`B_R = 0`) and a Hurwitz drift. The position block of `B` is zero with
/// probability `p_singular`.
pub fn random_even_diffusion_model(rng: &mut ChaCha8Rng, dof: usize, family: Family, p_singular: f64) -> PhaseSpaceModel {
    let n = 2 * dof;
    let eps = TimeReversalSignature::positions_then_momenta(dof);
    loop {
        let bq = if rng.random::<f64>() < p_singular { Mat::zeros(dof, dof) } else { random_spd(rng, dof, 0.05) };
        let b = block_diag(&bq, &random_spd(rng, dof, 0.1));
        let a = match family {
            Family::Generic => {
                let r = gaussian_matrix(rng, n, n);
                let lift = &r * r.transpose() / n as f64 + Mat::identity(n, n) * 0.1;
                gaussian_matrix(rng, n, n) - lift * 2.0
            }
            Family::DetailedBalance | Family::Perturbed(_) => {
                let v = block_diag(&random_spd(rng, dof, 0.2), &random_spd(rng, dof, 0.2));
                let q = v.clone().try_inverse().unwrap();
                let x = gaussian_matrix(rng, dof, dof);
                let mut s = Mat::zeros(n, n);
                s.view_mut((0, dof), (dof, dof)).copy_from(&x);
                s.view_mut((dof, 0), (dof, dof)).copy_from(&(-x.transpose()));
                let base = (s - &b * 0.5) * q;
                match family {
                    Family::Perturbed(size) => {
                        let e = gaussian_matrix(rng, n, n);
                        let e = &e / e.norm() * size;
                        base + e
                    }
                    _ => base,
                }
            }
        };
        if !is_hurwitz(&a) {
            continue;
        }
        if let Ok(model) = PhaseSpaceModel::new("random", a, b, eps.clone()) {
            if qbm_core::solve_lyapunov(&model).is_ok() {
                return model;
            }
        }
    }
}
