//! Euler–Maruyama ensembles for `dx = (A x + f) dt + C dW`, `C Cᵀ = B`.
//!
//! Each trajectory owns a ChaCha8 stream keyed by `(seed, trajectory index)`
//! and draws its initial point and all increments from it in order.
//! Trajectories are grouped into fixed blocks of [`BLOCK`]; moment sums are
//! accumulated per block in trajectory order and blocks are combined in
//! index order, so the output is identical for every worker count.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::exec::Execution;
use crate::linalg::{self, Mat, Vect};
use crate::phasespace::{GaussianState, PhaseSpaceModel};
use crate::steadystate::time_grid;
use crate::{Error, Result};

/// Trajectories per work item.
pub const BLOCK: usize = 256;
/// Blocks reduced per batch; bounds memory at `BATCH · snapshots · moments`.
const BATCH: usize = 64;
/// `|x|` above which a trajectory counts as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Factor `C` with `C Cᵀ = B` and one column per nonzero eigenvalue.
///
/// Columns are ordered by the index of their dominant entry and signed so
/// that entry is positive; a diagonal `B` therefore gives `C = √B` with the
/// zero columns removed.
pub fn noise_factor(b: &Mat) -> Result<Mat> {
    if !b.is_square() {
        return Err(Error::Shape("diffusion matrix must be square".into()));
    }
    let n = b.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let b = linalg::symmetrize(b);
    let eig = SymmetricEigen::new(b.clone());
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * norm {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let mut cols: Vec<(usize, Vect)> = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 1e-12 * norm {
            continue;
        }
        let mut v = eig.eigenvectors.column(k).into_owned();
        let dominant = v.iamax();
        if v[dominant] < 0.0 {
            v = -v;
        }
        cols.push((dominant, v * lambda.sqrt()));
    }
    cols.sort_by_key(|(d, _)| *d);
    let mut c = Mat::zeros(n, cols.len());
    for (j, (_, v)) in cols.iter().enumerate() {
        c.set_column(j, v);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub n_traj: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Snapshot every `stride` steps (the final step is always included).
    pub stride: usize,
    pub exec: Execution,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { n_traj: 10_000, dt: 1e-3, t_final: 1.0, seed: 0, stride: 100, exec: Execution::default() }
    }
}

/// Empirical moments at one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub t: f64,
    pub mean: Vect,
    /// Unbiased sample covariance.
    pub cov: Mat,
    pub n_traj: usize,
    /// Standard error of each covariance entry.
    pub stderr_cov: Mat,
}

/// Runs the ensemble and returns one [`EnsembleStats`] per snapshot,
/// starting at `t = 0`.
pub fn simulate(model: &PhaseSpaceModel, initial: &GaussianState, opts: &SimOptions) -> Result<Vec<EnsembleStats>> {
    let dim = model.dim();
    if initial.dim() != dim {
        return Err(Error::Shape("initial state and model dimensions differ".into()));
    }
    let cov0 = initial
        .cov()
        .ok_or_else(|| Error::ImproperState("ensemble simulation needs a proper initial state".into()))?;
    if opts.n_traj < 2 {
        return Err(Error::InvalidParameter("n_traj must be >= 2".into()));
    }
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be finite and > 0, got {}", opts.dt)));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let (steps, h) = time_grid(opts.t_final, opts.dt)?;
    let chol = nalgebra::Cholesky::new(cov0.clone())
        .ok_or_else(|| Error::InvalidParameter("initial covariance must be positive definite".into()))?
        .l();
    let c = noise_factor(model.diffusion())?;

    let snap_steps: Vec<usize> = (0..=steps).filter(|k| k % opts.stride == 0 || *k == steps).collect();
    let setup = Setup {
        step_matrix: Mat::identity(dim, dim) + model.drift() * h,
        force_dt: model.force() * h,
        noise: c * h.sqrt(),
        mean0: initial.mean().clone(),
        chol,
        steps,
        snap_steps: &snap_steps,
        seed: opts.seed,
        n_traj: opts.n_traj,
    };
    let sums = match dim {
        2 => run::<2>(&setup, opts.exec)?,
        4 => run::<4>(&setup, opts.exec)?,
        6 => run::<6>(&setup, opts.exec)?,
        8 => run::<8>(&setup, opts.exec)?,
        _ => return Err(Error::UnsupportedModel(format!("ensemble simulation supports dimensions 2, 4, 6, 8; got {dim}"))),
    };
    Ok(snap_steps
        .iter()
        .zip(sums.chunks(Moments::len(dim)))
        .map(|(&k, s)| Moments { dim, sums: s }.stats(k as f64 * h, opts.n_traj))
        .collect())
}

struct Setup<'a> {
    step_matrix: Mat,
    force_dt: Vect,
    noise: Mat,
    mean0: Vect,
    chol: Mat,
    steps: usize,
    snap_steps: &'a [usize],
    seed: u64,
    n_traj: usize,
}

/// Raw moment sums for one snapshot, laid out as
/// `Σxᵢ | Σxᵢxⱼ | Σxᵢ²xⱼ | Σxᵢxⱼ² | Σxᵢ²xⱼ²` over pairs `i ≤ j`.
struct Moments<'a> {
    dim: usize,
    sums: &'a [f64],
}

impl Moments<'_> {
    fn pairs(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    fn len(dim: usize) -> usize {
        dim + 4 * Self::pairs(dim)
    }

    fn stats(&self, t: f64, n: usize) -> EnsembleStats {
        let d = self.dim;
        let np = Self::pairs(d);
        let nf = n as f64;
        let e = |off: usize| self.sums[off] / nf;
        let mean = Vect::from_fn(d, |i, _| e(i));
        let mut cov = Mat::zeros(d, d);
        let mut se = Mat::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                let (a, b) = (mean[i], mean[j]);
                let exy = e(d + k);
                let ex2y = e(d + np + k);
                let exy2 = e(d + 2 * np + k);
                let ex2y2 = e(d + 3 * np + k);
                let (ex2, ey2) = (e(d + pair_index(d, i, i)), e(d + pair_index(d, j, j)));
                // Z = (xᵢ − a)(xⱼ − b); expand E[Z²] in raw moments.
                let ez = exy - a * b;
                // The E[xᵢ] = a and E[xⱼ] = b terms collapse into −3a²b².
                let ez2 = ex2y2 - 2.0 * b * ex2y + b * b * ex2 - 2.0 * a * exy2 + 4.0 * a * b * exy + a * a * ey2
                    - 3.0 * a * a * b * b;
                let var_z = (ez2 - ez * ez).max(0.0);
                let c = ez * nf / (nf - 1.0);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
                let s = (var_z / nf).sqrt();
                se[(i, j)] = s;
                se[(j, i)] = s;
                k += 1;
            }
        }
        EnsembleStats { t, mean, cov, n_traj: n, stderr_cov: se }
    }
}

/// Position of `(i, j)`, `i ≤ j`, in the row-major upper triangle.
fn pair_index(d: usize, i: usize, j: usize) -> usize {
    i * (2 * d - i + 1) / 2 + j - i
}

fn run<const D: usize>(setup: &Setup<'_>, exec: Execution) -> Result<Vec<f64>> {
    let width = Moments::len(D) * setup.snap_steps.len();
    let n_blocks = setup.n_traj.div_ceil(BLOCK);
    let mut total = vec![0.0; width];
    for batch_start in (0..n_blocks).step_by(BATCH) {
        let batch = (n_blocks - batch_start).min(BATCH);
        let results = exec.map_indexed(batch, |b| run_block::<D>(setup, batch_start + b, width));
        for r in results {
            for (t, v) in total.iter_mut().zip(r?) {
                *t += v;
            }
        }
    }
    Ok(total)
}

fn run_block<const D: usize>(setup: &Setup<'_>, block: usize, width: usize) -> Result<Vec<f64>> {
    let step: [[f64; D]; D] = std::array::from_fn(|i| std::array::from_fn(|j| setup.step_matrix[(i, j)]));
    let force: [f64; D] = std::array::from_fn(|i| setup.force_dt[i]);
    let rank = setup.noise.ncols();
    let noise: Vec<[f64; D]> = (0..rank).map(|k| std::array::from_fn(|i| setup.noise[(i, k)])).collect();
    let has_force = force.iter().any(|v| *v != 0.0);
    let per_snap = Moments::len(D);
    let np = Moments::pairs(D);

    let mut acc = vec![0.0; width];
    let first = block * BLOCK;
    let last = (first + BLOCK).min(setup.n_traj);
    let mut xi = vec![0.0; rank.max(D)];
    for traj in first..last {
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        rng.set_stream(traj as u64);

        let z: [f64; D] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut x: [f64; D] = std::array::from_fn(|i| {
            setup.mean0[i] + (0..=i).map(|j| setup.chol[(i, j)] * z[j]).sum::<f64>()
        });

        let mut snap = 0;
        for k in 0..=setup.steps {
            if k > 0 {
                for v in xi.iter_mut().take(rank) {
                    *v = rng.sample(StandardNormal);
                }
                let mut next = [0.0; D];
                for i in 0..D {
                    let mut s = 0.0;
                    for j in 0..D {
                        s += step[i][j] * x[j];
                    }
                    for (col, w) in noise.iter().zip(&xi) {
                        s += col[i] * w;
                    }
                    next[i] = if has_force { s + force[i] } else { s };
                }
                x = next;
                if x.iter().any(|v| v.abs() > DIVERGENCE_BOUND || v.is_nan()) {
                    return Err(Error::Divergence { trajectory: traj, step: k });
                }
            }
            if setup.snap_steps.get(snap) == Some(&k) {
                let out = &mut acc[snap * per_snap..(snap + 1) * per_snap];
                accumulate::<D>(out, &x, np);
                snap += 1;
            }
        }
    }
    Ok(acc)
}

#[inline]
fn accumulate<const D: usize>(out: &mut [f64], x: &[f64; D], np: usize) {
    for i in 0..D {
        out[i] += x[i];
    }
    let mut k = D;
    for i in 0..D {
        for j in i..D {
            let (xi, xj) = (x[i], x[j]);
            let p = xi * xj;
            out[k] += p;
            out[k + np] += p * xi;
            out[k + 2 * np] += p * xj;
            out[k + 3 * np] += p * p;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::{build_model, ModelKind, SystemParams, TimeReversalSignature};
    use crate::steadystate::{evolve_covariance, solve_lyapunov};

    fn p0() -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, 0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn pair_index_matches_layout() {
        for d in [2, 4, 6, 8] {
            let mut k = 0;
            for i in 0..d {
                for j in i..d {
                    assert_eq!(pair_index(d, i, j), k, "d={d} ({i},{j})");
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn noise_factor_examples() {
        let c = noise_factor(&Mat::from_row_slice(2, 2, &[0.0625, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(c, Mat::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]));
        let c = noise_factor(&Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(c, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
        let b = Mat::from_row_slice(2, 2, &[0.2225, 0.4, 0.4, 1.0]);
        let c = noise_factor(&b).unwrap();
        assert!((&c * c.transpose() - &b).abs().max() < 1e-12);
        assert!(matches!(
            noise_factor(&Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1])),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn repeat_runs_are_bit_identical() {
        let model = build_model(ModelKind::CpCorrected, &p0()).unwrap();
        let init = GaussianState::centered(Mat::identity(2, 2) * 2.0).unwrap();
        let opts = SimOptions { n_traj: 100, dt: 0.01, t_final: 1.0, seed: 7, stride: 10, exec: Execution::Parallel };
        let a = simulate(&model, &init, &opts).unwrap();
        let b = simulate(&model, &init, &opts).unwrap();
        let c = simulate(&model, &init, &SimOptions { exec: Execution::Sequential, ..opts }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 11);
        assert_eq!(a[0].t, 0.0);
        assert!((a[10].t - 1.0).abs() < 1e-15);
        let d = simulate(&model, &init, &SimOptions { seed: 8, ..opts }).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn stationary_ensemble_stays_put() {
        let model = build_model(ModelKind::CaldeiraLeggett, &p0()).unwrap();
        let init = GaussianState::centered(Mat::identity(2, 2)).unwrap();
        let opts = SimOptions { n_traj: 20_000, dt: 1e-2, t_final: 2.0, seed: 1, stride: 50, exec: Execution::Parallel };
        for s in simulate(&model, &init, &opts).unwrap() {
            for i in 0..2 {
                for j in 0..2 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    // dt-bias of Euler–Maruyama is O(η dt) here, well below 4σ.
                    assert!((s.cov[(i, j)] - target).abs() < 4.0 * s.stderr_cov[(i, j)] + 0.02, "{s:?}");
                    assert!(s.stderr_cov[(i, j)] > 0.0);
                }
            }
        }
    }

    #[test]
    fn relaxes_towards_the_ode_oracle() {
        let model = build_model(ModelKind::CpCorrected, &p0()).unwrap();
        let init = GaussianState::proper(Vect::from_vec(vec![1.0, -0.5]), Mat::identity(2, 2) * 2.0).unwrap();
        let opts = SimOptions { n_traj: 20_000, dt: 2e-3, t_final: 3.0, seed: 3, stride: 500, exec: Execution::Parallel };
        let mc = simulate(&model, &init, &opts).unwrap();
        let ode = evolve_covariance(&model, &init, 3.0, 2e-3).unwrap();
        let last = mc.last().unwrap();
        let (_, exact) = ode.last().unwrap();
        let v = exact.cov().unwrap();
        for i in 0..2 {
            assert!((last.mean[i] - exact.mean()[i]).abs() < 0.05);
            for j in 0..2 {
                assert!((last.cov[(i, j)] - v[(i, j)]).abs() < 4.0 * last.stderr_cov[(i, j)] + 0.01);
            }
        }
        let _ = solve_lyapunov(&model).unwrap();
    }

    #[test]
    fn free_particle_position_spreads_diffusively() {
        let p = SystemParams { omega: 0.0, dqp: 0.2, ..p0() };
        let model = build_model(ModelKind::TranslationCovariantFree, &p).unwrap();
        let init = GaussianState::centered(Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let opts = SimOptions { n_traj: 20_000, dt: 1e-2, t_final: 40.0, seed: 5, stride: 1000, exec: Execution::Parallel };
        let s = simulate(&model, &init, &opts).unwrap();
        let last = s.last().unwrap();
        // Momentum variance: m/β = 1.
        assert!((last.cov[(1, 1)] - 1.0).abs() < 4.0 * last.stderr_cov[(1, 1)] + 0.01, "{last:?}");
        // Position variance grows roughly linearly at late times.
        let (v20, v30, v40) = (s[2].cov[(0, 0)], s[3].cov[(0, 0)], last.cov[(0, 0)]);
        let (d1, d2) = (v30 - v20, v40 - v30);
        assert!(d1 > 0.0 && d2 > 0.0 && (d1 / d2 - 1.0).abs() < 0.2, "{v20} {v30} {v40}");
    }

    #[test]
    fn divergence_is_reported() {
        let model = PhaseSpaceModel::new(
            "unstable",
            Mat::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 5.0]),
            Mat::identity(2, 2),
            TimeReversalSignature::positions_then_momenta(1),
        )
        .unwrap();
        let init = GaussianState::centered(Mat::identity(2, 2)).unwrap();
        let opts = SimOptions { n_traj: 10, dt: 0.01, t_final: 20.0, seed: 0, stride: 100, exec: Execution::Sequential };
        match simulate(&model, &init, &opts) {
            Err(Error::Divergence { trajectory: 0, step }) => assert!(step > 100),
            other => panic!("{other:?}"),
        }
    }
}
