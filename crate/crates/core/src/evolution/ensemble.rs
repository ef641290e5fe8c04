use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::grw::{sample_grw_with, GrwOptions, TrajectoryRecord};
use super::propagator::Propagator;
use crate::error::{Error, Result};
use crate::hilbert::{CollapseKernel, DensityMatrix, GrwParams, Hamiltonian, StateVector, C64};
use crate::rng::stream;

/// `M` independent GRW trajectories on streams `(seed, 0..M)`, in index order.
pub fn sample_grw_ensemble(
    psi0: &StateVector,
    h: &Hamiltonian,
    params: &GrwParams,
    t_final: f64,
    snapshot_times: &[f64],
    seed: u64,
    m: usize,
    opts: &GrwOptions,
) -> Result<Vec<TrajectoryRecord>> {
    let prop = Propagator::new(h);
    let kernel = CollapseKernel::new(psi0.grid(), params.sigma)?;
    (0..m as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k);
            sample_grw_with(psi0, &prop, &kernel, params, t_final, snapshot_times, seed, k, opts, &mut rng)
                .map_err(|e| Error::in_run(k as usize, e))
        })
        .collect()
}

/// `(1/M) sum_m |psi_t^(m)><psi_t^(m)|`.
pub fn ensemble_density_matrix(records: &[TrajectoryRecord], t: f64) -> Result<DensityMatrix> {
    let first = records.first().ok_or_else(|| Error::bad("empty ensemble"))?;
    let grid = first.snapshot(t)?.grid_arc();
    grid.require_mixed()?;
    let d = grid.dim();
    let states: Vec<&StateVector> = records.iter().map(|r| r.snapshot(t)).collect::<Result<_>>()?;
    let sum = states
        .par_chunks(256)
        .map(|chunk| {
            let mut acc = DMatrix::<C64>::zeros(d, d);
            for s in chunk {
                let v = DVector::from_column_slice(s.amplitudes());
                acc += &v * v.adjoint();
            }
            acc
        })
        .reduce(|| DMatrix::zeros(d, d), |a, b| a + b);
    let m = sum / C64::new(records.len() as f64, 0.0);
    Ok(DensityMatrix::from_raw(grid, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::master::MasterEquation;
    use crate::hilbert::GridSpec;
    use std::sync::Arc;

    #[test]
    fn single_record_gives_a_projector() {
        let g = Arc::new(GridSpec::build(1, 1, 8, 1.0, vec![1.0]).unwrap());
        let psi = StateVector::random(g.clone(), &mut stream(1, 0));
        let h = Hamiltonian::free(g);
        let p = GrwParams::new(0.5, 1.0).unwrap();
        let recs = sample_grw_ensemble(&psi, &h, &p, 1.0, &[1.0], 3, 1, &GrwOptions::default()).unwrap();
        let rho = ensemble_density_matrix(&recs, 1.0).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert!(matches!(ensemble_density_matrix(&recs, 0.5), Err(Error::MissingSnapshot(_))));
    }

    #[test]
    fn zero_rate_ensemble_is_pure() {
        let g = Arc::new(GridSpec::build(1, 1, 8, 1.0, vec![1.0]).unwrap());
        let psi = StateVector::random(g.clone(), &mut stream(2, 0));
        let h = Hamiltonian::free(g);
        let p = GrwParams::new(0.0, 1.0).unwrap();
        let recs = sample_grw_ensemble(&psi, &h, &p, 2.0, &[2.0], 3, 20, &GrwOptions::default()).unwrap();
        let rho = ensemble_density_matrix(&recs, 2.0).unwrap();
        let direct = DensityMatrix::pure(&Propagator::new(&h).evolve(&psi, 2.0));
        assert!((rho.matrix() - direct.matrix()).camax() < 1e-12);
    }

    #[test]
    fn small_ensemble_tracks_the_master_equation() {
        let g = Arc::new(GridSpec::build(1, 1, 8, 1.0, vec![1.0]).unwrap());
        let psi = StateVector::gaussian_packet(g.clone(), &[3.5], &[1.5], &[0.5]).unwrap();
        let h = Hamiltonian::free(g);
        let p = GrwParams::new(0.3, 1.0).unwrap();
        let m = 2000;
        let recs = sample_grw_ensemble(&psi, &h, &p, 2.0, &[2.0], 17, m, &GrwOptions::default()).unwrap();
        let rho = ensemble_density_matrix(&recs, 2.0).unwrap();
        let exact = MasterEquation::new(&h, &p).unwrap().propagate(&DensityMatrix::pure(&psi), 2.0).unwrap();
        let gap = rho.trace_norm_distance(&exact);
        assert!(gap <= 5.0 / (m as f64).sqrt(), "gap {gap}");
    }
}
