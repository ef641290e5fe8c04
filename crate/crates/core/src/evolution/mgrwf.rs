use super::grw::{check_times, CollapseEvent, CollapseSchedule, GrwClock, Segmenter, TrajectoryRecord};
use super::propagator::Propagator;
use crate::error::Result;
use crate::hilbert::gaussian::{collapse_density, collapse_weights_dm};
use crate::hilbert::{CollapseKernel, DensityMatrix, GrwParams, Hamiltonian};
use crate::rng::{categorical, stream};

/// Jump process of a collapsing density matrix: flashes at rate `N lambda`,
/// centers from `tr(rho g_{I,x}) a^d`, updates `g^(1/2) rho g^(1/2) / C`.
#[allow(clippy::too_many_arguments)]
pub fn mgrwf_trajectory(
    rho0: &DensityMatrix,
    h: &Hamiltonian,
    params: &GrwParams,
    t_final: f64,
    snapshot_times: &[f64],
    seed: u64,
    index: u64,
    schedule: &CollapseSchedule,
) -> Result<TrajectoryRecord<DensityMatrix>> {
    let params = params.validated()?;
    let snaps = check_times(t_final, snapshot_times)?;
    let grid = rho0.grid_arc();
    let prop = Propagator::new(h);
    let kernel = CollapseKernel::new(&grid, params.sigma)?;
    let mut rng = stream(seed, index);
    let mut clock = GrwClock::new(grid.n_particles(), &params, schedule)?;
    let mut seg = Segmenter::new(&snaps);
    let mut events = Vec::new();
    let mut rho = rho0.clone();
    let mut now = 0.0;
    let evolve = |r: &DensityMatrix, dt: f64| prop.evolve_density(r, dt);
    while let Some((t, i)) = clock.next(now, &mut rng) {
        if t > t_final {
            break;
        }
        seg.drain(&mut now, &mut rho, t, false, evolve);
        rho = evolve(&rho, t - now);
        now = t;
        let site = categorical(&mut rng, &collapse_weights_dm(&rho, &kernel, i));
        rho = collapse_density(&rho, &kernel, i, site)?;
        events.push(CollapseEvent::new(&grid, t, site, i));
    }
    seg.drain(&mut now, &mut rho, t_final, true, evolve);
    Ok(TrajectoryRecord { seed, index, params, t_final, events, snapshots: seg.out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::grw::{sample_grw_trajectory, GrwOptions};
    use crate::hilbert::{collapse_weights, GridSpec, StateVector};
    use std::sync::Arc;

    #[test]
    fn pure_data_stays_pure_and_matches_grw() {
        let g = Arc::new(GridSpec::build(2, 1, 4, 1.0, vec![1.0, 1.0]).unwrap());
        let psi = StateVector::random(g.clone(), &mut stream(1, 0));
        let h = Hamiltonian::new(g.clone(), |x| 0.1 * x[0]).unwrap();
        let p = GrwParams::new(0.8, 1.0).unwrap();
        let a = mgrwf_trajectory(&DensityMatrix::pure(&psi), &h, &p, 3.0, &[3.0], 5, 2, &CollapseSchedule::Poisson).unwrap();
        let b = sample_grw_trajectory(&psi, &h, &p, 3.0, &[3.0], 5, 2, &GrwOptions::default()).unwrap();
        let rho = a.snapshot(3.0).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-10);
        // Same stream, same draws: identical event records while the states agree.
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(&b.events) {
            assert_eq!((x.site, x.i), (y.site, y.i));
            assert!((x.t - y.t).abs() < 1e-12);
        }
        let pure = DensityMatrix::pure(b.snapshot(3.0).unwrap());
        assert!((rho.matrix() - pure.matrix()).camax() < 1e-10);

        let k = CollapseKernel::new(&g, 1.0).unwrap();
        let w_dm = collapse_weights_dm(&DensityMatrix::pure(&psi), &k, 1);
        let w = collapse_weights(&psi, &k, 1);
        for (x, y) in w_dm.iter().zip(&w) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rate_has_no_flashes() {
        let g = Arc::new(GridSpec::ring(4).unwrap());
        let psi = StateVector::random(g.clone(), &mut stream(2, 0));
        let p = GrwParams::new(0.0, 1.0).unwrap();
        let r = mgrwf_trajectory(&DensityMatrix::pure(&psi), &Hamiltonian::free(g), &p, 5.0, &[], 1, 0, &CollapseSchedule::Poisson).unwrap();
        assert!(r.events.is_empty());
    }

    #[test]
    fn first_flash_law_of_a_mixture() {
        let g = Arc::new(GridSpec::ring(2).unwrap());
        let k = CollapseKernel::new(&g, 1.0).unwrap();
        let p1 = StateVector::from_real(g.clone(), &[1.0, 0.0]).unwrap();
        let p2 = StateVector::from_real(g.clone(), &[0.6, 0.8]).unwrap();
        let rho = DensityMatrix::mixture(&[(0.5, &p1), (0.5, &p2)]).unwrap();
        let w = collapse_weights_dm(&rho, &k, 0);
        let (a, b) = (collapse_weights(&p1, &k, 0), collapse_weights(&p2, &k, 0));
        for x in 0..2 {
            assert!((w[x] - 0.5 * (a[x] + b[x])).abs() < 1e-14);
        }
    }
}
