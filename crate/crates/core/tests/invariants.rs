use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use primo::evolution::{
    parse_event_log, sample_grw_trajectory, EventLog, GrwOptions, KrausStep, MasterEquation, Propagator, QuantumState,
};
use primo::hilbert::{collapse_state, collapse_weights, tensor_split, CollapseKernel, DensityMatrix, GridSpec, GrwParams, Hamiltonian, StateVector, C64};
use primo::ontology::{EquilibriumSampler, EquilibriumSampling};
use primo::readout::{MacroPartition, Region};
use primo::rng::stream;

fn grid(n: usize, l: usize, a: f64) -> Arc<GridSpec> {
    Arc::new(GridSpec::build(n, 1, l, a, vec![1.0; n]).unwrap())
}

fn random_state(g: &Arc<GridSpec>, seed: u64) -> StateVector {
    StateVector::random(g.clone(), &mut stream(seed, 0))
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn collapse_centers_are_a_distribution(seed in any::<u64>(), l in prop::sample::select(vec![4usize, 8, 16]), sigma in 0.3f64..4.0, n in 1usize..3) {
        let g = grid(n, l, 1.0);
        let psi = random_state(&g, seed);
        let k = CollapseKernel::new(&g, sigma).unwrap();
        for i in 0..n {
            let w = collapse_weights(&psi, &k, i);
            prop_assert!((w.iter().sum::<f64>() * g.cell_volume() - 1.0).abs() < 1e-10);
            let x = (seed as usize) % l;
            let out = collapse_state(&psi, &k, i, x).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn propagation_is_unitary_and_reversible(seed in any::<u64>(), strength in -2.0f64..2.0, t in 0.0f64..3.0) {
        let g = grid(2, 4, 1.0);
        let h = Hamiltonian::new(g.clone(), |x| strength * (x[0] - x[1]).cos()).unwrap();
        let psi = random_state(&g, seed);
        let p = Propagator::new(&h);
        let mut amps = psi.amplitudes().to_vec();
        p.apply(&mut amps, t);
        let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-10);
        p.apply(&mut amps, -t);
        for (a, b) in amps.iter().zip(psi.amplitudes()) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn kraus_steps_are_complete(lambda in 0.0f64..1.0, sigma in 0.3f64..3.0, dt in 0.01f64..0.25, kinetic in any::<bool>()) {
        let g = grid(2, 4, 1.0);
        let h = if kinetic { Hamiltonian::free(g.clone()) } else { Hamiltonian::zero(g.clone()) };
        let step = KrausStep::new(&h, &GrwParams::new(lambda, sigma).unwrap(), dt).unwrap();
        let gap = step.completeness() - DMatrix::<C64>::identity(16, 16);
        prop_assert!(max_abs(&gap) < 1e-10);
    }

    #[test]
    fn master_evolution_keeps_a_density_matrix(seed in any::<u64>(), lambda in 0.0f64..1.0, t in 0.0f64..4.0) {
        let g = grid(2, 4, 1.0);
        let rho = DensityMatrix::pure(&random_state(&g, seed));
        let free = MasterEquation::new(&Hamiltonian::free(g.clone()), &GrwParams::new(lambda, 1.0).unwrap()).unwrap();
        let out = free.propagate(&rho, t).unwrap();
        prop_assert!((out.trace() - 1.0).abs() < 1e-10);
        prop_assert!(out.min_eigenvalue() > -1e-9);
        prop_assert!(max_abs(&(out.matrix() - out.matrix().adjoint())) < 1e-10);
        let frozen = MasterEquation::new(&Hamiltonian::zero(g.clone()), &GrwParams::new(lambda, 1.0).unwrap()).unwrap();
        let still = frozen.propagate(&rho, t).unwrap();
        for (a, b) in still.diagonal().iter().zip(rho.diagonal()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn equilibrium_samples_stay_in_the_box(seed in any::<u64>(), a in 0.25f64..2.0, interpolant in any::<bool>()) {
        let g = grid(2, 8, a);
        let how = if interpolant { EquilibriumSampling::Interpolant } else { EquilibriumSampling::Lattice };
        let s = EquilibriumSampler::new(&QuantumState::Pure(random_state(&g, seed)), how);
        let mut rng = stream(seed, 1);
        for _ in 0..50 {
            let q = s.sample(&mut rng);
            prop_assert_eq!(q.len(), 2);
            prop_assert!(q.iter().all(|x| (0.0..8.0 * a).contains(x)));
        }
    }

    #[test]
    fn partial_inner_undoes_a_product(seed in any::<u64>()) {
        let g = grid(2, 4, 1.0);
        let split = tensor_split(g, &[0]).unwrap();
        let psi = random_state(split.sys(), seed);
        let phi = random_state(split.env(), seed ^ 1);
        let joint = split.embed(&psi, &phi).unwrap();
        let v = nalgebra::DVector::from_column_slice(joint.amplitudes());
        let reduced = split.partial_inner(&(&v * v.adjoint()), &phi).unwrap();
        let p = nalgebra::DVector::from_column_slice(psi.amplitudes());
        prop_assert!(max_abs(&(reduced - &p * p.adjoint())) < 1e-12);
    }

    #[test]
    fn grw_records_are_seeded_ordered_and_logged_losslessly(seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let g = grid(2, 8, 1.0);
        let h = Hamiltonian::free(g.clone());
        let p = GrwParams::new(lambda, 1.0).unwrap();
        let psi = random_state(&g, seed);
        let run = || sample_grw_trajectory(&psi, &h, &p, 3.0, &[1.5, 3.0], seed, 7, &GrwOptions::default()).unwrap();
        let rec = run();
        prop_assert_eq!(&rec, &run());
        prop_assert!(rec.events.windows(2).all(|w| w[0].t <= w[1].t));
        prop_assert!(rec.events.iter().all(|e| (0.0..=3.0).contains(&e.t)));
        let log = EventLog::from_record(&rec, &g, true);
        prop_assert_eq!(parse_event_log(&log.to_json_lines()).unwrap(), log);
    }

    #[test]
    fn macro_cells_cover_every_configuration_once(cuts in prop::collection::btree_set(0usize..16, 1..6), n in 1usize..3) {
        let g = grid(n, 16, 1.0);
        let cuts: Vec<usize> = cuts.into_iter().collect();
        let regions: Vec<Region> = cuts
            .iter()
            .zip(cuts.iter().skip(1).chain(std::iter::once(&16)))
            .map(|(&lo, &hi)| Region::new(&g, vec![lo as f64], vec![(hi - 1) as f64]).unwrap())
            .collect();
        let labels: Vec<String> = (0..regions.len()).map(|j| format!("c{j}")).collect();
        let part = MacroPartition::from_regions(&g, labels, &regions).unwrap();
        let mut total = DMatrix::<C64>::zeros(g.dim(), g.dim());
        for j in 0..part.len() {
            total += part.projector(j).to_dense();
        }
        prop_assert!(max_abs(&(total - DMatrix::<C64>::identity(g.dim(), g.dim()))) < 1e-15);
    }
}
