use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::povm::{flash_history_povm, history_probabilities};
use crate::error::{Error, Result};
use crate::evolution::{KrausBranch, QuantumState};
use crate::hilbert::{DensityMatrix, GridSpec, GrwParams, Hamiltonian, C64};

/// `rho' = C_z(rho) / tr C_z(rho)` with `C_z(rho) = sum_k K_k rho K_k^dagger`.
pub fn formalism_update(rho: &DensityMatrix, kraus: &[DMatrix<C64>]) -> Result<DensityMatrix> {
    let d = rho.dim();
    if kraus.iter().any(|k| k.nrows() != d || k.ncols() != d) {
        return Err(Error::bad("Kraus operator dimension does not match the state"));
    }
    let m = rho.matrix();
    let out = kraus.iter().fold(DMatrix::<C64>::zeros(d, d), |acc, k| acc + k * m * k.adjoint());
    let tr = out.trace().re;
    if !(tr > 1e-15) {
        return Err(Error::ZeroProbabilityOutcome);
    }
    DensityMatrix::from_matrix(rho.grid_arc(), out / C64::new(tr, 0.0))
}

/// The ideal operation `rho -> P rho P`.
pub fn ideal_operation(p: &DMatrix<C64>) -> Vec<DMatrix<C64>> {
    vec![p.clone()]
}

/// A potential depending on one particle's position only.
pub fn local_potential(grid: &GridSpec, particle: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let d = grid.dims();
    (0..grid.dim())
        .map(|q| {
            let x = grid.config_position(q);
            f(&x[particle * d..(particle + 1) * d])
        })
        .collect()
}

/// History of flashes of the listed particles only; `None` where none of
/// them flashed in that step.
pub type SystemHistory = Vec<Option<(usize, usize)>>;

/// Exact marginal law of the system flash histories.
pub fn system_flash_marginal(
    state: &QuantumState,
    h: &Hamiltonian,
    params: &GrwParams,
    sys_labels: &[usize],
    n_steps: usize,
    dt: f64,
) -> Result<BTreeMap<SystemHistory, f64>> {
    if state.grid() != h.grid() {
        return Err(Error::bad("state and Hamiltonian live on different grids"));
    }
    let effects = flash_history_povm(h, params, n_steps, dt)?;
    let probs = history_probabilities(&effects, state)?;
    let mut out = BTreeMap::new();
    for (e, p) in effects.iter().zip(probs) {
        let key = e
            .history
            .iter()
            .map(|b| match *b {
                KrausBranch::Collapse { i, site } if sys_labels.contains(&i) => Some((i, site)),
                _ => None,
            })
            .collect();
        *out.entry(key).or_insert(0.0) += p;
    }
    Ok(out)
}

fn tv(p: &BTreeMap<SystemHistory, f64>, q: &BTreeMap<SystemHistory, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&SystemHistory> = p.keys().chain(q.keys()).collect();
    0.5 * keys.into_iter().map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Largest total-variation gap between the system flash marginals produced
/// by the joint Hamiltonians in `variants`.
pub fn no_signaling_check(
    state: &QuantumState,
    variants: &[Hamiltonian],
    params: &GrwParams,
    sys_labels: &[usize],
    n_steps: usize,
    dt: f64,
) -> Result<f64> {
    if variants.is_empty() {
        return Err(Error::bad("need at least one Hamiltonian"));
    }
    let marginals = variants
        .iter()
        .map(|h| system_flash_marginal(state, h, params, sys_labels, n_steps, dt))
        .collect::<Result<Vec<_>>>()?;
    let mut gap: f64 = 0.0;
    for (a, pa) in marginals.iter().enumerate() {
        for pb in &marginals[a + 1..] {
            gap = gap.max(tv(pa, pb));
        }
    }
    Ok(gap)
}

/// Bell-like `(|00> + |11>)/sqrt 2` on two particles with two sites each.
pub fn bell_pair() -> Result<(Arc<GridSpec>, QuantumState)> {
    let grid = Arc::new(GridSpec::build(2, 1, 2, 1.0, vec![1.0, 1.0])?);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amps = (0..4).map(|q| if grid.site_of(q, 0) == grid.site_of(q, 1) { C64::new(s, 0.0) } else { C64::new(0.0, 0.0) }).collect();
    let psi = crate::hilbert::StateVector::from_amplitudes(grid.clone(), amps)?;
    Ok((grid, QuantumState::Pure(psi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::StateVector;
    use crate::rng::stream;

    #[test]
    fn identity_operation_leaves_the_state() {
        let g = Arc::new(GridSpec::ring(3).unwrap());
        let psi = StateVector::random(g.clone(), &mut stream(1, 0));
        let rho = DensityMatrix::pure(&psi);
        let out = formalism_update(&rho, &[DMatrix::identity(3, 3)]).unwrap();
        assert!((out.matrix() - rho.matrix()).camax() < 1e-15);
    }

    #[test]
    fn ideal_projection_normalizes() {
        let g = Arc::new(GridSpec::ring(2).unwrap());
        let psi = StateVector::from_real(g, &[0.3f64.sqrt(), 0.7f64.sqrt()]).unwrap();
        let p = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        let rho = DensityMatrix::pure(&psi);
        let out = formalism_update(&rho, &ideal_operation(&p)).unwrap();
        let v = &p * nalgebra::DVector::from_column_slice(psi.amplitudes());
        let expected = &v * v.adjoint() / C64::new(0.3, 0.0);
        assert!((out.matrix() - expected).camax() < 1e-14);
        let q = DMatrix::<C64>::identity(2, 2) - &p;
        let total: f64 = [&p, &q].iter().map(|k| (*k * rho.matrix() * k.adjoint()).trace().re).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let e1 = StateVector::position_eigenstate(rho.grid_arc(), 1).unwrap();
        assert!(matches!(formalism_update(&DensityMatrix::pure(&e1), &[p]), Err(Error::ZeroProbabilityOutcome)));
    }

    fn strong_field(grid: &Arc<GridSpec>, interaction: f64) -> Hamiltonian {
        let mut v = local_potential(grid, 1, |x| 6.0 * x[0]);
        for (q, vq) in v.iter_mut().enumerate() {
            *vq += interaction * (grid.site_of(q, 0) * grid.site_of(q, 1)) as f64;
        }
        Hamiltonian::from_values(grid.clone(), v, true).unwrap()
    }

    #[test]
    fn local_fields_on_the_far_side_do_not_signal() {
        let (grid, psi) = bell_pair().unwrap();
        let p = GrwParams::new(0.5, 0.5).unwrap();
        let free = Hamiltonian::free(grid.clone());
        assert_eq!(no_signaling_check(&psi, &[free.clone(), free.clone()], &p, &[0], 3, 0.2).unwrap(), 0.0);
        let gap = no_signaling_check(&psi, &[free.clone(), strong_field(&grid, 0.0)], &p, &[0], 3, 0.2).unwrap();
        assert!(gap <= 1e-10, "{gap}");
        let leak = no_signaling_check(&psi, &[free, strong_field(&grid, 8.0)], &p, &[0], 3, 0.2).unwrap();
        assert!(leak > 0.01, "{leak}");
    }
}
