use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hilbert::operator::density_weights;
use crate::hilbert::{DensityMatrix, DensityWeight, GridSpec, StateVector};

/// Density field `m(x)` on the single-particle grid (`L^d` sites).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatterField {
    pub t: f64,
    pub values: Vec<f64>,
    /// `sum_x m(x) a^d`.
    pub total_mass: f64,
}

impl MatterField {
    fn from_marginals(grid: &GridSpec, t: f64, weights: &[f64], marginal: impl Fn(usize) -> Vec<f64>) -> Self {
        let inv_cell = 1.0 / grid.cell_volume();
        let mut values = vec![0.0; grid.sites()];
        for (i, w) in weights.iter().enumerate() {
            for (v, p) in values.iter_mut().zip(marginal(i)) {
                *v += w * p * inv_cell;
            }
        }
        let total_mass = values.iter().sum::<f64>() * grid.cell_volume();
        MatterField { t, values, total_mass }
    }

    pub fn value_at(&self, site: usize) -> f64 {
        self.values[site]
    }

    /// `sum_{x in sites} m(x) a^d`.
    pub fn integrate(&self, grid: &GridSpec, sites: impl IntoIterator<Item = usize>) -> f64 {
        sites.into_iter().map(|s| self.values[s]).sum::<f64>() * grid.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `t,site,x_0[,x_1,x_2],value` rows with a header line.
    pub fn to_csv(&self, grid: &GridSpec) -> String {
        let mut out = String::from("t,site");
        for k in 0..grid.dims() {
            out.push_str(&format!(",x{k}"));
        }
        out.push_str(",value\n");
        for (s, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}", self.t, s));
            for x in grid.site_position(s) {
                out.push_str(&format!(",{x}"));
            }
            out.push_str(&format!(",{v}\n"));
        }
        out
    }
}

/// `m(x) = sum_i w_i P(q_i = x) / a^d` for a pure state.
pub fn matter_density(psi: &StateVector, t: f64, weight: DensityWeight) -> Result<MatterField> {
    let w = density_weights(psi.grid(), weight)?;
    Ok(MatterField::from_marginals(psi.grid(), t, &w, |i| psi.site_marginal(i)))
}

/// `m(x) = tr(rho M(x))`.
pub fn matter_density_from_dm(rho: &DensityMatrix, t: f64, weight: DensityWeight) -> Result<MatterField> {
    let w = density_weights(rho.grid(), weight)?;
    Ok(MatterField::from_marginals(rho.grid(), t, &w, |i| rho.site_marginal(i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{mass_density_operator, operator::density_operator, C64};
    use crate::rng::stream;
    use std::sync::Arc;

    fn pair_grid() -> Arc<GridSpec> {
        Arc::new(GridSpec::build(2, 1, 4, 0.5, vec![1.0, 3.0]).unwrap().with_charges(vec![1.0, -1.0]).unwrap())
    }

    #[test]
    fn single_particle_density_is_the_probability() {
        let g = Arc::new(GridSpec::build(1, 1, 8, 0.5, vec![1.0]).unwrap());
        let psi = StateVector::random(g.clone(), &mut stream(1, 0));
        let m = matter_density(&psi, 0.0, DensityWeight::Mass).unwrap();
        for (v, p) in m.values.iter().zip(psi.probabilities()) {
            assert!((v * 0.5 - p).abs() < 1e-14);
        }
        assert!((m.total_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_particle_density_matches_brute_force() {
        let g = pair_grid();
        let psi = StateVector::random(g.clone(), &mut stream(2, 0));
        let m = matter_density(&psi, 0.0, DensityWeight::Mass).unwrap();
        let a = 0.5;
        for x in 0..4 {
            let mut brute = 0.0;
            for q1 in 0..4 {
                for q2 in 0..4 {
                    let p = psi.amplitudes()[q1 * 4 + q2].norm_sqr() / (a * a);
                    if q1 == x {
                        brute += 1.0 * p * a;
                    }
                    if q2 == x {
                        brute += 3.0 * p * a;
                    }
                }
            }
            assert!((m.values[x] - brute).abs() < 1e-12);
            let op = mass_density_operator(&g, x).unwrap();
            assert!((op.expectation(&psi).re - m.values[x]).abs() < 1e-12);
        }
        assert!((m.total_mass - 4.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_charges_cancel_on_symmetric_states() {
        let g = pair_grid();
        let psi = StateVector::from_fn(g.clone(), |ix| {
            let (a, b) = (ix[0] as f64, ix[1] as f64);
            C64::new((a + b).cos() + 0.3, (a * b).sin())
        })
        .unwrap();
        let m = matter_density(&psi, 0.0, DensityWeight::Charge).unwrap();
        assert!(m.values.iter().all(|v| v.abs() < 1e-12));
        let asym = StateVector::random(g.clone(), &mut stream(3, 0));
        let c = matter_density(&asym, 0.0, DensityWeight::Charge).unwrap();
        assert!(c.min_value() < 0.0);
        for x in 0..4 {
            let op = density_operator(&g, x, DensityWeight::Charge).unwrap();
            assert!((op.expectation(&asym).re - c.values[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn density_matrix_field_is_linear() {
        let g = pair_grid();
        let a = StateVector::random(g.clone(), &mut stream(4, 0));
        let b = StateVector::random(g.clone(), &mut stream(4, 1));
        let rho = DensityMatrix::mixture(&[(0.5, &a), (0.5, &b)]).unwrap();
        let mix = matter_density_from_dm(&rho, 0.0, DensityWeight::Mass).unwrap();
        let ma = matter_density(&a, 0.0, DensityWeight::Mass).unwrap();
        let mb = matter_density(&b, 0.0, DensityWeight::Mass).unwrap();
        let pure = matter_density_from_dm(&DensityMatrix::pure(&a), 0.0, DensityWeight::Mass).unwrap();
        for x in 0..4 {
            assert!((mix.values[x] - 0.5 * (ma.values[x] + mb.values[x])).abs() < 1e-12);
            assert!((pure.values[x] - ma.values[x]).abs() < 1e-12);
            let op = mass_density_operator(&g, x).unwrap().to_dense();
            let tr = (rho.matrix() * op).trace().re;
            assert!((tr - mix.values[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_mass_relabeling_leaves_the_field_unchanged() {
        let g = Arc::new(GridSpec::build(2, 1, 4, 1.0, vec![1.0, 1.0]).unwrap());
        let psi = StateVector::random(g.clone(), &mut stream(5, 0));
        let swapped = StateVector::from_fn(g.clone(), |ix| psi.amplitudes()[ix[1] * 4 + ix[0]]).unwrap();
        let m1 = matter_density(&psi, 0.0, DensityWeight::Mass).unwrap();
        let m2 = matter_density(&swapped, 0.0, DensityWeight::Mass).unwrap();
        for (a, b) in m1.values.iter().zip(&m2.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(m1.to_csv(&g).starts_with("t,site,x0,value\n0,0,0,"));
    }
}
