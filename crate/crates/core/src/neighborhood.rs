//! Auxiliary distances, exact nearest-neighbor lists, and the working
//! dispersion estimate.
//!
//! Spatial (or otherwise auxiliary) structure enters the statistic through
//! one object: for every spot, the list of its `r_n = n^beta` nearest
//! spots. Local means over those lists measure how far the locally averaged
//! signal strays from the global mean, which corrects the pooled dispersion
//! downward for features whose means vary in space.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qlik::VarianceModel;

/// Spot geometry: coordinates in 2 or 3 dimensions, or a precomputed
/// pairwise distance matrix for non-spatial auxiliary information.
#[derive(Clone, Debug)]
pub enum AuxiliarySpace {
    /// `n x d` coordinates, `d` in {2, 3}; distance is Euclidean.
    Coordinates(Array2<f64>),
    /// `n x n` symmetric distance matrix with zero diagonal.
    Explicit(Array2<f64>),
}

impl AuxiliarySpace {
    pub fn n_spots(&self) -> usize {
        match self {
            AuxiliarySpace::Coordinates(c) => c.nrows(),
            AuxiliarySpace::Explicit(d) => d.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AuxiliarySpace::Coordinates(c) => {
                let d = c.ncols();
                if d != 2 && d != 3 {
                    return Err(Error::Config(format!(
                        "coordinates must have 2 or 3 columns, got {d}"
                    )));
                }
                if c.nrows() < 2 {
                    return Err(Error::Config("need at least 2 spots".into()));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data("coordinates contain non-finite values".into()));
                }
            }
            AuxiliarySpace::Explicit(m) => {
                let n = m.nrows();
                if n != m.ncols() {
                    return Err(Error::Config(format!(
                        "distance matrix must be square, got {n} x {}",
                        m.ncols()
                    )));
                }
                if n < 2 {
                    return Err(Error::Config("need at least 2 spots".into()));
                }
                for i in 0..n {
                    if m[(i, i)] != 0.0 {
                        return Err(Error::Data(format!("distance matrix diagonal nonzero at {i}")));
                    }
                    for j in 0..i {
                        let v = m[(i, j)];
                        if !v.is_finite() || v < 0.0 {
                            return Err(Error::Data(format!(
                                "invalid distance {v} at ({i}, {j})"
                            )));
                        }
                        if v != m[(j, i)] {
                            return Err(Error::Data(format!(
                                "distance matrix asymmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Fill `buf[j]` with a distance key from spot `i` to every spot `j`.
    /// For coordinates this is the squared Euclidean distance, which orders
    /// identically to the distance itself.
    fn distance_keys(&self, i: usize, buf: &mut [f64]) {
        match self {
            AuxiliarySpace::Coordinates(c) => {
                let row = c.row(i);
                for (j, slot) in buf.iter_mut().enumerate() {
                    let other = c.row(j);
                    let mut acc = 0.0;
                    for (a, b) in row.iter().zip(other.iter()) {
                        let diff = a - b;
                        acc += diff * diff;
                    }
                    *slot = acc;
                }
            }
            AuxiliarySpace::Explicit(m) => {
                for (j, slot) in buf.iter_mut().enumerate() {
                    *slot = m[(i, j)];
                }
            }
        }
    }
}

/// For every spot, the indices of its `r_n` nearest spots (self included,
/// always first), ordered by distance with ties broken by ascending index.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    r_n: usize,
    n: usize,
    lists: Vec<u32>,
}

impl NeighborIndex {
    pub fn r_n(&self) -> usize {
        self.r_n
    }

    pub fn n_spots(&self) -> usize {
        self.n
    }

    /// Neighbor list of spot `i`.
    pub fn list(&self, i: usize) -> &[u32] {
        &self.lists[i * self.r_n..(i + 1) * self.r_n]
    }
}

/// Build exact neighbor lists with `r_n = min(floor(n^beta), n - 1)`.
///
/// The list for spot `i` holds `i` itself followed by its `r_n - 1`
/// nearest other spots; equal distances are resolved by ascending index.
pub fn build_neighbors(space: &AuxiliarySpace, beta: f64) -> Result<NeighborIndex> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
    }
    space.validate()?;
    let n = space.n_spots();
    let r_n = ((n as f64).powf(beta).floor() as usize).min(n - 1).max(1);

    let mut lists = vec![0u32; n * r_n];
    lists
        .par_chunks_mut(r_n)
        .enumerate()
        .for_each(|(i, out)| {
            let mut keys = vec![0.0f64; n];
            space.distance_keys(i, &mut keys);
            let mut others: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (keys[j], j as u32))
                .collect();
            let take = r_n - 1;
            if take > 0 && take < others.len() {
                others.select_nth_unstable_by(take - 1, |a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                });
            }
            others[..take].sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            out[0] = i as u32;
            for (slot, &(_, j)) in out[1..].iter_mut().zip(&others[..take]) {
                *slot = j;
            }
        });

    Ok(NeighborIndex { r_n, n, lists })
}

/// Arithmetic mean of `x` over each spot's neighbor list.
pub fn local_means(x: &[f64], nbr: &NeighborIndex) -> Result<Vec<f64>> {
    if x.len() != nbr.n_spots() {
        return Err(Error::Config(format!(
            "expression vector length {} does not match spot count {}",
            x.len(),
            nbr.n_spots()
        )));
    }
    let inv = 1.0 / nbr.r_n() as f64;
    let means = (0..nbr.n_spots())
        .map(|i| nbr.list(i).iter().map(|&j| x[j as usize]).sum::<f64>() * inv)
        .collect();
    Ok(means)
}

/// Working dispersion for one feature.
#[derive(Clone, Copy, Debug)]
pub struct DispersionEstimate {
    /// `max(phi0_hat - local_signal, m_phi)`.
    pub phi_hat: f64,
    /// Pooled dispersion `(tau0_hat - V1(xbar)) / V2(xbar)`; may be negative.
    pub phi0_hat: f64,
    /// `sqrt(r_n)`-scaled mean squared deviation of local means from the
    /// global mean, divided by `V2(xbar)`.
    pub local_signal: f64,
    /// Floor that keeps the estimate positive.
    pub m_phi: f64,
}

/// Estimate the working dispersion of one feature from its neighbor-local
/// means. `tau0_hat` is the sample variance with divisor `n`.
pub fn working_dispersion(
    x: &[f64],
    nbr: &NeighborIndex,
    model: &VarianceModel,
    m_phi: f64,
    mu_floor: f64,
) -> Result<DispersionEstimate> {
    if m_phi.is_nan() || m_phi <= 0.0 {
        return Err(Error::Config(format!("m_phi must be positive, got {m_phi}")));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::Dispersion(
            "all-zero feature must be pre-filtered".into(),
        ));
    }
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let xbar_c = xbar.max(mu_floor);
    let tau0 = x.iter().map(|&v| (v - xbar) * (v - xbar)).sum::<f64>() / n;
    let v2 = model.v2(xbar_c);
    if v2.is_nan() || v2 <= 0.0 {
        return Err(Error::Domain(format!("V2({xbar_c}) = {v2} must be positive")));
    }
    let phi0_hat = (tau0 - model.v1(xbar_c)) / v2;

    let mu_local = local_means(x, nbr)?;
    let msd = mu_local
        .iter()
        .map(|&m| (xbar - m) * (xbar - m))
        .sum::<f64>()
        / n;
    let local_signal = (nbr.r_n() as f64).sqrt() * msd / v2;

    Ok(DispersionEstimate {
        phi_hat: (phi0_hat - local_signal).max(m_phi),
        phi0_hat,
        local_signal,
        m_phi,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;

    fn grid_space(side: usize) -> AuxiliarySpace {
        let mut coords = Array2::zeros((side * side, 2));
        for x in 0..side {
            for y in 0..side {
                coords[(x * side + y, 0)] = x as f64;
                coords[(x * side + y, 1)] = y as f64;
            }
        }
        AuxiliarySpace::Coordinates(coords)
    }

    #[test]
    fn neighborhood_size_from_beta() {
        let space = grid_space(30);
        let nbr = build_neighbors(&space, 0.9).unwrap();
        // floor(900^0.9) = floor(455.846...) = 455
        assert_eq!(nbr.r_n(), 455);
        for i in 0..nbr.n_spots() {
            let list = nbr.list(i);
            assert_eq!(list.len(), 455);
            assert_eq!(list[0], i as u32);
            let mut seen = std::collections::HashSet::new();
            assert!(list.iter().all(|&j| seen.insert(j)));
        }
    }

    #[test]
    fn collinear_tie_break() {
        let coords = arr2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let space = AuxiliarySpace::Coordinates(coords);
        // n = 3, beta such that r_n = 2
        let nbr = build_neighbors(&space, 0.7).unwrap();
        assert_eq!(nbr.r_n(), 2);
        // middle point: itself, then the left point by index tie-break
        assert_eq!(nbr.list(1), &[1, 0]);
    }

    #[test]
    fn matches_brute_force_on_random_cloud() {
        let mut rng = crate::rng::stream(11, 99, 0);
        let n = 50;
        let mut coords = Array2::zeros((n, 3));
        for i in 0..n {
            for d in 0..3 {
                coords[(i, d)] = rng.random::<f64>() * 10.0;
            }
        }
        let space = AuxiliarySpace::Coordinates(coords.clone());
        let nbr = build_neighbors(&space, 0.8).unwrap();

        for i in 0..n {
            let mut all: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = (0..3)
                        .map(|d| (coords[(i, d)] - coords[(j, d)]).powi(2))
                        .sum();
                    (d2, j as u32)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut expected = vec![i as u32];
            expected.extend(all[..nbr.r_n() - 1].iter().map(|&(_, j)| j));
            assert_eq!(nbr.list(i), expected.as_slice(), "spot {i}");
        }
    }

    #[test]
    fn explicit_matrix_agrees_with_coordinates() {
        let coords: Array2<f64> = arr2(&[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0], [3.0, 4.0]]);
        let n = coords.nrows();
        let mut dist = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let dx = coords[(i, 0)] - coords[(j, 0)];
                let dy = coords[(i, 1)] - coords[(j, 1)];
                dist[(i, j)] = (dx * dx + dy * dy).sqrt();
            }
        }
        let a = build_neighbors(&AuxiliarySpace::Coordinates(coords), 0.6).unwrap();
        let b = build_neighbors(&AuxiliarySpace::Explicit(dist), 0.6).unwrap();
        for i in 0..n {
            assert_eq!(a.list(i), b.list(i));
        }
    }

    #[test]
    fn rejects_tiny_or_invalid_spaces() {
        let one = AuxiliarySpace::Coordinates(arr2(&[[0.0, 0.0]]));
        assert!(build_neighbors(&one, 0.9).is_err());
        let asym = AuxiliarySpace::Explicit(arr2(&[[0.0, 1.0], [2.0, 0.0]]));
        assert!(build_neighbors(&asym, 0.9).is_err());
        let nan = AuxiliarySpace::Coordinates(arr2(&[[0.0, f64::NAN], [1.0, 0.0]]));
        assert!(build_neighbors(&nan, 0.9).is_err());
    }

    #[test]
    fn local_means_constant_and_blocks() {
        let coords = arr2(&[[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]]);
        let space = AuxiliarySpace::Coordinates(coords);
        let nbr = build_neighbors(&space, 0.5).unwrap();
        assert_eq!(nbr.r_n(), 2);

        let c = local_means(&[7.0; 4], &nbr).unwrap();
        assert!(c.iter().all(|&v| v == 7.0));

        let m = local_means(&[0.0, 0.0, 10.0, 10.0], &nbr).unwrap();
        assert_eq!(m, vec![0.0, 0.0, 10.0, 10.0]);

        assert!(local_means(&[1.0; 3], &nbr).is_err());
    }

    #[test]
    fn local_means_matches_recompute() {
        let mut rng = crate::rng::stream(3, 99, 1);
        let n = 30;
        let mut coords = Array2::zeros((n, 2));
        for i in 0..n {
            coords[(i, 0)] = rng.random::<f64>();
            coords[(i, 1)] = rng.random::<f64>();
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0).collect();
        let nbr = build_neighbors(&AuxiliarySpace::Coordinates(coords), 0.6).unwrap();
        let means = local_means(&x, &nbr).unwrap();
        for i in 0..n {
            let direct: f64 =
                nbr.list(i).iter().map(|&j| x[j as usize]).sum::<f64>() / nbr.r_n() as f64;
            assert!((means[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn dispersion_floor_on_constant_feature() {
        let space = grid_space(4);
        let nbr = build_neighbors(&space, 0.5).unwrap();
        let x = vec![3.0; 16];
        let est =
            working_dispersion(&x, &nbr, &VarianceModel::QuasiNegBinomial, 0.01, 1e-8).unwrap();
        // tau0 = 0 so phi0 = -1/xbar < 0; the floor takes over
        assert!((est.phi0_hat + 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(est.phi_hat, 0.01);
        assert_eq!(est.local_signal, 0.0);
    }

    #[test]
    fn dispersion_two_block_hand_check() {
        // two well-separated blocks of 8; neighborhoods stay within blocks
        let mut coords = Array2::zeros((16, 2));
        for i in 0..16 {
            coords[(i, 0)] = (i % 8) as f64 + if i < 8 { 0.0 } else { 1000.0 };
            coords[(i, 1)] = 0.0;
        }
        let nbr = build_neighbors(&AuxiliarySpace::Coordinates(coords), 0.5).unwrap();
        assert_eq!(nbr.r_n(), 4);
        let x: Vec<f64> = (0..16).map(|i| if i < 8 { 0.0 } else { 10.0 }).collect();
        let est =
            working_dispersion(&x, &nbr, &VarianceModel::QuasiNegBinomial, 0.01, 1e-8).unwrap();
        // xbar = 5, tau0 = 25, phi0 = (25 - 5)/25 = 0.8,
        // local means are 0 or 10 so signal = 2 * 25/25 = 2, floored
        assert!((est.phi0_hat - 0.8).abs() < 1e-12);
        assert!((est.local_signal - 2.0).abs() < 1e-12);
        assert_eq!(est.phi_hat, 0.01);
    }

    #[test]
    fn dispersion_no_local_signal_keeps_pooled() {
        // alternating values on a line: neighbor pairs average to xbar
        let coords = arr2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
        let nbr = build_neighbors(&AuxiliarySpace::Coordinates(coords), 0.5).unwrap();
        assert_eq!(nbr.r_n(), 2);
        let x = vec![2.0, 6.0, 2.0, 6.0];
        let est = working_dispersion(&x, &nbr, &VarianceModel::QuasiPoisson, 0.01, 1e-8).unwrap();
        assert_eq!(est.local_signal, 0.0);
        // tau0 = 4, xbar = 4, quasi-Poisson phi0 = 1
        assert!((est.phi_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_feature_rejected() {
        let space = grid_space(3);
        let nbr = build_neighbors(&space, 0.5).unwrap();
        let err = working_dispersion(&[0.0; 9], &nbr, &VarianceModel::QuasiPoisson, 0.01, 1e-8)
            .unwrap_err();
        assert!(matches!(err, Error::Dispersion(_)));
    }

    #[test]
    fn rigid_motion_leaves_lists_and_phi_unchanged() {
        let mut rng = crate::rng::stream(5, 99, 2);
        let n = 120;
        let mut coords = Array2::zeros((n, 2));
        for i in 0..n {
            coords[(i, 0)] = rng.random::<f64>() * 20.0;
            coords[(i, 1)] = rng.random::<f64>() * 20.0;
        }
        let x: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 8.0).round()).collect();

        let base = build_neighbors(&AuxiliarySpace::Coordinates(coords.clone()), 0.8).unwrap();
        let phi_base =
            working_dispersion(&x, &base, &VarianceModel::QuasiNegBinomial, 0.01, 1e-8)
                .unwrap()
                .phi_hat;

        for (angle, tx, ty) in [(0.7f64, 3.0, -2.0), (2.1, -11.0, 0.5), (4.9, 100.0, 42.0)] {
            let (s, c) = angle.sin_cos();
            let mut moved = Array2::zeros((n, 2));
            for i in 0..n {
                let (u, v) = (coords[(i, 0)], coords[(i, 1)]);
                moved[(i, 0)] = c * u - s * v + tx;
                moved[(i, 1)] = s * u + c * v + ty;
            }
            let rotated = build_neighbors(&AuxiliarySpace::Coordinates(moved), 0.8).unwrap();
            for i in 0..n {
                assert_eq!(base.list(i), rotated.list(i), "lists changed under rotation");
            }
            let phi =
                working_dispersion(&x, &rotated, &VarianceModel::QuasiNegBinomial, 0.01, 1e-8)
                    .unwrap()
                    .phi_hat;
            assert!((phi - phi_base).abs() <= 1e-10);
        }
    }

    #[test]
    fn uniform_scaling_leaves_lists_unchanged() {
        let mut rng = crate::rng::stream(6, 99, 3);
        let n = 80;
        let mut coords = Array2::zeros((n, 2));
        for i in 0..n {
            coords[(i, 0)] = rng.random::<f64>();
            coords[(i, 1)] = rng.random::<f64>();
        }
        let base = build_neighbors(&AuxiliarySpace::Coordinates(coords.clone()), 0.7).unwrap();
        let scaled_coords = coords.mapv(|v| v * 37.5);
        let scaled = build_neighbors(&AuxiliarySpace::Coordinates(scaled_coords), 0.7).unwrap();
        for i in 0..n {
            assert_eq!(base.list(i), scaled.list(i));
        }
    }

    #[test]
    fn shuffled_homogeneous_feature_concentrates_at_pooled() {
        // Poisson-like data on a 30x30 grid: the local-signal correction
        // should stay small, keeping phi_hat near phi0_hat.
        let space = grid_space(30);
        let nbr = build_neighbors(&space, 0.9).unwrap();
        let mut rng = crate::rng::stream(8, 99, 4);
        let lambda = 5.0f64;
        let mut x: Vec<f64> = (0..900)
            .map(|_| {
                // inverse-CDF Poisson draw, adequate for the test
                let u: f64 = rng.random();
                let mut k = 0u32;
                let mut p = (-lambda).exp();
                let mut cdf = p;
                while u > cdf && k < 200 {
                    k += 1;
                    p *= lambda / k as f64;
                    cdf += p;
                }
                k as f64
            })
            .collect();

        let phi0 = working_dispersion(&x, &nbr, &VarianceModel::QuasiPoisson, 0.01, 1e-8)
            .unwrap()
            .phi0_hat;
        let mut ratios = Vec::new();
        for _ in 0..100 {
            // Fisher-Yates shuffle from the same stream
            for i in (1..x.len()).rev() {
                let j = rng.random_range(0..=i);
                x.swap(i, j);
            }
            let est =
                working_dispersion(&x, &nbr, &VarianceModel::QuasiPoisson, 0.01, 1e-8).unwrap();
            ratios.push(est.phi_hat / phi0);
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[50];
        assert!(
            (median - 1.0).abs() < 0.2,
            "median phi_hat/phi0_hat = {median}, expected within 20% of 1"
        );
    }
}
