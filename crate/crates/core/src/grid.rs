//! Uniform mesh on the unit interval, trapezoid quadrature and the
//! nucleoid available-volume profiles.
//!
//! The domain always has unit length, so spatial averages and integrals
//! coincide and the quadrature weights sum to one.

use std::ops::Index;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

/// Uniform 1-D mesh on `[0, 1]` with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    h: f64,
}

pub type GridRef = Arc<SpatialGrid>;

impl SpatialGrid {
    /// Builds a uniform grid with `n` nodes (including both endpoints).
    pub fn uniform(n: usize) -> Result<GridRef> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        let h = 1.0 / (n - 1) as f64;
        // i / (n - 1) keeps the last node exactly at 1.0
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Ok(Arc::new(Self { nodes, weights, h }))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Trapezoid approximation of the integral over `[0, 1]`, summed with
    /// Neumaier compensation.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        compensated_sum(self.weights.iter().zip(values).map(|(w, v)| w * v))
    }

    /// Weighted inner product `∫ u v dx`.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        compensated_sum(self.weights.iter().zip(u.iter().zip(v)).map(|(w, (a, b))| w * a * b))
    }

    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        self.dot(values, values).sqrt()
    }

    pub fn field_from_fn(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> ScalarField {
        let values = self.nodes.iter().map(|&x| f(x)).collect();
        ScalarField {
            grid: Arc::clone(self),
            values,
        }
    }

    pub fn constant_field(self: &Arc<Self>, value: f64) -> ScalarField {
        ScalarField {
            grid: Arc::clone(self),
            values: vec![value; self.len()],
        }
    }
}

/// Nodal values of a real function on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridRef,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &GridRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.len(), other.len());
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Integral of a field over the unit interval.
pub fn integrate(field: &ScalarField) -> f64 {
    field.integrate()
}

/// Available-volume profile `v(x) = exp(-r² ρ(x))` for a molecule of
/// gyration radius `r`, with nucleoid density `ρ(x) = 1 / (1 + e^{20|x - x*|})`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile {
    pub r: f64,
    pub x_star: f64,
    pub rho: ScalarField,
    pub v: ScalarField,
}

/// JSON metadata for a volume profile.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VolumeProfileRecord {
    pub r: f64,
    pub x_star: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl VolumeProfile {
    pub fn record(&self) -> VolumeProfileRecord {
        VolumeProfileRecord {
            r: self.r,
            x_star: self.x_star,
            x: self.v.grid().nodes().to_vec(),
            v: self.v.values().to_vec(),
        }
    }

    /// `min v² / max v`, the heterogeneity factor entering the θ = 1
    /// eigenvalue floor.
    pub fn nu(&self) -> f64 {
        let vmin = self.v.min();
        vmin * vmin / self.v.max()
    }
}

pub fn nucleoid_density(x: f64, x_star: f64) -> f64 {
    1.0 / (1.0 + (20.0 * (x - x_star).abs()).exp())
}

pub fn available_volume(r: f64, x_star: f64, grid: &GridRef) -> Result<VolumeProfile> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid_param("r", format!("radius must be finite and >= 0, got {r}")));
    }
    if !(x_star > 0.0 && x_star < 1.0) {
        return Err(invalid_param(
            "x_star",
            format!("nucleoid center must lie in (0, 1), got {x_star}"),
        ));
    }
    let rho = grid.field_from_fn(|x| nucleoid_density(x, x_star));
    let v = if r == 0.0 {
        grid.constant_field(1.0)
    } else {
        rho.map(|p| (-r * r * p).exp())
    };
    Ok(VolumeProfile { r, x_star, rho, v })
}

/// Rescales a positive profile to unit integral.
pub fn normalize_profile(v: &ScalarField) -> Result<ScalarField> {
    if let Some((i, &bad)) = v
        .values()
        .iter()
        .enumerate()
        .find(|(_, &x)| !(x > 0.0) || !x.is_finite())
    {
        return Err(Error::InvalidProfile(format!(
            "profile must be positive, value {bad} at node {i}"
        )));
    }
    let total = v.integrate();
    Ok(v.map(|x| x / total))
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_node_grid() {
        let g = SpatialGrid::uniform(3).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn five_hundred_nodes_spacing() {
        let g = SpatialGrid::uniform(500).unwrap();
        assert_eq!(g.spacing(), 1.0 / 499.0);
        assert_eq!(g.nodes()[499], 1.0);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(matches!(SpatialGrid::uniform(2), Err(Error::InvalidGrid(_))));
        assert!(SpatialGrid::uniform(0).is_err());
    }

    #[test]
    fn nodes_uniform() {
        let g = SpatialGrid::uniform(101).unwrap();
        for w in g.nodes().windows(2) {
            assert!((w[1] - w[0] - g.spacing()).abs() < 1e-15);
        }
    }

    #[test]
    fn integrate_constants_and_linear() {
        let g = SpatialGrid::uniform(17).unwrap();
        assert!((g.constant_field(1.0).integrate() - 1.0).abs() < 1e-15);
        assert!((g.field_from_fn(|x| x).integrate() - 0.5).abs() < 1e-15);
        assert!((g.field_from_fn(|x| 3.0 - 2.0 * x).integrate() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn integrate_sine_second_order() {
        for &omega in &[0.3, 1.0, 5.0] {
            let exact = (1.0 - f64::cos(omega)) / omega;
            let mut errs = Vec::new();
            for &n in &[51usize, 101, 201] {
                let g = SpatialGrid::uniform(n).unwrap();
                let got = g.field_from_fn(|x| (omega * x).sin()).integrate();
                errs.push((got - exact).abs());
            }
            // halving h should cut the error by about 4
            assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
            let h = 1.0 / 200.0;
            assert!(errs[2] < omega * omega * h * h);
        }
    }

    #[test]
    fn zero_radius_profile_is_all_ones() {
        let g = SpatialGrid::uniform(64).unwrap();
        let p = available_volume(0.0, 0.5, &g).unwrap();
        assert!(p.v.values().iter().all(|&v| v == 1.0));
        assert_eq!(p.nu(), 1.0);
    }

    #[test]
    fn profile_value_at_center() {
        let g = SpatialGrid::uniform(101).unwrap();
        let r = 0.8;
        let p = available_volume(r, 0.5, &g).unwrap();
        assert!((p.rho[50] - 0.5).abs() < 1e-15);
        assert!((p.v[50] - (-r * r / 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn profile_symmetric_with_minimum_at_center() {
        let g = SpatialGrid::uniform(2001).unwrap();
        let p = available_volume(1.0, 0.5, &g).unwrap();
        let v = p.v.values();
        let argmin = v
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin, 1000);
        for i in 0..v.len() {
            assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-14);
            assert!(v[i] > 0.0 && v[i] <= 1.0);
        }
    }

    #[test]
    fn negative_radius_rejected() {
        let g = SpatialGrid::uniform(10).unwrap();
        assert!(matches!(
            available_volume(-0.1, 0.5, &g),
            Err(Error::InvalidParameter { name: "r", .. })
        ));
        assert!(available_volume(0.5, 1.0, &g).is_err());
    }

    #[test]
    fn normalize_constant_half() {
        let g = SpatialGrid::uniform(9).unwrap();
        let vhat = normalize_profile(&g.constant_field(0.5)).unwrap();
        assert!(vhat.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn normalized_volume_peaks_at_boundaries() {
        let g = SpatialGrid::uniform(501).unwrap();
        let p = available_volume(1.0, 0.5, &g).unwrap();
        let vhat = normalize_profile(&p.v).unwrap();
        assert!((vhat.integrate() - 1.0).abs() < 1e-12);
        let max = vhat.max();
        assert_eq!(vhat[0], max);
        assert_eq!(vhat[500], max);
    }

    #[test]
    fn normalize_rejects_nonpositive() {
        let g = SpatialGrid::uniform(5).unwrap();
        let f = ScalarField::new(&g, vec![1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(normalize_profile(&f), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn field_length_checked() {
        let g = SpatialGrid::uniform(5).unwrap();
        assert!(ScalarField::new(&g, vec![1.0; 4]).is_err());
    }
}
