use alloc::vec::Vec;

use crate::chain::ChainSpec;

/// Exact expectation values after one QAOA step. Both back-ends produce the
/// same shape so they can be compared field by field.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    /// `<s^z_j s^z_{j+1}>` per bond, the last entry wrapping around.
    pub zz: Vec<f64>,
    /// `<s^x_j>` per site.
    pub x: Vec<f64>,
    pub hz: f64,
    pub hx: f64,
    /// `<H_z> + h <H_x>`.
    pub energy: f64,
}

impl MeasurementRecord {
    /// Assembles the totals from per-bond and per-site values.
    pub fn from_local(spec: &ChainSpec, zz: Vec<f64>, x: Vec<f64>) -> Self {
        let hz = -spec.couplings().iter().zip(&zz).map(|(j, c)| j * c).sum::<f64>();
        let hx = -x.iter().sum::<f64>();
        Self { zz, x, hz, hx, energy: hz + spec.h_target() * hx }
    }

    /// Largest absolute difference over every field; infinite if shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.zz.len() != other.zz.len() || self.x.len() != other.x.len() {
            return f64::INFINITY;
        }
        let local = self
            .zz
            .iter()
            .zip(&other.zz)
            .chain(self.x.iter().zip(&other.x))
            .map(|(a, b)| (a - b).abs());
        let totals = [
            (self.hz - other.hz).abs(),
            (self.hx - other.hx).abs(),
            (self.energy - other.energy).abs(),
        ];
        local.chain(totals).fold(0.0, f64::max)
    }
}
