use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::QuadratureRecord;
use crate::error::{Error, Result};

/// Phase and quadrature bin edges. The outermost quadrature bins are treated
/// as extending to ±∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub phase_edges: Vec<f64>,
    pub quad_edges: Vec<f64>,
}

impl BinEdges {
    /// Equal-width bins: phases over `[0, 2π)`, quadratures over `[−half_range, half_range]`.
    pub fn uniform(phase_bins: usize, quad_bins: usize, half_range: f64) -> Result<Self> {
        if phase_bins == 0 || quad_bins == 0 {
            return Err(Error::InvalidArgument("bin counts must be positive".into()));
        }
        if !(half_range > 0.0) || !half_range.is_finite() {
            return Err(Error::InvalidArgument(format!("quadrature range must be positive, got {half_range}")));
        }
        let edges = BinEdges {
            phase_edges: linspace(0.0, TAU, phase_bins + 1),
            quad_edges: linspace(-half_range, half_range, quad_bins + 1),
        };
        Ok(edges)
    }

    /// Equal-width bins spanning `±max|x|` over every record set given.
    pub fn covering<'a>(
        record_sets: impl IntoIterator<Item = &'a [QuadratureRecord]>,
        phase_bins: usize,
        quad_bins: usize,
    ) -> Result<Self> {
        let max = record_sets
            .into_iter()
            .flat_map(|s| s.iter())
            .map(|r| r.value.abs())
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        if max == 0.0 {
            return Err(Error::InvalidArgument("no finite records to set the quadrature range".into()));
        }
        Self::uniform(phase_bins, quad_bins, max)
    }

    pub fn phase_bins(&self) -> usize {
        self.phase_edges.len() - 1
    }

    pub fn quad_bins(&self) -> usize {
        self.quad_edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.phase_bins() * self.quad_bins()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("phase", &self.phase_edges), ("quadrature", &self.quad_edges)] {
            if e.len() < 2 {
                return Err(Error::InvalidArgument(format!("{name} edges need at least two entries")));
            }
            if e.iter().any(|v| !v.is_finite()) || e.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidArgument(format!("{name} edges must be finite and strictly increasing")));
            }
        }
        Ok(())
    }

    /// Phase bin of `theta` reduced to `[0, 2π)`; phases outside the edges clamp to the end bins.
    pub fn phase_bin(&self, theta: f64) -> usize {
        locate(&self.phase_edges, theta.rem_euclid(TAU))
    }

    /// Quadrature bin of `x`; values beyond the edges fall into the outer bins.
    pub fn quad_bin(&self, x: f64) -> usize {
        locate(&self.quad_edges, x)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| a + i as f64 * step).collect();
    v[n - 1] = b;
    v
}

fn locate(edges: &[f64], v: f64) -> usize {
    let bins = edges.len() - 1;
    // number of interior edges at or below v
    let k = edges[1..bins].partition_point(|&e| e <= v);
    k.min(bins - 1)
}

/// Counts indexed `[phase bin][quadrature bin]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedHistogram {
    pub phase_edges: Vec<f64>,
    pub quad_edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    /// Records with non-finite phase or value.
    pub rejected: u64,
}

impl BinnedHistogram {
    pub fn empty(edges: &BinEdges) -> Self {
        BinnedHistogram {
            phase_edges: edges.phase_edges.clone(),
            quad_edges: edges.quad_edges.clone(),
            counts: vec![vec![0; edges.quad_bins()]; edges.phase_bins()],
            rejected: 0,
        }
    }

    pub fn edges(&self) -> BinEdges {
        BinEdges {
            phase_edges: self.phase_edges.clone(),
            quad_edges: self.quad_edges.clone(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Counts flattened row-major (`phase_bin · quad_bins + quad_bin`) as floats.
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().flatten().map(|&c| c as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let edges = self.edges();
        edges.validate()?;
        if self.counts.len() != edges.phase_bins() || self.counts.iter().any(|r| r.len() != edges.quad_bins()) {
            return Err(Error::BinningMismatch(format!(
                "counts shape does not match {}x{} bins",
                edges.phase_bins(),
                edges.quad_bins()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let h: BinnedHistogram = serde_json::from_str(text)?;
        h.validate()?;
        Ok(h)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Bins records on given edges.
pub fn bin_records_with(records: &[QuadratureRecord], edges: &BinEdges) -> Result<BinnedHistogram> {
    edges.validate()?;
    let mut hist = BinnedHistogram::empty(edges);
    for r in records {
        if !r.phase.is_finite() || !r.value.is_finite() {
            hist.rejected += 1;
            continue;
        }
        hist.counts[edges.phase_bin(r.phase)][edges.quad_bin(r.value)] += 1;
    }
    Ok(hist)
}

/// Bins records with edges covering this record set alone.
pub fn bin_records(records: &[QuadratureRecord], phase_bins: usize, quad_bins: usize) -> Result<BinnedHistogram> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to bin".into()));
    }
    let edges = BinEdges::covering([records], phase_bins, quad_bins)?;
    bin_records_with(records, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(phase: f64, value: f64) -> QuadratureRecord {
        QuadratureRecord { pulse_id: 0, phase, value }
    }

    #[test]
    fn single_record_fills_one_cell() {
        let h = bin_records(&[rec(1.0, 0.3)], 40, 40).unwrap();
        let nonzero: Vec<_> = h.counts.iter().flatten().filter(|&&c| c > 0).collect();
        assert_eq!(nonzero, vec![&1]);
        assert_eq!(h.phase_edges.len(), 41);
        assert_eq!(h.quad_edges.len(), 41);
    }

    #[test]
    fn out_of_range_goes_to_outer_bins() {
        let edges = BinEdges::uniform(4, 4, 1.0).unwrap();
        let h = bin_records_with(&[rec(0.1, -5.0), rec(0.1, 5.0), rec(7.0, 0.0), rec(f64::NAN, 0.0)], &edges).unwrap();
        assert_eq!(h.counts[0][0], 1);
        assert_eq!(h.counts[0][3], 1);
        // 7.0 wraps to 0.72, still the first phase bin
        assert_eq!(h.counts[0][2], 1);
        assert_eq!(h.rejected, 1);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn json_round_trip() {
        let h = bin_records(&[rec(1.0, 0.3), rec(4.0, -0.2)], 5, 6).unwrap();
        let back = BinnedHistogram::from_json(&h.to_json().unwrap()).unwrap();
        assert_eq!(back, h);
        let json: serde_json::Value = serde_json::from_str(&h.to_json().unwrap()).unwrap();
        for key in ["phase_edges", "quad_edges", "counts", "rejected"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn malformed_histogram_is_rejected() {
        let mut h = bin_records(&[rec(1.0, 0.3)], 3, 3).unwrap();
        h.counts.pop();
        assert!(BinnedHistogram::from_json(&h.to_json().unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn counts_are_conserved(values in prop::collection::vec((0.0f64..std::f64::consts::TAU, -4.0f64..4.0), 1..300)) {
            let records: Vec<_> = values.iter().map(|&(p, v)| rec(p, v)).collect();
            let h = bin_records(&records, 40, 40).unwrap();
            prop_assert_eq!(h.total() + h.rejected, records.len() as u64);
        }
    }
}
