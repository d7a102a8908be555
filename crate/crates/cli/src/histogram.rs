//! Fixed-width histograms of ledger columns.

use std::io::Write;

use crate::config::HistogramSpec;

pub const EDGE_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub low: f64,
    pub width: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(spec: &HistogramSpec) -> Self {
        let bins = ((spec.high - spec.low) / spec.bin_width).round().max(1.0) as usize;
        Self {
            low: spec.low,
            width: spec.bin_width,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn high(&self) -> f64 {
        self.low + self.width * self.counts.len() as f64
    }

    /// Bins are half-open `[lo, hi)`. Values within `EDGE_SNAP` bin widths
    /// of an edge count as on it, so sums of exact entropy quanta carrying
    /// rounding noise do not straddle bins.
    pub fn add(&mut self, x: f64) {
        let mut f = (x - self.low) / self.width;
        if (f - f.round()).abs() < EDGE_SNAP {
            f = f.round();
        }
        if f < 0.0 {
            self.underflow += 1;
            return;
        }
        let i = f.floor() as usize;
        match self.counts.get_mut(i) {
            Some(c) => *c += 1,
            None => self.overflow += 1,
        }
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let lo = self.low + self.width * i as f64;
        (lo, lo + self.width)
    }
}

pub const HISTOGRAM_HEADER: [&str; 5] = ["bin_lo", "bin_hi", "ds_env", "dsigma_y", "dsigma"];

/// Side-by-side histograms sharing one binning.
pub fn write_histograms<W: Write>(w: W, env: &Histogram, hidden: &Histogram, total: &Histogram) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HISTOGRAM_HEADER)?;
    for i in 0..env.counts.len() {
        let (lo, hi) = env.edges(i);
        out.write_record([
            lo.to_string(),
            hi.to_string(),
            env.counts[i].to_string(),
            hidden.counts[i].to_string(),
            total.counts[i].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
