use rayon::prelude::*;

/// Piecewise-linear interpolant of a CDF on a uniform grid; 0 left of the
/// grid and 1 right of it.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl TabulatedCdf {
    pub fn from_cdf<F: Fn(f64) -> f64 + Sync>(f: F, lo: f64, hi: f64, nodes: usize) -> Self {
        let nodes = nodes.max(2);
        let step = (hi - lo) / (nodes - 1) as f64;
        let mut values: Vec<f64> = (0..nodes)
            .into_par_iter()
            .map(|i| f(lo + step * i as f64))
            .collect();
        for i in 1..values.len() {
            if values[i] < values[i - 1] {
                values[i] = values[i - 1];
            }
        }
        TabulatedCdf { lo, step, values }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let t = (y - self.lo) / self.step;
        if !(t >= 0.0) {
            return 0.0;
        }
        let last = self.values.len() - 1;
        if t >= last as f64 {
            return 1.0;
        }
        let i = t as usize;
        let frac = t - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }
}
