use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistoryError {
    #[error("history underflow: query at t={t} precedes the earliest stored sample {earliest}")]
    Underflow { t: f64, earliest: f64 },
    #[error("history overflow: query at t={t} is after the latest stored sample {latest}")]
    Overflow { t: f64, latest: f64 },
    #[error("history buffer is empty")]
    Empty,
    #[error("non-increasing time stamp {t} after {last}")]
    NonMonotone { t: f64, last: f64 },
    #[error("state of length {got} pushed into a buffer of dimension {dim}")]
    Dimension { dim: usize, got: usize },
}

/// Sliding window of `(t, x)` samples with linear interpolation.
///
/// Samples older than `now - retain` are dropped lazily, keeping at least one
/// sample at or before the window start so queries at the edge stay exact.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dim: usize,
    retain: f64,
    start: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

/// Relative slack when comparing a query time against the window edges.
const EDGE_EPS: f64 = 1e-12;

impl HistoryBuffer {
    pub fn new(dim: usize, retain: f64) -> Self {
        HistoryBuffer {
            dim,
            retain: retain.max(0.0),
            start: 0,
            times: Vec::new(),
            states: Vec::new(),
        }
    }

    /// Builds an unbounded buffer from trajectory arrays (`states` row-major).
    pub fn from_samples(dim: usize, times: &[f64], states: &[f64]) -> Result<Self, HistoryError> {
        let mut buf = HistoryBuffer::new(dim, f64::INFINITY);
        for (k, &t) in times.iter().enumerate() {
            buf.push(t, &states[k * dim..(k + 1) * dim])?;
        }
        Ok(buf)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len() - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, t: f64, x: &[f64]) -> Result<(), HistoryError> {
        if x.len() != self.dim {
            return Err(HistoryError::Dimension {
                dim: self.dim,
                got: x.len(),
            });
        }
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(HistoryError::NonMonotone { t, last });
            }
        }
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.evict();
        Ok(())
    }

    fn evict(&mut self) {
        if !self.retain.is_finite() {
            return;
        }
        let now = *self.times.last().unwrap();
        let cutoff = now - self.retain;
        // keep the last sample at or before the cutoff
        while self.start + 1 < self.times.len() && self.times[self.start + 1] <= cutoff {
            self.start += 1;
        }
        if self.start > 1024 && self.start * 2 > self.times.len() {
            self.times.drain(..self.start);
            self.states.drain(..self.start * self.dim);
            self.start = 0;
        }
    }

    pub fn first_time(&self) -> Option<f64> {
        self.times.get(self.start).copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        let n = self.times.len();
        (n > self.start).then(|| &self.states[(n - 1) * self.dim..n * self.dim])
    }

    /// Stored samples inside the live window, oldest first.
    pub fn samples(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (self.start..self.times.len()).map(move |k| (self.times[k], self.row(k)))
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// Linear interpolation at `t`; exact at sample points, never extrapolates.
    pub fn query(&self, t: f64, out: &mut [f64]) -> Result<(), HistoryError> {
        let (first, last) = match (self.first_time(), self.last_time()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(HistoryError::Empty),
        };
        let eps = EDGE_EPS * (1.0 + first.abs().max(last.abs()));
        if t < first - eps {
            return Err(HistoryError::Underflow { t, earliest: first });
        }
        if t > last + eps {
            return Err(HistoryError::Overflow { t, latest: last });
        }
        let live = &self.times[self.start..];
        let i = live.partition_point(|&s| s <= t);
        if i == 0 {
            out.copy_from_slice(self.row(self.start));
            return Ok(());
        }
        let lo = self.start + i - 1;
        if i == live.len() || self.times[lo] == t {
            out.copy_from_slice(self.row(lo));
            return Ok(());
        }
        let (t0, t1) = (self.times[lo], self.times[lo + 1]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.row(lo), self.row(lo + 1));
        for ((o, &a), &b) in out.iter_mut().zip(a).zip(b) {
            *o = a + w * (b - a);
        }
        Ok(())
    }

    /// Grid maximum of `|x|` over stored samples in `[now - lookback, now]`.
    pub fn window_sup_norm(&self, lookback: f64) -> Result<f64, HistoryError> {
        let now = self.last_time().ok_or(HistoryError::Empty)?;
        let from = now - lookback;
        let eps = EDGE_EPS * (1.0 + now.abs());
        Ok(self
            .samples()
            .filter(|(t, _)| *t >= from - eps)
            .map(|(_, x)| norm(x))
            .fold(0.0, f64::max))
    }

    /// Trapezoidal `int_{from}^{to} f(s, x(s)) ds` on the stored grid; the
    /// partial end intervals are closed by interpolated samples.
    pub fn integrate_window<F>(&self, from: f64, to: f64, mut f: F) -> Result<f64, HistoryError>
    where
        F: FnMut(f64, &[f64]) -> f64,
    {
        if self.is_empty() {
            return Err(HistoryError::Empty);
        }
        if from >= to {
            return Ok(0.0);
        }
        let mut xe = vec![0.0; self.dim];
        self.query(from, &mut xe)?;
        let mut prev_t = from;
        let mut prev_f = f(from, &xe);
        self.query(to, &mut xe)?;
        let end_f = f(to, &xe);
        let live = &self.times[self.start..];
        let first = self.start + live.partition_point(|&s| s <= from);
        let mut acc = 0.0;
        for k in first..self.times.len() {
            let t = self.times[k];
            if t >= to {
                break;
            }
            let v = f(t, self.row(k));
            acc += 0.5 * (t - prev_t) * (prev_f + v);
            prev_t = t;
            prev_f = v;
        }
        acc += 0.5 * (to - prev_t) * (prev_f + end_f);
        Ok(acc)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(f: impl Fn(f64) -> f64, t0: f64, t1: f64, h: f64) -> HistoryBuffer {
        let mut b = HistoryBuffer::new(1, f64::INFINITY);
        let n = ((t1 - t0) / h).round() as usize;
        for k in 0..=n {
            let t = t0 + k as f64 * h;
            b.push(t, &[f(t)]).unwrap();
        }
        b
    }

    fn q(b: &HistoryBuffer, t: f64) -> f64 {
        let mut out = [0.0];
        b.query(t, &mut out).unwrap();
        out[0]
    }

    #[test]
    fn constant_and_midpoint_queries() {
        let b = filled(|_| 3.0, 0.0, 1.0, 0.1);
        assert_eq!(q(&b, 0.537), 3.0);
        let mut b = HistoryBuffer::new(1, 10.0);
        b.push(0.0, &[0.0]).unwrap();
        b.push(1.0, &[2.0]).unwrap();
        assert_eq!(q(&b, 0.5), 1.0);
    }

    #[test]
    fn quadratic_interpolation_error() {
        let h = 0.1;
        let b = filled(|t| t * t, 0.0, 1.0, h);
        assert!((q(&b, 0.55) - 0.3025).abs() <= h * h / 4.0 + 1e-12);
    }

    #[test]
    fn out_of_window_queries_fail() {
        let b = filled(|t| t, 0.0, 1.0, 0.1);
        assert!(matches!(b.query(-0.5, &mut [0.0]), Err(HistoryError::Underflow { .. })));
        assert!(matches!(b.query(1.5, &mut [0.0]), Err(HistoryError::Overflow { .. })));
        let e = HistoryBuffer::new(1, 1.0);
        assert_eq!(e.query(0.0, &mut [0.0]), Err(HistoryError::Empty));
        assert_eq!(e.window_sup_norm(1.0), Err(HistoryError::Empty));
    }

    #[test]
    fn rejects_non_monotone_and_wrong_dimension() {
        let mut b = HistoryBuffer::new(2, 1.0);
        b.push(0.0, &[1.0, 1.0]).unwrap();
        assert!(b.push(0.0, &[1.0, 1.0]).is_err());
        assert!(b.push(1.0, &[1.0]).is_err());
    }

    #[test]
    fn sliding_window_keeps_edge_sample() {
        let mut b = HistoryBuffer::new(1, 0.25);
        for k in 0..5000 {
            let t = k as f64 * 0.01;
            b.push(t, &[t]).unwrap();
        }
        let now = b.last_time().unwrap();
        assert!(b.first_time().unwrap() <= now - 0.25);
        assert!(b.len() < 40);
        assert!((q(&b, now - 0.25) - (now - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn window_sup_norms() {
        assert_eq!(filled(|_| -2.0, -1.0, 0.0, 0.1).window_sup_norm(1.0).unwrap(), 2.0);
        assert!((filled(|s| s, -1.0, 0.0, 0.01).window_sup_norm(1.0).unwrap() - 1.0).abs() < 1e-12);
        let s = filled(|s| (5.0 * s).sin(), -1.0, 0.0, 0.01)
            .window_sup_norm(1.0)
            .unwrap();
        assert!((s - 1.0).abs() <= 1.3e-3);
    }

    #[test]
    fn window_integral_of_exponential() {
        let b = filled(|_| 1.0, -1.0, 0.0, 1e-3);
        let v = b.integrate_window(-0.37, 0.0, |s, _| s.exp()).unwrap();
        assert!((v - (1.0 - (-0.37_f64).exp())).abs() < 1e-7);
    }
}
