//! Sup-constant estimates with growth traces and plateau/divergence verdicts.
//!
//! Every estimate is a lower bound for a supremum over all balls. The trace
//! records the running supremum (in log form) at checkpoints of the
//! cumulative family size; the verdict applies the doubling heuristic.

use serde::{Deserialize, Serialize};

/// Growth factor per checkpoint above which a trace counts as diverging.
pub const DIVERGENCE_FACTOR: f64 = 1.5;

/// Which constant an estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum ClassTag {
    ReverseHolder { q: f64 },
    S { p: f64, c: f64 },
    H { p: f64, c: f64, m: f64 },
    ATheta { p: f64, theta: f64 },
    ALoc { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Plateau,
    Divergence,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Number of balls seen so far.
    pub count: usize,
    /// Running supremum, natural log.
    pub log_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallWitness {
    pub index: usize,
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConstantEstimate {
    pub class: ClassTag,
    /// `exp(log_value)`; may overflow to infinity for diverging traces.
    pub value: f64,
    pub log_value: f64,
    pub attaining: Option<BallWitness>,
    pub trace: Vec<TracePoint>,
    pub evaluated: usize,
    pub skipped: usize,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
}

impl ClassConstantEstimate {
    /// Builds an estimate from per-ball log values in family order.
    ///
    /// `None` entries are skipped balls. `checkpoints` are cumulative counts
    /// at which the trace is sampled; when empty, powers of two and the
    /// final count are used.
    pub fn from_log_values(
        class: ClassTag,
        logs: &[Option<f64>],
        witness: impl Fn(usize) -> BallWitness,
        checkpoints: &[usize],
        warnings: Vec<String>,
    ) -> Self {
        let n = logs.len();
        let cps: Vec<usize> = if checkpoints.is_empty() { doubling_checkpoints(n) } else { checkpoints.to_vec() };
        let mut best = f64::NEG_INFINITY;
        let mut arg = None;
        let mut trace = Vec::with_capacity(cps.len());
        let mut next = 0;
        for (i, v) in logs.iter().enumerate() {
            if let Some(v) = *v {
                // Strict comparison keeps the lowest index on ties.
                if v > best {
                    best = v;
                    arg = Some(i);
                }
            }
            while next < cps.len() && cps[next] == i + 1 {
                if best.is_finite() {
                    trace.push(TracePoint { count: i + 1, log_value: best });
                }
                next += 1;
            }
        }
        let skipped = logs.iter().filter(|v| v.is_none()).count();
        let verdict = verdict_from_trace(&trace);
        Self {
            class,
            value: best.exp(),
            log_value: best,
            attaining: arg.map(witness),
            trace,
            evaluated: n - skipped,
            skipped,
            warnings,
            verdict,
        }
    }
}

/// `1, 2, 4, …` up to `n`, always ending at `n`.
pub fn doubling_checkpoints(n: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut k = 1;
    while k < n {
        v.push(k);
        k *= 2;
    }
    if n > 0 {
        v.push(n);
    }
    v
}

/// Doubling heuristic on a log-valued trace: growth by more than
/// [`DIVERGENCE_FACTOR`] across each of the last three steps is divergence;
/// three steps each below the factor with a final step below its square
/// root is a plateau; anything else, or fewer than four points, is
/// inconclusive.
pub fn verdict_from_logs(logs: &[f64]) -> Verdict {
    if logs.len() < 4 {
        return Verdict::Inconclusive;
    }
    let t = DIVERGENCE_FACTOR.ln();
    let steps: Vec<f64> = logs[logs.len() - 4..].windows(2).map(|w| w[1] - w[0]).collect();
    if steps.iter().all(|&s| s > t) {
        Verdict::Divergence
    } else if steps.iter().all(|&s| s <= t) && steps[2] <= 0.5 * t {
        Verdict::Plateau
    } else {
        Verdict::Inconclusive
    }
}

pub fn verdict_from_trace(trace: &[TracePoint]) -> Verdict {
    verdict_from_logs(&trace.iter().map(|p| p.log_value).collect::<Vec<_>>())
}

/// Same heuristic on plain positive values.
pub fn verdict_from_values(values: &[f64]) -> Verdict {
    verdict_from_logs(&values.iter().map(|v| v.ln()).collect::<Vec<_>>())
}

/// Numerically stable `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Streaming accumulator for `ln Σ w_i exp(x_i)` with `w_i > 0`.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    acc: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, acc: 0.0 }
    }
}

impl LogSum {
    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.acc += (log_term - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    pub fn value(&self) -> f64 {
        if self.acc == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(verdict_from_values(&[1.0, 1.0, 1.0, 1.0]), Verdict::Plateau);
        assert_eq!(verdict_from_values(&[1.0, 2.0, 4.0, 8.0]), Verdict::Divergence);
        assert_eq!(verdict_from_values(&[1.0, 2.0, 4.0]), Verdict::Inconclusive);
        assert_eq!(verdict_from_values(&[1.0, 1.4, 1.9, 2.5]), Verdict::Inconclusive);
    }

    #[test]
    fn trace_is_running_sup() {
        let logs = [Some(0.0), Some(2.0), None, Some(1.0), Some(3.0)];
        let e = ClassConstantEstimate::from_log_values(
            ClassTag::ALoc { p: 2.0 },
            &logs,
            |i| BallWitness { index: i, center: vec![], radius: 1.0 },
            &[],
            vec![],
        );
        assert_eq!(e.attaining.unwrap().index, 4);
        assert_eq!(e.skipped, 1);
        let t: Vec<f64> = e.trace.iter().map(|p| p.log_value).collect();
        assert_eq!(t, vec![0.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn log_sum_matches_direct() {
        let xs = [0.1, -3.0, 2.5, 700.0, 699.0];
        let mut s = LogSum::default();
        xs.iter().for_each(|&x| s.add(x));
        assert!((s.value() - log_sum_exp(&xs)).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }
}
