//! Wall-clock timing: one warm-up call, then the median of `reps` calls.

use std::hint::black_box;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn time_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = black_box(f());
    (out, start.elapsed().as_secs_f64() * 1e3)
}

pub fn time_reps<T>(reps: usize, mut f: impl FnMut() -> T) -> Timing {
    assert!(reps > 0, "need at least one repetition");
    black_box(f());
    let mut ms: Vec<f64> = (0..reps).map(|_| time_ms(&mut f).1).collect();
    let min_ms = ms.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ms = ms.iter().copied().fold(0.0, f64::max);
    Timing { median_ms: median(&mut ms), min_ms, max_ms }
}

/// Times several cases in interleaved rounds so slow drift of the machine
/// affects all of them alike. Each case gets one warm-up call, then one timed
/// call per round.
pub fn time_interleaved(rounds: usize, cases: &mut [Box<dyn FnMut() + '_>]) -> Vec<Timing> {
    assert!(rounds > 0, "need at least one round");
    for f in cases.iter_mut() {
        f();
    }
    let mut ms = vec![Vec::with_capacity(rounds); cases.len()];
    for _ in 0..rounds {
        for (f, m) in cases.iter_mut().zip(&mut ms) {
            m.push(time_ms(&mut **f).1);
        }
    }
    ms.into_iter()
        .map(|mut m| {
            let min_ms = m.iter().copied().fold(f64::INFINITY, f64::min);
            let max_ms = m.iter().copied().fold(0.0, f64::max);
            Timing { median_ms: median(&mut m), min_ms, max_ms }
        })
        .collect()
}
