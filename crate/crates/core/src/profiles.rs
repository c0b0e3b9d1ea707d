//! Synthetic household load profiles and the coincidence factor CF(n).
//!
//! CF(n) is the peak of n aggregated profiles divided by the sum of their
//! individual peaks. It is estimated by Monte Carlo at the anchors
//! n = 2, 4, ..., 64 and interpolated linearly in log2(n) in between.

use crate::error::{Error, Result};
use crate::par;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

pub const ANCHORS: [u32; 6] = [2, 4, 8, 16, 32, 64];
pub const DEFAULT_REPETITIONS: u32 = 200;
pub const DEFAULT_POOL_SIZE: usize = 1000;
const SAMPLES_PER_DAY: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSpan {
    /// One representative week at 15-minute resolution (672 samples).
    #[default]
    Week,
    /// A full non-leap year at 15-minute resolution (35040 samples).
    Year,
}

impl PoolSpan {
    pub fn days(self) -> usize {
        match self {
            PoolSpan::Week => 7,
            PoolSpan::Year => 365,
        }
    }

    pub fn samples(self) -> usize {
        self.days() * SAMPLES_PER_DAY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    /// Active power in kW, one value per interval.
    pub values: Vec<f64>,
    pub resolution_min: u32,
    pub peak_kw: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn bump(hour: f64, mu: f64, sigma: f64) -> f64 {
    let mut d = (hour - mu).abs();
    if d > 12.0 {
        d = 24.0 - d;
    }
    (-0.5 * (d / sigma).powi(2)).exp()
}

/// One consumer: a double-peak daily base plus random appliance spikes,
/// rescaled so its peak equals `s_r_kva` exactly.
fn synth_profile(s_r_kva: f64, rng: &mut ChaCha8Rng, span: PoolSpan) -> LoadProfile {
    let days = span.days();
    let night = rng.gen_range(0.05..0.15);
    let (m_mu, m_sigma, m_amp) = (rng.gen_range(6.0..8.5), rng.gen_range(0.7..1.5), rng.gen_range(0.3..0.8));
    let (e_mu, e_sigma, e_amp) = (rng.gen_range(17.5..21.0), rng.gen_range(1.0..2.5), rng.gen_range(0.6..1.2));
    let noon_amp = rng.gen_range(0.0..0.4);

    let mut values = vec![0.0; days * SAMPLES_PER_DAY];
    for d in 0..days {
        let weekend = d % 7 >= 5;
        let shift = if weekend { 1.5 } else { 0.0 };
        let level = rng.gen_range(0.85..1.15)
            * match span {
                PoolSpan::Week => 1.0,
                PoolSpan::Year => 1.0 + 0.3 * (2.0 * PI * (d as f64 - 15.0) / 365.0).cos(),
            };
        let day = &mut values[d * SAMPLES_PER_DAY..(d + 1) * SAMPLES_PER_DAY];
        for (s, v) in day.iter_mut().enumerate() {
            let h = (s as f64 + 0.5) / 4.0;
            *v = level
                * (night
                    + m_amp * bump(h, m_mu + shift, m_sigma)
                    + noon_amp * bump(h, 12.5, 1.5)
                    + e_amp * bump(h, e_mu, e_sigma));
        }
        for _ in 0..rng.gen_range(2..=8) {
            let start = rng.gen_range(24..SAMPLES_PER_DAY);
            let len = rng.gen_range(1..=4);
            let kw = rng.gen_range(0.5..2.5);
            for v in day.iter_mut().skip(start).take(len) {
                *v += kw;
            }
        }
    }

    let (argmax, max) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let scale = s_r_kva / max;
    for v in &mut values {
        *v = (*v * scale).min(s_r_kva);
    }
    values[argmax] = s_r_kva;
    LoadProfile {
        values,
        resolution_min: 15,
        peak_kw: s_r_kva,
    }
}

/// Pool of `count` distinct profiles; profile i draws from stream i of `seed`.
pub fn generate_pool(count: usize, s_r_kva: f64, seed: u64, span: PoolSpan) -> Result<Vec<LoadProfile>> {
    if count < 1 {
        return Err(Error::validation("profile pool needs at least one profile"));
    }
    if !(s_r_kva > 0.0) || !s_r_kva.is_finite() {
        return Err(Error::validation(format!("s_r_kva must be positive, got {s_r_kva}")));
    }
    Ok(par::map_range(count, |i| {
        synth_profile(s_r_kva, &mut stream_rng(seed, i as u64), span)
    }))
}

/// Pool as CSV: a `t_min` column then one column per consumer.
pub fn pool_to_csv(pool: &[LoadProfile]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t_min".to_string()];
    header.extend((0..pool.len()).map(|i| format!("c{i}")));
    w.write_record(&header).map_err(csv_err)?;
    let len = pool.first().map_or(0, |p| p.values.len());
    let res = pool.first().map_or(15, |p| p.resolution_min) as usize;
    for t in 0..len {
        let mut row = vec![(t * res).to_string()];
        row.extend(pool.iter().map(|p| p.values[t].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfTable {
    pub anchor_n: Vec<u32>,
    /// Monotone CF per anchor, after clamping.
    pub cf_values: Vec<f64>,
    /// Raw Monte Carlo estimates before clamping.
    pub raw_values: Vec<f64>,
    pub repetitions: u32,
    pub seed: u64,
    pub pool_size: usize,
    pub s_r_kva: f64,
}

/// Largest aggregated peak over `k` random draws of `n` profiles.
///
/// Draws come sequentially from one RNG stream; the peaks are then computed
/// in parallel, so the result does not depend on the thread count.
pub fn max_aggregate_peak(pool: &[LoadProfile], n: usize, k: u32, rng: &mut ChaCha8Rng) -> f64 {
    let draws: Vec<Vec<usize>> = (0..k)
        .map(|_| index::sample(rng, pool.len(), n).into_vec())
        .collect();
    let len = pool[0].values.len();
    let peaks = par::map(&draws, |idx| {
        let mut agg = vec![0.0; len];
        for &i in idx {
            for (a, v) in agg.iter_mut().zip(&pool[i].values) {
                *a += v;
            }
        }
        agg.into_iter().fold(f64::NEG_INFINITY, f64::max)
    });
    peaks.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Raw CF at arbitrary anchors. Anchor i uses stream i + 1 of `seed`.
pub fn estimate_anchors(pool: &[LoadProfile], s_r_kva: f64, k: u32, seed: u64, anchors: &[u32]) -> Result<Vec<f64>> {
    let largest = anchors.iter().copied().max().unwrap_or(0) as usize;
    if pool.len() < largest || pool.is_empty() {
        return Err(Error::validation(format!(
            "profile pool of {} is smaller than the largest anchor {largest}",
            pool.len()
        )));
    }
    if k < 1 {
        return Err(Error::validation("repetitions must be at least 1"));
    }
    Ok(anchors
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut rng = stream_rng(seed, i as u64 + 1);
            let peak = max_aggregate_peak(pool, n as usize, k, &mut rng);
            (peak / (n as f64 * s_r_kva)).min(1.0)
        })
        .collect())
}

/// Monte Carlo CF table over the standard anchors.
pub fn estimate_cf(pool: &[LoadProfile], s_r_kva: f64, k: u32, seed: u64) -> Result<CfTable> {
    if pool.len() < 64 {
        return Err(Error::validation(format!(
            "profile pool must hold at least 64 profiles, got {}",
            pool.len()
        )));
    }
    let raw = estimate_anchors(pool, s_r_kva, k, seed, &ANCHORS)?;
    Ok(CfTable {
        anchor_n: ANCHORS.to_vec(),
        cf_values: monotone(&raw),
        raw_values: raw,
        repetitions: k,
        seed,
        pool_size: pool.len(),
        s_r_kva,
    })
}

/// Cumulative minimum, starting from CF(1) = 1, with a floor of
/// `prev / (1 + ln 2)` per doubling so that n * CF(n) stays non-decreasing
/// under log-linear interpolation.
fn monotone(raw: &[f64]) -> Vec<f64> {
    let mut prev = 1.0;
    raw.iter()
        .map(|&c| {
            let v = c.min(prev).max(prev / (1.0 + LN_2));
            prev = v;
            v
        })
        .collect()
}

impl CfTable {
    /// CF(n): 1 at n = 1, log2-linear between anchors, flat beyond the last.
    pub fn cf_at(&self, n: u64) -> Result<f64> {
        if n < 1 {
            return Err(Error::Domain("CF(n) requires n >= 1".into()));
        }
        let x = (n as f64).log2();
        let (mut x0, mut y0) = (0.0, 1.0);
        for (&a, &c) in self.anchor_n.iter().zip(&self.cf_values) {
            let x1 = (a as f64).log2();
            if n == a as u64 {
                return Ok(c);
            }
            if x < x1 {
                return Ok(y0 + (x - x0) / (x1 - x0) * (c - y0));
            }
            (x0, y0) = (x1, c);
        }
        Ok(y0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<CfTable> {
        Ok(serde_json::from_str(s)?)
    }

    /// Table with given anchor values, no Monte Carlo metadata.
    pub fn from_values(anchor_n: Vec<u32>, cf_values: Vec<f64>) -> CfTable {
        CfTable {
            raw_values: cf_values.clone(),
            anchor_n,
            cf_values,
            repetitions: 0,
            seed: 0,
            pool_size: 0,
            s_r_kva: 0.0,
        }
    }
}
