//! Delay channels between the control station and the vehicle.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// What to do with draws above `truncation_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    #[default]
    Resample,
    Clamp,
}

/// Generalized extreme value distribution for the downlink delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GevParams {
    pub xi: f64,
    pub mu_gev: f64,
    pub sigma: f64,
    pub truncation_max: f64,
    pub truncation: Truncation,
}

impl Default for GevParams {
    fn default() -> Self {
        Self {
            xi: 0.29,
            mu_gev: 0.200,
            sigma: 0.009,
            truncation_max: 0.300,
            truncation: Truncation::Resample,
        }
    }
}

impl GevParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(SimError::Config(format!("gev.xi must lie in (0, 1), got {}", self.xi)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SimError::Config("gev.sigma must be positive".into()));
        }
        if !(self.lower_bound() >= 0.0) {
            return Err(SimError::Config(
                "gev lower bound mu - sigma/xi must be non-negative".into(),
            ));
        }
        if !(self.truncation_max > self.lower_bound()) {
            return Err(SimError::Config(
                "gev.truncation_max must exceed the lower bound".into(),
            ));
        }
        Ok(())
    }

    /// Support lower bound μ − σ/ξ.
    pub fn lower_bound(&self) -> f64 {
        self.mu_gev - self.sigma / self.xi
    }

    /// Inverse CDF, x = μ + σ((−ln u)^(−ξ) − 1)/ξ.
    pub fn quantile(&self, u: f64) -> f64 {
        self.mu_gev + self.sigma * ((-u.ln()).powf(-self.xi) - 1.0) / self.xi
    }

    /// CDF, used to reason about tail probabilities.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = 1.0 + self.xi * (x - self.mu_gev) / self.sigma;
        if z <= 0.0 {
            return 0.0;
        }
        (-z.powf(-1.0 / self.xi)).exp()
    }

    pub fn sample_untruncated<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.quantile(u);
            }
        }
    }

    /// Truncated draw in [lower_bound, truncation_max].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.sample_untruncated(rng);
            if x <= self.truncation_max {
                return x;
            }
            if self.truncation == Truncation::Clamp {
                return self.truncation_max;
            }
        }
    }
}

/// Draws one downlink delay from the distribution.
pub fn sample_downlink_delay<R: Rng + ?Sized>(gev: &GevParams, rng: &mut R) -> f64 {
    gev.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DelayPolicy {
    Constant { delay: f64 },
    Gev(GevParams),
}

impl DelayPolicy {
    pub const ZERO: DelayPolicy = DelayPolicy::Constant { delay: 0.0 };

    pub fn validate(&self) -> Result<()> {
        match self {
            DelayPolicy::Constant { delay } if !(delay.is_finite() && *delay >= 0.0) => Err(SimError::Config(format!(
                "constant delay must be non-negative, got {delay}"
            ))),
            DelayPolicy::Constant { .. } => Ok(()),
            DelayPolicy::Gev(g) => g.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamped<T> {
    pub payload: T,
    pub t_sent: f64,
    pub t_deliver: f64,
}

impl<T> Stamped<T> {
    pub fn delay(&self) -> f64 {
        self.t_deliver - self.t_sent
    }
}

/// One-way channel with freshest-wins delivery.
#[derive(Debug, Clone)]
pub struct DelayChannel<T> {
    queue: Vec<Stamped<T>>,
    policy: DelayPolicy,
    rng: ChaCha8Rng,
    last_t_sent: f64,
    trace: Option<Vec<(f64, f64)>>,
}

impl<T: Clone> DelayChannel<T> {
    /// `stream` selects an independent random stream for the same seed.
    pub fn new(policy: DelayPolicy, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            queue: Vec::new(),
            policy,
            rng,
            last_t_sent: f64::NEG_INFINITY,
            trace: None,
        }
    }

    /// Starts recording `(t_sent, t_deliver)` for every message.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[(f64, f64)] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn policy(&self) -> &DelayPolicy {
        &self.policy
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Drops every message in flight.
    pub fn flush(&mut self) {
        self.queue.clear();
    }

    pub fn send(&mut self, payload: T, sim_time: f64) {
        let delay = match &self.policy {
            DelayPolicy::Constant { delay } => *delay,
            DelayPolicy::Gev(g) => g.sample(&mut self.rng),
        };
        let t_deliver = sim_time + delay;
        if let Some(tr) = self.trace.as_mut() {
            tr.push((sim_time, t_deliver));
        }
        self.queue.push(Stamped {
            payload,
            t_sent: sim_time,
            t_deliver,
        });
    }

    /// Newest deliverable message not older than anything already returned.
    /// All deliverable messages are consumed.
    pub fn poll(&mut self, sim_time: f64) -> Option<Stamped<T>> {
        let mut best: Option<Stamped<T>> = None;
        self.queue.retain(|m| {
            if m.t_deliver <= sim_time {
                if best.as_ref().is_none_or(|b| m.t_sent > b.t_sent) {
                    best = Some(m.clone());
                }
                false
            } else {
                true
            }
        });
        match best {
            Some(m) if m.t_sent > self.last_t_sent => {
                self.last_t_sent = m.t_sent;
                Some(m)
            }
            _ => None,
        }
    }
}

/// Writes a `t_sent,t_deliver,delay` CSV.
pub fn write_delay_trace<W: Write>(trace: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_sent", "t_deliver", "delay"])?;
    for &(ts, td) in trace {
        w.write_record([format!("{ts:.6}"), format!("{td:.6}"), format!("{:.6}", td - ts)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gumbel_median_point_maps_to_location() {
        let g = GevParams::default();
        assert!((g.quantile((-1.0f64).exp()) - 0.200).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_value() {
        let g = GevParams::default();
        assert!((g.lower_bound() - 0.168_965_517).abs() < 1e-8);
        assert_eq!(g.cdf(g.lower_bound()), 0.0);
        assert!((g.cdf(g.quantile(0.3)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_delivers_after_delay() {
        let mut ch = DelayChannel::new(DelayPolicy::Constant { delay: 0.060 }, 1, 0);
        ch.send(7u32, 1.000);
        assert!(ch.poll(1.059).is_none());
        let m = ch.poll(1.060).unwrap();
        assert_eq!(m.t_deliver, 1.000 + 0.060);
        assert_eq!(m.payload, 7);
    }

    #[test]
    fn zero_delay_channel() {
        let mut ch = DelayChannel::new(DelayPolicy::ZERO, 1, 0);
        ch.send((), 2.0);
        let m = ch.poll(2.0).unwrap();
        assert_eq!(m.t_deliver, m.t_sent);
    }

    #[test]
    fn empty_channel_polls_none() {
        let mut ch: DelayChannel<u8> = DelayChannel::new(DelayPolicy::ZERO, 1, 0);
        assert!(ch.poll(10.0).is_none());
    }

    #[test]
    fn freshest_wins() {
        let mut ch = DelayChannel::new(DelayPolicy::ZERO, 1, 0);
        ch.send(1u8, 1.0);
        ch.send(2u8, 1.033);
        let m = ch.poll(1.1).unwrap();
        assert_eq!(m.t_sent, 1.033);
        assert_eq!(ch.pending(), 0);
    }

    #[test]
    fn stale_message_discarded() {
        let mut ch = DelayChannel::new(DelayPolicy::ZERO, 1, 0);
        ch.queue.push(Stamped {
            payload: 1u8,
            t_sent: 1.0,
            t_deliver: 1.5,
        });
        ch.queue.push(Stamped {
            payload: 2u8,
            t_sent: 1.1,
            t_deliver: 1.2,
        });
        assert_eq!(ch.poll(1.3).unwrap().payload, 2);
        assert!(ch.poll(1.6).is_none());
    }

    #[test]
    fn not_yet_delivered() {
        let mut ch = DelayChannel::new(DelayPolicy::ZERO, 1, 0);
        ch.queue.push(Stamped {
            payload: 0u8,
            t_sent: 2.0,
            t_deliver: 2.5,
        });
        assert!(ch.poll(2.4).is_none());
        assert!(ch.poll(2.5).is_some());
    }

    #[test]
    fn trace_csv() {
        let mut ch = DelayChannel::new(DelayPolicy::Gev(GevParams::default()), 3, 1);
        ch.record_trace();
        for k in 0..10 {
            ch.send((), k as f64 / 30.0);
        }
        let mut buf = Vec::new();
        write_delay_trace(ch.trace(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("t_sent,t_deliver,delay\n"));
    }

    #[test]
    fn clamp_truncation() {
        let g = GevParams {
            truncation: Truncation::Clamp,
            truncation_max: 0.2,
            ..GevParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..10_000).map(|_| g.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x <= 0.2));
        assert!(xs.contains(&0.2));
    }

    proptest! {
        #[test]
        fn gev_delays_in_range(seed in any::<u64>(), stream in 0u64..8) {
            let mut ch = DelayChannel::new(DelayPolicy::Gev(GevParams::default()), seed, stream);
            for k in 0..200 {
                ch.send((), k as f64 / 30.0);
            }
            for m in &ch.queue {
                let d = m.delay();
                prop_assert!((0.169 - 1e-3..=0.300).contains(&d));
            }
        }

        #[test]
        fn poll_t_sent_is_monotone(seed in any::<u64>()) {
            let mut ch = DelayChannel::new(DelayPolicy::Gev(GevParams::default()), seed, 0);
            let mut last = f64::NEG_INFINITY;
            for k in 0..300u32 {
                let t = k as f64 / 30.0;
                if let Some(m) = ch.poll(t) {
                    prop_assert!(m.t_sent >= last);
                    last = m.t_sent;
                }
                ch.send(k, t);
            }
        }

        #[test]
        fn same_seed_same_delays(seed in any::<u64>()) {
            let g = GevParams::default();
            let mut a = ChaCha8Rng::seed_from_u64(seed);
            let mut b = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                prop_assert_eq!(g.sample(&mut a).to_bits(), g.sample(&mut b).to_bits());
            }
        }
    }
}
