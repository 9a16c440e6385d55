//! Weighted reservoir of projection directions.
//!
//! Every candidate in the pool receives a key `k = u^(1/w)` with
//! `u ~ U(0,1)` and `w` its weight (the candidate's current transport cost).
//! Keeping the `K` largest keys is the Efraimidis–Spirakis A-Res scheme,
//! under which a single draw selects candidate `j` with probability
//! `w_j / sum w`. Keys are compared as `ln(u) / w` so that tiny weights do
//! not underflow to identical zero keys.
//!
//! Survivors are then re-weighted by the inverse of that selection share and
//! normalised, and the effective sample size of the normalised weights
//! decides whether the reservoir is flushed before the next step.
//!
//! # Snapshot format
//!
//! [`Reservoir::to_snapshot`] writes a line-oriented text document:
//!
//! ```text
//! reswd-reservoir v1
//! capacity <K>
//! step <t>
//! dim <d>
//! entries <n>
//! <weight> <key> <inserted_at> <theta_1> ... <theta_d>    (n lines)
//! ```
//!
//! Reals use Rust's shortest round-trip formatting, so a snapshot reloads
//! bit-exactly.

use crate::error::{invalid, Error, Result};
use crate::numeric::{Direction, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirEntry {
    pub direction: Direction,
    /// Last keying weight (the direction's cost, possibly aged).
    pub weight: f64,
    pub key: f64,
    /// Step at which the direction entered the reservoir.
    pub inserted_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    entries: Vec<ReservoirEntry>,
    capacity: usize,
    current_step: u64,
}

/// A pool member offered to [`select`].
#[derive(Debug, Clone)]
pub struct Candidate {
    pub direction: Direction,
    /// This step's transport cost `D(theta)`.
    pub cost: f64,
    /// Keying weight. Equal to `cost` unless the candidate has been aged.
    pub weight: f64,
    pub inserted_at: u64,
}

impl Candidate {
    pub fn new(direction: Direction, cost: f64, inserted_at: u64) -> Self {
        Self { direction, cost, weight: cost, inserted_at }
    }
}

/// Outcome of one selection round.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub survivors: Vec<ReservoirEntry>,
    /// Position of each survivor in the offered pool.
    pub pool_indices: Vec<usize>,
    /// Transport cost of each survivor.
    pub costs: Vec<f64>,
    /// Pool-relative selection share `q = w / sum(pool w)`.
    pub probabilities: Vec<f64>,
    /// Self-normalised inverse-share weights, summing to one.
    pub norm_weights: Vec<f64>,
    pub ess: f64,
    /// Every pool weight was zero; survivors are arbitrary and uniformly weighted.
    pub degenerate: bool,
}

impl Reservoir {
    pub fn new(capacity: usize) -> Self {
        Self { entries: Vec::with_capacity(capacity), capacity, current_step: 0 }
    }

    /// Builds a reservoir from selected survivors. Extra entries beyond
    /// `capacity` are an error.
    pub fn from_entries(entries: Vec<ReservoirEntry>, capacity: usize, step: u64) -> Result<Self> {
        if entries.len() > capacity {
            return Err(invalid(format!(
                "{} entries exceed reservoir capacity {capacity}",
                entries.len()
            )));
        }
        Ok(Self { entries, capacity, current_step: step })
    }

    pub fn entries(&self) -> &[ReservoirEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ReservoirEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    pub fn set_current_step(&mut self, t: u64) {
        self.current_step = t;
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.direction.dim())
    }

    /// Empties the reservoir, keeping capacity and step.
    pub fn flush(&mut self) {
        self.entries.clear();
    }

    /// Ages every stored weight and key by `exp(-(t - t_i) / tau)`.
    /// `tau == 0` disables decay.
    pub fn decay(&mut self, t: u64, tau: f64) -> Result<()> {
        if tau.is_nan() || tau < 0.0 {
            return Err(invalid(format!("decay constant must be >= 0, got {tau}")));
        }
        if let Some(e) = self.entries.iter().find(|e| e.inserted_at > t) {
            return Err(invalid(format!(
                "cannot decay to step {t}: entry inserted at step {}",
                e.inserted_at
            )));
        }
        if tau == 0.0 {
            return Ok(());
        }
        for e in &mut self.entries {
            let factor = decay_factor(t, e.inserted_at, tau);
            e.weight *= factor;
            e.key *= factor;
        }
        Ok(())
    }

    pub fn to_snapshot(&self) -> String {
        let mut out = format!(
            "reswd-reservoir v1\ncapacity {}\nstep {}\ndim {}\nentries {}\n",
            self.capacity,
            self.current_step,
            self.dim().unwrap_or(0),
            self.entries.len()
        );
        for e in &self.entries {
            out.push_str(&format!("{} {} {}", e.weight, e.key, e.inserted_at));
            for x in e.direction.as_slice() {
                out.push_str(&format!(" {x}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("reservoir snapshot: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("reswd-reservoir v1") {
            return Err(bad("missing 'reswd-reservoir v1' header"));
        }
        let mut field = |name: &str| -> Result<u64> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let mut it = line.split_whitespace();
            match (it.next(), it.next().and_then(|v| v.parse().ok())) {
                (Some(n), Some(v)) if n == name => Ok(v),
                _ => Err(bad(&format!("malformed {name} line"))),
            }
        };
        let capacity = field("capacity")? as usize;
        let step = field("step")?;
        let dim = field("dim")? as usize;
        let count = field("entries")? as usize;
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let line = lines.next().ok_or_else(|| bad(&format!("missing entry {i}")))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 + dim {
                return Err(bad(&format!("entry {i} has {} fields, expected {}", parts.len(), 3 + dim)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("entry {i}: bad number '{s}'")));
            let weight = num(parts[0])?;
            let key = num(parts[1])?;
            let inserted_at = parts[2].parse().map_err(|_| bad(&format!("entry {i}: bad step")))?;
            let theta = parts[3..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let direction = Direction::from_unit(theta).map_err(|e| bad(&e.to_string()))?;
            entries.push(ReservoirEntry { direction, weight, key, inserted_at });
        }
        Reservoir::from_entries(entries, capacity, step)
    }
}

pub(crate) fn decay_factor(t: u64, inserted_at: u64, tau: f64) -> f64 {
    if tau > 0.0 {
        (-((t - inserted_at) as f64) / tau).exp()
    } else {
        1.0
    }
}

/// `u^(1/weight)`.
pub fn key_from_uniform(weight: f64, u: f64) -> f64 {
    u.powf(1.0 / weight)
}

/// Draws a fresh A-Res key for `weight`.
pub fn make_key(weight: f64, rng: &mut RngState) -> Result<f64> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(invalid(format!("key weight must be positive and finite, got {weight}")));
    }
    Ok(key_from_uniform(weight, rng.uniform_open()))
}

/// Keys every positive-weight pool member and keeps the `capacity` largest
/// keys. Zero-weight members only survive when the whole pool has zero
/// weight, in which case the result is flagged `degenerate`.
pub fn select(pool: Vec<Candidate>, capacity: usize, rng: &mut RngState) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(invalid("selection pool is empty"));
    }
    if capacity == 0 {
        return Err(invalid("reservoir capacity must be >= 1"));
    }
    if let Some(c) = pool.iter().find(|c| !(c.cost >= 0.0 && c.weight >= 0.0 && c.weight.is_finite())) {
        return Err(invalid(format!("pool costs must be finite and >= 0, got {}", c.weight)));
    }

    let total: f64 = pool.iter().map(|c| c.weight).sum();
    if total <= 0.0 {
        return Ok(degenerate_selection(pool, capacity));
    }

    // (log key, key, pool index); every candidate draws a uniform so the
    // random stream does not depend on which weights happen to be zero
    let mut keyed: Vec<(f64, f64, usize)> = Vec::with_capacity(pool.len());
    for (i, c) in pool.iter().enumerate() {
        let u = rng.uniform_open();
        if c.weight > 0.0 {
            let log_key = u.ln() / c.weight;
            keyed.push((log_key, log_key.exp(), i));
        }
    }
    keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
    keyed.truncate(capacity);

    let probabilities: Vec<f64> = keyed.iter().map(|&(_, _, i)| pool[i].weight / total).collect();
    let inv_sum: f64 = probabilities.iter().map(|q| 1.0 / q).sum();
    let norm_weights: Vec<f64> = probabilities.iter().map(|q| (1.0 / q) / inv_sum).collect();
    let ess = effective_sample_size(&norm_weights);

    let pool_indices: Vec<usize> = keyed.iter().map(|k| k.2).collect();
    let costs = pool_indices.iter().map(|&i| pool[i].cost).collect();
    let mut slots: Vec<Option<Candidate>> = pool.into_iter().map(Some).collect();
    let survivors = keyed
        .iter()
        .map(|&(_, key, i)| {
            let c = slots[i].take().expect("pool index selected twice");
            ReservoirEntry { direction: c.direction, weight: c.weight, key, inserted_at: c.inserted_at }
        })
        .collect();

    Ok(SelectionResult {
        survivors,
        pool_indices,
        costs,
        probabilities,
        norm_weights,
        ess,
        degenerate: false,
    })
}

fn degenerate_selection(pool: Vec<Candidate>, capacity: usize) -> SelectionResult {
    let n_pool = pool.len();
    let k = capacity.min(n_pool);
    let w = 1.0 / k as f64;
    let (pool_indices, survivors): (Vec<usize>, Vec<ReservoirEntry>) = pool
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, c)| {
            (i, ReservoirEntry { direction: c.direction, weight: c.weight, key: 0.0, inserted_at: c.inserted_at })
        })
        .unzip();
    SelectionResult {
        survivors,
        pool_indices,
        costs: vec![0.0; k],
        probabilities: vec![1.0 / n_pool as f64; k],
        norm_weights: vec![w; k],
        ess: k as f64,
        degenerate: true,
    }
}

/// `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// True when the weights have collapsed: `ess < alpha * k`.
pub fn ess_check(result: &SelectionResult, alpha: f64, k: usize) -> bool {
    result.ess < alpha * k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numeric::sample_directions;

    fn dirs(n: usize, seed: u64) -> Vec<Direction> {
        sample_directions(&mut RngState::new(seed), n, 3).unwrap()
    }

    fn pool_from(costs: &[f64]) -> Vec<Candidate> {
        dirs(costs.len(), 1)
            .into_iter()
            .zip(costs)
            .map(|(d, &c)| Candidate::new(d, c, 0))
            .collect()
    }

    fn entry(w: f64, k: f64, at: u64) -> ReservoirEntry {
        ReservoirEntry { direction: dirs(1, 2).remove(0), weight: w, key: k, inserted_at: at }
    }

    #[test]
    fn decay_zero_age_is_identity() {
        let mut r = Reservoir::from_entries(vec![entry(1.0, 0.5, 4)], 2, 4).unwrap();
        r.decay(4, 10.0).unwrap();
        assert_eq!((r.entries()[0].weight, r.entries()[0].key), (1.0, 0.5));
    }

    #[test]
    fn decay_one_time_constant() {
        let mut r = Reservoir::from_entries(vec![entry(1.0, 0.5, 0)], 2, 0).unwrap();
        r.decay(10, 10.0).unwrap();
        assert!((r.entries()[0].weight - (-1f64).exp()).abs() < 1e-15);
        assert!((r.entries()[0].key - 0.5 * (-1f64).exp()).abs() < 1e-15);
        assert_eq!(r.entries()[0].inserted_at, 0);
    }

    #[test]
    fn decay_disabled_and_errors() {
        let orig = Reservoir::from_entries(vec![entry(2.0, 0.3, 0), entry(1.0, 0.9, 3)], 4, 3).unwrap();
        let mut r = orig.clone();
        r.decay(50, 0.0).unwrap();
        assert_eq!(r, orig);
        assert!(r.decay(50, -1.0).is_err());
        assert!(r.decay(1, 5.0).is_err());
    }

    #[test]
    fn key_examples() {
        assert_eq!(key_from_uniform(1.0, 0.5), 0.5);
        let mut last = 0.0;
        for w in [0.5, 1.0, 10.0, 1e3, 1e6] {
            let k = key_from_uniform(w, 0.5);
            assert!(k > last && k < 1.0);
            last = k;
        }
        assert!(last > 0.9999);
        assert!(make_key(0.0, &mut RngState::new(1)).is_err());
        assert!(make_key(-2.0, &mut RngState::new(1)).is_err());
    }

    #[test]
    fn key_law_ks() {
        // P(key <= k) = k^w for w = 2
        let mut rng = RngState::new(17);
        let n = 100_000;
        let mut keys: Vec<f64> = (0..n).map(|_| make_key(2.0, &mut rng).unwrap()).collect();
        keys.sort_by(f64::total_cmp);
        let ks = keys
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let f = k * k;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn full_pool_survives() {
        let res = select(pool_from(&[1.0, 2.0, 3.0]), 3, &mut RngState::new(4)).unwrap();
        let mut idx = res.pool_indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);
        // q = (1,2,3)/6; 1/q = (6,3,2); normalised = (6,3,2)/11
        for (&i, &w) in res.pool_indices.iter().zip(&res.norm_weights) {
            let expected = [6.0, 3.0, 2.0][i] / 11.0;
            assert!((w - expected).abs() < 1e-15);
        }
        assert!((res.norm_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_share_weights() {
        // q = [0.2, 0.8] -> (5, 1.25) / 6.25
        let res = select(pool_from(&[1.0, 4.0]), 2, &mut RngState::new(9)).unwrap();
        for (&i, &w) in res.pool_indices.iter().zip(&res.norm_weights) {
            let expected = [0.8, 0.2][i];
            assert!((w - expected).abs() < 1e-15);
            assert!((res.probabilities[res.pool_indices.iter().position(|&j| j == i).unwrap()]
                - [0.2, 0.8][i])
                .abs()
                < 1e-15);
        }
    }

    #[test]
    fn single_slot_frequencies() {
        let mut rng = RngState::new(123);
        let trials = 100_000;
        let mut counts = [0usize; 4];
        let base = pool_from(&[1.0, 2.0, 3.0, 4.0]);
        for _ in 0..trials {
            let res = select(base.clone(), 1, &mut rng).unwrap();
            counts[res.pool_indices[0]] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let f = c as f64 / trials as f64;
            assert!((f - 0.1 * (i + 1) as f64).abs() < 0.01, "index {i}: {f}");
        }
    }

    #[test]
    fn larger_cost_survives_more_often() {
        let trials = 50_000;
        let freq = |costs: &[f64]| {
            let mut rng = RngState::new(77);
            let base = pool_from(costs);
            let hits = (0..trials)
                .filter(|_| select(base.clone(), 1, &mut rng).unwrap().pool_indices[0] == 0)
                .count();
            hits as f64 / trials as f64
        };
        let lo = freq(&[1.0, 2.0, 3.0]);
        let hi = freq(&[2.0, 2.0, 3.0]);
        let sigma = (0.25 / trials as f64).sqrt();
        assert!(hi > lo - 3.0 * sigma, "{lo} -> {hi}");
        assert!((lo - 1.0 / 6.0).abs() < 3.0 * sigma * 2.0);
    }

    #[test]
    fn zero_cost_ineligible_when_alternatives_exist() {
        let mut rng = RngState::new(5);
        for _ in 0..100 {
            let res = select(pool_from(&[0.0, 1.0, 0.0, 2.0]), 3, &mut rng).unwrap();
            assert!(!res.degenerate);
            assert_eq!(res.survivors.len(), 2);
            assert!(res.pool_indices.iter().all(|&i| i == 1 || i == 3));
        }
    }

    #[test]
    fn all_zero_is_degenerate() {
        let res = select(pool_from(&[0.0; 5]), 3, &mut RngState::new(5)).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.survivors.len(), 3);
        assert!(res.norm_weights.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn capacity_and_determinism() {
        let costs: Vec<f64> = (1..=20).map(|i| i as f64 * 0.37).collect();
        let a = select(pool_from(&costs), 7, &mut RngState::new(42)).unwrap();
        let b = select(pool_from(&costs), 7, &mut RngState::new(42)).unwrap();
        assert_eq!(a.survivors.len(), 7);
        assert_eq!(a.survivors, b.survivors);
        assert_eq!(a.norm_weights, b.norm_weights);
        assert!(a.survivors.iter().all(|e| e.key > 0.0 && e.key <= 1.0 && e.weight > 0.0));
        assert!(a.norm_weights.iter().all(|&w| w >= 0.0));
        assert!(a.ess > 0.0 && a.ess <= 7.0 + 1e-12);
    }

    fn with_weights(w: &[f64]) -> SelectionResult {
        let s: f64 = w.iter().sum();
        let norm: Vec<f64> = w.iter().map(|x| x / s).collect();
        SelectionResult {
            survivors: vec![],
            pool_indices: vec![],
            costs: vec![],
            probabilities: vec![],
            ess: effective_sample_size(&norm),
            norm_weights: norm,
            degenerate: false,
        }
    }

    #[test]
    fn ess_examples() {
        let uniform = with_weights(&[1.0; 4]);
        assert!((uniform.ess - 4.0).abs() < 1e-12);
        assert!(!ess_check(&uniform, 0.5, 4));

        let atom = with_weights(&[1.0, 0.0, 0.0, 0.0]);
        assert!((atom.ess - 1.0).abs() < 1e-12);
        assert!(ess_check(&atom, 0.5, 4));

        let skew = with_weights(&[2.0, 1.0]);
        assert!((skew.ess - 1.8).abs() < 1e-12);
        assert!(!ess_check(&skew, 0.5, 2));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut r = Reservoir::from_entries(vec![entry(0.123456789, 0.987654321, 3), entry(2.5, 1e-7, 9)], 4, 11)
            .unwrap();
        r.set_current_step(12);
        let text = r.to_snapshot();
        assert!(text.starts_with("reswd-reservoir v1\n"));
        assert_eq!(Reservoir::from_snapshot(&text).unwrap(), r);
        assert!(Reservoir::from_snapshot("garbage").is_err());
        let empty = Reservoir::new(8);
        assert_eq!(Reservoir::from_snapshot(&empty.to_snapshot()).unwrap(), empty);
    }

    proptest! {
        #[test]
        fn selection_invariants(costs in prop::collection::vec(0.0f64..10.0, 1..40), k in 1usize..40, seed in 0u64..1000) {
            let r = select(pool_from(&costs), k, &mut RngState::new(seed)).unwrap();
            let positive = costs.iter().filter(|&&c| c > 0.0).count();
            let expect = if positive == 0 { k.min(costs.len()) } else { k.min(positive) };
            prop_assert_eq!(r.survivors.len(), expect);
            prop_assert!((r.norm_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(r.ess >= 1.0 - 1e-9 && r.ess <= r.survivors.len() as f64 + 1e-9);
            let mut seen = r.pool_indices.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), r.pool_indices.len());
            if positive > 0 {
                prop_assert!(r.costs.iter().all(|&c| c > 0.0));
            }
        }

        #[test]
        fn keys_are_ordered_by_weight_for_a_shared_uniform(u in 0.001f64..0.999, w1 in 0.01f64..10.0, w2 in 0.01f64..10.0) {
            let (k1, k2) = (key_from_uniform(w1, u), key_from_uniform(w2, u));
            prop_assert!(k1 > 0.0 && k1 <= 1.0);
            if w1 < w2 {
                prop_assert!(k1 <= k2);
            }
        }
    }
}
