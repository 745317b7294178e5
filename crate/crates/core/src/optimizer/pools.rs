use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::OptimizerError;

/// One evaluated training query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scored {
    pub query_id: u64,
    pub metric: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QueryPools {
    pub positive: Vec<Scored>,
    pub negative: Vec<Scored>,
    pub excluded: Vec<Scored>,
}

/// Positive iff `m > l`, negative iff `m < h`. With `strict = false` the bounds are inclusive
/// and a query meeting both goes to the positive pool.
pub fn partition_queries(records: &[Scored], l: f64, h: f64, strict: bool) -> QueryPools {
    let mut pools = QueryPools::default();
    for r in records {
        let (pos, neg) = if strict { (r.metric > l, r.metric < h) } else { (r.metric >= l, r.metric <= h) };
        if pos {
            pools.positive.push(*r);
        } else if neg {
            pools.negative.push(*r);
        } else {
            pools.excluded.push(*r);
        }
    }
    pools
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContrastBatch {
    pub positives: Vec<Scored>,
    pub negatives: Vec<Scored>,
}

impl ContrastBatch {
    pub fn query_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.positives.iter().chain(&self.negatives).map(|s| s.query_id)
    }
}

fn draw(pool: &[Scored], n: usize, rng: &mut impl Rng) -> Vec<Scored> {
    let mut idx = sample(rng, pool.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

/// Equal split of `min(|pos|, |neg|, b/2)` per side, sampled without replacement.
pub fn sample_contrast_batch(pools: &QueryPools, b: usize, rng: &mut impl Rng) -> Result<ContrastBatch, OptimizerError> {
    let n = pools.positive.len().min(pools.negative.len()).min(b / 2);
    if n == 0 {
        return Err(OptimizerError::InsufficientContrast {
            positives: pools.positive.len(),
            negatives: pools.negative.len(),
        });
    }
    let positives = draw(&pools.positive, n, rng);
    let negatives = draw(&pools.negative, n, rng);
    Ok(ContrastBatch { positives, negatives })
}

/// Pools after raising `h` in steps of 0.05 (capped at `l`) until the negative pool is non-empty.
/// Returns the pools and the `h` finally used.
pub fn partition_adaptive(records: &[Scored], l: f64, h: f64, strict: bool, adaptive: bool) -> (QueryPools, f64) {
    let mut h_used = h;
    let mut pools = partition_queries(records, l, h_used, strict);
    let mut step = 0u32;
    while adaptive && pools.negative.is_empty() && h_used < l {
        step += 1;
        h_used = (h + 0.05 * f64::from(step)).min(l);
        pools = partition_queries(records, l, h_used, strict);
    }
    (pools, h_used)
}
