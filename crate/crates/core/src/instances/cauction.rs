use rand::Rng;

use super::{InstanceBuilder, InstanceError, MilpInstance, RngSeed};

/// Knobs of the simplified arbitrary-relationships bid generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauctionConfig {
    /// Common item values are uniform on `[min_value, max_value]`.
    pub min_value: f64,
    pub max_value: f64,
    /// Probability of growing a bundle by one more item.
    pub add_item_prob: f64,
    /// Bid price = sum of common values times `1 + U[-deviation, deviation]`.
    pub deviation: f64,
}

impl Default for CauctionConfig {
    fn default() -> Self {
        Self {
            min_value: 1.0,
            max_value: 100.0,
            add_item_prob: 0.65,
            deviation: 0.5,
        }
    }
}

/// Combinatorial auction winner determination, negated into minimization form.
pub fn generate_cauction(
    items: usize,
    bids: usize,
    seed: RngSeed,
) -> Result<MilpInstance, InstanceError> {
    generate_cauction_with(items, bids, &CauctionConfig::default(), seed)
}

pub fn generate_cauction_with(
    items: usize,
    bids: usize,
    cfg: &CauctionConfig,
    seed: RngSeed,
) -> Result<MilpInstance, InstanceError> {
    if items == 0 || bids == 0 {
        return Err(InstanceError::InvalidParameter(format!(
            "auction needs items >= 1 and bids >= 1 (got {items}, {bids})"
        )));
    }
    if !(cfg.min_value > 0.0 && cfg.max_value >= cfg.min_value)
        || !(0.0..1.0).contains(&cfg.add_item_prob)
        || !(0.0..1.0).contains(&cfg.deviation)
    {
        return Err(InstanceError::InvalidParameter(format!(
            "bad auction config {cfg:?}"
        )));
    }
    let mut rng = seed.rng();
    let values: Vec<f64> = (0..items)
        .map(|_| rng.gen_range(cfg.min_value..=cfg.max_value))
        .collect();
    // compat[a][b]: affinity of adding item b to a bundle containing a.
    let compat: Vec<Vec<f64>> = (0..items)
        .map(|a| {
            (0..items)
                .map(|b| if a == b { 0.0 } else { rng.gen::<f64>() })
                .collect()
        })
        .collect();

    let mut bundles: Vec<Vec<usize>> = Vec::with_capacity(bids);
    let mut factors = Vec::with_capacity(bids);
    for _ in 0..bids {
        let mut bundle = vec![rng.gen_range(0..items)];
        let mut in_bundle = vec![false; items];
        in_bundle[bundle[0]] = true;
        let mut weight = compat[bundle[0]].clone();
        while bundle.len() < items && rng.gen::<f64>() < cfg.add_item_prob {
            let total: f64 = (0..items)
                .filter(|&i| !in_bundle[i])
                .map(|i| weight[i])
                .sum();
            let next = if total > 0.0 {
                let mut target = rng.gen::<f64>() * total;
                let mut pick = None;
                for i in (0..items).filter(|&i| !in_bundle[i]) {
                    pick = Some(i);
                    if target < weight[i] {
                        break;
                    }
                    target -= weight[i];
                }
                pick.expect("at least one item outside the bundle")
            } else {
                let free: Vec<usize> = (0..items).filter(|&i| !in_bundle[i]).collect();
                free[rng.gen_range(0..free.len())]
            };
            in_bundle[next] = true;
            bundle.push(next);
            for (w, c) in weight.iter_mut().zip(&compat[next]) {
                *w += c;
            }
        }
        bundle.sort_unstable();
        bundles.push(bundle);
        factors.push(1.0 + rng.gen_range(-cfg.deviation..=cfg.deviation));
    }
    // Every item must appear in some bid so that each packing row is nonempty.
    let mut covered = vec![false; items];
    for bundle in &bundles {
        for &i in bundle {
            covered[i] = true;
        }
    }
    for (item, _) in covered.iter().enumerate().filter(|(_, &c)| !c) {
        let bid = rng.gen_range(0..bids);
        let bundle = &mut bundles[bid];
        bundle.push(item);
        bundle.sort_unstable();
    }

    let mut b = InstanceBuilder::new(format!("cauction-{items}x{bids}-s{}", seed.0));
    for (bundle, factor) in bundles.iter().zip(&factors) {
        let price: f64 = bundle.iter().map(|&i| values[i]).sum::<f64>() * factor;
        b.add_binary(-price);
    }
    let mut by_item: Vec<Vec<usize>> = vec![Vec::new(); items];
    for (bid, bundle) in bundles.iter().enumerate() {
        for &i in bundle {
            by_item[i].push(bid);
        }
    }
    for holders in by_item {
        b.add_le(holders.into_iter().map(|bid| (bid, 1.0)), 1.0);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_item_two_bids_conflict() {
        let inst = generate_cauction(1, 2, RngSeed(0)).unwrap();
        assert_eq!(inst.n_cons(), 1);
        assert_eq!(inst.n_vars(), 2);
        assert_eq!(
            inst.rows.row(0).collect::<Vec<_>>(),
            vec![(0, 1.0), (1, 1.0)]
        );
        assert_eq!(inst.rhs, vec![1.0]);
        assert!(inst.objective.iter().all(|&c| c < 0.0));
    }

    #[test]
    fn all_zero_is_feasible() {
        let inst = generate_cauction(12, 30, RngSeed(5)).unwrap();
        assert_eq!(inst.n_cons(), 12);
        assert!(inst.is_feasible(&vec![0.0; inst.n_vars()], 1e-12));
    }
}
