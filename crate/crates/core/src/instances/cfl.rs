use rand::Rng;

use super::{InstanceBuilder, InstanceError, MilpInstance, RngSeed};

/// Distribution constants of the facility-location generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflConfig {
    pub demand_min: u32,
    pub demand_max: u32,
    pub capacity_min: f64,
    pub capacity_max: f64,
    pub fixed_cost_min: f64,
    pub fixed_cost_max: f64,
    /// Transport cost per unit of demand per unit of distance.
    pub transport_scale: f64,
}

impl Default for CflConfig {
    fn default() -> Self {
        Self {
            demand_min: 5,
            demand_max: 35,
            capacity_min: 10.0,
            capacity_max: 160.0,
            fixed_cost_min: 100.0,
            fixed_cost_max: 110.0,
            transport_scale: 10.0,
        }
    }
}

/// Index layout of a generated facility-location instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CflLayout {
    pub customers: usize,
    pub facilities: usize,
}

impl CflLayout {
    /// Binary "facility k is open" variable.
    pub fn open(&self, k: usize) -> usize {
        k
    }

    /// Continuous fraction of customer j's demand served by facility k.
    pub fn serve(&self, j: usize, k: usize) -> usize {
        self.facilities + j * self.facilities + k
    }
}

/// Capacitated facility location.
///
/// Variables: `y_k` binary (open facility k), `x_jk` in `[0,1]` (share of customer
/// j served by k). Rows: demand equalities as `<=` pairs, capacities
/// `sum_j d_j x_jk - cap_k y_k <= 0`, and links `x_jk - y_k <= 0`.
pub fn generate_cfl(
    customers: usize,
    facilities: usize,
    ratio: f64,
    seed: RngSeed,
) -> Result<MilpInstance, InstanceError> {
    generate_cfl_with(customers, facilities, ratio, &CflConfig::default(), seed)
}

pub fn generate_cfl_with(
    customers: usize,
    facilities: usize,
    ratio: f64,
    cfg: &CflConfig,
    seed: RngSeed,
) -> Result<MilpInstance, InstanceError> {
    if customers == 0 || facilities == 0 || !(ratio > 0.0 && ratio.is_finite()) {
        return Err(InstanceError::InvalidParameter(format!(
            "cfl needs customers, facilities >= 1 and ratio > 0 (got {customers}, {facilities}, {ratio})"
        )));
    }
    let mut rng = seed.rng();
    let cust_xy: Vec<(f64, f64)> = (0..customers).map(|_| (rng.gen(), rng.gen())).collect();
    let fac_xy: Vec<(f64, f64)> = (0..facilities).map(|_| (rng.gen(), rng.gen())).collect();
    let demands: Vec<f64> = (0..customers)
        .map(|_| rng.gen_range(cfg.demand_min..=cfg.demand_max) as f64)
        .collect();
    let mut capacities: Vec<f64> = (0..facilities)
        .map(|_| rng.gen_range(cfg.capacity_min..=cfg.capacity_max))
        .collect();
    let scale = ratio * demands.iter().sum::<f64>() / capacities.iter().sum::<f64>();
    for c in capacities.iter_mut() {
        *c *= scale;
    }
    let fixed: Vec<f64> = capacities
        .iter()
        .map(|c| rng.gen_range(cfg.fixed_cost_min..=cfg.fixed_cost_max) * c.sqrt())
        .collect();

    let layout = CflLayout {
        customers,
        facilities,
    };
    let mut b = InstanceBuilder::new(format!("cfl-{customers}x{facilities}-r{ratio}-s{}", seed.0));
    for &f in &fixed {
        b.add_binary(f);
    }
    for (j, &(cx, cy)) in cust_xy.iter().enumerate() {
        for &(fx, fy) in &fac_xy {
            let dist = ((cx - fx).powi(2) + (cy - fy).powi(2)).sqrt();
            b.add_var(cfg.transport_scale * dist * demands[j], 0.0, 1.0, false);
        }
    }
    for j in 0..customers {
        b.add_eq((0..facilities).map(|k| (layout.serve(j, k), 1.0)), 1.0);
    }
    for k in 0..facilities {
        let serve = (0..customers).map(|j| (layout.serve(j, k), demands[j]));
        b.add_le(serve.chain([(layout.open(k), -capacities[k])]), 0.0);
    }
    for j in 0..customers {
        for k in 0..facilities {
            b.add_le([(layout.serve(j, k), 1.0), (layout.open(k), -1.0)], 0.0);
        }
    }
    b.build()
}
