use rand::seq::SliceRandom;
use rand::Rng;

use super::{InstanceBuilder, InstanceError, MilpInstance, RngSeed};

/// Set covering: `min c'x` with every row covered by at least one chosen column.
///
/// Membership of column `j` in row `i` is Bernoulli(`density`). A repair pass then
/// guarantees at least two covering columns per row and at least one row per column.
pub fn generate_set_cover(
    rows: usize,
    cols: usize,
    density: f64,
    max_cost: u32,
    seed: RngSeed,
) -> Result<MilpInstance, InstanceError> {
    if rows == 0 || cols < rows {
        return Err(InstanceError::InvalidParameter(format!(
            "set cover needs rows >= 1 and cols >= rows (got {rows}x{cols})"
        )));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(InstanceError::InvalidParameter(format!(
            "density {density} outside (0, 1]"
        )));
    }
    if max_cost == 0 {
        return Err(InstanceError::InvalidParameter(
            "max_cost must be positive".into(),
        ));
    }
    if cols < 2 {
        return Err(InstanceError::InfeasibleConstruction(
            "every row needs two covering columns but only one column exists".into(),
        ));
    }
    let mut rng = seed.rng();
    let mut member = vec![vec![false; cols]; rows];
    for row in member.iter_mut() {
        for cell in row.iter_mut() {
            *cell = rng.gen_bool(density);
        }
    }
    let all_cols: Vec<usize> = (0..cols).collect();
    for row in member.iter_mut() {
        let mut count = row.iter().filter(|&&b| b).count();
        if count < 2 {
            let mut order = all_cols.clone();
            order.shuffle(&mut rng);
            for j in order {
                if count >= 2 {
                    break;
                }
                if !row[j] {
                    row[j] = true;
                    count += 1;
                }
            }
        }
    }
    for j in 0..cols {
        if !member.iter().any(|row| row[j]) {
            let i = rng.gen_range(0..rows);
            member[i][j] = true;
        }
    }
    let mut b = InstanceBuilder::new(format!("setcover-{rows}x{cols}-d{density}-s{}", seed.0));
    for _ in 0..cols {
        let cost = rng.gen_range(1..=max_cost) as f64;
        b.add_binary(cost);
    }
    for row in &member {
        let entries = row
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(j, _)| (j, -1.0));
        b.add_le(entries, -1.0);
    }
    b.build()
}
