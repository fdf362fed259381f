use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dist2, PointCloud};
use crate::{Error, Result};

/// Furthest point sampling. The first index is drawn from a ChaCha8 stream
/// seeded with `seed`; every later index maximizes the distance to the
/// already selected set, ties to the lowest index.
pub fn furthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_count(cloud, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..cloud.len());
    furthest_point_sample_from(cloud, k, start)
}

/// Furthest point sampling from an explicit start index.
pub fn furthest_point_sample_from(cloud: &PointCloud, k: usize, start: usize) -> Result<Vec<usize>> {
    check_count(cloud, k)?;
    let pts = cloud.points();
    if start >= pts.len() {
        return Err(Error::invalid(format!("start index {start} out of range")));
    }
    let mut selected = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; pts.len()];
    let mut taken = vec![false; pts.len()];
    let mut current = start;
    for _ in 0..k {
        selected.push(current);
        taken[current] = true;
        let c = pts[current];
        let mut next = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let d = dist2(*p, c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if !taken[i] && min_d[i] > far {
                far = min_d[i];
                next = i;
            }
        }
        current = next;
    }
    Ok(selected)
}

fn check_count(cloud: &PointCloud, k: usize) -> Result<()> {
    if k == 0 || k > cloud.len() {
        return Err(Error::invalid(format!(
            "cannot sample {k} points from a cloud of {}",
            cloud.len()
        )));
    }
    Ok(())
}
