//! Soft-thresholding operators (the proximal maps of the ℓ₁ and ℓ_{2,1}
//! norms) and group-partition construction.

use crate::error::{invalid, Error, Result};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};

/// Disjoint index groups covering `0..dim` (flattened row-major positions).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    dim: usize,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        let mut seen = vec![false; dim];
        for (gi, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidPartition(format!("group {gi} is empty")));
            }
            for &i in g {
                if i >= dim {
                    return Err(Error::InvalidPartition(format!(
                        "index {i} in group {gi} is outside 0..{dim}"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidPartition(format!(
                        "index {i} appears in more than one group"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!(
                "index {missing} is not covered by any group"
            )));
        }
        Ok(Self { groups, dim })
    }

    /// One group per coordinate.
    pub fn singletons(dim: usize) -> Self {
        Self {
            groups: (0..dim).map(|i| vec![i]).collect(),
            dim,
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub(crate) fn check_dimension(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::InvalidPartition(format!(
                "partition covers {} indices but the tensor has {d}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Entrywise shrinkage: `0` where `|v_i| ≤ alpha`, else `v_i − sign(v_i)·alpha`.
pub fn soft_threshold(v: &Tensor, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    Ok(v.map(|x| {
        if x.abs() <= alpha {
            0.0
        } else {
            x - alpha.copysign(x)
        }
    }))
}

/// Groupwise shrinkage: each group is zeroed when its ℓ₂ norm is at most
/// `alpha`, otherwise scaled by `1 − alpha/‖v_S‖₂`.
pub fn group_soft_threshold(v: &Tensor, alpha: f64, partition: &GroupPartition) -> Result<Tensor> {
    check_alpha(alpha)?;
    partition.check_dimension(v.len())?;
    let src = v.data();
    let mut out = vec![0.0; src.len()];
    for group in partition.groups() {
        let norm = group.iter().map(|&i| src[i] * src[i]).sum::<f64>().sqrt();
        if norm > alpha {
            let factor = 1.0 - alpha / norm;
            for &i in group {
                out[i] = factor * src[i];
            }
        }
    }
    Ok(v.with_data(out))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return invalid(format!("threshold must be finite and >= 0, got {alpha}"));
    }
    Ok(())
}

/// Square `block × block` spatial tiles over a `channels × height × width`
/// (CHW) layout. Every channel of a pixel lands in that pixel's tile; tiles
/// on the right and bottom edges may be smaller.
pub fn grid_partition(
    height: usize,
    width: usize,
    channels: usize,
    block: usize,
) -> Result<GroupPartition> {
    if block == 0 {
        return invalid("group block size must be >= 1");
    }
    if height == 0 || width == 0 || channels == 0 {
        return invalid(format!(
            "image dimensions must be positive, got {channels}x{height}x{width}"
        ));
    }
    if block >= height && block >= width {
        return invalid(format!(
            "block {block} covers the whole {height}x{width} image in a single group"
        ));
    }
    let plane = height * width;
    let mut groups = Vec::new();
    for ty in (0..height).step_by(block) {
        for tx in (0..width).step_by(block) {
            let mut g = Vec::new();
            for c in 0..channels {
                for y in ty..(ty + block).min(height) {
                    for x in tx..(tx + block).min(width) {
                        g.push(c * plane + y * width + x);
                    }
                }
            }
            groups.push(g);
        }
    }
    GroupPartition::new(groups, channels * plane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_sample, SeededRng};
    use proptest::prelude::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn st_examples() {
        let v = t(&[2.0, -0.5, -3.0]);
        assert_eq!(soft_threshold(&v, 1.0).unwrap().data(), &[1.0, 0.0, -2.0]);
        assert_eq!(soft_threshold(&v, 0.0).unwrap(), v);
        // boundary maps to zero
        assert_eq!(soft_threshold(&t(&[1.0, -1.0]), 1.0).unwrap().data(), &[0.0, 0.0]);
        assert!(soft_threshold(&v, -0.1).is_err());
    }

    #[test]
    fn st_matches_grid_search_prox() {
        // argmin_u alpha|u| + (u - v)^2 / 2 over u in [-10, 10], step 1e-4
        let step = 1e-4;
        let n = (20.0 / step) as i64;
        for &(v, alpha) in &[(2.3, 0.7), (-1.2, 0.5), (0.4, 0.9), (-7.5, 2.0), (0.0, 0.3)] {
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=n {
                let u = -10.0 + k as f64 * step;
                let obj = alpha * u.abs() + 0.5 * (u - v) * (u - v);
                if obj < best.0 {
                    best = (obj, u);
                }
            }
            let st = soft_threshold(&t(&[v]), alpha).unwrap().data()[0];
            assert!((st - best.1).abs() <= step, "v={v} alpha={alpha}: {st} vs {}", best.1);
        }
    }

    #[test]
    fn gst_examples() {
        let p = GroupPartition::new(vec![vec![0, 1]], 2).unwrap();
        assert_eq!(
            group_soft_threshold(&t(&[3.0, 4.0]), 2.5, &p).unwrap().data(),
            &[1.5, 2.0]
        );
        assert_eq!(
            group_soft_threshold(&t(&[1.0, 1.0]), 2.0, &p).unwrap().data(),
            &[0.0, 0.0]
        );
        let v = t(&[0.3, -2.0, 1.5, -0.1]);
        assert_eq!(
            group_soft_threshold(&v, 0.5, &GroupPartition::singletons(4)).unwrap(),
            soft_threshold(&v, 0.5).unwrap()
        );
        assert!(group_soft_threshold(&v, 0.5, &p).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(GroupPartition::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(GroupPartition::new(vec![vec![0, 1]], 3).is_err());
        assert!(GroupPartition::new(vec![vec![0, 5]], 2).is_err());
        assert!(GroupPartition::new(vec![vec![], vec![0]], 1).is_err());
    }

    #[test]
    fn grid_partition_examples() {
        let p = grid_partition(8, 8, 1, 4).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.groups().iter().all(|g| g.len() == 16));
        assert!(grid_partition(8, 8, 1, 8).is_err());
        assert!(grid_partition(8, 8, 1, 0).is_err());

        let p = grid_partition(6, 6, 1, 4).unwrap();
        let sizes: Vec<_> = p.groups().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![16, 8, 8, 4]);

        // channels share the pixel's group
        let p = grid_partition(4, 4, 3, 2).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.groups()[0].contains(&0) && p.groups()[0].contains(&16) && p.groups()[0].contains(&37));
    }

    fn random_pair(seed: u64, d: usize) -> (Tensor, Tensor) {
        let mut rng = SeededRng::new(seed);
        (
            gaussian_sample(&mut rng, &[d], 2.0).unwrap(),
            gaussian_sample(&mut rng, &[d], 2.0).unwrap(),
        )
    }

    proptest! {
        #[test]
        fn operators_are_nonexpansive(seed in any::<u64>(), alpha in 0.0f64..3.0) {
            let (a, b) = random_pair(seed, 12);
            let p = grid_partition(3, 4, 1, 2).unwrap();
            let gap = a.distance(&b);
            let st = soft_threshold(&a, alpha).unwrap().distance(&soft_threshold(&b, alpha).unwrap());
            let gst = group_soft_threshold(&a, alpha, &p).unwrap()
                .distance(&group_soft_threshold(&b, alpha, &p).unwrap());
            prop_assert!(st <= gap + 1e-12);
            prop_assert!(gst <= gap + 1e-12);
        }

        #[test]
        fn shrinkage_and_group_alignment(seed in any::<u64>(), alpha in 0.0f64..3.0) {
            let (v, _) = random_pair(seed, 12);
            let p = grid_partition(3, 4, 1, 2).unwrap();
            let st = soft_threshold(&v, alpha).unwrap();
            let gst = group_soft_threshold(&v, alpha, &p).unwrap();
            prop_assert!(st.norm() <= v.norm() + 1e-12);
            prop_assert!(gst.norm() <= v.norm() + 1e-12);
            for (o, i) in st.data().iter().zip(v.data()) {
                prop_assert!(o.signum() * i.signum() >= 0.0 || *o == 0.0);
            }
            for g in p.groups() {
                let zeros = g.iter().filter(|&&i| gst.data()[i] == 0.0).count();
                prop_assert!(zeros == 0 || zeros == g.len());
            }
            let big = soft_threshold(&v, v.max_abs()).unwrap();
            prop_assert_eq!(big.count_nonzero(), 0);
        }
    }
}
