use rand_distr::{Distribution, StandardNormal};

use crate::attacks::{rng_for, Bounds};
use crate::error::Result;
use crate::oracle::Classifier;
use crate::tensor::{argmax, Tensor};

pub const RSV_DEFAULT_K: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RsvVerdict {
    /// Majority label over the noisy copies.
    pub label: usize,
    /// The majority disagrees with the prediction on `x`.
    pub is_ae: bool,
}

/// `k` seeded Gaussian directions, each rescaled to L2 norm `p`.
pub fn rsv_noise(shape: &[usize], p: f64, k: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = rng_for(seed);
    let len: usize = shape.iter().product();
    (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let s = if n > 0.0 { p / n } else { 0.0 };
            Tensor::from_parts(shape.to_vec(), v.into_iter().map(|a| a * s).collect())
        })
        .collect()
}

/// Majority vote of the model over `x` plus each noise vector (clipped to
/// the box). Ties go to the lowest label.
pub fn rsv_rectify<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    p: f64,
    k: usize,
    seed: u64,
    bounds: Bounds,
) -> Result<RsvVerdict> {
    let mut votes = vec![0.0; model.num_classes()];
    for noise in rsv_noise(x.shape(), p, k.max(1), seed) {
        votes[model.predict(&bounds.clip(&x.add(&noise)))?] += 1.0;
    }
    let label = argmax(&votes);
    Ok(RsvVerdict { label, is_ae: label != model.predict(x)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::testing::{canonical, point};

    #[test]
    fn noise_has_exact_norm() {
        for v in rsv_noise(&[3, 4], 0.7, 25, 11) {
            assert!((v.l2_norm() - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_radius_keeps_the_prediction() {
        let m = canonical();
        let v = rsv_rectify(&m, &point(-0.2, 0.5), 0.0, 25, 1, Bounds::new(-1.0, 1.0)).unwrap();
        assert_eq!(v, RsvVerdict { label: 1, is_ae: false });
    }

    #[test]
    fn single_copy_decides() {
        let m = canonical();
        let x = point(0.01, 0.5);
        let noise = &rsv_noise(&[2], 0.5, 1, 4)[0];
        let expected = m.predict(&Bounds::new(-1.0, 1.0).clip(&x.add(noise))).unwrap();
        let v = rsv_rectify(&m, &x, 0.5, 1, 4, Bounds::new(-1.0, 1.0)).unwrap();
        assert_eq!(v.label, expected);
        assert_eq!(v.is_ae, expected != 0);
    }
}
