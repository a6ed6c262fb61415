use rand::seq::index;

use crate::attacks::{rng_for, Bounds};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Separable Gaussian filter over the last two axes (per channel for
/// `(c, h, w)` inputs, along the only axis for vectors). Kernel radius is
/// `ceil(3 sigma)`; borders repeat the edge value.
pub fn gaussian_blur(x: &Tensor, sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("blur sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let kernel: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let shape = x.shape();
    let (planes, h, w) = match shape.len() {
        0 => return Ok(x.clone()),
        1 => (1, 1, shape[0]),
        n => (shape[..n - 2].iter().product(), shape[n - 2], shape[n - 1]),
    };
    let conv = |src: &[f64], len: usize, stride: usize, dst: &mut [f64]| {
        for i in 0..len {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let p = (i as isize + j as isize - radius).clamp(0, len as isize - 1) as usize;
                acc += k * src[p * stride];
            }
            dst[i * stride] = acc;
        }
    };
    let mut data = x.data().to_vec();
    let mut tmp = data.clone();
    for plane in 0..planes {
        let base = plane * h * w;
        for r in 0..h {
            let o = base + r * w;
            conv(&data[o..o + w], w, 1, &mut tmp[o..o + w]);
        }
        if h > 1 {
            for c in 0..w {
                let o = base + c;
                let end = base + h * w;
                conv(&tmp[o..end], h, w, &mut data[o..end]);
            }
        } else {
            data[base..base + w].copy_from_slice(&tmp[base..base + w]);
        }
    }
    Ok(x.with_data(data))
}

/// Sets `round(fraction * pixels)` random pixel positions to `bounds.low`
/// in every channel.
pub fn random_pixel_replacement(x: &Tensor, fraction: f64, seed: u64, bounds: Bounds) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("replacement fraction must lie in [0, 1], got {fraction}")));
    }
    let shape = x.shape();
    let (channels, pixels) = match shape.len() {
        0..=2 => (1, x.len()),
        _ => (shape[0], x.len() / shape[0]),
    };
    let count = (fraction * pixels as f64).round() as usize;
    let mut rng = rng_for(seed);
    let mut data = x.data().to_vec();
    for p in index::sample(&mut rng, pixels, count.min(pixels)).iter() {
        for c in 0..channels {
            data[c * pixels + p] = bounds.low;
        }
    }
    Ok(x.with_data(data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> Tensor {
        Tensor::new(vec![1, 4, 5], (0..20).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap()
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let x = image();
        let b = gaussian_blur(&x, 1e-3).unwrap();
        assert!(b.sub(&x).linf_norm() < 1e-9);
    }

    #[test]
    fn blur_preserves_constants_and_mass_direction() {
        let c = Tensor::filled(vec![2, 6, 6], 0.4);
        assert!(gaussian_blur(&c, 1.3).unwrap().sub(&c).linf_norm() < 1e-12);
        let mut spike = vec![0.0; 49];
        spike[24] = 1.0;
        let b = gaussian_blur(&Tensor::new(vec![1, 7, 7], spike).unwrap(), 0.8).unwrap();
        assert_eq!(b.argmax(), 24);
        assert!((b.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gaussian_blur(&c, 0.0).is_err());
    }

    #[test]
    fn separable_matches_direct_2d() {
        let x = image();
        let sigma = 0.9f64;
        let r = (3.0 * sigma).ceil() as isize;
        let w = |i: isize| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-r..=r).map(w).sum();
        let b = gaussian_blur(&x, sigma).unwrap();
        for i in 0..4isize {
            for j in 0..5isize {
                let mut acc = 0.0;
                for di in -r..=r {
                    for dj in -r..=r {
                        let (p, q) = ((i + di).clamp(0, 3), (j + dj).clamp(0, 4));
                        acc += w(di) * w(dj) / (norm * norm) * x.data()[(p * 5 + q) as usize];
                    }
                }
                assert!((acc - b.data()[(i * 5 + j) as usize]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn replacement_fraction() {
        let x = Tensor::filled(vec![3, 4, 4], 0.7);
        let all = random_pixel_replacement(&x, 1.0, 0, Bounds::default()).unwrap();
        assert!(all.data().iter().all(|&v| v == 0.0));
        let none = random_pixel_replacement(&x, 0.0, 0, Bounds::default()).unwrap();
        assert_eq!(none, x);
        let quarter = random_pixel_replacement(&x, 0.25, 9, Bounds::default()).unwrap();
        assert_eq!(quarter.data().iter().filter(|&&v| v == 0.0).count(), 3 * 4);
        assert!(random_pixel_replacement(&x, 1.5, 0, Bounds::default()).is_err());
    }
}
