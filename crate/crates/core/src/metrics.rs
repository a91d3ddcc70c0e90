//! Quality measurement: mean squared error and PSNR over RGB rasters.

use crate::codec::RgbImage;
use crate::error::{Error, Result};

/// PSNR measurement. `psnr_db` is `None` when the inputs are identical
/// (zero error has no finite ratio).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrReport {
    pub mse: f64,
    pub psnr_db: Option<f64>,
}

fn check_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Argument(format!(
            "image dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean squared error over all samples of both images (three channels
/// weighted equally).
pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

/// PSNR against the 8-bit peak value 255.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<PsnrReport> {
    let mse = mse(a, b)?;
    let psnr_db = if mse == 0.0 {
        None
    } else {
        Some(10.0 * (255.0 * 255.0 / mse).log10())
    };
    Ok(PsnrReport { mse, psnr_db })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(width: u32, height: u32, value: u8) -> RgbImage {
        RgbImage::new(
            width,
            height,
            vec![value; 3 * width as usize * height as usize],
        )
        .unwrap()
    }

    #[test]
    fn identical_images_have_no_finite_psnr() {
        let a = flat(4, 3, 77);
        let report = psnr(&a, &a).unwrap();
        assert_eq!(report.mse, 0.0);
        assert_eq!(report.psnr_db, None);
    }

    #[test]
    fn full_scale_difference_is_zero_db() {
        let a = flat(4, 4, 0);
        let b = flat(4, 4, 255);
        let report = psnr(&a, &b).unwrap();
        assert_eq!(report.mse, 255.0 * 255.0);
        assert!(report.psnr_db.unwrap().abs() < 1e-12);
    }

    #[test]
    fn unit_difference_reference_value() {
        let a = flat(8, 8, 100);
        let b = flat(8, 8, 101);
        let report = psnr(&a, &b).unwrap();
        assert_eq!(report.mse, 1.0);
        assert!((report.psnr_db.unwrap() - 48.13).abs() < 0.01);
    }

    #[test]
    fn single_channel_difference() {
        let a = RgbImage::new(1, 1, vec![0, 0, 0]).unwrap();
        let b = RgbImage::new(1, 1, vec![3, 0, 0]).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 3.0);
    }

    #[test]
    fn psnr_is_symmetric() {
        let a = flat(5, 2, 10);
        let b = flat(5, 2, 60);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let a = flat(4, 4, 0);
        let b = flat(4, 5, 0);
        assert!(matches!(mse(&a, &b), Err(Error::Argument(_))));
        assert!(matches!(psnr(&a, &b), Err(Error::Argument(_))));
    }
}
