//! Quality-scaled quantization tables.

use super::zigzag::ZIGZAG_TO_NATURAL;
use crate::error::{Error, Result};

/// Reference luminance table, row-major (ITU-T T.81 Annex K.1).
const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Reference chrominance table, row-major (ITU-T T.81 Annex K.1).
const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Luma and chroma quantization tables for one quality setting,
/// stored in zigzag order with entries in [1, 255].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualityTables {
    pub luma: [u16; 64],
    pub chroma: [u16; 64],
}

/// Scales the reference tables for a quality in 1..=100 (1 lowest, 100 highest):
/// scale = 5000/quality below 50, else 200 - 2*quality, with each entry mapped
/// to clamp(floor((entry*scale + 50) / 100), 1, 255).
pub fn quality_to_tables(quality: u32) -> Result<QualityTables> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Argument(format!(
            "quality {quality} out of range 1..=100"
        )));
    }
    let scale = if quality < 50 {
        5000 / quality
    } else {
        200 - 2 * quality
    };
    let scale_entry = |e: u16| ((e as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    let mut luma = [0u16; 64];
    let mut chroma = [0u16; 64];
    for (zz, &nat) in ZIGZAG_TO_NATURAL.iter().enumerate() {
        luma[zz] = scale_entry(BASE_LUMA[nat]);
        chroma[zz] = scale_entry(BASE_CHROMA[nat]);
    }
    Ok(QualityTables { luma, chroma })
}
