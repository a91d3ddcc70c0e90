//! Standard 8x8 zigzag scan order.

use crate::error::{Error, Result};

/// Maps a zigzag index to its natural (row-major) position.
pub const ZIGZAG_TO_NATURAL: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20,
    13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59,
    52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Row and column of zigzag position `k`.
pub fn zigzag_index(k: usize) -> Result<(usize, usize)> {
    if k > 63 {
        return Err(Error::Argument(format!(
            "zigzag index {k} out of range 0..=63"
        )));
    }
    let n = ZIGZAG_TO_NATURAL[k];
    Ok((n / 8, n % 8))
}
