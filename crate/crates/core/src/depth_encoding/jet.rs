use std::sync::OnceLock;

use super::GrayscaleDepth;

#[derive(Debug, Clone, PartialEq)]
pub struct JetDepth {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[u8; 3]>,
}

impl JetDepth {
    pub fn interleaved(&self) -> Vec<u8> {
        self.rgb.iter().flatten().copied().collect()
    }
}

/// The 256-entry piecewise-linear jet map.
///
/// Channel value is `255 * clamp(1.5 - |4u - s|, 0, 1)` with `u = t / 255` and
/// `s = 3, 2, 1` for red, green, blue. Multiplying through by 255 gives
/// `382.5 - |4t - 255 s|`, so the table is built in integer halves and the
/// half-up rounding is exact.
pub fn jet_table() -> &'static [[u8; 3]; 256] {
    static TABLE: OnceLock<[[u8; 3]; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0u8; 3]; 256];
        for (t, entry) in table.iter_mut().enumerate() {
            let t = t as i64;
            for (c, s) in [3i64, 2, 1].into_iter().enumerate() {
                // twice the scaled channel value
                let twice = 765 - 2 * (4 * t - 255 * s).abs();
                let rounded = (twice + 1).div_euclid(2);
                entry[c] = rounded.clamp(0, 255) as u8;
            }
        }
        table
    })
}

/// Indexes the jet table with the quantized grayscale level.
pub fn jet_encode(gray: &GrayscaleDepth) -> JetDepth {
    let table = jet_table();
    JetDepth {
        width: gray.width,
        height: gray.height,
        rgb: gray.quantized.iter().map(|&i| table[usize::from(i)]).collect(),
    }
}
