//! Zhang-Suen two-subiteration thinning.
//!
//! Both deletion rules depend only on the 8-neighbourhood, so they are
//! tabulated once per subiteration over all 256 neighbour patterns. Bits
//! follow the clockwise order P2 (north) .. P9 (north-west).

use std::sync::OnceLock;

use super::MorphError;
use crate::imgproc::MaskImage;

const RING: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn deletable(pattern: u8, first: bool) -> bool {
    let p = |i: usize| (pattern >> i) & 1 == 1;
    let b = pattern.count_ones();
    if !(2..=6).contains(&b) {
        return false;
    }
    let transitions = (0..8).filter(|&i| !p(i) && p((i + 1) % 8)).count();
    if transitions != 1 {
        return false;
    }
    // P2 P4 P6 / P4 P6 P8 on the first pass, P2 P4 P8 / P2 P6 P8 on the second
    let (n, e, s, w) = (p(0), p(2), p(4), p(6));
    if first {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

fn tables() -> &'static [[bool; 256]; 2] {
    static TABLES: OnceLock<[[bool; 256]; 2]> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut t = [[false; 256]; 2];
        for pat in 0..256 {
            t[0][pat] = deletable(pat as u8, true);
            t[1][pat] = deletable(pat as u8, false);
        }
        t
    })
}

/// Thins the mask to a one-pixel-wide skeleton. Spurs are kept.
pub fn thin(mask: &MaskImage) -> MaskImage {
    let (w, h) = (mask.width(), mask.height());
    let (pw, ph) = (w + 2, h + 2);
    let mut grid = vec![0u8; pw * ph];
    for (x, y) in mask.foreground() {
        grid[(y + 1) * pw + x + 1] = 1;
    }
    let offsets: Vec<isize> = RING.iter().map(|&(dx, dy)| dy * pw as isize + dx).collect();
    let tabs = tables();
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for tab in tabs.iter() {
            to_clear.clear();
            for y in 1..=h {
                for x in 1..=w {
                    let i = y * pw + x;
                    if grid[i] == 0 {
                        continue;
                    }
                    let mut pat = 0u8;
                    for (bit, &off) in offsets.iter().enumerate() {
                        pat |= grid[(i as isize + off) as usize] << bit;
                    }
                    if tab[pat as usize] {
                        to_clear.push(i);
                    }
                }
            }
            changed |= !to_clear.is_empty();
            for &i in &to_clear {
                grid[i] = 0;
            }
        }
        if !changed {
            break;
        }
    }
    MaskImage::from_fn(w, h, |x, y| grid[(y + 1) * pw + x + 1] == 1).expect("dimensions unchanged")
}

/// Number of skeleton pixels.
pub fn skeletonize(mask: &MaskImage) -> Result<u32, MorphError> {
    if mask.is_empty() {
        return Err(MorphError::EmptyMask);
    }
    Ok(thin(mask).count() as u32)
}
