use crate::error::{Error, Result};
use crate::plane::Plane;

/// Box-filter downscale by `level`. Edge blocks average the samples they
/// actually cover; means round half away from zero.
pub fn mignify(plane: &Plane, level: u32) -> Result<Plane> {
    if level == 0 || !level.is_power_of_two() {
        return Err(Error::config(format!(
            "mip level {level} is not a power of two"
        )));
    }
    if level == 1 {
        return Ok(plane.clone());
    }
    let l = level as usize;
    let (h, w) = (plane.height(), plane.width());
    let (oh, ow) = (h.div_ceil(l), w.div_ceil(l));
    let mut sums = vec![0u64; oh * ow];
    for y in 0..h {
        let out_row = &mut sums[(y / l) * ow..(y / l + 1) * ow];
        for (x, &v) in plane.row(y).iter().enumerate() {
            out_row[x / l] += v as u64;
        }
    }
    let data = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let (by, bx) = (i / ow, i % ow);
            let n = ((h - by * l).min(l) * (w - bx * l).min(l)) as u64;
            ((2 * s + n) / (2 * n)) as u16
        })
        .collect();
    Plane::new(oh, ow, data)
}
