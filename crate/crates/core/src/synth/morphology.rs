//! Binary morphology with a 3x3 square element. Pixels outside the image are
//! ignored rather than treated as background.

fn pass(mask: &[bool], w: usize, h: usize, grow: bool) -> Vec<bool> {
    // Separable: rows first, then columns.
    let pick = |a: bool, b: bool| if grow { a || b } else { a && b };
    let mut rows = mask.to_vec();
    for r in 0..h {
        for c in 0..w {
            let mut v = mask[r * w + c];
            if c > 0 {
                v = pick(v, mask[r * w + c - 1]);
            }
            if c + 1 < w {
                v = pick(v, mask[r * w + c + 1]);
            }
            rows[r * w + c] = v;
        }
    }
    let mut out = rows.clone();
    for r in 0..h {
        for c in 0..w {
            let mut v = rows[r * w + c];
            if r > 0 {
                v = pick(v, rows[(r - 1) * w + c]);
            }
            if r + 1 < h {
                v = pick(v, rows[(r + 1) * w + c]);
            }
            out[r * w + c] = v;
        }
    }
    out
}

pub(crate) fn dilate(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    pass(mask, w, h, true)
}

pub(crate) fn erode(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    pass(mask, w, h, false)
}

pub(crate) fn close(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    erode(&dilate(mask, w, h), w, h)
}

/// Grows the mask by `radius` pixels when positive, shrinks it when negative.
pub(crate) fn offset(mask: &[bool], w: usize, h: usize, radius: i32) -> Vec<bool> {
    let mut m = mask.to_vec();
    for _ in 0..radius.unsigned_abs() {
        m = if radius > 0 { dilate(&m, w, h) } else { erode(&m, w, h) };
    }
    m
}
