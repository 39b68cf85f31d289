use alloc::vec::Vec;

/// Separable bilinear resize of an `h × w` field with corner-aligned sampling:
/// output pixel `i` samples source coordinate `i·(h−1)/(h'−1)`.
pub fn resize_bilinear(
    field: &[f32],
    (h, w): (usize, usize),
    (th, tw): (usize, usize),
) -> Vec<f32> {
    assert_eq!(field.len(), h * w, "field does not match {h}x{w}");
    assert!(
        h > 0 && w > 0 && th > 0 && tw > 0,
        "extents must be positive"
    );
    if (h, w) == (th, tw) {
        return field.to_vec();
    }
    let rows = taps(h, th);
    let cols = taps(w, tw);
    let mut out = Vec::with_capacity(th * tw);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let at = |r: usize, c: usize| field[r * w + c] as f64;
            let top = at(r0, c0) * (1.0 - fc) + at(r0, c1) * fc;
            let bottom = at(r1, c0) * (1.0 - fc) + at(r1, c1) * fc;
            out.push((top * (1.0 - fr) + bottom * fr) as f32);
        }
    }
    out
}

/// `(lower index, upper index, weight of upper)` per output position.
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if dst == 1 || src == 1 {
                return (0, 0, 0.0);
            }
            // exact rational position i·(src−1)/(dst−1)
            let num = i * (src - 1);
            let den = dst - 1;
            let lo = num / den;
            let frac = (num % den) as f64 / den as f64;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, frac)
        })
        .collect()
}
