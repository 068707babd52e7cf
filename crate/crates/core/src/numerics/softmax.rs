//! Masked softmax with max-subtraction, and its backward pass.

/// Softmax over the unmasked entries of `logits`; masked entries get weight 0.
///
/// Returns all zeros when every entry is masked. The maximum unmasked logit is
/// subtracted before exponentiation, so the normalizer is always >= 1.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    assert_eq!(logits.len(), mask.len(), "logits/mask length mismatch");
    let mut out = vec![0.0; logits.len()];
    let mut mx = f64::NEG_INFINITY;
    for (z, &m) in logits.iter().zip(mask) {
        if m && *z > mx {
            mx = *z;
        }
    }
    if mx == f64::NEG_INFINITY {
        return out; // fully masked
    }
    let mut sum = 0.0;
    for i in 0..logits.len() {
        if mask[i] {
            let w = (logits[i] - mx).exp();
            out[i] = w;
            sum += w;
        }
    }
    for w in out.iter_mut() {
        *w /= sum;
    }
    out
}

/// Backward of [`masked_softmax`]: given weights `a` and upstream `d_a`,
/// returns `d_logits`. Masked slots get zero gradient.
pub fn masked_softmax_backward(a: &[f64], mask: &[bool], d_a: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), mask.len());
    assert_eq!(a.len(), d_a.len());
    let mut inner = 0.0;
    for i in 0..a.len() {
        if mask[i] {
            inner += a[i] * d_a[i];
        }
    }
    let mut d_z = vec![0.0; a.len()];
    for i in 0..a.len() {
        if mask[i] {
            d_z[i] = a[i] * (d_a[i] - inner);
        }
    }
    d_z
}
