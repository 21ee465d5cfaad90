use crate::{Error, Result};

/// Max-subtracted softmax of `v / temperature`.
pub fn softmax(v: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("softmax temperature must be positive, got {temperature}")));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("softmax input {i} is not finite")));
    }
    let mut out: Vec<f64> = v.iter().map(|x| x / temperature).collect();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unit-temperature softmax without validation, for inner loops.
#[inline]
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Vector-Jacobian product of softmax: given `p = softmax(z)` and `dL/dp`,
/// writes `dL/dz` into `out`.
#[inline]
pub fn softmax_backward(p: &[f64], dp: &[f64], out: &mut [f64]) {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    for ((o, &pi), &di) in out.iter_mut().zip(p).zip(dp) {
        *o = pi * (di - dot);
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(i) = p.iter().position(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::invalid(format!("probability {i} is negative or not finite: {}", p[i])));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(-p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
}

/// Entropy divided by `ln n`, in `[0, 1]`. Zero for `n <= 1`.
pub fn normalized_entropy(p: &[f64]) -> Result<f64> {
    let h = entropy(p)?;
    Ok(if p.len() <= 1 { 0.0 } else { (h / (p.len() as f64).ln()).clamp(0.0, 1.0) })
}
