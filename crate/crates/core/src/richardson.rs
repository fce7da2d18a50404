//! Richardson extrapolation of sequences with an asymptotic expansion in `1/n`.

use num_complex::Complex64;

/// Order-`k` Richardson limit estimate from `x[m..=m+k]`, where `x[i]` is
/// the term with index `n0 + i`.
///
/// Exact for sequences `a0 + a1/n + ... + ak/n^k`.
pub fn richardson_at(x: &[Complex64], n0: usize, m: usize, k: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut fact = vec![1.0f64; k + 1];
    for i in 1..=k {
        fact[i] = fact[i - 1] * i as f64;
    }
    for j in 0..=k {
        let n = (n0 + m + j) as f64;
        let sign = if (k + j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += x[m + j] * (sign * n.powi(k as i32) / (fact[j] * fact[k - j]));
    }
    acc
}

/// Order-`k` estimate from the last `k + 1` terms, with the spread of
/// the previous estimate as an error proxy.
pub fn richardson_tail(x: &[Complex64], n0: usize, k: usize) -> Option<(Complex64, f64)> {
    if x.len() < k + 2 {
        return None;
    }
    let m = x.len() - k - 1;
    let last = richardson_at(x, n0, m, k);
    let prev = richardson_at(x, n0, m - 1, k);
    Some((last, (last - prev).norm()))
}
