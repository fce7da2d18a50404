//! Gauss–Kronrod 7/15 nodes on `[-1, 1]`.

/// Kronrod abscissae, descending; index 1, 3, 5 are the Gauss nodes.
pub const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

pub const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

pub const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// The 15 nodes mapped to `[a, b]`, ascending.
pub fn nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [0.0; 15];
    for i in 0..7 {
        out[i] = c - h * XGK[i];
        out[14 - i] = c + h * XGK[i];
    }
    out[7] = c;
    out
}

/// Kronrod and Gauss estimates from values at [`nodes`], for `[a, b]` of half-width `h`.
pub fn estimates<V>(f: &[V; 15], h: f64) -> (V, V)
where
    V: Copy + std::ops::Add<Output = V> + std::ops::Mul<f64, Output = V>,
{
    let mut k = f[7] * WGK[7];
    let mut g = f[7] * WG[3];
    for i in 0..7 {
        let pair = f[i] + f[14 - i];
        k = k + pair * WGK[i];
        if i % 2 == 1 {
            g = g + pair * WG[i / 2];
        }
    }
    (k * h, g * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let x = nodes(0.0, 2.0);
        let f: [f64; 15] = std::array::from_fn(|i| x[i].powi(12));
        let (k, _) = estimates(&f, 1.0);
        assert!((k - 2f64.powi(13) / 13.0).abs() < 1e-10);
        let f: [f64; 15] = std::array::from_fn(|i| x[i].powi(13));
        let (_, g) = estimates(&f, 1.0);
        assert!((g - 2f64.powi(14) / 14.0).abs() < 1e-9);
    }
}
