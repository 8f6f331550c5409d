//! Bessel functions of the first kind, integer order.

/// `J_0(x) ..= J_nmax(x)` by Miller's downward recurrence, normalized with
/// `J_0 + 2 Σ J_{2k} = 1`. Accurate to about 1e-14 absolute for all orders.
pub fn bessel_j_all(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    // start well above both the requested order and the turning point
    let start = {
        let m = nmax.max(ax as usize) + 20 + (40.0 * (ax.max(1.0)).sqrt()) as usize;
        m + (m & 1)
    };
    let mut next = 0.0f64; // J_{k+1}
    let mut cur = 1e-300f64; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next; // J_{k-1}
        next = cur;
        cur = prev;
        let km1 = k - 1;
        if km1 <= nmax {
            out[km1] = cur;
        }
        if km1 % 2 == 0 && km1 > 0 {
            norm += 2.0 * cur;
        }
        if k <= nmax {
            out[k] = next;
        }
        if cur.abs() > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_n(x)` for integer `n` (negative orders use `J_{-n} = (-1)^n J_n`).
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let k = n.unsigned_abs() as usize;
    let v = bessel_j_all(k, x)[k];
    if n < 0 && k % 2 == 1 {
        -v
    } else {
        v
    }
}
