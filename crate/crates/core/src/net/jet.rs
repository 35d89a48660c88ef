//! Truncated Taylor series in one scalar direction, up to degree 3.
//!
//! Coefficients are Taylor coefficients, not derivatives: `f(x0 + e) =
//! sum c_k e^k`, so the k-th derivative is `k! * c_k`. Degree 3 is all the
//! benchmarks need (the third-order dispersive term).

#[derive(Debug, Clone, Copy)]
pub(crate) struct Jet {
    pub order: usize,
    pub c: [f64; 4],
}

impl Jet {
    pub fn constant(v: f64, order: usize) -> Self {
        debug_assert!(order <= 3);
        let mut c = [0.0; 4];
        c[0] = v;
        Jet { order, c }
    }

    pub fn zero(order: usize) -> Self {
        Jet::constant(0.0, order)
    }

    /// `self += w * other`, matching orders assumed.
    #[inline]
    pub fn axpy(&mut self, w: f64, other: &Jet) {
        for k in 0..=self.order {
            self.c[k] += w * other.c[k];
        }
    }

    /// Composition `tanh(self)` via the series recurrence
    /// `h' = (1 - h^2) g'`, expanded coefficient by coefficient.
    pub fn tanh(&self) -> Jet {
        let n = self.order;
        let mut h = [0.0; 4];
        let mut w = [0.0; 4]; // coefficients of 1 - h^2
        h[0] = self.c[0].tanh();
        w[0] = 1.0 - h[0] * h[0];
        for k in 0..n {
            let mut acc = 0.0;
            for (j, wj) in w.iter().enumerate().take(k + 1) {
                acc += wj * ((k + 1 - j) as f64) * self.c[k + 1 - j];
            }
            h[k + 1] = acc / ((k + 1) as f64);
            let mut hh = 0.0;
            for i in 0..=(k + 1) {
                hh += h[i] * h[k + 1 - i];
            }
            w[k + 1] = -hh;
        }
        Jet { order: n, c: h }
    }

    /// Taylor coefficients of `sin(a*t + b)` around `t = t0`.
    pub fn sin_affine(a: f64, t0: f64, b: f64, order: usize) -> Jet {
        let u = a * t0 + b;
        let (s, c) = u.sin_cos();
        let mut out = [0.0; 4];
        out[0] = s;
        if order >= 1 {
            out[1] = a * c;
        }
        if order >= 2 {
            out[2] = -a * a * s / 2.0;
        }
        if order >= 3 {
            out[3] = -a * a * a * c / 6.0;
        }
        Jet { order, c: out }
    }

    /// Taylor coefficients of `cos(a*t + b)` around `t = t0`.
    pub fn cos_affine(a: f64, t0: f64, b: f64, order: usize) -> Jet {
        let u = a * t0 + b;
        let (s, c) = u.sin_cos();
        let mut out = [0.0; 4];
        out[0] = c;
        if order >= 1 {
            out[1] = -a * s;
        }
        if order >= 2 {
            out[2] = -a * a * c / 2.0;
        }
        if order >= 3 {
            out[3] = a * a * a * s / 6.0;
        }
        Jet { order, c: out }
    }

    /// Derivative of order `k` encoded by this jet.
    #[inline]
    pub fn derivative(&self, k: usize) -> f64 {
        const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];
        debug_assert!(k <= self.order);
        FACT[k] * self.c[k]
    }
}
