//! Numerical integration: globally adaptive Gauss–Kronrod (G7/K15) and
//! Gauss–Legendre node generation.

use std::collections::BinaryHeap;

/// G7/K15 abscissae on [-1, 1] (non-negative half; the rule is symmetric).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
/// Embedded 7-point Gauss weights (for the odd-index abscissae of `XGK`).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error(
        "quadrature for {context} did not reach tolerance: estimate {estimate:.6e}, \
         error bound {error:.3e}, {intervals} intervals"
    )]
    ToleranceNotMet {
        context: String,
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("quadrature for {context}: non-finite integrand value at x = {x}")]
    NonFinite { context: String, x: f64 },
    #[error("empty integration interval [{a}, {b}]")]
    EmptyInterval { a: f64, b: f64 },
}

/// One G7/K15 evaluation on [a, b]: (Kronrod estimate, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, Option<f64>) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return (f64::NAN, f64::NAN, Some(center));
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        if !f1.is_finite() {
            return (f64::NAN, f64::NAN, Some(center - dx));
        }
        if !f2.is_finite() {
            return (f64::NAN, f64::NAN, Some(center + dx));
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    kronrod *= half;
    gauss *= half;
    // |K15 - G7| is a conservative bound on the K15 error for smooth integrands
    let diff = (kronrod - gauss).abs();
    (kronrod, diff.max(f64::EPSILON * kronrod.abs()), None)
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Globally adaptive G7/K15 over [a, b], refining the worst segment until
/// the summed error bound satisfies `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    context: &str,
) -> Result<Quadrature, QuadError> {
    integrate_with_breakpoints(f, a, b, &[], rel_tol, abs_tol, context)
}

/// Like [`integrate`], but seeds the subdivision with interior breakpoints
/// (known feature locations such as narrow peaks), so they cannot be missed
/// by the initial coarse rule.
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    context: &str,
) -> Result<Quadrature, QuadError> {
    const MAX_SEGMENTS: usize = 4096;
    if !(b > a) {
        return Err(QuadError::EmptyInterval { a, b });
    }
    let mut edges: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let push = |heap: &mut BinaryHeap<Segment>, lo: f64, hi: f64| -> Result<(f64, f64), QuadError> {
        let (v, e, bad) = gk15(&f, lo, hi);
        if let Some(x) = bad {
            return Err(QuadError::NonFinite {
                context: context.to_string(),
                x,
            });
        }
        heap.push(Segment {
            a: lo,
            b: hi,
            value: v,
            error: e,
        });
        Ok((v, e))
    };
    for w in edges.windows(2) {
        let (v, e) = push(&mut heap, w[0], w[1])?;
        total += v;
        total_err += e;
    }

    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(QuadError::ToleranceNotMet {
                context: context.to_string(),
                estimate: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap cannot be empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; keep it and accept its error
            heap.push(worst);
            break;
        }
        total -= worst.value;
        total_err -= worst.error;
        let (v1, e1) = push(&mut heap, worst.a, mid)?;
        let (v2, e2) = push(&mut heap, mid, worst.b)?;
        total += v1 + v2;
        total_err += e1 + e2;
    }

    // re-sum in a fixed order for reproducibility
    let mut segs: Vec<Segment> = heap.into_vec();
    segs.sort_by(|s, t| s.a.total_cmp(&t.a));
    let value = segs.iter().map(|s| s.value).sum();
    let error = segs.iter().map(|s| s.error).sum();
    Ok(Quadrature {
        value,
        error,
        intervals: segs.len(),
    })
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(x) and P_n'(x)
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Map Gauss–Legendre nodes to [a, b]: returns (x_i, w_i) pairs.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}
