//! Gauss-Legendre rules and Lagrange stencil weights on a unit-spaced lattice.

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped onto [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(&w).map(|(&xi, &wi)| (mid + half * xi, half * wi)).collect()
}

/// Values of the Lagrange basis on `nodes` at `t`.
pub fn lagrange_values(nodes: &[f64], t: f64, out: &mut [f64]) {
    for (k, &nk) in nodes.iter().enumerate() {
        let mut v = 1.0;
        for (j, &nj) in nodes.iter().enumerate() {
            if j != k {
                v *= (t - nj) / (nk - nj);
            }
        }
        out[k] = v;
    }
}

/// Integrals of each Lagrange basis polynomial on `nodes` over [t0, t1].
pub fn lagrange_integrals(nodes: &[f64], t0: f64, t1: f64, out: &mut [f64]) {
    let m = nodes.len();
    for k in 0..m {
        // coefficients of prod_{j != k} (t - nodes[j]), lowest degree first
        let mut coef = vec![0.0; m];
        coef[0] = 1.0;
        let mut deg = 0;
        let mut denom = 1.0;
        for j in 0..m {
            if j == k {
                continue;
            }
            denom *= nodes[k] - nodes[j];
            for d in (0..=deg).rev() {
                coef[d + 1] += coef[d];
                coef[d] *= -nodes[j];
            }
            deg += 1;
        }
        let mut acc = 0.0;
        for d in (0..m).rev() {
            let p = (d + 1) as f64;
            acc += coef[d] * (t1.powi(d as i32 + 1) - t0.powi(d as i32 + 1)) / p;
        }
        out[k] = acc / denom;
    }
}

/// Width of the stencil used for cell integration.
pub const CELL_STENCIL: usize = 6;

/// First stencil node for cell `j` (between nodes `j` and `j + 1`) on a lattice of `n` nodes.
pub fn cell_stencil_start(j: usize, n: usize, width: usize) -> usize {
    let w = width.min(n);
    let half = (w / 2).saturating_sub(1);
    j.saturating_sub(half).min(n - w)
}

fn rule_for(offset: usize) -> &'static [f64; CELL_STENCIL] {
    static RULES: OnceLock<[[f64; CELL_STENCIL]; CELL_STENCIL - 1]> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let mut r = [[0.0; CELL_STENCIL]; CELL_STENCIL - 1];
        for (off, row) in r.iter_mut().enumerate() {
            let nodes: Vec<f64> = (0..CELL_STENCIL).map(|k| k as f64 - off as f64).collect();
            lagrange_integrals(&nodes, 0.0, 1.0, row);
        }
        r
    });
    &rules[offset]
}

/// Weights (unit spacing) integrating the interpolating polynomial over one cell.
/// `offset` is the position of the cell's left node within the stencil.
pub fn cell_rule(offset: usize) -> &'static [f64; CELL_STENCIL] {
    rule_for(offset)
}

#[cfg(test)]
/// Interior weights: the cell sits between stencil nodes 2 and 3.
pub fn interior_cell_rule() -> &'static [f64; CELL_STENCIL] {
    rule_for(2)
}
