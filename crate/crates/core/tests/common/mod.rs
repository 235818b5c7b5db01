//! Oracles and generators shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use std::f64::consts::PI;
use wavecert::pde::{Grid, WaveField};
use wavecert::smallmat::SymMatrix;

/// Roots of `det(λI − A)` for symmetric `A` of size 2 or 3, ascending.
///
/// The 3×3 cubic is solved by bisection on the three intervals cut by the
/// critical points of the characteristic polynomial.
pub fn charpoly_eigenvalues(a: &SymMatrix) -> Vec<f64> {
    match a.dim() {
        1 => vec![a.get(0, 0)],
        2 => {
            let (p, q, r) = (a.get(0, 0), a.get(1, 1), a.get(0, 1));
            let mean = 0.5 * (p + q);
            let rad = (0.25 * (p - q) * (p - q) + r * r).sqrt();
            vec![mean - rad, mean + rad]
        }
        3 => {
            let g = |i, j| a.get(i, j);
            let c2 = g(0, 0) + g(1, 1) + g(2, 2);
            let c1 = g(0, 0) * g(1, 1) - g(0, 1) * g(0, 1) + g(0, 0) * g(2, 2) - g(0, 2) * g(0, 2) + g(1, 1) * g(2, 2)
                - g(1, 2) * g(1, 2);
            let c0 = det3(a);
            let p = |l: f64| ((l - c2) * l + c1) * l - c0;
            let disc = (c2 * c2 - 3.0 * c1).max(0.0).sqrt();
            let (s1, s2) = ((c2 - disc) / 3.0, (c2 + disc) / 3.0);
            let bound = (0..3)
                .map(|i| (0..3).map(|j| g(i, j).abs()).sum::<f64>())
                .fold(0.0, f64::max)
                + 1.0;
            vec![bisect(p, -bound, s1), bisect(p, s1, s2), bisect(p, s2, bound)]
        }
        d => panic!("no characteristic-polynomial oracle for dim {d}"),
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn det3(a: &SymMatrix) -> f64 {
    let g = |i, j| a.get(i, j);
    g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(1, 2)) - g(0, 1) * (g(0, 1) * g(2, 2) - g(1, 2) * g(0, 2))
        + g(0, 2) * (g(0, 1) * g(1, 2) - g(1, 1) * g(0, 2))
}

/// Determinant by cofactor expansion; fine for dim ≤ 4.
pub fn det(a: &SymMatrix) -> f64 {
    let n = a.dim();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
    det_rows(&rows)
}

fn det_rows(m: &[Vec<f64>]) -> f64 {
    if m.len() == 1 {
        return m[0][0];
    }
    (0..m.len())
        .map(|c| {
            let minor: Vec<Vec<f64>> = m[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, v)| *v).collect())
                .collect();
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[0][c] * det_rows(&minor)
        })
        .sum()
}

pub fn random_sym<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> SymMatrix {
    let upper: Vec<f64> = (0..dim * (dim + 1) / 2).map(|_| rng.gen_range(-scale..scale)).collect();
    SymMatrix::from_upper(dim, &upper).unwrap()
}

/// Smooth field vanishing on Γ_D: a bilinear/linear part plus a few
/// sine modes compatible with the mixed boundary conditions, random
/// amplitudes decaying with mode number.
pub fn random_field<R: Rng>(rng: &mut R, grid: &Grid) -> WaveField {
    let modes = 5;
    let lin: f64 = rng.gen_range(-1.0..1.0);
    let a: Vec<f64> = (0..modes * modes)
        .map(|i| rng.gen_range(-1.0..1.0) / (1 + i) as f64)
        .collect();
    let b: Vec<f64> = (0..modes * modes)
        .map(|i| rng.gen_range(-1.0..1.0) / (1 + i) as f64)
        .collect();
    let dim = grid.dim();
    let shape = move |c: &[f64], amp: &[f64], lin: f64| -> f64 {
        let s = |j: usize, x: f64| ((j as f64 + 0.5) * PI * x).sin();
        if dim == 1 {
            lin * c[0] + (0..modes).map(|j| amp[j] * s(j, c[0])).sum::<f64>()
        } else {
            let mut v = lin * c[0] * c[1];
            for j in 0..modes {
                for l in 0..modes {
                    v += amp[j * modes + l] * s(j, c[0]) * s(l, c[1]);
                }
            }
            v
        }
    };
    let (a2, b2) = (a.clone(), b.clone());
    let lin_t: f64 = rng.gen_range(-1.0..1.0);
    WaveField::from_fn(grid, move |x| shape(x, &a2, lin), move |x| shape(x, &b2, lin_t)).unwrap()
}

/// Like [`random_field`] but compatible with homogeneous Neumann data and a
/// vanishing boundary velocity, so solutions of the plant and of the
/// damped error system stay smooth.
pub fn compatible_field<R: Rng>(rng: &mut R, grid: &Grid) -> WaveField {
    let modes = 5;
    let a: Vec<f64> = (0..modes * modes).map(|i| rng.gen_range(-1.0..1.0) / (1 + i) as f64).collect();
    let b: Vec<f64> = (0..modes * modes).map(|i| rng.gen_range(-1.0..1.0) / (1 + i) as f64).collect();
    let dim = grid.dim();
    let eval = move |c: &[f64], amp: &[f64], half: f64| -> f64 {
        let s = |j: usize, x: f64| ((j as f64 + half) * PI * x).sin();
        if dim == 1 {
            (0..modes).map(|j| amp[j] * s(j, c[0])).sum()
        } else {
            (0..modes * modes)
                .map(|i| amp[i] * s(i / modes, c[0]) * s(i % modes, c[1]))
                .sum()
        }
    };
    WaveField::from_fn(grid, move |x| eval(x, &a, 0.5), move |x| eval(x, &b, 1.0)).unwrap()
}
