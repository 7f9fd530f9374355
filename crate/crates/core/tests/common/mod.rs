//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use cdfit::{log_unnormalized, BinaryPairwiseModel, Model, State};

/// The chord model used across the estimator tests: a 6-cycle plus one
/// diagonal, so that single-site pseudo-likelihood has a finite optimum.
pub fn chord6() -> BinaryPairwiseModel {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)];
    BinaryPairwiseModel::ising(6, &edges).unwrap()
}

pub fn chord6_obs() -> State {
    State::parse("111000").unwrap()
}

/// Normalised joint over all `2^m` codes from `log_unnormalized`, with no
/// shared code path to the oracle's enumeration.
pub fn brute_joint<M: Model + ?Sized>(model: &M, eta: &[f64]) -> Vec<f64> {
    let m = model.dim();
    let lw: Vec<f64> = (0..1u64 << m)
        .map(|c| log_unnormalized(model, eta, &State::from_code(c, m)).unwrap())
        .collect();
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn brute_mean<M: Model + ?Sized>(model: &M, eta: &[f64]) -> Vec<f64> {
    let p = brute_joint(model, eta);
    let m = model.dim();
    let mut mean = vec![0.0; model.num_stats()];
    for (c, pc) in p.iter().enumerate() {
        if *pc == 0.0 {
            continue;
        }
        let g = cdfit::suff_stats(model, &State::from_code(c as u64, m)).unwrap();
        for (a, x) in mean.iter_mut().zip(g.iter()) {
            *a += pc * x;
        }
    }
    mean
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            p[j] = x[j] + h;
            let up = f(&p);
            p[j] = x[j] - h;
            let down = f(&p);
            p[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Derivative-free maximiser: a coarse grid scan, then cyclic golden-section
/// line searches along the coordinates until nothing moves.
pub fn grid_polish_max(f: impl Fn(&[f64]) -> f64, lo: f64, hi: f64, d: usize) -> Vec<f64> {
    let steps = 40;
    let mut best = vec![lo; d];
    let mut best_val = f64::NEG_INFINITY;
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = idx
            .iter()
            .map(|&i| lo + (hi - lo) * i as f64 / steps as f64)
            .collect();
        let v = f(&x);
        if v > best_val {
            best_val = v;
            best = x;
        }
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] <= steps {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    let mut width = (hi - lo) / steps as f64 * 2.0;
    for _ in 0..2000 {
        let before = best.clone();
        for j in 0..d {
            let line = |t: f64| {
                let mut x = best.clone();
                x[j] = t;
                f(&x)
            };
            best[j] = golden(line, best[j] - width, best[j] + width);
        }
        let moved = before
            .iter()
            .zip(&best)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if moved < 1e-11 {
            break;
        }
        width = (moved * 4.0).max(1e-6);
    }
    best
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
