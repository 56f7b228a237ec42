//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use cavq::TransitionMatrix;

pub fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Bits `[start, start + len)` of a `total`-bit word, MSB first.
fn bits(word: usize, total: u32, start: u32, len: u32) -> usize {
    (word >> (total - start - len)) & ((1 << len) - 1)
}

/// Subchannel matrices by brute force over one frame: every (input frame,
/// output frame) pair weighted by its exact probability, with independent
/// symbols drawn from `prior` and corrupted by `h` (label-indexed).
pub fn exhaustive_frame_matrices(m_b: u32, m_c: u32, h: &TransitionMatrix, prior: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let t = m_b * m_c / gcd(m_b, m_c);
    let n_sym = t / m_c;
    let n_idx = (t / m_b) as usize;
    let k = 1usize << m_b;
    let frames = 1usize << t;
    let mut joint = vec![vec![vec![0.0; k]; k]; n_idx];
    let mut out_prob = vec![0.0; frames];
    for u in 0..frames {
        let mut p_in = 1.0;
        for s in 0..n_sym {
            p_in *= prior[bits(u, t, s * m_c, m_c)];
        }
        if p_in == 0.0 {
            continue;
        }
        for (v, slot) in out_prob.iter_mut().enumerate() {
            let mut p = p_in;
            for s in 0..n_sym {
                p *= h.get(bits(u, t, s * m_c, m_c), bits(v, t, s * m_c, m_c));
            }
            *slot = p;
        }
        for (i, ji) in joint.iter_mut().enumerate() {
            let a = bits(u, t, i as u32 * m_b, m_b);
            let row = &mut ji[a];
            for (v, &p) in out_prob.iter().enumerate() {
                row[bits(v, t, i as u32 * m_b, m_b)] += p;
            }
        }
    }
    for ji in &mut joint {
        for row in ji.iter_mut() {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
    }
    joint
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &TransitionMatrix) -> f64 {
    let mut m = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m = m.max((v - b.get(i, j)).abs());
        }
    }
    m
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm_power(a: &nalgebra::DMatrix<f64>) -> f64 {
    let ata = a.transpose() * a;
    let mut v = nalgebra::DVector::from_element(a.ncols(), 1.0);
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = &ata * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        let next = w / n;
        lambda = (next.transpose() * &ata * &next)[(0, 0)];
        if (&next - &v).norm() < 1e-14 {
            break;
        }
        v = next;
    }
    lambda.sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
