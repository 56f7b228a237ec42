//! Square QAM constellations with per-axis Gray labeling, nearest-neighbor
//! detection, and symbol transition probabilities under equalized AWGN.
//!
//! Points are stored row-major over the (I, Q) grid: point `ix * side + iq`
//! sits at I level `ix` and Q level `iq`, levels ordered from most negative to
//! most positive. The label of a point is `gray(ix)` followed by `gray(iq)`,
//! I bits in the most significant half.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{chunks, Execution};
use crate::matrix::TransitionMatrix;
use crate::rng::rng_for;

const MC_CHUNK: usize = 1 << 16;

/// Reflected-binary Gray code.
#[inline]
pub fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

/// Standard normal upper tail `Q(x) = P(X > x)`.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `P(lo < X < hi)` for standard normal `X`, evaluated on whichever tail
/// keeps the subtraction well conditioned.
fn gaussian_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        q_function(lo) - q_function(hi)
    } else if hi <= 0.0 {
        q_function(-hi) - q_function(-lo)
    } else {
        1.0 - q_function(-lo) - q_function(hi)
    }
}

/// Noise level of the equalized AWGN channel.
///
/// SNR is unit symbol energy over the total complex noise variance `σ²`, so
/// each of the I and Q components carries variance `σ²/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(invalid(format!("SNR must be finite, got {snr_db}")));
        }
        Ok(Self { snr_db })
    }

    /// Total complex noise variance `σ²`.
    pub fn variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn sigma_axis(&self) -> f64 {
        (self.variance() / 2.0).sqrt()
    }
}

/// Square `2^bits`-point QAM constellation with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    bits: u32,
    side: usize,
    /// Per-axis amplitudes, ascending.
    levels: Vec<f64>,
    points: Vec<Complex64>,
    labels: Vec<usize>,
    index_of_label: Vec<usize>,
}

impl Constellation {
    /// Builds square QAM for `bits ∈ {2, 4, 6, 8}`.
    pub fn square_qam(bits: u32) -> Result<Self> {
        if !matches!(bits, 2 | 4 | 6 | 8) {
            return Err(Error::UnsupportedModulationOrder(bits));
        }
        let half = bits / 2;
        let side = 1usize << half;
        let m = side * side;
        // mean |s|^2 over the unnormalised odd-integer grid is 2(side^2 - 1)/3
        let scale = (1.5 / ((side * side - 1) as f64)).sqrt();
        let levels: Vec<f64> = (0..side)
            .map(|k| (2.0 * k as f64 - (side as f64 - 1.0)) * scale)
            .collect();
        let mut points = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for ix in 0..side {
            for iq in 0..side {
                points.push(Complex64::new(levels[ix], levels[iq]));
                labels.push((gray(ix) << half) | gray(iq));
            }
        }
        let mut index_of_label = vec![0; m];
        for (idx, &label) in labels.iter().enumerate() {
            index_of_label[label] = idx;
        }
        Ok(Self {
            bits,
            side,
            levels,
            points,
            labels,
            index_of_label,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Points per axis (`√M`).
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Gray label of each point, indexed by point index.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn index_of_label(&self, label: usize) -> usize {
        self.index_of_label[label]
    }

    /// Grid coordinates `(ix, iq)` of a point index.
    pub fn grid_position(&self, index: usize) -> (usize, usize) {
        (index / self.side, index % self.side)
    }

    pub fn modulate(&self, indices: &[usize]) -> Result<Vec<Complex64>> {
        indices
            .iter()
            .map(|&i| {
                self.points.get(i).copied().ok_or(Error::IndexOutOfRange {
                    index: i,
                    size: self.order(),
                })
            })
            .collect()
    }

    /// Maps bit words (labels) onto their constellation points.
    pub fn modulate_labels(&self, words: &[usize]) -> Result<Vec<Complex64>> {
        words
            .iter()
            .map(|&w| {
                self.index_of_label
                    .get(w)
                    .map(|&i| self.points[i])
                    .ok_or(Error::IndexOutOfRange {
                        index: w,
                        size: self.order(),
                    })
            })
            .collect()
    }

    fn nearest_level(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, &a) in self.levels.iter().enumerate() {
            let d = (x - a) * (x - a);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Nearest-neighbor detection of a single received sample.
    ///
    /// The squared distance separates over the two axes and the point order
    /// is lexicographic in `(ix, iq)`, so slicing each axis to its lowest
    /// nearest level selects the lowest-indexed nearest point.
    #[inline]
    pub fn detect(&self, r: Complex64) -> usize {
        self.nearest_level(r.re) * self.side + self.nearest_level(r.im)
    }

    pub fn demodulate_nn(&self, received: &[Complex64]) -> Vec<usize> {
        received.iter().map(|&r| self.detect(r)).collect()
    }

    /// Per-axis `√M`-PAM transition matrix under Gaussian noise.
    pub fn axis_transition(&self, noise: &NoiseSpec) -> TransitionMatrix {
        let sigma = noise.sigma_axis();
        let n = self.side;
        let bounds: Vec<f64> = (0..=n)
            .map(|k| match k {
                0 => f64::NEG_INFINITY,
                k if k == n => f64::INFINITY,
                k => 0.5 * (self.levels[k - 1] + self.levels[k]),
            })
            .collect();
        let mut data = Vec::with_capacity(n * n);
        for &a in &self.levels {
            for j in 0..n {
                data.push(gaussian_interval(
                    (bounds[j] - a) / sigma,
                    (bounds[j + 1] - a) / sigma,
                ));
            }
        }
        TransitionMatrix::from_row_major(n, data).expect("square by construction")
    }

    /// Exact symbol transition matrix, indexed by point index.
    pub fn transition_matrix_analytic(&self, noise: &NoiseSpec) -> TransitionMatrix {
        let axis = self.axis_transition(noise);
        // row-major (ix, iq) order makes the joint matrix I-axis ⊗ Q-axis
        axis.kron(&axis)
    }

    /// Empirical transition matrix from `n_samples` noisy transmissions of
    /// every point.
    pub fn transition_matrix_monte_carlo(
        &self,
        noise: &NoiseSpec,
        n_samples: usize,
        seed: u64,
    ) -> Result<TransitionMatrix> {
        self.transition_matrix_monte_carlo_with(noise, n_samples, seed, Execution::default())
    }

    pub fn transition_matrix_monte_carlo_with(
        &self,
        noise: &NoiseSpec,
        n_samples: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<TransitionMatrix> {
        if n_samples == 0 {
            return Err(invalid("n_samples must be at least 1"));
        }
        let m = self.order();
        let sigma = noise.sigma_axis();
        let work: Vec<(usize, usize, usize)> = (0..m)
            .flat_map(|i| {
                chunks(n_samples, MC_CHUNK)
                    .into_iter()
                    .enumerate()
                    .map(move |(c, (_, len))| (i, c, len))
            })
            .collect();
        let partial = exec.map_range(work.len(), |w| {
            let (i, c, len) = work[w];
            let mut rng = rng_for(seed, &[i as u64, c as u64]);
            let mut counts = vec![0u64; m];
            let s = self.points[i];
            for _ in 0..len {
                let nr: f64 = rng.sample(StandardNormal);
                let ni: f64 = rng.sample(StandardNormal);
                let r = Complex64::new(s.re + sigma * nr, s.im + sigma * ni);
                counts[self.detect(r)] += 1;
            }
            (i, counts)
        });
        let mut totals = vec![0u64; m * m];
        for (i, counts) in partial {
            for (j, c) in counts.into_iter().enumerate() {
                totals[i * m + j] += c;
            }
        }
        let n = n_samples as f64;
        TransitionMatrix::from_row_major(m, totals.into_iter().map(|c| c as f64 / n).collect())
    }

    /// Re-indexes a point-indexed symbol matrix by label, so that entry
    /// `(a, b)` is the probability of receiving bit word `b` after sending
    /// bit word `a`.
    pub fn label_channel(&self, by_index: &TransitionMatrix) -> TransitionMatrix {
        by_index.permuted(&self.index_of_label)
    }

    /// Pairs of grid-adjacent point indices (horizontal and vertical).
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let s = self.side;
        let mut pairs = Vec::with_capacity(2 * s * (s - 1));
        for ix in 0..s {
            for iq in 0..s {
                let i = ix * s + iq;
                if ix + 1 < s {
                    pairs.push((i, i + s));
                }
                if iq + 1 < s {
                    pairs.push((i, i + 1));
                }
            }
        }
        pairs
    }
}

/// Closed-form QPSK symbol error rate at linear SNR `snr`.
pub fn qpsk_ser(snr: f64) -> f64 {
    let q = q_function(snr.sqrt());
    2.0 * q - q * q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rejects_unsupported_orders() {
        for bits in [0, 1, 3, 5, 7, 9, 10] {
            let err = Constellation::square_qam(bits).unwrap_err();
            assert!(err.to_string().contains("unsupported modulation order"));
        }
    }

    #[test]
    fn qpsk_points() {
        let c = Constellation::square_qam(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for p in c.points() {
            assert!((p.re.abs() - h).abs() < 1e-15);
            assert!((p.im.abs() - h).abs() < 1e-15);
        }
    }

    #[test]
    fn qam16_grid_matches_brute_force_normalisation() {
        // brute force: average energy of the raw {±1, ±3}² grid
        let raw = [-3.0f64, -1.0, 1.0, 3.0];
        let mut e = 0.0;
        for a in raw {
            for b in raw {
                e += a * a + b * b;
            }
        }
        e /= 16.0;
        assert!((e - 10.0).abs() < 1e-12);
        let c = Constellation::square_qam(4).unwrap();
        let scale = 1.0 / e.sqrt();
        for p in c.points() {
            let re = p.re / scale;
            let im = p.im / scale;
            assert!(raw.iter().any(|v| (v - re).abs() < 1e-12));
            assert!(raw.iter().any(|v| (v - im).abs() < 1e-12));
        }
    }

    #[test]
    fn unit_energy_and_bijective_labels() {
        for bits in [2, 4, 6, 8] {
            let c = Constellation::square_qam(bits).unwrap();
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / c.order() as f64;
            assert!((e - 1.0).abs() < 1e-12, "bits={bits} energy={e}");
            let mut seen = vec![false; c.order()];
            for &l in c.labels() {
                assert!(!seen[l]);
                seen[l] = true;
            }
        }
    }

    #[test]
    fn adjacency_count_256qam() {
        let c = Constellation::square_qam(8).unwrap();
        let pairs = c.adjacent_pairs();
        assert_eq!(pairs.len(), 2 * 16 * 15);
        for (a, b) in pairs {
            assert_eq!((c.labels()[a] ^ c.labels()[b]).count_ones(), 1);
        }
    }

    #[test]
    fn modulate_basics() {
        let c = Constellation::square_qam(2).unwrap();
        assert!(c.modulate(&[]).unwrap().is_empty());
        let out = c.modulate(&[0, 0, 0]).unwrap();
        assert!(out.iter().all(|&p| p == c.points()[0]));
        assert!(matches!(
            c.modulate(&[4]),
            Err(Error::IndexOutOfRange { index: 4, size: 4 })
        ));
    }

    #[test]
    fn detection_of_exact_points_and_origin_tie() {
        for bits in [2, 4, 6, 8] {
            let c = Constellation::square_qam(bits).unwrap();
            let idx = c.demodulate_nn(c.points());
            assert_eq!(idx, (0..c.order()).collect::<Vec<_>>());
        }
        let qpsk = Constellation::square_qam(2).unwrap();
        assert_eq!(qpsk.demodulate_nn(&[Complex64::new(0.0, 0.0)]), vec![0]);
    }

    #[test]
    fn detection_matches_exhaustive_search() {
        let c = Constellation::square_qam(6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let r = Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, p) in c.points().iter().enumerate() {
                let d = (r - p).norm_sqr();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            assert_eq!(c.detect(r), best);
        }
    }

    #[test]
    fn noiseless_limit_is_identity() {
        let noise = NoiseSpec::new(300.0).unwrap();
        for bits in [2, 4, 6, 8] {
            let c = Constellation::square_qam(bits).unwrap();
            let h = c.transition_matrix_analytic(&noise);
            assert!(h.max_abs_diff(&TransitionMatrix::identity(c.order())) < 1e-12);
        }
    }

    #[test]
    fn qpsk_symmetry() {
        let c = Constellation::square_qam(2).unwrap();
        for snr in [-5.0, 0.0, 7.5] {
            let h = c.transition_matrix_analytic(&NoiseSpec::new(snr).unwrap());
            let d0 = h.get(0, 0);
            for i in 0..4 {
                assert!((h.get(i, i) - d0).abs() < 1e-15);
            }
            // 90° rotation maps (ix, iq) -> (1 - iq, ix)
            let rot = |i: usize| {
                let (ix, iq) = c.grid_position(i);
                (1 - iq) * 2 + ix
            };
            for i in 0..4 {
                for j in 0..4 {
                    assert!((h.get(i, j) - h.get(rot(i), rot(j))).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn analytic_rows_sum_to_one() {
        for bits in [2, 4, 6, 8] {
            let c = Constellation::square_qam(bits).unwrap();
            for snr in [-10.0, 0.0, 10.0, 25.0] {
                let h = c.transition_matrix_analytic(&NoiseSpec::new(snr).unwrap());
                assert!(h.max_row_sum_error() < 1e-9);
            }
        }
    }

    #[test]
    fn diagonal_monotone_in_snr() {
        let c = Constellation::square_qam(4).unwrap();
        let mut prev = c.transition_matrix_analytic(&NoiseSpec::new(-10.0).unwrap());
        for k in 1..=30 {
            let h = c.transition_matrix_analytic(&NoiseSpec::new(-10.0 + k as f64).unwrap());
            for i in 0..16 {
                assert!(h.get(i, i) >= prev.get(i, i));
            }
            prev = h;
        }
    }

    #[test]
    fn monte_carlo_determinism_and_one_hot() {
        let c = Constellation::square_qam(4).unwrap();
        let noise = NoiseSpec::new(6.0).unwrap();
        let a = c.transition_matrix_monte_carlo(&noise, 3000, 11).unwrap();
        let b = c.transition_matrix_monte_carlo(&noise, 3000, 11).unwrap();
        assert_eq!(a, b);
        let one = c.transition_matrix_monte_carlo(&noise, 1, 5).unwrap();
        for row in one.rows() {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 15);
        }
        assert!(c.transition_matrix_monte_carlo(&noise, 0, 5).is_err());
    }

    #[test]
    fn monte_carlo_independent_of_execution() {
        let c = Constellation::square_qam(4).unwrap();
        let noise = NoiseSpec::new(3.0).unwrap();
        let n = MC_CHUNK * 2 + 17;
        let seq = c
            .transition_matrix_monte_carlo_with(&noise, n, 9, Execution::Sequential)
            .unwrap();
        let par = c
            .transition_matrix_monte_carlo_with(&noise, n, 9, Execution::Parallel)
            .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn label_channel_permutes() {
        let c = Constellation::square_qam(4).unwrap();
        let h = c.transition_matrix_analytic(&NoiseSpec::new(8.0).unwrap());
        let hl = c.label_channel(&h);
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(hl.get(a, b), h.get(c.index_of_label(a), c.index_of_label(b)));
            }
        }
    }

    #[test]
    fn rejects_non_finite_snr() {
        assert!(NoiseSpec::new(f64::NAN).is_err());
        assert!(NoiseSpec::new(f64::INFINITY).is_err());
    }
}
