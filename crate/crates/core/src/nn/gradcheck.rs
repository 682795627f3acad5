//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Mode;
use super::network::Network;
use super::tensor::Tensor4;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { step: 1e-4, rel_tol: 1e-4, abs_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradReport {
    /// Largest `|a − n| / max(|a|, |n|)` over coordinates that miss the absolute tolerance.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    pub failures: usize,
    /// Coordinates left out because the probe straddled a kink.
    pub skipped: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn merge(self, o: GradReport) -> GradReport {
        GradReport {
            max_rel_error: self.max_rel_error.max(o.max_rel_error),
            max_abs_error: self.max_abs_error.max(o.max_abs_error),
            checked: self.checked + o.checked,
            failures: self.failures + o.failures,
            skipped: self.skipped + o.skipped,
        }
    }
}

impl GradCheck {
    /// A coordinate passes when it is within `abs_tol` absolutely or `rel_tol` relatively.
    pub fn compare(&self, analytic: &[f64], numeric: &[f64]) -> GradReport {
        assert_eq!(analytic.len(), numeric.len());
        let mut rep = GradReport { checked: analytic.len(), ..Default::default() };
        for (&a, &n) in analytic.iter().zip(numeric) {
            let abs = (a - n).abs();
            rep.max_abs_error = rep.max_abs_error.max(abs);
            if abs <= self.abs_tol {
                continue;
            }
            let rel = abs / a.abs().max(n.abs());
            rep.max_rel_error = rep.max_rel_error.max(rel);
            if !(rel < self.rel_tol) {
                rep.failures += 1;
            }
        }
        rep
    }

    /// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for each requested coordinate.
    pub fn numeric(&self, x: &mut [f64], indices: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        indices
            .iter()
            .map(|&i| {
                let orig = x[i];
                x[i] = orig + self.step;
                let up = f(x);
                x[i] = orig - self.step;
                let down = f(x);
                x[i] = orig;
                (up - down) / (2.0 * self.step)
            })
            .collect()
    }

    /// Checks a scalar function given its analytic gradient at `x`.
    pub fn check_fn(&self, x: &[f64], analytic: &[f64], max_coords: usize, seed: u64, f: impl FnMut(&[f64]) -> f64) -> GradReport {
        let idx = sample_indices(x.len(), max_coords, seed);
        let mut xs = x.to_vec();
        let numeric = self.numeric(&mut xs, &idx, f);
        let picked: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
        self.compare(&picked, &numeric)
    }

    /// Like [`GradCheck::check_fn`] for piecewise-smooth functions. `piece`
    /// identifies the smooth piece containing a point; coordinates whose
    /// probes `x ± step` leave the piece of `x` are skipped and counted.
    pub fn check_fn_piecewise(
        &self,
        x: &[f64],
        analytic: &[f64],
        max_coords: usize,
        seed: u64,
        mut f: impl FnMut(&[f64]) -> f64,
        mut piece: impl FnMut(&[f64]) -> u64,
    ) -> GradReport {
        let mut xs = x.to_vec();
        let home = piece(&xs);
        let mut idx = Vec::new();
        let mut skipped = 0;
        for i in sample_indices(x.len(), max_coords, seed) {
            let orig = xs[i];
            let mut same = true;
            for v in [orig + self.step, orig - self.step] {
                xs[i] = v;
                same &= piece(&xs) == home;
            }
            xs[i] = orig;
            if same {
                idx.push(i);
            } else {
                skipped += 1;
            }
        }
        let numeric = self.numeric(&mut xs, &idx, &mut f);
        let picked: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
        GradReport { skipped, ..self.compare(&picked, &numeric) }
    }

    /// Checks input and parameter gradients of `net` at `x` against the
    /// scalar `Σ r ⊙ net(x)` for a random projection `r`.
    ///
    /// At most `max_coords` coordinates per tensor are perturbed.
    pub fn check_network(
        &self,
        net: &mut Network<f64>,
        x: &Tensor4<f64>,
        mode: Mode,
        seed: u64,
        max_coords: usize,
    ) -> Result<GradReport, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out_shape = net.output_shape(x.shape())?;
        let r: Vec<f64> = (0..out_shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let proj = |y: &Tensor4<f64>| y.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();

        net.zero_grad();
        net.forward(x, mode)?;
        let gx = net.backward(&Tensor4::from_vec(out_shape, r.clone()))?;
        let snapshot = net.clone();

        let eval = |net: &Network<f64>, input: &Tensor4<f64>| -> f64 {
            // Forward mutates BN running statistics; evaluate on a fresh copy.
            let mut n = net.clone();
            let y = n.forward(input, mode).expect("shape already validated");
            proj(&y)
        };

        let mut report = self.check_fn(x.data(), gx.data(), max_coords, seed ^ 0x9e37, |v| {
            eval(&snapshot, &Tensor4::from_vec(x.shape(), v.to_vec()))
        });

        let n_params = snapshot.params().len();
        for t in 0..n_params {
            let analytic: Vec<f64> = snapshot.params()[t].grad().expect("parameter").to_vec();
            let values: Vec<f64> = snapshot.params()[t].data().to_vec();
            let mut probe = snapshot.clone();
            let rep = self.check_fn(&values, &analytic, max_coords, seed.wrapping_add(t as u64 + 1), |v| {
                probe.params_mut()[t].data_mut().copy_from_slice(v);
                eval(&probe, x)
            });
            report = report.merge(rep);
        }
        Ok(report)
    }
}

/// Up to `k` distinct indices below `len`, deterministic in `seed`; all of them when `len ≤ k`.
pub fn sample_indices(len: usize, k: usize, seed: u64) -> Vec<usize> {
    if len <= k {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, k).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_and_wrong_gradient_fails() {
        let gc = GradCheck::default();
        let x = [0.3, -1.2, 2.0];
        let f = |v: &[f64]| v.iter().map(|a| a * a * a).sum::<f64>();
        let good: Vec<f64> = x.iter().map(|a| 3.0 * a * a).collect();
        assert!(gc.check_fn(&x, &good, 10, 0, f).passed());
        let bad: Vec<f64> = good.iter().map(|g| g * 1.01).collect();
        assert!(!gc.check_fn(&x, &bad, 10, 0, f).passed());
    }

    #[test]
    fn sampled_indices_are_distinct_and_stable() {
        let a = sample_indices(100, 7, 3);
        assert_eq!(a, sample_indices(100, 7, 3));
        assert_eq!(a.len(), 7);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_indices(4, 7, 3), vec![0, 1, 2, 3]);
    }
}
