use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CdError, Result};
use crate::models::io::NodeAttributes;
use crate::state::{DyadIndex, State};

/// Generator for stand-in school networks: balanced planted grades, Bernoulli
/// edges with a within-grade boost, and a hard degree cap enforced by
/// rejecting any edge that would push an endpoint over the cap.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticNetwork {
    pub nodes: usize,
    pub grades: usize,
    /// Target overall edge density.
    pub density: f64,
    /// Ratio of within-grade to between-grade edge probability.
    pub homophily: f64,
    pub degree_cap: Option<usize>,
}

impl SyntheticNetwork {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(CdError::InvalidConfig("need at least two nodes".into()));
        }
        if !(2..=4).contains(&self.grades) {
            return Err(CdError::InvalidConfig(format!(
                "grade count must be between 2 and 4, got {}",
                self.grades
            )));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return Err(CdError::InvalidConfig(format!(
                "density must lie in (0, 1), got {}",
                self.density
            )));
        }
        if !(self.homophily >= 1.0 && self.homophily.is_finite()) {
            return Err(CdError::InvalidConfig("homophily must be at least 1".into()));
        }
        let (within, _) = self.edge_probabilities();
        if within > 1.0 {
            return Err(CdError::InvalidConfig(format!(
                "within-grade edge probability {within:.3} exceeds 1"
            )));
        }
        if let Some(cap) = self.degree_cap {
            let mean_degree = self.density * (self.nodes - 1) as f64;
            if mean_degree > cap as f64 {
                return Err(CdError::InvalidConfig(format!(
                    "target mean degree {mean_degree:.2} exceeds the degree cap {cap}"
                )));
            }
        }
        Ok(())
    }

    fn within_fraction(&self) -> f64 {
        let n = self.nodes;
        let mut same = 0usize;
        for g in 0..self.grades {
            let size = n / self.grades + usize::from(g < n % self.grades);
            same += size * size.saturating_sub(1) / 2;
        }
        same as f64 / (n * (n - 1) / 2) as f64
    }

    /// `(p_within, p_between)` giving the target overall density.
    pub fn edge_probabilities(&self) -> (f64, f64) {
        let f = self.within_fraction();
        let between = self.density / (f * self.homophily + (1.0 - f));
        (between * self.homophily, between)
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(State, NodeAttributes)> {
        self.validate()?;
        let n = self.nodes;
        let mut codes: Vec<u32> = (0..n).map(|i| (i % self.grades) as u32).collect();
        codes.shuffle(rng);
        let labels = (0..self.grades).map(|g| format!("g{}", g + 1)).collect();

        let index = DyadIndex::new(n);
        let (p_within, p_between) = self.edge_probabilities();
        let mut order: Vec<usize> = (0..index.num_dyads()).collect();
        order.shuffle(rng);
        let mut degree = vec![0usize; n];
        let mut y = State::zeros(index.num_dyads());
        for k in order {
            let (i, j) = index.endpoints(k);
            let p = if codes[i] == codes[j] {
                p_within
            } else {
                p_between
            };
            if rng.random::<f64>() >= p {
                continue;
            }
            if let Some(cap) = self.degree_cap {
                if degree[i] >= cap || degree[j] >= cap {
                    continue;
                }
            }
            degree[i] += 1;
            degree[j] += 1;
            y.set(k, true);
        }
        Ok((y, NodeAttributes { codes, labels }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn spec() -> SyntheticNetwork {
        SyntheticNetwork {
            nodes: 30,
            grades: 2,
            density: 0.1,
            homophily: 3.0,
            degree_cap: Some(10),
        }
    }

    #[test]
    fn probabilities_hit_the_target_density() {
        let s = spec();
        let (pw, pb) = s.edge_probabilities();
        let f = s.within_fraction();
        assert!((f * pw + (1.0 - f) * pb - 0.1).abs() < 1e-12);
        assert!((pw / pb - 3.0).abs() < 1e-12);
    }

    #[test]
    fn respects_cap_and_is_deterministic() {
        let s = spec();
        let (y1, a1) = s.generate(&mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        let (y2, a2) = s.generate(&mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(a1, a2);
        let idx = DyadIndex::new(30);
        assert!(idx.degrees(&y1).iter().all(|&d| d <= 10));
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        let mut s = spec();
        s.density = 0.5;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.grades = 5;
        assert!(s.validate().is_err());
    }
}
