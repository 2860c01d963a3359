//! Synthetic multi-domain data with shared latent dynamics.
//!
//! `K` latent AR(1) processes with fixed coefficients are shared by every
//! domain. Each domain draws its own fixed mixing matrix from latents to
//! features and its own label coefficients, so domains are heterogeneous in
//! feature count and meaning but related through the latents.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RawRun;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// Each feature loads mainly on one randomly assigned latent, plus
    /// `cross_mix`-scaled Gaussian loadings on the others.
    #[default]
    Random,
    /// Feature `i` is latent `i`; requires `nf == latent_dim`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Feature count per domain; its length is the number of domains.
    pub nf: Vec<usize>,
    /// Runs per domain, same length as `nf`.
    pub runs: Vec<usize>,
    pub t_run: usize,
    pub latent_dim: usize,
    pub noise: f64,
    /// Data seed; when absent the run seed is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mixing: Mixing,
    #[serde(default = "default_cross_mix")]
    pub cross_mix: f64,
    /// AR coefficients are evenly spaced over this closed range.
    #[serde(default = "default_ar_range")]
    pub ar_range: [f64; 2],
}

fn default_cross_mix() -> f64 {
    0.3
}

fn default_ar_range() -> [f64; 2] {
    [-0.9, 0.9]
}

impl SyntheticSpec {
    /// Four domains shaped like the 25/19/19/19-feature vehicle datasets,
    /// 2,000 windowed samples each at `W = 5`.
    pub fn reference(seed: Option<u64>) -> Self {
        SyntheticSpec {
            nf: vec![25, 19, 19, 19],
            runs: vec![10; 4],
            t_run: 205,
            latent_dim: 6,
            noise: 0.1,
            seed,
            mixing: Mixing::Random,
            cross_mix: default_cross_mix(),
            ar_range: default_ar_range(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(format!("synthetic.{key}"), msg));
        if self.nf.is_empty() || self.nf.contains(&0) {
            return bad("nf", "every domain needs at least one feature");
        }
        if self.runs.len() != self.nf.len() {
            return bad("runs", "must list one run count per domain");
        }
        if self.runs.contains(&0) {
            return bad("runs", "every domain needs at least one run");
        }
        if self.t_run < 2 {
            return bad("t_run", "must be at least 2");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim", "must be at least 1");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise", "must be a finite non-negative number");
        }
        if !self.ar_range.iter().all(|a| a.abs() < 1.0) || self.ar_range[0] > self.ar_range[1] {
            return bad("ar_range", "must be an ordered pair inside (-1, 1)");
        }
        if self.mixing == Mixing::Identity && self.nf.iter().any(|&n| n != self.latent_dim) {
            return bad("mixing", "identity mixing needs nf == latent_dim in every domain");
        }
        Ok(())
    }

    pub fn ar_coefficients(&self) -> Vec<f64> {
        let [lo, hi] = self.ar_range;
        if self.latent_dim == 1 {
            return vec![(lo + hi) / 2.0];
        }
        (0..self.latent_dim)
            .map(|k| lo + (hi - lo) * k as f64 / (self.latent_dim - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomain {
    pub runs: Vec<RawRun>,
    /// `latents[run][k][t]`.
    pub latents: Vec<Vec<Vec<f64>>>,
    /// `mixing[i][k]`: loading of feature `i` on latent `k`.
    pub mixing: Vec<Vec<f64>>,
    pub label_coef: Vec<f64>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SyntheticDomain>> {
    spec.validate()?;
    let phis = spec.ar_coefficients();
    let seed = spec.seed.unwrap_or(0);
    let mut domains = Vec::with_capacity(spec.nf.len());
    for (j, (&nf, &runs)) in spec.nf.iter().zip(&spec.runs).enumerate() {
        let mut structure = rng::stream(seed, &[rng::tag::DATA, j as u64, 0]);
        let mixing: Vec<Vec<f64>> = match spec.mixing {
            Mixing::Identity => (0..nf)
                .map(|i| (0..spec.latent_dim).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
                .collect(),
            Mixing::Random => (0..nf)
                .map(|_| {
                    let main = structure.gen_range(0..spec.latent_dim);
                    let sign = if structure.gen_bool(0.5) { 1.0 } else { -1.0 };
                    (0..spec.latent_dim)
                        .map(|k| {
                            let cross = spec.cross_mix * normal(&mut structure);
                            if k == main {
                                sign + cross
                            } else {
                                cross
                            }
                        })
                        .collect()
                })
                .collect(),
        };
        let label_coef: Vec<f64> = (0..spec.latent_dim).map(|_| normal(&mut structure)).collect();

        let mut domain = SyntheticDomain {
            runs: Vec::with_capacity(runs),
            latents: Vec::with_capacity(runs),
            mixing,
            label_coef,
        };
        for r in 0..runs {
            let mut rng = rng::stream(seed, &[rng::tag::DATA, j as u64, 1 + r as u64]);
            let latents: Vec<Vec<f64>> = phis
                .iter()
                .map(|&phi| {
                    let innov = (1.0 - phi * phi).sqrt();
                    let mut z = normal(&mut rng);
                    (0..spec.t_run)
                        .map(|_| {
                            let cur = z;
                            z = phi * z + innov * normal(&mut rng);
                            cur
                        })
                        .collect()
                })
                .collect();
            let features = domain
                .mixing
                .iter()
                .map(|load| {
                    (0..spec.t_run)
                        .map(|t| {
                            let clean: f64 = load.iter().zip(&latents).map(|(a, l)| a * l[t]).sum();
                            if spec.noise > 0.0 {
                                clean + spec.noise * normal(&mut rng)
                            } else {
                                clean
                            }
                        })
                        .collect()
                })
                .collect();
            let labels = (0..spec.t_run)
                .map(|t| {
                    let clean: f64 = domain.label_coef.iter().zip(&latents).map(|(b, l)| b * l[t]).sum();
                    if spec.noise > 0.0 {
                        clean + spec.noise * normal(&mut rng)
                    } else {
                        clean
                    }
                })
                .collect();
            domain.runs.push(RawRun {
                domain: j,
                run_id: format!("d{j}_run{r:03}"),
                features,
                labels,
                feature_names: (0..nf).map(|i| format!("f{i}")).collect(),
            });
            domain.latents.push(latents);
        }
        domains.push(domain);
    }
    Ok(domains)
}
