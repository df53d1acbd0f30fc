//! `collide-prob`: closed-form collision probability against Monte Carlo.

use std::f64::consts::PI;

use serde::Serialize;
use simhash_attn::simhash::monte_carlo_collisions;
use simhash_attn::{analytic_collision_probability, LshConfig};

use crate::{positive, to_csv, to_json, Angle, CliError, CollideArgs, Format};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollideRow {
    pub theta: f64,
    pub bands: usize,
    pub table_size: usize,
    pub num_hash_fns: usize,
    pub dim: usize,
    pub trials: u64,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub abs_gap: f64,
}

pub fn default_thetas() -> Vec<Angle> {
    [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|f| Angle(f * PI)).collect()
}

pub fn run(a: &CollideArgs) -> Result<Vec<CollideRow>, CliError> {
    let thetas = a.theta_list.clone().unwrap_or_else(default_thetas);
    if thetas.is_empty() {
        return Err(CliError::Usage("--theta-list is empty".into()));
    }
    if let Some(t) = thetas.iter().find(|t| !(0.0..=PI).contains(&t.0)) {
        return Err(CliError::Usage(format!("theta {t} outside [0, pi]")));
    }
    let trials = a.trials.unwrap_or(100_000);
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let config = LshConfig::new(
        a.bands.unwrap_or(2),
        a.table_size.unwrap_or(64),
        a.num_hash_fns.unwrap_or(1),
        positive("dim", a.dim.unwrap_or(64))?,
        a.seed.unwrap_or(0),
    )?;
    thetas
        .iter()
        .map(|&Angle(theta)| {
            let analytic = analytic_collision_probability(theta, &config)?;
            let est = monte_carlo_collisions(theta, &config, trials, config.seed)?;
            Ok(CollideRow {
                theta,
                bands: config.bands,
                table_size: config.table_size,
                num_hash_fns: config.num_hash_fns,
                dim: config.dim,
                trials,
                analytic,
                empirical: est.rate(),
                std_error: est.std_error(),
                abs_gap: (est.rate() - analytic).abs(),
            })
        })
        .collect()
}

pub fn render(rows: &[CollideRow], format: Format) -> Result<String, CliError> {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows),
    }
}
