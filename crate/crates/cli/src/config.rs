//! TOML run configuration.
//!
//! Matrices are given as row lists; dimensions are inferred and
//! cross-checked. The filter accepts either the general form `(H, B, a)`
//! or the two-dimensional shorthand `(mu1, mu2, beta, a1, a2)`. Unknown
//! keys are rejected everywhere.

use oustab::numerics::{RMatrix, RVector};
use oustab::truncation::Filter2Spec;
use oustab::FilterSpec;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub filter: Option<FilterSection>,
    pub system: Option<SystemSection>,
    pub truncation: Option<TruncationSection>,
    pub simulate: Option<SimulateSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(rename = "H")]
    pub h: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Option<Vec<Vec<f64>>>,
    pub a: Option<Vec<f64>>,
    // two-dimensional shorthand
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub beta: Option<f64>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    pub p: usize,
    pub epsilon: f64,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    #[serde(rename = "N_m")]
    pub n_m: usize,
    #[serde(rename = "N_h")]
    pub n_h: usize,
    pub tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub paths: usize,
    pub seed: u64,
    pub burn_in: Option<f64>,
    pub n_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    pub formats: Option<Vec<String>>,
}

/// Schema-level failure: malformed matrices, missing sections, keys that
/// cannot be combined.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

pub fn parse(text: &str) -> Result<RunConfig, SchemaError> {
    toml::from_str(text).map_err(|e| SchemaError(e.to_string()))
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<RMatrix, SchemaError> {
    if rows.is_empty() {
        return Err(SchemaError(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(SchemaError(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(RMatrix::from_row_slice(rows.len(), cols, &flat))
}

impl FilterSection {
    /// The general filter, from either form.
    pub fn to_filter_spec(&self) -> Result<FilterSpec, SchemaError> {
        let general = self.h.is_some() || self.b.is_some() || self.a.is_some();
        let shorthand = self.mu1.is_some()
            || self.mu2.is_some()
            || self.beta.is_some()
            || self.a1.is_some()
            || self.a2.is_some();
        match (general, shorthand) {
            (true, true) => Err(SchemaError(
                "filter: give either (H, B, a) or (mu1, mu2, beta, a1, a2), not both".into(),
            )),
            (false, false) => Err(SchemaError("filter: no parameters given".into())),
            (true, false) => {
                let h = matrix_from_rows(
                    self.h
                        .as_ref()
                        .ok_or(SchemaError("filter: H missing".into()))?,
                    "filter.H",
                )?;
                let b = matrix_from_rows(
                    self.b
                        .as_ref()
                        .ok_or(SchemaError("filter: B missing".into()))?,
                    "filter.B",
                )?;
                let a = self
                    .a
                    .clone()
                    .ok_or(SchemaError("filter: a missing".into()))?;
                FilterSpec::new(h, b, RVector::from_vec(a))
                    .map_err(|e| SchemaError(format!("filter: {e}")))
            }
            (false, true) => self.to_filter2().map(|f2| f2.to_filter_spec()),
        }
    }

    /// The two-dimensional family, required by the truncation solver.
    pub fn to_filter2(&self) -> Result<Filter2Spec, SchemaError> {
        if let (Some(mu1), Some(mu2), Some(beta), Some(a1), Some(a2)) =
            (self.mu1, self.mu2, self.beta, self.a1, self.a2)
        {
            return Filter2Spec::new(mu1, mu2, beta, a1, a2)
                .map_err(|e| SchemaError(format!("filter: {e}")));
        }
        // coerce the general form when it matches the family exactly
        if let (Some(h_rows), Some(b_rows), Some(a)) = (&self.h, &self.b, &self.a) {
            let h = matrix_from_rows(h_rows, "filter.H")?;
            let b = matrix_from_rows(b_rows, "filter.B")?;
            let family = h.nrows() == 2
                && h[(0, 1)] == 0.0
                && b == RMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])
                && a.len() == 2;
            if family {
                return Filter2Spec::new(-h[(0, 0)], -h[(1, 1)], h[(1, 0)], a[0], a[1])
                    .map_err(|e| SchemaError(format!("filter: {e}")));
            }
            return Err(SchemaError(
                "truncation needs the two-dimensional family H = [[-mu1, 0], [beta, -mu2]], \
                 B = [[1, 0], [0, 0]]; use the shorthand keys"
                    .into(),
            ));
        }
        Err(SchemaError(
            "filter: shorthand needs all of mu1, mu2, beta, a1, a2".into(),
        ))
    }
}

impl SystemSection {
    pub fn to_system_spec(&self) -> Result<oustab::SystemSpec, SchemaError> {
        let a0 = matrix_from_rows(&self.a0, "system.A0")?;
        let a1 = matrix_from_rows(&self.a1, "system.A1")?;
        oustab::SystemSpec::new(a0, a1, self.p, self.epsilon)
            .map_err(|e| SchemaError(format!("system: {e}")))
    }
}

impl SimulateSection {
    pub fn to_sim_config(
        &self,
        seed_override: Option<u64>,
        x0: Option<Vec<f64>>,
    ) -> oustab::SimConfig {
        oustab::SimConfig {
            dt: self.dt,
            t_final: self.t_final,
            paths: self.paths,
            seed: seed_override.unwrap_or(self.seed),
            burn_in: self.burn_in.unwrap_or(0.1),
            x0: x0.map(RVector::from_vec),
            n_samples: self.n_samples.unwrap_or(512),
        }
    }
}
