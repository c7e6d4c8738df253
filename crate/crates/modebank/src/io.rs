//! Versioned file formats: filter-bank and diagnosis-parameter files (TOML),
//! trace and sweep exports (CSV), Monte-Carlo reports (TOML).
//!
//! Floats are written with shortest round-trip precision, so a bank written
//! and reloaded reproduces residuals bit-for-bit.

use crate::diagnosis::DiagnosisParams;
use crate::error::{CoreError, Result};
use crate::invalidation::InvalidationOutcome;
use crate::sim::{MonteCarloReport, SimulationTrace};
use crate::synthesis::{FilterBank, ResidualFilter, SynthesisConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

fn check_version(version: u32, what: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(CoreError::Format(format!(
            "{what}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankFile {
    pub format_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub n_modes: usize,
    pub rows: usize,
    pub numerator_degree: usize,
    pub denominator_roots: Vec<f64>,
    pub feasibility_margin: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub tol: f64,
    pub filters: Vec<FilterRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterRecord {
    pub controller: usize,
    pub target: usize,
    pub n_x: usize,
    pub n_y: usize,
    /// Numerator coefficient rows N_0 .. N_dN.
    pub numerator: Vec<Vec<f64>>,
    /// Plant modes carrying certified η values (parallel to `eta`).
    pub eta_modes: Vec<usize>,
    pub eta: Vec<f64>,
    /// Enforced modes with certified steady gains (parallel to `steady_gains`).
    pub gain_modes: Vec<usize>,
    pub steady_gains: Vec<f64>,
    pub signs: Vec<i8>,
    pub decoupling_residual: f64,
    pub alpha: f64,
    pub gamma: f64,
}

/// Serialize a bank (with an optional config digest) to TOML text.
pub fn bank_to_toml(bank: &FilterBank, config_digest: Option<String>) -> Result<String> {
    let cfg = &bank.config;
    let filters = bank
        .filters()
        .iter()
        .map(|f| {
            let (gain_modes, steady_gains): (Vec<usize>, Vec<f64>) =
                f.steady_gains.iter().map(|(&h, &g)| (h, g)).unzip();
            let signs = f.sign_pattern.values().copied().collect();
            let (eta_modes, eta): (Vec<usize>, Vec<f64>) =
                f.eta.iter().map(|(&h, &e)| (h, e)).unzip();
            FilterRecord {
                controller: f.controller,
                target: f.target,
                n_x: f.n_x,
                n_y: f.n_y,
                numerator: (0..f.numerator.nrows())
                    .map(|r| f.numerator.row(r).iter().copied().collect())
                    .collect(),
                eta_modes,
                eta,
                gain_modes,
                steady_gains,
                signs,
                decoupling_residual: f.decoupling_residual,
                alpha: f.alpha_gamma.0,
                gamma: f.alpha_gamma.1,
            }
        })
        .collect();
    let file = BankFile {
        format_version: FORMAT_VERSION,
        config_digest,
        n_modes: bank.n_modes(),
        rows: bank.rows(),
        numerator_degree: cfg.numerator_degree,
        denominator_roots: cfg.denominator_roots.clone(),
        feasibility_margin: cfg.feasibility_margin,
        alpha: cfg.alpha,
        gamma: cfg.gamma,
        tol: cfg.tol,
        filters,
    };
    toml::to_string_pretty(&file).map_err(|e| CoreError::Format(e.to_string()))
}

/// Parse a bank file back into a `FilterBank`.
pub fn bank_from_toml(text: &str) -> Result<FilterBank> {
    let file: BankFile = toml::from_str(text).map_err(|e| CoreError::Format(e.to_string()))?;
    check_version(file.format_version, "bank file")?;
    let mut cfg = SynthesisConfig::from_roots(file.denominator_roots.clone())?;
    cfg.feasibility_margin = file.feasibility_margin;
    cfg.alpha = file.alpha;
    cfg.gamma = file.gamma;
    cfg.tol = file.tol;
    if cfg.numerator_degree != file.numerator_degree {
        return Err(CoreError::Format(format!(
            "bank file: numerator degree {} inconsistent with {} roots",
            file.numerator_degree,
            file.denominator_roots.len()
        )));
    }
    let a_coeffs = cfg.a_coeffs();
    let filters = file
        .filters
        .iter()
        .map(|rec| {
            if rec.numerator.len() != file.numerator_degree + 1 {
                return Err(CoreError::Format(format!(
                    "filter ({},{}): {} numerator rows, expected {}",
                    rec.controller,
                    rec.target,
                    rec.numerator.len(),
                    file.numerator_degree + 1
                )));
            }
            let width = rec.n_x + rec.n_y;
            if rec.numerator.iter().any(|row| row.len() != width) {
                return Err(CoreError::Format(format!(
                    "filter ({},{}): numerator row width mismatch",
                    rec.controller, rec.target
                )));
            }
            if rec.eta_modes.len() != rec.eta.len()
                || rec.gain_modes.len() != rec.steady_gains.len()
                || rec.gain_modes.len() != rec.signs.len()
            {
                return Err(CoreError::Format(format!(
                    "filter ({},{}): parallel array lengths differ",
                    rec.controller, rec.target
                )));
            }
            let numerator = DMatrix::from_fn(file.numerator_degree + 1, width, |r, c| {
                rec.numerator[r][c]
            });
            Ok(ResidualFilter {
                controller: rec.controller,
                target: rec.target,
                numerator,
                n_x: rec.n_x,
                n_y: rec.n_y,
                roots: file.denominator_roots.clone(),
                a_coeffs: a_coeffs.clone(),
                eta: rec
                    .eta_modes
                    .iter()
                    .copied()
                    .zip(rec.eta.iter().copied())
                    .collect(),
                steady_gains: rec
                    .gain_modes
                    .iter()
                    .copied()
                    .zip(rec.steady_gains.iter().copied())
                    .collect(),
                sign_pattern: rec
                    .gain_modes
                    .iter()
                    .copied()
                    .zip(rec.signs.iter().copied())
                    .collect(),
                decoupling_residual: rec.decoupling_residual,
                alpha_gamma: (rec.alpha, rec.gamma),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FilterBank::new(filters, file.rows, file.n_modes, cfg)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub format_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub beta: f64,
    pub mu: f64,
    pub mu_bar: f64,
    pub zeta: f64,
    pub d_bar: Vec<f64>,
    pub eta_bar: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Matched times as [from, to, T] triples.
    pub matched_times: Vec<[usize; 3]>,
    pub waiting: Vec<usize>,
}

pub fn params_to_toml(params: &DiagnosisParams, config_digest: Option<String>) -> Result<String> {
    let file = ParamsFile {
        format_version: FORMAT_VERSION,
        config_digest,
        beta: params.beta,
        mu: params.mu,
        mu_bar: params.mu_bar,
        zeta: params.zeta,
        d_bar: params.d_bar.iter().copied().collect(),
        eta_bar: params.eta_bar.clone(),
        epsilon: params.epsilon.clone(),
        matched_times: params
            .matched_times
            .iter()
            .map(|(&(i, j), &t)| [i, j, t])
            .collect(),
        waiting: params.waiting.clone(),
    };
    toml::to_string_pretty(&file).map_err(|e| CoreError::Format(e.to_string()))
}

pub fn params_from_toml(text: &str) -> Result<DiagnosisParams> {
    let file: ParamsFile = toml::from_str(text).map_err(|e| CoreError::Format(e.to_string()))?;
    check_version(file.format_version, "params file")?;
    let matched_times: BTreeMap<(usize, usize), usize> = file
        .matched_times
        .iter()
        .map(|&[i, j, t]| ((i, j), t))
        .collect();
    Ok(DiagnosisParams {
        beta: file.beta,
        mu: file.mu,
        mu_bar: file.mu_bar,
        zeta: file.zeta,
        d_bar: DVector::from_vec(file.d_bar),
        eta_bar: file.eta_bar,
        epsilon: file.epsilon,
        matched_times,
        waiting: file.waiting,
    })
}

/// Trace export: `k,sigma,sigma_hat,x1..,y1..,r1..,isolation`.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, mut out: W) -> Result<()> {
    let first = trace
        .steps
        .first()
        .ok_or_else(|| CoreError::Format("empty trace".into()))?;
    let (n_x, n_y, n_r) = (first.x.len(), first.y.len(), first.residuals.len());
    let mut header = vec!["k".to_string(), "sigma".into(), "sigma_hat".into()];
    header.extend((1..=n_x).map(|i| format!("x{i}")));
    header.extend((1..=n_y).map(|i| format!("y{i}")));
    header.extend((1..=n_r).map(|i| format!("r{i}")));
    header.push("isolation".into());
    writeln!(out, "{}", header.join(","))?;
    for s in &trace.steps {
        let mut row = vec![s.k.to_string(), s.sigma.to_string(), s.sigma_hat.to_string()];
        row.extend(s.x.iter().map(|v| format!("{v}")));
        row.extend(s.y.iter().map(|v| format!("{v}")));
        row.extend(s.residuals.iter().map(|v| format!("{v}")));
        row.push(if s.isolation { "1".into() } else { "0".into() });
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Sweep export: `k,feasible` rows in the same delimiter-separated format.
pub fn write_sweep_csv<W: Write>(
    sweep: &[(usize, InvalidationOutcome)],
    mut out: W,
) -> Result<()> {
    writeln!(out, "k,feasible")?;
    for (k, outcome) in sweep {
        let f = match outcome {
            InvalidationOutcome::Feasible { .. } => 1,
            InvalidationOutcome::Infeasible => 0,
        };
        writeln!(out, "{k},{f}")?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub format_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub runs: usize,
    pub seed: u64,
    pub transitions: Vec<TransitionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRecord {
    pub from: usize,
    pub to: usize,
    pub at: usize,
    pub runs: usize,
    pub isolated: usize,
    pub wrong: usize,
    pub adt: f64,
    pub wdp: f64,
    /// Histogram as [delay, count] pairs.
    pub delay_histogram: Vec<[usize; 2]>,
}

pub fn report_to_toml(report: &MonteCarloReport, config_digest: Option<String>) -> Result<String> {
    let file = ReportFile {
        format_version: FORMAT_VERSION,
        config_digest,
        runs: report.runs,
        seed: report.seed,
        transitions: report
            .transitions
            .iter()
            .map(|t| TransitionRecord {
                from: t.from,
                to: t.to,
                at: t.at,
                runs: t.runs,
                isolated: t.isolated,
                wrong: t.wrong,
                adt: t.adt,
                wdp: t.wdp(),
                delay_histogram: t
                    .delay_histogram
                    .iter()
                    .map(|(&d, &c)| [d, c])
                    .collect(),
            })
            .collect(),
    };
    toml::to_string_pretty(&file).map_err(|e| CoreError::Format(e.to_string()))
}

/// Write text to a file path.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{IsolationEvent, TraceStep};

    #[test]
    fn params_roundtrip_exact() {
        let params = DiagnosisParams {
            beta: 0.05,
            mu: 0.5,
            mu_bar: 0.5,
            zeta: 1.0,
            d_bar: DVector::from_vec(vec![0.5]),
            eta_bar: vec![8.302e-4, 9.573e-4, 8.416e-4],
            epsilon: vec![0.0927, 0.0995, 0.0933],
            matched_times: [((1, 2), 4usize), ((2, 1), 8)].into_iter().collect(),
            waiting: vec![8, 4, 7],
        };
        let text = params_to_toml(&params, Some("digest".into())).unwrap();
        let back = params_from_toml(&text).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = "format_version = 99\nbeta = 0.05\nmu = 0.5\nmu_bar = 0.5\nzeta = 1.0\nd_bar = [0.5]\neta_bar = []\nepsilon = []\nmatched_times = []\nwaiting = []\n";
        assert!(matches!(params_from_toml(text), Err(CoreError::Format(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "format_version = 1\nbeta = 0.05\nmu = 0.5\nmu_bar = 0.5\nzeta = 1.0\nd_bar = [0.5]\neta_bar = []\nepsilon = []\nmatched_times = []\nwaiting = []\nsurprise = 3\n";
        assert!(params_from_toml(text).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let trace = SimulationTrace {
            steps: vec![TraceStep {
                k: 0,
                sigma: 1,
                sigma_hat: 1,
                x: DVector::from_vec(vec![1.0, 2.0]),
                y: DVector::from_vec(vec![0.5]),
                residuals: vec![0.1, -0.2],
                isolation: true,
            }],
            events: vec![IsolationEvent {
                tick: 1,
                from: 1,
                to: 2,
            }],
        };
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,sigma,sigma_hat,x1,x2,y1,r1,r2,isolation");
        assert_eq!(lines.next().unwrap(), "0,1,1,1,2,0.5,0.1,-0.2,1");
    }

    #[test]
    fn empty_trace_is_an_error() {
        let trace = SimulationTrace {
            steps: vec![],
            events: vec![],
        };
        let mut buf = Vec::new();
        assert!(write_trace_csv(&trace, &mut buf).is_err());
    }
}
