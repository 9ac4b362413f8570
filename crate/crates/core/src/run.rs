//! Run orchestration: the global and DG pipelines, comparison reports,
//! parameter sweeps, and result persistence.

use crate::config::{compile, Compiled, Mode, RunConfig, SweepParameter};
use crate::dg::{DgEigenStep, DgParams, DgTimings};
use crate::error::{Error, Result};
use crate::grids::fourier::Fft3;
use crate::grids::{UniformField, UniformGrid};
use crate::hamiltonian::PseudoPotential;
use crate::reference::GlobalEigenStep;
use crate::scf::{scf_loop, ScfIterationRecord, ScfOutcome, ScfParams};
use crate::HARTREE_TO_MEV;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{Duration, Instant};

const GLOBAL_SEED_SALT: u64 = 0x676c6f62616c5f73;
const DG_SEED_SALT: u64 = 0x64675f7365656473;

/// Superposition of per-atom Gaussians (each atom's local width),
/// normalized to the electron count by the SCF driver.
pub fn initial_density(pseudo: &PseudoPotential, grid: &UniformGrid) -> UniformField {
    let domain = *pseudo.domain();
    let atoms: Vec<([f64; 3], f64)> = pseudo
        .atoms()
        .iter()
        .map(|a| (a.position, a.width))
        .collect();
    UniformField::from_fn(*grid, |p| {
        let mut rho = 0.0;
        for (pos, w) in &atoms {
            let d = domain.min_image([p[0] - pos[0], p[1] - pos[1], p[2] - pos[2]]);
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            rho += (-0.5 * r2 / (w * w)).exp();
        }
        rho
    })
}

fn scf_params(c: &Compiled) -> ScfParams {
    ScfParams {
        tolerance: c.config.scf.tolerance,
        max_iterations: c.config.scf.max_iterations,
        mixing: c.config.scf.mixing,
        temperature_k: c.config.electrons.temperature_k,
        n_electrons: c.n_electrons,
    }
}

pub struct GlobalOutcome {
    pub scf: ScfOutcome,
    pub wall: Duration,
}

pub struct DgOutcome {
    pub scf: ScfOutcome,
    pub wall: Duration,
    pub timings: DgTimings,
}

/// Self-consistent global-domain solve (planewave reference).
pub fn solve_global(c: &Compiled) -> Result<GlobalOutcome> {
    let t0 = Instant::now();
    let fft = Fft3::new(c.global_grid.shape());
    let v_ext = c.pseudo.external_potential(&c.global_grid);
    let rho0 = initial_density(&c.pseudo, &c.global_grid);
    let mut step = GlobalEigenStep::new(
        &c.pseudo,
        c.global_grid,
        c.n_states,
        c.config.scf.global_inner_iterations,
        c.config.scf.eigensolver_tol,
        c.config.run.seed ^ GLOBAL_SEED_SALT,
    );
    let scf = scf_loop(
        &mut step,
        &scf_params(c),
        &v_ext,
        c.config.hamiltonian,
        rho0,
        &fft,
    )?;
    Ok(GlobalOutcome {
        scf,
        wall: t0.elapsed(),
    })
}

/// Self-consistent DG solve with adaptive local bases.
pub fn solve_dg(c: &Compiled) -> Result<DgOutcome> {
    let t0 = Instant::now();
    let fft = Fft3::new(c.global_grid.shape());
    let v_ext = c.pseudo.external_potential(&c.global_grid);
    let rho0 = initial_density(&c.pseudo, &c.global_grid);
    let params = DgParams {
        alpha: c.config.dg.alpha,
        n_states: c.n_states,
        inner_iterations: c.config.scf.basis_inner_iterations,
        solver_tol: c.config.scf.eigensolver_tol,
        svd_threshold: c.config.dg.svd_threshold,
        max_dense_dim: c.config.dg.max_dense_dim,
    };
    let mut step = DgEigenStep::new(
        &c.partition,
        &c.pseudo,
        c.global_grid,
        c.buffer_au,
        c.lgl_orders,
        c.basis_per_element,
        params,
        c.workers,
        c.config.run.seed ^ DG_SEED_SALT,
    )?;
    let scf = scf_loop(
        &mut step,
        &scf_params(c),
        &v_ext,
        c.config.hamiltonian,
        rho0,
        &fft,
    )?;
    let timings = step.timings;
    Ok(DgOutcome {
        scf,
        wall: t0.elapsed(),
        timings,
    })
}

/// Wall-clock decomposition mirroring the cost breakdown of the method:
/// basis generation, DG assembly, DG dense eigensolve, global solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub basis_generation_s: f64,
    pub assembly_s: f64,
    pub dg_eigensolve_s: f64,
    pub global_solve_s: f64,
    pub total_s: f64,
}

/// One solver's persisted record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverRecord {
    pub total_energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub chemical_potential: f64,
    pub eigenvalues: Vec<f64>,
    pub occupations: Vec<f64>,
    pub energy: crate::hamiltonian::EnergyReport,
    pub history: Vec<ScfIterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_gram_deviation: Option<f64>,
    pub wall_seconds: f64,
}

impl SolverRecord {
    fn from_scf(scf: &ScfOutcome, wall: Duration, gram: bool) -> Self {
        SolverRecord {
            total_energy: scf.energy.total,
            converged: scf.converged,
            iterations: scf.iterations,
            chemical_potential: scf.chemical_potential,
            eigenvalues: scf.eigenvalues.clone(),
            occupations: scf.occupations.clone(),
            energy: scf.energy,
            history: scf.history.clone(),
            max_gram_deviation: gram.then_some(scf.max_gram_deviation),
            wall_seconds: wall.as_secs_f64(),
        }
    }
}

/// Energy agreement between the two independent pipelines.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub e_glb: f64,
    pub e_dg: f64,
    pub n_atoms: usize,
    pub error_per_atom_au: f64,
    pub error_per_atom_mev: f64,
    pub scf_iterations_global: usize,
    pub scf_iterations_dg: usize,
    pub both_converged: bool,
    pub timings: Timings,
}

impl ComparisonReport {
    pub fn build(global: &GlobalOutcome, dg: &DgOutcome, n_atoms: usize) -> Self {
        let e_glb = global.scf.energy.total;
        let e_dg = dg.scf.energy.total;
        let err_au = (e_glb - e_dg).abs() / n_atoms as f64;
        ComparisonReport {
            e_glb,
            e_dg,
            n_atoms,
            error_per_atom_au: err_au,
            error_per_atom_mev: err_au * HARTREE_TO_MEV,
            scf_iterations_global: global.scf.iterations,
            scf_iterations_dg: dg.scf.iterations,
            both_converged: global.scf.converged && dg.scf.converged,
            timings: Timings {
                basis_generation_s: dg.timings.basis_generation.as_secs_f64(),
                assembly_s: dg.timings.assembly.as_secs_f64(),
                dg_eigensolve_s: dg.timings.eigensolve.as_secs_f64(),
                global_solve_s: global.wall.as_secs_f64(),
                total_s: global.wall.as_secs_f64() + dg.wall.as_secs_f64(),
            },
        }
    }
}

/// The persisted result of one run: config echo plus per-pipeline records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global: Option<SolverRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dg: Option<SolverRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResult>,
}

/// One row of a sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub e_glb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_dg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_per_atom_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_per_atom_mev: Option<f64>,
    pub dg_converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub basis_generation_s: f64,
    pub assembly_s: f64,
    pub dg_eigensolve_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
    /// Log-log slope of error vs parameter over successful rows
    /// (reported for alpha sweeps).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loglog_slope: Option<f64>,
}

/// Applies one sweep value to a config.
fn apply_sweep_value(config: &mut RunConfig, parameter: SweepParameter, value: f64) -> Result<()> {
    match parameter {
        SweepParameter::Alpha => {
            config.dg.alpha = value;
        }
        SweepParameter::Jk => {
            let per_atom = value.round() as usize;
            if (value - per_atom as f64).abs() > 1e-9 || per_atom == 0 {
                return Err(Error::config(
                    "sweep.values",
                    format!("jk value {value} is not a positive integer"),
                ));
            }
            config.dg.basis_per_atom = Some(per_atom);
            config.dg.basis_per_element = None;
        }
        SweepParameter::Buffer => {
            // Value in element-edge units, applied to every axis that
            // already has a nonzero buffer; if all are zero it applies to
            // the longest axis of the partition (quasi-1D convention).
            let mut any = false;
            for b in config.dg.buffer_cells.iter_mut() {
                if *b > 0.0 {
                    *b = value;
                    any = true;
                }
            }
            if !any {
                let counts = config.partition.counts;
                let axis = (0..3).max_by_key(|&a| counts[a]).unwrap_or(2);
                config.dg.buffer_cells[axis] = value;
            }
        }
    }
    Ok(())
}

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Runs one compare per sweep value with everything else fixed. The global
/// pipeline does not depend on any swept parameter, so its (seeded,
/// deterministic) solution is computed once and reused. Failed points are
/// recorded and skipped.
pub fn sweep(base: &RunConfig, parameter: SweepParameter, values: &[f64], workers: Option<usize>) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "no sweep values given"));
    }
    let reference = compile(base.clone(), workers)?;
    let global = solve_global(&reference)?;
    let e_glb = global.scf.energy.total;
    let n_atoms = reference.atom_positions.len();

    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut config = base.clone();
        let row = apply_sweep_value(&mut config, parameter, value)
            .and_then(|()| compile(config, workers))
            .and_then(|compiled| solve_dg(&compiled));
        match row {
            Ok(dg) => {
                let err_au = (e_glb - dg.scf.energy.total).abs() / n_atoms as f64;
                rows.push(SweepRow {
                    value,
                    e_glb,
                    e_dg: Some(dg.scf.energy.total),
                    error_per_atom_au: Some(err_au),
                    error_per_atom_mev: Some(err_au * HARTREE_TO_MEV),
                    dg_converged: dg.scf.converged,
                    failure: None,
                    basis_generation_s: dg.timings.basis_generation.as_secs_f64(),
                    assembly_s: dg.timings.assembly.as_secs_f64(),
                    dg_eigensolve_s: dg.timings.eigensolve.as_secs_f64(),
                });
            }
            Err(e) => {
                log::warn!("sweep point {parameter:?} = {value} failed: {e}");
                rows.push(SweepRow {
                    value,
                    e_glb,
                    e_dg: None,
                    error_per_atom_au: None,
                    error_per_atom_mev: None,
                    dg_converged: false,
                    failure: Some(e.to_string()),
                    basis_generation_s: 0.0,
                    assembly_s: 0.0,
                    dg_eigensolve_s: 0.0,
                });
            }
        }
    }

    let slope = if parameter == SweepParameter::Alpha {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.dg_converged)
            .filter_map(|r| r.error_per_atom_au.map(|e| (r.value, e)))
            .collect();
        loglog_slope(&pts)
    } else {
        None
    };

    Ok(SweepResult {
        parameter,
        rows,
        loglog_slope: slope,
    })
}

/// Renders the sweep table as tab-separated values for plotting.
pub fn sweep_table(result: &SweepResult) -> String {
    let mut out = String::from(
        "value\te_glb_au\te_dg_au\terror_per_atom_au\terror_per_atom_mev\
         \tdg_converged\tbasis_s\tassembly_s\tdg_eig_s\n",
    );
    for r in &result.rows {
        let fmt = |v: Option<f64>| v.map_or("failed".to_string(), |x| format!("{x:.12e}"));
        out.push_str(&format!(
            "{}\t{:.12e}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\n",
            r.value,
            r.e_glb,
            fmt(r.e_dg),
            fmt(r.error_per_atom_au),
            fmt(r.error_per_atom_mev),
            r.dg_converged,
            r.basis_generation_s,
            r.assembly_s,
            r.dg_eigensolve_s,
        ));
    }
    out
}

fn human_summary(result: &RunResult) -> String {
    let mut s = String::new();
    s.push_str(&format!("mode: {:?}\n", result.mode));
    if let Some(g) = &result.global {
        s.push_str(&format!(
            "global: E_tot = {:.10} au, converged = {}, iterations = {}\n",
            g.total_energy, g.converged, g.iterations
        ));
    }
    if let Some(d) = &result.dg {
        s.push_str(&format!(
            "dg:     E_tot = {:.10} au, converged = {}, iterations = {}\n",
            d.total_energy, d.converged, d.iterations
        ));
    }
    if let Some(c) = &result.comparison {
        s.push_str(&format!(
            "error per atom: {:.3e} au ({:.3e} meV) over {} atoms\n",
            c.error_per_atom_au, c.error_per_atom_mev, c.n_atoms
        ));
        s.push_str(&format!(
            "timings: basis {:.2}s, assembly {:.2}s, dg eig {:.2}s, global {:.2}s\n",
            c.timings.basis_generation_s,
            c.timings.assembly_s,
            c.timings.dg_eigensolve_s,
            c.timings.global_solve_s
        ));
    }
    if let Some(sw) = &result.sweep {
        s.push_str(&format!(
            "sweep over {:?}: {} points",
            sw.parameter,
            sw.rows.len()
        ));
        if let Some(slope) = sw.loglog_slope {
            s.push_str(&format!(", log-log slope {slope:.3}"));
        }
        s.push('\n');
    }
    s
}

/// Executes the configured mode and persists a machine-readable result
/// file plus a human-readable summary in the output directory.
pub fn run(config: RunConfig, workers_override: Option<usize>) -> Result<RunResult> {
    let compiled = compile(config.clone(), workers_override)?;
    let mode = compiled.config.run.mode;
    let n_atoms = compiled.atom_positions.len();

    let mut result = RunResult {
        config: config.clone(),
        mode,
        global: None,
        dg: None,
        comparison: None,
        sweep: None,
    };

    match mode {
        Mode::Global => {
            let g = solve_global(&compiled)?;
            result.global = Some(SolverRecord::from_scf(&g.scf, g.wall, false));
        }
        Mode::Dg => {
            let d = solve_dg(&compiled)?;
            result.dg = Some(SolverRecord::from_scf(&d.scf, d.wall, true));
        }
        Mode::Compare => {
            let g = solve_global(&compiled)?;
            let d = solve_dg(&compiled)?;
            result.comparison = Some(ComparisonReport::build(&g, &d, n_atoms));
            result.global = Some(SolverRecord::from_scf(&g.scf, g.wall, false));
            result.dg = Some(SolverRecord::from_scf(&d.scf, d.wall, true));
        }
        Mode::Sweep => {
            let sweep_cfg = compiled
                .config
                .sweep
                .clone()
                .ok_or_else(|| Error::config("sweep", "missing [sweep] section"))?;
            result.sweep = Some(sweep(
                &config,
                sweep_cfg.parameter,
                &sweep_cfg.values,
                workers_override,
            )?);
        }
    }

    persist(&result, Path::new(&config.run.output_dir))?;
    Ok(result)
}

/// Writes result.json, summary.txt, and (for sweeps) sweep.tsv.
pub fn persist(result: &RunResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(result)?;
    std::fs::write(dir.join("result.json"), json)?;
    std::fs::write(dir.join("summary.txt"), human_summary(result))?;
    if let Some(sw) = &result.sweep {
        std::fs::write(dir.join("sweep.tsv"), sweep_table(sw))?;
    }
    Ok(())
}

/// Reads a persisted result file back.
pub fn load_result(path: &Path) -> Result<RunResult> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [20.0, 40.0, 80.0, 160.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(0.66)))
            .collect();
        let s = loglog_slope(&pts).unwrap();
        approx::assert_abs_diff_eq!(s, 0.66, epsilon = 1e-12);
    }

    #[test]
    fn sweep_value_application() {
        let mut config: RunConfig =
            toml::from_str(&crate::config::tests::minimal_toml()).unwrap();
        apply_sweep_value(&mut config, SweepParameter::Alpha, 80.0).unwrap();
        assert_eq!(config.dg.alpha, 80.0);
        apply_sweep_value(&mut config, SweepParameter::Jk, 8.0).unwrap();
        assert_eq!(config.dg.basis_per_atom, Some(8));
        assert!(apply_sweep_value(&mut config, SweepParameter::Jk, 2.5).is_err());
        // Buffer applies to the longest partition axis when all are zero.
        config.partition.counts = [1, 1, 4];
        apply_sweep_value(&mut config, SweepParameter::Buffer, 0.5).unwrap();
        assert_eq!(config.dg.buffer_cells, [0.0, 0.0, 0.5]);
    }
}
