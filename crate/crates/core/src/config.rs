//! Run configuration: TOML schema, cross-field validation with
//! field-named errors, lattice/supercell generation, and compilation into
//! the geometric and physical objects the pipelines consume.

use crate::error::{Error, Result};
use crate::geometry::{Domain, Partition, AXIS_NAMES};
use crate::grids::UniformGrid;
use crate::hamiltonian::{AtomSpec, HamiltonianOptions, ProjectorSpec, PseudoPotential};
use crate::scf::MixingScheme;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Global,
    Dg,
    Compare,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Jk,
    Buffer,
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub extents: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitAtom {
    pub position: [f64; 3],
    pub species: String,
}

/// Perfect lattice of `repeat` copies of a unit cell with uniformly
/// distributed random displacements applied per Cartesian coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub cell: [f64; 3],
    /// Atom positions inside one cell (au).
    pub basis: Vec<[f64; 3]>,
    /// Species name per basis atom.
    pub species: Vec<String>,
    pub repeat: [usize; 3],
    #[serde(default)]
    pub displacement: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesConfig {
    /// Local Gaussian well depth (au).
    pub depth: f64,
    /// Local Gaussian width (au).
    pub width: f64,
    #[serde(default)]
    pub projectors: Vec<ProjectorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectronsConfig {
    pub per_atom: usize,
    /// States carried by both solvers; defaults to enough headroom above
    /// the electron count for the Fermi smearing tail.
    #[serde(default)]
    pub n_states: Option<usize>,
    #[serde(default = "default_temperature")]
    pub temperature_k: f64,
}

fn default_temperature() -> f64 {
    2000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridsConfig {
    /// Global uniform grid spacing (au); defaults to element edge / 20.
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default = "default_lgl_order")]
    pub lgl_order: usize,
}

fn default_lgl_order() -> usize {
    20
}

impl Default for GridsConfig {
    fn default() -> Self {
        GridsConfig {
            spacing: None,
            lgl_order: default_lgl_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Buffer per axis in units of the element edge.
    pub buffer_cells: [f64; 3],
    #[serde(default)]
    pub basis_per_atom: Option<usize>,
    #[serde(default)]
    pub basis_per_element: Option<usize>,
    #[serde(default)]
    pub svd_threshold: f64,
    #[serde(default = "default_max_dense_dim")]
    pub max_dense_dim: usize,
}

fn default_alpha() -> f64 {
    20.0
}

fn default_max_dense_dim() -> usize {
    6000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScfConfig {
    #[serde(default = "default_scf_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_scf_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub mixing: MixingScheme,
    #[serde(default = "default_global_inner")]
    pub global_inner_iterations: usize,
    #[serde(default = "default_basis_inner")]
    pub basis_inner_iterations: usize,
    #[serde(default = "default_eigensolver_tol")]
    pub eigensolver_tol: f64,
}

fn default_scf_tolerance() -> f64 {
    1e-7
}
fn default_scf_max_iterations() -> usize {
    60
}
fn default_global_inner() -> usize {
    10
}
fn default_basis_inner() -> usize {
    3
}
fn default_eigensolver_tol() -> f64 {
    1e-9
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig {
            tolerance: default_scf_tolerance(),
            max_iterations: default_scf_max_iterations(),
            mixing: MixingScheme::default(),
            global_inner_iterations: default_global_inner(),
            basis_inner_iterations: default_basis_inner(),
            eigensolver_tol: default_eigensolver_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// 0 means all available parallelism.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_mode() -> Mode {
    Mode::Compare
}
fn default_seed() -> u64 {
    1234
}
fn default_output_dir() -> String {
    "out".to_string()
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: default_mode(),
            seed: default_seed(),
            workers: 0,
            output_dir: default_output_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Complete run configuration as read from the TOML file. This struct is
/// echoed verbatim into result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub atoms: Vec<ExplicitAtom>,
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
    pub species: BTreeMap<String, SpeciesConfig>,
    pub electrons: ElectronsConfig,
    #[serde(default)]
    pub grids: GridsConfig,
    #[serde(default = "HamiltonianOptions::default")]
    pub hamiltonian: HamiltonianOptions,
    pub dg: DgConfig,
    #[serde(default)]
    pub scf: ScfConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// Loads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(config)
}

/// Perfect lattice positions plus independent uniform displacements in
/// [-amplitude, amplitude] per Cartesian coordinate, wrapped into the
/// domain.
pub fn generate_supercell(
    cell: [f64; 3],
    basis: &[[f64; 3]],
    repeat: [usize; 3],
    displacement: f64,
    seed: u64,
) -> Vec<[f64; 3]> {
    let domain_ext = [
        cell[0] * repeat[0] as f64,
        cell[1] * repeat[1] as f64,
        cell[2] * repeat[2] as f64,
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(basis.len() * repeat.iter().product::<usize>());
    for i in 0..repeat[0] {
        for j in 0..repeat[1] {
            for k in 0..repeat[2] {
                for base in basis {
                    let mut pos = [
                        base[0] + i as f64 * cell[0],
                        base[1] + j as f64 * cell[1],
                        base[2] + k as f64 * cell[2],
                    ];
                    for p in pos.iter_mut() {
                        if displacement > 0.0 {
                            *p += rng.random_range(-displacement..=displacement);
                        }
                    }
                    for (a, p) in pos.iter_mut().enumerate() {
                        let ext = domain_ext[a];
                        let r = p.rem_euclid(ext);
                        *p = if r >= ext { 0.0 } else { r };
                    }
                    out.push(pos);
                }
            }
        }
    }
    out
}

/// Everything the pipelines need, derived from a validated configuration.
pub struct Compiled {
    pub config: RunConfig,
    pub domain: Domain,
    pub partition: Partition,
    pub pseudo: PseudoPotential,
    pub global_grid: UniformGrid,
    pub lgl_orders: [usize; 3],
    pub buffer_au: [f64; 3],
    pub basis_per_element: usize,
    pub n_electrons: f64,
    pub n_states: usize,
    pub workers: usize,
    pub atom_positions: Vec<[f64; 3]>,
}

fn cfg_err<T>(field: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::config(field, message))
}

/// Resolves atoms (explicit or lattice-generated) into positions and specs.
fn resolve_atoms(config: &RunConfig) -> Result<Vec<(String, [f64; 3])>> {
    match (&config.lattice, config.atoms.is_empty()) {
        (Some(lat), true) => {
            if lat.basis.len() != lat.species.len() {
                return cfg_err(
                    "lattice.species",
                    "one species name per basis atom required",
                );
            }
            if lat.basis.is_empty() {
                return cfg_err("lattice.basis", "at least one basis atom required");
            }
            if lat.displacement < 0.0 {
                return cfg_err("lattice.displacement", "must be nonnegative");
            }
            for a in 0..3 {
                let expect = lat.cell[a] * lat.repeat[a] as f64;
                if (expect - config.domain.extents[a]).abs() > 1e-9 {
                    return cfg_err(
                        "lattice.cell",
                        format!(
                            "cell * repeat = {expect} along {} does not match the \
                             domain extent {}",
                            AXIS_NAMES[a], config.domain.extents[a]
                        ),
                    );
                }
            }
            let positions = generate_supercell(
                lat.cell,
                &lat.basis,
                lat.repeat,
                lat.displacement,
                lat.seed,
            );
            let mut out = Vec::with_capacity(positions.len());
            let cells = lat.repeat.iter().product::<usize>();
            for c in 0..cells {
                for (b, name) in lat.species.iter().enumerate() {
                    out.push((name.clone(), positions[c * lat.basis.len() + b]));
                }
            }
            Ok(out)
        }
        (None, false) => Ok(config
            .atoms
            .iter()
            .map(|a| (a.species.clone(), a.position))
            .collect()),
        (Some(_), false) => cfg_err(
            "atoms",
            "give either an explicit atom list or a lattice generator, not both",
        ),
        (None, true) => cfg_err("atoms", "no atoms: give an atom list or a lattice"),
    }
}

/// Validates the configuration and builds the solver inputs. Worker count
/// resolution order: explicit override, DGSOLVE_WORKERS, config value,
/// available parallelism.
pub fn compile(config: RunConfig, workers_override: Option<usize>) -> Result<Compiled> {
    let ext = config.domain.extents;
    for (a, &e) in ext.iter().enumerate() {
        if !(e > 0.0) {
            return cfg_err(
                "domain.extents",
                format!("extent along {} must be positive", AXIS_NAMES[a]),
            );
        }
    }
    let domain = Domain::new(ext).map_err(|e| Error::config("domain.extents", e.to_string()))?;

    let counts = config.partition.counts;
    for (a, &c) in counts.iter().enumerate() {
        if c == 0 {
            return cfg_err(
                "partition.counts",
                format!("count along {} must be at least 1", AXIS_NAMES[a]),
            );
        }
    }
    let elem_edge = [
        ext[0] / counts[0] as f64,
        ext[1] / counts[1] as f64,
        ext[2] / counts[2] as f64,
    ];

    // Grid spacing: given or element-edge/20, and it must divide both the
    // domain extents and the element edges into whole steps.
    let spacing = config
        .grids
        .spacing
        .unwrap_or(elem_edge[0].min(elem_edge[1]).min(elem_edge[2]) / 20.0);
    if !(spacing > 0.0) {
        return cfg_err("grids.spacing", "must be positive");
    }
    let mut shape = [0usize; 3];
    for a in 0..3 {
        let pts = ext[a] / spacing;
        if (pts - pts.round()).abs() > 1e-9 {
            return cfg_err(
                "grids.spacing",
                format!(
                    "spacing {spacing} does not divide the domain extent {} along {}",
                    ext[a], AXIS_NAMES[a]
                ),
            );
        }
        shape[a] = pts.round() as usize;
        if shape[a] % counts[a] != 0 {
            return cfg_err(
                "grids.spacing",
                format!(
                    "{} grid points along {} are not divisible by the partition \
                     count {}",
                    shape[a], AXIS_NAMES[a], counts[a]
                ),
            );
        }
    }
    let global_grid = UniformGrid::new([0.0; 3], ext, shape)
        .map_err(|e| Error::config("grids", e.to_string()))?;

    if config.grids.lgl_order < 2 {
        return cfg_err("grids.lgl_order", "needs at least 2 nodes per axis");
    }

    // Atoms and species.
    let named = resolve_atoms(&config)?;
    let mut atom_specs = Vec::with_capacity(named.len());
    let min_ext = ext[0].min(ext[1]).min(ext[2]);
    for (name, position) in &named {
        let Some(sp) = config.species.get(name) else {
            return cfg_err("species", format!("species `{name}` is not defined"));
        };
        if !(sp.depth > 0.0) {
            return cfg_err(&format!("species.{name}.depth"), "must be positive");
        }
        if !(sp.width > 0.0) || sp.width > min_ext / 6.0 {
            return cfg_err(
                &format!("species.{name}.width"),
                format!(
                    "must lie in (0, extent/6] = (0, {}] for the 1-shell image sum",
                    min_ext / 6.0
                ),
            );
        }
        for (i, p) in sp.projectors.iter().enumerate() {
            let field = format!("species.{name}.projectors[{i}]");
            if p.sign != 1.0 && p.sign != -1.0 {
                return cfg_err(&field, "sign must be +1 or -1");
            }
            if !(p.width > 0.0) {
                return cfg_err(&field, "width must be positive");
            }
            if p.coupling < 0.0 {
                return cfg_err(&field, "coupling must be nonnegative");
            }
            if !(p.cutoff > 0.0) || p.cutoff > 0.5 * min_ext {
                return cfg_err(
                    &field,
                    format!("cutoff must lie in (0, {}]", 0.5 * min_ext),
                );
            }
        }
        atom_specs.push(AtomSpec {
            position: *position,
            depth: sp.depth,
            width: sp.width,
            projectors: sp.projectors.clone(),
        });
    }
    let positions: Vec<[f64; 3]> = atom_specs.iter().map(|a| a.position).collect();

    let partition = Partition::build(domain, counts, &positions)
        .map_err(|e| Error::config("partition.counts", e.to_string()))?;
    let pseudo = PseudoPotential::compile(domain, atom_specs, &global_grid)
        .map_err(|e| Error::config("species", e.to_string()))?;

    // DG geometry: buffers in element-edge units, capped and grid-aligned.
    let mut buffer_au = [0.0; 3];
    for a in 0..3 {
        let cells = config.dg.buffer_cells[a];
        if cells < 0.0 {
            return cfg_err("dg.buffer", format!("negative along {}", AXIS_NAMES[a]));
        }
        let b = cells * elem_edge[a];
        let cap = 0.5 * (ext[a] - elem_edge[a]);
        if b > cap + 1e-12 {
            return cfg_err(
                "dg.buffer",
                format!(
                    "buffer {b} au along {} exceeds the cap {cap} au \
                     ((domain - element)/2)",
                    AXIS_NAMES[a]
                ),
            );
        }
        let steps = b / spacing;
        if (steps - steps.round()).abs() > 1e-9 {
            return cfg_err(
                "dg.buffer",
                format!(
                    "buffer {b} au along {} is not a whole number of grid spacings",
                    AXIS_NAMES[a]
                ),
            );
        }
        buffer_au[a] = b;
    }

    if !(config.dg.alpha > 0.0) {
        return cfg_err("dg.alpha", "penalty parameter must be positive");
    }
    if config.dg.svd_threshold < 0.0 {
        return cfg_err("dg.svd_threshold", "must be nonnegative");
    }

    let n_elements = partition.len();
    let n_atoms = positions.len();
    let basis_per_element = match (config.dg.basis_per_atom, config.dg.basis_per_element) {
        (Some(_), Some(_)) => {
            return cfg_err(
                "dg.basis_per_atom",
                "give basis_per_atom or basis_per_element, not both",
            )
        }
        (None, None) => {
            return cfg_err(
                "dg.basis_per_atom",
                "one of basis_per_atom or basis_per_element is required",
            )
        }
        (None, Some(j)) => j,
        (Some(per_atom), None) => {
            let total = per_atom * n_atoms;
            if total % n_elements != 0 {
                return cfg_err(
                    "dg.basis_per_atom",
                    format!(
                        "{per_atom} per atom x {n_atoms} atoms is not divisible \
                         into {n_elements} elements"
                    ),
                );
            }
            total / n_elements
        }
    };
    if basis_per_element == 0 {
        return cfg_err("dg.basis_per_atom", "at least one basis function per element");
    }

    // Electrons and states.
    if config.electrons.per_atom == 0 {
        return cfg_err("electrons.per_atom", "must be at least 1");
    }
    let n_electrons = (config.electrons.per_atom * n_atoms) as f64;
    let n_states = config
        .electrons
        .n_states
        .unwrap_or_else(|| (n_electrons as usize) + ((n_electrons as usize) / 4).max(4));
    if (n_states as f64) < n_electrons {
        return cfg_err(
            "electrons.n_states",
            format!("{n_states} states cannot hold {n_electrons} electrons"),
        );
    }
    let dg_dim = basis_per_element * n_elements;
    if dg_dim < n_states {
        return cfg_err(
            "dg.basis_per_atom",
            format!(
                "DG space dimension {dg_dim} is smaller than the {n_states} \
                 requested states"
            ),
        );
    }
    if config.electrons.temperature_k < 0.0 {
        return cfg_err("electrons.temperature_k", "must be nonnegative");
    }

    if !(config.scf.tolerance > 0.0) {
        return cfg_err("scf.tolerance", "must be positive");
    }
    if config.scf.max_iterations == 0 {
        return cfg_err("scf.max_iterations", "must be at least 1");
    }

    if config.run.mode == Mode::Sweep && config.sweep.is_none() {
        return cfg_err("sweep", "mode = \"sweep\" needs a [sweep] section");
    }
    if let Some(s) = &config.sweep {
        if s.values.is_empty() {
            return cfg_err("sweep.values", "at least one value required");
        }
    }

    let workers = workers_override
        .or_else(|| {
            std::env::var("DGSOLVE_WORKERS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&v| v > 0)
        })
        .unwrap_or(config.run.workers);
    let workers = if workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        workers
    };

    Ok(Compiled {
        lgl_orders: [config.grids.lgl_order; 3],
        config,
        domain,
        partition,
        pseudo,
        global_grid,
        buffer_au,
        basis_per_element,
        n_electrons,
        n_states,
        workers,
        atom_positions: positions,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn minimal_toml() -> String {
        r#"
            [domain]
            extents = [4.0, 4.0, 4.0]

            [partition]
            counts = [1, 1, 1]

            [[atoms]]
            position = [2.0, 2.0, 2.0]
            species = "a"

            [species.a]
            depth = 2.0
            width = 0.6

            [electrons]
            per_atom = 1

            [grids]
            spacing = 0.4
            lgl_order = 12

            [dg]
            buffer_cells = [0.0, 0.0, 0.0]
            basis_per_atom = 6
        "#
        .to_string()
    }

    #[test]
    fn minimal_config_loads_with_defaults() {
        let config: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        assert_eq!(config.dg.alpha, 20.0);
        assert_eq!(config.dg.svd_threshold, 0.0);
        assert_eq!(config.scf.tolerance, 1e-7);
        assert_eq!(config.scf.global_inner_iterations, 10);
        assert_eq!(config.scf.basis_inner_iterations, 3);
        assert_eq!(config.electrons.temperature_k, 2000.0);
        let compiled = compile(config, Some(1)).unwrap();
        assert_eq!(compiled.global_grid.shape(), [10, 10, 10]);
        assert_eq!(compiled.basis_per_element, 6);
        assert_eq!(compiled.n_states, 5);
    }

    #[test]
    fn buffer_violation_names_field_and_axis() {
        let mut config: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        config.dg.buffer_cells = [0.0, 0.0, 0.5];
        // Single element: cap is 0 along every axis.
        let err = compile(config, Some(1)).map(|_| ()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dg.buffer"), "{msg}");
        assert!(msg.contains('z'), "{msg}");
    }

    #[test]
    fn lattice_generation_is_deterministic() {
        let a = generate_supercell([4.0; 3], &[[0.0; 3], [2.0; 3]], [1, 1, 4], 0.2, 9);
        let b = generate_supercell([4.0; 3], &[[0.0; 3], [2.0; 3]], [1, 1, 4], 0.2, 9);
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let c = generate_supercell([4.0; 3], &[[0.0; 3], [2.0; 3]], [1, 1, 4], 0.2, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_displacement_gives_perfect_crystal() {
        let got = generate_supercell([3.0; 3], &[[1.0, 1.0, 1.0]], [1, 1, 2], 0.0, 1);
        assert_eq!(got.len(), 2);
        assert_abs_diff_eq!(got[0][2], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got[1][2], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn displacement_is_uniform() {
        // Kolmogorov-Smirnov test against U[-0.2, 0.2] over 10^4 draws,
        // taken through the generator with many cells along one axis.
        let n = 10_000usize / 3 + 1;
        let mut draws: Vec<f64> = Vec::new();
        let cells = generate_supercell([3.0, 3.0, 3.0], &[[1.5, 1.5, 1.5]], [1, 1, n], 0.2, 12345);
        for (i, p) in cells.iter().enumerate() {
            draws.push(p[0] - 1.5);
            draws.push(p[1] - 1.5);
            draws.push(p[2] - (1.5 + 3.0 * i as f64));
        }
        draws.truncate(10_000);
        draws.sort_by(f64::total_cmp);
        let m = draws.len() as f64;
        let mut d_stat: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate() {
            let cdf = ((x + 0.2) / 0.4).clamp(0.0, 1.0);
            let hi = ((i + 1) as f64 / m - cdf).abs();
            let lo = (cdf - i as f64 / m).abs();
            d_stat = d_stat.max(hi.max(lo));
        }
        // Critical value for p = 0.01: 1.63 / sqrt(n).
        assert!(
            d_stat < 1.63 / m.sqrt(),
            "KS statistic {d_stat} too large for uniformity"
        );
    }

    #[test]
    fn both_atom_sources_rejected() {
        let mut config: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        config.lattice = Some(LatticeConfig {
            cell: [4.0; 3],
            basis: vec![[0.0; 3]],
            species: vec!["a".into()],
            repeat: [1, 1, 1],
            displacement: 0.0,
            seed: 0,
        });
        let err = compile(config, Some(1)).map(|_| ()).unwrap_err();
        assert!(err.to_string().contains("atoms"));
    }

    #[test]
    fn unknown_species_rejected() {
        let mut config: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        config.atoms[0].species = "nope".into();
        let err = compile(config, Some(1)).map(|_| ()).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn parse_error_carries_line_info() {
        let bad = "[domain]\nextents = [1.0, 2.0\n";
        let err: std::result::Result<RunConfig, _> = toml::from_str(bad);
        let msg = err.unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn basis_per_atom_divisibility() {
        let mut config: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        config.partition.counts = [1, 1, 2];
        config.grids.spacing = Some(0.4);
        // 1 atom * 5 per atom over 2 elements does not divide.
        config.dg.basis_per_atom = Some(5);
        let err = compile(config, Some(1)).map(|_| ()).unwrap_err();
        assert!(err.to_string().contains("divisible"));
    }
}
