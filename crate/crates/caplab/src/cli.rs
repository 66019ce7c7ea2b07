//! Batch orchestration: a single config file (TOML, flag-overridable),
//! one subcommand per experiment, JSON/CSV artifacts plus a run manifest.
//!
//! Exit status: 0 success, 1 usage, 2 validation/config failure,
//! 3 numerical-resolution failure.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{comparison_report, estimate_r_p, ComparisonConfig};
use crate::decomposition::{
    extract_profiles, generate_planted, orthogonality_report, ExtractionConfig, PlantConfig,
    SearchLattice,
};
use crate::error::{Error, Result};
use crate::extension::{extend_sphere, ConventionTag};
use crate::geometry::{sphere_sample, whitney_pairs};
use crate::quadrature::{lp_norm, DiskGrid, SpaceTimeGrid, SurfaceDensity};
use crate::refinement::{
    bilinear_interaction, decay_fit, refined_envelope, refined_point, separated_cap_pair,
};
use crate::report;

/// Experiment configuration; every field has a reproducible default and is
/// validated before any computation starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub seed: u64,
    pub output_dir: String,
    /// "bare" or "classical".
    pub convention: String,
    pub gamma_n: usize,
    pub ball_n: usize,
    pub net_level: u32,
    pub net_candidate_budget: usize,
    pub whitney_depth: u32,
    pub t_half: f64,
    pub x_half: f64,
    pub nt: usize,
    pub nx: usize,
    pub corpus_size: usize,
    pub max_level: u32,
    pub delta: f64,
    pub alpha: f64,
    pub c0: f64,
    pub max_pieces: usize,
    pub epsilon: f64,
    pub max_profiles: usize,
    pub planted_profiles: usize,
    pub nu_count: usize,
    pub search_x_half: f64,
    pub search_t_half: f64,
    pub search_nx: usize,
    pub search_nt: usize,
    pub bilinear_radius: f64,
    pub bilinear_separations: Vec<f64>,
    pub bilinear_box_half: f64,
    pub bilinear_lattice: usize,
    pub curve_radii: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dimension: 1,
            seed: 1,
            output_dir: "out".into(),
            convention: "bare".into(),
            gamma_n: 256,
            ball_n: 256,
            net_level: 3,
            net_candidate_budget: 1 << 21,
            whitney_depth: 4,
            t_half: 20.0,
            x_half: 20.0,
            nt: 81,
            nx: 81,
            corpus_size: 12,
            max_level: 3,
            delta: 0.3,
            alpha: 0.5,
            c0: 0.5,
            max_pieces: 8,
            epsilon: 0.1,
            max_profiles: 3,
            planted_profiles: 2,
            nu_count: 8,
            search_x_half: 72.0,
            search_t_half: 16.0,
            search_nx: 145,
            search_nt: 33,
            bilinear_radius: 1.0 / 36.0,
            bilinear_separations: vec![4.0, 8.0, 16.0, 32.0],
            bilinear_box_half: 10.0,
            bilinear_lattice: 40,
            curve_radii: vec![0.4, 0.2, 0.1, 0.05],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::config(format!(
                "dimension must be 1 or 2, got {}",
                self.dimension
            )));
        }
        if self.convention != "bare" && self.convention != "classical" {
            return Err(Error::config(format!(
                "convention must be 'bare' or 'classical', got '{}'",
                self.convention
            )));
        }
        if self.gamma_n < 8 || self.ball_n < 8 {
            return Err(Error::config("grid resolutions must be ≥ 8".into()));
        }
        if !(0.0 < self.delta && self.delta < 1.0) || !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::config("δ and α must lie in (0,1)".into()));
        }
        if self.nt == 0 || self.nx == 0 || self.t_half <= 0.0 || self.x_half <= 0.0 {
            return Err(Error::config("space-time lattice must be nonempty".into()));
        }
        for &r in &self.curve_radii {
            if !(0.0 < r && r <= 0.5) {
                return Err(Error::config(format!("curve radius {r} outside (0, 1/2]")));
            }
        }
        Ok(())
    }

    pub fn convention_tag(&self) -> ConventionTag {
        if self.convention == "classical" {
            ConventionTag::classical(self.dimension)
        } else {
            ConventionTag::bare()
        }
    }

    pub fn spacetime_grid(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.dimension, self.t_half, self.x_half, self.nt, self.nx)
    }

    fn out_dir(&self) -> PathBuf {
        if let Ok(root) = std::env::var("CAPLAB_OUT") {
            Path::new(&root).join(&self.output_dir)
        } else {
            PathBuf::from(&self.output_dir)
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "caplab",
    about = "Numerical experiments with extension operators on spherical caps",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Normalization tag: bare | classical.
    #[arg(long, global = true)]
    pub convention: Option<String>,
    #[arg(long, global = true)]
    pub level: Option<u32>,
    #[arg(long, global = true)]
    pub depth: Option<u32>,
    #[arg(long, global = true)]
    pub profiles: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a maximal separated cap net and its certificates.
    Net,
    /// Whitney decomposition of the off-diagonal square.
    Whitney,
    /// Extension field of a seeded random density.
    Extend,
    /// Two-path L^{2+4/d} norms of a seeded random density.
    Norms,
    /// Refined-inequality corpus report.
    Refine,
    /// Bilinear interaction decay experiment.
    Bilinear,
    /// Generate a planted profile sequence.
    Plant,
    /// Extract profiles from the planted sequence in the output directory.
    Decompose,
    /// Gaussian Strichartz constant and ascent estimates.
    Constants,
    /// Full comparison report.
    Compare,
}

pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read config {path:?}: {e}")))?;
            toml::from_str(&text).map_err(|e| Error::config(format!("bad config: {e}")))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(d) = cli.dim {
        cfg.dimension = d;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(c) = &cli.convention {
        cfg.convention = c.clone();
    }
    if let Some(l) = cli.level {
        cfg.net_level = l;
        cfg.max_level = l.min(cfg.max_level.max(l));
    }
    if let Some(d) = cli.depth {
        cfg.whitney_depth = d;
    }
    if let Some(p) = cli.profiles {
        cfg.planted_profiles = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Execute one subcommand; returns the artifact directory.
pub fn run(command: &Command, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let start = Instant::now();
    let dir = cfg.out_dir();
    let hash = report::config_hash(cfg)?;
    std::fs::create_dir_all(&dir)?;

    match command {
        Command::Net => {
            let net = crate::geometry::CapNet::build(
                cfg.dimension,
                cfg.net_level,
                cfg.net_candidate_budget,
            )?;
            let sample = sphere_sample(cfg.dimension, 10_000, cfg.seed);
            #[derive(Serialize)]
            struct NetOut {
                dim: usize,
                level: u32,
                separation: f64,
                count: usize,
                min_pairwise_distance: f64,
                covering_radius_on_sample: f64,
                max_overlap: usize,
                centers: Vec<[f64; 3]>,
            }
            let out = NetOut {
                dim: net.dim,
                level: net.level,
                separation: net.separation,
                count: net.centers.len(),
                min_pairwise_distance: net.min_pairwise_distance(),
                covering_radius_on_sample: net.covering_radius(&sample),
                max_overlap: net.overlap_census(&sample)?,
                centers: net.centers.clone(),
            };
            report::write_json(&dir.join("net.json"), &hash, &out)?;
        }
        Command::Whitney => {
            let dec = whitney_pairs(cfg.dimension, cfg.whitney_depth)?;
            #[derive(Serialize)]
            struct WhitneyOut {
                dim: usize,
                depth: u32,
                unresolved_width: f64,
                pair_count: usize,
                pairs: Vec<((u32, [i64; 2]), (u32, [i64; 2]))>,
            }
            let out = WhitneyOut {
                dim: dec.dim,
                depth: dec.depth,
                unresolved_width: dec.unresolved_width,
                pair_count: dec.pairs.len(),
                pairs: dec
                    .pairs
                    .iter()
                    .map(|p| {
                        (
                            (p.first.level, p.first.index),
                            (p.second.level, p.second.index),
                        )
                    })
                    .collect(),
            };
            report::write_json(&dir.join("whitney.json"), &hash, &out)?;
        }
        Command::Extend => {
            let grid = Arc::new(DiskGrid::gamma(cfg.dimension, cfg.gamma_n)?);
            let mut f = SurfaceDensity::random_bump(grid, cfg.seed);
            f.convention = cfg.convention_tag();
            let st = cfg.spacetime_grid()?;
            let field = extend_sphere(&f, &st)?;
            report::write_field_csv(&dir.join("field.csv"), &field)?;
            report::write_density_csv(&dir.join("density.csv"), &f)?;
            let q = 2.0 + 4.0 / cfg.dimension as f64;
            let norm = lp_norm(&field, q)?;
            report::write_json(
                &dir.join("extend_norm.json"),
                &hash,
                &report::norm_record(&norm, cfg.nt),
            )?;
        }
        Command::Norms => {
            let grid = Arc::new(DiskGrid::gamma(cfg.dimension, cfg.gamma_n)?);
            let mut f = SurfaceDensity::random_bump(grid, cfg.seed);
            f.convention = cfg.convention_tag();
            let conv = crate::extension::even_norm_via_convolution(&f)?;
            let st = cfg.spacetime_grid()?;
            let field = extend_sphere(&f, &st)?;
            let q = 2.0 + 4.0 / cfg.dimension as f64;
            let direct = lp_norm(&field, q)?;
            #[derive(Serialize)]
            struct NormsOut {
                convolution: report::NormRecord,
                spacetime: report::NormRecord,
                difference: f64,
                combined_uncertainty: f64,
                agree: bool,
            }
            let out = NormsOut {
                convolution: report::norm_record(&conv, cfg.gamma_n),
                spacetime: report::norm_record(&direct, cfg.nt),
                difference: (conv.value - direct.value).abs(),
                combined_uncertainty: conv.uncertainty + direct.uncertainty,
                agree: conv.agrees_with(&direct),
            };
            report::write_json(&dir.join("norms.json"), &hash, &out)?;
        }
        Command::Refine => {
            let grid = Arc::new(DiskGrid::gamma(cfg.dimension, cfg.gamma_n)?);
            let mut points = Vec::new();
            for k in 0..cfg.corpus_size {
                let f = SurfaceDensity::random_bump(grid.clone(), cfg.seed + k as u64);
                points.push(refined_point(&f, cfg.max_level)?);
            }
            let envelope = refined_envelope(&points, 40)?;
            #[derive(Serialize)]
            struct RefineOut {
                points: Vec<crate::refinement::RefinedTriple>,
                envelope: crate::refinement::RefinedEnvelope,
            }
            report::write_json(
                &dir.join("refine.json"),
                &hash,
                &RefineOut { points, envelope },
            )?;
        }
        Command::Bilinear => {
            let mut rows = Vec::new();
            let mut fit_points = Vec::new();
            for &n_sep in &cfg.bilinear_separations {
                let ((f1, c1), (f2, c2)) =
                    separated_cap_pair(cfg.dimension, cfg.bilinear_radius, n_sep, cfg.ball_n)?;
                let v = bilinear_interaction(
                    &f1,
                    &c1,
                    &f2,
                    &c2,
                    None,
                    cfg.bilinear_box_half,
                    cfg.bilinear_lattice,
                )?;
                rows.push(vec![n_sep, v.value, v.uncertainty]);
                fit_points.push((n_sep, v.value));
            }
            report::write_curve_csv(
                &dir.join("bilinear_decay.csv"),
                &["separation", "product_norm", "uncertainty"],
                &rows,
            )?;
            let fit = decay_fit(&fit_points)?;
            report::write_json(&dir.join("bilinear_fit.json"), &hash, &fit)?;
        }
        Command::Plant => {
            let mut plant = PlantConfig::two_profile_default(cfg.dimension, cfg.seed);
            plant.nu_count = cfg.nu_count;
            plant.ball_n = cfg.ball_n.min(if cfg.dimension == 1 { 256 } else { 24 });
            if cfg.planted_profiles == 1 {
                plant.profiles.truncate(1);
            }
            let text = serde_json::to_string_pretty(&plant)?;
            std::fs::write(dir.join("plant_config.json"), text + "\n")?;
            let planted = generate_planted(&plant)?;
            #[derive(Serialize)]
            struct PlantOut {
                nu_count: usize,
                profile_l2: Vec<f64>,
                sequence_l2: Vec<f64>,
            }
            let out = PlantOut {
                nu_count: plant.nu_count,
                profile_l2: planted.tracks.iter().map(|t| t.phi.l2_norm()).collect(),
                sequence_l2: planted.sequence.iter().map(|g| g.l2_norm()).collect(),
            };
            report::write_json(&dir.join("plant.json"), &hash, &out)?;
        }
        Command::Decompose => {
            let plant_path = dir.join("plant_config.json");
            let plant: PlantConfig = if plant_path.exists() {
                serde_json::from_str(&std::fs::read_to_string(&plant_path)?)?
            } else {
                PlantConfig::two_profile_default(cfg.dimension, cfg.seed)
            };
            let planted = generate_planted(&plant)?;
            let ex_cfg = ExtractionConfig {
                epsilon: cfg.epsilon,
                max_profiles: cfg.max_profiles,
                lattice: SearchLattice {
                    x_half: cfg.search_x_half,
                    t_half: cfg.search_t_half,
                    nx: cfg.search_nx,
                    nt: cfg.search_nt,
                },
                tail_fraction: 0.5,
                merge_cells: 2.0,
            };
            let ex = extract_profiles(&planted.sequence, &planted.cap, &ex_cfg)?;
            let rep = orthogonality_report(
                &ex.tracks,
                &planted.sequence,
                &ex.residuals,
                &planted.ball,
                12.0,
                if cfg.dimension == 1 { 48 } else { 24 },
            )?;
            report::write_json(&dir.join("decomposition_report.json"), &hash, &rep)?;
            report::write_matrix_csv(
                &dir.join("product_norms.csv"),
                "pair",
                &rep.pairwise_bilinear,
            )?;
            // parameter recovery table against the planted truth
            let mut rows = Vec::new();
            for (j, track) in ex.tracks.iter().enumerate() {
                for (nu, m) in track.trajectory.iter().enumerate() {
                    let planted_m = planted
                        .tracks
                        .iter()
                        .map(|t| t.trajectory[nu].lattice_distance(m))
                        .fold(f64::INFINITY, f64::min);
                    rows.push(vec![
                        j as f64,
                        nu as f64,
                        m.x[0],
                        m.x[1],
                        m.t,
                        planted_m,
                    ]);
                }
            }
            report::write_curve_csv(
                &dir.join("parameter_recovery.csv"),
                &["track", "nu", "x1", "x2", "t", "distance_to_nearest_planted"],
                &rows,
            )?;
        }
        Command::Constants => {
            let grid = cfg.spacetime_grid()?;
            let rp = estimate_r_p(cfg.dimension, &grid, cfg.ball_n.max(1024))?;
            report::write_json(&dir.join("r_p.json"), &hash, &rp)?;
            let mut ccfg = ComparisonConfig::default_for(cfg.dimension)?;
            ccfg.seed = cfg.seed;
            let gamma = Arc::new(DiskGrid::gamma(cfg.dimension, ccfg.gamma_n)?);
            let init = SurfaceDensity::constant(gamma, Complex64::new(1.0, 0.0)).normalized()?;
            let state = crate::constants::ascend_r(&init, &ccfg.ascent)?;
            let rows: Vec<Vec<f64>> = state
                .step_history
                .iter()
                .map(|s| vec![s.step_size, s.quotient])
                .collect();
            report::write_curve_csv(&dir.join("ascent_history.csv"), &["step", "quotient"], &rows)?;
            #[derive(Serialize)]
            struct ConstantsOut {
                quotient: f64,
                iterations: usize,
                converged: bool,
            }
            report::write_json(
                &dir.join("ascent.json"),
                &hash,
                &ConstantsOut {
                    quotient: state.quotient,
                    iterations: state.iteration,
                    converged: state.converged,
                },
            )?;
        }
        Command::Compare => {
            let mut ccfg = ComparisonConfig::default_for(cfg.dimension)?;
            ccfg.seed = cfg.seed;
            ccfg.curve_radii = cfg.curve_radii.clone();
            let rep = comparison_report(cfg.dimension, &ccfg)?;
            report::write_json(&dir.join("comparison.json"), &hash, &rep)?;
            let rows: Vec<Vec<f64>> = rep
                .concentration_curve
                .iter()
                .map(|p| vec![p.radius, p.quotient, p.uncertainty])
                .collect();
            report::write_curve_csv(
                &dir.join("concentration_curve.csv"),
                &["radius", "quotient", "uncertainty"],
                &rows,
            )?;
        }
    }

    let manifest = report::RunManifest {
        subcommand: format!("{command:?}").to_lowercase(),
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    report::write_manifest(&dir, &manifest)?;
    Ok(dir)
}
