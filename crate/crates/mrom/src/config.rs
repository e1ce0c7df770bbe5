//! Experiment configuration: a flat sectioned key-value text format with
//! strict unknown-key rejection.
//!
//! ```text
//! [experiment]
//! problem = burgers            # burgers | reacting
//! seed = 42
//!
//! [fom]
//! grid = 256                   # burgers: cells; reacting: NXxNY
//! scheme = bdf1                # bdf1 | bdf2
//! dt = 0.07
//! steps = 500
//!
//! [training]
//! lattice = 10x8               # training-parameter lattice over the domain
//! domain = 4.25,5.5; 0.015,0.03   # optional override of the parameter box
//! subset = all                 # all | first:M | equispaced:M
//! validation_fraction = 0.1
//! learning_rate = 1e-4
//! batch_size = 20
//! max_epochs = 1000
//! patience = 100
//! latent_dim = 5
//!
//! [rom]
//! methods = pod-galerkin,pod-lspg,manifold-galerkin,manifold-lspg
//! online = 4.3,0.021; 5.15,0.0285
//! tolerance = 1e-6
//! max_iterations = 25
//! dims = 3,5,10                # sweep --axis dim
//! ntrain_values = 5,10,20      # sweep --axis ntrain
//! subset_values = first:200,first:300   # sweep --axis subset
//!
//! [metrics]
//! pod_projection = true
//! optimal_projection = true
//! manifold_projection = false
//! error_bound = false
//! ```
//!
//! Comments start with `#`. Unknown sections or keys are rejected.

use crate::error::{Error, Result};
use crate::io::fnv1a_64;
use crate::offline::SubsetRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Burgers,
    Reacting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Bdf1,
    Bdf2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    PodGalerkin,
    PodLspg,
    ManifoldGalerkin,
    ManifoldLspg,
    EncoderGalerkin,
}

impl MethodKind {
    pub fn label(&self) -> &'static str {
        match self {
            MethodKind::PodGalerkin => "pod-galerkin",
            MethodKind::PodLspg => "pod-lspg",
            MethodKind::ManifoldGalerkin => "manifold-galerkin",
            MethodKind::ManifoldLspg => "manifold-lspg",
            MethodKind::EncoderGalerkin => "encoder-galerkin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pod-galerkin" => Ok(MethodKind::PodGalerkin),
            "pod-lspg" => Ok(MethodKind::PodLspg),
            "manifold-galerkin" => Ok(MethodKind::ManifoldGalerkin),
            "manifold-lspg" => Ok(MethodKind::ManifoldLspg),
            "encoder-galerkin" => Ok(MethodKind::EncoderGalerkin),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }

    pub fn needs_autoencoder(&self) -> bool {
        matches!(
            self,
            MethodKind::ManifoldGalerkin | MethodKind::ManifoldLspg | MethodKind::EncoderGalerkin
        )
    }
}

#[derive(Clone, Debug)]
pub struct MetricsToggles {
    pub pod_projection: bool,
    pub optimal_projection: bool,
    pub manifold_projection: bool,
    pub error_bound: bool,
}

impl Default for MetricsToggles {
    fn default() -> Self {
        MetricsToggles {
            pod_projection: true,
            optimal_projection: true,
            manifold_projection: false,
            error_bound: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub seed: u64,
    /// Burgers: [n]; reacting: [nx, ny].
    pub grid: Vec<usize>,
    pub scheme: SchemeKind,
    pub dt: f64,
    pub steps: usize,
    /// Lattice extents per parameter direction.
    pub lattice: (usize, usize),
    /// Parameter box; defaults to the problem's declared domain.
    pub domain: [(f64, f64); 2],
    pub subset: SubsetRule,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub latent_dim: usize,
    pub methods: Vec<MethodKind>,
    pub online: Vec<Vec<f64>>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub dims: Vec<usize>,
    pub ntrain_values: Vec<usize>,
    pub subset_values: Vec<SubsetRule>,
    pub metrics: MetricsToggles,
    /// FNV-1a hash of the configuration text, carried into every output row.
    pub config_hash: u64,
}

impl ExperimentConfig {
    /// Training-parameter lattice points, row-major over the two directions.
    pub fn training_points(&self) -> Vec<Vec<f64>> {
        let (ni, nj) = self.lattice;
        let coord = |range: (f64, f64), idx: usize, count: usize| {
            if count <= 1 {
                range.0
            } else {
                range.0 + (range.1 - range.0) * idx as f64 / (count - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(ni * nj);
        for i in 0..ni {
            for j in 0..nj {
                pts.push(vec![
                    coord(self.domain[0], i, ni),
                    coord(self.domain[1], j, nj),
                ]);
            }
        }
        pts
    }

    /// Deterministic sub-selection of n training points: equispaced indices
    /// into the flattened lattice, endpoints included.
    pub fn training_subset_indices(&self, n: usize) -> Vec<usize> {
        let total = self.lattice.0 * self.lattice.1;
        let n = n.min(total).max(1);
        if n == 1 {
            return vec![0];
        }
        let mut idx: Vec<usize> = (0..n)
            .map(|t| (t * (total - 1)) / (n - 1))
            .collect();
        idx.dedup();
        idx
    }
}

fn parse_subset(s: &str) -> Result<SubsetRule> {
    if s == "all" {
        return Ok(SubsetRule::All);
    }
    if let Some(m) = s.strip_prefix("first:") {
        let m = m
            .parse()
            .map_err(|_| Error::Config(format!("bad subset rule {s:?}")))?;
        return Ok(SubsetRule::FirstM(m));
    }
    if let Some(m) = s.strip_prefix("equispaced:") {
        let m = m
            .parse()
            .map_err(|_| Error::Config(format!("bad subset rule {s:?}")))?;
        return Ok(SubsetRule::EquispacedM(m));
    }
    Err(Error::Config(format!("bad subset rule {s:?}")))
}

fn parse_pair_list(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|pair| {
            pair.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number {v:?}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Parse and validate a configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut problem = None;
    let mut seed = 0u64;
    let mut grid: Option<Vec<usize>> = None;
    let mut scheme = SchemeKind::Bdf1;
    let mut dt = None;
    let mut steps = None;
    let mut lattice = (1usize, 1usize);
    let mut domain: Option<[(f64, f64); 2]> = None;
    let mut subset = SubsetRule::All;
    let mut validation_fraction = 0.1;
    let mut learning_rate = 1e-4;
    let mut batch_size = 20usize;
    let mut max_epochs = 1000usize;
    let mut patience = 100usize;
    let mut latent_dim = 5usize;
    let mut methods = Vec::new();
    let mut online = Vec::new();
    let mut tolerance = 1e-6;
    let mut max_iterations = 25usize;
    let mut dims = Vec::new();
    let mut ntrain_values = Vec::new();
    let mut subset_values = Vec::new();
    let mut metrics = MetricsToggles::default();

    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: bad section", lineno + 1)))?;
            match name {
                "experiment" | "fom" | "training" | "rom" | "metrics" => {
                    section = name.to_string()
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{other}]",
                        lineno + 1
                    )))
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad_num = |what: &str| Error::Config(format!("line {}: bad {what}", lineno + 1));
        match (section.as_str(), key) {
            ("experiment", "problem") => {
                problem = Some(match value {
                    "burgers" => Problem::Burgers,
                    "reacting" => Problem::Reacting,
                    other => {
                        return Err(Error::Config(format!("unknown problem {other:?}")));
                    }
                })
            }
            ("experiment", "seed") => seed = value.parse().map_err(|_| bad_num("seed"))?,
            ("fom", "grid") => {
                let parts: Vec<usize> = value
                    .split('x')
                    .map(|v| v.trim().parse().map_err(|_| bad_num("grid")))
                    .collect::<Result<_>>()?;
                grid = Some(parts);
            }
            ("fom", "scheme") => {
                scheme = match value {
                    "bdf1" | "backward-euler" => SchemeKind::Bdf1,
                    "bdf2" => SchemeKind::Bdf2,
                    other => return Err(Error::Config(format!("unknown scheme {other:?}"))),
                }
            }
            ("fom", "dt") => dt = Some(value.parse().map_err(|_| bad_num("dt"))?),
            ("fom", "steps") => steps = Some(value.parse().map_err(|_| bad_num("steps"))?),
            ("training", "lattice") => {
                let (a, b) = value
                    .split_once('x')
                    .ok_or_else(|| bad_num("lattice (expected IxJ)"))?;
                lattice = (
                    a.trim().parse().map_err(|_| bad_num("lattice"))?,
                    b.trim().parse().map_err(|_| bad_num("lattice"))?,
                );
            }
            ("training", "domain") => {
                let pairs = parse_pair_list(value)?;
                if pairs.len() != 2 || pairs.iter().any(|p| p.len() != 2) {
                    return Err(bad_num("domain (expected lo,hi; lo,hi)"));
                }
                domain = Some([(pairs[0][0], pairs[0][1]), (pairs[1][0], pairs[1][1])]);
            }
            ("training", "subset") => subset = parse_subset(value)?,
            ("training", "validation_fraction") => {
                validation_fraction = value.parse().map_err(|_| bad_num("validation_fraction"))?
            }
            ("training", "learning_rate") => {
                learning_rate = value.parse().map_err(|_| bad_num("learning_rate"))?
            }
            ("training", "batch_size") => {
                batch_size = value.parse().map_err(|_| bad_num("batch_size"))?
            }
            ("training", "max_epochs") => {
                max_epochs = value.parse().map_err(|_| bad_num("max_epochs"))?
            }
            ("training", "patience") => {
                patience = value.parse().map_err(|_| bad_num("patience"))?
            }
            ("training", "latent_dim") => {
                latent_dim = value.parse().map_err(|_| bad_num("latent_dim"))?
            }
            ("rom", "methods") => {
                methods = value
                    .split(',')
                    .map(|m| MethodKind::parse(m.trim()))
                    .collect::<Result<_>>()?;
            }
            ("rom", "online") => online = parse_pair_list(value)?,
            ("rom", "tolerance") => {
                tolerance = value.parse().map_err(|_| bad_num("tolerance"))?
            }
            ("rom", "max_iterations") => {
                max_iterations = value.parse().map_err(|_| bad_num("max_iterations"))?
            }
            ("rom", "dims") => {
                dims = value
                    .split(',')
                    .map(|v| v.trim().parse().map_err(|_| bad_num("dims")))
                    .collect::<Result<_>>()?;
            }
            ("rom", "ntrain_values") => {
                ntrain_values = value
                    .split(',')
                    .map(|v| v.trim().parse().map_err(|_| bad_num("ntrain_values")))
                    .collect::<Result<_>>()?;
            }
            ("rom", "subset_values") => {
                subset_values = value
                    .split(',')
                    .map(|v| parse_subset(v.trim()))
                    .collect::<Result<_>>()?;
            }
            ("metrics", "pod_projection") => {
                metrics.pod_projection = value.parse().map_err(|_| bad_num("pod_projection"))?
            }
            ("metrics", "optimal_projection") => {
                metrics.optimal_projection =
                    value.parse().map_err(|_| bad_num("optimal_projection"))?
            }
            ("metrics", "manifold_projection") => {
                metrics.manifold_projection =
                    value.parse().map_err(|_| bad_num("manifold_projection"))?
            }
            ("metrics", "error_bound") => {
                metrics.error_bound = value.parse().map_err(|_| bad_num("error_bound"))?
            }
            (sec, key) => {
                return Err(Error::Config(format!(
                    "line {}: unknown key {key:?} in section [{sec}]",
                    lineno + 1
                )))
            }
        }
    }

    let problem = problem.ok_or_else(|| Error::Config("missing experiment.problem".into()))?;
    let grid = grid.ok_or_else(|| Error::Config("missing fom.grid".into()))?;
    let dt = dt.ok_or_else(|| Error::Config("missing fom.dt".into()))?;
    let steps = steps.ok_or_else(|| Error::Config("missing fom.steps".into()))?;
    match (problem, grid.len()) {
        (Problem::Burgers, 1) | (Problem::Reacting, 2) => {}
        _ => {
            return Err(Error::Config(
                "grid must be N for burgers and NXxNY for reacting".into(),
            ))
        }
    }
    if methods.is_empty() {
        return Err(Error::Config("at least one method must be selected".into()));
    }
    if online.is_empty() {
        return Err(Error::Config(
            "at least one online parameter instance is required".into(),
        ));
    }
    for mu in &online {
        if mu.len() != 2 {
            return Err(Error::Config(
                "online parameter instances need two components".into(),
            ));
        }
    }
    let domain = domain.unwrap_or(match problem {
        Problem::Burgers => [(4.25, 5.5), (0.015, 0.03)],
        Problem::Reacting => [(2.3375e12, 6.5e12), (5.625e3, 9.0e3)],
    });
    Ok(ExperimentConfig {
        problem,
        seed,
        grid,
        scheme,
        dt,
        steps,
        lattice,
        domain,
        subset,
        validation_fraction,
        learning_rate,
        batch_size,
        max_epochs,
        patience,
        latent_dim,
        methods,
        online,
        tolerance,
        max_iterations,
        dims,
        ntrain_values,
        subset_values,
        metrics,
        config_hash: fnv1a_64(text.as_bytes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
[experiment]
problem = burgers
seed = 7

[fom]
grid = 64
scheme = bdf1
dt = 0.07
steps = 50

[training]
lattice = 2x2
subset = all
latent_dim = 3

[rom]
methods = pod-galerkin, manifold-lspg
online = 4.3,0.021; 5.15,0.0285
";

    #[test]
    fn parses_sample_config() {
        let cfg = parse_config(SAMPLE).unwrap();
        assert_eq!(cfg.problem, Problem::Burgers);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grid, vec![64]);
        assert_eq!(cfg.steps, 50);
        assert_eq!(cfg.lattice, (2, 2));
        assert_eq!(cfg.methods.len(), 2);
        assert_eq!(cfg.online.len(), 2);
        assert_eq!(cfg.latent_dim, 3);
        // default domain filled in
        assert_eq!(cfg.domain[0], (4.25, 5.5));
        // lattice corners
        let pts = cfg.training_points();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0], vec![4.25, 0.015]);
        assert_eq!(pts[3], vec![5.5, 0.03]);
    }

    #[test]
    fn paper_lattice_matches_formula() {
        let text = SAMPLE.replace("lattice = 2x2", "lattice = 10x8");
        let cfg = parse_config(&text).unwrap();
        let pts = cfg.training_points();
        assert_eq!(pts.len(), 80);
        // mu_ij = (4.25 + (1.25/9) i, 0.015 + (0.015/7) j)
        let want_i3_j5 = [4.25 + 1.25 / 9.0 * 3.0, 0.015 + 0.015 / 7.0 * 5.0];
        let got = &pts[3 * 8 + 5];
        assert!((got[0] - want_i3_j5[0]).abs() < 1e-14);
        assert!((got[1] - want_i3_j5[1]).abs() < 1e-14);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = SAMPLE.replace("seed = 7", "sneed = 7");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
        let text2 = SAMPLE.replace("[fom]", "[fomm]");
        assert!(matches!(parse_config(&text2), Err(Error::Config(_))));
    }

    #[test]
    fn missing_required_keys_rejected() {
        let text = SAMPLE.replace("problem = burgers", "");
        assert!(parse_config(&text).is_err());
        let text2 = SAMPLE.replace("methods = pod-galerkin, manifold-lspg", "methods = ");
        assert!(parse_config(&text2).is_err());
    }

    #[test]
    fn subset_rules_parse() {
        assert_eq!(parse_subset("all").unwrap(), SubsetRule::All);
        assert_eq!(parse_subset("first:200").unwrap(), SubsetRule::FirstM(200));
        assert_eq!(
            parse_subset("equispaced:50").unwrap(),
            SubsetRule::EquispacedM(50)
        );
        assert!(parse_subset("sometimes").is_err());
    }

    #[test]
    fn training_subset_indices_are_equispaced() {
        let text = SAMPLE.replace("lattice = 2x2", "lattice = 10x8");
        let cfg = parse_config(&text).unwrap();
        let idx = cfg.training_subset_indices(5);
        assert_eq!(idx.len(), 5);
        assert_eq!(*idx.first().unwrap(), 0);
        assert_eq!(*idx.last().unwrap(), 79);
        let full = cfg.training_subset_indices(80);
        assert_eq!(full.len(), 80);
    }

    #[test]
    fn config_hash_tracks_text() {
        let a = parse_config(SAMPLE).unwrap();
        let b = parse_config(SAMPLE).unwrap();
        assert_eq!(a.config_hash, b.config_hash);
        let c = parse_config(&SAMPLE.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.config_hash, c.config_hash);
    }
}
