//! Flat key=value run configuration.
//!
//! One key per line, `#` comments, unknown keys rejected so a typo fails
//! loudly instead of silently running with a default.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::membrane::MembraneConfig;
use crate::separability::DensityMode;

/// Everything a reconstruction run needs besides the cloud itself.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub membrane: MembraneConfig,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Parses key=value text; `source` labels error locations.
    pub fn parse(text: &str, source: &str) -> Result<RunConfig> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut cfg = RunConfig::default();
        // Sampling density only overrides as a pair; remember where each
        // half was set so a lone one errors on its own line.
        let mut samples_u: Option<(usize, usize)> = None;
        let mut samples_v: Option<(usize, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.split_once('#') {
                Some((before, _)) => before.trim(),
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| perr(line_no, "expected key=value".to_string()))?;
            let (key, val) = (key.trim(), val.trim());
            if val.is_empty() {
                return Err(perr(line_no, format!("key `{key}` has no value")));
            }
            let fnum = || -> Result<f64> {
                val.parse::<f64>()
                    .map_err(|_| perr(line_no, format!("bad number `{val}`")))
            };
            let unum = || -> Result<usize> {
                val.parse::<usize>()
                    .map_err(|_| perr(line_no, format!("bad count `{val}`")))
            };
            let m = &mut cfg.membrane;
            match key {
                "k" => m.k = unum()?,
                "beta" => m.beta = fnum()?,
                "search_depth" => m.search_extents[0] = fnum()?,
                "search_height" => m.search_extents[1] = fnum()?,
                "search_width" => m.search_extents[2] = fnum()?,
                "n_splits" => m.n_splits = unum()?,
                "g_min" => m.g_min = fnum()?,
                "patience" => m.patience = unum()?,
                "init_m" => m.init_grid.0 = unum()?,
                "init_l" => m.init_grid.1 = unum()?,
                "max_m" => m.max_grid.0 = unum()?,
                "max_l" => m.max_grid.1 = unum()?,
                "refine_m" => m.refine_increment.0 = unum()?,
                "refine_l" => m.refine_increment.1 = unum()?,
                "alpha" => m.alpha = fnum()?,
                "div_min" => m.div_min = unum()?,
                "max_iterations" => m.max_iterations = unum()?,
                "margin" => m.margin = fnum()?,
                "samples_u" => samples_u = Some((unum()?, line_no)),
                "samples_v" => samples_v = Some((unum()?, line_no)),
                "mesh_u" => m.mesh_resolution.0 = unum()?,
                "mesh_v" => m.mesh_resolution.1 = unum()?,
                "density_mode" => {
                    m.density_mode = match val {
                        "global" => DensityMode::Global,
                        "per_region" => DensityMode::PerRegion,
                        _ => {
                            return Err(perr(
                                line_no,
                                format!("density_mode is global or per_region, not `{val}`"),
                            ))
                        }
                    }
                }
                "deterministic" => {
                    m.deterministic = match val {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(perr(
                                line_no,
                                format!("deterministic is true or false, not `{val}`"),
                            ))
                        }
                    }
                }
                "seed" => {
                    cfg.seed = val
                        .parse::<u64>()
                        .map_err(|_| perr(line_no, format!("bad seed `{val}`")))?
                }
                "weight_point" => m.weights.point = fnum()?,
                "input" => cfg.input = Some(PathBuf::from(val)),
                "output" => cfg.output = Some(PathBuf::from(val)),
                "trace" => cfg.trace = Some(PathBuf::from(val)),
                _ => match key.strip_prefix("weight_") {
                    Some(attr) if !attr.is_empty() => {
                        let w = fnum()?;
                        let attrs = &mut m.weights.attributes;
                        match attrs.iter_mut().find(|(n, _)| n == attr) {
                            Some(slot) => slot.1 = w,
                            None => attrs.push((attr.to_string(), w)),
                        }
                    }
                    _ => return Err(perr(line_no, format!("unknown key `{key}`"))),
                },
            }
        }
        match (samples_u, samples_v) {
            (Some((u, _)), Some((v, _))) => cfg.membrane.sample_override = Some((u, v)),
            (None, None) => {}
            (Some((_, line)), None) | (None, Some((_, line))) => {
                return Err(perr(
                    line,
                    "samples_u and samples_v must be given together".to_string(),
                ));
            }
        }
        cfg.membrane.validate()?;
        Ok(cfg)
    }
}
