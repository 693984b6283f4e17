//! Grid-refinement self-convergence study.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crossdiff_core::grid::Grid;
use crossdiff_core::solver::{run, Mode, RunReport, SolverError};

use crate::config::Config;

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub n: usize,
    /// Sup-norm distance at the final time to the next finer level, sampled on this grid.
    pub difference: Option<f64>,
    /// `log2(difference_j / difference_{j+1})`.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub solvers: Vec<(String, Vec<Level>)>,
}

impl ConvergenceTable {
    pub fn print(&self) {
        for (label, levels) in &self.solvers {
            println!("{label}");
            println!("{:>8}  {:>12}  {:>8}", "N", "difference", "order");
            for l in levels {
                let diff = l.difference.map_or("-".into(), |v| format!("{v:.4e}"));
                let order = l.order.map_or("-".into(), |v| format!("{v:.3}"));
                println!("{:>8}  {:>12}  {:>8}", l.n, diff, order);
            }
        }
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "solver,n,difference,order")?;
        for (label, levels) in &self.solvers {
            for l in levels {
                let f = |v: Option<f64>| v.map_or("NaN".into(), |v| format!("{v:e}"));
                writeln!(out, "{label},{},{},{}", l.n, f(l.difference), f(l.order))?;
            }
        }
        out.flush()
    }
}

/// Values of a fine-grid field at the points of a grid `2^m` times coarser.
fn restrict(fine: &Grid, coarse: &Grid, f: &[f64]) -> Vec<f64> {
    let r = fine.n / coarse.n;
    (0..coarse.points())
        .map(|p| {
            let [ix, iy] = coarse.index(p);
            f[ix * r + fine.n * iy * r]
        })
        .collect()
}

fn sup_distance(coarse: &Grid, a: &[Vec<f64>], fine: &Grid, b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ca, cb)| {
            let rb = restrict(fine, coarse, cb);
            ca.iter().zip(rb).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

fn levels_for(runs: &[RunReport], pick: impl Fn(&RunReport) -> Option<&[Vec<f64>]>) -> Option<Vec<Level>> {
    let finals: Vec<&[Vec<f64>]> = runs.iter().map(&pick).collect::<Option<_>>()?;
    let diffs: Vec<f64> = (0..runs.len().saturating_sub(1))
        .map(|j| sup_distance(&runs[j].grid, finals[j], &runs[j + 1].grid, finals[j + 1]))
        .collect();
    Some(
        runs.iter()
            .enumerate()
            .map(|(j, r)| Level {
                n: r.grid.n,
                difference: diffs.get(j).copied(),
                order: match (diffs.get(j), diffs.get(j + 1)) {
                    (Some(a), Some(b)) if *b > 0.0 => Some((a / b).log2()),
                    _ => None,
                },
            })
            .collect(),
    )
}

/// Runs the configuration on `N, 2N, …, 2^levels N` points, one thread per resolution.
pub fn refinement_study(cfg: &Config, mode: Mode, levels: u32) -> Result<ConvergenceTable, SolverError> {
    let grids: Vec<Grid> = (0..=levels)
        .map(|j| Grid::new(cfg.spec.d, cfg.grid_points << j, cfg.spec.domain_length))
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<RunReport, SolverError>> = std::thread::scope(|s| {
        let handles: Vec<_> = grids
            .iter()
            .map(|&g| {
                s.spawn(move || {
                    let u0 = cfg.initial_field(g)?;
                    run(&cfg.spec, &u0, &cfg.solver, mode)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("refinement run panicked"))
            .collect()
    });
    let runs: Vec<RunReport> = results.into_iter().collect::<Result<_, _>>()?;
    let mut solvers = Vec::new();
    if let Some(l) = levels_for(&runs, |r| r.direct.as_ref().map(|t| t.final_u())) {
        solvers.push(("direct".to_string(), l));
    }
    if let Some(l) = levels_for(&runs, |r| r.normal_form.as_ref().map(|t| t.final_u())) {
        solvers.push(("normal_form".to_string(), l));
    }
    Ok(ConvergenceTable { solvers })
}
