//! The four subcommands. Each returns its report so tests can use it
//! without re-reading files.

use std::path::{Path, PathBuf};

use bdp_core::analysis::{export_heatmap, taylor_bound};
use bdp_core::bilevel::{retrain_genotype, run_search, RetrainResult, SearchResult};
use bdp_core::data::{self, Dataset, Split, SplitSpec};
use bdp_core::numcore::RngStream;
use bdp_core::supernet::{Genotype, OpKind, SpaceConfig};
use rayon::prelude::*;

use crate::config::{GridMode, RunConfig};
use crate::output::{self, EigPoint, EvalReport, GridRow, SearchReport, SplitRow};
use crate::{io_err, CliError};

/// Search outcome plus the retrained genotype's accuracy.
#[derive(Debug, Clone)]
pub struct Cell {
    pub result: SearchResult,
    pub space: SpaceConfig,
    pub eval: RetrainResult,
    pub report: SearchReport,
}

fn make_split(cfg: &RunConfig, spec: &SplitSpec, data: &Dataset) -> Result<Split, CliError> {
    let mut rng = RngStream::new(cfg.seed).derive("split");
    data::split(data, spec, &mut rng).map_err(|e| CliError::Config(e.to_string()))
}

/// Training pool (train ∪ validation) for retraining, in ascending id order.
fn pool_ids(split: &Split) -> Vec<usize> {
    let mut ids: Vec<usize> = split.train.active_ids().iter().chain(split.val.active_ids()).copied().collect();
    ids.sort_unstable();
    ids
}

/// Retrains `genotype` from scratch on the unpruned pool and scores it on
/// the held-out test set.
pub fn evaluate_genotype(
    cfg: &RunConfig,
    spec: &SplitSpec,
    data: &Dataset,
    genotype: &Genotype,
) -> Result<(RetrainResult, usize, usize), CliError> {
    let space = cfg.space_config(data.dim(), data.num_classes);
    genotype.validate(&space).map_err(|e| CliError::Config(e.to_string()))?;
    let split = make_split(cfg, spec, data)?;
    let pool = pool_ids(&split);
    let rng = RngStream::new(cfg.seed).derive("eval");
    let r = retrain_genotype(&space, genotype, data, &pool, &split.test, &cfg.eval, &rng)?;
    Ok((r, pool.len(), split.test.len()))
}

pub fn genotype_lines(g: &Genotype, space: &SpaceConfig) -> Vec<String> {
    g.to_text(space).lines().map(str::to_string).collect()
}

/// Split, search, retrain the discovered genotype.
pub fn run_cell(cfg: &RunConfig, spec: &SplitSpec, data: &Dataset) -> Result<Cell, CliError> {
    let search_cfg = cfg.search_config(data.dim(), data.num_classes);
    search_cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let split = make_split(cfg, spec, data)?;
    let result = run_search(&search_cfg, data, split)?;
    let space = search_cfg.space.clone();
    let (eval, _, _) = evaluate_genotype(cfg, spec, data, &result.genotype)?;
    let last = result
        .trajectory
        .last()
        .ok_or_else(|| CliError::Runtime("search produced no epochs".into()))?;
    let eig_trajectory: Vec<EigPoint> = result
        .trajectory
        .iter()
        .filter_map(|r| r.eig_max.map(|eig_max| EigPoint { epoch: r.epoch, eig_max }))
        .collect();
    let taylor = eig_trajectory
        .last()
        .map(|p| taylor_bound(p.eig_max, &result.alpha, &result.genotype, cfg.analysis.bound_space))
        .transpose()?;
    let report = SearchReport {
        seed: cfg.seed,
        epochs: search_cfg.epochs,
        genotype: genotype_lines(&result.genotype, &space),
        linearact_edges: result.genotype.ops(&space).filter(|&o| o == OpKind::LinearAct).count(),
        final_train_acc: last.train_acc,
        final_val_acc: last.val_acc,
        final_test_acc: last.test_acc,
        genotype_test_acc: eval.test_acc,
        initial_train: result.initial_train,
        initial_val: result.initial_val,
        remaining_train: result.train.len(),
        remaining_val: result.val.len(),
        remaining_train_fraction: result.train.len() as f64 / result.initial_train as f64,
        remaining_val_fraction: result.val.len() as f64 / result.initial_val as f64,
        eig_trajectory,
        taylor_bound: taylor,
        bound_space: cfg.analysis.bound_space,
        prune_log: result.prune_log.clone(),
    };
    Ok(Cell {
        result,
        space,
        eval,
        report,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// `bdp search`: writes trajectory.csv, class_counts.csv, heatmap.csv,
/// genotype.txt and result.json.
pub fn cmd_search(config: &Path, out: Option<&Path>) -> Result<SearchReport, CliError> {
    let (cfg, base) = RunConfig::load(config)?;
    let dir = cfg.output_dir(out)?;
    let data = cfg.dataset(&base)?;
    let cell = run_cell(&cfg, &cfg.split, &data)?;
    write_search_outputs(&dir, &cell)?;
    Ok(cell.report)
}

pub fn write_search_outputs(dir: &Path, cell: &Cell) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let r = &cell.result;
    output::write_file(&dir.join("trajectory.csv"), &output::trajectory_csv(&r.trajectory))?;
    output::write_file(&dir.join("class_counts.csv"), &output::class_counts_csv(&r.class_counts))?;
    output::write_file(&dir.join("heatmap.csv"), &export_heatmap(&r.alpha, &cell.space)?.to_csv())?;
    output::write_file(&dir.join("genotype.txt"), &r.genotype.to_text(&cell.space))?;
    output::write_json(&dir.join("result.json"), &cell.report)
}

/// Cell configurations of the criteria grid, in row order.
pub fn grid_cells(cfg: &RunConfig) -> Vec<RunConfig> {
    let mut cells = Vec::new();
    for &(ct, cv) in &cfg.grid.criteria {
        for &(pt, pv) in &cfg.grid.ratios {
            let mut c = cfg.clone();
            c.prune.criterion_train = ct;
            c.prune.criterion_val = cv;
            c.prune.p_train = pt;
            c.prune.p_val = pv;
            cells.push(c);
        }
    }
    cells
}

pub enum GridOutput {
    Criteria(Vec<GridRow>),
    SplitRatio(Vec<SplitRow>),
}

/// `bdp grid`: criteria × ratios into grid.csv, or the split-ratio sweep
/// into split_sweep.csv. Cells run in parallel and share nothing.
pub fn cmd_grid(config: &Path, out: Option<&Path>) -> Result<GridOutput, CliError> {
    let (cfg, base) = RunConfig::load(config)?;
    let dir = cfg.output_dir(out)?;
    let data = cfg.dataset(&base)?;
    let result = run_grid(&cfg, &data)?;
    ensure_dir(&dir)?;
    match &result {
        GridOutput::Criteria(rows) => output::write_file(&dir.join("grid.csv"), &output::grid_csv(rows))?,
        GridOutput::SplitRatio(rows) => output::write_file(&dir.join("split_sweep.csv"), &output::split_csv(rows))?,
    }
    Ok(result)
}

pub fn run_grid(cfg: &RunConfig, data: &Dataset) -> Result<GridOutput, CliError> {
    match cfg.grid.mode {
        GridMode::Criteria => {
            let rows = grid_cells(cfg)
                .par_iter()
                .map(|c| {
                    let cell = run_cell(c, &c.split, data)?;
                    Ok(GridRow {
                        criterion_t: c.prune.criterion_train,
                        criterion_v: c.prune.criterion_val,
                        p_t: c.prune.p_train,
                        p_v: c.prune.p_val,
                        test_acc: cell.eval.test_acc,
                        search_test_acc: cell.report.final_test_acc,
                        remaining_train_fraction: cell.report.remaining_train_fraction,
                        remaining_val_fraction: cell.report.remaining_val_fraction,
                        seed: c.seed,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(GridOutput::Criteria(rows))
        }
        GridMode::SplitRatio => {
            let rows = cfg
                .grid
                .train_fractions
                .par_iter()
                .map(|&f| {
                    let spec = SplitSpec {
                        train_fraction: f,
                        ..cfg.split
                    };
                    let cell = run_cell(cfg, &spec, data)?;
                    Ok(SplitRow {
                        train_fraction: f,
                        train_size: cell.report.initial_train,
                        val_size: cell.report.initial_val,
                        val_acc: cell.report.final_val_acc,
                        search_test_acc: cell.report.final_test_acc,
                        test_acc: cell.eval.test_acc,
                        seed: cfg.seed,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(GridOutput::SplitRatio(rows))
        }
    }
}

/// `bdp eval`: retrains the genotype in `genotype` and writes eval.json to
/// `out`, the config's output_dir, or the genotype's directory.
pub fn cmd_eval(genotype: &Path, config: &Path, out: Option<&Path>) -> Result<EvalReport, CliError> {
    let (cfg, base) = RunConfig::load(config)?;
    let data = cfg.dataset(&base)?;
    let text = std::fs::read_to_string(genotype).map_err(|e| CliError::Config(format!("{}: {e}", genotype.display())))?;
    let space = cfg.space_config(data.dim(), data.num_classes);
    let g = Genotype::parse(&text, &space).map_err(|e| CliError::Config(e.to_string()))?;
    let report = eval_report(&cfg, &data, &g)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| genotype.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")));
    ensure_dir(&dir)?;
    output::write_json(&dir.join("eval.json"), &report)?;
    Ok(report)
}

pub fn eval_report(cfg: &RunConfig, data: &Dataset, g: &Genotype) -> Result<EvalReport, CliError> {
    let space = cfg.space_config(data.dim(), data.num_classes);
    let (r, train_samples, test_samples) = evaluate_genotype(cfg, &cfg.split, data, g)?;
    Ok(EvalReport {
        seed: cfg.seed,
        genotype: genotype_lines(g, &space),
        train_samples,
        test_samples,
        train_loss: r.train_loss,
        train_acc: r.train_acc,
        test_acc: r.test_acc,
    })
}

/// `bdp plot`: reads `dir/trajectory.csv`, writes `dir/trajectory.svg`.
pub fn cmd_plot(dir: &Path, series: Option<&[String]>) -> Result<PathBuf, CliError> {
    let csv_path = dir.join("trajectory.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(|e| CliError::Config(format!("{}: {e}", csv_path.display())))?;
    let table = crate::svg::Table::parse(&text)?;
    let svg = match series {
        Some(s) => crate::svg::emit_svg(&table, &crate::svg::single_panel(s))?,
        None => crate::svg::emit_svg(&table, &crate::svg::default_panels())?,
    };
    let path = dir.join("trajectory.svg");
    output::write_file(&path, &svg)?;
    Ok(path)
}
