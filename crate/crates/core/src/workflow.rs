//! End-to-end runs: basis, grid, selection, evaluation, pruning and solve.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map};

use crate::error::{Error, Result};
use crate::formats::{self, CompareRow, SobolTrialRow, Stats, SummaryRow};
use crate::indexset::{cardinality_for_ratio, IndexKind, IndexSet};
use crate::lstsq::{coefficient_error, precondition, prune_columns, solve_with, RankPolicy, SolveReport};
use crate::models::{Model, ModelSpec};
use crate::orthopoly::{Family, Recurrence};
use crate::pce::{PcExpansion, SobolReport};
use crate::pivotselect::{
    effective_select, randomized_select, subsample, subset_selection, PivotSelection, SelectionMethod,
};
use crate::tensorgrid::{
    assemble_design, evaluate_rows, pseudospectral_from_evaluations, weighted_from_evaluations,
    DesignMatrix, Evaluations, Exactness, TensorGrid,
};

/// Largest grid for which an oracle is computed without being asked.
pub const AUTO_ORACLE_LIMIT: usize = 1_000_000;

/// Points per dimension of the tensor grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum GridSpec {
    /// `k + 1` Gauss points per dimension.
    #[default]
    Auto,
    Uniform(usize),
    PerDim(Vec<usize>),
}

impl GridSpec {
    pub fn resolve(&self, dim: usize, k: usize) -> Result<Vec<usize>> {
        let p = match self {
            GridSpec::Auto => vec![k + 1; dim],
            GridSpec::Uniform(p) => vec![*p; dim],
            GridSpec::PerDim(p) if p.len() == dim => p.clone(),
            GridSpec::PerDim(p) => {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                })
            }
        };
        if p.contains(&0) {
            return Err(Error::InvalidArgument("grids need at least one point per dimension".into()));
        }
        Ok(p)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GridRepr {
    Uniform(usize),
    PerDim(Vec<usize>),
    Named(String),
}

impl Serialize for GridSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GridSpec::Auto => GridRepr::Named("auto".into()),
            GridSpec::Uniform(p) => GridRepr::Uniform(*p),
            GridSpec::PerDim(p) => GridRepr::PerDim(p.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match GridRepr::deserialize(d)? {
            GridRepr::Uniform(p) => Ok(GridSpec::Uniform(p)),
            GridRepr::PerDim(p) => Ok(GridSpec::PerDim(p)),
            GridRepr::Named(s) if s == "auto" => Ok(GridSpec::Auto),
            GridRepr::Named(s) => Err(serde::de::Error::custom(format!(
                "points_per_dim must be \"auto\", an integer or a list, got \"{s}\""
            ))),
        }
    }
}

/// Where reference coefficients for the error come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub enabled: bool,
    /// Coefficients JSON written by an earlier run.
    pub path: Option<PathBuf>,
    /// Full-tensor grid size; defaults to the grid of the largest degree.
    pub points_per_dim: Option<usize>,
    /// Degree of the reference basis; defaults to the largest degree.
    pub degree: Option<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            enabled: true,
            path: None,
            points_per_dim: None,
            degree: None,
        }
    }
}

/// Everything a run depends on. Serialized verbatim into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub family: Family,
    pub basis: IndexKind,
    /// Maximum degrees `k`; every command loops over them.
    pub degrees: Vec<usize>,
    pub points_per_dim: GridSpec,
    pub method: SelectionMethod,
    /// `n / l` ratios, each at least 1.
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub oracle: OracleConfig,
    /// Highest interaction order listed individually in Sobol' output.
    pub sobol_order: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSpec::AnalyticExp,
            family: Family::LegendreUniform,
            basis: IndexKind::TotalOrder,
            degrees: vec![4],
            points_per_dim: GridSpec::Auto,
            method: SelectionMethod::QrPivot,
            ratios: vec![1.0],
            trials: 20,
            seed: 0,
            oracle: OracleConfig::default(),
            sobol_order: 2,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.degrees.is_empty() {
            return Err(Error::InvalidArgument("at least one degree is required".into()));
        }
        if self.ratios.is_empty() {
            return Err(Error::InvalidArgument("at least one n/l ratio is required".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r >= 1.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!("n/l ratios must be >= 1, got {r}")));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trial count must be >= 1".into()));
        }
        IndexKind::from_parts(self.basis.name(), self.basis.q())?;
        for &k in &self.degrees {
            self.points_per_dim.resolve(self.model.dim(), k)?;
        }
        Ok(())
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }
}

/// Basis, grid and design matrix for one degree.
#[derive(Debug, Clone)]
pub struct Problem {
    pub k: usize,
    pub index_set: IndexSet,
    pub grid: TensorGrid,
    pub design: DesignMatrix,
}

pub fn grid_for(family: Family, points_per_dim: &[usize]) -> Result<TensorGrid> {
    let recs = points_per_dim
        .iter()
        .map(|&p| Recurrence::new(family, p.max(1)))
        .collect();
    TensorGrid::new(recs, points_per_dim)
}

pub fn build_problem(family: Family, basis: IndexKind, dim: usize, k: usize, points_per_dim: &[usize]) -> Result<Problem> {
    let index_set = IndexSet::new(basis, dim, k)?;
    let grid = grid_for(family, points_per_dim)?;
    if grid.len() < index_set.len() {
        return Err(Error::InvalidArgument(format!(
            "grid has {} points, fewer than the {} basis functions",
            grid.len(),
            index_set.len()
        )));
    }
    let design = assemble_design(&grid, &index_set, Exactness::Enforce)?;
    Ok(Problem {
        k,
        index_set,
        grid,
        design,
    })
}

impl RunConfig {
    pub fn problem(&self, k: usize) -> Result<Problem> {
        let p = self.points_per_dim.resolve(self.model.dim(), k)?;
        build_problem(self.family, self.basis, self.model.dim(), k, &p)
    }
}

/// Choose `n = |J|` rows of the design matrix.
pub fn select_rows(problem: &Problem, method: SelectionMethod, seed: u64) -> Result<PivotSelection> {
    match method {
        SelectionMethod::QrPivot => effective_select(&problem.design),
        SelectionMethod::SubsetSelection => subset_selection(&problem.design.matrix),
        SelectionMethod::Randomized => {
            randomized_select(problem.design.nrows(), problem.design.ncols(), seed)
        }
    }
}

/// Reference coefficients from a full tensor projection.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub index_set: IndexSet,
    pub coefficients: Vec<f64>,
    /// Number of model evaluations spent on it (0 when read from a file).
    pub evaluations: usize,
}

impl Oracle {
    pub fn compute(model: &dyn Model, family: Family, basis: IndexKind, degree: usize, points_per_dim: usize) -> Result<Oracle> {
        let index_set = IndexSet::new(basis, model.dim(), degree)?;
        let grid = grid_for(family, &vec![points_per_dim; model.dim()])?;
        let all: Vec<usize> = (0..grid.len()).collect();
        let evals = evaluate_rows(&grid, model, &all)?;
        let coefficients = pseudospectral_from_evaluations(&grid, &index_set, &evals)?;
        Ok(Oracle {
            index_set,
            coefficients,
            evaluations: grid.len(),
        })
    }

    pub fn load(path: &Path) -> Result<Oracle> {
        let (index_set, coefficients) = formats::read_coefficients_json(File::open(path)?, path)?;
        Ok(Oracle {
            index_set,
            coefficients,
            evaluations: 0,
        })
    }

    pub fn error(&self, report: &SolveReport) -> Result<f64> {
        coefficient_error(&self.index_set, &self.coefficients, &report.index_set, &report.coefficients)
    }

    pub fn expansion(&self, family: Family) -> Result<PcExpansion> {
        let recs = (0..self.index_set.dim())
            .map(|k| Recurrence::new(family, self.index_set.max_entry(k)))
            .collect();
        PcExpansion::new(self.index_set.clone(), self.coefficients.clone(), recs)
    }

    pub fn to_json(&self, extra: Map<String, serde_json::Value>) -> serde_json::Value {
        let report = SolveReport {
            index_set: self.index_set.clone(),
            coefficients: self.coefficients.clone(),
            kappa_box: 1.0,
            kappa_dagger: 1.0,
            kappa_preconditioned: 1.0,
            residual_norm: 0.0,
            epsilon: Some(0.0),
            rank_deficient: false,
        };
        formats::coefficients_json(&report, extra)
    }
}

/// Resolve the oracle of a config: an explicit file, an affordable full
/// tensor run for built-in models, or nothing.
pub fn resolve_oracle(cfg: &RunConfig, model: &dyn Model) -> Result<Option<Oracle>> {
    if !cfg.oracle.enabled {
        return Ok(None);
    }
    if let Some(path) = &cfg.oracle.path {
        return Oracle::load(path).map(Some);
    }
    let degree = cfg.oracle.degree.unwrap_or_else(|| cfg.max_degree());
    let points = match cfg.oracle.points_per_dim {
        Some(p) => p,
        None => {
            let per_dim = cfg.points_per_dim.resolve(cfg.model.dim(), cfg.max_degree())?;
            per_dim.into_iter().max().unwrap_or(1)
        }
    };
    let m = (points as u128).checked_pow(model.dim() as u32).unwrap_or(u128::MAX);
    if !cfg.model.is_builtin() || m > AUTO_ORACLE_LIMIT as u128 {
        log::info!("no affordable oracle; errors need --oracle <coefficients.json>");
        return Ok(None);
    }
    Oracle::compute(model, cfg.family, cfg.basis, degree, points).map(Some)
}

/// One pruned least-squares solve.
#[derive(Debug, Clone)]
pub struct Fit {
    pub k: usize,
    pub ratio: f64,
    pub report: SolveReport,
}

impl Fit {
    pub fn summary(&self, method: SelectionMethod) -> SummaryRow {
        SummaryRow {
            k: self.k,
            ratio: self.ratio,
            method: method.to_string(),
            epsilon: self.report.epsilon,
            kappa_box: self.report.kappa_box,
            kappa_dagger: self.report.kappa_dagger,
        }
    }
}

/// Steps 4 and 5: prune per ratio and solve, using evaluations at the selected rows.
pub fn fit_selection(
    problem: &Problem,
    selection: &PivotSelection,
    evaluations: &Evaluations,
    ratios: &[f64],
    oracle: Option<&Oracle>,
    policy: RankPolicy,
) -> Result<Vec<Fit>> {
    let system = subsample(&problem.design, selection, &problem.grid)?;
    let rhs: DVector<f64> = weighted_from_evaluations(&problem.grid, evaluations, &system.rows)?;
    let n = system.index_set.len();
    ratios
        .iter()
        .map(|&ratio| {
            let l = cardinality_for_ratio(n, ratio);
            let pruned = precondition(prune_columns(&system, l)?)?;
            let mut report = solve_with(&pruned, &rhs, policy)?;
            if let Some(o) = oracle {
                report.epsilon = Some(o.error(&report)?);
            }
            Ok(Fit {
                k: problem.k,
                ratio,
                report,
            })
        })
        .collect()
}

/// The outcome of fitting one degree.
#[derive(Debug, Clone)]
pub struct FitRun {
    pub problem: Problem,
    pub selection: PivotSelection,
    pub evaluations: Evaluations,
    pub fits: Vec<Fit>,
}

impl FitRun {
    /// Selected points in physical coordinates.
    pub fn physical_points(&self, model: &ModelSpec) -> Vec<Vec<f64>> {
        self.selection
            .selected_rows()
            .iter()
            .map(|&r| model.to_physical(self.problem.grid.point(r)))
            .collect()
    }
}

/// Steps 1 to 5 for degree `k`; the model is evaluated at the `n` selected rows only.
pub fn fit_degree(cfg: &RunConfig, model: &dyn Model, k: usize, oracle: Option<&Oracle>) -> Result<FitRun> {
    let problem = cfg.problem(k)?;
    let selection = select_rows(&problem, cfg.method, cfg.seed)?;
    let evaluations = evaluate_rows(&problem.grid, model, selection.selected_rows())?;
    finish_fit(cfg, problem, selection, evaluations, oracle)
}

/// As [`fit_degree`] with evaluations supplied from outside (e.g. a values CSV).
pub fn fit_degree_with_values(
    cfg: &RunConfig,
    k: usize,
    values: &BTreeMap<usize, f64>,
    oracle: Option<&Oracle>,
) -> Result<FitRun> {
    let problem = cfg.problem(k)?;
    let selection = select_rows(&problem, cfg.method, cfg.seed)?;
    let missing: Vec<(usize, Vec<f64>)> = selection
        .selected_rows()
        .iter()
        .filter(|r| !values.contains_key(r))
        .map(|&r| (r, cfg.model.to_physical(problem.grid.point(r))))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEvaluations { missing });
    }
    let evaluations = Evaluations(
        selection
            .selected_rows()
            .iter()
            .map(|r| (*r, values[r]))
            .collect(),
    );
    finish_fit(cfg, problem, selection, evaluations, oracle)
}

fn finish_fit(
    cfg: &RunConfig,
    problem: Problem,
    selection: PivotSelection,
    evaluations: Evaluations,
    oracle: Option<&Oracle>,
) -> Result<FitRun> {
    if !selection.ties.is_empty() {
        log::info!("k = {}: pivot ties at steps {:?}", problem.k, selection.ties);
    }
    let fits = fit_selection(&problem, &selection, &evaluations, &cfg.ratios, oracle, RankPolicy::Strict)?;
    Ok(FitRun {
        problem,
        selection,
        evaluations,
        fits,
    })
}

/// Effective selection against randomized trials, per degree and ratio.
#[derive(Debug, Clone, Default)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Effective fits, one row per degree and ratio.
    pub effective: Vec<SummaryRow>,
    /// Every randomized fit.
    pub trials: Vec<SummaryRow>,
    /// Randomized trials that needed a minimum-norm solve.
    pub rank_deficient_trials: usize,
    pub effective_ties: Vec<(usize, Vec<(usize, usize)>)>,
}

/// Randomized rows are drawn with seeds `cfg.seed .. cfg.seed + cfg.trials`.
/// Nearly singular randomized systems are solved in the minimum-norm sense
/// instead of failing the whole comparison.
pub fn compare(cfg: &RunConfig, model: &dyn Model, oracle: Option<&Oracle>) -> Result<Comparison> {
    let method = match cfg.method {
        SelectionMethod::Randomized => SelectionMethod::QrPivot,
        m => m,
    };
    let mut out = Comparison::default();
    for &k in &cfg.degrees {
        let problem = cfg.problem(k)?;
        let selection = select_rows(&problem, method, cfg.seed)?;
        out.effective_ties.push((k, selection.ties.clone()));
        let evals = evaluate_rows(&problem.grid, model, selection.selected_rows())?;
        let effective = fit_selection(&problem, &selection, &evals, &cfg.ratios, oracle, RankPolicy::Strict)?;

        let mut per_ratio: Vec<Vec<Fit>> = vec![Vec::new(); cfg.ratios.len()];
        for t in 0..cfg.trials as u64 {
            let seed = cfg.seed.wrapping_add(t);
            let sel = randomized_select(problem.design.nrows(), problem.design.ncols(), seed)?;
            let evals = evaluate_rows(&problem.grid, model, sel.selected_rows())?;
            let fits = fit_selection(&problem, &sel, &evals, &cfg.ratios, oracle, RankPolicy::MinimumNorm)?;
            for (slot, fit) in per_ratio.iter_mut().zip(fits) {
                if fit.report.rank_deficient {
                    out.rank_deficient_trials += 1;
                }
                let mut row = fit.summary(SelectionMethod::Randomized);
                row.method = format!("randomized:{seed}");
                out.trials.push(row);
                slot.push(fit);
            }
        }

        for (eff, trials) in effective.iter().zip(&per_ratio) {
            let eps: Vec<f64> = trials.iter().filter_map(|f| f.report.epsilon).collect();
            let kappa: Vec<f64> = trials.iter().map(|f| f.report.kappa_dagger).collect();
            out.rows.push(CompareRow {
                k,
                ratio: eff.ratio,
                trials: cfg.trials,
                rand_eps: Stats::of(&eps),
                rand_kappa: Stats::of(&kappa),
                eff_eps: eff.report.epsilon,
                eff_kappa: eff.report.kappa_dagger,
            });
            out.effective.push(eff.summary(method));
        }
    }
    Ok(out)
}

/// Sobol' indices of the effective fit, the randomized trials and the oracle.
#[derive(Debug, Clone)]
pub struct SobolStudy {
    pub reference: Option<SobolReport>,
    pub effective: SobolReport,
    pub trials: Vec<SobolReport>,
}

impl SobolStudy {
    /// First-order rows for every variable.
    pub fn first_order_rows(&self) -> Vec<SobolTrialRow> {
        let d = self.effective.first_order.len();
        (0..d)
            .map(|i| {
                let samples: Vec<f64> = self.trials.iter().filter_map(|t| t.first_order[i]).collect();
                SobolTrialRow {
                    subset: vec![i],
                    reference: self.reference.as_ref().and_then(|r| r.first_order[i]),
                    effective: self.effective.first_order[i],
                    trials: Stats::of(&samples),
                }
            })
            .collect()
    }
}

pub fn expansion_of(family: Family, report: &SolveReport) -> Result<PcExpansion> {
    let recs = (0..report.index_set.dim())
        .map(|k| Recurrence::new(family, report.index_set.max_entry(k)))
        .collect();
    PcExpansion::new(report.index_set.clone(), report.coefficients.clone(), recs)
}

/// Sobol' study at degree `k` and the first configured ratio. Randomized
/// trials run only with `with_trials`.
pub fn sobol_study(cfg: &RunConfig, model: &dyn Model, k: usize, oracle: Option<&Oracle>, with_trials: bool) -> Result<SobolStudy> {
    let ratio = cfg.ratios[0];
    let problem = cfg.problem(k)?;
    let method = match cfg.method {
        SelectionMethod::Randomized => SelectionMethod::QrPivot,
        m => m,
    };
    let selection = select_rows(&problem, method, cfg.seed)?;
    let evals = evaluate_rows(&problem.grid, model, selection.selected_rows())?;
    let fit = fit_selection(&problem, &selection, &evals, &[ratio], None, RankPolicy::Strict)?.remove(0);
    let effective = expansion_of(cfg.family, &fit.report)?.sobol_indices(cfg.sobol_order)?;

    let mut trials = Vec::new();
    if with_trials {
        for t in 0..cfg.trials as u64 {
            let sel = randomized_select(problem.design.nrows(), problem.design.ncols(), cfg.seed.wrapping_add(t))?;
            let evals = evaluate_rows(&problem.grid, model, sel.selected_rows())?;
            let fit = fit_selection(&problem, &sel, &evals, &[ratio], None, RankPolicy::MinimumNorm)?.remove(0);
            trials.push(expansion_of(cfg.family, &fit.report)?.sobol_indices(cfg.sobol_order)?);
        }
    }
    let reference = match oracle {
        Some(o) => Some(o.expansion(cfg.family)?.sobol_indices(cfg.sobol_order)?),
        None => None,
    };
    Ok(SobolStudy {
        reference,
        effective,
        trials,
    })
}

/// `n` equispaced points on `[-1, 1]`, endpoints included.
pub fn equispaced(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Root-mean-square difference between a surrogate and the model on a 2-D
/// `n x n` equispaced validation grid.
pub fn validation_rms(expansion: &PcExpansion, model: &dyn Model, n: usize) -> Result<f64> {
    let (points, truth) = validation_values(model, n)?;
    let mut sum = 0.0;
    for (p, f) in points.iter().zip(&truth) {
        let d = expansion.evaluate(p)? - f;
        sum += d * d;
    }
    Ok((sum / points.len() as f64).sqrt())
}

fn validation_values(model: &dyn Model, n: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if model.dim() != 2 {
        return Err(Error::InvalidArgument("validation grids are 2-D only".into()));
    }
    let axis = equispaced(n);
    let points: Vec<Vec<f64>> = axis
        .iter()
        .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
        .collect();
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let idx: Vec<usize> = (0..points.len()).collect();
    let truth = model.evaluate(&idx, &refs)?;
    Ok((points, truth))
}

/// A surrogate of the 2-D peak function for one hyperbolic `q`.
#[derive(Debug, Clone)]
pub struct PeakFit {
    pub q: f64,
    pub run: FitRun,
    pub expansion: PcExpansion,
    pub rms: f64,
}

pub const PEAK_DEGREE: usize = 9;
pub const PEAK_POINTS: usize = 10;
pub const VALIDATION_POINTS: usize = 50;

/// Effective fits of the peak function with hyperbolic bases of max degree 9
/// on the 10 x 10 Gauss grid, validated on a 50 x 50 equispaced grid.
pub fn peak_study(qs: &[f64]) -> Result<Vec<PeakFit>> {
    let model = ModelSpec::Peak2d;
    qs.iter()
        .map(|&q| {
            let cfg = RunConfig {
                model: model.clone(),
                basis: IndexKind::from_parts("hyperbolic", Some(q))?,
                degrees: vec![PEAK_DEGREE],
                points_per_dim: GridSpec::Uniform(PEAK_POINTS),
                ..RunConfig::default()
            };
            let run = fit_degree(&cfg, &model, PEAK_DEGREE, None)?;
            let expansion = expansion_of(cfg.family, &run.fits[0].report)?;
            let rms = validation_rms(&expansion, &model, VALIDATION_POINTS)?;
            Ok(PeakFit { q, run, expansion, rms })
        })
        .collect()
}

/// Named bundles of runs behind the published tables and figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Table3,
    Table4,
    Table5,
    Fig3,
    Fig4,
    Fig8,
    Fig9,
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "table3" => Target::Table3,
            "table4" => Target::Table4,
            "table5" => Target::Table5,
            "fig3" => Target::Fig3,
            "fig4" => Target::Fig4,
            "fig8" => Target::Fig8,
            "fig9" => Target::Fig9,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown target `{other}` (table3, table4, table5, fig3, fig4, fig8, fig9)"
                )))
            }
        })
    }
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Table3 => "table3",
            Target::Table4 => "table4",
            Target::Table5 => "table5",
            Target::Fig3 => "fig3",
            Target::Fig4 => "fig4",
            Target::Fig8 => "fig8",
            Target::Fig9 => "fig9",
        }
    }

    /// The run configuration of the target; `seed` and `trials` come from the caller.
    pub fn config(&self, seed: u64, trials: usize) -> RunConfig {
        let piston = |ratios: Vec<f64>| RunConfig {
            model: ModelSpec::piston(),
            degrees: vec![2, 3, 4],
            ratios,
            trials,
            seed,
            oracle: OracleConfig {
                points_per_dim: Some(5),
                degree: Some(4),
                ..OracleConfig::default()
            },
            ..RunConfig::default()
        };
        match self {
            Target::Table3 => piston(vec![1.0]),
            Target::Table4 => piston(vec![1.15]),
            Target::Table5 => piston(vec![1.25]),
            Target::Fig8 => RunConfig {
                degrees: vec![4],
                sobol_order: 1,
                ..piston(vec![1.0, 1.25])
            },
            Target::Fig3 | Target::Fig4 => RunConfig {
                model: ModelSpec::AnalyticExp,
                degrees: (2..=20).collect(),
                points_per_dim: GridSpec::Uniform(21),
                ratios: vec![1.0, 1.15, 1.25, 1.5],
                trials,
                seed,
                oracle: OracleConfig {
                    points_per_dim: Some(21),
                    degree: Some(20),
                    ..OracleConfig::default()
                },
                ..RunConfig::default()
            },
            Target::Fig9 => RunConfig {
                model: ModelSpec::Peak2d,
                basis: IndexKind::TotalOrder,
                degrees: vec![PEAK_DEGREE],
                points_per_dim: GridSpec::Uniform(PEAK_POINTS),
                oracle: OracleConfig {
                    enabled: false,
                    ..OracleConfig::default()
                },
                trials,
                seed,
                ..RunConfig::default()
            },
        }
    }
}

pub fn ratio_tag(ratio: f64) -> String {
    format!("r{ratio:.2}")
}

/// Create `path` and hand a buffered writer to `f`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_comparison(out: &Path, stem: &str, cmp: &Comparison, ratios: &[f64]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &ratio in ratios {
        let suffix = if ratios.len() > 1 { format!("_{}", ratio_tag(ratio)) } else { String::new() };
        let rows: Vec<CompareRow> = cmp.rows.iter().filter(|r| r.ratio == ratio).cloned().collect();
        let path = out.join(format!("{stem}{suffix}.csv"));
        write_file(&path, |w| formats::write_compare_csv(w, &rows))?;
        written.push(path);

        let summary: Vec<SummaryRow> = cmp
            .effective
            .iter()
            .chain(&cmp.trials)
            .filter(|r| r.ratio == ratio)
            .cloned()
            .collect();
        let path = out.join(format!("{stem}{suffix}_summary.csv"));
        write_file(&path, |w| formats::write_summary_csv(w, &summary))?;
        written.push(path);
    }
    Ok(written)
}

fn write_surface(path: &Path, points: &[Vec<f64>], values: &[f64]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "z1,z2,value")?;
        for (p, v) in points.iter().zip(values) {
            writeln!(w, "{},{},{}", formats::fmt_f64(p[0]), formats::fmt_f64(p[1]), formats::fmt_f64(*v))?;
        }
        Ok(())
    })
}

/// Run a target and write its CSVs into `out`; returns the files written.
pub fn reproduce(target: Target, out: &Path, seed: u64, trials: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let cfg = target.config(seed, trials);
    let config_path = out.join(format!("{}_config.json", target.name()));
    std::fs::write(&config_path, cfg.to_json())?;
    let mut written = vec![config_path];
    let model = cfg.model.clone();

    match target {
        Target::Table3 | Target::Table4 | Target::Table5 | Target::Fig3 | Target::Fig4 => {
            let oracle = resolve_oracle(&cfg, &model)?;
            let cmp = compare(&cfg, &model, oracle.as_ref())?;
            if cmp.rank_deficient_trials > 0 {
                log::info!("{} randomized trials were numerically rank deficient", cmp.rank_deficient_trials);
            }
            written.extend(write_comparison(out, target.name(), &cmp, &cfg.ratios)?);
            let ties_path = out.join(format!("{}_ties.csv", target.name()));
            write_file(&ties_path, |w| {
                writeln!(w, "k,step,tied")?;
                for (k, ties) in &cmp.effective_ties {
                    for (step, n) in ties {
                        writeln!(w, "{k},{step},{n}")?;
                    }
                }
                Ok(())
            })?;
            written.push(ties_path);
        }
        Target::Fig8 => {
            let oracle = resolve_oracle(&cfg, &model)?;
            for &ratio in &cfg.ratios {
                let run_cfg = RunConfig {
                    ratios: vec![ratio],
                    ..cfg.clone()
                };
                let study = sobol_study(&run_cfg, &model, 4, oracle.as_ref(), true)?;
                let path = out.join(format!("fig8_{}.csv", ratio_tag(ratio)));
                write_file(&path, |w| formats::write_sobol_trials_csv(w, &study.first_order_rows()))?;
                written.push(path);
            }
        }
        Target::Fig9 => {
            let fits = peak_study(&[0.3, 0.5, 1.0])?;
            let grid = grid_for(cfg.family, &[PEAK_POINTS, PEAK_POINTS])?;
            let path = out.join("fig9_grid.csv");
            let all: Vec<usize> = (0..grid.len()).collect();
            let pts: Vec<Vec<f64>> = all.iter().map(|&i| grid.point(i).to_vec()).collect();
            write_file(&path, |w| formats::write_points_csv(w, &all, &pts))?;
            written.push(path);

            let (vpoints, truth) = validation_values(&model, VALIDATION_POINTS)?;
            let path = out.join("fig9_surface_true.csv");
            write_surface(&path, &vpoints, &truth)?;
            written.push(path);

            let tensor_set = IndexSet::new(IndexKind::Tensor, 2, PEAK_DEGREE)?;
            let evals = evaluate_rows(&grid, &model, &all)?;
            let tensor = PcExpansion::new(
                tensor_set.clone(),
                pseudospectral_from_evaluations(&grid, &tensor_set, &evals)?,
                vec![Recurrence::new(cfg.family, PEAK_DEGREE); 2],
            )?;
            let path = out.join("fig9_surface_tensor.csv");
            let values = vpoints.iter().map(|p| tensor.evaluate(p)).collect::<Result<Vec<_>>>()?;
            write_surface(&path, &vpoints, &values)?;
            written.push(path);
            let tensor_rms = validation_rms(&tensor, &model, VALIDATION_POINTS)?;

            for fit in &fits {
                let tag = format!("q{:.1}", fit.q);
                let path = out.join(format!("fig9_points_{tag}.csv"));
                let rows = fit.run.selection.selected_rows();
                write_file(&path, |w| formats::write_points_csv(w, rows, &fit.run.physical_points(&model)))?;
                written.push(path);

                let path = out.join(format!("fig9_surface_{tag}.csv"));
                let values = vpoints.iter().map(|p| fit.expansion.evaluate(p)).collect::<Result<Vec<_>>>()?;
                write_surface(&path, &vpoints, &values)?;
                written.push(path);
            }

            let path = out.join("fig9_summary.csv");
            write_file(&path, |w| {
                writeln!(w, "basis,q,terms,evaluations,rms_error")?;
                writeln!(w, "tensor,,{},{},{}", tensor_set.len(), grid.len(), formats::fmt_f64(tensor_rms))?;
                for fit in &fits {
                    writeln!(
                        w,
                        "hyperbolic,{},{},{},{}",
                        formats::fmt_f64(fit.q),
                        fit.expansion.index_set().len(),
                        fit.run.evaluations.len(),
                        formats::fmt_f64(fit.rms)
                    )?;
                }
                Ok(())
            })?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Extra JSON fields recorded next to fitted coefficients.
pub fn fit_metadata(cfg: &RunConfig, fit: &Fit, evaluations: usize) -> Map<String, serde_json::Value> {
    let mut m = Map::new();
    m.insert("model".into(), json!(cfg.model.name()));
    m.insert("k".into(), json!(fit.k));
    m.insert("ratio".into(), json!(fit.ratio));
    m.insert("method".into(), json!(cfg.method.to_string()));
    m.insert("evaluations".into(), json!(evaluations));
    m
}
