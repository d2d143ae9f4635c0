//! Test functions and the adapter for external black-box models.
//!
//! Every model is called with points in the standard domain `[-1, 1]^d`;
//! models with physical input ranges map them affinely before evaluating.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats;

/// Anything that can be evaluated at a batch of grid points.
pub trait Model: Sync {
    fn dim(&self) -> usize;

    /// Evaluate at `points` (standard domain); `indices` are the grid row
    /// numbers of the points and are only used for bookkeeping.
    fn evaluate(&self, indices: &[usize], points: &[&[f64]]) -> Result<Vec<f64>>;
}

/// Piston input ranges: M, S, V0, k, P0, Ta, T0.
///
/// The surface area range is [0.005, 0.020] m^2.
pub const PISTON_RANGES: [(f64, f64); 7] = [
    (30.0, 60.0),
    (0.005, 0.020),
    (0.002, 0.010),
    (1000.0, 5000.0),
    (90000.0, 110000.0),
    (290.0, 296.0),
    (340.0, 360.0),
];

pub const PISTON_NAMES: [&str; 7] = ["M", "S", "V0", "k", "P0", "Ta", "T0"];

/// Where an external model gets its values from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ExternalSource {
    /// Run `command[0]` with arguments `command[1..]`, followed by the path of
    /// a points CSV to read and the path of a values CSV to write.
    Command { command: Vec<String> },
    /// Look values up in an `index,value` CSV keyed by grid row.
    Table { values: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// `exp(z1 + z2)` on `[-1, 1]^2`.
    AnalyticExp,
    /// Piston cycle time; `ranges` defaults to [`PISTON_RANGES`].
    Piston {
        #[serde(default)]
        ranges: Option<Vec<(f64, f64)>>,
    },
    /// `1 / (1 + 50 (z1 - 0.9)^2 + 50 (z2 + 0.9)^2)` on `[-1, 1]^2`.
    Peak2d,
    External {
        dim: usize,
        #[serde(default)]
        ranges: Option<Vec<(f64, f64)>>,
        source: ExternalSource,
    },
}

impl ModelSpec {
    pub fn piston() -> Self {
        ModelSpec::Piston { ranges: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::AnalyticExp => "analytic-exp",
            ModelSpec::Piston { .. } => "piston",
            ModelSpec::Peak2d => "peak-2d",
            ModelSpec::External { .. } => "external",
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, ModelSpec::External { .. })
    }

    /// Physical input ranges, one per dimension.
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        match self {
            ModelSpec::AnalyticExp | ModelSpec::Peak2d => vec![(-1.0, 1.0); 2],
            ModelSpec::Piston { ranges } => ranges.clone().unwrap_or_else(|| PISTON_RANGES.to_vec()),
            ModelSpec::External { dim, ranges, .. } => {
                ranges.clone().unwrap_or_else(|| vec![(-1.0, 1.0); *dim])
            }
        }
    }

    /// Map a standard-domain point to physical coordinates.
    pub fn to_physical(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(self.ranges())
            .map(|(&z, (a, b))| map_affine(z, a, b))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = self.ranges();
        if ranges.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: ranges.len(),
            });
        }
        if let Some((i, _)) = ranges.iter().enumerate().find(|(_, (a, b))| !(a < b)) {
            return Err(Error::InvalidArgument(format!(
                "input range {i} must be increasing"
            )));
        }
        if let ModelSpec::External {
            source: ExternalSource::Command { command },
            ..
        } = self
        {
            if command.is_empty() {
                return Err(Error::InvalidArgument("external command is empty".into()));
            }
        }
        Ok(())
    }
}

/// `[-1, 1] -> [a, b]`, exact at both endpoints and the midpoint, and the
/// identity on `[-1, 1]` itself.
pub fn map_affine(z: f64, a: f64, b: f64) -> f64 {
    if a == -b {
        return z * b;
    }
    ((1.0 - z) * a + (1.0 + z) * b) / 2.0
}

pub fn eval_analytic_exp(z: &[f64]) -> f64 {
    (z[0] + z[1]).exp()
}

pub fn eval_peak_2d(z: &[f64]) -> f64 {
    let a = z[0] - 0.9;
    let b = z[1] + 0.9;
    1.0 / (1.0 + 50.0 * a * a + 50.0 * b * b)
}

/// Piston inputs in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PistonInputs {
    pub mass: f64,
    pub surface: f64,
    pub volume: f64,
    pub spring: f64,
    pub pressure: f64,
    pub ambient_temp: f64,
    pub gas_temp: f64,
}

impl PistonInputs {
    pub fn from_slice(x: &[f64]) -> Self {
        PistonInputs {
            mass: x[0],
            surface: x[1],
            volume: x[2],
            spring: x[3],
            pressure: x[4],
            ambient_temp: x[5],
            gas_temp: x[6],
        }
    }
}

/// Piston cycle time in seconds.
pub fn eval_piston(x: PistonInputs) -> Result<f64> {
    let PistonInputs {
        mass: m,
        surface: s,
        volume: v0,
        spring: k,
        pressure: p0,
        ambient_temp: ta,
        gas_temp: t0,
    } = x;
    let fail = |what: &str| Error::InvalidArgument(format!("piston: {what} for inputs {x:?}"));

    let a = p0 * s + 19.62 * m - k * v0 / s;
    let disc = a * a + 4.0 * k * (p0 * v0 / t0) * ta;
    if !(disc >= 0.0) {
        return Err(fail("negative discriminant in V"));
    }
    let v = s / (2.0 * k) * (disc.sqrt() - a);
    let denom = k + s * s * (p0 * v0 * ta) / (t0 * v * v);
    let ratio = m / denom;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(fail("non-positive argument under the cycle-time root"));
    }
    Ok(2.0 * PI * ratio.sqrt())
}

impl Model for ModelSpec {
    fn dim(&self) -> usize {
        match self {
            ModelSpec::AnalyticExp | ModelSpec::Peak2d => 2,
            ModelSpec::Piston { .. } => 7,
            ModelSpec::External { dim, .. } => *dim,
        }
    }

    fn evaluate(&self, indices: &[usize], points: &[&[f64]]) -> Result<Vec<f64>> {
        match self {
            ModelSpec::AnalyticExp => Ok(points.par_iter().map(|z| eval_analytic_exp(z)).collect()),
            ModelSpec::Peak2d => Ok(points.par_iter().map(|z| eval_peak_2d(z)).collect()),
            ModelSpec::Piston { .. } => points
                .par_iter()
                .zip(indices.par_iter())
                .map(|(z, &i)| {
                    let x = self.to_physical(z);
                    eval_piston(PistonInputs::from_slice(&x)).map_err(|e| Error::ModelEvaluation {
                        index: i,
                        point: x,
                        message: e.to_string(),
                    })
                })
                .collect(),
            ModelSpec::External { source, .. } => {
                let physical: Vec<Vec<f64>> = points.iter().map(|z| self.to_physical(z)).collect();
                eval_external(source, indices, &physical)
            }
        }
    }
}

/// Evaluate an external model at physical `points`.
pub fn eval_external(
    source: &ExternalSource,
    indices: &[usize],
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let table = match source {
        ExternalSource::Table { values } => {
            let file = File::open(values)?;
            formats::read_values_csv(BufReader::new(file), values)?
        }
        ExternalSource::Command { command } => run_command(command, indices, points)?,
    };
    lookup(&table, indices, points)
}

fn lookup(table: &BTreeMap<usize, f64>, indices: &[usize], points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut missing = Vec::new();
    let mut values = Vec::with_capacity(indices.len());
    for (&i, p) in indices.iter().zip(points) {
        match table.get(&i) {
            Some(&v) => values.push(v),
            None => missing.push((i, p.clone())),
        }
    }
    if missing.is_empty() {
        Ok(values)
    } else {
        Err(Error::MissingEvaluations { missing })
    }
}

fn run_command(
    command: &[String],
    indices: &[usize],
    points: &[Vec<f64>],
) -> Result<BTreeMap<usize, f64>> {
    let display = command.join(" ");
    let (program, args) = command.split_first().ok_or_else(|| Error::ExternalCommand {
        command: display.clone(),
        message: "empty command".into(),
    })?;
    let dir = tempfile::tempdir()?;
    let points_path = dir.path().join("points.csv");
    let values_path = dir.path().join("values.csv");
    formats::write_points_csv(File::create(&points_path)?, indices, points)?;

    let output = Command::new(program)
        .args(args)
        .arg(&points_path)
        .arg(&values_path)
        .output()
        .map_err(|e| Error::ExternalCommand {
            command: display.clone(),
            message: e.to_string(),
        })?;
    if !output.status.success() {
        return Err(Error::ExternalCommand {
            command: display,
            message: format!(
                "{}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            ),
        });
    }
    let file = File::open(&values_path).map_err(|e| Error::ExternalCommand {
        command: display,
        message: format!("no values file written: {e}"),
    })?;
    formats::read_values_csv(BufReader::new(file), &values_path)
}

/// Wraps a closure over standard-domain points as a [`Model`].
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnModel { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, _indices: &[usize], points: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|z| (self.f)(z)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn midpoint() -> Vec<f64> {
        PISTON_RANGES.iter().map(|(a, b)| (a + b) / 2.0).collect()
    }

    #[test]
    fn analytic_exp_values() {
        assert_eq!(eval_analytic_exp(&[0.0, 0.0]), 1.0);
        assert_abs_diff_eq!(eval_analytic_exp(&[1.0, 1.0]), 7.38905609893065, epsilon = 1e-14);
        assert_eq!(eval_analytic_exp(&[-1.0, 1.0]), 1.0);
    }

    #[test]
    fn peak_values() {
        assert_eq!(eval_peak_2d(&[0.9, -0.9]), 1.0);
        assert_abs_diff_eq!(eval_peak_2d(&[-0.9, 0.9]), 1.0 / 325.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_peak_2d(&[0.9, 0.9]), 1.0 / 163.0, epsilon = 1e-15);
    }

    #[test]
    fn piston_midpoint_regression() {
        // Frozen from an independent 50-digit evaluation of the three formulas
        // at the midpoint of every input range.
        let c = eval_piston(PistonInputs::from_slice(&midpoint())).unwrap();
        assert_abs_diff_eq!(c, PISTON_MIDPOINT_CYCLE_TIME, epsilon = 1e-14);
    }

    const PISTON_MIDPOINT_CYCLE_TIME: f64 = 0.464_397_022_471_802_5;

    #[test]
    fn piston_ambient_temperature_is_weak() {
        let mut lo = midpoint();
        let mut hi = midpoint();
        lo[5] = 290.0;
        hi[5] = 296.0;
        let c_lo = eval_piston(PistonInputs::from_slice(&lo)).unwrap();
        let c_hi = eval_piston(PistonInputs::from_slice(&hi)).unwrap();
        assert!(((c_hi - c_lo) / c_lo).abs() < 0.01);
    }

    #[test]
    fn affine_map_endpoints() {
        for (a, b) in PISTON_RANGES {
            assert_eq!(map_affine(-1.0, a, b), a);
            assert_eq!(map_affine(1.0, a, b), b);
            assert_eq!(map_affine(0.0, a, b), (a + b) / 2.0);
        }
        for z in [-0.906_179_845_938_664, 0.1, 0.538_469_310_105_683_1] {
            assert_eq!(map_affine(z, -1.0, 1.0), z);
        }
    }

    #[test]
    fn table_mode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("values.csv");
        std::fs::write(&path, "index,value\n2,1.5\n7,2.5\n5,-1\n").unwrap();
        let source = ExternalSource::Table { values: path };
        let got = eval_external(&source, &[7, 2], &[vec![0.1], vec![0.2]]).unwrap();
        assert_eq!(got, vec![2.5, 1.5]);

        match eval_external(&source, &[2, 4], &[vec![0.1], vec![0.25]]) {
            Err(Error::MissingEvaluations { missing }) => {
                assert_eq!(missing, vec![(4, vec![0.25])]);
            }
            other => panic!("expected missing evaluations, got {other:?}"),
        }
    }

    #[test]
    fn command_mode_matches_builtin() {
        let spec = ModelSpec::External {
            dim: 2,
            ranges: None,
            source: ExternalSource::Command {
                command: vec![
                    "sh".into(),
                    "-c".into(),
                    r#"awk -F, 'NR==1{print "index,value"} NR>1{printf "%d,%.17g\n", $1, exp($2+$3)}' "$0" > "$1""#
                        .into(),
                ],
            },
        };
        let pts: Vec<Vec<f64>> = vec![vec![0.25, -0.5], vec![0.906_179_845_938_664, 0.538_469_310_105_683_1]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let got = spec.evaluate(&[0, 1], &refs).unwrap();
        let expected = ModelSpec::AnalyticExp.evaluate(&[0, 1], &refs).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert_abs_diff_eq!(*g, *e, epsilon = 1e-15 * e.abs());
        }
    }

    #[test]
    fn failing_command_is_reported() {
        let spec = ExternalSource::Command {
            command: vec!["sh".into(), "-c".into(), "exit 3".into()],
        };
        assert!(matches!(
            eval_external(&spec, &[0], &[vec![0.0]]),
            Err(Error::ExternalCommand { .. })
        ));
    }

    proptest! {
        #[test]
        fn piston_is_finite_on_the_whole_box(z in proptest::collection::vec(-1.0f64..=1.0, 7)) {
            let x = ModelSpec::piston().to_physical(&z);
            let c = eval_piston(PistonInputs::from_slice(&x)).unwrap();
            prop_assert!(c > 0.0 && c.is_finite());
        }
    }
}
