use esq_core::lstsq::{condition_number, prune_columns, singular_values, solve, solve_unscaled};
use esq_core::models::{ExternalSource, FnModel};
use esq_core::pivotselect::{effective_select, qr_column_pivot, subsample};
use esq_core::tensorgrid::{assemble_design, tensor_pseudospectral, weighted_rhs, Exactness};
use esq_core::workflow::{fit_degree, GridSpec, RunConfig};
use esq_core::{Family, IndexKind, IndexSet, ModelSpec, Recurrence, TensorGrid};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grid(dim: usize, p: usize) -> TensorGrid {
    TensorGrid::new(vec![Recurrence::new(Family::LegendreUniform, p); dim], &vec![p; dim]).unwrap()
}

#[test]
fn full_grid_least_squares_is_the_pseudospectral_projection() {
    let g = grid(3, 4);
    let set = IndexSet::new(IndexKind::TotalOrder, 3, 3).unwrap();
    let model = FnModel::new(3, |z: &[f64]| (z[0] - 0.3 * z[1] * z[2]).sin());
    let design = assemble_design(&g, &set, Exactness::Enforce).unwrap();
    let (b, _) = weighted_rhs(&g, &model, None).unwrap();
    let ls = solve_unscaled(&design.matrix, &b).unwrap();
    let ps = tensor_pseudospectral(&g, &set, &model).unwrap();
    for (a, b) in ls.iter().zip(&ps) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn hyperbolic_basis_recovers_a_member_polynomial() {
    let kind = IndexKind::from_parts("hyperbolic", Some(0.5)).unwrap();
    let set = IndexSet::new(kind, 3, 4).unwrap();
    let recs = vec![Recurrence::new(Family::LegendreUniform, 5); 3];
    let truth: Vec<f64> = (0..set.len()).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let f = {
        let set = set.clone();
        let truth = truth.clone();
        move |z: &[f64]| {
            set.iter()
                .zip(&truth)
                .map(|(idx, c)| c * esq_core::orthopoly::eval_multivariate(&recs, idx.entries(), z).unwrap())
                .sum::<f64>()
        }
    };
    let g = grid(3, 5);
    let design = assemble_design(&g, &set, Exactness::Enforce).unwrap();
    let sel = effective_select(&design).unwrap();
    let sys = subsample(&design, &sel, &g).unwrap();
    let (b, _) = weighted_rhs(&g, &FnModel::new(3, f), Some(sel.selected_rows())).unwrap();
    let report = solve(&prune_columns(&sys, set.len()).unwrap(), &b).unwrap();
    for (a, b) in report.coefficients.iter().zip(&truth) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn external_command_model_is_called_once_per_fit() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls");
    // value = z1 + 2 z2, appending one line to the call log per invocation
    let script = format!(
        "echo call >> '{}'; awk -F, 'NR==1{{print \"index,value\"; next}} {{printf \"%s,%.17g\\n\", $1, $2 + 2*$3}}' \"$1\" > \"$2\"",
        log.display()
    );
    let cfg = RunConfig {
        model: ModelSpec::External {
            dim: 2,
            ranges: None,
            source: ExternalSource::Command {
                command: vec!["sh".into(), "-c".into(), script, "sh".into()],
            },
        },
        degrees: vec![3],
        points_per_dim: GridSpec::Uniform(6),
        ..RunConfig::default()
    };
    let run = fit_degree(&cfg, &cfg.model, 3, None).unwrap();
    assert_eq!(run.evaluations.len(), 10);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 1);
    let x = &run.fits[0].report.coefficients;
    // z1 = psi_(1,0) / sqrt(3) under the uniform density
    let pos = |e: Vec<usize>| run.fits[0].report.index_set.position(&esq_core::MultiIndex::new(e)).unwrap();
    assert!((x[pos(vec![1, 0])] - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!((x[pos(vec![0, 1])] - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!(x[pos(vec![0, 0])].abs() < 1e-12);
}

/// Entries uniform on [-1, 1) from a seeded stream.
fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pivoted_rows_interlace(m in 4usize..60, n_frac in 0.1f64..1.0, l_frac in 0.1f64..1.0, seed in any::<u64>()) {
        let n = ((m as f64 * n_frac).ceil() as usize).clamp(1, 20.min(m));
        let l = ((n as f64 * l_frac).ceil() as usize).clamp(1, n);
        let a = random_matrix(m, n, seed);
        let sel = qr_column_pivot(&a.transpose()).unwrap();
        let square = a.select_rows(sel.selected_rows().iter());
        let full = singular_values(&a);
        let sub = singular_values(&square);
        prop_assert!(sub[0] <= full[0] * (1.0 + 1e-12));
        prop_assert!(sub[n - 1] <= full[n - 1] * (1.0 + 1e-12) + 1e-300);
        let pruned = square.columns(0, l).into_owned();
        prop_assert!(condition_number(&pruned) <= condition_number(&square) * (1.0 + 1e-10));
    }
}

#[test]
fn subprocess_exp_matches_the_builtin() {
    let script = r#"awk -F, 'NR==1{print "index,value"; next} {printf "%s,%.17g\n", $1, exp($2 + $3)}' "$1" > "$2""#;
    let external = ModelSpec::External {
        dim: 2,
        ranges: None,
        source: ExternalSource::Command {
            command: vec!["sh".into(), "-c".into(), script.into(), "sh".into()],
        },
    };
    let cfg = RunConfig {
        degrees: vec![6],
        ratios: vec![1.0, 1.25],
        ..RunConfig::default()
    };
    let builtin = fit_degree(&cfg, &ModelSpec::AnalyticExp, 6, None).unwrap();
    let piped = fit_degree(&cfg, &external, 6, None).unwrap();
    assert_eq!(builtin.evaluations, piped.evaluations);
    for (a, b) in builtin.fits.iter().zip(&piped.fits) {
        assert_eq!(a.report.coefficients, b.report.coefficients);
    }
}
