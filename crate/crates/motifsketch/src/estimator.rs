//! Parameter planning and ensemble estimation.
//!
//! A single sketch instance is unbiased but noisy; the estimator runs `N`
//! independently seeded instances over the same stream and reports their
//! mean with a standard error. [`plan_parameters`] picks the color budget,
//! the group, and `N` from coarse stream statistics so that the ensemble's
//! relative error lands near a requested count scale.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::algebra::GroupSpec;
use crate::hashing::derive_seed;
use crate::pattern::Pattern;
use crate::sketch::{Algorithm, SketchConfig, SketchError, SketchState};
use crate::streamio::{EdgeEvent, StreamError, StreamStats};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Stream statistics and knobs the planner works from. `directed_edges`
/// counts each undirected edge twice, matching what the sketch processes.
#[derive(Debug, Clone)]
pub struct PlanInput {
    pub pattern: Arc<Pattern>,
    pub directed_edges: u64,
    /// Color-budget exponent in (0, 1/2]; the budget respects `m^(2*alpha)`.
    pub alpha: f64,
    /// Count scale the relative error is calibrated against.
    pub target_count: f64,
    pub max_degree: Option<u64>,
    /// Largest matrix dimension the planner will pick.
    pub d_max: u32,
    /// Scalar group order used when one instance already suffices.
    pub default_r: u32,
    /// Desired relative variance on the scalar branch (sets `N` there).
    pub rel_variance: f64,
    /// Fixes the instance count instead of deriving it.
    pub instances_override: Option<u64>,
    /// Cap on total scalar cells across instances; clamps `N` downward.
    pub storage_budget_cells: Option<u64>,
    /// Cap on the per-event work multiplier, i.e. on `N` itself.
    pub time_budget_instances: Option<u64>,
}

impl PlanInput {
    pub fn new(
        pattern: Arc<Pattern>,
        directed_edges: u64,
        alpha: f64,
        target_count: f64,
    ) -> PlanInput {
        PlanInput {
            pattern,
            directed_edges,
            alpha,
            target_count,
            max_degree: None,
            d_max: 64,
            default_r: 4,
            rel_variance: 0.01,
            instances_override: None,
            storage_budget_cells: None,
            time_budget_instances: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub colors: u32,
    pub group: GroupSpec,
    pub instances: u64,
    pub warnings: Vec<String>,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Chooses colors, group, and instance count.
///
/// The color budget is the floor of `min(m^(2a), m^(1/3),
/// (m^k / target^2)^(1/(2k-t)))`, raised to `t` when the pattern needs more
/// colors than the caps allow (a small epsilon absorbs libm noise before
/// flooring). The leftover variance ratio `m^k / (target^2 * C^(2k-t))`
/// then either fits in one matrix-group instance of dimension near that
/// ratio, or, when it is already below one, a scalar-group ensemble sized
/// from `rel_variance` mops up.
pub fn plan_parameters(input: &PlanInput) -> Result<Plan, EstimatorError> {
    if input.directed_edges == 0 {
        return Err(EstimatorError::BadConfig(
            "directed edge count must be positive".into(),
        ));
    }
    if !(input.alpha > 0.0) || !input.alpha.is_finite() {
        return Err(EstimatorError::BadConfig(format!(
            "alpha must be positive, got {}",
            input.alpha
        )));
    }
    if !(input.target_count > 0.0) {
        return Err(EstimatorError::BadConfig(format!(
            "target count must be positive, got {}; supply a rough lower bound \
             for the true count, e.g. from an exploratory run",
            input.target_count
        )));
    }
    if input.d_max < 2 {
        return Err(EstimatorError::BadConfig(format!(
            "maximum matrix dimension must be at least 2, got {}",
            input.d_max
        )));
    }
    if input.default_r < 2 {
        return Err(EstimatorError::BadConfig(format!(
            "scalar group order must be at least 2, got {}",
            input.default_r
        )));
    }
    if !(input.rel_variance > 0.0) {
        return Err(EstimatorError::BadConfig(format!(
            "relative variance must be positive, got {}",
            input.rel_variance
        )));
    }
    if input.instances_override == Some(0) {
        return Err(EstimatorError::BadConfig(
            "instance override must be at least 1".into(),
        ));
    }

    let mut warnings = Vec::new();
    if input.alpha > 0.5 {
        warnings.push(format!(
            "alpha = {} lies outside the analyzed regime (0, 1/2]; the degree \
             condition max_degree <= m^(1/2 - alpha) is then unsatisfiable",
            input.alpha
        ));
    }
    let t = input.pattern.vertex_count();
    let k = input.pattern.edge_count();
    let m = input.directed_edges as f64;
    let target_sq = input.target_count * input.target_count;
    let pattern_exponent = 2 * k - t;

    let growth_cap = m.powf(2.0 * input.alpha);
    let heavy_cap = m.cbrt();
    let variance_cap = if pattern_exponent == 0 {
        f64::INFINITY
    } else {
        (m.powi(k as i32) / target_sq).powf(1.0 / pattern_exponent as f64)
    };
    let cap = growth_cap.min(heavy_cap).min(variance_cap);
    let capped = (cap + 1e-9).floor();
    let colors = if (t as f64) > capped {
        warnings.push(format!(
            "pattern needs {t} colors but the budget caps allow only {capped:.0}; \
             using {t} weakens the variance guarantee"
        ));
        t as u32
    } else {
        capped as u32
    };

    if let Some(delta) = input.max_degree {
        let degree_cap = m.powf(0.5 - input.alpha);
        if delta as f64 > degree_cap {
            warnings.push(format!(
                "maximum degree {delta} exceeds m^(1/2 - alpha) = {degree_cap:.1}; \
                 variance guarantees degrade on such streams"
            ));
        }
    }

    let value = m.powi(k as i32) / (target_sq * (colors as f64).powi(pattern_exponent as i32));
    let (group, instances) = if value > 1.0 {
        let d = (round_half_up(value) as u32).clamp(2, input.d_max);
        let n = round_half_up(value / d as f64).max(1.0) as u64;
        (GroupSpec::SignedPowers { d }, n)
    } else {
        let n = (1.0 / input.rel_variance).ceil().max(1.0) as u64;
        (GroupSpec::RootsOfUnity { r: input.default_r }, n)
    };
    let mut instances = input.instances_override.unwrap_or(instances);

    if let Some(budget) = input.storage_budget_cells {
        let per_instance = pattern_cells(k, colors, group);
        let allowed = (budget / per_instance).max(1);
        if allowed < instances {
            warnings.push(format!(
                "storage budget of {budget} cells holds only {allowed} of the \
                 planned {instances} instances at {per_instance} cells each"
            ));
            instances = allowed;
        }
    }
    if let Some(budget) = input.time_budget_instances {
        let allowed = budget.max(1);
        if allowed < instances {
            warnings.push(format!(
                "time budget caps the planned {instances} instances at {allowed}"
            ));
            instances = allowed;
        }
    }

    Ok(Plan {
        colors,
        group,
        instances,
        warnings,
    })
}

/// Scalar cells one instance occupies: `k * C^2` group sums of `d` counters
/// each for the matrix branch, one accumulator each for the scalar branch.
fn pattern_cells(k: usize, colors: u32, group: GroupSpec) -> u64 {
    let per_cell = match group {
        GroupSpec::SignedPowers { d } => d as u64,
        GroupSpec::RootsOfUnity { .. } => 1,
    };
    (k as u64) * (colors as u64) * (colors as u64) * per_cell
}

/// Configuration for one ensemble run over a stream.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub pattern: Arc<Pattern>,
    /// Name or file reference echoed into the report.
    pub pattern_label: String,
    pub group: GroupSpec,
    pub colors: u32,
    pub algorithm: Algorithm,
    pub instances: u64,
    pub master_seed: u64,
}

/// Echo of the run parameters, attached to every report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportConfig {
    pub pattern: String,
    pub colors: u32,
    pub group: String,
    pub algorithm: u8,
    pub instances: u64,
    pub master_seed: u64,
    pub stream: StreamStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub mean_estimate: f64,
    /// Sample standard deviation over instances divided by sqrt(N); zero
    /// when N = 1.
    pub standard_error: f64,
    /// Mean imaginary component across instances; a healthy run keeps this
    /// near zero relative to the estimate.
    pub imaginary_diagnostic: f64,
    pub per_instance_estimates: Vec<f64>,
    pub config: ReportConfig,
}

/// Runs `N` independently seeded sketch instances over one stream pass.
/// Instance `i` draws its hash seed as `derive_seed(master_seed, i)`.
pub fn run_ensemble<I>(events: I, cfg: &EnsembleConfig) -> Result<EstimateReport, EstimatorError>
where
    I: IntoIterator<Item = Result<EdgeEvent, StreamError>>,
{
    if cfg.instances == 0 {
        return Err(EstimatorError::BadConfig(
            "an ensemble needs at least one instance".into(),
        ));
    }
    let mut states = Vec::with_capacity(cfg.instances as usize);
    for i in 0..cfg.instances {
        let config = SketchConfig::new(
            cfg.pattern.clone(),
            cfg.group,
            cfg.colors,
            cfg.algorithm,
            derive_seed(cfg.master_seed, i),
        )?;
        states.push(SketchState::new(config)?);
    }

    let mut stats = StreamStats::default();
    for ev in events {
        let ev = ev?;
        stats.record(&ev);
        for state in &mut states {
            state.update(&ev)?;
        }
    }

    let fast = cfg.pattern.is_canonical_cycle4();
    let mut per_instance = Vec::with_capacity(states.len());
    let mut imaginary_sum = 0.0;
    for state in &states {
        let est = if fast {
            state.finalize_cycle4_fast()?
        } else {
            state.finalize()
        };
        per_instance.push(est.estimate);
        imaginary_sum += est.imaginary;
    }

    let n = per_instance.len() as f64;
    let mean = per_instance.iter().sum::<f64>() / n;
    let standard_error = if per_instance.len() > 1 {
        let var = per_instance.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };

    Ok(EstimateReport {
        mean_estimate: mean,
        standard_error,
        imaginary_diagnostic: imaginary_sum / n,
        per_instance_estimates: per_instance,
        config: ReportConfig {
            pattern: cfg.pattern_label.clone(),
            colors: cfg.colors,
            group: cfg.group.to_string(),
            algorithm: match cfg.algorithm {
                Algorithm::Direct => 1,
                Algorithm::Counting => 2,
            },
            instances: cfg.instances,
            master_seed: cfg.master_seed,
            stream: stats,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streamio::{generate, parse_line, GenParams};
    use proptest::prelude::*;

    fn plan_for(
        name: &str,
        directed_edges: u64,
        alpha: f64,
        target_count: f64,
    ) -> Result<Plan, EstimatorError> {
        plan_parameters(&PlanInput::new(
            Pattern::builtin(name).unwrap(),
            directed_edges,
            alpha,
            target_count,
        ))
    }

    #[test]
    fn plans_a_large_triangle_stream() {
        let plan = plan_for("triangle", 1_000_000, 0.25, 1.0).unwrap();
        assert_eq!(plan.colors, 100);
        assert_eq!(plan.group, GroupSpec::SignedPowers { d: 64 });
        assert_eq!(plan.instances, 15_625_000_000);
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn plans_a_small_triangle_stream() {
        let plan = plan_for("triangle", 10_000, 0.5, 100.0).unwrap();
        assert_eq!(plan.colors, 21);
        assert_eq!(plan.group, GroupSpec::SignedPowers { d: 64 });
        assert_eq!(plan.instances, 169);
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn plans_a_cycle4_stream() {
        let plan = plan_for("cycle4", 10_000, 0.25, 10_000.0).unwrap();
        assert_eq!(plan.colors, 21);
        assert_eq!(plan.group, GroupSpec::SignedPowers { d: 64 });
        assert_eq!(plan.instances, 8);
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn falls_back_to_a_scalar_ensemble() {
        let plan = plan_for("triangle", 100, 0.5, 1000.0).unwrap();
        assert_eq!(plan.colors, 3);
        assert_eq!(plan.group, GroupSpec::RootsOfUnity { r: 4 });
        assert_eq!(plan.instances, 100);
    }

    #[test]
    fn warns_when_the_pattern_outgrows_the_color_cap() {
        let plan = plan_for("k4", 16, 0.25, 1.0).unwrap();
        assert_eq!(plan.colors, 4);
        assert!(plan.warnings.iter().any(|w| w.contains("colors")));
    }

    #[test]
    fn warns_on_heavy_vertices() {
        let mut input = PlanInput::new(Pattern::builtin("triangle").unwrap(), 10_000, 0.25, 10.0);
        input.max_degree = Some(5_000);
        let plan = plan_parameters(&input).unwrap();
        assert!(plan.warnings.iter().any(|w| w.contains("degree")));

        input.max_degree = Some(3);
        assert!(plan_parameters(&input).unwrap().warnings.is_empty());
    }

    #[test]
    fn honors_the_instance_override() {
        let mut input = PlanInput::new(Pattern::builtin("triangle").unwrap(), 10_000, 0.5, 100.0);
        input.instances_override = Some(7);
        assert_eq!(plan_parameters(&input).unwrap().instances, 7);
        input.instances_override = Some(0);
        assert!(plan_parameters(&input).is_err());
    }

    #[test]
    fn rejects_bad_plan_inputs() {
        assert!(plan_for("triangle", 0, 0.25, 1.0).is_err());
        assert!(plan_for("triangle", 100, 0.0, 1.0).is_err());
        assert!(plan_for("triangle", 100, 0.25, 0.0).is_err());
        assert!(plan_for("triangle", 100, 0.25, -3.0).is_err());
        assert!(plan_for("triangle", 100, f64::NAN, 1.0).is_err());
        assert!(plan_for("triangle", 100, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn oversized_alpha_warns_instead_of_failing() {
        let plan = plan_for("triangle", 10_000, 0.8, 100.0).unwrap();
        assert!(plan.warnings.iter().any(|w| w.contains("alpha")));
    }

    #[test]
    fn budgets_clamp_the_instance_count() {
        let mut input = PlanInput::new(Pattern::builtin("triangle").unwrap(), 10_000, 0.5, 100.0);
        let unconstrained = plan_parameters(&input).unwrap();
        assert_eq!(unconstrained.instances, 169);

        // 169 instances at 3 * 21^2 * 64 = 84,672 cells each; a one-million
        // cell budget leaves room for 11.
        input.storage_budget_cells = Some(1_000_000);
        let capped = plan_parameters(&input).unwrap();
        assert_eq!(capped.instances, 11);
        assert!(capped.warnings.iter().any(|w| w.contains("storage")));

        input.storage_budget_cells = None;
        input.time_budget_instances = Some(40);
        let capped = plan_parameters(&input).unwrap();
        assert_eq!(capped.instances, 40);
        assert!(capped.warnings.iter().any(|w| w.contains("time budget")));
    }

    proptest! {
        // Whatever the inputs, the planned parameters keep the single-pass
        // variance ratio within a factor two of the requested calibration.
        #[test]
        fn planned_variance_stays_calibrated(
            m in 2u64..100_000,
            alpha in 0.05f64..=0.5,
            target in 1.0f64..1_000_000.0,
            which in 0usize..4,
        ) {
            let name = ["triangle", "cycle4", "cycle5", "k4"][which];
            let pattern = Pattern::builtin(name).unwrap();
            let plan = plan_parameters(&PlanInput::new(pattern.clone(), m, alpha, target)).unwrap();

            let t = pattern.vertex_count();
            let k = pattern.edge_count();
            prop_assert!(plan.colors as usize >= t);
            prop_assert!(plan.instances >= 1);

            let dim_factor = match plan.group {
                GroupSpec::SignedPowers { d } => {
                    prop_assert!((2..=64).contains(&d));
                    d as f64
                }
                GroupSpec::RootsOfUnity { .. } => 1.0,
            };
            let ratio = (m as f64).powi(k as i32)
                / (dim_factor
                    * plan.instances as f64
                    * (plan.colors as f64).powi((2 * k - t) as i32));
            prop_assert!(
                ratio <= 2.0 * target * target,
                "ratio {} vs target^2 {}", ratio, target * target
            );
        }
    }

    fn toy_config(instances: u64) -> EnsembleConfig {
        EnsembleConfig {
            pattern: Pattern::builtin("triangle").unwrap(),
            pattern_label: "triangle".into(),
            group: GroupSpec::SignedPowers { d: 3 },
            colors: 6,
            algorithm: Algorithm::Counting,
            instances,
            master_seed: 42,
        }
    }

    fn toy_events() -> Vec<EdgeEvent> {
        generate(&GenParams {
            nodes: 25,
            edges: 40,
            max_degree: 8,
            plant: Some((Pattern::builtin("triangle").unwrap(), 2)),
            churn_pairs: 5,
            seed: 9,
        })
        .unwrap()
    }

    #[test]
    fn ensembles_are_deterministic() {
        let events = toy_events();
        let cfg = toy_config(5);
        let a = run_ensemble(events.iter().copied().map(Ok), &cfg).unwrap();
        let b = run_ensemble(events.iter().copied().map(Ok), &cfg).unwrap();
        assert_eq!(a.mean_estimate, b.mean_estimate);
        assert_eq!(a.per_instance_estimates, b.per_instance_estimates);
        assert_eq!(a.standard_error, b.standard_error);

        // Instances are seeded independently, so they scatter.
        let distinct: std::collections::HashSet<u64> = a
            .per_instance_estimates
            .iter()
            .map(|x| x.to_bits())
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn report_summarizes_the_instances() {
        let events = toy_events();
        let report = run_ensemble(events.iter().copied().map(Ok), &toy_config(4)).unwrap();
        assert_eq!(report.per_instance_estimates.len(), 4);

        let n = 4.0;
        let mean = report.per_instance_estimates.iter().sum::<f64>() / n;
        assert!((report.mean_estimate - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        let var = report
            .per_instance_estimates
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n - 1.0);
        assert!((report.standard_error - (var / n).sqrt()).abs() <= 1e-12);

        assert_eq!(report.config.pattern, "triangle");
        assert_eq!(report.config.group, "matrix:3");
        assert_eq!(report.config.algorithm, 2);
        assert_eq!(report.config.stream.events, events.len() as u64);
        assert_eq!(report.config.stream.deletions, 5);
    }

    #[test]
    fn single_instance_reports_zero_error() {
        let events = toy_events();
        let report = run_ensemble(events.iter().copied().map(Ok), &toy_config(1)).unwrap();
        assert_eq!(report.standard_error, 0.0);
        assert_eq!(report.per_instance_estimates.len(), 1);
    }

    #[test]
    fn zero_instances_are_rejected() {
        assert!(matches!(
            run_ensemble(std::iter::empty(), &toy_config(0)),
            Err(EstimatorError::BadConfig(_))
        ));
    }

    #[test]
    fn stream_errors_interrupt_the_run() {
        let events = vec![
            Ok(EdgeEvent::insert(1, 2)),
            parse_line("oops", 2).map(|o| o.unwrap()),
        ];
        assert!(matches!(
            run_ensemble(events, &toy_config(2)),
            Err(EstimatorError::Stream(_))
        ));
    }

    #[test]
    fn cycle4_ensembles_use_the_specialized_finalizer() {
        let events = toy_events();
        let cfg = EnsembleConfig {
            pattern: Pattern::builtin("cycle4").unwrap(),
            pattern_label: "cycle4".into(),
            group: GroupSpec::SignedPowers { d: 2 },
            colors: 8,
            algorithm: Algorithm::Counting,
            instances: 3,
            master_seed: 17,
        };
        let report = run_ensemble(events.iter().copied().map(Ok), &cfg).unwrap();
        for (i, &fast) in report.per_instance_estimates.iter().enumerate() {
            let config = SketchConfig::new(
                cfg.pattern.clone(),
                cfg.group,
                cfg.colors,
                cfg.algorithm,
                derive_seed(cfg.master_seed, i as u64),
            )
            .unwrap();
            let mut state = SketchState::new(config).unwrap();
            for ev in &events {
                state.update(ev).unwrap();
            }
            let naive = state.finalize().estimate;
            assert!(
                (fast - naive).abs() <= 1e-9 * naive.abs().max(1.0),
                "instance {i}: {fast} vs {naive}"
            );
        }
    }
}
