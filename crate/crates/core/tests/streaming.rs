use scamwatch_core::assessor::RuleAssessor;
use scamwatch_core::benchmarks::linkage_benchmark;
use scamwatch_core::context::PassThroughAnalyzer;
use scamwatch_core::metrics::evaluate;
use scamwatch_core::pipeline::{metric_input, run_trajectory, PipelineConfig};
use scamwatch_core::skills::{SkillLibrary, CATALOG_TYPES};

fn hit_rate(budget: usize) -> (f64, f64) {
    let data = linkage_benchmark(11, 20, 20, 60, 10);
    let cfg = PipelineConfig {
        budget,
        ..PipelineConfig::default()
    };
    let inputs: Vec<_> = data
        .iter()
        .map(|t| {
            let mut lib = SkillLibrary::seeded(CATALOG_TYPES);
            let run = run_trajectory(t, &PassThroughAnalyzer, &RuleAssessor::default(), &mut lib, &cfg).unwrap();
            metric_input(t, &run.windows, 10)
        })
        .collect();
    let report = evaluate(&inputs);
    (report.hr.unwrap(), report.far.unwrap())
}

#[test]
fn memory_retrieval_links_contact_to_payment() {
    let (hr_with, far_with) = hit_rate(5);
    let (hr_without, _) = hit_rate(0);
    assert_eq!(hr_with, 1.0);
    assert_eq!(hr_without, 0.0);
    assert_eq!(far_with, 0.0);
}

#[test]
fn retrieval_never_reaches_into_or_past_the_window() {
    let cfg = PipelineConfig::default();
    for t in linkage_benchmark(3, 10, 10, 60, 10) {
        let mut lib = SkillLibrary::seeded(CATALOG_TYPES);
        let run = run_trajectory(&t, &PassThroughAnalyzer, &RuleAssessor::default(), &mut lib, &cfg).unwrap();
        for w in &run.windows {
            assert!(w.retrieved_orders.len() <= cfg.budget);
            assert!(w.retrieved_orders.iter().all(|&o| o < w.start), "{}: {w:?}", t.trajectory_id);
            let mut sorted = w.retrieved_orders.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), w.retrieved_orders.len());
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let t = &linkage_benchmark(5, 1, 0, 60, 10)[0];
    let go = || {
        let mut lib = SkillLibrary::seeded(CATALOG_TYPES);
        run_trajectory(t, &PassThroughAnalyzer, &RuleAssessor::default(), &mut lib, &PipelineConfig::default()).unwrap()
    };
    assert_eq!(go(), go());
}
