//! Scratch: run a study slice and print the margins the acceptance criteria use.
use maar_core::report::TestKind;
use maar_core::sim::mechanism::Mechanism;
use maar_core::sim::study::{run_study, StudyConfig};
use maar_core::gcopula::GcSettings;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let test = TestKind::parse(&args[1]).unwrap();
    let mechs: Vec<Mechanism> = args[2].split(',').map(|s| Mechanism::parse(s).unwrap()).collect();
    let ns: Vec<usize> = args[3].split(',').map(|s| s.parse().unwrap()).collect();
    let reps: usize = args[4].parse().unwrap();

    let config = StudyConfig {
        seed: 20260809,
        reps,
        mechanisms: mechs,
        sample_sizes: ns,
        tests: vec![test],
        gc: GcSettings { n_iter: 1400, burn_in: 300, thin: 1, credible_level: 0.95 },
        ..StudyConfig::default()
    };
    let t0 = std::time::Instant::now();
    let res = run_study(&config).unwrap();
    // Average per indicator and overall over everything.
    let mut acc = [0.0; 4];
    let mut failed = 0usize;
    for row in &res.rows {
        for i in 0..3 { acc[i] += row.result.per_indicator[i]; }
        acc[3] += row.result.overall;
        failed += row.result.reps_failed;
    }
    let c = res.rows.len() as f64;
    println!(
        "{} cells={} reps={} failed_reps={} R1={:.3} R2={:.3} R3={:.3} overall={:.3}  [{:.0}s]",
        args[1], res.rows.len(), reps, failed, acc[0]/c, acc[1]/c, acc[2]/c, acc[3]/c,
        t0.elapsed().as_secs_f64()
    );
}
