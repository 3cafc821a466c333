//! Scratch: DTPMM power/size at specific cells, with per-mechanism detail.
use maar_core::report::TestKind;
use maar_core::sim::mechanism::Mechanism;
use maar_core::sim::study::{run_study, StudyConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args[1].parse().unwrap();
    let reps: usize = args[2].parse().unwrap();
    let m_imp: usize = args[3].parse().unwrap();
    for mech in [Mechanism::Maar, Mechanism::Maar2, Mechanism::Mnaar] {
        let config = StudyConfig {
            seed: 20260809,
            reps,
            mechanisms: vec![mech],
            sample_sizes: vec![n],
            tests: vec![TestKind::Dtpmm],
            imputations: m_imp,
            ..StudyConfig::default()
        };
        let res = run_study(&config).unwrap();
        let mut acc = [0.0; 4];
        let mut failed = 0;
        for row in &res.rows {
            for i in 0..3 { acc[i] += row.result.per_indicator[i]; }
            acc[3] += row.result.overall;
            failed += row.result.reps_failed;
        }
        let c = res.rows.len() as f64;
        println!("DTPMM {} N={} M={} failed={} R1={:.3} R2={:.3} R3={:.3} overall={:.3}",
            mech.label(), n, m_imp, failed, acc[0]/c, acc[1]/c, acc[2]/c, acc[3]/c);
    }
}
