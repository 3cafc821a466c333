//! Scratch experiment: GC false-rejection behavior under the MAAR mechanism.
use maar_core::gcopula::{gc_run, GcSettings};
use maar_core::report::{Decision, PairOutcome};
use maar_core::sim::mechanism::*;
use maar_core::numerics::rng::RandomStream;
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let reps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(40);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(5000);
    let burn: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let thin: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(4);
    let mech_s: String = args.get(6).cloned().unwrap_or("MAAR".into());
    let mech = Mechanism::parse(&mech_s).unwrap();

    let settings = GcSettings { n_iter: iters, burn_in: burn, thin, credible_level: 0.95 };
    let base = RandomStream::new(20260809);

    // Pool over (m, rho) corners to mimic the study averaging.
    let levels = [(0.2, 0.2), (0.2, 0.8), (0.6, 0.2), (0.6, 0.8)];
    let t0 = Instant::now();
    let results: Vec<(usize, [bool;3], usize)> = levels.par_iter().enumerate().flat_map(|(li, &(m, rho))| {
        let cal = base.child(li as u64);
        let alphas = calibrate_alphas(mech, m, rho, &cal, 100_000).unwrap();
        (0..reps).into_par_iter().map(move |rep| {
            let mut rng = cal.child(1000 + rep as u64);
            let y = gen_complete(n, rho, &mut rng).unwrap();
            let flags = apply_mechanism(&y, mech, &alphas, &mut rng);
            let dm = build_data_matrix(&y, &flags).unwrap();
            let report = gc_run(&dm, &settings, rng.child(7).seed()).unwrap();
            let mut rejected = [false;3];
            for idx in 0..3 {
                rejected[idx] = report.decision_for(idx) == Some(Decision::Reject);
            }
            let pair_exclusions = report.per_pair.iter().filter(|p| matches!(p.outcome, PairOutcome::Posterior{excludes_zero: true, ..})).count();
            (li, rejected, pair_exclusions)
        }).collect::<Vec<_>>()
    }).collect();
    let dt = t0.elapsed();

    let total = results.len();
    let truth = ground_truth(mech);
    let mut ind_reject = [0usize;3];
    let mut overall_correct = 0usize;
    let mut pair_excl = 0usize;
    for (_, rej, pe) in &results {
        for i in 0..3 { if rej[i] { ind_reject[i] += 1; } }
        if (0..3).all(|i| rej[i] == truth[i]) { overall_correct += 1; }
        pair_excl += pe;
    }
    println!("mech={} N={n} reps_total={total} iters={iters}/{burn}/{thin} time={:.1}s ({:.2}s/rep serial-equiv)",
        mech.label(), dt.as_secs_f64(), dt.as_secs_f64()*2.0/total as f64);
    println!("  per-indicator rejection rates: {:.3} {:.3} {:.3}",
        ind_reject[0] as f64/total as f64, ind_reject[1] as f64/total as f64, ind_reject[2] as f64/total as f64);
    println!("  overall correct rate: {:.3}", overall_correct as f64/total as f64);
    println!("  per-pair exclusion rate: {:.4}", pair_excl as f64/(total as f64*9.0));
}
