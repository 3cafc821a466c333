//! Scratch benchmark: one GC replication at study scale.
use maar_core::gcopula::{gc_run, GcSettings};
use maar_core::numerics::rng::RandomStream;
use maar_core::sim::mechanism::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let iters: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(5000);
    let burn: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let thin: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(4);

    let stream = RandomStream::new(7);
    let alphas = calibrate_alphas(Mechanism::Maar, 0.4, 0.4, &stream, 100_000).unwrap();
    let mut rng = stream.child(1);
    let y = gen_complete(n, 0.4, &mut rng).unwrap();
    let flags = apply_mechanism(&y, Mechanism::Maar, &alphas, &mut rng);
    let dm = build_data_matrix(&y, &flags).unwrap();

    let settings = GcSettings { n_iter: iters, burn_in: burn, thin, credible_level: 0.95 };
    let t0 = Instant::now();
    let report = gc_run(&dm, &settings, 99).unwrap();
    let dt = t0.elapsed();
    println!("N={n} iters={iters} time={:.2}s", dt.as_secs_f64());
    for rec in &report.per_indicator {
        println!("  col {} decision {:?}", rec.col, rec.decision);
    }
}
