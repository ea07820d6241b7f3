use ulmf_core::*;

fn main() {
    let ledger = assemble_constants(&RateInputs {
        gamma: 3.0,
        lambda: 2.0,
        sigma: 1.0,
        lip_x: 0.0,
        iota: 0.0,
        m_radius: 1.0,
        safety: 0.9,
    })
    .unwrap();
    let cap = ledger.h.cap_phi_inf;
    println!("cap_phi_inf = {cap:e}");
    for seed in [3000u64, 3001, 3002] {
        let report = contraction_experiment(&CoupleConfig {
            count: 2000,
            dim: 1,
            potential: Potential::quadratic(2.0).unwrap(),
            params: DynamicsParams::new(3.0, 1.0, 1e-3, 10_000).unwrap(),
            init_a: InitSpec::gaussian(1.5, 0.25, 0.0, 0.5, 1000),
            init_b: InitSpec::gaussian(-1.5, 0.25, 0.0, 0.5, 2000),
            constants: ledger.clone(),
            xi: 1e-3,
            record_every: 100,
            burn_in_records: 20,
            seed,
        })
        .unwrap();
        print!("seed {seed}: deviating records:");
        let ln_cap = cap.ln();
        let mut n_dev = 0;
        for row in &report.rows {
            let rel = row.mean_psi.ln() - ln_cap;
            if rel.abs() > 1e-13 {
                print!(" ({:.1}, {:+.2e})", row.t, rel);
                n_dev += 1;
            }
        }
        println!(
            "\n  -> {n_dev} of {} records deviate; fitted {:+.3e} se {:.3e}",
            report.rows.len(),
            report.fitted_rate,
            report.slope_se
        );
    }
}
