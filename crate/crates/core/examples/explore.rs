//! Scratch exploration of full-system clearing (tuning aid).
//!
//! Usage: explore <case> <seed> <load_scale> <spread> <vlo> <vhi>
//!                [iface_r iface_x iface_cap] [from-to=cap ...]

use flexmarket::analysis::compare_deterministic;
use flexmarket::bids::{generate_bids, synthesize_base_supply, SpreadLevel};
use flexmarket::formulation::{Formulation, MarketInstance};
use flexmarket::market::clear;
use flexmarket::netmodel::{build_radial, cases, parse_case, BuildOptions};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let case = args.first().cloned().unwrap_or_else(|| "case141".into());
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let load_scale: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let spread = match args.get(3).map(|s| s.as_str()) {
        Some("sl1") => SpreadLevel::Sl1,
        _ => SpreadLevel::Sl2,
    };
    let vlo: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.99);
    let vhi: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.01);
    let iface_r: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let iface_x: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let iface_cap: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let raw = parse_case(cases::by_name(&case).unwrap()).unwrap();
    let options = BuildOptions {
        default_s_max: 999.0,
        interface_impedance: (iface_r, iface_x),
        interface_capacity: (iface_cap > 0.0).then_some(iface_cap),
        ..BuildOptions::default()
    };
    let mut net = build_radial(&raw, &options).unwrap();
    for arg in args.iter().skip(9) {
        let (line, cap) = arg.split_once('=').expect("from-to=cap");
        let (f, t) = line.split_once('-').expect("from-to");
        net.set_line_capacity(f.parse().unwrap(), t.parse().unwrap(), cap.parse().unwrap())
            .unwrap();
    }

    let profile = synthesize_base_supply(&net, seed, load_scale);
    let bids = generate_bids(&profile, spread, &net, seed, None).unwrap();
    println!(
        "{case} seed {seed}: load {:.3} MW scaled, {} bids, band [{vlo}, {vhi}]",
        net.total_load_p() * load_scale,
        bids.len()
    );

    let mut inst = MarketInstance::new(net, profile, bids, Formulation::Lp);
    inst.v_band = (vlo, vhi);

    let mut results = Vec::new();
    for formulation in [Formulation::Lp, Formulation::Socp] {
        let inst = inst.with_formulation(formulation);
        let t0 = std::time::Instant::now();
        match clear(&inst) {
            Ok(r) => {
                let import = &r.flows[r.root];
                let binding: Vec<String> = r
                    .binding
                    .flow_branches
                    .iter()
                    .map(|&b| {
                        format!(
                            "{}-{}",
                            r.flows[b].from.map(|v| v.to_string()).unwrap_or("G".into()),
                            r.flows[b].to
                        )
                    })
                    .collect();
                println!(
                    "{formulation}: obj {:9.2} EUR iters {:3} {:5.0} ms | import {:7.3} MW {:7.3} MVA | binding {:?} | v [{:.4},{:.4}] vbind lo {} hi {} | dlmp root {:7.3} range [{:7.3},{:7.3}]",
                    r.objective,
                    r.solver.iterations,
                    t0.elapsed().as_secs_f64() * 1e3,
                    import.p_mw,
                    import.s_mva,
                    binding,
                    r.voltages.iter().fold(f64::INFINITY, |m, &v| m.min(v)),
                    r.voltages.iter().fold(0.0f64, |m, &v| m.max(v)),
                    r.binding.voltage_lower.len(),
                    r.binding.voltage_upper.len(),
                    r.dlmp[r.root],
                    r.dlmp.iter().fold(f64::INFINITY, |m, &v| m.min(v)),
                    r.dlmp.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
                );
                results.push(r);
            }
            Err(e) => println!("{formulation}: FAILED {e}"),
        }
    }
    if std::env::var("SHOW_FLOWS").is_ok() {
        if let Some(r) = results.first() {
            let mut flows: Vec<(f64, String)> = r
                .flows
                .iter()
                .filter(|f| f.from.is_some())
                .map(|f| (f.s_mva, format!("{}-{} (P {:.3}, Q {:.3})", f.from.unwrap(), f.to, f.p_mw, f.q_mvar)))
                .collect();
            flows.sort_by(|a, b| b.0.total_cmp(&a.0));
            println!("top internal flows (LP):");
            for (s_mva, label) in flows.iter().take(12) {
                println!("  {label}: {s_mva:.4} MVA");
            }
        }
    }
    if results.len() == 2 {
        let report = compare_deterministic(&results[0], &results[1], "probe", None).unwrap();
        let (bus, pct) = report.max_dlmp_dev;
        println!(
            "rmse: dlmp {:.5} voltage {:.6} flow {:.5} revenue {:.4} | max dlmp dev {pct:.3}% at bus {bus} (root = {})",
            report.rmse.dlmp, report.rmse.voltage, report.rmse.flow, report.rmse.revenue,
            results[0].bus_ids[results[0].root]
        );
        // distinct price levels in the linear result
        let mut lvls: Vec<f64> = results[0].dlmp.clone();
        lvls.sort_by(|a, b| a.total_cmp(b));
        lvls.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        println!("lp dlmp levels: {lvls:?}");
    }
}
