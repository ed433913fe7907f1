use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use covroute_core::alloc::{allocate_covert_max, allocate_latency_min, verify_allocation};
use covroute_core::detector::calibrate as run_calibration;
use covroute_core::routing::RouteSummary;
use covroute_core::scenario::{run_route, run_sweep, write_sweep_csv, SweepRow};
use covroute_core::units::{linear_to_db, watts_to_dbm};
use covroute_core::{CalibrationTable, DetectorKind, Endpoint, Error, LinkGains, NodeId, Objective, ScenarioConfig};
use serde_json::json;

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

pub fn calibrate(cfg: &ScenarioConfig, kinds: &[DetectorKind]) -> anyhow::Result<()> {
    let dir = cfg.table_dir();
    ensure_dir(&dir)?;
    let cal = &cfg.calibration;
    for &kind in kinds {
        log::info!("calibrating {kind}: {} cells, {} trials each", cal.snr_grid_db.len() * cal.obs_grid_bits.len(), cal.trials);
        let table = run_calibration(kind, &cfg.waveform, &cal.snr_grid_db, &cal.obs_grid_bits, cal.trials, cfg.seed)?;
        let path = cfg.table_path(kind);
        table.save(&path)?;
        print_table_summary(&table, &path);
    }
    Ok(())
}

fn print_table_summary(table: &CalibrationTable, path: &Path) {
    println!("{} detector -> {}", table.detector, path.display());
    println!(
        "  {} cells ({} SNR x {} obs), {} trials/cell, seed {}",
        table.cell_count(),
        table.snr_grid_db.len(),
        table.obs_grid_bits.len(),
        table.trials,
        table.seed
    );
    print!("  {:>8}", "bits\\dB");
    for s in &table.snr_grid_db {
        print!(" {s:>6.1}");
    }
    println!();
    for (o, bits) in table.obs_grid_bits.iter().enumerate() {
        print!("  {bits:>8}");
        for dep in &table.fitted[o] {
            print!(" {dep:>6.3}");
        }
        println!();
    }
    println!("  max CI halfwidth {:.4}", table.max_ci_halfwidth());
    println!("  cells breaking monotonicity beyond 2x CI: {}", table.flagged_cells.len());
}

/// Loads the scenario's table if it exists. Latency mode needs one; covert
/// mode only uses it to report DEPs.
fn optional_table(cfg: &ScenarioConfig) -> anyhow::Result<Option<CalibrationTable>> {
    match cfg.load_table(cfg.detector) {
        Ok(t) => Ok(Some(t)),
        Err(Error::MissingCalibration(msg)) if cfg.mode == Objective::CovertMax => {
            log::warn!("{msg}; hop DEPs will not be reported");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn allocate(cfg: &ScenarioConfig, tx: Option<usize>, rx: Option<usize>) -> anyhow::Result<()> {
    let topology = cfg.topology()?;
    let constraints = cfg.constraints()?;
    let tx = tx.map_or(topology.alice(), NodeId);
    let rx = rx.map_or(topology.bob(), NodeId);
    let gains = LinkGains::new(topology.link_gain(tx, Endpoint::Node(rx))?, topology.link_gain(tx, Endpoint::Willie)?);
    let table = optional_table(cfg)?;
    let alloc = match cfg.mode {
        Objective::CovertMax => allocate_covert_max(gains, &constraints)?,
        Objective::LatencyMin => {
            let table = table.as_ref().expect("latency mode always loads a table");
            let ceiling = table.invert_dep(constraints.dep_reqd, constraints.m_bits)?;
            allocate_latency_min(gains, &constraints, ceiling.snr_w)?
        }
    };
    let alloc = match &table {
        Some(t) => alloc.with_dep(t, constraints.m_bits),
        None => alloc,
    };
    let report = verify_allocation(&alloc, &constraints, gains, cfg.mode);

    let dir = cfg.output_dir();
    ensure_dir(&dir)?;
    let path = dir.join("allocation.json");
    write_json(
        &path,
        &json!({
            "mode": cfg.mode,
            "tx": tx,
            "rx": rx,
            "gain_rx_db": linear_to_db(gains.rx),
            "gain_willie_db": linear_to_db(gains.willie),
            "allocation": alloc,
            "verification": report,
        }),
    )?;

    println!("{} allocation {tx} -> {rx}", cfg.mode);
    println!("  power        {:.2} dBm", watts_to_dbm(alloc.power_w));
    println!("  bandwidth    {:.4e} Hz", alloc.bandwidth_hz);
    println!("  eta          {:.4}", alloc.spreading_gain);
    println!("  data rate    {:.4e} bit/s", alloc.data_rate_bps);
    println!("  latency      {:.6e} s", alloc.latency_s);
    println!("  snr at Bob   {:.2} dB", linear_to_db(alloc.snr_rx));
    println!("  snr at Willie {:.2} dB", linear_to_db(alloc.snr_willie));
    println!("  theta        {:.2} dB", linear_to_db(alloc.theta));
    if let Some(dep) = &alloc.dep {
        println!("  DEP          {:.4}{}", dep.dep, if dep.extrapolated { " (extrapolated)" } else { "" });
    }
    println!("  verification {}", if report.passed { "passed" } else { "FAILED" });
    println!("wrote {}", path.display());
    if !report.passed {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        anyhow::bail!("allocation failed verification: {}", names.join(", "));
    }
    Ok(())
}

pub fn route(cfg: &ScenarioConfig) -> anyhow::Result<()> {
    let topology = cfg.topology()?;
    let constraints = cfg.constraints()?;
    let table = optional_table(cfg)?;
    let outcome = run_route(&topology, &constraints, cfg.mode, table.as_ref())?;

    let dir = cfg.output_dir();
    ensure_dir(&dir)?;
    let route_path = dir.join("route.json");
    write_json(&route_path, &outcome)?;
    write_json(&dir.join("topology.json"), &topology.to_record())?;

    print_route(&outcome.metrics.summary);
    println!("  {:>4} {:>4} {:>9} {:>8} {:>12} {:>9} {:>8}", "tx", "rx", "P dBm", "eta", "latency s", "theta dB", "DEP");
    for h in &outcome.metrics.hops {
        let dep = h.dep.map_or("-".to_string(), |d| format!("{d:.4}"));
        println!(
            "  {:>4} {:>4} {:>9.2} {:>8.3} {:>12.5e} {:>9.2} {:>8}",
            h.tx.0, h.rx.0, h.power_dbm, h.eta, h.latency_s, h.theta_db, dep
        );
    }
    println!("wrote {}", route_path.display());
    Ok(())
}

fn print_route(s: &RouteSummary) {
    let path: Vec<String> = s.nodes.iter().map(|n| n.to_string()).collect();
    println!("{} route, {} hops: {}", s.objective, s.hop_count, path.join(" -> "));
    println!("  end-to-end latency  {:.6e} s", s.e2e_latency_s);
    match s.e2e_dep {
        Some(d) => println!("  end-to-end DEP      {d:.4}{}", if s.dep_extrapolated { " (extrapolated)" } else { "" }),
        None => println!("  end-to-end DEP      n/a (no calibration)"),
    }
    if let Some(b) = s.bottleneck_hop {
        println!("  bottleneck          hop {b}, theta {:.2} dB", s.bottleneck_theta_db);
    }
    println!("  max eta             {:.3}", s.max_eta);
}

pub fn sweep(cfg: &ScenarioConfig) -> anyhow::Result<()> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::Config("sweep grid required".into()))?;
    let topology = cfg.topology()?;
    let constraints = cfg.constraints()?;
    let tables = cfg.detectors().into_iter().map(|k| cfg.load_table(k)).collect::<Result<Vec<_>, _>>()?;
    let rows = run_sweep(&topology, &constraints, cfg.mode, spec, &tables)?;

    let dir = cfg.output_dir();
    ensure_dir(&dir)?;
    let csv_path = dir.join("sweep.csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    write_sweep_csv(&rows, file)?;
    write_json(&dir.join("sweep.json"), &rows)?;

    print_sweep(&rows);
    let infeasible = rows.iter().filter(|r| !r.is_ok()).count();
    println!("{} rows ({infeasible} infeasible) -> {}", rows.len(), csv_path.display());
    Ok(())
}

fn print_sweep(rows: &[SweepRow]) {
    println!("  {:>8} {:>12} {:>14} {:>8} {:>5} {:>9} {:>10}", "detector", "value", "latency s", "DEP", "hops", "max eta", "status");
    for r in rows {
        let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
        println!(
            "  {:>8} {:>12} {:>14} {:>8} {:>5} {:>9} {:>10}",
            r.detector.as_str(),
            r.swept_value,
            r.e2e_latency_s.map_or("-".to_string(), |x| format!("{x:.5e}")),
            f(r.e2e_dep, 4),
            r.hop_count.map_or("-".to_string(), |h| h.to_string()),
            f(r.max_eta, 2),
            r.status
        );
    }
}

pub fn gen_topology(cfg: &ScenarioConfig) -> anyhow::Result<()> {
    let topology = cfg.topology()?;
    let dir: PathBuf = cfg.output_dir();
    ensure_dir(&dir)?;
    let topo_path = dir.join("topology.json");
    write_json(&topo_path, &topology.to_record())?;
    let gains_path = dir.join("gains.csv");
    topology.export_gains(&gains_path)?;
    println!(
        "{} nodes, Alice {} Bob {}, Willie at {:?}",
        topology.node_count(),
        topology.alice(),
        topology.bob(),
        topology.willie_position()
    );
    println!("wrote {} and {}", topo_path.display(), gains_path.display());
    Ok(())
}
