use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use utilscope::cost_model::{batch_sweep, network_cost, LayerKind, NetworkSpec};
use utilscope::folding::{folding_report, FoldingConfig};
use utilscope::io::{
    fmt_g, load_frontier, load_network, load_survey, manifest_path, resolve_device, save_manifest, save_network,
    unix_now, write_frontier, write_membership, write_trace, RunManifest,
};
use utilscope::nas_search::{
    approximate_filter_search, compare_frontiers, run_search, true_frontier, Proxy, SamplerKind, SearchConfig, TraceRow,
};
use utilscope::pareto::{frontier_membership, MetricPoint};
use utilscope::roofline::{attainable_flops, is_compute_bound, utilization_from_intensity};
use utilscope::search_space::{load_table, save_table, synthetic_space, SyntheticConfig};
use utilscope::{CostSummary, DeviceSpec, Error, ParetoFrontier};

use crate::{
    AnalyzeArgs, Cli, Command, CompareArgs, Failure, FoldArgs, Method, NasArgs, ParetoArgs, RooflineArgs, SweepArgs,
};

/// Shared by every artifact a single invocation writes.
struct Run {
    manifest: RunManifest,
}

impl Run {
    fn new(cli: &Cli, seed: Option<u64>) -> Self {
        let config = serde_json::to_vec(cli).expect("arguments serialize");
        Self {
            manifest: RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command_line: std::env::args().collect(),
                config_digest: hex::encode(Sha256::digest(&config)),
                seed,
                started_at: unix_now(),
                finished_at: 0,
            },
        }
    }

    fn write_file(&self, path: &Path, bytes: &[u8]) -> Result<(), Failure> {
        std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        self.sidecar(path)
    }

    fn sidecar(&self, path: &Path) -> Result<(), Failure> {
        let manifest = RunManifest { finished_at: unix_now(), ..self.manifest.clone() };
        Ok(save_manifest(&manifest, manifest_path(path))?)
    }

    /// The main report: `--out` if given, stdout otherwise.
    fn emit(&self, out: Option<&Path>, report: &str) -> Result<(), Failure> {
        match out {
            Some(path) => self.write_file(path, report.as_bytes()),
            None => {
                print!("{report}");
                Ok(())
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Analyze(a) => analyze(&Run::new(cli, None), a),
        Command::Roofline(a) => roofline(&Run::new(cli, None), a),
        Command::Fold(a) => fold(&Run::new(cli, None), a),
        Command::Sweep(a) => sweep(&Run::new(cli, None), a),
        Command::Pareto(a) => pareto(&Run::new(cli, None), a),
        Command::Nas(a) => nas(&Run::new(cli, Some(a.seed)), a),
        Command::Compare(a) => compare(&Run::new(cli, None), a),
    }
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn kind_name(kind: &LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv2d { .. } => "conv2d",
        LayerKind::DepthwiseConv2d { .. } => "depthwise_conv2d",
        LayerKind::Dense { .. } => "dense",
        LayerKind::GlobalPool => "global_pool",
        LayerKind::Elementwise => "elementwise",
    }
}

fn device_line(device: &DeviceSpec) -> String {
    format!(
        "device             {} (peak {} FLOPs/s, bandwidth {} bytes/s, CMR {})\n",
        device.name,
        fmt_g(device.peak_flops_per_sec),
        fmt_g(device.mem_bandwidth_bytes_per_sec),
        fmt_g(device.cmr())
    )
}

fn cost_report(net: &NetworkSpec, cost: &CostSummary, device: &DeviceSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "network            {}", net.name);
    let _ = writeln!(s, "batch              {}", cost.batch);
    s.push_str(&device_line(device));
    let _ = writeln!(s, "\nlayer  kind              flops         input_bytes   weight_bytes  output_bytes  intensity");
    for (i, (layer, c)) in net.layers.iter().zip(&cost.per_layer).enumerate() {
        let intensity =
            if c.total_bytes() == 0 { "-".to_string() } else { fmt_g(c.flops as f64 / c.total_bytes() as f64) };
        let _ = writeln!(
            s,
            "{i:<6} {:<17} {:<13} {:<13} {:<13} {:<13} {intensity}",
            kind_name(&layer.kind),
            c.flops,
            c.input_bytes,
            c.weight_bytes,
            c.output_bytes
        );
    }
    let est = utilization_from_intensity(cost.aggregate_intensity, device);
    let _ = writeln!(s, "\ntotal flops        {}", cost.total_flops);
    let _ = writeln!(s, "total bytes        {}", cost.total_bytes);
    let _ = writeln!(s, "flops per image    {}", fmt_g(cost.flops_per_image));
    let _ = writeln!(s, "intensity          {}", fmt_g(cost.aggregate_intensity));
    let _ = writeln!(s, "compute-bound      {}", est.compute_bound.unwrap_or(false));
    let _ = writeln!(s, "attainable FLOPs/s {}", fmt_g(est.achieved_flops_per_sec));
    let _ = writeln!(s, "utilization bound  {}", fmt_g(est.utilization_fraction));
    if cost.total_flops > 0 {
        let _ = writeln!(s, "throughput bound   {} images/s", fmt_g(est.achieved_flops_per_sec / cost.flops_per_image));
    }
    s
}

fn analyze(run: &Run, a: &AnalyzeArgs) -> Result<(), Failure> {
    let net = load_network(&a.net)?;
    let device = resolve_device(&a.device)?;
    let cost = network_cost::<f64>(&net, a.batch)?;
    let report = if a.json {
        let est = utilization_from_intensity(cost.aggregate_intensity, &device);
        to_json(&serde_json::json!({ "network": net.name, "device": device, "cost": cost, "roofline": est }))
    } else {
        cost_report(&net, &cost, &device)
    };
    run.emit(a.output.out.as_deref(), &report)
}

fn roofline(run: &Run, a: &RooflineArgs) -> Result<(), Failure> {
    let device = resolve_device(&a.device)?;
    let mut s = device_line(&device);
    if !a.intensity.is_empty() {
        s.push_str("\nintensity,attainable_flops_per_sec,utilization,compute_bound\n");
        for &i in &a.intensity {
            if !(i.is_finite() && i >= 0.0) {
                return Err(Failure::usage(format!("intensity must be a non-negative number, got {i}")));
            }
            let est = utilization_from_intensity(i, &device);
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt_g(i),
                fmt_g(est.achieved_flops_per_sec),
                fmt_g(est.utilization_fraction),
                est.compute_bound.unwrap_or(false)
            );
        }
    }
    run.emit(a.output.out.as_deref(), &s)
}

fn ratio_line(s: &mut String, label: &str, v: Option<f64>) {
    let _ = writeln!(s, "{label:<26} {}", v.map_or("-".to_string(), fmt_g));
}

fn fold(run: &Run, a: &FoldArgs) -> Result<(), Failure> {
    let net = load_network(&a.net)?;
    let device = resolve_device(&a.device)?;
    let mut cfg = FoldingConfig::new(a.factor)?;
    if let Some(m) = a.round {
        cfg = cfg.with_rounding(m)?;
    }
    let report = folding_report::<f64>(&net, a.batch, &cfg)?;
    let modeled = report.modeled_on(&device);
    if let Some(path) = &a.emit {
        save_network(&report.folded_net, path)?;
        run.sidecar(path)?;
    }
    let text = if a.json {
        to_json(&serde_json::json!({ "report": report, "modeled": modeled }))
    } else {
        let mut s = String::new();
        let _ = writeln!(s, "network                    {} -> {}", net.name, report.folded_net.name);
        let _ = writeln!(s, "factor                     {}", report.factor);
        let _ = writeln!(s, "batch                      {} -> {}", report.original.batch, report.folded.batch);
        let _ =
            writeln!(s, "flops                      {} -> {}", report.original.total_flops, report.folded.total_flops);
        let _ =
            writeln!(s, "bytes                      {} -> {}", report.original.total_bytes, report.folded.total_bytes);
        let _ = writeln!(
            s,
            "intensity                  {} -> {}",
            fmt_g(report.original.aggregate_intensity),
            fmt_g(report.folded.aggregate_intensity)
        );
        ratio_line(&mut s, "flops ratio", Some(report.flops_ratio));
        ratio_line(&mut s, "bytes ratio", Some(report.bytes_ratio));
        ratio_line(&mut s, "intensity ratio", Some(report.intensity_ratio));
        if let Some(i) = report.interior {
            ratio_line(&mut s, "interior flops ratio", Some(i.flops_ratio));
            ratio_line(&mut s, "interior activation ratio", Some(i.activation_bytes_ratio));
            ratio_line(&mut s, "interior weight ratio", Some(i.weight_bytes_ratio));
            ratio_line(&mut s, "interior intensity ratio", Some(i.intensity_ratio));
        }
        s.push_str("\nlayer  role      flops_ratio  activation_ratio  weight_ratio\n");
        for l in &report.layers {
            let f = |v: Option<f64>| v.map_or("-".to_string(), fmt_g);
            let role = format!("{:?}", l.role).to_lowercase();
            let _ = writeln!(
                s,
                "{:<6} {role:<9} {:<12} {:<17} {}",
                l.index,
                f(l.flops_ratio),
                f(l.activation_bytes_ratio),
                f(l.weight_bytes_ratio)
            );
        }
        s.push('\n');
        s.push_str(&device_line(&device));
        let _ = writeln!(
            s,
            "modeled throughput bound   {} -> {} images/s",
            fmt_g(modeled.throughput_before),
            fmt_g(modeled.throughput_after)
        );
        let _ = writeln!(
            s,
            "modeled utilization bound  {} -> {}",
            fmt_g(modeled.utilization_before),
            fmt_g(modeled.utilization_after)
        );
        let _ = writeln!(
            s,
            "modeled compute-bound      {} -> {}",
            modeled.compute_bound_before, modeled.compute_bound_after
        );
        s
    };
    run.emit(a.output.out.as_deref(), &text)
}

fn sweep(run: &Run, a: &SweepArgs) -> Result<(), Failure> {
    let net = load_network(&a.net)?;
    let device = resolve_device(&a.device)?;
    let sweep = batch_sweep::<f64>(&net, &a.batches)?;
    let mut s = String::from("batch,intensity,attainable_flops_per_sec,compute_bound,fraction_of_asymptote\n");
    for &(batch, intensity) in &sweep.points {
        let fraction = sweep.asymptote.map_or("-".to_string(), |lim| fmt_g(intensity / lim));
        let _ = writeln!(
            s,
            "{batch},{},{},{},{fraction}",
            fmt_g(intensity),
            fmt_g(attainable_flops(intensity, &device)),
            is_compute_bound(intensity, &device)
        );
    }
    if let Some(lim) = sweep.asymptote {
        eprintln!("intensity asymptote (batch -> infinity): {}", fmt_g(lim));
    }
    run.emit(a.output.out.as_deref(), &s)
}

fn pareto(run: &Run, a: &ParetoArgs) -> Result<(), Failure> {
    let rows = load_survey(&a.table)?;
    let membership = frontier_membership(&rows)?;
    let mut out = Vec::new();
    write_membership(&rows, &membership, &mut out)?;
    run.emit(a.output.out.as_deref(), &String::from_utf8(out).expect("csv is utf-8"))
}

fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    write_trace(rows, &mut out)?;
    Ok(out)
}

fn frontier_csv(f: &ParetoFrontier) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    write_frontier(f, &mut out)?;
    Ok(out)
}

fn nas(run: &Run, a: &NasArgs) -> Result<(), Failure> {
    let device = resolve_device(&a.device)?;
    let space = if a.space == "synthetic" {
        synthetic_space(&SyntheticConfig::default(), a.seed, &device)?
    } else {
        load_table(&a.space, &device)?
    };
    let sampler = match a.method {
        Method::Reinforce => SamplerKind::Reinforce { learning_rate: a.lr, baseline_decay: a.decay },
        _ => SamplerKind::Random,
    };
    let cfg = SearchConfig {
        time_budget: a.budget,
        eval_time_acc: a.t_acc,
        eval_time_tput: a.t_tput,
        goal_tput: a.goal,
        weight: a.w,
        sampler,
        seed: a.seed,
        parallel_evals: !a.serial_evals,
    };

    let mut s = String::new();
    let _ = writeln!(s, "space              {} ({} candidates)", a.space, space.len());
    let _ = writeln!(s, "method             {}", serde_json::to_value(a.method).expect("enum").as_str().unwrap_or("?"));
    let (rows, found) = match a.method {
        Method::Random | Method::Reinforce => {
            let trace = run_search(&space, &cfg)?;
            let _ = writeln!(s, "accuracy evals     {}", trace.n_acc_evals);
            let _ = writeln!(s, "throughput evals   {}", trace.n_tput_evals);
            let _ = writeln!(s, "simulated time     {}", fmt_g(trace.sim_time));
            if trace.exhausted {
                let _ = writeln!(s, "note               space exhausted before the budget");
            }
            (trace.rows, trace.frontier)
        }
        Method::FilterUtil | Method::FilterFlops => {
            let proxy = if matches!(a.method, Method::FilterUtil) { Proxy::Utilization } else { Proxy::Flops };
            let result = approximate_filter_search(&space, &cfg, proxy)?;
            let _ = writeln!(s, "proxy frontier     {}", result.proxy_frontier.len());
            let _ = writeln!(s, "accuracy evals     {}", result.n_acc_evals);
            let _ = writeln!(s, "throughput evals   {}", result.n_tput_evals);
            let _ = writeln!(s, "simulated time     {}", fmt_g(result.time_spent));
            if result.truncated {
                let _ = writeln!(s, "note               budget ran out before the proxy frontier was covered");
            }
            (result.rows, result.final_frontier)
        }
    };

    let truth = true_frontier(&space)?;
    let _ = writeln!(s, "frontier size      {} (true frontier {})", found.len(), truth.len());
    if !found.is_empty() {
        let min_x = space.iter().map(|c| c.throughput).fold(f64::INFINITY, f64::min);
        let min_y = space.iter().map(|c| c.accuracy).fold(f64::INFINITY, f64::min);
        let cmp = compare_frontiers(&found, &truth, &MetricPoint::new("reference", min_x, min_y))?;
        let _ = writeln!(s, "hypervolume ratio  {}", fmt_g(cmp.hypervolume_ratio));
        let _ = writeln!(s, "max accuracy gap   {}", fmt_g(cmp.max_gap));
    }

    if let Some(path) = &a.save_space {
        save_table(&space, path)?;
        run.sidecar(path)?;
    }
    if let Some(path) = &a.trace {
        run.write_file(path, &trace_csv(&rows)?)?;
    }
    if let Some(path) = &a.frontier {
        run.write_file(path, &frontier_csv(&found)?)?;
    }
    run.emit(a.output.out.as_deref(), &s)
}

fn compare(run: &Run, a: &CompareArgs) -> Result<(), Failure> {
    let fa = load_frontier(&a.a)?;
    let fb = load_frontier(&a.b)?;
    let reference = match &a.reference {
        Some(r) => MetricPoint::new("reference", r[0], r[1]),
        None => {
            let all = fa.points.iter().chain(&fb.points);
            let min_x = all.clone().map(|p| p.x).fold(f64::INFINITY, f64::min);
            let min_y = all.map(|p| p.y).fold(f64::INFINITY, f64::min);
            MetricPoint::new("reference", min_x, min_y)
        }
    };
    let cmp = compare_frontiers(&fa, &fb, &reference)?;
    let mut s = String::new();
    let _ = writeln!(s, "axes               {} / {}", fa.metric_x, fa.metric_y);
    let _ = writeln!(s, "reference          ({}, {})", fmt_g(reference.x), fmt_g(reference.y));
    let _ = writeln!(s, "points             {} vs {}", fa.len(), fb.len());
    let _ = writeln!(s, "hypervolume a      {}", fmt_g(cmp.hypervolume_a));
    let _ = writeln!(s, "hypervolume b      {}", fmt_g(cmp.hypervolume_b));
    let _ = writeln!(s, "hypervolume ratio  {}", fmt_g(cmp.hypervolume_ratio));
    let _ = writeln!(s, "max gap            {}", fmt_g(cmp.max_gap));
    run.emit(a.output.out.as_deref(), &s)
}
