use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use defi_tiers::econ::{
    collinearity_report, event_window_regressions, permutation_placebo, read_panel_csv, rolling_coefficients,
    run_specification_suite, standard_specs, write_panel_csv, write_results_csv, EventWindow, FeDim, PanelObservation,
    RegressionResult, RegressionSpec,
};
use defi_tiers::graph::{build_derivation_graph, build_full_graph, detect_cycles, write_edges_csv, DerivationGraph, TokenGraph};
use defi_tiers::hierarchy::{
    ablate_steps, jaccard_sensitivity, run_hierarchy, temporal_stability, write_sensitivity_csv, write_tiers_csv, HierarchyRun,
};
use defi_tiers::ingest::{parse_snapshot_file, resolve_identity, write_diagnostics, write_snapshot, ParseOptions, PoolRecord, SnapshotFormat};
use defi_tiers::metrics::{
    build_embedded_yields, decompose_multiplier, layering_multiplier, multiplier_series, tier_transition_table,
    token_tvl_attribution, write_embedded_csv, write_multiplier_series_csv, write_transition_csv, EmbeddedYieldTable,
    MultiplierReport,
};
use defi_tiers::synth::{generate_ecosystem, verify_recovery, write_truth_csv};
use defi_tiers::{Error, Result, TokenKey};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::write_manifest;
use crate::{Command, DiscoveryOverrides};

/// Output bookkeeping for one subcommand run.
struct Stage {
    cfg: RunConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Stage {
    fn new(cfg: RunConfig, reads_snapshots: bool) -> Result<Self> {
        cfg.check_inputs(reads_snapshots)?;
        std::fs::create_dir_all(&cfg.out)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", cfg.out.display())))?;
        let i = &cfg.inputs;
        let inputs = [&i.categories, &i.cdp_edges, &i.registry].into_iter().flatten().cloned().collect();
        Ok(Self { cfg, inputs, outputs: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.cfg.out.join(name);
        std::fs::write(&path, buf)?;
        self.outputs.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, |b| {
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })
    }

    fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    fn parse(&mut self, path: &Path) -> Result<(Vec<PoolRecord>, usize)> {
        self.input(path);
        let outcome = parse_snapshot_file(path, None, &self.cfg.categories()?, &ParseOptions::default())?;
        let rejected = outcome.diagnostics.len();
        Ok((resolve_identity(&outcome.records).records, rejected))
    }

    fn records(&mut self) -> Result<Vec<PoolRecord>> {
        let path = self.cfg.baseline_snapshot()?.to_path_buf();
        Ok(self.parse(&path)?.0)
    }

    fn hierarchy(&mut self, records: &[PoolRecord]) -> Result<HierarchyRun> {
        run_hierarchy(records, &self.cfg.pipeline()?)
    }

    fn panel(&mut self, over: Option<&PathBuf>) -> Result<Vec<PanelObservation>> {
        let path = over.cloned().unwrap_or_else(|| self.cfg.panel_path());
        if !path.is_file() {
            return Err(Error::Config(format!("panel {} not found; run `panel` first or pass --panel", path.display())));
        }
        self.input(&path);
        read_panel_csv(std::fs::File::open(&path)?)
    }

    fn finish(self, command: &str) -> Result<()> {
        write_manifest(command, &self.cfg, &self.inputs, &self.outputs)?;
        Ok(())
    }
}

fn apply(cfg: &mut RunConfig, o: &DiscoveryOverrides) {
    if let Some(d) = o.min_outdeg {
        cfg.discovery.min_outdeg = d;
    }
    if let Some(t) = o.min_tvl {
        cfg.discovery.min_src_tvl_usd = t;
    }
}

fn find_spec(name: &str, cfg: &RunConfig) -> Result<RegressionSpec> {
    standard_specs(&cfg.suite)
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("unknown specification `{name}`")))
}

pub fn dispatch(command: &Command, mut cfg: RunConfig) -> Result<()> {
    match command {
        Command::Graph(o) | Command::Tiers(o) | Command::Distance(o) | Command::Multiplier(o) | Command::EmbedYield(o) => {
            apply(&mut cfg, o)
        }
        Command::Placebo { n_perm, spec, .. } => {
            if let Some(n) = n_perm {
                cfg.placebo.n_perm = *n;
            }
            if let Some(s) = spec {
                cfg.placebo.spec = s.clone();
            }
        }
        Command::Rolling { window: Some(w), .. } => cfg.rolling.window = *w,
        Command::Synth { n_base, max_depth } => {
            if let Some(n) = n_base {
                cfg.synth.n_base_tokens = *n;
            }
            if let Some(d) = max_depth {
                cfg.synth.max_depth = *d;
            }
        }
        _ => {}
    }
    let mut st = Stage::new(cfg, !matches!(command, Command::Synth { .. }))?;
    let name = match command {
        Command::Ingest => ingest(&mut st)?,
        Command::Graph(_) => graph(&mut st)?,
        Command::Tiers(_) => tiers(&mut st)?,
        Command::Distance(_) => distance(&mut st)?,
        Command::Multiplier(_) => multiplier(&mut st)?,
        Command::EmbedYield(_) => embed_yield(&mut st)?,
        Command::Panel => panel(&mut st)?,
        Command::Regress { panel } => regress(&mut st, panel.as_ref())?,
        Command::Placebo { panel, .. } => placebo(&mut st, panel.as_ref())?,
        Command::Rolling { panel, .. } => rolling(&mut st, panel.as_ref())?,
        Command::Events { panel } => events(&mut st, panel.as_ref())?,
        Command::Sensitivity => sensitivity(&mut st)?,
        Command::Stability => stability(&mut st)?,
        Command::Ablate => ablate(&mut st)?,
        Command::Synth { .. } => synth(&mut st)?,
        Command::Verify => verify(&mut st)?,
        Command::Report => report(&mut st)?,
    };
    st.finish(name)
}

fn ingest(st: &mut Stage) -> Result<&'static str> {
    let path = st.cfg.baseline_snapshot()?.to_path_buf();
    st.input(&path);
    let outcome = parse_snapshot_file(&path, None, &st.cfg.categories()?, &ParseOptions::default())?;
    let resolution = resolve_identity(&outcome.records);
    let pools: std::collections::BTreeSet<&str> = resolution.records.iter().map(|r| r.pool_id.as_str()).collect();
    st.write("records.jsonl", |b| write_snapshot(&resolution.records, SnapshotFormat::Json, b))?;
    st.write("diagnostics.csv", |b| write_diagnostics(&outcome.diagnostics, b))?;
    let summary = json!({
        "records": resolution.records.len(),
        "pools": pools.len(),
        "tokens": resolution.tokens.len(),
        "rejected_rows": outcome.diagnostics.len(),
        "identity_notes": resolution.diagnostics,
    });
    st.json("ingest_summary.json", &summary)?;
    Ok("ingest")
}

fn graphs(st: &mut Stage, records: &[PoolRecord]) -> Result<(TokenGraph, DerivationGraph)> {
    let params = st.cfg.pipeline()?;
    let full = build_full_graph(records, params.filter.registry.as_ref().expect("registry set"));
    let deriv = build_derivation_graph(&full, &params.effective_filter());
    Ok((full, deriv))
}

fn graph(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let (full, deriv) = graphs(st, &records)?;
    let cycles = detect_cycles(&deriv.graph);
    st.write("full_edges.csv", |b| write_edges_csv(&DerivationGraph::from_graph(full.clone()), b))?;
    st.write("derivation_edges.csv", |b| write_edges_csv(&deriv, b))?;
    st.write("removed_edges.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["step", "src_symbol", "src_chain", "dst_symbol", "dst_chain", "protocol", "tvl_usd"])?;
        for r in &deriv.removed {
            let e = &r.edge;
            w.write_record([
                r.step.letter().to_string().as_str(),
                full.display(&e.src),
                &e.src.chain,
                full.display(&e.dst),
                &e.dst.chain,
                &e.protocol,
                &e.tvl_usd.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    st.write("cycles.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["size", "tvl_usd", "members"])?;
        for c in &cycles {
            let members: Vec<String> = c.members.iter().map(|k| k.to_string()).collect();
            w.write_record([c.members.len().to_string(), c.tvl_usd.to_string(), members.join(";")])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut removed: BTreeMap<String, usize> = BTreeMap::new();
    for r in &deriv.removed {
        *removed.entry(format!("({}) {}", r.step.letter(), r.step.name())).or_default() += 1;
    }
    let summary = json!({
        "full_nodes": full.node_count(),
        "full_edges": full.edge_count(),
        "derivation_edges": deriv.graph.edge_count(),
        "removed_by_step": removed,
        "cycles": cycles.len(),
        "warnings": deriv.warnings,
    });
    st.json("graph_summary.json", &summary)?;
    Ok("graph")
}

fn tier_counts(run: &HierarchyRun) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in run.tiers.tier.values() {
        let label = if *t < 0 { "unmapped".to_string() } else { t.to_string() };
        *counts.entry(label).or_default() += 1;
    }
    counts
}

fn tiers(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let run = st.hierarchy(&records)?;
    st.write("tiers.csv", |b| write_tiers_csv(&run.tiers, &run.full, b))?;
    let summary = json!({
        "candidates": run.discovery.candidates.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
        "tier0": run.discovery.tier0.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
        "demotions": run.discovery.demotions,
        "tier_counts": tier_counts(&run),
        "max_tier": run.tiers.max_tier(),
        "tier_distance_divergence": run.tiers.divergence(),
        "cycles": run.cycles.len(),
    });
    st.json("tier0.json", &summary)?;
    Ok("tiers")
}

fn distance(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let run = st.hierarchy(&records)?;
    st.write("distance.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["symbol", "chain", "graph_distance", "tier", "differs"])?;
        for (k, d) in &run.tiers.graph_distance {
            let t = run.tiers.tier_of(k);
            w.write_record([
                run.full.display(k),
                &k.chain,
                &d.to_string(),
                &t.to_string(),
                &(t != *d as i64).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok("distance")
}

fn multiplier_report(records: &[PoolRecord], run: &HierarchyRun) -> Result<MultiplierReport> {
    let attribution = token_tvl_attribution(records);
    let mut report = layering_multiplier(&attribution, &run.tiers)?;
    report.decomposition = decompose_multiplier(&run.deriv, &run.tiers, report.lm)?;
    Ok(report)
}

fn multiplier(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let run = st.hierarchy(&records)?;
    let report = multiplier_report(&records, &run)?;
    let series = multiplier_series(&records, &run.tiers, &st.cfg.pipeline()?)?;
    st.json("multiplier.json", &report)?;
    st.write("transition.csv", |b| write_transition_csv(&tier_transition_table(&run.deriv, &run.tiers), b))?;
    st.write("multiplier_series.csv", |b| write_multiplier_series_csv(&series, b))?;
    Ok("multiplier")
}

fn embedded(st: &mut Stage, records: &[PoolRecord], run: &HierarchyRun) -> Result<EmbeddedYieldTable> {
    build_embedded_yields(&run.deriv, &run.tiers, records, &st.cfg.registry()?)
}

fn embed_yield(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let run = st.hierarchy(&records)?;
    let table = embedded(st, &records, &run)?;
    st.write("embedded.csv", |b| write_embedded_csv(&table, &run.tiers, &run.full, b))?;
    st.write("creation_yields.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["parent_symbol", "parent_chain", "child_symbol", "child_chain", "creation_yield", "pool_id"])?;
        for ((p, c), y) in &table.creation_yield {
            let pool = table.creation_pool.get(&(p.clone(), c.clone())).map(String::as_str).unwrap_or("");
            w.write_record([run.full.display(p), &p.chain, run.full.display(c), &c.chain, &y.to_string(), pool])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let summary = json!({
        "eligible_edges": table.eligible_edges,
        "matched_edges": table.matched_edges,
        "match_rate": table.match_rate,
    });
    st.json("embedded_summary.json", &summary)?;
    Ok("embed-yield")
}

fn build_panel_rows(st: &mut Stage, records: &[PoolRecord], run: &HierarchyRun) -> Result<defi_tiers::econ::Panel> {
    let table = embedded(st, records, run)?;
    defi_tiers::econ::build_panel(records, &run.tiers, &table, &st.cfg.panel)
}

fn panel(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let run = st.hierarchy(&records)?;
    let panel = build_panel_rows(st, &records, &run)?;
    log::info!("{}", panel.attrition);
    st.write("panel.csv", |b| write_panel_csv(&panel.rows, b))?;
    st.json("attrition.json", &panel.attrition)?;
    Ok("panel")
}

fn regress(st: &mut Stage, over: Option<&PathBuf>) -> Result<&'static str> {
    let rows = st.panel(over)?;
    let specs = standard_specs(&st.cfg.suite);
    let outcome = run_specification_suite(&rows, &specs);
    st.write("results.csv", |b| write_results_csv(&outcome.results, b))?;
    st.write("skipped.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["spec", "reason"])?;
        for (s, why) in &outcome.skipped {
            w.write_record([s, why])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let notes: BTreeMap<&str, &Vec<String>> =
        outcome.results.iter().filter(|r| !r.notes.is_empty()).map(|r| (r.spec.as_str(), &r.notes)).collect();
    st.json("regression_notes.json", &notes)?;
    let joint: Vec<RegressionSpec> = specs.into_iter().filter(|s| s.name.starts_with("correction_") || s.name.starts_with("distance_")).collect();
    st.json("collinearity.json", &collinearity_report(&rows, &joint))?;
    Ok("regress")
}

fn placebo(st: &mut Stage, over: Option<&PathBuf>) -> Result<&'static str> {
    let rows = st.panel(over)?;
    let spec = find_spec(&st.cfg.placebo.spec, &st.cfg)?;
    let res = permutation_placebo(&rows, &spec, st.cfg.placebo.n_perm, st.cfg.seed)?;
    st.json("placebo.json", &res)?;
    Ok("placebo")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn rolling(st: &mut Stage, over: Option<&PathBuf>) -> Result<&'static str> {
    let rows = st.panel(over)?;
    let spec = find_spec(&st.cfg.rolling.spec, &st.cfg)?;
    let points = rolling_coefficients(&rows, &spec, &st.cfg.rolling.regressor, st.cfg.rolling.window)?;
    st.write("rolling.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["period", "n_obs", "coef", "se", "ci_low", "ci_high"])?;
        for p in &points {
            w.write_record([p.period.to_string(), p.n_obs.to_string(), opt(p.coef), opt(p.se), opt(p.ci_low), opt(p.ci_high)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok("rolling")
}

fn events(st: &mut Stage, over: Option<&PathBuf>) -> Result<&'static str> {
    let rows = st.panel(over)?;
    let windows = match st.cfg.inputs.event_windows.clone() {
        Some(p) => {
            st.input(&p);
            EventWindow::read_csv(std::fs::File::open(&p)?)?
        }
        None => EventWindow::defaults(),
    };
    let mut spec = find_spec(&st.cfg.events.spec, &st.cfg)?;
    if !st.cfg.events.time_fe {
        spec.fe.retain(|f| *f != FeDim::Period);
    }
    let results = event_window_regressions(&rows, &spec, &windows);
    st.write("events.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["label", "start", "end", "regressor", "coef", "se", "p_value", "n_obs", "n_clusters", "flag"])?;
        for e in &results {
            let head = [e.window.label.clone(), e.window.start.to_string(), e.window.end.to_string()];
            match &e.result {
                Some(r) => {
                    for c in &r.coefficients {
                        let mut row = head.to_vec();
                        row.extend([
                            c.name.clone(),
                            c.estimate.to_string(),
                            c.se.to_string(),
                            c.p_value.to_string(),
                            r.n_obs.to_string(),
                            r.n_clusters.to_string(),
                            String::new(),
                        ]);
                        w.write_record(&row)?;
                    }
                }
                None => {
                    let mut row = head.to_vec();
                    row.extend(["", "", "", "", "", ""].map(String::from));
                    row.push(e.flag.clone().unwrap_or_default());
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })?;
    Ok("events")
}

fn sensitivity(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let (full, deriv) = graphs(st, &records)?;
    let cells = st.cfg.sensitivity.cells(&st.cfg.discovery);
    let m = jaccard_sensitivity(&deriv, &full, &cells, &st.cfg.discovery)?;
    st.write("sensitivity.csv", |b| write_sensitivity_csv(&m, b))?;
    Ok("sensitivity")
}

fn label_of(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn stability(st: &mut Stage) -> Result<&'static str> {
    let paths = st.cfg.inputs.snapshots.clone();
    if paths.is_empty() {
        return Err(Error::Config("stability needs at least one snapshot".into()));
    }
    let mut snapshots = Vec::new();
    for p in &paths {
        snapshots.push((label_of(p), st.parse(p)?.0));
    }
    let baseline = st.hierarchy(&snapshots[0].1)?;
    let rows = temporal_stability(&snapshots, &baseline.tiers, &st.cfg.pipeline()?);
    st.write("stability.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["snapshot", "pools", "tier0_count", "common_tokens", "agreement_pct", "spearman", "flag"])?;
        for r in &rows {
            w.write_record([
                r.label.clone(),
                r.pools.to_string(),
                r.tier0_count.map(|c| c.to_string()).unwrap_or_default(),
                r.common.to_string(),
                opt(r.agreement_pct),
                opt(r.spearman),
                r.flag.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok("stability")
}

fn parse_key(s: &str) -> Result<TokenKey> {
    let (sym, chain) = s.split_once('@').ok_or_else(|| Error::Config(format!("core token `{s}` must be SYMBOL@chain")))?;
    Ok(TokenKey::new(sym, chain))
}

fn ablate(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let core = st.cfg.ablation.core.iter().map(|s| parse_key(s)).collect::<Result<Vec<_>>>()?;
    let report = ablate_steps(&records, &st.cfg.pipeline()?, &core)?;
    st.write("ablation.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["step", "name", "reassigned", "total", "share", "core_changes", "error"])?;
        for r in &report.rows {
            let changes: Vec<String> = r.core_changes.iter().map(|c| format!("{}:{}->{}", c.token, c.before, c.after)).collect();
            w.write_record([
                r.step.letter().to_string(),
                r.step.name().to_string(),
                r.reassigned.to_string(),
                r.total.to_string(),
                r.share.to_string(),
                changes.join(";"),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok("ablate")
}

fn synth(st: &mut Stage) -> Result<&'static str> {
    let (records, truth) = generate_ecosystem(&st.cfg.synth)?;
    st.write("synth_snapshot.jsonl", |b| write_snapshot(&records, SnapshotFormat::Json, b))?;
    st.write("truth.csv", |b| write_truth_csv(&truth, b))?;
    let summary = json!({
        "tokens": truth.tier.len(),
        "pools": records.iter().map(|r| r.pool_id.as_str()).collect::<std::collections::BTreeSet<_>>().len(),
        "records": records.len(),
        "lm": truth.lm,
        "panel_coefs": truth.panel_coefs,
    });
    st.json("truth_summary.json", &summary)?;
    Ok("synth")
}

fn verify(st: &mut Stage) -> Result<&'static str> {
    let path = match st.cfg.inputs.snapshots.first() {
        Some(p) => p.clone(),
        None => st.cfg.out.join("synth_snapshot.jsonl"),
    };
    if !path.is_file() {
        return Err(Error::Config(format!("{} not found; run `synth` first or pass --input", path.display())));
    }
    let (records, _) = st.parse(&path)?;
    let (_, truth) = generate_ecosystem(&st.cfg.synth)?;
    let report = verify_recovery(&records, &truth, &st.cfg.pipeline()?)?;
    st.json("recovery.json", &report)?;
    Ok("verify")
}

fn headline(results: &[RegressionResult]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let wanted = [
        ("tier_1_time_fe", "tier"),
        ("tier_4_both_fe", "tier"),
        ("distance_4_both_fe", "graph_distance"),
        ("correction_joint_corrected_full", "tier"),
        ("correction_joint_corrected_full", "graph_distance"),
    ];
    let mut out = BTreeMap::new();
    for (spec, reg) in wanted {
        if let Some(c) = results.iter().find(|r| r.spec == spec).and_then(|r| r.coef(reg)) {
            out.insert(format!("{spec}:{reg}"), [("coef".to_string(), c.estimate), ("se".to_string(), c.se)].into());
        }
    }
    out
}

fn report(st: &mut Stage) -> Result<&'static str> {
    let records = st.records()?;
    let run = st.hierarchy(&records)?;
    let mult = multiplier_report(&records, &run)?;
    let mut notes = Vec::new();
    let mut coefs = BTreeMap::new();
    let mut panel_rows = None;
    match build_panel_rows(st, &records, &run) {
        Ok(p) => {
            panel_rows = Some(p.rows.len());
            let outcome = run_specification_suite(&p.rows, &standard_specs(&st.cfg.suite));
            coefs = headline(&outcome.results);
            notes.extend(outcome.skipped.iter().map(|(s, why)| format!("{s}: {why}")));
        }
        Err(e) => notes.push(format!("panel: {e}")),
    }
    let summary = json!({
        "nodes": run.full.node_count(),
        "full_edges": run.full.edge_count(),
        "derivation_edges": run.deriv.graph.edge_count(),
        "tier0_count": run.discovery.tier0.len(),
        "tier_counts": tier_counts(&run),
        "lm": mult.lm,
        "tvl_tier0": mult.tvl_tier0,
        "tvl_mapped": mult.tvl_mapped,
        "decomposition": mult.decomposition,
        "panel_rows": panel_rows,
        "coefficients": coefs,
        "notes": notes,
    });
    st.json("report.json", &summary)?;
    let mut text = String::new();
    text += &format!("nodes               {}\n", run.full.node_count());
    text += &format!("edges (full/deriv)  {} / {}\n", run.full.edge_count(), run.deriv.graph.edge_count());
    text += &format!("tier-0 tokens       {}\n", run.discovery.tier0.len());
    text += &format!("layering multiplier {:.4}\n", mult.lm);
    for (g, v) in &mult.decomposition {
        text += &format!("  {:<17} {:+.4}\n", g.as_str(), v);
    }
    for (k, v) in &coefs {
        text += &format!("{k:<45} {:+.4} ({:.4})\n", v["coef"], v["se"]);
    }
    st.write("report.txt", |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    print!("{text}");
    Ok("report")
}
