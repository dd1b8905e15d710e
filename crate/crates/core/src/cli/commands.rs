use std::path::Path;

use fairtrade::dispatch::{
    baselines, run_admm, solve_centralized, verify_price_invariance, AdmmConfig, DispatchResult, DispatchStatus,
    Solver,
};
use fairtrade::hub::local_cost;
use fairtrade::pricing::{
    construct_beneficial_prices, Aggregation, FixedDispatch, MediationConfig, MediationStatus, PriceProfile,
    GAP_TOL,
};
use fairtrade::qp::QpSettings;
use fairtrade::scenario::results::{
    cost_rows, fairness_rows, price_rows, prices_from_rows, read_csv, series_rows, trade_rows, write_csv,
    write_json, write_message_log, PriceRow,
};
use fairtrade::scenario::{parse_scenario, synth, validate_scenario, write_scenario, Scenario, ScenarioError};

use super::manifest::RunManifest;
use super::{CertificateArgs, Cli, CliError, Command, Common, DispatchArgs, MediateArgs, Mode, SolverArgs, SweepArgs, SynthArgs};

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Baseline(a) => baseline(&a),
        Command::Dispatch(a) => dispatch(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Mediate(a) => mediate(&a),
        Command::Certificate(a) => certificate(&a),
        Command::Synth(a) => synthesize(&a),
    }
}

fn read_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text, path.parent()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parses and validates; warnings are logged, errors fail with exit 1.
fn load(path: &Path) -> Result<Scenario, CliError> {
    let s = read_scenario(path)?;
    let report = validate_scenario(&s);
    for w in &report.warnings {
        log::warn!("{}: `{}`: {}", path.display(), w.path, w.message);
    }
    if !report.is_valid() {
        let lines: Vec<String> = report.errors.iter().map(|f| format!("`{}`: {}", f.path, f.message)).collect();
        return Err(CliError::Domain(format!("{} is invalid:\n  {}", path.display(), lines.join("\n  "))));
    }
    Ok(s)
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Domain(format!("cannot create {}: {e}", dir.display())))
}

fn parse_price(spec: &str, s: &Scenario) -> Result<PriceProfile, CliError> {
    if spec == "zero" {
        return Ok(PriceProfile::zero(s));
    }
    if let Some(v) = spec.strip_prefix("uniform:") {
        let price: f64 = v
            .parse()
            .map_err(|_| CliError::Usage(format!("`{v}` is not a price")))?;
        return Ok(PriceProfile::uniform(s, price));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let rows: Vec<PriceRow> = read_csv(path).map_err(|e| CliError::Usage(e.to_string()))?;
        return prices_from_rows(s, &rows).map_err(|e| CliError::Usage(format!("{path}: {e}")));
    }
    Err(CliError::Usage(format!(
        "price source `{spec}`: expected `uniform:VALUE`, `zero` or `file:PATH`"
    )))
}

fn admm_config(s: &Scenario, solver: &SolverArgs, tol: Option<f64>, max_iter: Option<usize>) -> AdmmConfig {
    let mut cfg = AdmmConfig::for_scenario(s);
    if let Some(rho) = solver.rho {
        cfg.rho = rho;
    }
    if let Some(tol) = tol {
        cfg.tol = tol;
    }
    if let Some(m) = max_iter {
        cfg.max_iter = m;
    }
    cfg
}

fn solver_for(s: &Scenario, args: &SolverArgs) -> Solver {
    match args.mode {
        Mode::Central => Solver::Central(QpSettings::default()),
        Mode::Admm => Solver::Admm(admm_config(s, args, None, None)),
    }
}

fn record_solver(m: &mut RunManifest, s: &Scenario, args: &SolverArgs) {
    m.param("mode", format!("{:?}", args.mode).to_lowercase());
    if args.mode == Mode::Admm {
        m.param("rho", args.rho.unwrap_or(s.admm_penalty_rho));
    }
}

fn equilibrium(s: &Scenario, args: &SolverArgs) -> Result<DispatchResult, CliError> {
    let result = solver_for(s, args).solve(s, &PriceProfile::zero(s))?;
    if result.status != DispatchStatus::Converged {
        log::warn!("equilibrium solve stopped before convergence");
    }
    Ok(result)
}

fn validate(a: &Common) -> Result<u8, CliError> {
    let s = read_scenario(&a.scenario)?;
    let report = validate_scenario(&s);
    println!(
        "{}: {} error(s), {} warning(s)",
        a.scenario.display(),
        report.errors.len(),
        report.warnings.len()
    );
    for f in &report.errors {
        println!("  error   `{}`: {}", f.path, f.message);
    }
    for f in &report.warnings {
        println!("  warning `{}`: {}", f.path, f.message);
    }
    out_dir(&a.out)?;
    let mut m = RunManifest::new("validate", Some(&a.scenario), &a.out, 0);
    write_json(&report, m.output("validation.json"))?;
    m.write()?;
    Ok(if report.is_valid() { 0 } else { 1 })
}

fn baseline(a: &Common) -> Result<u8, CliError> {
    let s = load(&a.scenario)?;
    let j_nt = baselines(&s, &QpSettings::default())?;
    out_dir(&a.out)?;
    let mut m = RunManifest::new("baseline", Some(&a.scenario), &a.out, 0);
    #[derive(serde::Serialize, serde::Deserialize)]
    #[allow(non_snake_case)]
    struct Row {
        hub: String,
        J_nontrading: f64,
    }
    impl fairtrade::scenario::results::CsvRow for Row {
        const HEADER: &'static [&'static str] = &["hub", "J_nontrading"];
    }
    let rows: Vec<Row> = s
        .hubs
        .iter()
        .zip(&j_nt)
        .map(|(h, &j)| Row {
            hub: h.id.clone(),
            J_nontrading: j,
        })
        .collect();
    for r in &rows {
        println!("{:<12} J_nt = {:>14.6} CHF", r.hub, r.J_nontrading);
    }
    println!("{:<12} W_nt = {:>14.6} CHF", "network", j_nt.iter().sum::<f64>());
    write_csv(&rows, m.output("baseline.csv"))?;
    m.write()?;
    Ok(0)
}

fn dispatch(a: &DispatchArgs) -> Result<u8, CliError> {
    let s = load(&a.common.scenario)?;
    let prices = parse_price(&a.price, &s)?;
    let mut m = RunManifest::new("dispatch", Some(&a.common.scenario), &a.common.out, 0);
    m.param("price", &a.price);
    record_solver(&mut m, &s, &a.solver);

    let (result, messages) = match a.solver.mode {
        Mode::Central => (solve_centralized(&s, &prices, &QpSettings::default())?, None),
        Mode::Admm => {
            let mut cfg = admm_config(&s, &a.solver, a.tol, a.max_iter);
            cfg.record_messages = true;
            m.param("tol", cfg.tol).param("max_iter", cfg.max_iter);
            let run = run_admm(&s, &prices, &cfg)?;
            (run.result, Some(run.messages))
        }
    };
    let j_nt = baselines(&s, &QpSettings::default())?;
    let w_nt: f64 = j_nt.iter().sum();
    let reduction = (w_nt - result.social_cost) / w_nt;

    out_dir(&a.common.out)?;
    write_csv(&series_rows(&s), m.output("inputs.csv"))?;
    write_csv(&trade_rows(&result), m.output("trades.csv"))?;
    write_csv(&cost_rows(&result, &j_nt), m.output("costs.csv"))?;
    write_csv(&result.trace, m.output("trace.csv"))?;
    write_json(&result, m.output("result.json"))?;
    if let Some(msgs) = &messages {
        write_message_log(msgs, m.output("messages.jsonl"))?;
    }
    m.write()?;

    for row in cost_rows(&result, &j_nt) {
        println!(
            "{:<12} J = {:>14.6}  J_nt = {:>14.6}  d = {}",
            row.hub,
            row.J_trading,
            row.J_nontrading,
            row.d_i.map_or("n/a".to_string(), |d| format!("{d:+.6}"))
        );
    }
    println!("W = {:.6} CHF  W_nt = {:.6} CHF  reduction = {:.4}%", result.social_cost, w_nt, 100.0 * reduction);
    println!(
        "status {:?} after {} iteration(s), {} message(s)",
        result.status, result.iterations, result.message_count
    );
    Ok(if result.status == DispatchStatus::Converged { 0 } else { 1 })
}

fn sweep(a: &SweepArgs) -> Result<u8, CliError> {
    let s = load(&a.common.scenario)?;
    if a.prices.is_empty() {
        return Err(CliError::Usage("at least one price is needed".into()));
    }
    let mut m = RunManifest::new("sweep", Some(&a.common.scenario), &a.common.out, 0);
    m.param("prices", a.prices.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
        .param("tol", a.tol);
    record_solver(&mut m, &s, &a.solver);
    let solver = solver_for(&s, &a.solver);
    let profiles: Vec<PriceProfile> = a.prices.iter().map(|&c| PriceProfile::uniform(&s, c)).collect();
    let (deviation, results) = if profiles.len() >= 2 {
        let (report, results) = verify_price_invariance(&s, &profiles, a.tol, &solver)?;
        (report.max_trade_deviation, results)
    } else {
        (0.0, vec![solver.solve(&s, &profiles[0])?])
    };
    let j_nt = baselines(&s, &QpSettings::default())?;
    let w_nt: f64 = j_nt.iter().sum();

    let mut header = vec!["row".to_string()];
    header.extend(a.prices.iter().map(|c| format!("c={c}")));
    let mut table: Vec<Vec<String>> = Vec::new();
    for (i, hub) in s.hubs.iter().enumerate() {
        let mut row = vec![format!("d_{}", hub.id)];
        for r in &results {
            row.push(fairtrade::pricing::cost_reduction(j_nt[i], r.costs[i].total).map_or(String::new(), |d| d.to_string()));
        }
        table.push(row);
    }
    let mut total = vec!["reduction".to_string()];
    total.extend(results.iter().map(|r| ((w_nt - r.social_cost) / w_nt).to_string()));
    table.push(total);
    let mut inv = vec!["max_trade_deviation_kW".to_string()];
    inv.extend(results.iter().map(|r| r.profile.trades.max_deviation(&results[0].profile.trades).to_string()));
    table.push(inv);

    out_dir(&a.common.out)?;
    let path = m.output("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    w.write_record(&header).and_then(|_| {
        table.iter().try_for_each(|r| w.write_record(r))?;
        w.flush().map_err(csv::Error::from)
    })
    .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    m.write()?;

    println!("{}", header.iter().map(|h| format!("{h:>24}")).collect::<String>());
    for row in &table {
        let cells: String = row
            .iter()
            .enumerate()
            .map(|(k, v)| match (k, v.parse::<f64>()) {
                (0, _) | (_, Err(_)) => format!("{v:>24}"),
                (_, Ok(x)) => format!("{x:>24.6e}"),
            })
            .collect();
        println!("{cells}");
    }
    let passed = deviation <= a.tol;
    println!(
        "trade invariance: max deviation {deviation:.3e} kW (tol {:e}) {}",
        a.tol,
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(if passed { 0 } else { 1 })
}

fn mediate(a: &MediateArgs) -> Result<u8, CliError> {
    let s = load(&a.common.scenario)?;
    let start = parse_price(&a.price, &s)?;
    let mut cfg = MediationConfig {
        step_beta: a.beta,
        safeguard: a.safeguard,
        ..MediationConfig::default()
    };
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    if let Some(n) = a.max_iter {
        cfg.max_iter = n;
    }
    let mut m = RunManifest::new("mediate", Some(&a.common.scenario), &a.common.out, 0);
    m.param("price", &a.price)
        .param("tol", cfg.tol)
        .param("max_iter", cfg.max_iter)
        .param("safeguard", cfg.safeguard)
        .param("price_box", format!("[{}, {}]", cfg.price_min, cfg.price_max));
    if let Some(b) = a.beta {
        m.param("beta", b);
    }
    record_solver(&mut m, &s, &a.solver);

    // the equilibrium does not depend on prices: solve once, then mediate
    let eq = equilibrium(&s, &a.solver)?;
    let j_nt = baselines(&s, &QpSettings::default())?;
    let model = FixedDispatch::from_result(&eq, j_nt.clone());
    let (prices, report) = fairtrade::pricing::run_mediation(&model, &start, &cfg)?;
    let final_result = solve_at(&s, &eq, &prices);

    out_dir(&a.common.out)?;
    write_csv(&price_rows(&s, &prices), m.output("prices.csv"))?;
    write_csv(&trade_rows(&final_result), m.output("trades.csv"))?;
    write_csv(&fairness_rows(&report), m.output("fairness.csv"))?;
    write_csv(&report.trace, m.output("mediation_trace.csv"))?;
    write_json(&report, m.output("fairness.json"))?;
    write_json(&prices, m.output("prices.json"))?;
    m.write()?;

    for row in fairness_rows(&report) {
        println!(
            "{:<12} d = {}  J = {:>14.6}  J_nt = {:>14.6}",
            row.hub,
            row.d_i.map_or("n/a".to_string(), |d| format!("{d:+.6}")),
            row.J_trading,
            row.J_nontrading
        );
    }
    println!(
        "φ = {:.3e}  max|d_i − d̄| = {:.3e}  β = {:.4e}  L = {:.4e}  {} iteration(s), {:?}",
        report.phi,
        report.max_deviation(),
        report.beta,
        report.lipschitz_l,
        report.trace.len(),
        report.status
    );
    if cfg.safeguard {
        let worse: Vec<&str> = (0..s.num_hubs())
            .filter(|&i| report.j_trading[i] > j_nt[i] + 1e-9)
            .map(|i| s.hubs[i].id.as_str())
            .collect();
        println!(
            "safeguard: {}",
            if worse.is_empty() { "every hub at or below its baseline".to_string() } else { format!("violated by {}", worse.join(", ")) }
        );
    }
    Ok(if report.status == MediationStatus::Converged { 0 } else { 1 })
}

/// Re-evaluates an equilibrium's costs at other prices.
fn solve_at(s: &Scenario, eq: &DispatchResult, prices: &PriceProfile) -> DispatchResult {
    let mut out = eq.clone();
    out.costs = (0..s.num_hubs())
        .map(|i| local_cost(s, i, &eq.profile.hubs[i], &eq.profile.trades, prices))
        .collect();
    out.social_cost = out.costs.iter().map(|c| c.total).sum();
    out.prices = prices.clone();
    out
}

fn certificate(a: &CertificateArgs) -> Result<u8, CliError> {
    let s = load(&a.common.scenario)?;
    let aggregation = if a.hourly { Aggregation::Hourly } else { Aggregation::Horizon };
    let mut m = RunManifest::new("certificate", Some(&a.common.scenario), &a.common.out, 0);
    m.param("aggregation", format!("{aggregation:?}").to_lowercase());
    record_solver(&mut m, &s, &a.solver);

    let eq = equilibrium(&s, &a.solver)?;
    let j_nt = baselines(&s, &QpSettings::default())?;
    let model = FixedDispatch::from_result(&eq, j_nt.clone());
    let cert = construct_beneficial_prices(&model, aggregation)?;
    // independent check through the hub cost model
    let at_prices = solve_at(&s, &eq, &cert.prices);

    out_dir(&a.common.out)?;
    write_json(&cert, m.output("certificate.json"))?;
    write_csv(&price_rows(&s, &cert.prices), m.output("prices.csv"))?;
    m.write()?;

    println!(
        "κ = W_nt − W = {:.6} CHF over {} component(s), {} priced edge(s)",
        cert.kappa,
        cert.components.len(),
        cert.edges.len()
    );
    let mut all = cert.passed;
    for (i, hub) in s.hubs.iter().enumerate() {
        let gap = at_prices.costs[i].total - j_nt[i];
        let ok = gap <= GAP_TOL;
        all &= ok;
        println!(
            "{:<12} J(c*) − J_nt = {:>+14.6e} CHF  {}",
            hub.id,
            gap,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("{}/{} hubs pass", (0..s.num_hubs()).filter(|&i| at_prices.costs[i].total - j_nt[i] <= GAP_TOL).count(), s.num_hubs());
    Ok(if all { 0 } else { 1 })
}

fn synthesize(a: &SynthArgs) -> Result<u8, CliError> {
    out_dir(&a.out)?;
    let mut m = RunManifest::new("synth", None, &a.out, a.seed);
    let scenarios = [
        synth::threehub(a.seed),
        synth::two_hub_toy(),
        synth::self_sufficient(),
        synth::disconnected(),
    ];
    for s in &scenarios {
        let file = format!("{}.scenario", s.name);
        write_scenario(s, m.output(&file)).map_err(|e: ScenarioError| CliError::Domain(e.to_string()))?;
        println!("wrote {}", a.out.join(&file).display());
    }
    m.write()?;
    Ok(0)
}
