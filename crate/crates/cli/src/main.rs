use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use xlayer_core::adversary::{location_spoof_sweep, AdversaryCapabilities, Scenario, DEFAULT_SPOOF_DISTANCE_M};
use xlayer_core::config::RunConfig;
use xlayer_core::cost::{
    check_trends, emit_csv, key_entropy_report, random_positions, run_comparison, Approach, TRACE_DWELL_NS,
};
use xlayer_core::protocol::{run_session, Outcome, SessionOptions, SlaMode, WorldSpec, WorldTemplate};
use xlayer_core::radio::{generate_mobility_trace, rng_from_seed, Position};
use xlayer_core::zone::{load_radio_map, save_radio_map};

/// Cross-layer RSS-fingerprint and AKA authentication simulator.
///
/// Exit status: 0 on success, 1 when `--strict` is set and a domain check
/// fails, 2 on usage, configuration or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "xlayer", version)]
struct Cli {
    /// Config file of `key = value` lines; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// RNG seed; overrides the config seed (default 7).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Exit 1 on rejected sessions, adversary successes or broken cost trends.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the radio map for the default layout and write it out.
    GenMap(GenMapArgs),
    /// Run authentication sessions along mobility traces.
    RunAuth(RunAuthArgs),
    /// Run scripted attack scenarios.
    Attack(AttackArgs),
    /// Four-way computational cost comparison.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenMapArgs {
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunAuthArgs {
    /// centralized or decentralized (default from config: centralized).
    #[arg(long)]
    sla: Option<SlaMode>,
    /// Radio map to use instead of synthesizing one.
    #[arg(long, value_name = "FILE")]
    map: Option<PathBuf>,
    /// Per-message drop probability on the radio links.
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    /// Cells visited by each MT.
    #[arg(long, default_value_t = 8)]
    trace_len: usize,
    /// Number of MTs.
    #[arg(long, default_value_t = 1)]
    mts: u32,
    /// Run a full authentication in every cell.
    #[arg(long)]
    no_zone_cache: bool,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Scenario name, or `all`.
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Attempts per scenario (flood size for the DoS scenarios).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Let the observer recompute the fingerprint key from RSS on the wire.
    #[arg(long)]
    recompute_fingerprint: bool,
    /// Capabilities to withhold: observe-wire, inject, delay-replay, spoof-im.
    #[arg(long, value_delimiter = ',')]
    without: Vec<String>,
    /// Also print the false-reject / false-accept sweep over epsilon.
    #[arg(long)]
    sweep: bool,
    #[arg(long, value_name = "FILE")]
    map: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated approaches (default: all four).
    #[arg(long, value_delimiter = ',')]
    approaches: Vec<Approach>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    cells: Vec<usize>,
    /// Trace replays per (approach, cell count).
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long, value_name = "FILE", default_value = "report.csv")]
    out: PathBuf,
    /// Write 0 in the wall_ns column.
    #[arg(long)]
    no_wall: bool,
    /// Positions sampled for the key entropy report.
    #[arg(long, default_value_t = 1000)]
    entropy_positions: usize,
    #[arg(long, value_name = "FILE")]
    map: Option<PathBuf>,
}

/// Usage, configuration and I/O failures.
#[derive(Debug)]
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every domain check passed (or `--strict` is off).
fn run(cli: Cli) -> Result<bool, Fatal> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ok = match cli.command {
        Command::GenMap(a) => gen_map(&cfg, a)?,
        Command::RunAuth(a) => run_auth(&mut cfg, a)?,
        Command::Attack(a) => attack(&mut cfg, a)?,
        Command::Bench(a) => bench(&mut cfg, a)?,
    };
    Ok(ok || !cli.strict)
}

fn template(cfg: &RunConfig) -> Result<WorldTemplate, Fatal> {
    let spec = cfg.world_spec()?;
    Ok(match &cfg.map_path {
        Some(p) => WorldTemplate::with_map(&spec, load_radio_map(p)?)?,
        None => WorldTemplate::build(&spec)?,
    })
}

fn gen_map(cfg: &RunConfig, a: GenMapArgs) -> Result<bool, Fatal> {
    let spec: WorldSpec = cfg.world_spec()?;
    let (_, _, db) = WorldTemplate::synthesize_map(&spec)?;
    save_radio_map(db.records(), &a.out)?;
    println!("wrote {} records to {}", db.len(), a.out.display());
    Ok(true)
}

fn run_auth(cfg: &mut RunConfig, a: RunAuthArgs) -> Result<bool, Fatal> {
    if let Some(sla) = a.sla {
        cfg.sla = sla.to_string();
    }
    if a.map.is_some() {
        cfg.map_path = a.map;
    }
    if !(0.0..=1.0).contains(&a.drop) {
        return Err(Fatal(format!("--drop must be in [0, 1], got {}", a.drop)));
    }
    let sla = cfg.sla_mode()?;
    let tpl = template(cfg)?;
    let mut world = tpl.instantiate(a.mts);
    world.transport.uplink_drop = a.drop;
    world.transport.downlink_drop = a.drop;
    let mut rng = rng_from_seed(cfg.seed);
    let anchors: Vec<Position> = tpl.anchors.iter().map(|x| x.position).collect();
    let cell_order = tpl.zones.cell_order();
    let mut traces = Vec::new();
    for _ in 0..a.mts {
        traces.push(generate_mobility_trace(
            &tpl.env,
            &cell_order,
            &anchors,
            a.trace_len,
            TRACE_DWELL_NS,
            world.clock_ns,
            &mut rng,
        )?);
    }
    let opts = SessionOptions {
        use_zone_cache: !a.no_zone_cache,
        ..SessionOptions::cross_layer(sla)
    };
    let (mut full, mut fast, mut rejected, mut timed_out) = (0u64, 0u64, 0u64, 0u64);
    for step in 0..a.trace_len {
        for (mt, trace) in traces.iter().enumerate() {
            let p = trace.points[step];
            world.clock_ns = world.clock_ns.max(p.time_ns);
            let orientation = rng.gen_range(0..cfg.orientations.max(1));
            world.place_mt(mt as u32, p.position, orientation)?;
            let v = run_session(&mut world, mt as u32, p.zone_id, opts, &mut rng)?;
            let c = v.counters;
            println!(
                "session={} mt={} cell={} zone={} outcome={} reason={} messages={} bytes={} cipher_ops={} knn_evals={}",
                v.session,
                v.mt_id,
                p.cell_id,
                p.zone_id,
                v.outcome,
                v.reason,
                c.messages_sent,
                c.bytes_sent,
                c.cipher_block_ops,
                c.knn_distance_evals
            );
            match v.outcome {
                Outcome::MutualAuthSuccess => full += 1,
                Outcome::FastPathSuccess => fast += 1,
                Outcome::TimedOut => timed_out += 1,
                _ => rejected += 1,
            }
        }
    }
    println!(
        "summary sla={} sessions={} mutual_auth={} fast_path={} rejected={} timed_out={} epsilon_cdbm={:.1}",
        sla,
        full + fast + rejected + timed_out,
        full,
        fast,
        rejected,
        timed_out,
        tpl.params.epsilon_cdbm
    );
    Ok(rejected == 0 && timed_out == 0)
}

fn capabilities(a: &AttackArgs) -> Result<AdversaryCapabilities, Fatal> {
    let mut caps = AdversaryCapabilities::standard();
    if a.recompute_fingerprint {
        caps = caps.with_recompute();
    }
    for w in &a.without {
        match w.as_str() {
            "observe-wire" => caps.observe_wire = false,
            "inject" => caps.inject = false,
            "delay-replay" => caps.delay_replay = false,
            "spoof-im" => caps.spoof_im = false,
            other => return Err(Fatal(format!("unknown capability {other:?}"))),
        }
    }
    if !caps.observe_wire {
        caps.recompute_fingerprint = false;
    }
    Ok(caps)
}

fn attack(cfg: &mut RunConfig, a: AttackArgs) -> Result<bool, Fatal> {
    if a.map.is_some() {
        cfg.map_path = a.map.clone();
    }
    let scenarios: Vec<Scenario> = if a.scenario == "all" {
        Scenario::ALL.to_vec()
    } else {
        vec![a.scenario.parse().map_err(Fatal)?]
    };
    let caps = capabilities(&a)?;
    let tpl = template(cfg)?;
    let mut clean = true;
    for s in scenarios {
        let report = s.run(&tpl, &caps, a.n, cfg.seed)?;
        print!("{report}");
        println!("{}", report.machine_line());
        println!();
        // a successful spoof from a mapped location is the intended behaviour
        if report.successes > 0 && s != Scenario::LocationSpoofAtVictim {
            clean = false;
        }
    }
    if a.sweep {
        let eps = tpl.params.epsilon_cdbm;
        let grid: Vec<f64> = [0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 2.0, 3.0]
            .iter()
            .map(|f| f * eps)
            .collect();
        println!("epsilon sweep ({} legit / {} impostor queries, impostors >= {} m outside):", a.n, a.n, DEFAULT_SPOOF_DISTANCE_M);
        println!("epsilon_cdbm,false_reject_rate,false_accept_rate");
        for r in location_spoof_sweep(&tpl, a.n, DEFAULT_SPOOF_DISTANCE_M, &grid, cfg.seed)? {
            println!("{:.1},{:.4},{:.4}", r.epsilon, r.false_reject_rate, r.false_accept_rate);
        }
    }
    Ok(clean)
}

fn bench(cfg: &mut RunConfig, a: BenchArgs) -> Result<bool, Fatal> {
    if a.map.is_some() {
        cfg.map_path = a.map.clone();
    }
    let approaches = if a.approaches.is_empty() {
        Approach::ALL.to_vec()
    } else {
        a.approaches.clone()
    };
    let tpl = template(cfg)?;
    let table = run_comparison(&tpl, &approaches, &a.cells, a.rounds, cfg.seed)?;
    emit_csv(&table, &a.out, !a.no_wall)?;
    println!("wrote {} rows to {}", table.rows.len(), a.out.display());
    for r in table.rows.iter() {
        println!(
            "{} cells={} full_auths={} fast_paths={} retries={} failures={} zones_visited={} compute_ops={}",
            r.approach,
            r.cells,
            r.full_auths,
            r.fast_paths,
            r.retries,
            r.failures,
            r.zones_visited,
            r.counters.compute_ops()
        );
    }
    let violations = if approaches.len() == Approach::ALL.len() {
        check_trends(&table)
    } else {
        Vec::new()
    };
    for v in &violations {
        println!("trend violation: {v}");
    }
    if a.entropy_positions > 0 {
        let (w, h) = tpl.env.bounds();
        let mut rng = rng_from_seed(cfg.seed ^ 0x0065_6e74_726f_7079);
        let positions = random_positions(w, h, a.entropy_positions, &mut rng);
        let env_cfg = cfg.env_config()?;
        println!("sigma_cdbm,samples,distinct_means,min_mean_cdbm,max_mean_cdbm,entropy_bits");
        for r in key_entropy_report(&env_cfg, &positions, &[0, 200, 400], cfg.seed)? {
            println!(
                "{},{},{},{},{},{:.4}",
                r.sigma_cdbm, r.samples, r.distinct_means, r.min_mean_cdbm, r.max_mean_cdbm, r.entropy_bits
            );
        }
    }
    Ok(violations.is_empty())
}
