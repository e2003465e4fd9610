use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rsma_core::fbl::FblParams;
use rsma_core::harness::oracle::{best_decoding_order, siso_noma_grid};
use rsma_core::harness::{
    aggregate, rows_to_csv, rows_to_jsonl, run_sweep, run_sweep_resumable, strongest_users,
    summaries_to_csv, ExperimentSpec, GroupKey, Metric, OutputFormat, SavedDesign, WORKERS_ENV,
};
use rsma_core::linalg::{CMat, C64};
use rsma_core::model::{
    generate_rayleigh_channels, ChannelRealization, NoiseNorm, SchemeKind, SystemConfig,
};
use rsma_core::phy::{
    design_stream_rates, max_min_throughput, simulate_frames, LinkPlan, LinkSettings,
};
use rsma_core::sca::{solve_mmf, AoSettings, InitStrategy};

/// Exit status when some sweep rows failed.
const PARTIAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "rsma",
    version,
    about = "Uplink MIMO rate-splitting design and link-level simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize precoders and combiners for one channel draw.
    Optimize(OptimizeArgs),
    /// Run a Monte-Carlo sweep described by a JSON spec.
    Sweep(SweepArgs),
    /// Run link-level frames on a design saved by `optimize --save`.
    Lls(LlsArgs),
    /// Brute-force checks on small instances.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Rsma,
    Noma,
    Sdma,
}

impl From<Scheme> for SchemeKind {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Rsma => SchemeKind::Rsma,
            Scheme::Noma => SchemeKind::Noma,
            Scheme::Sdma => SchemeKind::Sdma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    SvdMmse,
    NomaWarmStart,
    Multistart,
}

#[derive(Args)]
struct SystemArgs {
    #[arg(long, default_value_t = 2)]
    users: usize,
    #[arg(long, default_value_t = 2)]
    tx: usize,
    #[arg(long, default_value_t = 2)]
    rx: usize,
    #[arg(long, default_value_t = 20.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 500.0)]
    blocklength: f64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = Scheme::Rsma)]
    scheme: Scheme,
    /// Splitting users (RSMA), comma separated. Defaults to the
    /// `--split-count` strongest users.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    split_count: usize,
    /// Use the unsquared combiner norm in the noise term.
    #[arg(long)]
    euclidean_noise: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SystemArgs {
    fn config(&self, channels: Option<&ChannelRealization>) -> Result<SystemConfig> {
        let base = SystemConfig::new(self.users, self.tx, self.rx, 1.0)
            .with_snr_db(self.snr_db)
            .with_blocklength(self.blocklength)
            .with_epsilon(self.epsilon);
        let scheme: SchemeKind = self.scheme.into();
        let split = match (&self.split, scheme, channels) {
            (_, SchemeKind::Noma | SchemeKind::Sdma, _) => vec![],
            (Some(s), _, _) => s.clone(),
            (None, _, Some(ch)) => strongest_users(ch, self.split_count),
            (None, _, None) => vec![],
        };
        let mut config = base.with_scheme(scheme, split);
        if self.euclidean_noise {
            config.noise_norm = NoiseNorm::Euclidean;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, value_enum, default_value_t = Init::Multistart)]
    init: Init,
    /// Write the design (config, channel, order, state) as JSON.
    #[arg(long)]
    save: Option<PathBuf>,
    /// Print the full outcome as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment spec (JSON).
    spec: PathBuf,
    /// Output file; overrides the spec. A `.jsonl` sweep resumes from rows
    /// already in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct LlsArgs {
    /// Design written by `optimize --save`.
    design: PathBuf,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    list_size: usize,
    #[arg(long, default_value_t = 0)]
    crc: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[command(subcommand)]
    kind: OracleKind,
}

#[derive(Subcommand)]
enum OracleKind {
    /// Two single-antenna users: grid search against the optimizer.
    Grid {
        #[arg(long, default_value_t = 1.2)]
        h1: f64,
        #[arg(long, default_value_t = 0.8)]
        h2: f64,
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 500.0)]
        blocklength: f64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Every decoding order against the default one.
    Orders {
        #[command(flatten)]
        system: SystemArgs,
    },
}

fn optimize(args: &OptimizeArgs) -> Result<()> {
    let probe = args.system.config(None)?;
    let channels = generate_rayleigh_channels(&probe, args.system.seed);
    let config = args.system.config(Some(&channels))?;
    let fbl = FblParams::from_config(&config)?;
    let settings = AoSettings {
        init: match args.init {
            Init::SvdMmse => InitStrategy::SvdMmse,
            Init::NomaWarmStart => InitStrategy::NomaWarmStart,
            Init::Multistart => InitStrategy::Multistart,
        },
        ..AoSettings::default()
    };
    let out = solve_mmf(&channels, &config, &fbl, &settings)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("scheme       {}", config.scheme);
        println!("split set    {:?}", config.split_set);
        println!(
            "order        {:?}",
            out.order
                .entries
                .iter()
                .map(|e| (e.user, e.part))
                .collect::<Vec<_>>()
        );
        println!("status       {:?}", out.status);
        println!("iterations   {}", out.iterations());
        println!("mmf          {:.6}", out.mmf());
        println!("user rates   {:?}", out.report.per_user);
    }
    if let Some(path) = &args.save {
        let saved = SavedDesign {
            config,
            channels,
            order: out.order.clone(),
            state: out.state.clone(),
            mmf: out.mmf(),
        };
        std::fs::write(path, saved.to_json()?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<bool> {
    let mut spec = ExperimentSpec::load(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    if let Some(out) = &args.out {
        let format = match args.format {
            Some(Format::Csv) => OutputFormat::Csv,
            Some(Format::Jsonl) => OutputFormat::Jsonl,
            None if out.extension().is_some_and(|e| e == "jsonl") => OutputFormat::Jsonl,
            None => OutputFormat::Csv,
        };
        spec.output = Some(rsma_core::harness::OutputSpec {
            path: out.clone(),
            format,
        });
    }
    let rows = match &spec.output {
        Some(o) if o.format == OutputFormat::Jsonl => {
            run_sweep_resumable(&spec, &o.path, args.workers)?
        }
        Some(o) => {
            let rows = run_sweep(&spec, args.workers)?;
            std::fs::write(&o.path, rows_to_csv(&rows)?)?;
            rows
        }
        None => {
            let rows = run_sweep(&spec, args.workers)?;
            print!("{}", rows_to_jsonl(&rows)?);
            rows
        }
    };
    let by = [
        GroupKey::Scheme,
        GroupKey::SnrDb,
        GroupKey::Blocklength,
        GroupKey::SplitCount,
    ];
    let failed = rows.iter().filter(|r| r.failed()).count();
    if rows.len() > failed {
        eprint!(
            "{}",
            summaries_to_csv(&by, &aggregate(&rows, &by, Metric::Mmf)?)?
        );
    }
    if failed > 0 {
        eprintln!("{failed} of {} rows failed", rows.len());
    }
    Ok(failed == 0)
}

fn lls(args: &LlsArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.design)
        .with_context(|| format!("reading {}", args.design.display()))?;
    let d = SavedDesign::from_json(&text)?;
    let settings = LinkSettings {
        list_size: args.list_size,
        crc_length: args.crc,
        ..LinkSettings::default()
    };
    let rates = design_stream_rates(&d.channels, &d.state.p, &d.state.g, &d.order, &d.config)?;
    let plan = LinkPlan::from_rates(&rates, &settings)?;
    let frames = simulate_frames(
        &plan,
        &d.channels,
        &d.state.p,
        &d.order,
        &d.config,
        d.config.noise_var,
        args.frames,
        args.seed,
    )?;
    let tput = max_min_throughput(&frames)?;
    let ok = frames
        .iter()
        .flat_map(|f| f.success.iter().flatten())
        .filter(|&&s| s)
        .count();
    let total = frames
        .iter()
        .map(|f| f.success.iter().flatten().count())
        .sum::<usize>();
    println!("design mmf          {:.6}", d.mmf);
    println!(
        "planned efficiency  {:?}",
        plan.user_spectral_efficiency(&d.order, d.config.users)
    );
    println!("stream successes    {ok}/{total}");
    println!("max-min throughput  {tput:.6}");
    Ok(())
}

fn oracle(args: &OracleArgs) -> Result<()> {
    match &args.kind {
        OracleKind::Grid {
            h1,
            h2,
            snr_db,
            blocklength,
            epsilon,
            points,
        } => {
            let config = SystemConfig::new(2, 1, 1, 1.0)
                .with_snr_db(*snr_db)
                .with_blocklength(*blocklength)
                .with_epsilon(*epsilon);
            let fbl = FblParams::from_config(&config)?;
            let grid = siso_noma_grid([*h1, *h2], &config, &fbl, *points)?;
            let channels = ChannelRealization::from_matrices(vec![
                CMat::from_element(1, 1, C64::new(*h1, 0.0)),
                CMat::from_element(1, 1, C64::new(*h2, 0.0)),
            ]);
            let noma = solve_mmf(&channels, &config, &fbl, &AoSettings::default())?;
            println!(
                "grid mmf       {:.6}  amplitudes {:?}",
                grid.mmf, grid.amplitudes
            );
            println!("optimizer mmf  {:.6}", noma.mmf());
            println!(
                "relative gap   {:.3}%",
                (grid.mmf - noma.mmf()) / grid.mmf * 100.0
            );
        }
        OracleKind::Orders { system } => {
            let probe = system.config(None)?;
            let channels = generate_rayleigh_channels(&probe, system.seed);
            let config = system.config(Some(&channels))?;
            let fbl = FblParams::from_config(&config)?;
            let settings = AoSettings::default();
            let default = solve_mmf(&channels, &config, &fbl, &settings)?;
            let (order, best) = best_decoding_order(&channels, &config, &fbl, &settings)?;
            println!("default order mmf  {:.6}", default.mmf());
            println!("best order mmf     {:.6}", best.mmf());
            println!(
                "best order         {:?}",
                order
                    .entries
                    .iter()
                    .map(|e| (e.user, e.part))
                    .collect::<Vec<_>>()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Optimize(a) => optimize(a).map(|_| true),
        Command::Sweep(a) => sweep(a),
        Command::Lls(a) => lls(a).map(|_| true),
        Command::Oracle(a) => oracle(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(PARTIAL_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
