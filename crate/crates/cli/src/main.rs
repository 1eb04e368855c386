mod manifest;

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use printsim_core::capture::{self, Transaction};
use printsim_core::detector::{
    compare, DetectionReport, StreamCompare, StreamEvent, DEFAULT_MARGIN,
};
use printsim_core::firmware::FirmwareEvent;
use printsim_core::flaw3d::{table2_suite, MutationSpec, DEFAULT_OFFSET};
use printsim_core::pipeline::{self, Run};
use printsim_core::signals::ticks_to_seconds;
use printsim_core::trojans::Injection;
use printsim_core::{serialize, PrinterProfile, Program, TrojanConfig, TrojanId};

use manifest::{Artifacts, RunManifest};

const EXIT_TROJAN: u8 = 2;

#[derive(Parser)]
#[command(
    name = "printsim",
    version,
    about = "Simulated FFF printer with a Trojan board and step-count monitor"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print a g-code file: firmware, Trojans, motors, capture.
    Simulate(SimulateArgs),
    /// Compare an observed capture against a golden one.
    Detect(DetectArgs),
    /// Apply a Flaw3D-style mutation to a g-code file.
    Mutate(MutateArgs),
    /// Run all eight Flaw3D test cases against a golden print.
    Table2(Table2Args),
    /// Repeat a simulate run from its manifest.
    Rerun {
        manifest: PathBuf,
        /// Write to this directory instead of the one recorded.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a printer profile as TOML (the built-in default if no path).
    Profile { path: Option<PathBuf> },
}

#[derive(Args)]
struct SimulateArgs {
    gcode: PathBuf,
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Trojan configuration file (TOML).
    #[arg(long = "trojans")]
    trojan_config: Option<PathBuf>,
    /// Enable a Trojan with default parameters, e.g. `--trojan t2`.
    #[arg(long = "trojan", value_delimiter = ',')]
    trojans: Vec<TrojanId>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the full signal timeline (large).
    #[arg(long)]
    dump_timeline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct DetectArgs {
    /// Golden capture, CSV or `.bin`.
    golden: PathBuf,
    /// Observed capture, CSV or `.bin`; `-` streams CSV rows from stdin.
    observed: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    margin: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct MutateArgs {
    gcode: PathBuf,
    /// Scale extrusion by this factor.
    #[arg(long, conflicts_with = "relocate")]
    reduce: Option<f64>,
    /// Relocate the filament of every n-th extruding move.
    #[arg(long)]
    relocate: Option<u32>,
    /// Relocation offset in mm, `dx,dy`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    offset: Option<Vec<f64>>,
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Table2Args {
    gcode: PathBuf,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use this golden capture instead of simulating one.
    #[arg(long)]
    golden: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Detect(a) => cmd_detect(a),
        Cmd::Mutate(a) => cmd_mutate(a),
        Cmd::Table2(a) => cmd_table2(a),
        Cmd::Rerun { manifest, out } => cmd_rerun(&manifest, out),
        Cmd::Profile { path } => load_profile(path.as_deref()).map(|p| {
            print!("{}", p.to_toml());
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}

fn load_profile(path: Option<&Path>) -> Result<PrinterProfile> {
    let p = match path {
        Some(path) => {
            PrinterProfile::load(path).with_context(|| format!("profile {}", path.display()))?
        }
        None => PrinterProfile::default(),
    };
    p.validate()?;
    Ok(p)
}

fn load_gcode(path: &Path) -> Result<Program> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(printsim_core::gcode::parse_bytes(&bytes))
}

fn load_capture(path: &Path) -> Result<Vec<Transaction>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let txs = if path.extension().is_some_and(|e| e == "bin") {
        capture::decode_stream(&bytes)
    } else {
        capture::read_csv(&String::from_utf8_lossy(&bytes))
    };
    txs.with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct RunReport<'a> {
    completed: bool,
    homed_at_s: Option<f64>,
    firmware_events: &'a [FirmwareEvent],
    transactions: usize,
    final_counts: Option<[i64; 4]>,
    plant_steps: [i64; 4],
    ignored_steps: [u64; 4],
    hotend_temp: f64,
    bed_temp: f64,
    destroyed_at_s: Option<f64>,
    destroyed: Option<&'a str>,
}

fn run_report(run: &Run) -> RunReport<'_> {
    RunReport {
        completed: run.sim.completed(),
        homed_at_s: run.sim.homed_at.map(ticks_to_seconds),
        firmware_events: &run.sim.events,
        transactions: run.capture.len(),
        final_counts: run.capture.last().map(Transaction::counts),
        plant_steps: run.plant.final_steps,
        ignored_steps: run.plant.ignored_steps,
        hotend_temp: run.plant.final_state.hotend_temp,
        bed_temp: run.plant.final_state.bed_temp,
        destroyed_at_s: run.plant.destroyed_at.map(ticks_to_seconds),
        destroyed: run.plant.final_state.destroyed.as_deref(),
    }
}

fn execute(m: &RunManifest) -> Result<Run> {
    let profile = load_profile(m.profile.as_deref())?;
    let program = load_gcode(&m.gcode)?;
    if program.is_empty() {
        bail!("{}: no g-code", m.gcode.display());
    }
    let mut config = match &m.trojan_config {
        Some(path) => {
            TrojanConfig::load(path).with_context(|| format!("Trojan config {}", path.display()))?
        }
        None => TrojanConfig::bypass(),
    };
    for &id in &m.trojans {
        config.enable(id);
    }
    config.seed.get_or_insert(m.seed);
    let run = pipeline::run(&program, &profile, &config, m.seed)?;

    fs::create_dir_all(&m.out_dir).with_context(|| format!("creating {}", m.out_dir.display()))?;
    let a = &m.artifacts;
    let at = |p: &Path| m.out_dir.join(p);
    write(&at(&a.capture_csv), capture::write_csv(&run.capture))?;
    write(&at(&a.capture_bin), capture::encode_stream(&run.capture)?)?;
    write(
        &at(&a.report),
        serde_json::to_string_pretty(&run_report(&run))? + "\n",
    )?;
    write(
        &at(&a.trojan_log),
        serde_json::to_string_pretty::<[Injection]>(&run.trojans.log)? + "\n",
    )?;
    write(&at(&a.deposition), run.plant.deposition_csv())?;
    if let Some(t) = &a.timeline {
        write(&at(t), run.trojans.timeline.dump())?;
    }
    m.save()?;
    Ok(run)
}

fn summarize(m: &RunManifest, run: &Run) {
    println!(
        "{} transactions -> {}",
        run.capture.len(),
        m.out_dir.display()
    );
    if let Some(last) = run.capture.last() {
        println!(
            "final counts: X {} Y {} Z {} E {}",
            last.x, last.y, last.z, last.e
        );
    }
    if let Some(h) = run.sim.halted() {
        println!(
            "firmware halted at {:.1} s: {}",
            ticks_to_seconds(h.t),
            h.detail
        );
    }
    if let Some(d) = &run.plant.final_state.destroyed {
        println!("printer damaged: {d}");
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<ExitCode> {
    let m = RunManifest {
        gcode: a.gcode,
        profile: a.profile,
        trojan_config: a.trojan_config,
        trojans: a.trojans,
        seed: a.seed,
        out_dir: a.out,
        dump_timeline: a.dump_timeline,
        artifacts: Artifacts::standard(a.dump_timeline),
    };
    let run = execute(&m)?;
    summarize(&m, &run);
    Ok(ExitCode::SUCCESS)
}

fn cmd_rerun(path: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut m = RunManifest::load(path)?;
    if let Some(out) = out {
        m.out_dir = out;
    }
    let run = execute(&m)?;
    summarize(&m, &run);
    Ok(ExitCode::SUCCESS)
}

fn verdict_code(r: &DetectionReport) -> ExitCode {
    if r.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_TROJAN)
    }
}

fn cmd_detect(a: DetectArgs) -> Result<ExitCode> {
    let golden = load_capture(&a.golden)?;
    if a.observed.as_os_str() == "-" {
        return detect_stream(&golden, a.margin, a.format);
    }
    let observed = load_capture(&a.observed)?;
    let report = compare(&golden, &observed, a.margin)?;
    match a.format {
        Format::Text => print!("{report}"),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(verdict_code(&report))
}

fn detect_stream(golden: &[Transaction], margin: f64, format: Format) -> Result<ExitCode> {
    let mut s = StreamCompare::new(golden, margin)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (i, line) in io::stdin().lock().lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || (i == 0 && capture::is_csv_header(&line)) {
            continue;
        }
        let tx = capture::parse_csv_row(&line, i + 1)?;
        for ev in s.push(tx)? {
            if let Format::Text = format {
                match ev {
                    StreamEvent::Mismatch(m) => writeln!(out, "{m}")?,
                    StreamEvent::TrojanLikely { index } => {
                        writeln!(out, "Trojan likely! (first at index {index})")?
                    }
                }
            }
        }
        out.flush()?;
    }
    let report = s.finish();
    match format {
        Format::Text => write!(out, "{}", report.summary_text())?,
        Format::Json => writeln!(out, "{}", report.to_json())?,
    }
    Ok(verdict_code(&report))
}

fn cmd_mutate(a: MutateArgs) -> Result<ExitCode> {
    let mut spec = match (a.reduce, a.relocate) {
        (Some(f), None) => MutationSpec::reduction(f),
        (None, Some(n)) => MutationSpec::relocation(n),
        _ => bail!("no mutation selected (use --reduce or --relocate)"),
    };
    let offset = a.offset.map_or(DEFAULT_OFFSET, |o| (o[0], o[1]));
    spec.relocation_offset = offset;
    let profile = load_profile(a.profile.as_deref())?;
    let program = load_gcode(&a.gcode)?;
    let v = profile.build_volume;
    let text = serialize(&spec.apply(&program, [v[0], v[1]])?);
    match a.out {
        Some(path) => write(&path, text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_table2(a: Table2Args) -> Result<ExitCode> {
    let profile = load_profile(a.profile.as_deref())?;
    let program = load_gcode(&a.gcode)?;
    if !program.commands.iter().any(|c| c.is_move()) {
        bail!("{}: no g-code moves", a.gcode.display());
    }
    fs::create_dir_all(&a.out)?;
    let golden = match &a.golden {
        Some(path) => load_capture(path)?,
        None => {
            let g = pipeline::golden(&program, &profile, a.seed)?.capture;
            write(&a.out.join("golden.csv"), capture::write_csv(&g))?;
            g
        }
    };
    let v = profile.build_volume;
    let suite = table2_suite();
    // Each case gets its own plant and seed; they run side by side.
    let results: Vec<Result<(u32, MutationSpec, DetectionReport)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = suite
            .iter()
            .map(|&(id, spec)| {
                let (program, profile, golden, out) = (&program, &profile, &golden, &a.out);
                scope.spawn(move || -> Result<_> {
                    let mutated = spec.apply(program, [v[0], v[1]])?;
                    let run =
                        pipeline::golden(&mutated, profile, a.seed.wrapping_add(u64::from(id)))?;
                    let dir = out.join(format!("case{id}"));
                    fs::create_dir_all(&dir)?;
                    write(&dir.join("mutated.gcode"), serialize(&mutated))?;
                    write(&dir.join("capture.csv"), capture::write_csv(&run.capture))?;
                    let report = compare(golden, &run.capture, a.margin)?;
                    write(&dir.join("report.txt"), report.to_text())?;
                    Ok((id, spec, report))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("case thread panicked"))
            .collect()
    });

    let mut summary = String::from("case  type        value  mismatches  final check  detected\n");
    let mut missed = 0;
    for r in results {
        let (id, spec, report) = r?;
        let detected = !report.is_clean();
        missed += usize::from(!detected);
        summary.push_str(&format!(
            "{id:<5} {:<11} {:<6} {:<11} {:<12} {}\n",
            spec.type_name(),
            spec.value(),
            report.mismatches.len(),
            if report.final_check_passed {
                "passed"
            } else {
                "failed"
            },
            if detected { "yes" } else { "NO" }
        ));
    }
    summary.push_str(&format!("{}/8 detected\n", 8 - missed));
    print!("{summary}");
    write(&a.out.join("summary.txt"), &summary)?;
    Ok(if missed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_TROJAN)
    })
}
