use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bwcc::bench::{run_suite, DEFAULT_SEED};
use bwcc::driver::compile;
use bwcc::machine::{load_machine_description, MachineDesc};
use bwcc::sim::{self, cycle_report, parse_assembly, DataImage, SimState};

#[derive(Parser)]
#[command(name = "bwcc", version, about = "MACC-synthesizing compiler and cycle simulator for a clustered VLIW DSP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a source file to assembly.
    Compile {
        source: PathBuf,
        /// Machine description file (default: the built-in 4-cluster description).
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Skip MACC synthesis (baseline build).
        #[arg(long)]
        no_macc: bool,
        /// Print the loop IR before and after the MACC pass to stderr.
        #[arg(long)]
        dump_ir: bool,
        /// Assembly output file (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the program's initial data image here.
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
    /// Assemble and simulate a program.
    Run {
        asm: PathBuf,
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Initial data image; its symbols are bound before `--bind`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Bind a symbol to a word address, `name=addr`.
        #[arg(long, value_parser = parse_bind)]
        bind: Vec<(String, u32)>,
        #[arg(long, value_enum, default_value_t = RunReport::Text)]
        report: RunReport,
        /// Write one line per executed bundle: index, label, cost, taken.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the final data image here.
        #[arg(long)]
        data_out: Option<PathBuf>,
        #[arg(long, default_value_t = sim::DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Run a benchmark suite.
    Bench {
        #[arg(long, default_value = "table1")]
        suite: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BenchFormat::Markdown)]
        report: BenchFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RunReport {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchFormat {
    Markdown,
    Json,
}

fn parse_bind(s: &str) -> Result<(String, u32), String> {
    let (name, addr) = s.split_once('=').ok_or("expected name=addr")?;
    let addr = addr.trim().parse().map_err(|_| format!("bad address `{addr}`"))?;
    Ok((name.trim().to_string(), addr))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn machine(path: Option<&Path>) -> Result<MachineDesc> {
    match path {
        Some(p) => load_machine_description(&read(p)?).with_context(|| format!("loading {}", p.display())),
        None => Ok(MachineDesc::default_bw()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Compile { source, machine: m, no_macc, dump_ir, output, data_out } => {
            let desc = machine(m.as_deref())?;
            let c = compile(&read(&source)?, &desc, !no_macc)?;
            if dump_ir {
                eprintln!("== loop IR before MACC synthesis ==\n{}", c.ir_before);
                eprintln!("== loop IR after MACC synthesis ==\n{}", c.ir);
                for l in &c.report.loops {
                    eprintln!(
                        "loop {:?}: {} accumulations, {:?}, factor {}, {} MACC registers{}",
                        l.loop_id,
                        l.matches,
                        l.mode,
                        l.vector_factor,
                        l.macc_regs_used,
                        l.note.as_ref().map(|n| format!(" ({n})")).unwrap_or_default()
                    );
                }
            }
            write_or_print(output.as_deref(), &c.asm)?;
            if let Some(p) = data_out {
                fs::write(&p, c.image.to_text()).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Run { asm, machine: m, data, bind, report, trace, data_out, fuel } => {
            let desc = machine(m.as_deref())?;
            let image = match data {
                Some(p) => DataImage::parse(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => DataImage::default(),
            };
            let mut symbols: BTreeMap<String, u32> = image.addresses();
            symbols.extend(bind);
            let program = parse_assembly(&read(&asm)?, &desc)?.link(&symbols)?;
            let init = SimState::from_image(&desc, &image);
            let (state, steps) = if trace.is_some() {
                sim::run_traced(&program, init, &desc, fuel)?
            } else {
                (sim::run(&program, init, &desc, fuel)?, Vec::new())
            };
            let r = cycle_report(&state);
            match report {
                RunReport::Text => print!("{r}"),
                RunReport::Json => println!("{}", r.to_json()),
            }
            if let Some(p) = trace {
                let mut text = String::new();
                for t in &steps {
                    let label =
                        program.labels.iter().rev().find(|(_, i)| *i <= t.pc).map_or(sim::ENTRY_LABEL, |(l, _)| l);
                    let _ = writeln!(text, "{} {} {} {}", t.pc, label, t.cost, u8::from(t.taken));
                }
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = data_out {
                let out = DataImage { symbols: image.symbols.clone(), words: state.memory };
                fs::write(&p, out.to_text()).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Bench { suite, seed, machine: m, report, out } => {
            let desc = machine(m.as_deref())?;
            let r = run_suite(&suite, seed, &desc)?;
            let text = match report {
                BenchFormat::Markdown => r.to_markdown(),
                BenchFormat::Json => format!("{}\n", r.to_json()),
            };
            write_or_print(out.as_deref(), &text)?;
            if !r.pass {
                bail!("suite `{suite}` failed");
            }
        }
    }
    Ok(())
}
