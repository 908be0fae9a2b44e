use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ecf8::codec::DEFAULT_THREADS_PER_BLOCK;
use ecf8::{container, synth, Error, Result};

#[derive(Parser)]
#[command(name = "ecf8", version, about = "Lossless FP8 weight compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a raw FP8 tensor file into an ECF8 container.
    Compress {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THREADS_PER_BLOCK)]
        threads_per_block: u32,
    },
    /// Restore the raw tensor file from an ECF8 container.
    Decompress { input: PathBuf, output: PathBuf },
    /// Check that the parallel and sequential decoders reproduce every tensor.
    Verify {
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,32,256")]
        threads_per_block_list: Vec<u32>,
    },
    /// Per-tensor exponent entropy and projected savings.
    Stats {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Write a synthetic alpha-stable FP8 tensor.
    Synth {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Compress {
            input,
            output,
            threads_per_block,
        } => {
            let summary = container::compress(&input, &output, threads_per_block)?;
            for t in &summary.tensors {
                writeln!(
                    out,
                    "{}\t{} -> {} bytes\tratio {:.4}\t{:.4} bits/exponent",
                    t.name, t.original_bytes, t.compressed_bytes, t.ratio, t.bits_per_symbol
                )?;
            }
            writeln!(
                out,
                "total\t{} -> {} bytes\tsavings {:.2}%",
                summary.original_bytes,
                summary.compressed_bytes,
                100.0 * summary.savings()
            )?;
        }
        Command::Decompress { input, output } => {
            let stats = container::decompress(&input, &output)?;
            writeln!(
                out,
                "{} tensors, decode buffer {} bytes",
                stats.tensors, stats.buffer_capacity
            )?;
        }
        Command::Verify {
            input,
            threads_per_block_list,
        } => {
            let outcomes = container::verify(&input, &threads_per_block_list)?;
            let mut failure = None;
            for o in &outcomes {
                match o.first_mismatch {
                    None => writeln!(out, "PASS\t{}\tT={}", o.tensor, o.threads_per_block)?,
                    Some(i) => {
                        writeln!(
                            out,
                            "FAIL\t{}\tT={}\tindex {}",
                            o.tensor, o.threads_per_block, i
                        )?;
                        failure.get_or_insert(Error::Mismatch {
                            tensor: o.tensor.clone(),
                            threads_per_block: o.threads_per_block,
                            index: i,
                        });
                    }
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
        }
        Command::Stats { input, format } => {
            let reports = container::stats(&input)?;
            match format {
                Format::Csv => container::write_stats_csv(&reports, &mut out)?,
                Format::Json => container::write_stats_json(&reports, &mut out)?,
            }
        }
        Command::Synth {
            alpha,
            gamma,
            n,
            seed,
            output,
        } => {
            synth::synth(alpha, gamma, n, seed)?.save(&output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ecf8: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
