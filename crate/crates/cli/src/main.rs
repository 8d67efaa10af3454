use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rationale_bench_cli::commands::{self, REPORT_JSON};
use rationale_bench_cli::config::ConfigArgs;
use rationale_bench_cli::serve::{self, ServeOptions, IMAGE_ROOT_ENV};

#[derive(Parser)]
#[command(
    name = "rationale-bench",
    version,
    about = "Evaluate and curate explanatory VQA rationales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against a rationale dataset.
    Eval(ConfigArgs),
    /// Build a review queue from question/answer/explanation triplets.
    Synth(ConfigArgs),
    #[command(subcommand)]
    Review(ReviewCommand),
    #[command(subcommand)]
    Kernels(KernelsCommand),
    /// Print a saved report.
    Report {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum ReviewCommand {
    /// Serve the review API (and optionally a static UI bundle).
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        queue: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long, env = IMAGE_ROOT_ENV)]
        image_root: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Replay a decision log and write the accepted samples as a dataset.
    Apply {
        #[arg(long)]
        queue: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum KernelsCommand {
    /// Run the numeric invariant suite.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Eval(args) => {
            let config = args.resolve()?;
            let report = commands::eval(&config)?;
            print!("{}", report.render_table());
            eprintln!(
                "report written to {}",
                config.output_dir().join(REPORT_JSON).display()
            );
        }
        Command::Synth(args) => {
            let config = args.resolve()?;
            let summary = commands::synth(&config)?;
            println!(
                "nouns: {} distinct, {} occurrences, {} above min count {}",
                summary.nouns_seen,
                summary.noun_occurrences,
                summary.frequent_nouns.len(),
                config.min_count()
            );
            for (noun, count) in &summary.top_nouns {
                println!("  {noun:<16} {count}");
            }
            let d = summary.drafts;
            println!(
                "drafts: {} images, {} QA pairs, {} textual rationales, {} candidate boxes",
                d.num_images, d.num_qa_pairs, d.num_textual_rationales, d.num_visual_rationales
            );
            if !summary.unmapped_nouns.is_empty() {
                println!(
                    "frequent nouns without a category: {}",
                    summary.unmapped_nouns.join(", ")
                );
            }
            for id in &summary.unresolved_records {
                eprintln!("unresolved image for record {id}");
            }
            println!(
                "queued {} items in {}",
                summary.queued,
                summary.queue_path.display()
            );
        }
        Command::Review(ReviewCommand::Serve {
            port,
            host,
            queue,
            decisions,
            image_root,
            static_dir,
        }) => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve::serve(ServeOptions {
                host,
                port,
                queue,
                decisions,
                image_root,
                static_dir,
            }))?;
        }
        Command::Review(ReviewCommand::Apply {
            queue,
            decisions,
            output,
        }) => {
            let summary = commands::review_apply(&queue, &decisions, &output)?;
            for r in &summary.rejected {
                eprintln!("skipped decision {r}");
            }
            let s = summary.stats;
            println!(
                "applied {} decisions; dataset: {} images, {} QA pairs, {} textual rationales, {} visual rationales",
                summary.applied, s.num_images, s.num_qa_pairs, s.num_textual_rationales, s.num_visual_rationales
            );
        }
        Command::Kernels(KernelsCommand::Check { seed, json }) => {
            let report = commands::kernels_check(seed);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", commands::render_check(&report));
            }
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { input, format } => {
            let report = commands::load_report(&input)?;
            match format {
                Format::Table => print!("{}", report.render_table()),
                Format::Json => print!("{}", report.to_json()?),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
