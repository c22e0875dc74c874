use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};
use mrcbench::ingest::{convert, corpus_stats, sample_subset, SampleSpec};
use mrcbench::io::{read_jsonl, write_jsonl};
use mrcbench::prompt::{PlaceholderProfile, PromptEngine, StrategyConfig, TemplateSet};
use mrcbench::runner::{
    emit_report_table, export_qualitative_sample, load_instances, read_worksheet, run_experiment, tally_qualitative,
    write_worksheet, ExperimentConfig, RunReport,
};
use mrcbench::{DatasetTag, MrcInstance, Ratio, Strategy};

#[derive(Parser)]
#[command(name = "mrcbench", version, about = "Prompting-strategy evaluation for biomedical reading comprehension")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset in its distributed layout to canonical JSONL.
    Convert {
        #[arg(long)]
        dataset: DatasetTag,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Corpus statistics of canonical JSONL files.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Draw a seeded subset of a canonical JSONL file.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Run an experiment config. Exits non-zero if any instance failed.
    Run {
        config: PathBuf,
    },
    /// Comparison table over finished run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Annotation worksheet for a sample of an Implicit RAG run.
    QualExport {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Tally a judged worksheet.
    QualTally {
        worksheet: PathBuf,
    },
    /// Prompt utilities.
    Prompt {
        #[command(subcommand)]
        command: PromptCommand,
    },
}

#[derive(Subcommand)]
enum PromptCommand {
    /// Print the rendered prompt for one instance.
    Preview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "basic")]
        strategy: Strategy,
        /// Template directory to use instead of the built-in templates.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
}

fn read_instances(path: &Path) -> Result<Vec<MrcInstance>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Convert { dataset, input, output } => {
            let conversion = convert(dataset, &input)?;
            for w in &conversion.warnings {
                eprintln!("warning: {w}");
            }
            write_jsonl(&output, &conversion.records)?;
            println!(
                "{} instances written to {} ({} warnings)",
                conversion.records.len(),
                output.display(),
                conversion.warnings.len()
            );
        }
        Command::Stats { inputs } => {
            for path in inputs {
                let records = read_instances(&path)?;
                let label = records
                    .first()
                    .map(|r| r.dataset.display_name().to_string())
                    .unwrap_or_else(|| path.display().to_string());
                println!("{}", corpus_stats(&records)?.table_row(&label));
            }
        }
        Command::Sample { input, output, size, seed } => {
            let records = read_instances(&input)?;
            let picked = sample_subset(&records, SampleSpec { size, seed })?;
            write_jsonl(&output, &picked)?;
            println!("{} of {} instances written to {}", picked.len(), records.len(), output.display());
        }
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = run_experiment(&config)?;
            print!("{}", emit_report_table(std::slice::from_ref(&report))?);
            println!(
                "{} instances, {} scored, {} failed; results in {}",
                report.instances,
                report.scored,
                report.failed,
                config.output_dir.display()
            );
            for f in &report.failures {
                eprintln!("failed: {}: {}", f.instance_id, f.error);
            }
            if report.failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { runs } => {
            let reports = runs
                .iter()
                .map(|d| RunReport::load(d).with_context(|| format!("loading run {}", d.display())))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", emit_report_table(&reports)?);
        }
        Command::QualExport { run, n, seed, output } => {
            let report = RunReport::load(&run)?;
            let instances = load_instances(&report.config)?;
            let rows = export_qualitative_sample(&instances, &report.predictions, n, seed)?;
            write_worksheet(&output, &rows)?;
            println!("{} rows written to {}", rows.len(), output.display());
        }
        Command::QualTally { worksheet } => {
            let rows = read_worksheet(&worksheet)?;
            print!("{}", tally_qualitative::<Ratio<i64>>(&rows)?.render());
        }
        Command::Prompt {
            command: PromptCommand::Preview { input, id, strategy, templates },
        } => {
            let records = read_instances(&input)?;
            let Some(instance) = records.iter().find(|r| r.id == id) else {
                bail!("no instance '{id}' in {}", input.display());
            };
            let engine = match templates {
                Some(dir) => PromptEngine::new(TemplateSet::load_dir(&dir)?),
                None => PromptEngine::default(),
            };
            let profile = PlaceholderProfile::for_dataset(instance.dataset);
            let cfg = StrategyConfig::for_dataset(strategy, instance.dataset);
            print!("{}", engine.render_for(instance, &profile, &cfg)?.text);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

