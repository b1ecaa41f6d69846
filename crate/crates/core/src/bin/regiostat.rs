use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use regiostat::report::{self, Command, CommandError, PipelineConfig};
use regiostat::CobbDouglasMode;

#[derive(Parser)]
#[command(name = "regiostat", version, about = "Spatial econometrics for municipal panels")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Long-format panel file (.csv or .tsv).
    #[arg(long, global = true, env = "REGIOSTAT_INPUT")]
    input: Option<PathBuf>,
    /// GeoJSON FeatureCollection of region polygons.
    #[arg(long, global = true, env = "REGIOSTAT_GEOMETRY")]
    geometry: Option<PathBuf>,
    /// GAL neighbor file (used when --geometry is absent).
    #[arg(long, global = true, env = "REGIOSTAT_GAL")]
    gal: Option<PathBuf>,
    /// JSON path model.
    #[arg(long, global = true, env = "REGIOSTAT_MODEL")]
    model: Option<PathBuf>,
    /// Feature property holding the region code.
    #[arg(long, global = true, env = "REGIOSTAT_ID_PROPERTY", default_value = "code")]
    id_property: String,
    #[arg(long, global = true, env = "REGIOSTAT_SEED", default_value_t = report::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, env = "REGIOSTAT_PERMUTATIONS", default_value_t = report::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Bootstrap resamples (default 5000).
    #[arg(long, global = true, env = "REGIOSTAT_BOOTSTRAP")]
    bootstrap: Option<usize>,
    /// Significance levels, comma separated.
    #[arg(long, global = true, env = "REGIOSTAT_ALPHA", value_delimiter = ',', default_value = "0.05,0.01,0.001")]
    alpha: Vec<f64>,
    /// Blindfolding omission distance (default 7).
    #[arg(long, global = true, env = "REGIOSTAT_OMISSION_DISTANCE")]
    omission_distance: Option<usize>,
    #[arg(long, global = true, env = "REGIOSTAT_OUT", default_value = "regiostat-out")]
    out: PathBuf,
    /// Cobb-Douglas form: canonical, product or as_published.
    #[arg(long, global = true, env = "REGIOSTAT_MODE", default_value = "canonical")]
    mode: CobbDouglasMode,
    /// Fit the path model on one year instead of all region-years pooled.
    #[arg(long, global = true, env = "REGIOSTAT_PLS_YEAR")]
    pls_year: Option<i32>,
    /// Regression and bivariate LISA pairs as PRED:RESP, comma separated.
    #[arg(long, global = true, env = "REGIOSTAT_PAIRS", value_delimiter = ',', value_parser = parse_pair)]
    pairs: Option<Vec<(String, String)>>,
    /// Pairs regressed over all regions together.
    #[arg(long, global = true, env = "REGIOSTAT_WHOLE_PAIRS", value_delimiter = ',', value_parser = parse_pair)]
    whole_pairs: Option<Vec<(String, String)>>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    Describe,
    Standardize,
    Normality,
    Weights,
    Moran,
    Lisa,
    Plssem,
    Regress,
    Growth,
    /// All stages in order into numbered subdirectories.
    Pipeline,
    /// Re-hash a command's outputs (or a pipeline bundle) against its manifest.
    Validate,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once(':')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| format!("expected PREDICTOR:RESPONSE, got `{s}`"))
}

fn config(cli: &Cli) -> PipelineConfig {
    let defaults = PipelineConfig::default();
    PipelineConfig {
        panel: cli.input.clone(),
        geometry: cli.geometry.clone(),
        gal: cli.gal.clone(),
        model: cli.model.clone(),
        id_property: cli.id_property.clone(),
        seed: cli.seed,
        permutations: cli.permutations,
        bootstrap: cli.bootstrap,
        alpha: cli.alpha.clone(),
        out: cli.out.clone(),
        mode: cli.mode,
        omission_distance: cli.omission_distance,
        pls_year: cli.pls_year,
        pairs: cli.pairs.clone().unwrap_or(defaults.pairs),
        whole_pairs: cli.whole_pairs.clone().unwrap_or(defaults.whole_pairs),
        ..defaults
    }
}

fn run(cli: &Cli) -> Result<(), CommandError> {
    let cfg = config(cli);
    let single = |c: Command| report::run_command(c, &cfg).map(|m| println!("{}: {} files", m.command, m.outputs.len()));
    match cli.command {
        Cmd::Describe => single(Command::Describe),
        Cmd::Standardize => single(Command::Standardize),
        Cmd::Normality => single(Command::Normality),
        Cmd::Weights => single(Command::Weights),
        Cmd::Moran => single(Command::Moran),
        Cmd::Lisa => single(Command::Lisa),
        Cmd::Plssem => single(Command::Plssem),
        Cmd::Regress => single(Command::Regress),
        Cmd::Growth => single(Command::Growth),
        Cmd::Pipeline => report::cmd_pipeline(&cfg).map(|r| println!("pipeline: {} stages", r.stages.len())),
        Cmd::Validate => {
            let problems = if cfg.out.join(report::PIPELINE_FILE).exists() {
                report::validate_bundle(&cfg.out)?
            } else {
                report::validate_manifest(&cfg.out)?
            };
            if problems.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(CommandError::input("cli_report", "validate", problems.join("; "), problems))
            }
        }
    }
}

fn main() -> ExitCode {
    // usage errors are input errors (1), not internal ones
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record).expect("serializable record"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
