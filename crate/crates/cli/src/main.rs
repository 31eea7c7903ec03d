use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use wellscatter_cli::config::{build, Document};
use wellscatter_cli::{emit_figure_recipes, execute};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Run1d,
    Run2d,
    Oracle,
    Analyze,
    Compare,
    /// Write one config file per figure into `--out` (default `recipes`).
    Recipes,
}

#[derive(Debug, Parser)]
#[command(name = "wellscatter", version, about = "Wave-packet scattering off attractive wells")]
struct Cli {
    #[arg(value_enum)]
    mode: Command,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Recipes = cli.mode {
        let dir = cli.out.unwrap_or_else(|| PathBuf::from("recipes"));
        return match emit_figure_recipes(&dir) {
            Ok(paths) => {
                println!("wrote {} recipes to {}", paths.len(), dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        };
    }
    let Some(path) = cli.config else {
        return config_error("--config is required");
    };
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return config_error(format!("{}: {e}", path.display())),
    };
    let mut doc = match Document::parse(&text) {
        Ok(d) => d,
        Err(e) => return config_error(format!("{}: {e}", path.display())),
    };
    let mode = cli.mode.to_possible_value().expect("named variant").get_name().to_owned();
    let file_mode = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .take_while(|l| !l.starts_with('['))
        .find_map(|l| l.split_once('=').filter(|(k, _)| k.trim() == "mode").map(|(_, v)| v.trim().to_owned()));
    if let Some(fm) = file_mode.filter(|fm| *fm != mode) {
        return config_error(format!("command `{mode}` contradicts `mode = {fm}` in {}", path.display()));
    }
    let mut overrides = vec![format!("mode={mode}")];
    if let Some(out) = &cli.out {
        overrides.push(format!("output.dir={}", out.display()));
    }
    overrides.extend(cli.overrides);
    for o in &overrides {
        if let Err(e) = doc.apply_override(o) {
            return config_error(e);
        }
    }
    let config = match build(&doc) {
        Ok(c) => c,
        Err(e) => return config_error(format!("{}: {e}", path.display())),
    };
    match execute(&config) {
        Ok(manifest) => {
            for g in &manifest.gates {
                println!("{} = {:.3e} (limit {:.0e}) {}", g.name, g.value, g.limit, if g.passed() { "pass" } else { "FAIL" });
            }
            println!("wrote {} files to {}", manifest.files.len() + 1, config.output_dir.display());
            if manifest.all_gates_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
