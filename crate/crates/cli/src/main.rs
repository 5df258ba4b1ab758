use clap::Parser;
use intensity_lasso_cli::Cli;

fn main() {
    let cli = Cli::parse();
    std::process::exit(intensity_lasso_cli::run(&cli));
}
