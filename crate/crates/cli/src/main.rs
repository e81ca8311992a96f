use rigidlab_cli::{emit_report, parse_config, run};

fn main() {
    let budget = std::env::var(rigidlab::budget::BUDGET_ENV).ok();
    let config = match parse_config(std::env::args_os(), budget.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { rigidlab_cli::EXIT_USAGE } else { 0 });
        }
    };
    let result = run(&config).and_then(|r| emit_report(&r, config.cli.output.out.as_deref(), config.cli.output.format));
    if let Err(e) = result {
        eprintln!("rigidlab: {e}");
        std::process::exit(e.exit_code());
    }
}
