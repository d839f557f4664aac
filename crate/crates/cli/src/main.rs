use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = sfq_cli::cli::Cli::parse();
    let code = match sfq_cli::cli::run(args) {
        Ok(()) => sfq_cli::error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
