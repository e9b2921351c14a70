fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = mutadetect::cli::init_threads() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
    let code = mutadetect::cli::main_with_args(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
