fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EMOTRANS_LOG", "warn")).init();
    let code = emotrans_cli::run(std::env::args_os(), std::env::vars());
    std::process::exit(code);
}
