fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELAPSE_LAB_LOG", "error")).init();
    std::process::exit(relapse_lab::cli::run(std::env::args_os()));
}
