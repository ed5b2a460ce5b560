fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RMDP_LOG", "warn")).init();
    let code = rmdp::cli::run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
