fn main() {
    std::process::exit(avpred_cli::run(std::env::args_os()));
}
