fn main() {
    std::process::exit(chiller_dpc::harness::cli::run(std::env::args_os()));
}
