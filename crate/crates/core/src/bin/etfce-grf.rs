fn main() {
    std::process::exit(etfce_grf::cli::main_with_args(std::env::args_os()));
}
