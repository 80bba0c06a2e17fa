fn main() {
    std::process::exit(slope_lab::expcli::cli::run_cli(std::env::args_os()));
}
