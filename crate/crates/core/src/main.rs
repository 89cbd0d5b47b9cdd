fn main() {
    std::process::exit(modal_fp::cli::run_from(std::env::args_os()));
}
