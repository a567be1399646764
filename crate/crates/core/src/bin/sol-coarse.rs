fn main() {
    std::process::exit(sol_coarse::cli::run(std::env::args_os()));
}
