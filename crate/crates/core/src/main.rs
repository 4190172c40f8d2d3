fn main() {
    std::process::exit(tbg_control::cli::run(std::env::args_os()));
}
