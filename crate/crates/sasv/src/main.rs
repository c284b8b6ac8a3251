use std::process::exit;

fn main() {
    exit(sasv::cli::run(std::env::args_os()))
}
