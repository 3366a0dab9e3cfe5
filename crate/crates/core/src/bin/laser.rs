fn main() {
    std::process::exit(laser_core::cli::main_with_args(std::env::args_os()));
}
