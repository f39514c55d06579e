fn main() {
    std::process::exit(atomnav_cli::sim::main(std::env::args_os()));
}
