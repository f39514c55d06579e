fn main() {
    std::process::exit(atomnav_cli::atom::main(std::env::args_os()));
}
