fn main() {
    std::process::exit(vslide_cli::run(std::env::args_os()));
}
