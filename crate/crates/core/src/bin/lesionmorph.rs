fn main() {
    std::process::exit(lesionmorph::cli::run(std::env::args_os()));
}
