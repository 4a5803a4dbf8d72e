fn main() {
    std::process::exit(shrinkerlab::cli::execute(std::env::args_os()));
}
