fn main() {
    std::process::exit(peakflex::io::cli(std::env::args_os()));
}
