fn main() {
    std::process::exit(faceboxes::cli::run(std::env::args_os()));
}
