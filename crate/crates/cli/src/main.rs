fn main() {
    std::process::exit(qcnn_cli::run(std::env::args_os()));
}
