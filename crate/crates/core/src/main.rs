fn main() {
    std::process::exit(oris_vlc::cli::main_with_args(std::env::args_os()));
}
