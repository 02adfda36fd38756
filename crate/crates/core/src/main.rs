fn main() {
    let mut out = std::io::stdout();
    std::process::exit(hiext::cli::main_with(std::env::args_os(), &mut out));
}
