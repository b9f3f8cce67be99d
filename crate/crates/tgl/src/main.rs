fn main() {
    let stdin = std::io::stdin();
    let code = tgl::cli::run(std::env::args_os(), &mut stdin.lock(), &mut std::io::stdout().lock(), &mut std::io::stderr());
    std::process::exit(code);
}
