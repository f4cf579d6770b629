fn main() {
    let code = recfield_cli::main_with_args(std::env::args_os(), &mut |line| eprintln!("{line}"));
    std::process::exit(code);
}
