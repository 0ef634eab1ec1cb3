use decpomdp_em::cli;

fn main() {
    let mut err = std::io::stderr();
    if let Err(e) = cli::configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(cli::exit_code(&e));
    }
    let code = cli::main_with(std::env::args_os(), &mut std::io::stdout(), &mut err);
    std::process::exit(code);
}
