use clap::Parser;

use adasid::cli::{run, Cli};
use adasid::ErrorClass;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ErrorClass::Usage.exit_code()
            } else {
                0
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        let class = e.class();
        let msg = e.to_string().replace('\n', " ");
        eprintln!("error class={} message={msg}", class.as_str());
        std::process::exit(class.exit_code());
    }
}
