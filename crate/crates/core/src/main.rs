use clap::Parser;
use sg_torus::cli::{dispatch, Cli};

fn main() {
    if let Ok(text) = std::env::var("SG_TORUS_THREADS") {
        match text.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: SG_TORUS_THREADS must be a positive integer, got {text:?}");
                std::process::exit(2);
            }
        }
    }
    match dispatch(Cli::parse()) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
