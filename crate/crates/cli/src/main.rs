fn main() {
    std::process::exit(journey_risk_cli::run(std::env::args_os()));
}
