use noisy_arq::analytic::{evaluate, AnalyticOptions};
use noisy_arq::montecarlo::estimate_report;
use noisy_arq::{ArqConfig, FadingDistribution, PowerPolicy, Protocol, RatePolicy, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fading = FadingDistribution::nakagami(2.0, 1.0)?;
    let config = ArqConfig::new(Protocol::InrFixed, 1, Scenario::LongLc, 0.05, fading);
    let power = PowerPolicy::uniform(1.0, 2);
    let rates = RatePolicy::fixed_length(0.4, 2);

    let exact = evaluate(&config, &power, &rates, &AnalyticOptions::default())?;
    let sim = estimate_report(&config, &power, &rates, 1_000_000, 7)?;
    println!("eta_lt {} vs {} ± {}", exact.report.eta_lt, sim.eta_lt.mean, sim.eta_lt.std_error);
    Ok(())
}
