// A small flow factor model: two cycle factors on six nodes, fitted with a
// budget of four factors. The posterior switches the surplus factors off.

use std::error::Error;

use proxprior::inference::factor_count_posterior;
use proxprior::models::{make_flow_factor_model, synthetic_flow_data, FlowFactorOptions, SyntheticFlowSpec};
use proxprior::rng;
use proxprior::sampler::{nuts_run, Algorithm, HmcConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let seed = 1;
    let spec = SyntheticFlowSpec {
        n_nodes: 6,
        t: 6,
        ..SyntheticFlowSpec::default()
    };
    let syn = synthetic_flow_data(&spec, &mut rng::stream(seed, rng::STREAM_DATA))?;
    let opts = FlowFactorOptions {
        d: 4,
        ..FlowFactorOptions::default()
    };
    let model = make_flow_factor_model(&syn.data, &opts)?;
    let cfg = HmcConfig {
        algorithm: Algorithm::Hmc,
        n_leapfrog: 20,
        adapt_mass: true,
        n_samples: 400,
        n_burnin: 200,
        seed,
        ..HmcConfig::default()
    };
    let chain = nuts_run(&model, &cfg)?;
    let layout = model.flow_layout().ok_or("flow model without layout")?;
    let fc = factor_count_posterior(&chain, layout)?;
    println!("accept {:.2}, factor-count histogram {:?}", chain.accept_rate, fc.histogram);
    println!("posterior mode {} (truth {})", fc.mode, spec.n_factors);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("flow_factor_model failed");
}
