// scratch tuning harness for the synthetic benchmark
use covds::dataset::{synth_dataset, SyntheticSpec};
use covds::eval::{run_protocol, EvalConfig, Method, Protocol, StdConvention};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sep: f64 = args[1].parse().unwrap();
    let noise: f64 = args[2].parse().unwrap();
    let trials: usize = args[3].parse().unwrap();
    let data = synth_dataset(&SyntheticSpec {
        classes: 4, sets_per_class: 10, images_per_set: 15, image_size: 32,
        texture_frequency_separation: sep, noise_level: noise, seed: 2024,
    }).unwrap();
    let protocol = Protocol {
        trials, train_sets_per_class: 2, seed: 42,
        methods: vec![Method::NnLoged, Method::NnLogedPro, Method::Cdl, Method::CdlPro],
        std_convention: StdConvention::Population,
    };
    let report = run_protocol(&data, &protocol, &EvalConfig::default(), "").unwrap();
    print!("sep={sep} noise={noise}: ");
    for m in &report.methods {
        print!("{}={:.2}±{:.2}  ", m.method, m.mean_pct, m.std_pct);
    }
    println!();
}
