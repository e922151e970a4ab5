use age_core::divergence::FDivergence;
use age_core::model::Setting;
use age_core::train::{run_age, TrainConfig};
use std::time::Instant;

fn main() {
    let setting = Setting::gaussian2(1.0, 1.0).unwrap();
    for (lambda, warm) in [(1000.0, false), (1000.0, true)] {
        let mut cfg = TrainConfig::new(&setting, 1000, lambda, 7);
        cfg.warm_start = warm;
        let t0 = Instant::now();
        let res = run_age(&setting, FDivergence::RevKl, &cfg).unwrap();
        println!(
            "g2 revkl λ={lambda} warm={warm}: θ̂={:.4} sel={} time={:.2?}",
            res.theta_hat[0], res.selected_t, t0.elapsed()
        );
    }
}
