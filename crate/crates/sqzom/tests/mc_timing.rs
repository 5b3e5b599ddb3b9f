use sqzom::model::{DriveState, SystemParams};
use sqzom::montecarlo::verify::{run_cases, VerifyOptions};
use std::time::Instant;

#[test]
#[ignore]
fn time_one_full_case() {
    let p = SystemParams::table_s1();
    let opts = VerifyOptions { seed: 1, segments: 2400, fast: false, ..Default::default() };
    let t0 = Instant::now();
    let report = run_cases(&p, &opts, &[("r1_mid".to_string(), 1.0, std::f64::consts::FRAC_PI_2)]).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let c = &report.cases[0];
    println!("one full case: {:.1} s wall; segments {}; rms {:.4}; occ dev {:.4}",
             dt, c.segments, c.psd_rms_rel, c.occupancy_rel_dev);
    let _ = DriveState::unsqueezed(1.0);
}
