use sqzom::model::{DriveState, SystemParams};
use sqzom::montecarlo::{estimate_psd, integrate, ModelKind, SimConfig};
use std::f64::consts::FRAC_PI_2;

#[test]
#[ignore]
fn dump_case() {
    let p = SystemParams::table_s1();
    let d = DriveState::new(1.0, FRAC_PI_2, 0.0, 70.0).unwrap();
    let mut cfg = SimConfig::for_params(&p);
    cfg.model = ModelKind::AdiabaticBaseband;
    cfg.duration = 8.0;
    cfg.seed = 5;
    let batch = integrate(&d, &p, &cfg).unwrap();
    let spec = estimate_psd(&batch, FRAC_PI_2).unwrap();
    let analytic = sqzom::spectra::output_psd(&d, &p, &spec.offsets_hz, FRAC_PI_2).unwrap();
    for (i, f) in spec.offsets_hz.iter().enumerate() {
        if f.abs() <= 2100.0 && i % 2 == 0 {
            println!("{:9.1} Hz   mc {:12.4}   analytic {:12.4}  ratio {:.4}",
                f, spec.psd[i], analytic.psd[i], spec.psd[i]/analytic.psd[i]);
        }
    }
    println!("floor est {} analytic {}", spec.floor, analytic.floor);
}
