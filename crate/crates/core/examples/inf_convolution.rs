//! Pointwise inf-convolution of two drivers: closed forms and the numeric solver.

use dyndev::sharing::{infconv_numeric, infconv_value};
use dyndev::{DriverSpec, JumpMeasure, Result, SolverConfig};

pub fn run_example() -> Result<(f64, f64)> {
    let cfg = SolverConfig::default();
    let nu = JumpMeasure::scalar(&[1.0], &[0.4])?;
    let (h, ht) = ([1.5], [-0.8]);

    let (a, b) = (DriverSpec::variance(1.0), DriverSpec::variance(3.0));
    let closed = infconv_value(&a, &b, 0.0, &h, &ht, &nu, &cfg)?;
    let numeric = infconv_numeric(&a, &b, 0.0, &h, &ht, &nu, &cfg)?;
    println!("quadratic: {:?} {:.10}, numeric {:.10}, z = {:?}", closed.method, closed.value, numeric.value, numeric.z);

    let mixed = infconv_value(&DriverSpec::norm_cd(1.0, 1.0), &DriverSpec::variance(1.0), 0.0, &h, &ht, &nu, &cfg)?;
    println!(
        "norm + variance: {:.10} at z = {:?}, z~ = {:?}, gap {:.1e}, attained {}",
        mixed.value,
        mixed.z,
        mixed.ztilde,
        mixed.certificate_gap,
        mixed.attained(&cfg)
    );
    Ok(((closed.value - numeric.value).abs(), mixed.certificate_gap))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
