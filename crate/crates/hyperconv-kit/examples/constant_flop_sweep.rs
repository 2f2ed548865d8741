//! The cost-side story: growing the filter-predicting MLP multiplies the
//! parameter count while leaving total FLOPs nearly unchanged, because the
//! MLP runs once per image regardless of resolution.

use hyperconv_kit::arch::{network_plan, HyperUNetConfig};
use hyperconv_kit::cost::count_network;

fn main() -> hyperconv_kit::Result<()> {
    // 448x448 RAW reference frame = (4, 224, 224) packed
    println!("{:>6} {:>12} {:>14} {:>10}", "n_hid", "params", "flops", "f/p");
    for n_hid in [64, 128, 256, 512, 1024, 2048] {
        let cfg = HyperUNetConfig::new(8, 8, n_hid);
        let report = count_network(&network_plan(&cfg, true, 224, 224)?)?;
        println!(
            "{n_hid:>6} {:>12} {:>14} {:>10.1}",
            report.params(),
            report.flops(),
            report.ratio()?
        );
    }
    Ok(())
}
